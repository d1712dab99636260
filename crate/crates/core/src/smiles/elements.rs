/// Standard atomic weights (g/mol) for the elements the parser recognises.
const ELEMENTS: &[(&str, f64)] = &[
    ("H", 1.008),
    ("He", 4.0026),
    ("Li", 6.94),
    ("Be", 9.0122),
    ("B", 10.811),
    ("C", 12.011),
    ("N", 14.007),
    ("O", 15.999),
    ("F", 18.998),
    ("Ne", 20.180),
    ("Na", 22.990),
    ("Mg", 24.305),
    ("Al", 26.982),
    ("Si", 28.086),
    ("P", 30.974),
    ("S", 32.065),
    ("Cl", 35.453),
    ("Ar", 39.948),
    ("K", 39.098),
    ("Ca", 40.078),
    ("Ti", 47.867),
    ("Cr", 51.996),
    ("Mn", 54.938),
    ("Fe", 55.845),
    ("Co", 58.933),
    ("Ni", 58.693),
    ("Cu", 63.546),
    ("Zn", 65.38),
    ("Ga", 69.723),
    ("Ge", 72.630),
    ("As", 74.922),
    ("Se", 78.971),
    ("Br", 79.904),
    ("Kr", 83.798),
    ("Rb", 85.468),
    ("Sr", 87.62),
    ("Zr", 91.224),
    ("Mo", 95.95),
    ("Ru", 101.07),
    ("Rh", 102.91),
    ("Pd", 106.42),
    ("Ag", 107.87),
    ("Cd", 112.41),
    ("In", 114.82),
    ("Sn", 118.71),
    ("Sb", 121.76),
    ("Te", 127.60),
    ("I", 126.904),
    ("Xe", 131.29),
    ("Cs", 132.91),
    ("Ba", 137.33),
    ("Gd", 157.25),
    ("W", 183.84),
    ("Pt", 195.08),
    ("Au", 196.97),
    ("Hg", 200.59),
    ("Tl", 204.38),
    ("Pb", 207.2),
    ("Bi", 208.98),
];

/// Elements a molecule may contain to pass corpus filtering.
pub const ORGANIC_SUBSET: [&str; 10] = ["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];

pub fn is_known(symbol: &str) -> bool {
    ELEMENTS.iter().any(|(s, _)| *s == symbol)
}

pub fn atomic_weight(symbol: &str) -> Option<f64> {
    ELEMENTS.iter().find(|(s, _)| *s == symbol).map(|(_, w)| *w)
}

pub fn hydrogen_weight() -> f64 {
    ELEMENTS[0].1
}

/// Allowed total valences for an element at a given formal charge, lowest
/// first. `None` means the element has no valence rule (metals, wildcard).
pub fn allowed_valences(symbol: &str, charge: i32) -> Option<Vec<u32>> {
    let shift = |base: &[i32], delta: i32| -> Vec<u32> {
        base.iter()
            .map(|v| v + delta)
            .filter(|v| *v >= 0)
            .map(|v| v as u32)
            .collect()
    };
    let v = match symbol {
        "H" => shift(&[1], -charge.abs()),
        "B" => shift(&[3], -charge),
        "C" => shift(&[4], -charge.abs()),
        "N" => shift(&[3], charge),
        "P" => shift(&[3, 5], charge),
        "O" => shift(&[2], charge),
        "S" => shift(&[2, 4, 6], charge),
        "F" | "Cl" | "Br" | "I" => shift(&[1], charge),
        _ => return None,
    };
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charge_shifts() {
        assert_eq!(allowed_valences("N", 1), Some(vec![4]));
        assert_eq!(allowed_valences("N", -1), Some(vec![2]));
        assert_eq!(allowed_valences("O", -1), Some(vec![1]));
        assert_eq!(allowed_valences("C", -1), Some(vec![3]));
        assert_eq!(allowed_valences("B", -1), Some(vec![4]));
        assert_eq!(allowed_valences("Cl", -1), Some(vec![0]));
        assert_eq!(allowed_valences("S", 0), Some(vec![2, 4, 6]));
        assert_eq!(allowed_valences("Na", 1), None);
    }

    #[test]
    fn weights() {
        assert_eq!(atomic_weight("C"), Some(12.011));
        assert!(atomic_weight("Xx").is_none());
        assert!(is_known("Cl"));
    }
}

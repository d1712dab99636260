//! Central-difference gradient checking against the tape.

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};

pub const DEFAULT_STEP: f64 = 1e-5;
/// Lower bound on the denominator of [`relative_error`]. Central differences
/// of an O(1) loss carry about 1e-10 of rounding noise, which would otherwise
/// dominate coordinates whose true gradient is exactly zero.
pub const ERROR_FLOOR: f64 = 1e-5;

/// `|a − n| / max(|a| + |n|, ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(ERROR_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compare reverse-mode gradients of the scalar built by `f` with central
/// differences of step `h`.
///
/// At most `max_per_param` coordinates of each parameter are probed, spread
/// evenly over the tensor; `usize::MAX` checks everything.
pub fn finite_diff_check<F>(
    store: &ParamStore,
    h: f64,
    max_per_param: usize,
    f: F,
) -> GradCheckReport
where
    F: Fn(&mut Graph) -> Var,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = f(&mut g);
        g.backward(out)
    };
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let out = f(&mut g);
        g.value(out).item()
    };
    let mut work = store.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for id in store.ids() {
        let n = store.get(id).len();
        let stride = n.div_ceil(max_per_param.max(1)).max(1);
        for idx in (0..n).step_by(stride) {
            let a = analytic.get(id).map_or(0.0, |t| t.data()[idx]);
            let num = central(&mut work, id, idx, h, &eval);
            let err = relative_error(a, num);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err.max(report.max_rel_error);
                report.worst_param = store.name(id).to_string();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = num;
            }
        }
    }
    report
}

fn central(
    work: &mut ParamStore,
    id: ParamId,
    idx: usize,
    h: f64,
    eval: &impl Fn(&ParamStore) -> f64,
) -> f64 {
    let orig = work.get(id).data()[idx];
    work.get_mut(id).data_mut()[idx] = orig + h;
    let up = eval(work);
    work.get_mut(id).data_mut()[idx] = orig - h;
    let down = eval(work);
    work.get_mut(id).data_mut()[idx] = orig;
    (up - down) / (2.0 * h)
}

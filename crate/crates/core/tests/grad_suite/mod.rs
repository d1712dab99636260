//! Finite-difference checks of every tape op, every layer, the encoder and
//! decoder stacks, the spike-and-exponential reparameterization and the full
//! per-sequence loss with an exactly computed `log Z`. Each group records the
//! worst relative error per check into a [`Report`].

#![allow(dead_code)]

use dvae::latent::NegativePhase;
use dvae::latent::{posterior_probs, zeta_var, SpikeExpConfig};
use dvae::model::{Dvae, LogPartition, ModelConfig};
use dvae::nn::gradcheck::{finite_diff_check, DEFAULT_STEP};
use dvae::nn::layers::{
    normal_tensor, Conv1dSame, DecoderLayer, Embedding, EncoderLayer, FeedForward, Highway,
    LayerNorm, Linear, MultiHeadAttention,
};
use dvae::nn::{AttnMask, Graph, ParamId, ParamStore, Tensor, Var};
use dvae::rng::stream;
use rand::Rng;

pub const TOL: f64 = 1e-4;
pub const SEEDS: [u64; 3] = [11, 22, 33];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub what: String,
    pub seed: u64,
    pub checked: usize,
    pub max_rel_error: f64,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
    seed: u64,
}

impl Report {
    fn check<F: Fn(&mut Graph) -> Var>(&mut self, what: &str, store: &ParamStore, f: F) {
        let r = finite_diff_check(store, DEFAULT_STEP, 64, f);
        self.checks.push(Check {
            what: what.to_string(),
            seed: self.seed,
            checked: r.checked,
            max_rel_error: r.max_rel_error,
            detail: format!(
                "{}[{}] analytic {} numeric {}",
                r.worst_param, r.worst_index, r.analytic, r.numeric
            ),
        });
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks
            .iter()
            .filter(|c| c.checked == 0 || !(c.max_rel_error < TOL))
            .collect()
    }

    pub fn worst(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.max_rel_error)
            .fold(0.0, f64::max)
    }
}

pub type Group = fn(u64, &mut Report);

pub const GROUPS: [(&str, Group); 10] = [
    ("elementwise ops", elementwise_ops),
    ("clamp", clamp_passes_interior_gradient_only),
    ("matmul", matmul_with_transposes),
    ("normalization and softmax", normalization_and_softmax),
    ("indexing and shape ops", indexing_and_shape_ops),
    ("layers", layers),
    ("encoder stack", encoder_stack),
    ("decoder stack", decoder_stack),
    ("spike-and-exponential", spike_and_exponential),
    ("elbo with exact log Z", elbo_with_exact_log_partition),
];

/// Run one group for every seed in [`SEEDS`].
pub fn run_group(group: Group) -> Report {
    let mut rep = Report::default();
    for seed in SEEDS {
        rep.seed = seed;
        group(seed, &mut rep);
    }
    rep
}

/// `Σ x ⊙ R` for a fixed random `R`, so that no gradient cancels by symmetry.
fn project(g: &mut Graph, x: Var, seed: u64) -> Var {
    let shape = g.shape(x).to_vec();
    let r = normal_tensor(&shape, 1.0, &mut stream(seed, "projection", 0, 0));
    let c = g.constant(r);
    let p = g.mul(x, c).unwrap();
    g.sum(p)
}

fn input(store: &mut ParamStore, name: &str, rows: usize, cols: usize, seed: u64) -> ParamId {
    store.add(
        name,
        normal_tensor(&[rows, cols], 1.0, &mut stream(seed, name, 0, 0)),
    )
}

pub fn elementwise_ops(seed: u64, rep: &mut Report) {
    let mut s = ParamStore::new();
    let a = input(&mut s, "a", 3, 4, seed);
    let b = input(&mut s, "b", 3, 4, seed + 1);
    let bias = input(&mut s, "bias", 1, 4, seed + 2);
    rep.check("add/sub/mul", &s, |g| {
        let (x, y) = (g.param(a), g.param(b));
        let s1 = g.add(x, y).unwrap();
        let d = g.sub(s1, y).unwrap();
        let m = g.mul(d, y).unwrap();
        let m = g.mul(m, x).unwrap();
        project(g, m, seed)
    });
    rep.check("add_row/scale/one_minus", &s, |g| {
        let (x, r) = (g.param(a), g.param(bias));
        let y = g.add_row(x, r).unwrap();
        let y = g.scale(y, -1.7);
        let y = g.one_minus(y);
        let y = g.mul(y, y).unwrap();
        project(g, y, seed)
    });
    rep.check("gelu/sigmoid", &s, |g| {
        let x = g.param(a);
        let y = g.gelu(x);
        let z = g.sigmoid(y);
        project(g, z, seed)
    });
}

pub fn clamp_passes_interior_gradient_only(seed: u64, rep: &mut Report) {
    let mut s = ParamStore::new();
    let a = s.add("a", Tensor::row(vec![-3.0, -0.4, 0.1, 0.7, 2.5]));
    rep.check("clamp", &s, |g| {
        let x = g.param(a);
        let y = g.clamp(x, -1.0, 1.0);
        let y = g.mul(y, y).unwrap();
        project(g, y, seed)
    });
}

pub fn matmul_with_transposes(seed: u64, rep: &mut Report) {
    let mut s = ParamStore::new();
    let a = input(&mut s, "a", 3, 5, seed);
    let b = input(&mut s, "b", 5, 2, seed + 1);
    let bt = input(&mut s, "bt", 2, 5, seed + 2);
    let at = input(&mut s, "at", 5, 3, seed + 3);
    rep.check("matmul", &s, |g| {
        let (x, y) = (g.param(a), g.param(b));
        let m = g.matmul(x, y).unwrap();
        project(g, m, seed)
    });
    rep.check("matmul a·bᵀ", &s, |g| {
        let (x, y) = (g.param(a), g.param(bt));
        let m = g.matmul_t(x, false, y, true).unwrap();
        project(g, m, seed)
    });
    rep.check("matmul aᵀ·b", &s, |g| {
        let (x, y) = (g.param(at), g.param(b));
        let m = g.matmul_t(x, true, y, false).unwrap();
        project(g, m, seed)
    });
    rep.check("matmul aᵀ·bᵀ", &s, |g| {
        let (x, y) = (g.param(at), g.param(bt));
        let m = g.matmul_t(x, true, y, true).unwrap();
        project(g, m, seed)
    });
}

pub fn normalization_and_softmax(seed: u64, rep: &mut Report) {
    let mut s = ParamStore::new();
    let a = input(&mut s, "a", 4, 6, seed);
    let gain = input(&mut s, "gain", 1, 6, seed + 1);
    let bias = input(&mut s, "bias", 1, 6, seed + 2);
    rep.check("layer_norm", &s, |g| {
        let (x, gn, b) = (g.param(a), g.param(gain), g.param(bias));
        let y = g.layer_norm(x, gn, b).unwrap();
        project(g, y, seed)
    });
    let mut sq = ParamStore::new();
    let sc = input(&mut sq, "scores", 4, 4, seed);
    let keys = AttnMask::Keys(vec![true, false, true, true]);
    for mask in [AttnMask::None, AttnMask::Causal, keys] {
        rep.check("softmax", &sq, |g| {
            let x = g.param(sc);
            let y = g.softmax(x, &mask);
            project(g, y, seed)
        });
    }
}

pub fn indexing_and_shape_ops(seed: u64, rep: &mut Report) {
    let mut s = ParamStore::new();
    let table = input(&mut s, "table", 6, 3, seed);
    let a = input(&mut s, "a", 5, 4, seed + 1);
    let b = input(&mut s, "b", 5, 2, seed + 2);
    rep.check("gather", &s, |g| {
        let t = g.param(table);
        let y = g.gather(t, &[1, 4, 1, 0, 5]).unwrap();
        project(g, y, seed)
    });
    rep.check("unfold", &s, |g| {
        let x = g.param(a);
        let y = g.unfold(x, 3, 1);
        project(g, y, seed)
    });
    rep.check("slice/concat/reshape", &s, |g| {
        let (x, y) = (g.param(a), g.param(b));
        let left = g.slice_cols(x, 1, 2).unwrap();
        let c = g.concat_cols(&[y, left, x]).unwrap();
        let r = g.reshape(c, &[2, 20]).unwrap();
        project(g, r, seed)
    });
    rep.check("cross_entropy", &s, |g| {
        let x = g.param(a);
        g.cross_entropy(x, &[0, 3, 3, 1, 2]).unwrap()
    });
}

pub fn layers(seed: u64, rep: &mut Report) {
    let mut rng = stream(seed, "layers", 0, 0);
    let mut s = ParamStore::new();
    let x6 = input(&mut s, "x6", 5, 6, seed);
    let x4 = input(&mut s, "x4", 5, 4, seed + 1);
    let mem = input(&mut s, "mem", 3, 6, seed + 2);
    let lin = Linear::new(&mut s, "lin", 6, 3, &mut rng);
    let ln = LayerNorm::new(&mut s, "ln", 6);
    let conv = Conv1dSame::new(&mut s, "conv", 4, 6, 5, &mut rng);
    let hw = Highway::new(&mut s, "hw", 6, &mut rng);
    let mha = MultiHeadAttention::new(&mut s, "mha", 6, 2, &mut rng).unwrap();
    let ff = FeedForward::new(&mut s, "ff", 6, 8, &mut rng);
    let enc = EncoderLayer::new(&mut s, "enc", 6, 3, 8, &mut rng).unwrap();
    let dec = DecoderLayer::new(&mut s, "dec", 6, 2, 8, &mut rng).unwrap();
    let emb = Embedding::new(&mut s, "emb", 7, 4, &mut rng);
    for id in s.ids().collect::<Vec<_>>() {
        // move biases and gains off their initial constants
        let t = s.get_mut(id);
        let noise = normal_tensor(t.shape(), 0.1, &mut rng);
        t.add_assign(&noise);
    }
    let s = s;
    rep.check("linear", &s, |g| {
        let x = g.param(x6);
        let y = lin.forward(g, x).unwrap();
        project(g, y, seed)
    });
    rep.check("layer norm", &s, |g| {
        let x = g.param(x6);
        let y = ln.forward(g, x).unwrap();
        project(g, y, seed)
    });
    rep.check("conv", &s, |g| {
        let x = g.param(x4);
        let y = conv.forward(g, x).unwrap();
        project(g, y, seed)
    });
    rep.check("highway", &s, |g| {
        let x = g.param(x6);
        let y = hw.forward(g, x).unwrap();
        project(g, y, seed)
    });
    for mask in [
        AttnMask::None,
        AttnMask::Causal,
        AttnMask::Keys(vec![true, true, false, true, false]),
    ] {
        rep.check("self attention", &s, |g| {
            let x = g.param(x6);
            let y = mha.forward(g, x, x, &mask).unwrap();
            project(g, y, seed)
        });
    }
    rep.check("cross attention", &s, |g| {
        let (x, m) = (g.param(x6), g.param(mem));
        let y = mha.forward(g, x, m, &AttnMask::None).unwrap();
        project(g, y, seed)
    });
    rep.check("feed forward", &s, |g| {
        let x = g.param(x6);
        let y = ff.forward(g, x).unwrap();
        project(g, y, seed)
    });
    rep.check("encoder layer", &s, |g| {
        let x = g.param(x6);
        let y = enc.forward(g, x, &AttnMask::None).unwrap();
        project(g, y, seed)
    });
    rep.check("decoder layer", &s, |g| {
        let (x, m) = (g.param(x6), g.param(mem));
        let y = dec.forward(g, x, m).unwrap();
        project(g, y, seed)
    });
    rep.check("embedding", &s, |g| {
        let y = emb.forward(g, &[1, 5, 5, 2]).unwrap();
        project(g, y, seed)
    });
}

fn perturbed_model(cfg: &ModelConfig, seed: u64) -> (Dvae, ParamStore) {
    let (model, mut s) = Dvae::new(cfg, 7, seed).unwrap();
    let mut rng = stream(seed, "perturb", 0, 0);
    for id in s.ids().collect::<Vec<_>>() {
        let t = s.get_mut(id);
        let noise = normal_tensor(t.shape(), 0.1, &mut rng);
        t.add_assign(&noise);
    }
    (model, s)
}

pub fn encoder_stack(seed: u64, rep: &mut Report) {
    let (model, s) = perturbed_model(&ModelConfig::tiny(), seed);
    rep.check("encoder", &s, |g| {
        let y = model.encoder.forward(g, &[1, 4, 5, 6, 4, 2, 0, 0]).unwrap();
        project(g, y, seed)
    });
}

pub fn decoder_stack(seed: u64, rep: &mut Report) {
    let (model, s) = perturbed_model(&ModelConfig::tiny(), seed);
    let zeta: Vec<f64> = (0..6).map(|i| (i as f64 * 0.37 + 0.1) % 1.0).collect();
    rep.check("decoder", &s, |g| {
        let z = g.constant(Tensor::row(zeta.clone()));
        let m = model.decoder.latent_to_memory(g, z).unwrap();
        model
            .decoder
            .reconstruction_loss(g, &[1, 4, 5, 6, 2], m)
            .unwrap()
    });
}

/// Uniforms kept at least `margin` away from the spike boundary `1 − q`.
fn safe_rho(q: &[f64], seed: u64, margin: f64) -> Vec<f64> {
    let mut rng = stream(seed, "rho", 0, 0);
    q.iter()
        .map(|&qi| loop {
            let r: f64 = rng.random();
            if (r - (1.0 - qi)).abs() > margin {
                break r;
            }
        })
        .collect()
}

pub fn spike_and_exponential(seed: u64, rep: &mut Report) {
    let mut s = ParamStore::new();
    let logits = input(&mut s, "logits", 1, 8, seed);
    let q: Vec<f64> = s
        .get(logits)
        .data()
        .iter()
        .map(|l| 1.0 / (1.0 + (-l).exp()))
        .collect();
    let rho = safe_rho(&q, seed, 1e-3);
    let cfg = SpikeExpConfig { beta_se: 10.0 };
    rep.check("spike-and-exp", &s, |g| {
        let l = g.param(logits);
        let q = posterior_probs(g, l);
        let z = zeta_var(g, q, &rho, cfg).unwrap();
        project(g, z, seed)
    });
}

pub fn elbo_with_exact_log_partition(seed: u64, rep: &mut Report) {
    let cfg = ModelConfig {
        n_visible: 4,
        n_hidden: 4,
        ..ModelConfig::tiny()
    };
    let (model, s) = perturbed_model(&cfg, seed);
    let ids = [1usize, 4, 6, 5, 2];
    let q = model.posterior(&s, &ids).unwrap();
    let rho = safe_rho(&q, seed, 1e-2);
    rep.check("elbo", &s, |g| {
        let m = model.rbm.read(g.store()).exact_moments().unwrap();
        let phase = NegativePhase {
            mean_v: m.mean_v,
            mean_h: m.mean_h,
            mean_vh: m.mean_vh,
        };
        let lz = LogPartition {
            value: m.log_z,
            phase: &phase,
        };
        model
            .sequence_loss(g, &ids, &rho, 0.1, Some(lz))
            .unwrap()
            .loss
    });
}

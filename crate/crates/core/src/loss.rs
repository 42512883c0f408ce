//! Softmax classifier head and the training objective: summed cross entropy
//! plus L1 penalties on the spatial and temporal projection matrices.

use crate::numerics::{Matrix, Vector};

/// Probability floor applied before taking logs of the true-class
/// probability; hits are counted, not hidden.
pub const PROB_CLAMP: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight of the spatial-projection L1 term.
    pub lambda1: f64,
    /// Weight of the temporal-projection L1 term.
    pub lambda2: f64,
    pub class_count: usize,
}

impl LossConfig {
    pub fn new(lambda1: f64, lambda2: f64, class_count: usize) -> Self {
        assert!(lambda1 >= 0.0 && lambda2 >= 0.0, "L1 weights must be nonnegative");
        assert!(class_count >= 2, "need at least two classes, got {class_count}");
        LossConfig {
            lambda1,
            lambda2,
            class_count,
        }
    }
}

/// Max-shifted softmax; immune to overflow for any finite logits.
pub fn softmax(logits: &Vector) -> Vector {
    let max = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut out = Vec::with_capacity(logits.len());
    let mut sum = 0.0;
    for &o in logits.data() {
        let e = (o - max).exp();
        sum += e;
        out.push(e);
    }
    for e in out.iter_mut() {
        *e /= sum;
    }
    Vector::from_vec(out)
}

/// Objective value split into its terms.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Objective {
    pub data_term: f64,
    pub penalty_term: f64,
    /// Number of samples whose true-class probability hit the clamp floor.
    pub clamped: usize,
}

impl Objective {
    pub fn total(&self) -> f64 {
        self.data_term + self.penalty_term
    }
}

/// Negative log probability of the true class, clamped at [`PROB_CLAMP`].
pub fn nll(probs: &Vector, label: usize) -> (f64, bool) {
    let p = probs.get(label);
    if p < PROB_CLAMP {
        (-(PROB_CLAMP.ln()), true)
    } else {
        (-p.ln(), false)
    }
}

/// L1 penalty `lambda1 * sum_r ||G_r||_1 + lambda2 * (||G_f||_1 + ||G_b||_1)`.
/// Either projection group may be absent (ablation modes).
pub fn l1_penalty(spatial: &[&Matrix], temporal: &[&Matrix], cfg: &LossConfig) -> f64 {
    let s: f64 = spatial.iter().map(|g| g.l1_norm()).sum();
    let t: f64 = temporal.iter().map(|g| g.l1_norm()).sum();
    cfg.lambda1 * s + cfg.lambda2 * t
}

/// Full objective over a batch: summed cross entropy plus the L1 terms.
pub fn objective(
    probs: &[Vector],
    labels: &[usize],
    spatial: &[&Matrix],
    temporal: &[&Matrix],
    cfg: &LossConfig,
) -> Objective {
    assert_eq!(probs.len(), labels.len(), "probs/labels length mismatch");
    let mut data_term = 0.0;
    let mut clamped = 0;
    for (p, &y) in probs.iter().zip(labels) {
        assert!(y < cfg.class_count, "label {y} out of range for C={}", cfg.class_count);
        let (l, hit) = nll(p, y);
        data_term += l;
        clamped += hit as usize;
    }
    Objective {
        data_term,
        penalty_term: l1_penalty(spatial, temporal, cfg),
        clamped,
    }
}

/// Gradient of the per-sample cross entropy with respect to the logits:
/// `P - onehot(y)`.
pub fn logit_grad(probs: &Vector, label: usize) -> Vector {
    let mut g = probs.clone();
    g.set(label, g.get(label) - 1.0);
    g
}

/// Adds `lambda * sign(g)` to a projection gradient, with `sign(0) = 0` so
/// entries that reach zero stay there under plain gradient steps.
pub fn add_l1_subgradient(grad: &mut Matrix, values: &Matrix, lambda: f64) {
    assert_eq!(
        (grad.rows(), grad.cols()),
        (values.rows(), values.cols()),
        "L1 subgradient shape mismatch"
    );
    for (g, &v) in grad.data_mut().iter_mut().zip(values.data()) {
        *g += lambda * v.signum() * (v != 0.0) as u8 as f64;
    }
}

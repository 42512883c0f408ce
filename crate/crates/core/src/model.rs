//! The full model: a spatial stage feeding a temporal stage feeding the
//! softmax head, with ablation variants that swap either recurrence for a
//! plain fully connected layer.

use crate::graph::{build_all_plans, Direction, GridLayout, TraversalPlan};
use crate::loss::{softmax, LossConfig};
use crate::numerics::{Activation, Matrix, Rng, Vector};
use crate::srnn::{srnn_backward, srnn_forward, SrnnDirection, SrnnParams, SrnnTrace};
use crate::trnn::{trnn_backward, trnn_forward, TrnnChain, TrnnParams, TrnnTrace};
use crate::volume::SpatioTemporalVolume;

/// Model variants. `NonSparse` is the full architecture with both L1
/// weights pinned to zero; the two `*Only` modes replace the other
/// recurrence with a fully connected layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Strnn,
    SrnnOnly,
    TrnnOnly,
    NonSparse,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Strnn => "strnn",
            Mode::SrnnOnly => "srnn_only",
            Mode::TrnnOnly => "trnn_only",
            Mode::NonSparse => "non_sparse",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "strnn" => Some(Mode::Strnn),
            "srnn_only" => Some(Mode::SrnnOnly),
            "trnn_only" => Some(Mode::TrnnOnly),
            "non_sparse" => Some(Mode::NonSparse),
            _ => None,
        }
    }
}

/// Layer sizes. `seq_len` is the fixed temporal length L; the grid cell
/// count K comes from the layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub input_dim: usize,
    pub srnn_hidden: usize,
    /// Per-slice output width (the temporal stage's input).
    pub srnn_out: usize,
    pub k_p: usize,
    pub trnn_hidden: usize,
    pub l_p: usize,
    pub classes: usize,
    pub seq_len: usize,
}

/// Plain fully connected layer used by the ablation stages.
#[derive(Clone, Debug, PartialEq)]
pub struct FcLayer {
    pub weight: Matrix,
    pub bias: Vector,
}

impl FcLayer {
    fn zeros_like(&self) -> FcLayer {
        FcLayer {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: Vector::zeros(self.bias.len()),
        }
    }
}

/// Spatial stage: the directional recurrence, or (trnn_only ablation) one
/// fully connected map applied to each flattened slice.
#[derive(Clone, Debug, PartialEq)]
pub enum SpatialStage {
    Recurrent(SrnnParams),
    PerSliceFc(FcLayer),
}

/// Temporal stage: the bidirectional recurrence, or (srnn_only ablation) a
/// fully connected map on the time-averaged sequence.
#[derive(Clone, Debug, PartialEq)]
pub enum TemporalStage {
    Recurrent(TrnnParams),
    AverageFc(FcLayer),
}

/// Borrowed view of one named parameter tensor.
pub enum TensorRef<'a> {
    Mat(&'a Matrix),
    Vec(&'a Vector),
}

impl TensorRef<'_> {
    pub fn values(&self) -> &[f64] {
        match self {
            TensorRef::Mat(m) => m.data(),
            TensorRef::Vec(v) => v.data(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            TensorRef::Mat(m) => (m.rows(), m.cols()),
            TensorRef::Vec(v) => (v.len(), 1),
        }
    }
}

pub enum TensorMut<'a> {
    Mat(&'a mut Matrix),
    Vec(&'a mut Vector),
}

impl TensorMut<'_> {
    pub fn values_mut(&mut self) -> &mut [f64] {
        match self {
            TensorMut::Mat(m) => m.data_mut(),
            TensorMut::Vec(v) => v.data_mut(),
        }
    }
}

impl SpatialStage {
    pub fn zeros_like(&self) -> SpatialStage {
        match self {
            SpatialStage::Recurrent(p) => SpatialStage::Recurrent(p.zeros_like()),
            SpatialStage::PerSliceFc(fc) => SpatialStage::PerSliceFc(fc.zeros_like()),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        match self {
            SpatialStage::Recurrent(p) => {
                let mut out = Vec::new();
                for (r, d) in p.dirs.iter().enumerate() {
                    let dir = Direction::ALL[r].name();
                    out.push((format!("srnn.{dir}.input_w"), TensorRef::Mat(&d.input_w)));
                    out.push((format!("srnn.{dir}.recur_w"), TensorRef::Mat(&d.recur_w)));
                    out.push((format!("srnn.{dir}.bias"), TensorRef::Vec(&d.bias)));
                    out.push((format!("srnn.{dir}.proj"), TensorRef::Mat(&d.proj)));
                    out.push((format!("srnn.{dir}.fuse"), TensorRef::Mat(&d.fuse)));
                }
                out
            }
            SpatialStage::PerSliceFc(fc) => vec![
                ("spatial_fc.weight".into(), TensorRef::Mat(&fc.weight)),
                ("spatial_fc.bias".into(), TensorRef::Vec(&fc.bias)),
            ],
        }
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        match self {
            SpatialStage::Recurrent(p) => {
                let mut out = Vec::new();
                for (r, d) in p.dirs.iter_mut().enumerate() {
                    let dir = Direction::ALL[r].name();
                    out.push((format!("srnn.{dir}.input_w"), TensorMut::Mat(&mut d.input_w)));
                    out.push((format!("srnn.{dir}.recur_w"), TensorMut::Mat(&mut d.recur_w)));
                    out.push((format!("srnn.{dir}.bias"), TensorMut::Vec(&mut d.bias)));
                    out.push((format!("srnn.{dir}.proj"), TensorMut::Mat(&mut d.proj)));
                    out.push((format!("srnn.{dir}.fuse"), TensorMut::Mat(&mut d.fuse)));
                }
                out
            }
            SpatialStage::PerSliceFc(fc) => vec![
                ("spatial_fc.weight".into(), TensorMut::Mat(&mut fc.weight)),
                ("spatial_fc.bias".into(), TensorMut::Vec(&mut fc.bias)),
            ],
        }
    }
}

impl TemporalStage {
    pub fn zeros_like(&self) -> TemporalStage {
        match self {
            TemporalStage::Recurrent(p) => TemporalStage::Recurrent(p.zeros_like()),
            TemporalStage::AverageFc(fc) => TemporalStage::AverageFc(fc.zeros_like()),
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        match self {
            TemporalStage::Recurrent(p) => vec![
                ("trnn.fwd.input_w".into(), TensorRef::Mat(&p.fwd.input_w)),
                ("trnn.fwd.recur_w".into(), TensorRef::Mat(&p.fwd.recur_w)),
                ("trnn.fwd.bias".into(), TensorRef::Vec(&p.fwd.bias)),
                ("trnn.bwd.input_w".into(), TensorRef::Mat(&p.bwd.input_w)),
                ("trnn.bwd.recur_w".into(), TensorRef::Mat(&p.bwd.recur_w)),
                ("trnn.bwd.bias".into(), TensorRef::Vec(&p.bwd.bias)),
                ("trnn.proj_fwd".into(), TensorRef::Mat(&p.proj_fwd)),
                ("trnn.proj_bwd".into(), TensorRef::Mat(&p.proj_bwd)),
                ("trnn.fuse_fwd".into(), TensorRef::Mat(&p.fuse_fwd)),
                ("trnn.fuse_bwd".into(), TensorRef::Mat(&p.fuse_bwd)),
            ],
            TemporalStage::AverageFc(fc) => vec![
                ("temporal_fc.weight".into(), TensorRef::Mat(&fc.weight)),
                ("temporal_fc.bias".into(), TensorRef::Vec(&fc.bias)),
            ],
        }
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        match self {
            TemporalStage::Recurrent(p) => vec![
                ("trnn.fwd.input_w".into(), TensorMut::Mat(&mut p.fwd.input_w)),
                ("trnn.fwd.recur_w".into(), TensorMut::Mat(&mut p.fwd.recur_w)),
                ("trnn.fwd.bias".into(), TensorMut::Vec(&mut p.fwd.bias)),
                ("trnn.bwd.input_w".into(), TensorMut::Mat(&mut p.bwd.input_w)),
                ("trnn.bwd.recur_w".into(), TensorMut::Mat(&mut p.bwd.recur_w)),
                ("trnn.bwd.bias".into(), TensorMut::Vec(&mut p.bwd.bias)),
                ("trnn.proj_fwd".into(), TensorMut::Mat(&mut p.proj_fwd)),
                ("trnn.proj_bwd".into(), TensorMut::Mat(&mut p.proj_bwd)),
                ("trnn.fuse_fwd".into(), TensorMut::Mat(&mut p.fuse_fwd)),
                ("trnn.fuse_bwd".into(), TensorMut::Mat(&mut p.fuse_bwd)),
            ],
            TemporalStage::AverageFc(fc) => vec![
                ("temporal_fc.weight".into(), TensorMut::Mat(&mut fc.weight)),
                ("temporal_fc.bias".into(), TensorMut::Vec(&mut fc.bias)),
            ],
        }
    }
}

/// Gradient container mirroring the parameter layout.
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub spatial: SpatialStage,
    pub temporal: TemporalStage,
}

impl ModelGrads {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, t) in self
            .spatial
            .named_tensors()
            .into_iter()
            .chain(self.temporal.named_tensors())
        {
            out.extend_from_slice(t.values());
        }
        out
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        let mut mine = self.spatial.named_tensors_mut();
        mine.extend(self.temporal.named_tensors_mut());
        let mut theirs = other.spatial.named_tensors();
        theirs.extend(other.temporal.named_tensors());
        for ((_, mut a), (_, b)) in mine.into_iter().zip(theirs) {
            for (x, y) in a.values_mut().iter_mut().zip(b.values()) {
                *x += y;
            }
        }
    }
}

/// Per-sample forward record: everything backward needs.
#[derive(Clone, Debug)]
pub struct ModelTrace {
    pub spatial: SpatialTrace,
    /// Per-slice sequence handed to the temporal stage.
    pub sequence: Vec<Vector>,
    pub temporal: TemporalTrace,
    pub logits: Vector,
    pub probs: Vector,
}

#[derive(Clone, Debug)]
pub enum SpatialTrace {
    Srnn(SrnnTrace),
    /// Activated per-slice FC outputs (same vectors as `sequence`).
    Fc,
}

#[derive(Clone, Debug)]
pub enum TemporalTrace {
    Trnn(TrnnTrace),
    /// Time-averaged input to the final FC.
    Avg(Vector),
}

/// All learnable parameters plus the pieces needed to run them: grid
/// layout, cached traversal plans, and the loss configuration.
#[derive(Clone, Debug)]
pub struct StrnnParams {
    pub mode: Mode,
    pub dims: ModelDims,
    pub layout: GridLayout,
    plans: [TraversalPlan; 4],
    pub spatial: SpatialStage,
    pub temporal: TemporalStage,
    pub loss: LossConfig,
    pub activation: Activation,
}

fn glorot(rng: &mut Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.uniform(-a, a)).collect())
}

impl StrnnParams {
    /// Builds a freshly initialized model: uniform `[-a, a]` weights with
    /// `a = sqrt(6 / (fan_in + fan_out))`, zero biases. `NonSparse` forces
    /// both L1 weights to zero.
    pub fn init(
        mode: Mode,
        dims: ModelDims,
        layout: GridLayout,
        activation: Activation,
        lambda1: f64,
        lambda2: f64,
        rng: &mut Rng,
    ) -> StrnnParams {
        assert!(dims.classes >= 2, "need at least two classes");
        assert!(dims.seq_len >= 1 && dims.k_p >= 1 && dims.l_p >= 1);
        let k = layout.occupied_count();
        let plans = build_all_plans(&layout);

        let spatial = match mode {
            Mode::TrnnOnly => {
                let in_dim = k * dims.input_dim;
                SpatialStage::PerSliceFc(FcLayer {
                    weight: glorot(rng, dims.srnn_out, in_dim, in_dim, dims.srnn_out),
                    bias: Vector::zeros(dims.srnn_out),
                })
            }
            _ => {
                let h = dims.srnn_hidden;
                let dirs: [SrnnDirection; 4] = std::array::from_fn(|_| SrnnDirection {
                    input_w: glorot(rng, h, dims.input_dim, dims.input_dim, h),
                    recur_w: glorot(rng, h, h, h, h),
                    bias: Vector::zeros(h),
                    proj: glorot(rng, k, dims.k_p, k, dims.k_p),
                    fuse: glorot(rng, dims.srnn_out, h * dims.k_p, h * dims.k_p, dims.srnn_out),
                });
                SpatialStage::Recurrent(SrnnParams { dirs, activation })
            }
        };

        let temporal = match mode {
            Mode::SrnnOnly => TemporalStage::AverageFc(FcLayer {
                weight: glorot(rng, dims.classes, dims.srnn_out, dims.srnn_out, dims.classes),
                bias: Vector::zeros(dims.classes),
            }),
            _ => {
                let h = dims.trnn_hidden;
                let chain = |rng: &mut Rng| TrnnChain {
                    input_w: glorot(rng, h, dims.srnn_out, dims.srnn_out, h),
                    recur_w: glorot(rng, h, h, h, h),
                    bias: Vector::zeros(h),
                };
                TemporalStage::Recurrent(TrnnParams {
                    fwd: chain(rng),
                    bwd: chain(rng),
                    proj_fwd: glorot(rng, dims.seq_len, dims.l_p, dims.seq_len, dims.l_p),
                    proj_bwd: glorot(rng, dims.seq_len, dims.l_p, dims.seq_len, dims.l_p),
                    fuse_fwd: glorot(rng, dims.classes, h * dims.l_p, h * dims.l_p, dims.classes),
                    fuse_bwd: glorot(rng, dims.classes, h * dims.l_p, h * dims.l_p, dims.classes),
                    activation,
                })
            }
        };

        let (l1, l2) = if mode == Mode::NonSparse {
            (0.0, 0.0)
        } else {
            (lambda1, lambda2)
        };

        StrnnParams {
            mode,
            dims,
            layout,
            plans,
            spatial,
            temporal,
            loss: LossConfig::new(l1, l2, dims.classes),
            activation,
        }
    }

    pub fn plans(&self) -> &[TraversalPlan; 4] {
        &self.plans
    }

    /// Flattens a slice's occupied cells (raster order) into one vector for
    /// the per-slice FC stage.
    fn flatten_slice(&self, volume: &SpatioTemporalVolume, t: usize) -> Vector {
        let d = volume.depth();
        let mut out = Vec::with_capacity(self.layout.occupied_count() * d);
        for &(i, j) in self.layout.cells() {
            out.extend_from_slice(volume.input(t, i, j));
        }
        Vector::from_vec(out)
    }

    /// Full forward pass for one sample.
    pub fn forward(&self, volume: &SpatioTemporalVolume) -> ModelTrace {
        assert_eq!(
            volume.t_len(),
            self.dims.seq_len,
            "volume has {} slices, model expects {}",
            volume.t_len(),
            self.dims.seq_len
        );
        let (spatial, sequence) = match &self.spatial {
            SpatialStage::Recurrent(p) => {
                let trace = srnn_forward(p, &self.plans, &self.layout, volume);
                let seq = trace.fused.clone();
                (SpatialTrace::Srnn(trace), seq)
            }
            SpatialStage::PerSliceFc(fc) => {
                let seq: Vec<Vector> = (0..volume.t_len())
                    .map(|t| {
                        let mut z = fc.weight.matvec(&self.flatten_slice(volume, t));
                        z.add_assign(&fc.bias);
                        self.activation.apply_vec(&mut z);
                        z
                    })
                    .collect();
                (SpatialTrace::Fc, seq)
            }
        };

        let (temporal, logits) = match &self.temporal {
            TemporalStage::Recurrent(p) => {
                let trace = trnn_forward(p, &sequence);
                let logits = trace.logits.clone();
                (TemporalTrace::Trnn(trace), logits)
            }
            TemporalStage::AverageFc(fc) => {
                let mut mean = Vector::zeros(self.dims.srnn_out);
                for m in &sequence {
                    mean.add_assign(m);
                }
                mean.scale(1.0 / sequence.len() as f64);
                let mut logits = fc.weight.matvec(&mean);
                logits.add_assign(&fc.bias);
                (TemporalTrace::Avg(mean), logits)
            }
        };

        let probs = softmax(&logits);
        ModelTrace {
            spatial,
            sequence,
            temporal,
            logits,
            probs,
        }
    }

    /// Backpropagates a logit gradient for one sample. Penalty gradients
    /// are not included; the training loop adds them per batch.
    pub fn backward(
        &self,
        volume: &SpatioTemporalVolume,
        trace: &ModelTrace,
        grad_logits: &Vector,
    ) -> ModelGrads {
        let (temporal_grads, grad_sequence) = match (&self.temporal, &trace.temporal) {
            (TemporalStage::Recurrent(p), TemporalTrace::Trnn(tr)) => {
                let (g, gm) = trnn_backward(p, &trace.sequence, tr, grad_logits);
                (TemporalStage::Recurrent(g), gm)
            }
            (TemporalStage::AverageFc(fc), TemporalTrace::Avg(mean)) => {
                let mut g = fc.zeros_like();
                g.weight.add_outer(grad_logits, mean);
                g.bias.add_assign(grad_logits);
                let mut grad_mean = fc.weight.matvec_t(grad_logits);
                grad_mean.scale(1.0 / trace.sequence.len() as f64);
                let gm = vec![grad_mean; trace.sequence.len()];
                (TemporalStage::AverageFc(g), gm)
            }
            _ => panic!("trace does not match the temporal stage"),
        };

        let spatial_grads = match (&self.spatial, &trace.spatial) {
            (SpatialStage::Recurrent(p), SpatialTrace::Srnn(tr)) => SpatialStage::Recurrent(
                srnn_backward(p, &self.plans, &self.layout, volume, tr, &grad_sequence),
            ),
            (SpatialStage::PerSliceFc(fc), SpatialTrace::Fc) => {
                let mut g = fc.zeros_like();
                for (t, gm) in grad_sequence.iter().enumerate() {
                    let mut delta = gm.clone();
                    for (d, y) in delta.data_mut().iter_mut().zip(trace.sequence[t].data()) {
                        *d *= self.activation.derivative_from_output(*y);
                    }
                    g.weight.add_outer(&delta, &self.flatten_slice(volume, t));
                    g.bias.add_assign(&delta);
                }
                SpatialStage::PerSliceFc(g)
            }
            _ => panic!("trace does not match the spatial stage"),
        };

        ModelGrads {
            spatial: spatial_grads,
            temporal: temporal_grads,
        }
    }

    pub fn zero_grads(&self) -> ModelGrads {
        ModelGrads {
            spatial: self.spatial.zeros_like(),
            temporal: self.temporal.zeros_like(),
        }
    }

    /// The spatial projection matrices (one per direction), if any.
    pub fn spatial_projections(&self) -> Vec<&Matrix> {
        match &self.spatial {
            SpatialStage::Recurrent(p) => p.dirs.iter().map(|d| &d.proj).collect(),
            SpatialStage::PerSliceFc(_) => Vec::new(),
        }
    }

    /// The temporal projection matrices (forward and backward), if any.
    pub fn temporal_projections(&self) -> Vec<&Matrix> {
        match &self.temporal {
            TemporalStage::Recurrent(p) => vec![&p.proj_fwd, &p.proj_bwd],
            TemporalStage::AverageFc(_) => Vec::new(),
        }
    }

    /// Current L1 penalty term of the objective.
    pub fn penalty(&self) -> f64 {
        crate::loss::l1_penalty(
            &self.spatial_projections(),
            &self.temporal_projections(),
            &self.loss,
        )
    }

    /// Adds the L1 subgradients (`lambda * sign`, 0 at 0) to the matching
    /// projection gradients.
    pub fn add_penalty_grads(&self, grads: &mut ModelGrads) {
        if let (SpatialStage::Recurrent(p), SpatialStage::Recurrent(g)) =
            (&self.spatial, &mut grads.spatial)
        {
            for (dp, dg) in p.dirs.iter().zip(g.dirs.iter_mut()) {
                crate::loss::add_l1_subgradient(&mut dg.proj, &dp.proj, self.loss.lambda1);
            }
        }
        if let (TemporalStage::Recurrent(p), TemporalStage::Recurrent(g)) =
            (&self.temporal, &mut grads.temporal)
        {
            crate::loss::add_l1_subgradient(&mut g.proj_fwd, &p.proj_fwd, self.loss.lambda2);
            crate::loss::add_l1_subgradient(&mut g.proj_bwd, &p.proj_bwd, self.loss.lambda2);
        }
    }

    pub fn named_tensors(&self) -> Vec<(String, TensorRef<'_>)> {
        let mut out = self.spatial.named_tensors();
        out.extend(self.temporal.named_tensors());
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, TensorMut<'_>)> {
        let mut out = self.spatial.named_tensors_mut();
        out.extend(self.temporal.named_tensors_mut());
        out
    }

    /// All parameters as one flat vector, in `named_tensors` order.
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (_, t) in self.named_tensors() {
            out.extend_from_slice(t.values());
        }
        out
    }

    /// Writes a flat vector produced by [`flatten_params`] back into the
    /// parameter tensors.
    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        for (_, mut t) in self.named_tensors_mut() {
            let dst = t.values_mut();
            dst.copy_from_slice(&flat[at..at + dst.len()]);
            at += dst.len();
        }
        assert_eq!(at, flat.len(), "flat parameter vector has wrong length");
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.values().len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::finite_diff_grad;

    pub(crate) fn tiny_dims() -> ModelDims {
        ModelDims {
            input_dim: 2,
            srnn_hidden: 4,
            srnn_out: 3,
            k_p: 2,
            trnn_hidden: 3,
            l_p: 2,
            classes: 3,
            seq_len: 2,
        }
    }

    fn tiny_model(mode: Mode, activation: Activation, seed: u64) -> StrnnParams {
        let mut rng = Rng::new(seed);
        StrnnParams::init(
            mode,
            tiny_dims(),
            GridLayout::full(3, 3),
            activation,
            1e-2,
            1e-2,
            &mut rng,
        )
    }

    fn random_volume(rng: &mut Rng, dims: &ModelDims, h: usize, w: usize) -> SpatioTemporalVolume {
        let n = dims.seq_len * h * w * dims.input_dim;
        SpatioTemporalVolume::from_vec(
            dims.seq_len,
            h,
            w,
            dims.input_dim,
            (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        )
    }

    #[test]
    fn init_is_deterministic_given_seed() {
        let a = tiny_model(Mode::Strnn, Activation::Relu, 3);
        let b = tiny_model(Mode::Strnn, Activation::Relu, 3);
        assert_eq!(a.flatten_params(), b.flatten_params());
        let c = tiny_model(Mode::Strnn, Activation::Relu, 4);
        assert_ne!(a.flatten_params(), c.flatten_params());
    }

    #[test]
    fn flatten_round_trips() {
        let mut model = tiny_model(Mode::Strnn, Activation::Relu, 5);
        let flat = model.flatten_params();
        let mut shifted = flat.clone();
        for v in shifted.iter_mut() {
            *v += 0.25;
        }
        model.load_flat(&shifted);
        assert_eq!(model.flatten_params(), shifted);
        model.load_flat(&flat);
        assert_eq!(model.flatten_params(), flat);
    }

    #[test]
    fn non_sparse_mode_forces_zero_penalty() {
        let model = tiny_model(Mode::NonSparse, Activation::Relu, 6);
        assert_eq!(model.loss.lambda1, 0.0);
        assert_eq!(model.loss.lambda2, 0.0);
        assert_eq!(model.penalty(), 0.0);
    }

    #[test]
    fn forward_produces_probability_simplex() {
        for mode in [Mode::Strnn, Mode::SrnnOnly, Mode::TrnnOnly] {
            let model = tiny_model(mode, Activation::Relu, 7);
            let mut rng = Rng::new(8);
            let volume = random_volume(&mut rng, &model.dims, 3, 3);
            let trace = model.forward(&volume);
            let sum: f64 = trace.probs.data().iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "{mode:?}");
            assert_eq!(trace.sequence.len(), model.dims.seq_len);
        }
    }

    #[test]
    fn ablation_modes_have_expected_tensor_sets() {
        let srnn_only = tiny_model(Mode::SrnnOnly, Activation::Relu, 9);
        let names: Vec<String> = srnn_only.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert!(names.iter().any(|n| n.starts_with("srnn.")));
        assert!(names.iter().any(|n| n.starts_with("temporal_fc.")));
        assert!(!names.iter().any(|n| n.starts_with("trnn.")));

        let trnn_only = tiny_model(Mode::TrnnOnly, Activation::Relu, 10);
        let names: Vec<String> = trnn_only.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert!(names.iter().any(|n| n.starts_with("spatial_fc.")));
        assert!(names.iter().any(|n| n.starts_with("trnn.")));
        assert!(!names.iter().any(|n| n.starts_with("srnn.")));
    }

    #[test]
    fn backward_matches_finite_differences_for_every_mode() {
        for mode in [Mode::Strnn, Mode::SrnnOnly, Mode::TrnnOnly] {
            let model = tiny_model(mode, Activation::Sigmoid, 11);
            let mut rng = Rng::new(12);
            let volume = random_volume(&mut rng, &model.dims, 3, 3);
            let label = 1usize;

            let trace = model.forward(&volume);
            let grad_logits = crate::loss::logit_grad(&trace.probs, label);
            let grads = model.backward(&volume, &trace, &grad_logits);

            let flat = model.flatten_params();
            let numeric = finite_diff_grad(
                |p| {
                    let mut m = model.clone();
                    m.load_flat(p);
                    let tr = m.forward(&volume);
                    crate::loss::nll(&tr.probs, label).0
                },
                &flat,
                1e-4,
            );
            let analytic = grads.flatten();
            let mut worst = 0.0f64;
            for (a, n) in analytic.iter().zip(&numeric) {
                let diff = (a - n).abs();
                if diff > 1e-8 {
                    worst = worst.max(diff / a.abs().max(n.abs()));
                }
            }
            assert!(worst < 1e-4, "{mode:?}: max relative error {worst}");
        }
    }

    #[test]
    fn penalty_gradients_touch_only_projections() {
        let model = tiny_model(Mode::Strnn, Activation::Relu, 13);
        let mut grads = model.zero_grads();
        model.add_penalty_grads(&mut grads);
        for (name, t) in grads.spatial.named_tensors() {
            let nonzero = t.values().iter().any(|&x| x != 0.0);
            assert_eq!(nonzero, name.ends_with(".proj"), "{name}");
        }
        for (name, t) in grads.temporal.named_tensors() {
            let nonzero = t.values().iter().any(|&x| x != 0.0);
            assert_eq!(nonzero, name.contains("proj"), "{name}");
        }
    }
}

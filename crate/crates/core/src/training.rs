//! Minibatch SGD with momentum on the cross-entropy + L1 objective,
//! gradient verification against central finite differences, evaluation,
//! and the saliency map read off the spatial projections.

use rayon::prelude::*;
use thiserror::Error;

use crate::loss::{logit_grad, nll};
use crate::model::{ModelGrads, SpatialStage, StrnnParams, TemporalStage};
use crate::numerics::{finite_diff_grad, Rng, Vector};
use crate::volume::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Global-norm gradient clipping threshold; `None` disables clipping.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            momentum: 0.9,
            epochs: 100,
            batch_size: 10,
            seed: 0,
            grad_clip: Some(5.0),
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("sample {index}: label {label} out of range for {classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("sample {index} has shape {got}, model expects {want}")]
    ShapeMismatch {
        index: usize,
        got: String,
        want: String,
    },
    #[error("learning rate must be nonnegative, got {0}")]
    BadLearningRate(f64),
    #[error("batch size must be at least 1")]
    BadBatchSize,
}

/// One metrics row of the per-epoch stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mean data loss per sample over the epoch (the objective itself sums;
    /// the mean is reported for readability).
    pub data_loss: f64,
    /// L1 penalty term at the end of the epoch.
    pub penalty: f64,
    pub train_accuracy: f64,
    /// Samples whose true-class probability hit the clamp floor.
    pub clamped: usize,
}

impl EpochMetrics {
    /// Tab-separated line: epoch, data-loss, penalty, train-acc.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.4}",
            self.epoch, self.data_loss, self.penalty, self.train_accuracy
        )
    }
}

fn validate(model: &StrnnParams, data: &Dataset) -> Result<(), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let want = (
        model.dims.seq_len,
        model.layout.height(),
        model.layout.width(),
        model.dims.input_dim,
    );
    for (index, v) in data.volumes.iter().enumerate() {
        let got = (v.t_len(), v.height(), v.width(), v.depth());
        if got != want {
            return Err(TrainError::ShapeMismatch {
                index,
                got: format!("{got:?}"),
                want: format!("{want:?}"),
            });
        }
    }
    for (index, &label) in data.labels.iter().enumerate() {
        if label >= model.dims.classes {
            return Err(TrainError::LabelOutOfRange {
                index,
                label,
                classes: model.dims.classes,
            });
        }
    }
    Ok(())
}

/// Thread pool capped by the `STRNN_THREADS` environment variable
/// (default: machine parallelism). Per-sample work runs in parallel; all
/// reductions happen in index order, so results are bit-identical at any
/// thread count.
fn thread_pool() -> rayon::ThreadPool {
    let threads = std::env::var("STRNN_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder.build().expect("failed to build thread pool")
}

/// Trains in place. Deterministic given the config seed: shuffling is a
/// seeded Fisher-Yates per epoch and gradient accumulation is an ordered
/// reduction. Emits one metrics row per epoch through `progress`.
pub fn train(
    model: &mut StrnnParams,
    data: &Dataset,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochMetrics),
) -> Result<Vec<EpochMetrics>, TrainError> {
    // A zero rate is degenerate but well-defined: parameters stay put.
    if cfg.learning_rate < 0.0 || !cfg.learning_rate.is_finite() {
        return Err(TrainError::BadLearningRate(cfg.learning_rate));
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::BadBatchSize);
    }
    validate(model, data)?;

    let pool = thread_pool();
    let mut rng = Rng::new(cfg.seed);
    let mut params = model.flatten_params();
    let mut velocity = vec![0.0; params.len()];
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        rng.shuffle(&mut order);

        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut clamped = 0usize;

        for (batch_index, batch) in order.chunks(cfg.batch_size).enumerate() {
            // Per-sample forward/backward in parallel, reduced in order.
            let per_sample: Vec<(f64, bool, bool, ModelGrads)> = pool.install(|| {
                batch
                    .par_iter()
                    .map(|&i| {
                        let volume = &data.volumes[i];
                        let label = data.labels[i];
                        let trace = model.forward(volume);
                        let (loss, hit) = nll(&trace.probs, label);
                        let predicted = argmax(&trace.probs);
                        let grads =
                            model.backward(volume, &trace, &logit_grad(&trace.probs, label));
                        (loss, predicted == label, hit, grads)
                    })
                    .collect()
            });

            let mut batch_loss = 0.0;
            let mut batch_grads: Option<ModelGrads> = None;
            for (loss, ok, hit, grads) in per_sample {
                batch_loss += loss;
                correct += ok as usize;
                clamped += hit as usize;
                match batch_grads.as_mut() {
                    Some(acc) => acc.add_assign(&grads),
                    None => batch_grads = Some(grads),
                }
            }
            let mut batch_grads = batch_grads.expect("non-empty batch");
            model.add_penalty_grads(&mut batch_grads);
            epoch_loss += batch_loss;

            if !batch_loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    batch: batch_index,
                });
            }

            let mut grad = batch_grads.flatten();
            if let Some(clip) = cfg.grad_clip {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > clip {
                    let scale = clip / norm;
                    for g in grad.iter_mut() {
                        *g *= scale;
                    }
                }
            }
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *p -= cfg.learning_rate * *v;
            }
            model.load_flat(&params);

            if !params.iter().all(|p| p.is_finite()) {
                return Err(TrainError::Diverged {
                    epoch: epoch + 1,
                    batch: batch_index,
                });
            }
        }

        let row = EpochMetrics {
            epoch: epoch + 1,
            data_loss: epoch_loss / data.len() as f64,
            penalty: model.penalty(),
            train_accuracy: correct as f64 / data.len() as f64,
            clamped,
        };
        progress(&row);
        metrics.push(row);
    }

    Ok(metrics)
}

fn argmax(v: &Vector) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v.get(i) > v.get(best) {
            best = i;
        }
    }
    best
}

/// Evaluation summary: overall accuracy, per-class accuracy, and the
/// confusion matrix (rows = true class, columns = predicted).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

/// Argmax-of-softmax prediction for every sample.
pub fn evaluate(model: &StrnnParams, data: &Dataset) -> Result<Evaluation, TrainError> {
    validate(model, data)?;
    let classes = model.dims.classes;
    let pool = thread_pool();
    let predictions: Vec<usize> = pool.install(|| {
        data.volumes
            .par_iter()
            .map(|v| argmax(&model.forward(v).probs))
            .collect()
    });

    let mut confusion = vec![vec![0usize; classes]; classes];
    for (&pred, &truth) in predictions.iter().zip(&data.labels) {
        confusion[truth][pred] += 1;
    }
    let mut correct = 0;
    let mut per_class = vec![0.0; classes];
    for (c, row) in confusion.iter().enumerate() {
        let row_total: usize = row.iter().sum();
        correct += row[c];
        per_class[c] = if row_total > 0 {
            row[c] as f64 / row_total as f64
        } else {
            0.0
        };
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        per_class,
        confusion,
        total: data.len(),
    })
}

/// Per-tensor result of a gradient check.
#[derive(Clone, Debug)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst coordinate within the tensor.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.worst() < tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for t in &self.tensors {
            writeln!(
                f,
                "{:<24} max_rel_err {:>12.3e}  at [{}]  analytic {:>13.6e}  numeric {:>13.6e}",
                t.name, t.max_rel_error, t.worst_index, t.analytic, t.numeric
            )?;
        }
        Ok(())
    }
}

/// Differences below this are indistinguishable from central-difference
/// round-off and count as exact matches.
const GRAD_ABS_FLOOR: f64 = 1e-8;

fn rel_error(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    if diff <= GRAD_ABS_FLOOR {
        0.0
    } else {
        diff / a.abs().max(n.abs())
    }
}

/// Compares the analytic BPTT gradient of the full objective (data term
/// plus L1 penalties) against central finite differences, per tensor.
pub fn grad_check(model: &StrnnParams, data: &Dataset, step: f64) -> GradCheckReport {
    assert!(step > 0.0, "finite difference step must be positive");

    // Analytic gradient over the batch.
    let mut grads = model.zero_grads();
    for (volume, &label) in data.volumes.iter().zip(&data.labels) {
        let trace = model.forward(volume);
        let sample = model.backward(volume, &trace, &logit_grad(&trace.probs, label));
        grads.add_assign(&sample);
    }
    model.add_penalty_grads(&mut grads);
    let analytic = grads.flatten();

    // Numeric gradient of the same objective.
    let flat = model.flatten_params();
    let numeric = finite_diff_grad(
        |p| {
            let mut m = model.clone();
            m.load_flat(p);
            let data_term: f64 = data
                .volumes
                .iter()
                .zip(&data.labels)
                .map(|(v, &y)| nll(&m.forward(v).probs, y).0)
                .sum();
            data_term + m.penalty()
        },
        &flat,
        step,
    );

    let mut tensors = Vec::new();
    let mut at = 0;
    for (name, t) in model.named_tensors() {
        let len = t.values().len();
        let mut worst = TensorCheck {
            name,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: analytic[at],
            numeric: numeric[at],
        };
        for i in 0..len {
            let e = rel_error(analytic[at + i], numeric[at + i]);
            if e >= worst.max_rel_error {
                worst.max_rel_error = e;
                worst.worst_index = i;
                worst.analytic = analytic[at + i];
                worst.numeric = numeric[at + i];
            }
        }
        tensors.push(worst);
        at += len;
    }
    GradCheckReport { tensors }
}

/// Pushes every projection entry at least `margin` away from zero, keeping
/// its sign (zeros move to `+margin`). Central differences are meaningless
/// across the L1 kink; gradient-check models are prepared with this so the
/// step never straddles it.
pub fn nudge_projections_from_zero(model: &mut StrnnParams, margin: f64) {
    let fix = |m: &mut crate::numerics::Matrix| {
        for v in m.data_mut() {
            if v.abs() < margin {
                *v = if *v < 0.0 { -margin } else { margin };
            }
        }
    };
    if let SpatialStage::Recurrent(p) = &mut model.spatial {
        for d in p.dirs.iter_mut() {
            fix(&mut d.proj);
        }
    }
    if let TemporalStage::Recurrent(p) = &mut model.temporal {
        fix(&mut p.proj_fwd);
        fix(&mut p.proj_bwd);
    }
}

/// The reference gradient-verification setup: a full 3x3 grid, two slices
/// of 2-wide inputs, hidden widths 4/3, two-wide projections, three
/// classes, and a three-sample batch. Projection entries are pushed 0.05
/// away from zero so a 1e-4 finite-difference step cannot straddle the L1
/// kink.
pub fn gradcheck_fixture(
    mode: crate::model::Mode,
    activation: crate::numerics::Activation,
    seed: u64,
) -> (StrnnParams, Dataset) {
    let dims = crate::model::ModelDims {
        input_dim: 2,
        srnn_hidden: 4,
        srnn_out: 3,
        k_p: 2,
        trnn_hidden: 3,
        l_p: 2,
        classes: 3,
        seq_len: 2,
    };
    let mut rng = Rng::new(seed);
    let layout = crate::graph::GridLayout::full(3, 3);
    let mut model = StrnnParams::init(mode, dims, layout, activation, 1e-2, 1e-2, &mut rng);
    nudge_projections_from_zero(&mut model, 0.05);

    let volumes = (0..3)
        .map(|_| {
            let len = dims.seq_len * 9 * dims.input_dim;
            crate::volume::SpatioTemporalVolume::from_vec(
                dims.seq_len,
                3,
                3,
                dims.input_dim,
                (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            )
        })
        .collect();
    let labels = (0..3).map(|i| i % dims.classes).collect();
    (model, Dataset::new(volumes, labels))
}

/// Normalized per-cell saliency: mean over directions of the absolute
/// projection coefficients of each cell's row, scaled to `[0, 1]`.
#[derive(Clone, Debug)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// `None` marks unoccupied cells.
    pub values: Vec<Option<f64>>,
}

impl SaliencyMap {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.width + j]
    }
}

#[derive(Debug, Error)]
#[error("model mode {0} has no spatial projections to visualize")]
pub struct NoSpatialProjections(pub &'static str);

pub fn saliency_map(model: &StrnnParams) -> Result<SaliencyMap, NoSpatialProjections> {
    let projections = model.spatial_projections();
    if projections.is_empty() {
        return Err(NoSpatialProjections(model.mode.name()));
    }
    let k = model.layout.occupied_count();
    let mut weights = vec![0.0f64; k];
    for proj in &projections {
        for cell in 0..k {
            let row_l1: f64 = (0..proj.cols()).map(|l| proj.get(cell, l).abs()).sum();
            weights[cell] += row_l1;
        }
    }
    for w in weights.iter_mut() {
        *w /= projections.len() as f64;
    }
    let max = weights.iter().fold(0.0f64, |a, &b| a.max(b));
    if max > 0.0 {
        for w in weights.iter_mut() {
            *w /= max;
        }
    }

    let (h, w) = (model.layout.height(), model.layout.width());
    let mut values = vec![None; h * w];
    for (cell, &weight) in weights.iter().enumerate() {
        let (i, j) = model.layout.cell_coord(cell);
        values[i * w + j] = Some(weight);
    }
    Ok(SaliencyMap {
        height: h,
        width: w,
        values,
    })
}

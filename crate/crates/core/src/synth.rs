//! Seeded synthetic spatio-temporal datasets.
//!
//! Every class gets a sparse spatial template (a few active cells, constant
//! over time) and a temporal envelope (a mean-centered pulse at a
//! class-specific position, carried by a small cell subset shared by all
//! classes). The two cues are added with Gaussian noise. With
//! `spatial_signal = 0` classes differ only temporally and vice versa,
//! which is what the ablation-ordering tests lean on: a time-averaging
//! readout cannot see pulse positions, so the temporal cue is invisible to
//! it by construction.

use crate::numerics::Rng;
use crate::volume::{Dataset, SpatioTemporalVolume};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    pub t_len: usize,
    pub depth: usize,
    pub spatial_signal: f64,
    pub temporal_signal: f64,
    pub noise_sigma: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Cells carried by each class template.
    pub const TEMPLATE_CELLS: usize = 3;
    /// Cells carrying the temporal envelope (the same cells for every
    /// class).
    pub const ENVELOPE_CELLS: usize = 4;
}

/// Gaussian pulse centered at the class position, sampled at integer
/// steps and mean-centered so every class envelope has zero time average.
fn envelope(class: usize, classes: usize, t_len: usize) -> Vec<f64> {
    let center = (class as f64 + 0.5) * t_len as f64 / classes as f64;
    let width = (t_len as f64 / (3.0 * classes as f64)).max(0.6);
    let mut env: Vec<f64> = (0..t_len)
        .map(|t| {
            let d = t as f64 - center;
            (-d * d / (2.0 * width * width)).exp()
        })
        .collect();
    let mean = env.iter().sum::<f64>() / t_len as f64;
    for e in env.iter_mut() {
        *e -= mean;
    }
    env
}

/// Per-class sets of template cells plus the shared envelope cells, drawn
/// from one shuffled pool. Disjoint when the grid is large enough;
/// otherwise the pool is reused cyclically.
fn layout_cells(spec: &SynthSpec, rng: &mut Rng) -> (Vec<Vec<usize>>, Vec<usize>) {
    let cells = spec.height * spec.width;
    let mut pool: Vec<usize> = (0..cells).collect();
    rng.shuffle(&mut pool);
    let templates = (0..spec.classes)
        .map(|c| {
            (0..SynthSpec::TEMPLATE_CELLS)
                .map(|i| pool[(c * SynthSpec::TEMPLATE_CELLS + i) % cells])
                .collect()
        })
        .collect();
    let start = spec.classes * SynthSpec::TEMPLATE_CELLS;
    let envelope_cells = (0..SynthSpec::ENVELOPE_CELLS.min(cells))
        .map(|i| pool[(start + i) % cells])
        .collect();
    (templates, envelope_cells)
}

/// Generates a labeled dataset. Labels cycle through the classes, so class
/// counts differ by at most one. Identical specs produce identical data.
pub fn gen_synthetic(spec: &SynthSpec) -> Dataset {
    assert!(spec.classes >= 2, "need at least two classes");
    assert!(spec.samples > 0 && spec.t_len > 0 && spec.depth > 0);
    let mut rng = Rng::new(spec.seed);

    let (templates, envelope_cells) = layout_cells(spec, &mut rng);
    let envelopes: Vec<Vec<f64>> = (0..spec.classes)
        .map(|c| envelope(c, spec.classes, spec.t_len))
        .collect();

    let cells = spec.height * spec.width;
    let mut carries_envelope = vec![false; cells];
    for &cell in &envelope_cells {
        carries_envelope[cell] = true;
    }

    let mut volumes = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    for sample in 0..spec.samples {
        let class = sample % spec.classes;
        let mut spatial = vec![0.0; cells];
        for &cell in &templates[class] {
            spatial[cell] = spec.spatial_signal;
        }
        let env = &envelopes[class];

        let mut volume =
            SpatioTemporalVolume::zeros(spec.t_len, spec.height, spec.width, spec.depth);
        for t in 0..spec.t_len {
            for i in 0..spec.height {
                for j in 0..spec.width {
                    let cell = i * spec.width + j;
                    let mut base = spatial[cell];
                    if carries_envelope[cell] {
                        base += spec.temporal_signal * env[t];
                    }
                    let slot = volume.input_mut(t, i, j);
                    for v in slot.iter_mut() {
                        *v = base + spec.noise_sigma * rng.normal();
                    }
                }
            }
        }
        volumes.push(volume);
        labels.push(class);
    }
    Dataset::new(volumes, labels)
}

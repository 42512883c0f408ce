//! Spatial-temporal recurrent network for grid-shaped sequence
//! classification.
//!
//! The model scans each time slice's spatial grid with four directed
//! recurrences (one per corner), compresses the per-cell hidden states with
//! learned sparse projections, runs a bidirectional recurrence over the
//! resulting sequence, and classifies through a softmax head. Training is
//! plain backpropagation through time with minibatch SGD and momentum; L1
//! penalties on the projection matrices select salient cells and time steps.
//!
//! The crate also ships the EEG band-feature pipeline (windowed power
//! spectra, per-band differential entropy, temporal slicing), a binary
//! dataset container, a synthetic data generator, and a finite-difference
//! gradient oracle that every backward pass is tested against.

pub mod features;
pub mod graph;
pub mod io;
pub mod loss;
pub mod model;
pub mod numerics;
pub mod srnn;
pub mod synth;
pub mod training;
pub mod trnn;
pub mod volume;

pub use graph::{build_all_plans, build_plan, Direction, GridLayout, TraversalPlan};
pub use loss::{softmax, LossConfig};
pub use model::{Mode, ModelDims, StrnnParams};
pub use numerics::{finite_diff_grad, Activation, Matrix, Rng, Vector};
pub use training::{evaluate, grad_check, train, TrainConfig};
pub use volume::{Dataset, SpatioTemporalVolume};

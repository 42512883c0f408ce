//! Quad-directional spatial recurrence over each time slice.
//!
//! For every slice and every scan direction, cells are visited in the
//! direction's plan order; each cell's hidden state combines its input
//! vector with the recurrent contributions of its already-visited
//! neighbors. The per-cell states are then compressed along the spatial
//! axis by a learned projection and the four directions are fused into one
//! output vector per slice.

use crate::graph::{GridLayout, TraversalPlan};
use crate::numerics::{Activation, Matrix, Vector};
use crate::volume::SpatioTemporalVolume;

/// Parameters of one scan direction.
#[derive(Clone, Debug, PartialEq)]
pub struct SrnnDirection {
    /// Input weights, `hidden x input`.
    pub input_w: Matrix,
    /// Recurrent weights shared by all predecessor edges, `hidden x hidden`.
    pub recur_w: Matrix,
    /// Hidden bias.
    pub bias: Vector,
    /// Spatial projection, `K x K_p` (K = occupied cells).
    pub proj: Matrix,
    /// Direction fusion, `out x (hidden * K_p)`.
    pub fuse: Matrix,
}

/// All four directions plus the shared nonlinearity. Parameters are tied
/// across time slices but not across directions.
#[derive(Clone, Debug, PartialEq)]
pub struct SrnnParams {
    pub dirs: [SrnnDirection; 4],
    pub activation: Activation,
}

impl SrnnParams {
    pub fn hidden_dim(&self) -> usize {
        self.dirs[0].input_w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.dirs[0].input_w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.dirs[0].fuse.rows()
    }

    pub fn cell_count(&self) -> usize {
        self.dirs[0].proj.rows()
    }

    pub fn proj_dim(&self) -> usize {
        self.dirs[0].proj.cols()
    }

    /// Same shapes, all values zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> SrnnParams {
        SrnnParams {
            dirs: [0, 1, 2, 3].map(|r| {
                let d = &self.dirs[r];
                SrnnDirection {
                    input_w: Matrix::zeros(d.input_w.rows(), d.input_w.cols()),
                    recur_w: Matrix::zeros(d.recur_w.rows(), d.recur_w.cols()),
                    bias: Vector::zeros(d.bias.len()),
                    proj: Matrix::zeros(d.proj.rows(), d.proj.cols()),
                    fuse: Matrix::zeros(d.fuse.rows(), d.fuse.cols()),
                }
            }),
            activation: self.activation,
        }
    }

    fn check_shapes(&self) {
        let (hidden, input) = (self.hidden_dim(), self.input_dim());
        let (k, k_p, out) = (self.cell_count(), self.proj_dim(), self.out_dim());
        for d in &self.dirs {
            assert_eq!((d.input_w.rows(), d.input_w.cols()), (hidden, input));
            assert_eq!((d.recur_w.rows(), d.recur_w.cols()), (hidden, hidden));
            assert_eq!(d.bias.len(), hidden);
            assert_eq!((d.proj.rows(), d.proj.cols()), (k, k_p));
            assert_eq!((d.fuse.rows(), d.fuse.cols()), (out, hidden * k_p));
        }
    }
}

/// Everything the forward pass computed, retained for backpropagation.
#[derive(Clone, Debug)]
pub struct SrnnTrace {
    /// `hidden[t][dir][cell_id]`: activated per-cell states.
    pub hidden: Vec<[Vec<Vector>; 4]>,
    /// `projected[t][dir]`: concatenated projected states, `hidden * K_p`.
    pub projected: Vec<[Vector; 4]>,
    /// `fused[t]`: per-slice output of the layer.
    pub fused: Vec<Vector>,
}

/// Runs the spatial recurrence over every slice of `volume`.
///
/// Slices are not temporally coupled here; each is scanned independently in
/// all four directions and fused in the fixed direction order.
pub fn srnn_forward(
    params: &SrnnParams,
    plans: &[TraversalPlan; 4],
    layout: &GridLayout,
    volume: &SpatioTemporalVolume,
) -> SrnnTrace {
    params.check_shapes();
    assert_eq!(
        (volume.height(), volume.width()),
        (layout.height(), layout.width()),
        "volume grid does not match layout"
    );
    assert_eq!(volume.depth(), params.input_dim(), "volume depth/input mismatch");
    assert_eq!(layout.occupied_count(), params.cell_count(), "layout K mismatch");

    let t_len = volume.t_len();
    let hidden_dim = params.hidden_dim();
    let (k, k_p) = (params.cell_count(), params.proj_dim());

    let mut hidden = Vec::with_capacity(t_len);
    let mut projected = Vec::with_capacity(t_len);
    let mut fused = Vec::with_capacity(t_len);

    for t in 0..t_len {
        let mut slice_hidden: [Vec<Vector>; 4] =
            std::array::from_fn(|_| vec![Vector::zeros(hidden_dim); k]);
        let mut slice_proj: [Vector; 4] =
            std::array::from_fn(|_| Vector::zeros(hidden_dim * k_p));
        let mut m_t = Vector::zeros(params.out_dim());

        for (r, plan) in plans.iter().enumerate() {
            let dir = &params.dirs[r];
            let states = &mut slice_hidden[r];
            for &cell in &plan.order {
                let (i, j) = layout.cell_coord(cell);
                let mut z = dir.input_w.matvec_slice(volume.input(t, i, j));
                z.add_assign(&dir.bias);
                for &p in &plan.preds[cell] {
                    z.add_assign(&dir.recur_w.matvec(&states[p]));
                }
                params.activation.apply_vec(&mut z);
                states[cell] = z;
            }

            // s_l = sum_k G[k, l] h_k, concatenated over l.
            let s = &mut slice_proj[r];
            for (cell, state) in states.iter().enumerate() {
                for l in 0..k_p {
                    let g = dir.proj.get(cell, l);
                    if g != 0.0 {
                        let chunk = &mut s.data_mut()[l * hidden_dim..(l + 1) * hidden_dim];
                        for (c, v) in chunk.iter_mut().zip(state.data()) {
                            *c += g * v;
                        }
                    }
                }
            }
            m_t.add_assign(&dir.fuse.matvec(s));
        }

        hidden.push(slice_hidden);
        projected.push(slice_proj);
        fused.push(m_t);
    }

    SrnnTrace {
        hidden,
        projected,
        fused,
    }
}

/// Backpropagates `grad_fused` (one vector per slice) through the layer.
///
/// Returns gradients in a params-shaped container. Inputs are leaves, so
/// nothing flows upstream. Accumulation follows the reverse plan order of
/// each direction; the ReLU subgradient at 0 is 0.
pub fn srnn_backward(
    params: &SrnnParams,
    plans: &[TraversalPlan; 4],
    layout: &GridLayout,
    volume: &SpatioTemporalVolume,
    trace: &SrnnTrace,
    grad_fused: &[Vector],
) -> SrnnParams {
    params.check_shapes();
    assert_eq!(
        trace.fused.len(),
        volume.t_len(),
        "trace does not cover the volume (got {} slices, volume has {})",
        trace.fused.len(),
        volume.t_len()
    );
    assert_eq!(grad_fused.len(), trace.fused.len(), "grad_fused length mismatch");

    let hidden_dim = params.hidden_dim();
    let (k, k_p) = (params.cell_count(), params.proj_dim());
    let mut grads = params.zeros_like();

    for t in 0..volume.t_len() {
        let g_m = &grad_fused[t];
        for (r, plan) in plans.iter().enumerate() {
            let dir = &params.dirs[r];
            let dir_grads = &mut grads.dirs[r];
            let states = &trace.hidden[t][r];
            let s = &trace.projected[t][r];

            // Fusion: m_t += V s  =>  dV += g_m s^T, ds = V^T g_m.
            dir_grads.fuse.add_outer(g_m, s);
            let grad_s = dir.fuse.matvec_t(g_m);

            // Projection: s_l = sum_k G[k,l] h_k.
            let mut grad_h = vec![Vector::zeros(hidden_dim); k];
            for (cell, state) in states.iter().enumerate() {
                for l in 0..k_p {
                    let chunk = &grad_s.data()[l * hidden_dim..(l + 1) * hidden_dim];
                    let mut dot = 0.0;
                    for (c, v) in chunk.iter().zip(state.data()) {
                        dot += c * v;
                    }
                    let g = dir_grads.proj.get(cell, l) + dot;
                    dir_grads.proj.set(cell, l, g);
                    let coeff = dir.proj.get(cell, l);
                    if coeff != 0.0 {
                        for (gh, c) in grad_h[cell].data_mut().iter_mut().zip(chunk) {
                            *gh += coeff * c;
                        }
                    }
                }
            }

            // Recurrence, in reverse visit order.
            for &cell in plan.order.iter().rev() {
                let state = &states[cell];
                let mut delta = grad_h[cell].clone();
                for (d, y) in delta.data_mut().iter_mut().zip(state.data()) {
                    *d *= params.activation.derivative_from_output(*y);
                }
                let (i, j) = layout.cell_coord(cell);
                dir_grads
                    .input_w
                    .add_outer(&delta, &Vector::from_slice(volume.input(t, i, j)));
                dir_grads.bias.add_assign(&delta);
                for &p in &plan.preds[cell] {
                    dir_grads.recur_w.add_outer(&delta, &states[p]);
                    grad_h[p].add_assign(&dir.recur_w.matvec_t(&delta));
                }
            }
        }
    }

    grads
}

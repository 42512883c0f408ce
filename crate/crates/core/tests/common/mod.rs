//! Shared helpers for the integration suites: independent naive evaluators
//! for both recurrent layers plus random instance builders.
//!
//! The naive evaluators implement the layer equations directly on the
//! unrolled graph, with their own predecessor/indicator logic (memoized
//! recursion over the grid, explicit index arithmetic over raw buffers),
//! so they share no traversal or accumulation code with the library path.

use strnn_core::graph::{Direction, GridLayout};
use strnn_core::numerics::{Activation, Matrix, Rng, Vector};
use strnn_core::srnn::SrnnParams;
use strnn_core::trnn::TrnnParams;
use strnn_core::volume::SpatioTemporalVolume;

/// Predecessor offsets per direction, restated from the scan definition:
/// in-row neighbor, diagonal, previous-row neighbor.
fn offsets(direction: Direction) -> [(isize, isize); 3] {
    match direction {
        Direction::TopLeft => [(0, -1), (-1, -1), (-1, 0)],
        Direction::TopRight => [(0, 1), (-1, 1), (-1, 0)],
        Direction::BottomLeft => [(0, -1), (1, -1), (1, 0)],
        Direction::BottomRight => [(0, 1), (1, 1), (1, 0)],
    }
}

/// Edge indicator: 1 when `(k, l)` is an occupied predecessor of `(i, j)`
/// under the direction's rule.
fn indicator(
    direction: Direction,
    layout: &GridLayout,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
) -> bool {
    if !layout.is_occupied(k, l) {
        return false;
    }
    offsets(direction)
        .iter()
        .any(|&(di, dj)| k as isize == i as isize + di && l as isize == j as isize + dj)
}

fn matvec_naive(m: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for (r, o) in out.iter_mut().enumerate() {
        for c in 0..m.cols() {
            *o += m.get(r, c) * v[c];
        }
    }
    out
}

/// Memoized recursive evaluation of one cell's hidden state for one
/// direction and slice, summing over all grid positions through the edge
/// indicator.
#[allow(clippy::too_many_arguments)]
fn naive_cell_state(
    params: &SrnnParams,
    dir_index: usize,
    direction: Direction,
    layout: &GridLayout,
    volume: &SpatioTemporalVolume,
    t: usize,
    i: usize,
    j: usize,
    memo: &mut Vec<Option<Vec<f64>>>,
) -> Vec<f64> {
    let id = layout.cell_id(i, j).expect("occupied cell");
    if let Some(h) = &memo[id] {
        return h.clone();
    }
    let d = &params.dirs[dir_index];
    let mut z = matvec_naive(&d.input_w, volume.input(t, i, j));
    for (zi, b) in z.iter_mut().zip(d.bias.data()) {
        *zi += b;
    }
    for k in 0..layout.height() {
        for l in 0..layout.width() {
            if indicator(direction, layout, i, j, k, l) {
                let h_pred =
                    naive_cell_state(params, dir_index, direction, layout, volume, t, k, l, memo);
                let contrib = matvec_naive(&d.recur_w, &h_pred);
                for (zi, c) in z.iter_mut().zip(&contrib) {
                    *zi += c;
                }
            }
        }
    }
    let h: Vec<f64> = z.iter().map(|&x| params.activation.apply(x)).collect();
    memo[id] = Some(h.clone());
    h
}

/// Naive spatial layer: per-slice fused outputs from first principles.
pub fn naive_srnn_outputs(
    params: &SrnnParams,
    layout: &GridLayout,
    volume: &SpatioTemporalVolume,
) -> Vec<Vec<f64>> {
    let hidden = params.hidden_dim();
    let k_total = layout.occupied_count();
    let k_p = params.proj_dim();
    let out_dim = params.out_dim();

    (0..volume.t_len())
        .map(|t| {
            let mut m_t = vec![0.0; out_dim];
            for (r, &direction) in Direction::ALL.iter().enumerate() {
                let mut memo: Vec<Option<Vec<f64>>> = vec![None; k_total];
                for (i, j) in layout.cells().iter().copied() {
                    naive_cell_state(params, r, direction, layout, volume, t, i, j, &mut memo);
                }
                // s_l = sum_k G[k, l] h_k, concatenated over l.
                let d = &params.dirs[r];
                let mut s = vec![0.0; hidden * k_p];
                for (k, h) in memo.iter().enumerate() {
                    let h = h.as_ref().unwrap();
                    for l in 0..k_p {
                        for c in 0..hidden {
                            s[l * hidden + c] += d.proj.get(k, l) * h[c];
                        }
                    }
                }
                let fused = matvec_naive(&d.fuse, &s);
                for (m, f) in m_t.iter_mut().zip(&fused) {
                    *m += f;
                }
            }
            m_t
        })
        .collect()
}

/// Recursive temporal chain state at position `t` (zero state before the
/// first position).
fn naive_chain_state(
    input_w: &Matrix,
    recur_w: &Matrix,
    bias: &Vector,
    activation: Activation,
    inputs: &[Vec<f64>],
    t: usize,
) -> Vec<f64> {
    let mut z = matvec_naive(input_w, &inputs[t]);
    if t > 0 {
        let prev = naive_chain_state(input_w, recur_w, bias, activation, inputs, t - 1);
        let contrib = matvec_naive(recur_w, &prev);
        for (zi, c) in z.iter_mut().zip(&contrib) {
            *zi += c;
        }
    }
    for (zi, b) in z.iter_mut().zip(bias.data()) {
        *zi += b;
    }
    z.iter().map(|&x| activation.apply(x)).collect()
}

/// Naive temporal layer: logits from the unrolled bidirectional graph.
pub fn naive_trnn_logits(params: &TrnnParams, inputs: &[Vec<f64>]) -> Vec<f64> {
    let l = inputs.len();
    let hidden = params.hidden_dim();
    let l_p = params.proj_dim();
    let classes = params.class_count();

    let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
    let fwd: Vec<Vec<f64>> = (0..l)
        .map(|t| {
            naive_chain_state(
                &params.fwd.input_w,
                &params.fwd.recur_w,
                &params.fwd.bias,
                params.activation,
                inputs,
                t,
            )
        })
        .collect();
    let bwd: Vec<Vec<f64>> = (0..l)
        .map(|t| {
            naive_chain_state(
                &params.bwd.input_w,
                &params.bwd.recur_w,
                &params.bwd.bias,
                params.activation,
                &reversed,
                t,
            )
        })
        .collect();

    let project = |proj: &Matrix, states: &[Vec<f64>]| {
        let mut q = vec![0.0; hidden * l_p];
        for (i, h) in states.iter().enumerate() {
            for lp in 0..l_p {
                for c in 0..hidden {
                    q[lp * hidden + c] += proj.get(i, lp) * h[c];
                }
            }
        }
        q
    };
    let q_f = project(&params.proj_fwd, &fwd);
    let q_b = project(&params.proj_bwd, &bwd);

    let mut logits = vec![0.0; classes];
    let of = matvec_naive(&params.fuse_fwd, &q_f);
    let ob = matvec_naive(&params.fuse_bwd, &q_b);
    for (o, (a, b)) in logits.iter_mut().zip(of.iter().zip(&ob)) {
        *o = a + b;
    }
    logits
}

pub fn random_matrix(rng: &mut Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-0.9, 0.9)).collect())
}

pub fn random_vector(rng: &mut Rng, n: usize) -> Vector {
    Vector::from_vec((0..n).map(|_| rng.uniform(-0.5, 0.5)).collect())
}

pub fn random_volume(
    rng: &mut Rng,
    t: usize,
    h: usize,
    w: usize,
    d: usize,
) -> SpatioTemporalVolume {
    SpatioTemporalVolume::from_vec(
        t,
        h,
        w,
        d,
        (0..t * h * w * d).map(|_| rng.uniform(-1.0, 1.0)).collect(),
    )
}

/// Random occupancy mask with at least one occupied cell.
pub fn random_layout(rng: &mut Rng, h: usize, w: usize) -> GridLayout {
    loop {
        let mask: Vec<bool> = (0..h * w).map(|_| rng.below(4) != 0).collect();
        if mask.iter().any(|&b| b) {
            return GridLayout::new(h, w, mask).unwrap();
        }
    }
}

pub fn random_srnn_params(
    rng: &mut Rng,
    layout: &GridLayout,
    input: usize,
    hidden: usize,
    k_p: usize,
    out: usize,
    activation: Activation,
) -> SrnnParams {
    let k = layout.occupied_count();
    let dirs = std::array::from_fn(|_| strnn_core::srnn::SrnnDirection {
        input_w: random_matrix(rng, hidden, input),
        recur_w: random_matrix(rng, hidden, hidden),
        bias: random_vector(rng, hidden),
        proj: random_matrix(rng, k, k_p),
        fuse: random_matrix(rng, out, hidden * k_p),
    });
    SrnnParams { dirs, activation }
}

pub fn random_trnn_params(
    rng: &mut Rng,
    m_dim: usize,
    hidden: usize,
    l: usize,
    l_p: usize,
    classes: usize,
    activation: Activation,
) -> TrnnParams {
    let chain = |rng: &mut Rng| strnn_core::trnn::TrnnChain {
        input_w: random_matrix(rng, hidden, m_dim),
        recur_w: random_matrix(rng, hidden, hidden),
        bias: random_vector(rng, hidden),
    };
    TrnnParams {
        fwd: chain(rng),
        bwd: chain(rng),
        proj_fwd: random_matrix(rng, l, l_p),
        proj_bwd: random_matrix(rng, l, l_p),
        fuse_fwd: random_matrix(rng, classes, hidden * l_p),
        fuse_bwd: random_matrix(rng, classes, hidden * l_p),
        activation,
    }
}

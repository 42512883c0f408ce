//! Bidirectional temporal recurrence over the per-slice outputs of the
//! spatial layer, followed by temporal projections and the fused class
//! scores.
//!
//! The backward chain is the same recurrence run over the time-reversed
//! sequence; its states and its projection rows are indexed by scan
//! position, so swapping the two parameter blocks and reversing the input
//! reproduces the logits exactly.

use crate::numerics::{Activation, Matrix, Vector};

/// One temporal chain: input weights, recurrent weights, bias.
#[derive(Clone, Debug, PartialEq)]
pub struct TrnnChain {
    /// `hidden x m_dim`.
    pub input_w: Matrix,
    /// `hidden x hidden`.
    pub recur_w: Matrix,
    pub bias: Vector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrnnParams {
    pub fwd: TrnnChain,
    pub bwd: TrnnChain,
    /// Temporal projections, `L x L_p`, rows indexed by scan position.
    pub proj_fwd: Matrix,
    pub proj_bwd: Matrix,
    /// Output fusion, `C x (hidden * L_p)`.
    pub fuse_fwd: Matrix,
    pub fuse_bwd: Matrix,
    pub activation: Activation,
}

impl TrnnParams {
    pub fn hidden_dim(&self) -> usize {
        self.fwd.input_w.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_w.cols()
    }

    pub fn seq_len(&self) -> usize {
        self.proj_fwd.rows()
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_fwd.cols()
    }

    pub fn class_count(&self) -> usize {
        self.fuse_fwd.rows()
    }

    pub fn zeros_like(&self) -> TrnnParams {
        let chain = |c: &TrnnChain| TrnnChain {
            input_w: Matrix::zeros(c.input_w.rows(), c.input_w.cols()),
            recur_w: Matrix::zeros(c.recur_w.rows(), c.recur_w.cols()),
            bias: Vector::zeros(c.bias.len()),
        };
        TrnnParams {
            fwd: chain(&self.fwd),
            bwd: chain(&self.bwd),
            proj_fwd: Matrix::zeros(self.proj_fwd.rows(), self.proj_fwd.cols()),
            proj_bwd: Matrix::zeros(self.proj_bwd.rows(), self.proj_bwd.cols()),
            fuse_fwd: Matrix::zeros(self.fuse_fwd.rows(), self.fuse_fwd.cols()),
            fuse_bwd: Matrix::zeros(self.fuse_bwd.rows(), self.fuse_bwd.cols()),
            activation: self.activation,
        }
    }

    fn check_shapes(&self) {
        let (hidden, m_dim) = (self.hidden_dim(), self.input_dim());
        let (l, l_p, c) = (self.seq_len(), self.proj_dim(), self.class_count());
        for chain in [&self.fwd, &self.bwd] {
            assert_eq!((chain.input_w.rows(), chain.input_w.cols()), (hidden, m_dim));
            assert_eq!((chain.recur_w.rows(), chain.recur_w.cols()), (hidden, hidden));
            assert_eq!(chain.bias.len(), hidden);
        }
        for proj in [&self.proj_fwd, &self.proj_bwd] {
            assert_eq!((proj.rows(), proj.cols()), (l, l_p));
        }
        for fuse in [&self.fuse_fwd, &self.fuse_bwd] {
            assert_eq!((fuse.rows(), fuse.cols()), (c, hidden * l_p));
        }
    }
}

/// Forward-pass record retained for backpropagation.
#[derive(Clone, Debug)]
pub struct TrnnTrace {
    /// Forward-chain states, indexed by time.
    pub hidden_fwd: Vec<Vector>,
    /// Backward-chain states, indexed by scan position (position 0 is the
    /// last time step).
    pub hidden_bwd: Vec<Vector>,
    /// Concatenated projected states, `hidden * L_p` each.
    pub proj_fwd: Vector,
    pub proj_bwd: Vector,
    /// Class scores.
    pub logits: Vector,
}

fn run_chain(chain: &TrnnChain, activation: Activation, inputs: &[&Vector]) -> Vec<Vector> {
    let hidden = chain.input_w.rows();
    let mut states = Vec::with_capacity(inputs.len());
    let mut prev = Vector::zeros(hidden);
    for m in inputs {
        let mut z = chain.input_w.matvec(m);
        z.add_assign(&chain.recur_w.matvec(&prev));
        z.add_assign(&chain.bias);
        activation.apply_vec(&mut z);
        prev = z.clone();
        states.push(z);
    }
    states
}

fn project(proj: &Matrix, states: &[Vector], hidden: usize) -> Vector {
    let l_p = proj.cols();
    let mut out = Vector::zeros(hidden * l_p);
    for (i, state) in states.iter().enumerate() {
        for l in 0..l_p {
            let g = proj.get(i, l);
            if g != 0.0 {
                let chunk = &mut out.data_mut()[l * hidden..(l + 1) * hidden];
                for (c, v) in chunk.iter_mut().zip(state.data()) {
                    *c += g * v;
                }
            }
        }
    }
    out
}

/// Runs both temporal chains (initial states zero), projects, and fuses
/// into class scores. Panics on an empty sequence or a length that does not
/// match the projection rows.
pub fn trnn_forward(params: &TrnnParams, inputs: &[Vector]) -> TrnnTrace {
    params.check_shapes();
    assert!(!inputs.is_empty(), "temporal layer requires a non-empty sequence");
    assert_eq!(
        inputs.len(),
        params.seq_len(),
        "sequence length {} does not match projection rows {}",
        inputs.len(),
        params.seq_len()
    );
    let hidden = params.hidden_dim();

    let ordered: Vec<&Vector> = inputs.iter().collect();
    let reversed: Vec<&Vector> = inputs.iter().rev().collect();
    let hidden_fwd = run_chain(&params.fwd, params.activation, &ordered);
    let hidden_bwd = run_chain(&params.bwd, params.activation, &reversed);

    let proj_fwd = project(&params.proj_fwd, &hidden_fwd, hidden);
    let proj_bwd = project(&params.proj_bwd, &hidden_bwd, hidden);

    let mut logits = params.fuse_fwd.matvec(&proj_fwd);
    logits.add_assign(&params.fuse_bwd.matvec(&proj_bwd));

    TrnnTrace {
        hidden_fwd,
        hidden_bwd,
        proj_fwd,
        proj_bwd,
        logits,
    }
}

fn backward_chain(
    chain: &TrnnChain,
    activation: Activation,
    inputs: &[&Vector],
    states: &[Vector],
    mut grad_h: Vec<Vector>,
    chain_grads: &mut TrnnChain,
    grad_inputs: &mut [Vector],
) {
    for t in (0..states.len()).rev() {
        let mut delta = grad_h[t].clone();
        for (d, y) in delta.data_mut().iter_mut().zip(states[t].data()) {
            *d *= activation.derivative_from_output(*y);
        }
        chain_grads.input_w.add_outer(&delta, inputs[t]);
        chain_grads.bias.add_assign(&delta);
        if t > 0 {
            chain_grads.recur_w.add_outer(&delta, &states[t - 1]);
            let back = chain.recur_w.matvec_t(&delta);
            grad_h[t - 1].add_assign(&back);
        }
        grad_inputs[t].add_assign(&chain.input_w.matvec_t(&delta));
    }
}

/// Backpropagates a logit gradient through fusion, projections, and both
/// chains. Returns parameter gradients and the gradient with respect to
/// each input vector (time order), which flows down to the spatial layer.
pub fn trnn_backward(
    params: &TrnnParams,
    inputs: &[Vector],
    trace: &TrnnTrace,
    grad_logits: &Vector,
) -> (TrnnParams, Vec<Vector>) {
    params.check_shapes();
    assert_eq!(
        trace.hidden_fwd.len(),
        inputs.len(),
        "trace does not cover the sequence (got {} states, sequence has {})",
        trace.hidden_fwd.len(),
        inputs.len()
    );
    let hidden = params.hidden_dim();
    let l = inputs.len();
    let l_p = params.proj_dim();
    let mut grads = params.zeros_like();
    let mut grad_inputs = vec![Vector::zeros(params.input_dim()); l];

    // Fusion.
    grads.fuse_fwd.add_outer(grad_logits, &trace.proj_fwd);
    grads.fuse_bwd.add_outer(grad_logits, &trace.proj_bwd);
    let grad_qf = params.fuse_fwd.matvec_t(grad_logits);
    let grad_qb = params.fuse_bwd.matvec_t(grad_logits);

    // Projections.
    let mut grad_hf = vec![Vector::zeros(hidden); l];
    let mut grad_hb = vec![Vector::zeros(hidden); l];
    for (states, proj, proj_grads, grad_q, grad_h) in [
        (
            &trace.hidden_fwd,
            &params.proj_fwd,
            &mut grads.proj_fwd,
            &grad_qf,
            &mut grad_hf,
        ),
        (
            &trace.hidden_bwd,
            &params.proj_bwd,
            &mut grads.proj_bwd,
            &grad_qb,
            &mut grad_hb,
        ),
    ] {
        for (i, state) in states.iter().enumerate() {
            for lp in 0..l_p {
                let chunk = &grad_q.data()[lp * hidden..(lp + 1) * hidden];
                let mut dot = 0.0;
                for (c, v) in chunk.iter().zip(state.data()) {
                    dot += c * v;
                }
                proj_grads.set(i, lp, proj_grads.get(i, lp) + dot);
                let coeff = proj.get(i, lp);
                if coeff != 0.0 {
                    for (gh, c) in grad_h[i].data_mut().iter_mut().zip(chunk) {
                        *gh += coeff * c;
                    }
                }
            }
        }
    }

    // Chains: the backward chain sees the reversed sequence, so its input
    // gradients land at mirrored positions.
    let ordered: Vec<&Vector> = inputs.iter().collect();
    backward_chain(
        &params.fwd,
        params.activation,
        &ordered,
        &trace.hidden_fwd,
        grad_hf,
        &mut grads.fwd,
        &mut grad_inputs,
    );
    let reversed: Vec<&Vector> = inputs.iter().rev().collect();
    let mut grad_inputs_rev = vec![Vector::zeros(params.input_dim()); l];
    backward_chain(
        &params.bwd,
        params.activation,
        &reversed,
        &trace.hidden_bwd,
        grad_hb,
        &mut grads.bwd,
        &mut grad_inputs_rev,
    );
    for (s, g) in grad_inputs_rev.into_iter().enumerate() {
        grad_inputs[l - 1 - s].add_assign(&g);
    }

    (grads, grad_inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, Rng};

    pub(crate) fn random_params(
        rng: &mut Rng,
        m_dim: usize,
        hidden: usize,
        l: usize,
        l_p: usize,
        classes: usize,
        activation: Activation,
    ) -> TrnnParams {
        let mat = |rng: &mut Rng, r: usize, c: usize| {
            Matrix::from_vec(r, c, (0..r * c).map(|_| rng.uniform(-0.8, 0.8)).collect())
        };
        let chain = |rng: &mut Rng| TrnnChain {
            input_w: mat(rng, hidden, m_dim),
            recur_w: mat(rng, hidden, hidden),
            bias: Vector::from_vec((0..hidden).map(|_| rng.uniform(-0.3, 0.3)).collect()),
        };
        TrnnParams {
            fwd: chain(rng),
            bwd: chain(rng),
            proj_fwd: mat(rng, l, l_p),
            proj_bwd: mat(rng, l, l_p),
            fuse_fwd: mat(rng, classes, hidden * l_p),
            fuse_bwd: mat(rng, classes, hidden * l_p),
            activation,
        }
    }

    fn random_sequence(rng: &mut Rng, l: usize, m_dim: usize) -> Vec<Vector> {
        (0..l)
            .map(|_| Vector::from_vec((0..m_dim).map(|_| rng.uniform(-1.0, 1.0)).collect()))
            .collect()
    }

    #[test]
    fn length_one_sequence_never_uses_recurrent_weights() {
        let mut rng = Rng::new(1);
        let mut params = random_params(&mut rng, 2, 3, 1, 1, 2, Activation::Sigmoid);
        let inputs = random_sequence(&mut rng, 1, 2);
        let base = trnn_forward(&params, &inputs);
        for v in params.fwd.recur_w.data_mut() {
            *v += 100.0;
        }
        for v in params.bwd.recur_w.data_mut() {
            *v -= 42.0;
        }
        let changed = trnn_forward(&params, &inputs);
        assert_eq!(base.logits, changed.logits);
    }

    #[test]
    fn all_zero_inputs_with_zero_bias_give_zero_logits() {
        let mut rng = Rng::new(2);
        let mut params = random_params(&mut rng, 2, 3, 4, 2, 3, Activation::Relu);
        for chain in [&mut params.fwd, &mut params.bwd] {
            for v in chain.bias.data_mut() {
                *v = 0.0;
            }
        }
        let inputs = vec![Vector::zeros(2); 4];
        let trace = trnn_forward(&params, &inputs);
        assert!(trace.logits.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_step_scalar_recurrence_hand_computed() {
        // Scalar everything, relu, positive weights: unrolled by hand.
        let chain = |w_in: f64, w_hh: f64, b: f64| TrnnChain {
            input_w: Matrix::from_vec(1, 1, vec![w_in]),
            recur_w: Matrix::from_vec(1, 1, vec![w_hh]),
            bias: Vector::from_vec(vec![b]),
        };
        let params = TrnnParams {
            fwd: chain(1.0, 0.5, 0.0),
            bwd: chain(2.0, 0.25, 0.0),
            proj_fwd: Matrix::identity(2),
            proj_bwd: Matrix::identity(2),
            fuse_fwd: Matrix::from_vec(1, 2, vec![1.0, 1.0]),
            fuse_bwd: Matrix::from_vec(1, 2, vec![1.0, 1.0]),
            activation: Activation::Relu,
        };
        let inputs = vec![Vector::from_vec(vec![1.0]), Vector::from_vec(vec![2.0])];
        // fwd: h1 = 1, h2 = 2 + 0.5 = 2.5; bwd over (2, 1): h1 = 4, h2 = 2 + 1 = 3.
        let trace = trnn_forward(&params, &inputs);
        assert_eq!(trace.hidden_fwd[0].data(), &[1.0]);
        assert_eq!(trace.hidden_fwd[1].data(), &[2.5]);
        assert_eq!(trace.hidden_bwd[0].data(), &[4.0]);
        assert_eq!(trace.hidden_bwd[1].data(), &[3.0]);
        assert_eq!(trace.logits.data(), &[1.0 + 2.5 + 4.0 + 3.0]);
    }

    #[test]
    fn time_reversal_with_swapped_blocks_is_identical() {
        let mut rng = Rng::new(5);
        let params = random_params(&mut rng, 3, 4, 5, 3, 2, Activation::Sigmoid);
        let inputs = random_sequence(&mut rng, 5, 3);

        let swapped = TrnnParams {
            fwd: params.bwd.clone(),
            bwd: params.fwd.clone(),
            proj_fwd: params.proj_bwd.clone(),
            proj_bwd: params.proj_fwd.clone(),
            fuse_fwd: params.fuse_bwd.clone(),
            fuse_bwd: params.fuse_fwd.clone(),
            activation: params.activation,
        };
        let reversed: Vec<Vector> = inputs.iter().rev().cloned().collect();

        let a = trnn_forward(&params, &inputs);
        let b = trnn_forward(&swapped, &reversed);
        for i in 0..a.logits.len() {
            assert!(
                (a.logits.get(i) - b.logits.get(i)).abs() < 1e-15,
                "logit {i}: {} vs {}",
                a.logits.get(i),
                b.logits.get(i)
            );
        }
    }

    #[test]
    fn identity_projection_with_last_state_selector_reads_final_states() {
        // G = I (L_p = L), fusion selects the last scan position of each
        // chain: a plain last-state bidirectional classifier.
        let mut rng = Rng::new(6);
        let (m_dim, hidden, l) = (2, 3, 4);
        let mut params = random_params(&mut rng, m_dim, hidden, l, l, 2, Activation::Sigmoid);
        params.proj_fwd = Matrix::identity(l);
        params.proj_bwd = Matrix::identity(l);
        let mut fuse = Matrix::zeros(hidden, hidden * l);
        for i in 0..hidden {
            fuse.set(i, (l - 1) * hidden + i, 1.0);
        }
        // C = hidden here so the selector can be the identity on the chunk.
        let params = TrnnParams {
            fuse_fwd: fuse.clone(),
            fuse_bwd: fuse,
            ..params
        };
        let inputs = random_sequence(&mut rng, l, m_dim);
        let trace = trnn_forward(&params, &inputs);
        for i in 0..hidden {
            let expect = trace.hidden_fwd[l - 1].get(i) + trace.hidden_bwd[l - 1].get(i);
            assert!((trace.logits.get(i) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_logit_gradient_gives_zero_gradients() {
        let mut rng = Rng::new(7);
        let params = random_params(&mut rng, 2, 3, 4, 2, 3, Activation::Relu);
        let inputs = random_sequence(&mut rng, 4, 2);
        let trace = trnn_forward(&params, &inputs);
        let (grads, grad_inputs) =
            trnn_backward(&params, &inputs, &trace, &Vector::zeros(3));
        assert!(flatten(&grads).iter().all(|&x| x == 0.0));
        assert!(grad_inputs
            .iter()
            .all(|g| g.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn gradients_match_finite_differences() {
        // Random instance per the layer contract: L = 4, hidden = 3.
        for seed in [11u64, 12] {
            let mut rng = Rng::new(seed);
            let activation = if seed % 2 == 0 {
                Activation::Relu
            } else {
                Activation::Sigmoid
            };
            let params = random_params(&mut rng, 2, 3, 4, 2, 3, activation);
            let inputs = random_sequence(&mut rng, 4, 2);
            // Scalar surrogate: dot of logits with a fixed vector, squared.
            let probe = Vector::from_vec(vec![0.3, -0.7, 0.5]);
            let loss = |p: &TrnnParams| {
                let tr = trnn_forward(p, &inputs);
                let v = tr.logits.dot(&probe);
                0.5 * v * v
            };
            let trace = trnn_forward(&params, &inputs);
            let scale = trace.logits.dot(&probe);
            let mut grad_logits = probe.clone();
            grad_logits.scale(scale);
            let (grads, _) = trnn_backward(&params, &inputs, &trace, &grad_logits);

            let flat = flatten(&params);
            let numeric = finite_diff_grad(
                |p| loss(&unflatten(&params, p)),
                &flat,
                1e-4,
            );
            let analytic = flatten(&grads);
            let mut worst = 0.0f64;
            for (a, n) in analytic.iter().zip(&numeric) {
                let diff = (a - n).abs();
                if diff > 1e-8 {
                    worst = worst.max(diff / a.abs().max(n.abs()));
                }
            }
            assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
        }
    }

    #[test]
    fn input_gradient_at_last_step_is_forward_chain_term_only() {
        // With the backward chain zeroed, only W_ih^f links the last input
        // to the logits (its state feeds no later step).
        let mut rng = Rng::new(13);
        let (m_dim, hidden, l, l_p, classes) = (2, 3, 3, 3, 2);
        let mut params =
            random_params(&mut rng, m_dim, hidden, l, l_p, classes, Activation::Sigmoid);
        params.bwd.input_w = Matrix::zeros(hidden, m_dim);
        params.bwd.recur_w = Matrix::zeros(hidden, hidden);
        params.bwd.bias = Vector::zeros(hidden);
        params.fuse_bwd = Matrix::zeros(classes, hidden * l_p);
        params.proj_fwd = Matrix::identity(l);

        let inputs = random_sequence(&mut rng, l, m_dim);
        let trace = trnn_forward(&params, &inputs);
        let grad_logits = Vector::from_vec(vec![1.0, -1.0]);
        let (_, grad_inputs) = trnn_backward(&params, &inputs, &trace, &grad_logits);

        // Analytic chain on the unrolled graph: d o / d m_L goes through
        // h_L^f alone: W_ih^T diag(act') G-row-weighted V^T g.
        let grad_q = params.fuse_fwd.matvec_t(&grad_logits);
        let mut grad_h_last = Vector::zeros(hidden);
        for lp in 0..l_p {
            let coeff = params.proj_fwd.get(l - 1, lp);
            if coeff != 0.0 {
                let chunk = &grad_q.data()[lp * hidden..(lp + 1) * hidden];
                for (g, c) in grad_h_last.data_mut().iter_mut().zip(chunk) {
                    *g += coeff * c;
                }
            }
        }
        let mut delta = grad_h_last;
        for (d, y) in delta
            .data_mut()
            .iter_mut()
            .zip(trace.hidden_fwd[l - 1].data())
        {
            *d *= params.activation.derivative_from_output(*y);
        }
        let expect = params.fwd.input_w.matvec_t(&delta);
        for i in 0..m_dim {
            assert!(
                (grad_inputs[l - 1].get(i) - expect.get(i)).abs() < 1e-12,
                "coord {i}"
            );
        }
    }

    #[test]
    #[should_panic(expected = "non-empty sequence")]
    fn empty_sequence_is_rejected() {
        let mut rng = Rng::new(14);
        let params = random_params(&mut rng, 2, 3, 4, 2, 3, Activation::Relu);
        trnn_forward(&params, &[]);
    }

    #[test]
    #[should_panic(expected = "does not match projection rows")]
    fn wrong_length_sequence_is_rejected() {
        let mut rng = Rng::new(15);
        let params = random_params(&mut rng, 2, 3, 4, 2, 3, Activation::Relu);
        let inputs = random_sequence(&mut rng, 3, 2);
        trnn_forward(&params, &inputs);
    }

    fn flatten(p: &TrnnParams) -> Vec<f64> {
        let mut out = Vec::new();
        for chain in [&p.fwd, &p.bwd] {
            out.extend_from_slice(chain.input_w.data());
            out.extend_from_slice(chain.recur_w.data());
            out.extend_from_slice(chain.bias.data());
        }
        for m in [&p.proj_fwd, &p.proj_bwd, &p.fuse_fwd, &p.fuse_bwd] {
            out.extend_from_slice(m.data());
        }
        out
    }

    fn unflatten(template: &TrnnParams, flat: &[f64]) -> TrnnParams {
        let mut p = template.clone();
        let mut at = 0;
        {
            let mut take = |dst: &mut [f64]| {
                dst.copy_from_slice(&flat[at..at + dst.len()]);
                at += dst.len();
            };
            for chain in [&mut p.fwd, &mut p.bwd] {
                take(chain.input_w.data_mut());
                take(chain.recur_w.data_mut());
                take(chain.bias.data_mut());
            }
            for m in [
                &mut p.proj_fwd,
                &mut p.proj_bwd,
                &mut p.fuse_fwd,
                &mut p.fuse_bwd,
            ] {
                take(m.data_mut());
            }
        }
        assert_eq!(at, flat.len());
        p
    }
}

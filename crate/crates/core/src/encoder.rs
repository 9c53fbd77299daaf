//! Intra-sentence word encoder: one BiLSTM per sentence.
//!
//! The forward pass reads tokens left to right, the backward pass right to
//! left, both from zero initial states. The hidden representation of token
//! `t` is the element-wise SUM of the two directional hidden states, not
//! their concatenation, so the hidden size equals the embedding size `d`.
//! Each direction also exposes its final cell state — the whole-sentence
//! summary the attention stage dots against the other sentence.

use rand::Rng;

use crate::graph::{Graph, NodeId};
use crate::tensor::{Param, Tensor};
use crate::NumericError;

/// One gate's affine parameters: `w · x + u · h + b`.
#[derive(Debug, Clone)]
pub struct GateParams {
    pub w: Param,
    pub u: Param,
    pub b: Param,
}

impl GateParams {
    fn init(d: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (d as f64).sqrt();
        let mut mat = || {
            let values: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-bound..bound)).collect();
            Param::new(Tensor::new(vec![d, d], values).expect("square gate matrix"))
        };
        GateParams { w: mat(), u: mat(), b: Param::zeros(vec![d]) }
    }

    fn zeros(d: usize) -> Self {
        GateParams {
            w: Param::zeros(vec![d, d]),
            u: Param::zeros(vec![d, d]),
            b: Param::zeros(vec![d]),
        }
    }
}

/// Parameters of one LSTM direction with input and hidden size `d`.
///
/// Standard forget-gate cell, no peepholes:
/// `i,f,o = sigmoid(affine)`, `g = tanh(affine)`,
/// `c' = f*c + i*g`, `h' = o*tanh(c')`.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub cell_gate: GateParams,
    pub output_gate: GateParams,
    pub hidden_dim: usize,
}

impl LstmParams {
    /// Weights uniform in `(-1/sqrt(d), 1/sqrt(d))`, biases zero.
    pub fn init(d: usize, rng: &mut impl Rng) -> Self {
        LstmParams {
            input_gate: GateParams::init(d, rng),
            forget_gate: GateParams::init(d, rng),
            cell_gate: GateParams::init(d, rng),
            output_gate: GateParams::init(d, rng),
            hidden_dim: d,
        }
    }

    pub fn zeros(d: usize) -> Self {
        LstmParams {
            input_gate: GateParams::zeros(d),
            forget_gate: GateParams::zeros(d),
            cell_gate: GateParams::zeros(d),
            output_gate: GateParams::zeros(d),
            hidden_dim: d,
        }
    }

    /// Register every tensor of this direction on a graph.
    pub fn bind(&self, g: &mut Graph) -> LstmNodes {
        let gate = |g: &mut Graph, p: &GateParams| GateNodes {
            w: g.param(&p.w),
            u: g.param(&p.u),
            b: g.param(&p.b),
        };
        LstmNodes {
            input_gate: gate(g, &self.input_gate),
            forget_gate: gate(g, &self.forget_gate),
            cell_gate: gate(g, &self.cell_gate),
            output_gate: gate(g, &self.output_gate),
            hidden_dim: self.hidden_dim,
        }
    }

    /// `(name, param)` pairs under a `prefix`, in a stable order.
    pub fn named_params(&self, prefix: &str) -> Vec<(String, Param)> {
        let mut out = Vec::new();
        for (gate_name, gate) in [
            ("input_gate", &self.input_gate),
            ("forget_gate", &self.forget_gate),
            ("cell_gate", &self.cell_gate),
            ("output_gate", &self.output_gate),
        ] {
            out.push((format!("{prefix}.{gate_name}.w"), gate.w.clone()));
            out.push((format!("{prefix}.{gate_name}.u"), gate.u.clone()));
            out.push((format!("{prefix}.{gate_name}.b"), gate.b.clone()));
        }
        out
    }
}

/// Graph-bound handles to one direction's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LstmNodes {
    pub input_gate: GateNodes,
    pub forget_gate: GateNodes,
    pub cell_gate: GateNodes,
    pub output_gate: GateNodes,
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct GateNodes {
    pub w: NodeId,
    pub u: NodeId,
    pub b: NodeId,
}

/// Forward and backward directions of one sentence encoder. The two
/// sentences get two fully independent instances of this.
#[derive(Debug, Clone)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    pub fn init(d: usize, rng: &mut impl Rng) -> Self {
        BiLstmParams { fwd: LstmParams::init(d, rng), bwd: LstmParams::init(d, rng) }
    }

    pub fn named_params(&self, prefix: &str) -> Vec<(String, Param)> {
        let mut out = self.fwd.named_params(&format!("{prefix}.fwd"));
        out.extend(self.bwd.named_params(&format!("{prefix}.bwd")));
        out
    }
}

/// Per-sentence encoder output: summed hidden sequence `[n,d]` plus the
/// final cell state of each direction.
#[derive(Debug, Clone, Copy)]
pub struct EncoderState {
    pub hidden_seq: NodeId,
    pub fwd_final_cell: NodeId,
    pub bwd_final_cell: NodeId,
    pub n: usize,
    pub d: usize,
}

fn gate_preactivation(
    g: &mut Graph,
    x: NodeId,
    h: NodeId,
    gate: &GateNodes,
) -> Result<NodeId, NumericError> {
    let wx = g.matvec(gate.w, x)?;
    let uh = g.matvec(gate.u, h)?;
    let sum = g.add(wx, uh)?;
    g.add(sum, gate.b)
}

/// One LSTM cell update. Returns `(h', c')`.
pub fn lstm_step(
    g: &mut Graph,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    p: &LstmNodes,
) -> Result<(NodeId, NodeId), NumericError> {
    let i_pre = gate_preactivation(g, x, h, &p.input_gate)?;
    let i = g.sigmoid(i_pre);
    let f_pre = gate_preactivation(g, x, h, &p.forget_gate)?;
    let f = g.sigmoid(f_pre);
    let o_pre = gate_preactivation(g, x, h, &p.output_gate)?;
    let o = g.sigmoid(o_pre);
    let g_pre = gate_preactivation(g, x, h, &p.cell_gate)?;
    let cell_in = g.tanh(g_pre);

    let keep = g.mul(f, c)?;
    let write = g.mul(i, cell_in)?;
    let c_next = g.add(keep, write)?;
    let c_act = g.tanh(c_next);
    let h_next = g.mul(o, c_act)?;
    Ok((h_next, c_next))
}

/// Run one direction over row indices given in processing order.
/// Returns hidden states aligned with the given order, plus the final cell.
fn lstm_run(
    g: &mut Graph,
    inputs: &[NodeId],
    p: &LstmNodes,
) -> Result<(Vec<NodeId>, NodeId), NumericError> {
    let d = p.hidden_dim;
    let mut h = g.zeros(vec![d]);
    let mut c = g.zeros(vec![d]);
    let mut hiddens = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (h_next, c_next) = lstm_step(g, x, h, c, p)?;
        hiddens.push(h_next);
        h = h_next;
        c = c_next;
    }
    Ok((hiddens, c))
}

/// Encode a sentence matrix `[n,d]` with both directions.
pub fn bilstm_encode(
    g: &mut Graph,
    sentence_vectors: NodeId,
    fwd: &LstmNodes,
    bwd: &LstmNodes,
) -> Result<EncoderState, NumericError> {
    let shape = g.shape(sentence_vectors).to_vec();
    let [n, d] = shape[..] else {
        return Err(NumericError::Contract {
            op: "bilstm_encode",
            msg: format!("expected an n x d matrix, got shape {shape:?}"),
        });
    };
    if n == 0 {
        return Err(NumericError::Contract {
            op: "bilstm_encode",
            msg: "sentence must have at least one position".to_string(),
        });
    }
    if d != fwd.hidden_dim || d != bwd.hidden_dim {
        return Err(NumericError::DimensionMismatch {
            op: "bilstm_encode",
            lhs: vec![n, d],
            rhs: vec![fwd.hidden_dim, bwd.hidden_dim],
        });
    }

    let rows: Vec<NodeId> =
        (0..n).map(|t| g.row(sentence_vectors, t)).collect::<Result<_, _>>()?;
    let reversed: Vec<NodeId> = rows.iter().rev().copied().collect();

    let (fwd_h, fwd_cell) = lstm_run(g, &rows, fwd)?;
    let (bwd_h_rev, bwd_cell) = lstm_run(g, &reversed, bwd)?;

    let mut summed = Vec::with_capacity(n);
    for t in 0..n {
        // bwd_h_rev is aligned with the reversed sequence; position t of the
        // original sentence is entry n-1-t.
        summed.push(g.add(fwd_h[t], bwd_h_rev[n - 1 - t])?);
    }
    let hidden_seq = g.stack_rows(&summed)?;

    Ok(EncoderState { hidden_seq, fwd_final_cell: fwd_cell, bwd_final_cell: bwd_cell, n, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_input(g: &mut Graph, n: usize, d: usize, rng: &mut impl Rng) -> NodeId {
        let values: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.constant(Tensor::new(vec![n, d], values).unwrap())
    }

    #[test]
    fn zero_weights_zero_cell_is_a_fixed_point() {
        let d = 4;
        let params = LstmParams::zeros(d);
        let mut g = Graph::new();
        let nodes = params.bind(&mut g);
        let x = g.zeros(vec![d]);
        let h = g.zeros(vec![d]);
        let c = g.zeros(vec![d]);
        let (h1, c1) = lstm_step(&mut g, x, h, c, &nodes).unwrap();
        assert!(g.value(h1).iter().all(|&v| v == 0.0));
        assert!(g.value(c1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_weights_unit_cell_halves_and_squashes() {
        // Gates sit at 0.5, candidate at 0: c' = 0.5, h' = 0.5*tanh(0.5).
        let d = 3;
        let params = LstmParams::zeros(d);
        let mut g = Graph::new();
        let nodes = params.bind(&mut g);
        let x = g.zeros(vec![d]);
        let h = g.zeros(vec![d]);
        let c = g.constant_vector(vec![1.0; d]);
        let (h1, c1) = lstm_step(&mut g, x, h, c, &nodes).unwrap();
        let want_h = 0.5 * 0.5_f64.tanh();
        for t in 0..d {
            assert!((g.value(c1)[t] - 0.5).abs() < 1e-15);
            assert!((g.value(h1)[t] - want_h).abs() < 1e-15);
        }
    }

    /// Plain-loop evaluation of the cell equations, independent of the graph.
    fn oracle_step(
        x: &[f64],
        h: &[f64],
        c: &[f64],
        p: &LstmParams,
    ) -> (Vec<f64>, Vec<f64>) {
        let d = p.hidden_dim;
        let affine = |gate: &GateParams| -> Vec<f64> {
            let w = gate.w.borrow();
            let u = gate.u.borrow();
            let b = gate.b.borrow();
            (0..d)
                .map(|i| {
                    let mut acc = b.values()[i];
                    for j in 0..d {
                        acc += w.values()[i * d + j] * x[j] + u.values()[i * d + j] * h[j];
                    }
                    acc
                })
                .collect()
        };
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i: Vec<f64> = affine(&p.input_gate).iter().map(|&v| sig(v)).collect();
        let f: Vec<f64> = affine(&p.forget_gate).iter().map(|&v| sig(v)).collect();
        let o: Vec<f64> = affine(&p.output_gate).iter().map(|&v| sig(v)).collect();
        let cand: Vec<f64> = affine(&p.cell_gate).iter().map(|v| v.tanh()).collect();
        let c_next: Vec<f64> = (0..d).map(|t| f[t] * c[t] + i[t] * cand[t]).collect();
        let h_next: Vec<f64> = (0..d).map(|t| o[t] * c_next[t].tanh()).collect();
        (h_next, c_next)
    }

    #[test]
    fn step_matches_duplicate_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let d = rng.gen_range(1..6);
            let params = LstmParams::init(d, &mut rng);
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let c: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let mut g = Graph::new();
            let nodes = params.bind(&mut g);
            let xn = g.constant_vector(x.clone());
            let hn = g.constant_vector(h.clone());
            let cn = g.constant_vector(c.clone());
            let (h1, c1) = lstm_step(&mut g, xn, hn, cn, &nodes).unwrap();

            let (want_h, want_c) = oracle_step(&x, &h, &c, &params);
            for t in 0..d {
                assert!((g.value(h1)[t] - want_h[t]).abs() < 1e-12);
                assert!((g.value(c1)[t] - want_c[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encode_n1_zero_weights_gives_zeros() {
        let d = 4;
        let fwd = LstmParams::zeros(d);
        let bwd = LstmParams::zeros(d);
        let mut g = Graph::new();
        let fnodes = fwd.bind(&mut g);
        let bnodes = bwd.bind(&mut g);
        let sent = g.zeros(vec![1, d]);
        let state = bilstm_encode(&mut g, sent, &fnodes, &bnodes).unwrap();
        assert!(g.value(state.hidden_seq).iter().all(|&v| v == 0.0));
        assert!(g.value(state.fwd_final_cell).iter().all(|&v| v == 0.0));
        assert!(g.value(state.bwd_final_cell).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_rejects_dim_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fwd = LstmParams::init(4, &mut rng);
        let bwd = LstmParams::init(4, &mut rng);
        let mut g = Graph::new();
        let fnodes = fwd.bind(&mut g);
        let bnodes = bwd.bind(&mut g);
        let sent = g.zeros(vec![2, 3]);
        assert!(bilstm_encode(&mut g, sent, &fnodes, &bnodes).is_err());
    }

    #[test]
    fn backward_direction_is_forward_on_reversed_input() {
        // Swapping both the row order of the input and the direction roles
        // must produce the row-reversed hidden sequence and swapped cells.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (n, d) = (5, 3);
        let fwd = LstmParams::init(d, &mut rng);
        let bwd = LstmParams::init(d, &mut rng);
        let values: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut reversed = vec![0.0; n * d];
        for t in 0..n {
            reversed[(n - 1 - t) * d..(n - t) * d].copy_from_slice(&values[t * d..(t + 1) * d]);
        }

        let mut g1 = Graph::new();
        let f1 = fwd.bind(&mut g1);
        let b1 = bwd.bind(&mut g1);
        let s1 = g1.constant(Tensor::new(vec![n, d], values).unwrap());
        let state1 = bilstm_encode(&mut g1, s1, &f1, &b1).unwrap();

        let mut g2 = Graph::new();
        let f2 = bwd.bind(&mut g2);
        let b2 = fwd.bind(&mut g2);
        let s2 = g2.constant(Tensor::new(vec![n, d], reversed).unwrap());
        let state2 = bilstm_encode(&mut g2, s2, &f2, &b2).unwrap();

        let h1 = g1.value(state1.hidden_seq);
        let h2 = g2.value(state2.hidden_seq);
        for t in 0..n {
            for j in 0..d {
                assert_eq!(h1[t * d + j], h2[(n - 1 - t) * d + j]);
            }
        }
        assert_eq!(g1.value(state1.fwd_final_cell), g2.value(state2.bwd_final_cell));
        assert_eq!(g1.value(state1.bwd_final_cell), g2.value(state2.fwd_final_cell));
    }

    #[test]
    fn encode_matches_two_loop_recurrence_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let (n, d) = (3, 4);
        let fwd = LstmParams::init(d, &mut rng);
        let bwd = LstmParams::init(d, &mut rng);
        let values: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let mut g = Graph::new();
        let fnodes = fwd.bind(&mut g);
        let bnodes = bwd.bind(&mut g);
        let sent = g.constant(Tensor::new(vec![n, d], values.clone()).unwrap());
        let state = bilstm_encode(&mut g, sent, &fnodes, &bnodes).unwrap();

        // Oracle: explicit forward loop then explicit backward loop.
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut fwd_h = Vec::new();
        for t in 0..n {
            let (h2, c2) = oracle_step(&values[t * d..(t + 1) * d], &h, &c, &fwd);
            fwd_h.push(h2.clone());
            h = h2;
            c = c2;
        }
        let fwd_cell = c;
        let mut h = vec![0.0; d];
        let mut c = vec![0.0; d];
        let mut bwd_h = vec![vec![]; n];
        for t in (0..n).rev() {
            let (h2, c2) = oracle_step(&values[t * d..(t + 1) * d], &h, &c, &bwd);
            bwd_h[t] = h2.clone();
            h = h2;
            c = c2;
        }
        let bwd_cell = c;

        let hs = g.value(state.hidden_seq);
        for t in 0..n {
            for j in 0..d {
                let want = fwd_h[t][j] + bwd_h[t][j];
                assert!((hs[t * d + j] - want).abs() < 1e-12);
            }
        }
        for j in 0..d {
            assert!((g.value(state.fwd_final_cell)[j] - fwd_cell[j]).abs() < 1e-12);
            assert!((g.value(state.bwd_final_cell)[j] - bwd_cell[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_reach_both_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (n, d) = (3, 2);
        let fwd = LstmParams::init(d, &mut rng);
        let bwd = LstmParams::init(d, &mut rng);
        let mut g = Graph::new();
        let fnodes = fwd.bind(&mut g);
        let bnodes = bwd.bind(&mut g);
        let sent = constant_input(&mut g, n, d, &mut rng);
        let state = bilstm_encode(&mut g, sent, &fnodes, &bnodes).unwrap();
        let flat = g.flatten(state.hidden_seq).unwrap();
        let s = g.sum(flat);
        g.backward(s).unwrap();
        let fwd_grad_norm: f64 =
            fwd.input_gate.w.borrow().grad().unwrap().iter().map(|v| v * v).sum();
        let bwd_grad_norm: f64 =
            bwd.input_gate.w.borrow().grad().unwrap().iter().map(|v| v * v).sum();
        assert!(fwd_grad_norm > 0.0);
        assert!(bwd_grad_norm > 0.0);
    }
}

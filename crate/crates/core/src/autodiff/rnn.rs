//! LSTM and GRU cells built from tape operations, plus bidirectional
//! wrappers.
//!
//! Weights are stored input-major (`[input, gates·hidden]`) so a step input
//! row multiplies from the left.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, ParamId, ParamStore, Result, Tensor, Var};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_x: store.add_xavier(format!("{prefix}.w_x"), &[input, 4 * hidden], rng),
            w_h: store.add_xavier(format!("{prefix}.w_h"), &[hidden, 4 * hidden], rng),
            bias: store.add_zeros(format!("{prefix}.bias"), &[4 * hidden]),
            input,
            hidden,
        }
    }

    pub fn lookup(store: &ParamStore, prefix: &str, input: usize, hidden: usize) -> Option<Self> {
        Some(Self {
            w_x: store.find(&format!("{prefix}.w_x"))?,
            w_h: store.find(&format!("{prefix}.w_h"))?,
            bias: store.find(&format!("{prefix}.bias"))?,
            input,
            hidden,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl LstmState {
    pub fn zeros(g: &mut Graph, hidden: usize) -> Self {
        let h = g.constant(Tensor::zeros(&[hidden]));
        let c = g.constant(Tensor::zeros(&[hidden]));
        Self { h, c }
    }
}

/// One LSTM step on input `x` of shape `[input]`. Gate order is
/// input, forget, candidate, output.
pub fn lstm_cell(g: &mut Graph, p: &LstmParams, x: Var, state: LstmState) -> Result<LstmState> {
    let w_x = g.param(p.w_x);
    let xw = g.matmul(x, w_x)?;
    lstm_step_projected(g, p, xw, state)
}

fn lstm_step_projected(g: &mut Graph, p: &LstmParams, xw: Var, state: LstmState) -> Result<LstmState> {
    let h = p.hidden;
    let w_h = g.param(p.w_h);
    let bias = g.param(p.bias);
    let hw = g.matmul(state.h, w_h)?;
    let z = g.add(xw, hw)?;
    let z = g.add(z, bias)?;
    let sig_part = g.slice(z, 0, 2 * h)?;
    let sig_part = g.sigmoid(sig_part);
    let i = g.slice(sig_part, 0, h)?;
    let f = g.slice(sig_part, h, h)?;
    let cand = g.slice(z, 2 * h, h)?;
    let cand = g.tanh(cand);
    let o = g.slice(z, 3 * h, h)?;
    let o = g.sigmoid(o);
    let keep = g.mul(f, state.c)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(LstmState { h, c })
}

/// Runs an LSTM over the rows of `xs` (`[t, input]`). Returned hidden states
/// are aligned with input positions regardless of direction.
pub fn lstm_sequence(g: &mut Graph, p: &LstmParams, xs: Var, reverse: bool) -> Result<Vec<Var>> {
    let t = g.shape(xs)[0];
    let w_x = g.param(p.w_x);
    let projected = g.matmul(xs, w_x)?;
    let mut state = LstmState::zeros(g, p.hidden);
    let mut out = vec![state.h; t];
    let order: Vec<usize> = if reverse { (0..t).rev().collect() } else { (0..t).collect() };
    for step in order {
        let xw = g.row(projected, step)?;
        state = lstm_step_projected(g, p, xw, state)?;
        out[step] = state.h;
    }
    Ok(out)
}

/// Bidirectional LSTM; row `i` of the result is `[forward_i, backward_i]`,
/// so the output width is twice the hidden size.
pub fn bilstm(g: &mut Graph, fwd: &LstmParams, bwd: &LstmParams, xs: Var) -> Result<Var> {
    let f = lstm_sequence(g, fwd, xs, false)?;
    let b = lstm_sequence(g, bwd, xs, true)?;
    let rows = f
        .into_iter()
        .zip(b)
        .map(|(hf, hb)| g.concat(&[hf, hb]))
        .collect::<Result<Vec<_>>>()?;
    g.stack_rows(&rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GruParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_x: store.add_xavier(format!("{prefix}.w_x"), &[input, 3 * hidden], rng),
            w_h: store.add_xavier(format!("{prefix}.w_h"), &[hidden, 3 * hidden], rng),
            bias: store.add_zeros(format!("{prefix}.bias"), &[3 * hidden]),
            input,
            hidden,
        }
    }

    pub fn lookup(store: &ParamStore, prefix: &str, input: usize, hidden: usize) -> Option<Self> {
        Some(Self {
            w_x: store.find(&format!("{prefix}.w_x"))?,
            w_h: store.find(&format!("{prefix}.w_h"))?,
            bias: store.find(&format!("{prefix}.bias"))?,
            input,
            hidden,
        })
    }
}

/// One GRU step: reset r and update z gates, candidate
/// n = tanh(W_n x + b_n + r ⊙ U_n h), new state h' = n + z ⊙ (h − n).
pub fn gru_cell(g: &mut Graph, p: &GruParams, x: Var, h_prev: Var) -> Result<Var> {
    let h = p.hidden;
    let w_x = g.param(p.w_x);
    let w_h = g.param(p.w_h);
    let bias = g.param(p.bias);
    let xw = g.matmul(x, w_x)?;
    let xw = g.add(xw, bias)?;
    let hw = g.matmul(h_prev, w_h)?;
    let x_rz = g.slice(xw, 0, 2 * h)?;
    let h_rz = g.slice(hw, 0, 2 * h)?;
    let rz = g.add(x_rz, h_rz)?;
    let rz = g.sigmoid(rz);
    let r = g.slice(rz, 0, h)?;
    let z = g.slice(rz, h, h)?;
    let x_n = g.slice(xw, 2 * h, h)?;
    let h_n = g.slice(hw, 2 * h, h)?;
    let gated = g.mul(r, h_n)?;
    let n = g.add(x_n, gated)?;
    let n = g.tanh(n);
    let diff = g.sub(h_prev, n)?;
    let upd = g.mul(z, diff)?;
    g.add(n, upd)
}

/// Final states of a forward and a backward GRU over `xs`, concatenated.
pub fn bigru_final(g: &mut Graph, fwd: &GruParams, bwd: &GruParams, xs: &[Var]) -> Result<Var> {
    let mut hf = g.constant(Tensor::zeros(&[fwd.hidden]));
    for &x in xs {
        hf = gru_cell(g, fwd, x, hf)?;
    }
    let mut hb = g.constant(Tensor::zeros(&[bwd.hidden]));
    for &x in xs.iter().rev() {
        hb = gru_cell(g, bwd, x, hb)?;
    }
    g.concat(&[hf, hb])
}

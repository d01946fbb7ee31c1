//! Neural building blocks recorded on a [`Tape`]: affine layers, two-layer
//! MLPs, GRU cells and scaled dot-product attention.
//!
//! Blocks only hold [`ParamId`]s; the values live in a [`ParamStore`] and are
//! bound to a tape once per forward pass.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::{Result, Tape, TensorError, Var};

fn width_check(tape: &Tape, x: Var, expected: usize, op: &'static str) -> Result<()> {
    let shape = tape.shape(x);
    if shape.last() != Some(&expected) {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: shape.to_vec(),
            rhs: [expected].to_vec(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Elu,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Elu => tape.elu(x),
            Activation::Identity => x,
        }
    }
}

/// `y = x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        bias: bool,
        rng: &mut R,
    ) -> Self {
        let weight = store.glorot(format!("{name}.W"), in_dim, out_dim, rng);
        let bias = bias.then(|| store.zeros(format!("{name}.b"), &[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        width_check(tape, x, self.in_dim, "linear")?;
        let y = tape.matmul(x, p[self.weight])?;
        match self.bias {
            Some(b) => tape.add(y, p[b]),
            None => Ok(y),
        }
    }
}

/// Two affine layers with an activation between them and an optional final one.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: (usize, usize, usize),
        final_elu: bool,
        rng: &mut R,
    ) -> Self {
        let (input, hidden, output) = dims;
        Self {
            first: Linear::new(store, &format!("{name}.1"), input, hidden, true, rng),
            second: Linear::new(store, &format!("{name}.2"), hidden, output, true, rng),
            hidden_activation: Activation::Elu,
            output_activation: if final_elu {
                Activation::Elu
            } else {
                Activation::Identity
            },
        }
    }

    pub fn in_dim(&self) -> usize {
        self.first.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.second.out_dim
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let h = self.first.forward(tape, p, x)?;
        let h = self.hidden_activation.apply(tape, h);
        let y = self.second.forward(tape, p, h)?;
        Ok(self.output_activation.apply(tape, y))
    }
}

/// Gated recurrent unit:
///
/// ```text
/// z  = σ(x W_z + h U_z + b_z)
/// r  = σ(x W_r + h U_r + b_r)
/// h̃  = tanh(x W_h + (r ⊙ h) U_h + b_h)
/// h' = (1 − z) ⊙ h̃ + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut w = |g: &str| store.glorot(format!("{name}.W_{g}"), input_dim, hidden_dim, rng);
        let (w_z, w_r, w_h) = (w("z"), w("r"), w("h"));
        let mut u = |g: &str| store.glorot(format!("{name}.U_{g}"), hidden_dim, hidden_dim, rng);
        let (u_z, u_r, u_h) = (u("z"), u("r"), u("h"));
        let mut b = |g: &str| store.zeros(format!("{name}.b_{g}"), &[hidden_dim]);
        let (b_z, b_r, b_h) = (b("z"), b("r"), b("h"));
        Self {
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
            input_dim,
            hidden_dim,
        }
    }

    fn gate(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var, w: ParamId, u: ParamId, b: ParamId) -> Result<Var> {
        let xw = tape.matmul(x, p[w])?;
        let hu = tape.matmul(h, p[u])?;
        let s = tape.add(xw, hu)?;
        tape.add(s, p[b])
    }

    /// One update for a batch of rows: `x: [rows, input]`, `h: [rows, hidden]`.
    pub fn step(&self, tape: &mut Tape, p: &Bound, x: Var, h: Var) -> Result<Var> {
        width_check(tape, x, self.input_dim, "gru_step")?;
        width_check(tape, h, self.hidden_dim, "gru_step")?;
        let z = self.gate(tape, p, x, h, self.w_z, self.u_z, self.b_z)?;
        let z = tape.sigmoid(z);
        let r = self.gate(tape, p, x, h, self.w_r, self.u_r, self.b_r)?;
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h)?;
        let cand = self.gate(tape, p, x, rh, self.w_h, self.u_h, self.b_h)?;
        let cand = tape.tanh(cand);
        // (1 - z) h̃ + z h == h̃ + z (h - h̃)
        let diff = tape.sub(h, cand)?;
        let gated = tape.mul(z, diff)?;
        tape.add(cand, gated)
    }

    /// Runs the cell over `inputs` from a zero hidden state; returns every hidden state.
    pub fn run(&self, tape: &mut Tape, p: &Bound, inputs: &[Var]) -> Result<Vec<Var>> {
        let Some(&first) = inputs.first() else {
            return Ok(Vec::new());
        };
        let rows = tape.shape(first)[0];
        let mut h = tape.zeros(&[rows, self.hidden_dim]);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            h = self.step(tape, p, x, h)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// Scaled dot-product attention, `softmax(Q Kᵀ / sqrt(d_k)) V`, batched over groups.
///
/// `queries: [g, lq, d_k]`, `keys: [g, lk, d_k]`, `values: [g, lk, d_v]`.
pub fn attention(tape: &mut Tape, queries: Var, keys: Var, values: Var) -> Result<Var> {
    let (qs, ks, vs) = (tape.shape(queries), tape.shape(keys), tape.shape(values));
    if ks.len() == 3 && ks[1] == 0 {
        return Err(TensorError::Invalid {
            op: "attention",
            reason: "empty key set",
        });
    }
    if qs.len() != 3 || ks.len() != 3 || vs.len() != 3 || ks[1] != vs[1] || qs[2] != ks[2] {
        return Err(TensorError::ShapeMismatch {
            op: "attention",
            lhs: qs.to_vec(),
            rhs: ks.to_vec(),
        });
    }
    let d_k = qs[2];
    let scores = tape.batch_matmul(queries, keys, true)?;
    let scores = tape.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = tape.softmax(scores)?;
    tape.batch_matmul(weights, values, false)
}

/// Self-attention with learned query/key/value projections (no biases).
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
}

impl AttentionBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        key_dim: usize,
        value_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            query: Linear::new(store, &format!("{name}.q"), in_dim, key_dim, false, rng),
            key: Linear::new(store, &format!("{name}.k"), in_dim, key_dim, false, rng),
            value: Linear::new(store, &format!("{name}.v"), in_dim, value_dim, false, rng),
        }
    }

    /// Self-attention within each group of `x: [groups * len, in]` laid out group-major.
    pub fn forward_grouped(&self, tape: &mut Tape, p: &Bound, x: Var, groups: usize, len: usize) -> Result<Var> {
        let q = self.query.forward(tape, p, x)?;
        let k = self.key.forward(tape, p, x)?;
        let v = self.value.forward(tape, p, x)?;
        let dk = self.query.out_dim;
        let dv = self.value.out_dim;
        let q = tape.reshape(q, &[groups, len, dk])?;
        let k = tape.reshape(k, &[groups, len, dk])?;
        let v = tape.reshape(v, &[groups, len, dv])?;
        let ctx = attention(tape, q, k, v)?;
        tape.reshape(ctx, &[groups * len, dv])
    }
}

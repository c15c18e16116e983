//! GRU cells, additive attention and affine maps over [`Graph`] nodes.
//!
//! Layers only hold parameter names; values are pulled from the graph's
//! store on first use.

use rand::Rng;

use crate::autodiff::{Graph, ParameterStore, Partition, Tensor, Var};
use crate::error::Result;

use super::batch::Padded;

fn name(prefix: &str, leaf: &str) -> String {
    format!("{prefix}.{leaf}")
}

/// Creates parameters in one partition: weights uniform in `[-scale, scale]`,
/// biases zero.
pub struct Registrar<'a, R: Rng> {
    pub store: &'a mut ParameterStore,
    pub rng: &'a mut R,
    pub partition: Partition,
    pub scale: f64,
}

impl<R: Rng> Registrar<'_, R> {
    pub fn weight(&mut self, name: String, rows: usize, cols: usize) -> Result<()> {
        self.store
            .insert_uniform(name, self.partition, rows, cols, self.scale, self.rng)
    }

    pub fn bias(&mut self, name: String, cols: usize) -> Result<()> {
        self.store.insert(name, self.partition, Tensor::zeros(1, cols))
    }
}

#[derive(Clone, Debug)]
pub struct Affine {
    w: String,
    b: String,
}

impl Affine {
    pub fn new(prefix: &str) -> Self {
        Affine {
            w: name(prefix, "w"),
            b: name(prefix, "b"),
        }
    }

    pub fn register(reg: &mut Registrar<'_, impl Rng>, prefix: &str, input: usize, output: usize) -> Result<()> {
        reg.weight(name(prefix, "w"), input, output)?;
        reg.bias(name(prefix, "b"), output)
    }

    pub fn apply(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(&self.w)?;
        let b = g.param(&self.b)?;
        let xw = g.matmul(x, w)?;
        g.add(xw, b)
    }
}

/// Single GRU cell: `z, r = sigma(..)`, `n = tanh(W_n x + b_n + U_n (r * h))`,
/// `h' = (1 - z) * n + z * h`.
#[derive(Clone, Debug)]
pub struct Gru {
    w_x: String,
    u_zr: String,
    u_n: String,
    b: String,
    hidden: usize,
}

impl Gru {
    pub fn new(prefix: &str, hidden: usize) -> Self {
        Gru {
            w_x: name(prefix, "w_x"),
            u_zr: name(prefix, "u_zr"),
            u_n: name(prefix, "u_n"),
            b: name(prefix, "b"),
            hidden,
        }
    }

    pub fn register(reg: &mut Registrar<'_, impl Rng>, prefix: &str, input: usize, hidden: usize) -> Result<()> {
        reg.weight(name(prefix, "w_x"), input, 3 * hidden)?;
        reg.weight(name(prefix, "u_zr"), hidden, 2 * hidden)?;
        reg.weight(name(prefix, "u_n"), hidden, hidden)?;
        reg.bias(name(prefix, "b"), 3 * hidden)
    }

    /// `x W_x + b` for any number of input rows; feed row blocks to [`Gru::step`].
    pub fn project(&self, g: &mut Graph<'_>, x: Var) -> Result<Var> {
        let w = g.param(&self.w_x)?;
        let b = g.param(&self.b)?;
        let xw = g.matmul(x, w)?;
        g.add(xw, b)
    }

    pub fn step(&self, g: &mut Graph<'_>, gx: Var, h: Var) -> Result<Var> {
        let hd = self.hidden;
        let u_zr = g.param(&self.u_zr)?;
        let u_n = g.param(&self.u_n)?;
        let gx_zr = g.slice(gx, 1, 0, 2 * hd)?;
        let gx_n = g.slice(gx, 1, 2 * hd, hd)?;
        let gh = g.matmul(h, u_zr)?;
        let pre = g.add(gx_zr, gh)?;
        let zr = g.sigmoid(pre);
        let z = g.slice(zr, 1, 0, hd)?;
        let r = g.slice(zr, 1, hd, hd)?;
        let rh = g.mul(r, h)?;
        let rhu = g.matmul(rh, u_n)?;
        let pre_n = g.add(gx_n, rhu)?;
        let n = g.tanh(pre_n);
        let diff = g.sub(h, n)?;
        let zd = g.mul(z, diff)?;
        g.add(n, zd)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }
}

/// Keeps `old` for sentences that have ended before step `t`. Exact: active
/// rows equal `new` bit for bit, inactive rows equal `old`.
pub fn keep_finished(g: &mut Graph<'_>, new: Var, old: Var, lens: &Padded, t: usize) -> Result<Var> {
    if lens.full(t) {
        return Ok(new);
    }
    let m = lens.step_mask(t);
    let inv = m.map(|x| 1.0 - x);
    let m = g.constant(m);
    let inv = g.constant(inv);
    let a = g.mul(new, m)?;
    let b = g.mul(old, inv)?;
    g.add(a, b)
}

/// Additive attention `v^T tanh(q + U m_j + b)` over a padded memory.
#[derive(Clone, Debug)]
pub struct Attention {
    w_q: String,
    u: String,
    b: String,
    v: String,
}

/// Attention memory with precomputed keys. `values` is `[B * J, D]`
/// batch-major, `bias` is `[B, J]`.
#[derive(Clone, Copy, Debug)]
pub struct Memory {
    pub values: Var,
    pub keys: Var,
    pub bias: Var,
    pub batch: usize,
    pub len: usize,
}

impl Attention {
    pub fn new(prefix: &str) -> Self {
        Attention {
            w_q: name(prefix, "w_q"),
            u: name(prefix, "u"),
            b: name(prefix, "b"),
            v: name(prefix, "v"),
        }
    }

    pub fn register(
        reg: &mut Registrar<'_, impl Rng>,
        prefix: &str,
        query: usize,
        memory: usize,
        dim: usize,
    ) -> Result<()> {
        reg.weight(name(prefix, "w_q"), query, dim)?;
        reg.weight(name(prefix, "u"), memory, dim)?;
        reg.bias(name(prefix, "b"), dim)?;
        reg.weight(name(prefix, "v"), dim, 1)
    }

    pub fn memory(&self, g: &mut Graph<'_>, values: Var, bias: &Tensor) -> Result<Memory> {
        let [batch, len] = bias.shape();
        let u = g.param(&self.u)?;
        let b = g.param(&self.b)?;
        let vu = g.matmul(values, u)?;
        let keys = g.add(vu, b)?;
        let bias = g.constant(bias.clone());
        Ok(Memory {
            values,
            keys,
            bias,
            batch,
            len,
        })
    }

    /// `concat(parts) W_q`.
    pub fn query(&self, g: &mut Graph<'_>, parts: &[Var]) -> Result<Var> {
        let w = g.param(&self.w_q)?;
        let x = if parts.len() == 1 { parts[0] } else { g.concat(parts, 1)? };
        g.matmul(x, w)
    }

    /// Returns `(weights [B, J], context [B, D])` for a projected query `[B, A]`.
    pub fn attend(&self, g: &mut Graph<'_>, mem: &Memory, query: Var) -> Result<(Var, Var)> {
        let v = g.param(&self.v)?;
        let q = g.repeat_rows(query, mem.len);
        let pre = g.add(q, mem.keys)?;
        let act = g.tanh(pre);
        let scores = g.matmul(act, v)?;
        let scores = g.reshape(scores, mem.batch, mem.len)?;
        let scores = g.add(scores, mem.bias)?;
        let weights = g.softmax(scores)?;
        let context = g.attend_context(weights, mem.values)?;
        Ok((weights, context))
    }
}

/// `[B, 1]` per-sentence sums of a batch-major `[B * T, 1]` column.
pub fn sum_per_sentence(g: &mut Graph<'_>, column: Var, batch: usize, len: usize) -> Result<Var> {
    let m = g.reshape(column, batch, len)?;
    let ones = g.constant(Tensor::filled(len, 1, 1.0));
    g.matmul(m, ones)
}

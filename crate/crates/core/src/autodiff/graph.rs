use std::collections::HashMap;

use super::tensor::gemm;
use super::{Gradients, ParameterStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How the right-hand operand of an elementwise op is expanded.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `1 x n` against `m x n`.
    Row,
    /// `m x 1` against `m x n`.
    Col,
    /// `1 x 1` against anything.
    Scalar,
}

impl Broadcast {
    fn resolve(op: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<Self> {
        if a == b {
            Ok(Broadcast::Same)
        } else if b == [1, 1] {
            Ok(Broadcast::Scalar)
        } else if b[0] == 1 && b[1] == a[1] {
            Ok(Broadcast::Row)
        } else if b[1] == 1 && b[0] == a[0] {
            Ok(Broadcast::Col)
        } else {
            Err(mismatch(op, &[a, b]))
        }
    }

    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Broadcast::Same => r * cols + c,
            Broadcast::Row => c,
            Broadcast::Col => r,
            Broadcast::Scalar => 0,
        }
    }
}

enum Op {
    Leaf,
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    MatMul(Var, Var),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { src: Var, axis: usize, start: usize },
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Embedding { table: Var, ids: Vec<usize> },
    Sum(Var),
    Scale(Var, f64),
    SoftmaxNll { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    RepeatRows { src: Var, times: usize },
    Reshape(Var),
    Interleave(Vec<Var>),
    AttendContext { weights: Var, memory: Var },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

fn mismatch(op: &'static str, shapes: &[[usize; 2]]) -> Error {
    Error::ShapeMismatch {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

/// A define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted and the backward pass is a single reverse sweep.
pub struct Graph<'s> {
    store: Option<&'s ParameterStore>,
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    /// A graph without a parameter store; only constants and variables.
    pub fn detached() -> Graph<'static> {
        Graph {
            store: None,
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    /// A leaf that takes no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf outside the parameter store that still receives a gradient.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// The leaf bound to parameter `name`; repeated calls return the same node.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let store = self
            .store
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))?;
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Leaf, true);
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    fn elementwise(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<(Tensor, Broadcast)> {
        let (va, vb) = (self.value(a), self.value(b));
        let bc = Broadcast::resolve(op, va.shape(), vb.shape())?;
        let [rows, cols] = va.shape();
        let (da, db) = (va.data(), vb.data());
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out.push(f(da[r * cols + c], db[bc.index(r, c, cols)]));
            }
        }
        Ok((Tensor::new(rows, cols, out)?, bc))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, bc) = self.elementwise("add", a, b, |x, y| x + y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::Add(a, b, bc), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, bc) = self.elementwise("sub", a, b, |x, y| x - y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b, bc), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, bc) = self.elementwise("multiply", a, b, |x, y| x * y)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b, bc), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1] != sb[0] {
            return Err(mismatch("matmul", &[sa, sb]));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(m, n, out)?, Op::MatMul(a, b), rg))
    }

    /// Concatenation along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() || axis > 1 {
            return Err(Error::invalid("concat needs at least one input and axis 0 or 1"));
        }
        let shapes: Vec<[usize; 2]> = parts.iter().map(|&p| self.shape(p)).collect();
        let other = 1 - axis;
        if shapes.iter().any(|s| s[other] != shapes[0][other]) {
            return Err(mismatch("concat", &shapes));
        }
        let total: usize = shapes.iter().map(|s| s[axis]).sum();
        let t = if axis == 0 {
            let mut data = Vec::with_capacity(total * shapes[0][1]);
            for &p in parts {
                data.extend_from_slice(self.value(p).data());
            }
            Tensor::new(total, shapes[0][1], data)?
        } else {
            let rows = shapes[0][0];
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for &p in parts {
                    data.extend_from_slice(self.value(p).row_slice(r));
                }
            }
            Tensor::new(rows, total, data)?
        };
        let rg = self.needs(parts);
        Ok(self.push(
            t,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// `len` rows (axis 0) or columns (axis 1) starting at `start`.
    pub fn slice(&mut self, src: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(src);
        if axis > 1 || start + len > s[axis] {
            return Err(Error::ShapeMismatch {
                op: "slice",
                shapes: vec![s.to_vec(), vec![axis, start, len]],
            });
        }
        let v = self.value(src);
        let t = if axis == 0 {
            Tensor::new(len, s[1], v.data()[start * s[1]..(start + len) * s[1]].to_vec())?
        } else {
            let mut data = Vec::with_capacity(s[0] * len);
            for r in 0..s[0] {
                data.extend_from_slice(&v.row_slice(r)[start..start + len]);
            }
            Tensor::new(s[0], len, data)?
        };
        let rg = self.needs(&[src]);
        Ok(self.push(t, Op::Slice { src, axis, start }, rg))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        let rg = self.needs(&[a]);
        self.push(t, Op::Tanh(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        let rg = self.needs(&[a]);
        self.push(t, Op::Sigmoid(a), rg)
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let [rows, cols] = v.shape();
        if cols == 0 {
            return Err(mismatch("softmax", &[v.shape()]));
        }
        let mut data = v.data().to_vec();
        for r in 0..rows {
            softmax_in_place(&mut data[r * cols..(r + 1) * cols]);
        }
        let rg = self.needs(&[a]);
        Ok(self.push(Tensor::new(rows, cols, data)?, Op::Softmax(a), rg))
    }

    /// Rows `ids` of `table`, one output row per id.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let [vocab, dim] = tv.shape();
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(Error::invalid(format!(
                "embedding: id {bad} out of range for table with {vocab} rows"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * dim);
        for &i in ids {
            data.extend_from_slice(tv.row_slice(i));
        }
        let rg = self.needs(&[table]);
        Ok(self.push(
            Tensor::new(ids.len(), dim, data)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        let rg = self.needs(&[a]);
        self.push(t, Op::Sum(a), rg)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a).map(|x| x * factor);
        let rg = self.needs(&[a]);
        self.push(t, Op::Scale(a, factor), rg)
    }

    /// Per-row negative log-likelihood of `targets` under `softmax(logits)`;
    /// output is `rows x 1`.
    pub fn softmax_nll(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let v = self.value(logits);
        let [rows, cols] = v.shape();
        if targets.len() != rows || cols == 0 {
            return Err(Error::ShapeMismatch {
                op: "nll",
                shapes: vec![v.shape().to_vec(), vec![targets.len()]],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::invalid(format!("nll: target {bad} out of range for {cols} classes")));
        }
        let mut probs = v.data().to_vec();
        let mut out = Vec::with_capacity(rows);
        for (r, &target) in targets.iter().enumerate() {
            let row = &mut probs[r * cols..(r + 1) * cols];
            out.push(-log_softmax_at(row, target));
            softmax_in_place(row);
        }
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Tensor::column(out),
            Op::SoftmaxNll {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `[b, a] -> [b * times, a]`, row `b * times + j` copies row `b`.
    pub fn repeat_rows(&mut self, src: Var, times: usize) -> Var {
        let v = self.value(src);
        let [rows, cols] = v.shape();
        let mut data = Vec::with_capacity(rows * times * cols);
        for r in 0..rows {
            for _ in 0..times {
                data.extend_from_slice(v.row_slice(r));
            }
        }
        let t = Tensor::new(rows * times, cols, data).expect("sized above");
        let rg = self.needs(&[src]);
        self.push(t, Op::RepeatRows { src, times }, rg)
    }

    pub fn reshape(&mut self, src: Var, rows: usize, cols: usize) -> Result<Var> {
        let v = self.value(src);
        if v.numel() != rows * cols {
            return Err(mismatch("reshape", &[v.shape(), [rows, cols]]));
        }
        let t = Tensor::new(rows, cols, v.data().to_vec())?;
        let rg = self.needs(&[src]);
        Ok(self.push(t, Op::Reshape(src), rg))
    }

    /// Stacks `steps` (each `[b, d]`) batch-major: row `i * steps.len() + j`
    /// of the result is row `i` of `steps[j]`.
    pub fn interleave(&mut self, steps: &[Var]) -> Result<Var> {
        let first = *steps
            .first()
            .ok_or_else(|| Error::invalid("interleave needs at least one input"))?;
        let [rows, cols] = self.shape(first);
        let shapes: Vec<[usize; 2]> = steps.iter().map(|&s| self.shape(s)).collect();
        if shapes.iter().any(|&s| s != [rows, cols]) {
            return Err(mismatch("interleave", &shapes));
        }
        let n = steps.len();
        let mut data = Vec::with_capacity(rows * n * cols);
        for r in 0..rows {
            for &s in steps {
                data.extend_from_slice(self.value(s).row_slice(r));
            }
        }
        let rg = self.needs(steps);
        Ok(self.push(
            Tensor::new(rows * n, cols, data)?,
            Op::Interleave(steps.to_vec()),
            rg,
        ))
    }

    /// Batched weighted sum: `weights` is `[b, j]`, `memory` is `[b * j, d]`
    /// laid out as by [`Graph::interleave`]; the result is `[b, d]`.
    pub fn attend_context(&mut self, weights: Var, memory: Var) -> Result<Var> {
        let (sw, sm) = (self.shape(weights), self.shape(memory));
        let [b, j] = sw;
        if sm[0] != b * j {
            return Err(mismatch("attend_context", &[sw, sm]));
        }
        let d = sm[1];
        let (w, m) = (self.value(weights).data(), self.value(memory).data());
        let mut out = vec![0.0; b * d];
        for bi in 0..b {
            let acc = &mut out[bi * d..(bi + 1) * d];
            for ji in 0..j {
                let wt = w[bi * j + ji];
                let row = &m[(bi * j + ji) * d..(bi * j + ji + 1) * d];
                for (o, x) in acc.iter_mut().zip(row) {
                    *o += wt * x;
                }
            }
        }
        let rg = self.needs(&[weights, memory]);
        Ok(self.push(
            Tensor::new(b, d, out)?,
            Op::AttendContext { weights, memory },
            rg,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Adjoints> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Adjoints { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Adjoints { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.numel()]))
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let [rows, cols] = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b, bc) | Op::Sub(a, b, bc) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = self.acc(grads, *a) {
                    add_into(ga, g);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for r in 0..rows {
                        for c in 0..cols {
                            gb[bc.index(r, c, cols)] += sign * g[r * cols + c];
                        }
                    }
                }
            }
            Op::Mul(a, b, bc) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..rows {
                        for c in 0..cols {
                            ga[r * cols + c] += g[r * cols + c] * vb[bc.index(r, c, cols)];
                        }
                    }
                }
                if let Some(gb) = self.acc(grads, *b) {
                    for r in 0..rows {
                        for c in 0..cols {
                            let i = r * cols + c;
                            gb[bc.index(r, c, cols)] += g[i] * va[i];
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let k = va.cols();
                if self.nodes[a.0].requires_grad {
                    let ga = self.acc(grads, *a).expect("requires grad");
                    // dA = G * B^T
                    gemm(rows, cols, k, g, false, vb.data(), true, ga, true);
                }
                if let Some(gb) = self.acc(grads, *b) {
                    // dB = A^T * G
                    gemm(k, rows, cols, va.data(), true, g, false, gb, true);
                }
            }
            Op::Concat { parts, axis } => {
                let mut offset = 0;
                for &p in parts {
                    let [pr, pc] = self.shape(p);
                    if let Some(gp) = self.acc(grads, p) {
                        if *axis == 0 {
                            add_into(gp, &g[offset * cols..(offset + pr) * cols]);
                        } else {
                            for r in 0..rows {
                                add_into(
                                    &mut gp[r * pc..(r + 1) * pc],
                                    &g[r * cols + offset..r * cols + offset + pc],
                                );
                            }
                        }
                    }
                    offset += if *axis == 0 { pr } else { pc };
                }
            }
            Op::Slice { src, axis, start } => {
                let src_cols = self.shape(*src)[1];
                if let Some(gs) = self.acc(grads, *src) {
                    if *axis == 0 {
                        add_into(&mut gs[start * src_cols..(start + rows) * src_cols], g);
                    } else {
                        for r in 0..rows {
                            add_into(
                                &mut gs[r * src_cols + start..r * src_cols + start + cols],
                                &g[r * cols..(r + 1) * cols],
                            );
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for i in 0..g.len() {
                        ga[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                if let Some(ga) = self.acc(grads, *a) {
                    for r in 0..rows {
                        let (yr, gr) = (&y[r * cols..(r + 1) * cols], &g[r * cols..(r + 1) * cols]);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for c in 0..cols {
                            ga[r * cols + c] += yr[c] * (gr[c] - dot);
                        }
                    }
                }
            }
            Op::Embedding { table, ids } => {
                if let Some(gt) = self.acc(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut gt[id * cols..(id + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for x in ga.iter_mut() {
                        *x += g[0];
                    }
                }
            }
            Op::Scale(a, factor) => {
                if let Some(ga) = self.acc(grads, *a) {
                    for (x, gi) in ga.iter_mut().zip(g) {
                        *x += factor * gi;
                    }
                }
            }
            Op::SoftmaxNll {
                logits,
                targets,
                probs,
            } => {
                let classes = self.shape(*logits)[1];
                if let Some(gl) = self.acc(grads, *logits) {
                    for (r, &t) in targets.iter().enumerate() {
                        let gr = g[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let row = &mut gl[r * classes..(r + 1) * classes];
                        for (x, p) in row.iter_mut().zip(&probs[r * classes..(r + 1) * classes]) {
                            *x += gr * p;
                        }
                        row[t] -= gr;
                    }
                }
            }
            Op::RepeatRows { src, times } => {
                if let Some(gs) = self.acc(grads, *src) {
                    for r in 0..rows {
                        let s = r / times;
                        add_into(&mut gs[s * cols..(s + 1) * cols], &g[r * cols..(r + 1) * cols]);
                    }
                }
            }
            Op::Reshape(src) => {
                if let Some(gs) = self.acc(grads, *src) {
                    add_into(gs, g);
                }
            }
            Op::Interleave(steps) => {
                let n = steps.len();
                for (j, &s) in steps.iter().enumerate() {
                    if let Some(gs) = self.acc(grads, s) {
                        let batch = rows / n;
                        for b in 0..batch {
                            let r = b * n + j;
                            add_into(&mut gs[b * cols..(b + 1) * cols], &g[r * cols..(r + 1) * cols]);
                        }
                    }
                }
            }
            Op::AttendContext { weights, memory } => {
                let [b, j] = self.shape(*weights);
                let d = cols;
                let (w, m) = (self.value(*weights).data(), self.value(*memory).data());
                if let Some(gw) = self.acc(grads, *weights) {
                    for bi in 0..b {
                        let gr = &g[bi * d..(bi + 1) * d];
                        for ji in 0..j {
                            let row = &m[(bi * j + ji) * d..(bi * j + ji + 1) * d];
                            gw[bi * j + ji] += row.iter().zip(gr).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                }
                if let Some(gm) = self.acc(grads, *memory) {
                    for bi in 0..b {
                        let gr = &g[bi * d..(bi + 1) * d];
                        for ji in 0..j {
                            let wt = w[bi * j + ji];
                            let row = &mut gm[(bi * j + ji) * d..(bi * j + ji + 1) * d];
                            for (x, y) in row.iter_mut().zip(gr) {
                                *x += wt * y;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Gradients for every parameter of the bound store; parameters the loss
    /// never touched get zero tensors.
    pub fn param_gradients(&self, adjoints: &Adjoints) -> Result<Gradients> {
        let store = self
            .store
            .ok_or_else(|| Error::invalid("graph has no parameter store"))?;
        let mut out = Gradients::zeros_like(store);
        for (name, &v) in &self.params {
            if let Some(g) = adjoints.get(self, v) {
                out.insert(name.clone(), g);
            }
        }
        Ok(out)
    }
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Adjoints {
    grads: Vec<Option<Vec<f64>>>,
}

impl Adjoints {
    /// Gradient of the loss with respect to `v`, or `None` when `v` does not
    /// influence the loss.
    pub fn get(&self, graph: &Graph<'_>, v: Var) -> Option<Tensor> {
        let [r, c] = graph.shape(v);
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(r, c, g.clone()).expect("gradient sized like value"))
    }

    /// Like [`Adjoints::get`] but zero-filled when the loss does not depend on `v`.
    pub fn get_or_zero(&self, graph: &Graph<'_>, v: Var) -> Tensor {
        let [r, c] = graph.shape(v);
        self.get(graph, v).unwrap_or_else(|| Tensor::zeros(r, c))
    }
}

/// Gradient map of `loss` over every parameter in `store`.
pub fn backward(graph: &Graph<'_>, loss: Var, store: &ParameterStore) -> Result<Gradients> {
    let adj = graph.backward(loss)?;
    let mut grads = graph.param_gradients(&adj)?;
    // The graph may be bound to a clone of `store`; report on `store`'s names.
    if grads.len() != store.len() {
        let mut full = Gradients::zeros_like(store);
        for (n, g) in grads.iter_mut() {
            if let Some(slot) = full.get_mut(n) {
                *slot = g.clone();
            }
        }
        grads = full;
    }
    Ok(grads)
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

/// `log softmax(row)[target]` without modifying `row`.
pub(crate) fn log_softmax_at(row: &[f64], target: usize) -> f64 {
    row[target] - log_sum_exp(row)
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Row-wise log-softmax of a plain tensor, outside any graph.
pub fn log_softmax_rows(t: &Tensor) -> Tensor {
    let cols = t.cols();
    let mut data = t.data().to_vec();
    for row in data.chunks_mut(cols) {
        let lse = log_sum_exp(row);
        for x in row.iter_mut() {
            *x -= lse;
        }
    }
    Tensor::new(t.rows(), cols, data).expect("same shape")
}

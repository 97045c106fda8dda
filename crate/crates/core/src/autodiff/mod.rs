//! Tape-based reverse-mode automatic differentiation over small dense
//! tensors.
//!
//! Operations are recorded on a [`Tape`] as they are evaluated; calling
//! [`Tape::backward`] on a scalar walks the tape in reverse and accumulates
//! gradients into every node that requires them. Values are `f64`, stored
//! row-major.
//!
//! Shape table:
//!
//! | op                 | inputs                          | output        |
//! |--------------------|---------------------------------|---------------|
//! | `matmul`           | `[m,k]·[k,n]`                   | `[m,n]`       |
//! | `matmul`           | `[m,k]·[k]`                     | `[m]`         |
//! | `matmul`           | `[k]·[k,n]`                     | `[n]`         |
//! | `add`/`sub`/`mul`  | equal shapes                    | same          |
//! | `dot`              | `[n]`, `[n]`                    | scalar        |
//! | `concat`           | `[n_1]`, …, `[n_k]`             | `[Σ n_i]`     |
//! | `concat_cols`      | `[t,a]`, `[t,b]`                | `[t,a+b]`     |
//! | `stack_rows`       | k × `[d]`                       | `[k,d]`       |
//! | `row`              | `[t,d]`, index                  | `[d]`         |
//! | `slice`            | `[n]`, start, len               | `[len]`       |
//! | `mean_pool`        | `[t,d]`                         | `[d]`         |
//! | `softmax`          | `[n]` or `[t,n]` (row-wise)     | same          |
//! | `embedding_lookup` | `[v,d]`, ids                    | `[len(ids),d]`|
//! | `cross_entropy`    | probabilities `[k]`, target     | scalar        |
//! | `sum`              | scalars                         | scalar        |

pub mod check;
mod params;
pub mod rnn;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use params::{Checkpoint, Graph, NamedTensor, ParamId, ParamStore};

/// Probabilities are clamped to this before taking logarithms.
pub const CE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("index {index} out of range for embedding table with {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this tape; call reset_grads first")]
    AlreadyBackpropagated,
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

fn shape_err(op: &'static str, detail: impl Into<String>) -> AutodiffError {
    AutodiffError::Shape {
        op,
        detail: detail.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(shape_err(
                "tensor",
                format!("shape {shape:?} needs {expected} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn scalar(x: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![x],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1 && self.shape.len() <= 1
    }

    /// Row `i` of a matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Dot(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    ConcatCols(Var, Var),
    StackRows(Vec<Var>),
    Row(Var, usize),
    Slice(Var, usize),
    MeanPool(Var),
    EmbeddingLookup(Var, Vec<usize>),
    CrossEntropy(Var, usize),
    Sum(Vec<Var>),
}

struct Node {
    value: Arc<Tensor>,
    requires_grad: bool,
    op: Op,
}

/// Gradient of a node, dense or as touched rows of an embedding table.
#[derive(Clone, Debug, PartialEq)]
pub enum Gradient {
    Dense(Tensor),
    Rows {
        shape: Vec<usize>,
        rows: Vec<(usize, Vec<f64>)>,
    },
}

impl Gradient {
    pub fn to_dense(&self) -> Tensor {
        match self {
            Gradient::Dense(t) => t.clone(),
            Gradient::Rows { shape, rows } => {
                let mut t = Tensor::zeros(shape);
                let cols = shape[1];
                for (r, g) in rows {
                    t.data[r * cols..(r + 1) * cols].copy_from_slice(g);
                }
                t
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Gradient::Dense(t) => t.is_finite(),
            Gradient::Rows { rows, .. } => rows.iter().all(|(_, g)| g.iter().all(|x| x.is_finite())),
        }
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    sparse: BTreeMap<usize, BTreeMap<usize, Vec<f64>>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.push_shared(Arc::new(value), op, requires_grad)
    }

    fn push_shared(&mut self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input. Gradients are only tracked when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn leaf_shared(&mut self, value: Arc<Tensor>, requires_grad: bool) -> Var {
        self.push_shared(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let out = match (va.shape(), vb.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let arow = &va.data[i * k..(i + 1) * k];
                    let orow = &mut out[i * n..(i + 1) * n];
                    for (p, &x) in arow.iter().enumerate() {
                        if x == 0.0 {
                            continue;
                        }
                        let brow = &vb.data[p * n..(p + 1) * n];
                        for (o, &y) in orow.iter_mut().zip(brow) {
                            *o += x * y;
                        }
                    }
                }
                Tensor::new(vec![m, n], out)?
            }
            (&[m, k], &[k2]) if k == k2 => {
                let out = (0..m)
                    .map(|i| {
                        va.data[i * k..(i + 1) * k]
                            .iter()
                            .zip(&vb.data)
                            .map(|(x, y)| x * y)
                            .sum()
                    })
                    .collect();
                Tensor::vector(out)
            }
            (&[k], &[k2, n]) if k == k2 => {
                let mut out = vec![0.0; n];
                for (p, &x) in va.data.iter().enumerate() {
                    let brow = &vb.data[p * n..(p + 1) * n];
                    for (o, &y) in out.iter_mut().zip(brow) {
                        *o += x * y;
                    }
                }
                Tensor::vector(out)
            }
            (sa, sb) => return Err(shape_err("matmul", format!("{sa:?} x {sb:?}"))),
        };
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(name, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape.clone(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let va = self.value(a);
        let out = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().map(|x| x * c).collect(),
        };
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape().len() != 1 || va.shape() != vb.shape() {
            return Err(shape_err("dot", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let s = va.data.iter().zip(&vb.data).map(|(x, y)| x * y).sum();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b), rg))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let va = self.value(a);
        let out = Tensor {
            shape: va.shape.clone(),
            data: va.data.iter().map(|&x| f(x)).collect(),
        };
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), sigmoid)
    }

    /// Softmax of a vector, or of each row of a matrix.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let cols = match va.shape() {
            [n] if *n > 0 => *n,
            [_, n] if *n > 0 => *n,
            s => return Err(shape_err("softmax", format!("{s:?}"))),
        };
        let mut data = va.data.clone();
        for row in data.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let out = Tensor {
            shape: va.shape.clone(),
            data,
        };
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 1 {
                return Err(shape_err("concat", format!("part has shape {:?}", v.shape())));
            }
            data.extend_from_slice(&v.data);
        }
        let rg = self.rg(parts);
        Ok(self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (t, ca, cb) = match (va.shape(), vb.shape()) {
            (&[t, ca], &[t2, cb]) if t == t2 => (t, ca, cb),
            (sa, sb) => return Err(shape_err("concat_cols", format!("{sa:?} vs {sb:?}"))),
        };
        let mut data = Vec::with_capacity(t * (ca + cb));
        for i in 0..t {
            data.extend_from_slice(&va.data[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&vb.data[i * cb..(i + 1) * cb]);
        }
        let out = Tensor::new(vec![t, ca + cb], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        let Some(&first) = rows.first() else {
            return Err(shape_err("stack_rows", "no rows"));
        };
        let d = self.value(first).len();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            let v = self.value(r);
            if v.shape() != [d] {
                return Err(shape_err("stack_rows", format!("row shape {:?}, want [{d}]", v.shape())));
            }
            data.extend_from_slice(&v.data);
        }
        let out = Tensor::new(vec![rows.len(), d], data)?;
        let rg = self.rg(rows);
        Ok(self.push(out, Op::StackRows(rows.to_vec()), rg))
    }

    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let vm = self.value(m);
        match vm.shape() {
            &[t, _] if i < t => {}
            s => return Err(shape_err("row", format!("row {i} of {s:?}"))),
        }
        let out = Tensor::vector(vm.row(i).to_vec());
        let rg = self.rg(&[m]);
        Ok(self.push(out, Op::Row(m, i), rg))
    }

    pub fn slice(&mut self, v: Var, start: usize, len: usize) -> Result<Var> {
        let vv = self.value(v);
        match vv.shape() {
            &[n] if start + len <= n => {}
            s => return Err(shape_err("slice", format!("[{start}..{}] of {s:?}", start + len))),
        }
        let out = Tensor::vector(vv.data[start..start + len].to_vec());
        let rg = self.rg(&[v]);
        Ok(self.push(out, Op::Slice(v, start), rg))
    }

    /// Mean over the rows of a matrix.
    pub fn mean_pool(&mut self, m: Var) -> Result<Var> {
        let vm = self.value(m);
        let (t, d) = match vm.shape() {
            &[t, d] if t > 0 => (t, d),
            s => return Err(shape_err("mean_pool", format!("{s:?}"))),
        };
        let mut out = vec![0.0; d];
        for i in 0..t {
            for (o, x) in out.iter_mut().zip(vm.row(i)) {
                *o += x;
            }
        }
        for o in out.iter_mut() {
            *o /= t as f64;
        }
        let rg = self.rg(&[m]);
        Ok(self.push(Tensor::vector(out), Op::MeanPool(m), rg))
    }

    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let vt = self.value(table);
        let (rows, d) = match vt.shape() {
            &[r, d] => (r, d),
            s => return Err(shape_err("embedding_lookup", format!("table shape {s:?}"))),
        };
        if ids.is_empty() {
            return Err(shape_err("embedding_lookup", "no ids"));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(AutodiffError::IndexOutOfRange { index: id, rows });
            }
            data.extend_from_slice(vt.row(id));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(out, Op::EmbeddingLookup(table, ids.to_vec()), rg))
    }

    /// Negative log-probability of `target`, with probabilities clamped at
    /// [`CE_EPSILON`]. NaN probabilities give a NaN loss.
    pub fn cross_entropy(&mut self, probs: Var, target: usize) -> Result<Var> {
        let vp = self.value(probs);
        match vp.shape() {
            &[k] if target < k => {}
            s => return Err(shape_err("cross_entropy", format!("target {target} for {s:?}"))),
        }
        let p = vp.data[target];
        let loss = if p.is_nan() { f64::NAN } else { -p.max(CE_EPSILON).ln() };
        let rg = self.rg(&[probs]);
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy(probs, target), rg))
    }

    pub fn sum(&mut self, scalars: &[Var]) -> Result<Var> {
        let mut s = 0.0;
        for &v in scalars {
            let t = self.value(v);
            if !t.is_scalar() {
                return Err(shape_err("sum", format!("non-scalar {:?}", t.shape())));
            }
            s += t.data[0];
        }
        let rg = self.rg(scalars);
        Ok(self.push(Tensor::scalar(s), Op::Sum(scalars.to_vec()), rg))
    }

    /// Clears accumulated gradients so `backward` may run again.
    pub fn reset_grads(&mut self) {
        self.grads.clear();
        self.sparse.clear();
        self.backward_done = false;
    }

    /// Dense gradient of `v` after [`Tape::backward`]; `None` when no
    /// gradient reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.gradient(v).map(|g| g.to_dense())
    }

    pub fn gradient(&self, v: Var) -> Option<Gradient> {
        let node = self.nodes.get(v.0)?;
        if !node.requires_grad {
            return None;
        }
        let shape = node.value.shape().to_vec();
        match (self.grads.get(v.0).and_then(Option::as_ref), self.sparse.get(&v.0)) {
            (Some(dense), None) => Some(Gradient::Dense(Tensor {
                shape,
                data: dense.clone(),
            })),
            (None, Some(rows)) => Some(Gradient::Rows {
                shape,
                rows: rows.iter().map(|(&r, g)| (r, g.clone())).collect(),
            }),
            (Some(dense), Some(rows)) => {
                let mut t = Tensor {
                    shape,
                    data: dense.clone(),
                };
                let cols = t.shape[1];
                for (&r, g) in rows {
                    for (o, x) in t.data[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                        *o += x;
                    }
                }
                Some(Gradient::Dense(t))
            }
            (None, None) => None,
        }
    }

    /// Backpropagates from a scalar `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(AutodiffError::AlreadyBackpropagated);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NotScalar(lv.shape().to_vec()));
        }
        self.backward_done = true;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut sparse = std::mem::take(&mut self.sparse);
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let out = &node.value;
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    match (va.shape(), vb.shape()) {
                        (&[m, k], &[_, nn]) => {
                            if self.requires_grad(*a) {
                                let mut da = vec![0.0; m * k];
                                for i in 0..m {
                                    let grow = &g[i * nn..(i + 1) * nn];
                                    for p in 0..k {
                                        let brow = &vb.data[p * nn..(p + 1) * nn];
                                        da[i * k + p] =
                                            grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                                    }
                                }
                                accumulate(&mut grads, *a, &da);
                            }
                            if self.requires_grad(*b) {
                                let mut db = vec![0.0; k * nn];
                                for i in 0..m {
                                    let grow = &g[i * nn..(i + 1) * nn];
                                    for p in 0..k {
                                        let x = va.data[i * k + p];
                                        if x == 0.0 {
                                            continue;
                                        }
                                        for (o, y) in db[p * nn..(p + 1) * nn].iter_mut().zip(grow) {
                                            *o += x * y;
                                        }
                                    }
                                }
                                accumulate(&mut grads, *b, &db);
                            }
                        }
                        (&[m, k], &[_]) => {
                            if self.requires_grad(*a) {
                                let mut da = vec![0.0; m * k];
                                for i in 0..m {
                                    for p in 0..k {
                                        da[i * k + p] = g[i] * vb.data[p];
                                    }
                                }
                                accumulate(&mut grads, *a, &da);
                            }
                            if self.requires_grad(*b) {
                                let mut db = vec![0.0; k];
                                for (row, gi) in va.data.chunks(k).zip(g.iter()).take(m) {
                                    for (d, x) in db.iter_mut().zip(row) {
                                        *d += x * gi;
                                    }
                                }
                                accumulate(&mut grads, *b, &db);
                            }
                        }
                        (&[k], &[_, nn]) => {
                            if self.requires_grad(*a) {
                                let da: Vec<f64> = (0..k)
                                    .map(|p| {
                                        vb.data[p * nn..(p + 1) * nn]
                                            .iter()
                                            .zip(&g)
                                            .map(|(x, y)| x * y)
                                            .sum()
                                    })
                                    .collect();
                                accumulate(&mut grads, *a, &da);
                            }
                            if self.requires_grad(*b) {
                                let mut db = vec![0.0; k * nn];
                                for p in 0..k {
                                    let x = va.data[p];
                                    for (o, y) in db[p * nn..(p + 1) * nn].iter_mut().zip(&g) {
                                        *o = x * y;
                                    }
                                }
                                accumulate(&mut grads, *b, &db);
                            }
                        }
                        _ => unreachable!("matmul shapes checked on forward"),
                    }
                }
                Op::Add(a, b) => {
                    if self.requires_grad(*a) {
                        accumulate(&mut grads, *a, &g);
                    }
                    if self.requires_grad(*b) {
                        accumulate(&mut grads, *b, &g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.requires_grad(*a) {
                        accumulate(&mut grads, *a, &g);
                    }
                    if self.requires_grad(*b) {
                        let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                        accumulate(&mut grads, *b, &neg);
                    }
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.requires_grad(*a) {
                        let da: Vec<f64> = g.iter().zip(&vb.data).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *a, &da);
                    }
                    if self.requires_grad(*b) {
                        let db: Vec<f64> = g.iter().zip(&va.data).map(|(x, y)| x * y).collect();
                        accumulate(&mut grads, *b, &db);
                    }
                }
                Op::Scale(a, c) => {
                    let da: Vec<f64> = g.iter().map(|x| x * c).collect();
                    accumulate(&mut grads, *a, &da);
                }
                Op::Dot(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    if self.requires_grad(*a) {
                        let da: Vec<f64> = vb.data.iter().map(|y| g[0] * y).collect();
                        accumulate(&mut grads, *a, &da);
                    }
                    if self.requires_grad(*b) {
                        let db: Vec<f64> = va.data.iter().map(|x| g[0] * x).collect();
                        accumulate(&mut grads, *b, &db);
                    }
                }
                Op::Tanh(a) => {
                    let da: Vec<f64> = g.iter().zip(&out.data).map(|(x, y)| x * (1.0 - y * y)).collect();
                    accumulate(&mut grads, *a, &da);
                }
                Op::Sigmoid(a) => {
                    let da: Vec<f64> = g.iter().zip(&out.data).map(|(x, y)| x * y * (1.0 - y)).collect();
                    accumulate(&mut grads, *a, &da);
                }
                Op::Softmax(a) => {
                    let cols = *out.shape().last().unwrap();
                    let mut da = vec![0.0; g.len()];
                    for ((dr, gr), yr) in da
                        .chunks_mut(cols)
                        .zip(g.chunks(cols))
                        .zip(out.data.chunks(cols))
                    {
                        let s: f64 = gr.iter().zip(yr).map(|(x, y)| x * y).sum();
                        for ((d, x), y) in dr.iter_mut().zip(gr).zip(yr) {
                            *d = y * (x - s);
                        }
                    }
                    accumulate(&mut grads, *a, &da);
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let len = self.value(p).len();
                        if self.requires_grad(p) {
                            accumulate(&mut grads, p, &g[offset..offset + len]);
                        }
                        offset += len;
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).shape()[1];
                    let cb = self.value(*b).shape()[1];
                    let t = out.shape()[0];
                    if self.requires_grad(*a) {
                        let mut da = Vec::with_capacity(t * ca);
                        for i in 0..t {
                            da.extend_from_slice(&g[i * (ca + cb)..i * (ca + cb) + ca]);
                        }
                        accumulate(&mut grads, *a, &da);
                    }
                    if self.requires_grad(*b) {
                        let mut db = Vec::with_capacity(t * cb);
                        for i in 0..t {
                            db.extend_from_slice(&g[i * (ca + cb) + ca..(i + 1) * (ca + cb)]);
                        }
                        accumulate(&mut grads, *b, &db);
                    }
                }
                Op::StackRows(rows) => {
                    let d = out.shape()[1];
                    for (i, &r) in rows.iter().enumerate() {
                        if self.requires_grad(r) {
                            accumulate(&mut grads, r, &g[i * d..(i + 1) * d]);
                        }
                    }
                }
                Op::Row(m, r) => {
                    let vm = self.value(*m);
                    let d = vm.shape()[1];
                    let slot = grads[m.0].get_or_insert_with(|| vec![0.0; vm.len()]);
                    for (o, x) in slot[r * d..(r + 1) * d].iter_mut().zip(&g) {
                        *o += x;
                    }
                }
                Op::Slice(v, start) => {
                    let n = self.value(*v).len();
                    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
                    for (o, x) in slot[*start..*start + g.len()].iter_mut().zip(&g) {
                        *o += x;
                    }
                }
                Op::MeanPool(m) => {
                    let vm = self.value(*m);
                    let t = vm.shape()[0];
                    let scale = 1.0 / t as f64;
                    let dm: Vec<f64> = (0..t).flat_map(|_| g.iter().map(|x| x * scale)).collect();
                    accumulate(&mut grads, *m, &dm);
                }
                Op::EmbeddingLookup(table, ids) => {
                    let vt = self.value(*table);
                    let d = vt.shape()[1];
                    if matches!(self.nodes[table.0].op, Op::Leaf) {
                        let rows = sparse.entry(table.0).or_default();
                        for (k, &id) in ids.iter().enumerate() {
                            let row = rows.entry(id).or_insert_with(|| vec![0.0; d]);
                            for (o, x) in row.iter_mut().zip(&g[k * d..(k + 1) * d]) {
                                *o += x;
                            }
                        }
                    } else {
                        let slot = grads[table.0].get_or_insert_with(|| vec![0.0; vt.len()]);
                        for (k, &id) in ids.iter().enumerate() {
                            for (o, x) in slot[id * d..(id + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]) {
                                *o += x;
                            }
                        }
                    }
                }
                Op::CrossEntropy(p, target) => {
                    let vp = self.value(*p);
                    let mut dp = vec![0.0; vp.len()];
                    let pt = vp.data[*target];
                    if pt > CE_EPSILON {
                        dp[*target] = -g[0] / pt;
                    }
                    accumulate(&mut grads, *p, &dp);
                }
                Op::Sum(parts) => {
                    for &p in parts {
                        if self.requires_grad(p) {
                            accumulate(&mut grads, p, &g);
                        }
                    }
                }
            }
            // leaves keep their gradient for inspection
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        // intermediate gradients were consumed; only leaves remain
        self.grads = grads;
        self.sparse = sparse;
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, g: &[f64]) {
    match &mut grads[v.0] {
        Some(slot) => {
            for (o, x) in slot.iter_mut().zip(g) {
                *o += x;
            }
        }
        empty => *empty = Some(g.to_vec()),
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub fn softmax_in_place(row: &mut [f64]) {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0; 3]));
        let s = t.softmax(x).unwrap();
        for &p in t.value(s).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_matmul() {
        let mut t = Tape::new();
        let eye = t.constant(
            Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap(),
        );
        let a_val = Tensor::matrix(3, 2, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let a = t.constant(a_val.clone());
        let p = t.matmul(eye, a).unwrap();
        assert_eq!(t.value(p), &a_val);
    }

    #[test]
    fn cross_entropy_of_confident_correct_prediction() {
        let mut t = Tape::new();
        let p = t.constant(Tensor::vector(vec![0.0, 1.0, 0.0]));
        let l = t.cross_entropy(p, 1).unwrap();
        assert_eq!(t.scalar(l), 0.0);
        let l_wrong = t.cross_entropy(p, 0).unwrap();
        assert!((t.scalar(l_wrong) + CE_EPSILON.ln()).abs() < 1e-9);
    }

    #[test]
    fn square_derivative() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![3.0]), true);
        let y = t.dot(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn detached_inputs_get_no_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        let c = t.constant(Tensor::vector(vec![3.0, 4.0]));
        let y = t.dot(x, c).unwrap();
        t.backward(y).unwrap();
        assert!(t.grad(c).is_none());
        assert_eq!(t.grad(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn backward_contract_errors() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true);
        assert!(matches!(t.backward(x), Err(AutodiffError::NotScalar(_))));
        let y = t.dot(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.backward(y), Err(AutodiffError::AlreadyBackpropagated));
        t.reset_grads();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        assert!(matches!(t.matmul(a, b), Err(AutodiffError::Shape { .. })));
        let v = t.constant(Tensor::zeros(&[4]));
        assert!(t.add(a, v).is_err());
        assert!(t.dot(v, a).is_err());
        let table = t.constant(Tensor::zeros(&[5, 2]));
        assert_eq!(
            t.embedding_lookup(table, &[1, 5]),
            Err(AutodiffError::IndexOutOfRange { index: 5, rows: 5 })
        );
    }

    #[test]
    fn embedding_gradient_is_sparse_for_leaf_tables() {
        let mut t = Tape::new();
        let table = t.leaf(Tensor::matrix(4, 2, (0..8).map(f64::from).collect()).unwrap(), true);
        let e = t.embedding_lookup(table, &[2, 2, 0]).unwrap();
        let m = t.mean_pool(e).unwrap();
        let ones = t.constant(Tensor::vector(vec![1.0, 1.0]));
        let s = t.dot(m, ones).unwrap();
        t.backward(s).unwrap();
        match t.gradient(table).unwrap() {
            Gradient::Rows { rows, .. } => {
                assert_eq!(rows.len(), 2);
                assert_eq!(rows[0], (0, vec![1.0 / 3.0, 1.0 / 3.0]));
                assert_eq!(rows[1], (2, vec![2.0 / 3.0, 2.0 / 3.0]));
            }
            other => panic!("expected sparse rows, got {other:?}"),
        }
    }
}

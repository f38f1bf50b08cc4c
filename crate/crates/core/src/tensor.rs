//! Dense f64 matrices with reverse-mode automatic differentiation.
//!
//! The computation graph is a flat tape ([`Graph`]) rebuilt on every forward
//! pass. Ops push nodes that reference earlier node indices, so tape order is
//! already topological and `backward` is a single reverse sweep. Trainable
//! tensors ([`Param`]) enter the tape as leaves; after a backward sweep their
//! gradients are accumulated additively into the shared [`Tensor`] buffer.

use std::cell::{Ref, RefCell};
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: left {left:?}, right {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite value in input of {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Usage(String),
}

fn usage(msg: impl Into<String>) -> TensorError {
    TensorError::Usage(msg.into())
}

// ── Value container ─────────────────────────────────────────────────────────

/// A dense row-major array with an optional accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(usage(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(usage(format!(
                "shape {shape:?} implies {numel} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data, grad: None, requires_grad: false })
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], data)
    }

    /// A 1 × n row vector.
    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(vec![1, n], data).expect("row vector is always valid for non-empty data")
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { shape: vec![rows, cols], data: vec![0.0; rows * cols], grad: None, requires_grad: false }
    }

    pub fn scalar(v: f64) -> Self {
        Self { shape: vec![1, 1], data: vec![v], grad: None, requires_grad: false }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Rows of a rank-2 tensor (rank-1 is treated as a single row).
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 { self.shape[0] } else { 1 }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("shape is never empty")
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Additive gradient accumulation; allocates a zero buffer on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        assert_eq!(g.len(), self.data.len(), "gradient shape must match tensor shape");
        let buf = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (b, v) in buf.iter_mut().zip(g) {
            *b += v;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

// ── Trainable parameter handle ──────────────────────────────────────────────

/// Shared handle to a trainable tensor. Cloning the handle aliases the same
/// underlying storage, which is how backward sweeps reach the gradient buffer.
#[derive(Clone)]
pub struct Param(Rc<RefCell<Tensor>>);

impl Param {
    pub fn new(mut t: Tensor) -> Self {
        t.set_requires_grad(true);
        Param(Rc::new(RefCell::new(t)))
    }

    pub fn from_values(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Ok(Self::new(Tensor::matrix(rows, cols, data)?))
    }

    pub fn tensor(&self) -> Ref<'_, Tensor> {
        self.0.borrow()
    }

    pub fn dims(&self) -> (usize, usize) {
        let t = self.0.borrow();
        (t.rows(), t.cols())
    }

    pub fn numel(&self) -> usize {
        self.0.borrow().numel()
    }

    pub fn value(&self) -> Vec<f64> {
        self.0.borrow().data().to_vec()
    }

    pub fn set_value(&self, data: Vec<f64>) {
        let mut t = self.0.borrow_mut();
        assert_eq!(data.len(), t.numel(), "set_value must preserve shape");
        t.data_mut().copy_from_slice(&data);
    }

    /// Set a single component; used by finite-difference probes.
    pub fn set_component(&self, idx: usize, v: f64) {
        self.0.borrow_mut().data_mut()[idx] = v;
    }

    pub fn component(&self, idx: usize) -> f64 {
        self.0.borrow().data()[idx]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.borrow().grad().map(|g| g.to_vec())
    }

    pub fn zero_grad(&self) {
        self.0.borrow_mut().zero_grad();
    }

    pub fn accumulate_grad(&self, g: &[f64]) {
        self.0.borrow_mut().accumulate_grad(g);
    }

    /// In-place update via `new = f(old, grad_component)`; no-op without grad.
    pub fn apply_grad_update(&self, mut f: impl FnMut(f64, f64) -> f64) {
        let mut t = self.0.borrow_mut();
        let Some(g) = t.grad().map(|g| g.to_vec()) else { return };
        for (x, gv) in t.data_mut().iter_mut().zip(g) {
            *x = f(*x, gv);
        }
    }

    /// Toggle gradient tracking; a frozen parameter enters graphs as a plain
    /// constant.
    pub fn set_requires_grad(&self, on: bool) {
        self.0.borrow_mut().set_requires_grad(on);
    }

    /// A fresh parameter with copied values and no shared storage.
    pub fn detached_copy(&self) -> Param {
        let t = self.0.borrow();
        let copy = Tensor::new(t.shape().to_vec(), t.data().to_vec())
            .expect("existing tensor shape is valid");
        Param::new(copy)
    }
}

impl std::fmt::Debug for Param {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let t = self.0.borrow();
        f.debug_struct("Param")
            .field("shape", &t.shape())
            .field("has_grad", &t.grad().is_some())
            .finish()
    }
}

// ── Raw matmul kernels ──────────────────────────────────────────────────────

/// C[m,n] = A[m,k] · B[k,n]
pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// C[m,k] = G[m,n] · B[k,n]ᵀ
fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            let mut s = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                s += gv * bv;
            }
            out[i * k + p] = s;
        }
    }
    out
}

/// C[k,n] = A[m,k]ᵀ · G[m,n]
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}

// ── Tape ────────────────────────────────────────────────────────────────────

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(Param),
    Matmul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    /// m×n plus a 1×n bias broadcast over rows.
    AddBias(usize, usize),
    Relu(usize),
    SoftmaxRows(usize),
    LayerNorm { input: usize, inv_std: f64 },
    Transpose(usize),
    Scale(usize, f64),
    AddConst(usize),
    ClampMin(usize, f64),
    Sqrt(usize),
    /// x − mean(x) over the whole extent.
    Center(usize),
    /// Column means: m×n → 1×n.
    MeanRows(usize),
    SumAll(usize),
    MeanAll(usize),
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    CrossEntropy { logits: usize, probs: Vec<f64>, target: usize },
}

struct Node {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    op: Op,
    needs_grad: bool,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Define-by-run tape. One per forward/backward cycle.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn push(&mut self, rows: usize, cols: usize, data: Vec<f64>, op: Op, needs_grad: bool) -> Var {
        debug_assert_eq!(rows * cols, data.len());
        self.nodes.push(Node { rows, cols, data, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    fn shape_vec(&self, v: Var) -> Vec<usize> {
        let (r, c) = self.dims(v);
        vec![r, c]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        debug_assert_eq!(self.nodes[v.0].data.len(), 1);
        self.nodes[v.0].data[0]
    }

    /// Node gradient from the latest backward sweep.
    pub fn grad_of(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    /// Constant leaf; gradients do not flow into it.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf, false)
    }

    pub fn leaf_row(&mut self, data: &[f64]) -> Var {
        self.push(1, data.len(), data.to_vec(), Op::Leaf, false)
    }

    pub fn leaf_scalar(&mut self, v: f64) -> Var {
        self.push(1, 1, vec![v], Op::Leaf, false)
    }

    /// Trainable leaf; backward accumulates into the parameter's grad buffer.
    pub fn param(&mut self, p: &Param) -> Var {
        let t = p.tensor();
        let (rows, cols, data, rg) = (t.rows(), t.cols(), t.data().to_vec(), t.requires_grad());
        drop(t);
        self.push(rows, cols, data, Op::Param(p.clone()), rg)
    }

    // ── Binary ops ──────────────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, ka) = self.dims(a);
        let (kb, n) = self.dims(b);
        if ka != kb {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape_vec(a),
                right: self.shape_vec(b),
            });
        }
        let data = matmul_raw(self.value(a), self.value(b), m, ka, n);
        let ng = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(m, n, data, Op::Matmul(a.0, b.0), ng))
    }

    fn elementwise(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(usize, usize) -> Op,
    ) -> Result<Var, TensorError> {
        let (ra, ca) = self.dims(a);
        let (rb, cb) = self.dims(b);
        if (ra, ca) != (rb, cb) {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                left: self.shape_vec(a),
                right: self.shape_vec(b),
            });
        }
        let data: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(ra, ca, data, op(a.0, b.0), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise("div", a, b, |x, y| x / y, Op::Div)
    }

    /// m×n input plus 1×n bias broadcast over every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (m, n) = self.dims(x);
        let (rb, nb) = self.dims(bias);
        if rb != 1 || nb != n {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: self.shape_vec(x),
                right: self.shape_vec(bias),
            });
        }
        let bv = self.value(bias).to_vec();
        let data: Vec<f64> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[i % n])
            .collect();
        let ng = self.needs(x.0) || self.needs(bias.0);
        Ok(self.push(m, n, data, Op::AddBias(x.0, bias.0), ng))
    }

    // ── Unary ops ───────────────────────────────────────────────────────

    pub fn relu(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self.value(x).iter().map(|&v| v.max(0.0)).collect();
        let ng = self.needs(x.0);
        self.push(r, c, data, Op::Relu(x.0), ng)
    }

    /// Row-wise softmax, stabilized by row-max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self.dims(x);
        if self.value(x).iter().any(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite("softmax_rows"));
        }
        let mut data = self.value(x).to_vec();
        for row in data.chunks_mut(c) {
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let ng = self.needs(x.0);
        Ok(self.push(r, c, data, Op::SoftmaxRows(x.0), ng))
    }

    /// Normalize over the whole extent: (x − mean) / sqrt(var + ε), with the
    /// 1/n population variance convention.
    pub fn layer_norm(&mut self, x: Var) -> Result<Var, TensorError> {
        let (r, c) = self.dims(x);
        let n = r * c;
        if n < 2 {
            return Err(usage(format!("layer_norm requires at least 2 elements, got {n}")));
        }
        let xs = self.value(x);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        let data: Vec<f64> = xs.iter().map(|&v| (v - mean) * inv_std).collect();
        let ng = self.needs(x.0);
        Ok(self.push(r, c, data, Op::LayerNorm { input: x.0, inv_std }, ng))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let xs = self.value(x);
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = xs[i * c + j];
            }
        }
        let ng = self.needs(x.0);
        self.push(c, r, data, Op::Transpose(x.0), ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self.value(x).iter().map(|&v| v * s).collect();
        let ng = self.needs(x.0);
        self.push(r, c, data, Op::Scale(x.0, s), ng)
    }

    pub fn add_const(&mut self, x: Var, k: f64) -> Var {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self.value(x).iter().map(|&v| v + k).collect();
        let ng = self.needs(x.0);
        self.push(r, c, data, Op::AddConst(x.0), ng)
    }

    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self.value(x).iter().map(|&v| v.max(floor)).collect();
        let ng = self.needs(x.0);
        self.push(r, c, data, Op::ClampMin(x.0, floor), ng)
    }

    /// Elementwise square root; subgradient at 0 is defined as 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let data: Vec<f64> = self.value(x).iter().map(|&v| v.sqrt()).collect();
        let ng = self.needs(x.0);
        self.push(r, c, data, Op::Sqrt(x.0), ng)
    }

    /// Subtract the mean of the whole extent.
    pub fn center(&mut self, x: Var) -> Var {
        let (r, c) = self.dims(x);
        let xs = self.value(x);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let data: Vec<f64> = xs.iter().map(|&v| v - mean).collect();
        let ng = self.needs(x.0);
        self.push(r, c, data, Op::Center(x.0), ng)
    }

    /// Mean over the row axis: m×n → 1×n.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (m, n) = self.dims(x);
        let xs = self.value(x);
        let mut data = vec![0.0; n];
        for row in xs.chunks(n) {
            for (d, &v) in data.iter_mut().zip(row) {
                *d += v;
            }
        }
        for d in data.iter_mut() {
            *d /= m as f64;
        }
        let ng = self.needs(x.0);
        self.push(1, n, data, Op::MeanRows(x.0), ng)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let ng = self.needs(x.0);
        self.push(1, 1, vec![s], Op::SumAll(x.0), ng)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let xs = self.value(x);
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let ng = self.needs(x.0);
        self.push(1, 1, vec![m], Op::MeanAll(x.0), ng)
    }

    // ── Structural ops ──────────────────────────────────────────────────

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(usage("concat_cols needs at least one input"));
        }
        let (rows, _) = self.dims(parts[0]);
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    left: self.shape_vec(parts[0]),
                    right: self.shape_vec(p),
                });
            }
            total += c;
        }
        let mut data = vec![0.0; rows * total];
        let mut offset = 0;
        for &p in parts {
            let (_, c) = self.dims(p);
            let pv = self.value(p).to_vec();
            for i in 0..rows {
                data[i * total + offset..i * total + offset + c]
                    .copy_from_slice(&pv[i * c..(i + 1) * c]);
            }
            offset += c;
        }
        let ng = parts.iter().any(|&p| self.needs(p.0));
        Ok(self.push(rows, total, data, Op::ConcatCols(parts.iter().map(|p| p.0).collect()), ng))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(usage("concat_rows needs at least one input"));
        }
        let (_, cols) = self.dims(parts[0]);
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if c != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.shape_vec(parts[0]),
                    right: self.shape_vec(p),
                });
            }
            data.extend_from_slice(self.value(p));
            rows += r;
        }
        let ng = parts.iter().any(|&p| self.needs(p.0));
        Ok(self.push(rows, cols, data, Op::ConcatRows(parts.iter().map(|p| p.0).collect()), ng))
    }

    /// Elementwise mean of same-shape inputs.
    pub fn mean_of(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        if parts.is_empty() {
            return Err(usage("mean_of needs at least one input"));
        }
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = self.add(acc, p)?;
        }
        Ok(self.scale(acc, 1.0 / parts.len() as f64))
    }

    /// Stabilized −log softmax(logits)[target] for a 1×n logits row.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var, TensorError> {
        let (r, n) = self.dims(logits);
        if r != 1 {
            return Err(usage(format!("cross_entropy expects a 1×n logits row, got {r}×{n}")));
        }
        if target >= n {
            return Err(usage(format!("cross_entropy target {target} out of range for {n} logits")));
        }
        let xs = self.value(logits);
        let mx = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = xs.iter().map(|&v| (v - mx).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
        let loss = sum.ln() - (xs[target] - mx);
        let ng = self.needs(logits.0);
        Ok(self.push(1, 1, vec![loss], Op::CrossEntropy { logits: logits.0, probs, target }, ng))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients of [`Param`] leaves are
    /// accumulated additively into their shared buffers; node gradients stay
    /// readable through [`Graph::grad_of`] until the next sweep.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let (r, c) = self.dims(loss);
        if r * c != 1 {
            return Err(usage(format!("backward requires a scalar loss, got {r}×{c}")));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(p) = &node.op {
                if let Some(g) = &grads[i] {
                    p.accumulate_grad(g);
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let add_grad = |grads: &mut [Option<Vec<f64>>], idx: usize, contrib: &[f64]| {
            if !nodes[idx].needs_grad {
                return;
            }
            let slot = grads[idx].get_or_insert_with(|| vec![0.0; nodes[idx].data.len()]);
            for (s, v) in slot.iter_mut().zip(contrib) {
                *s += v;
            }
        };
        let node = &nodes[i];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Matmul(a, b) => {
                let (m, k) = (nodes[*a].rows, nodes[*a].cols);
                let nn = nodes[*b].cols;
                if nodes[*a].needs_grad {
                    let da = matmul_nt(g, &nodes[*b].data, m, nn, k);
                    add_grad(grads, *a, &da);
                }
                if nodes[*b].needs_grad {
                    let db = matmul_tn(&nodes[*a].data, g, m, k, nn);
                    add_grad(grads, *b, &db);
                }
            }
            Op::Add(a, b) => {
                add_grad(grads, *a, g);
                add_grad(grads, *b, g);
            }
            Op::Sub(a, b) => {
                add_grad(grads, *a, g);
                if nodes[*b].needs_grad {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    add_grad(grads, *b, &neg);
                }
            }
            Op::Mul(a, b) => {
                if nodes[*a].needs_grad {
                    let da: Vec<f64> = g.iter().zip(&nodes[*b].data).map(|(gv, bv)| gv * bv).collect();
                    add_grad(grads, *a, &da);
                }
                if nodes[*b].needs_grad {
                    let db: Vec<f64> = g.iter().zip(&nodes[*a].data).map(|(gv, av)| gv * av).collect();
                    add_grad(grads, *b, &db);
                }
            }
            Op::Div(a, b) => {
                if nodes[*a].needs_grad {
                    let da: Vec<f64> = g.iter().zip(&nodes[*b].data).map(|(gv, bv)| gv / bv).collect();
                    add_grad(grads, *a, &da);
                }
                if nodes[*b].needs_grad {
                    let db: Vec<f64> = g
                        .iter()
                        .zip(nodes[*a].data.iter().zip(&nodes[*b].data))
                        .map(|(gv, (av, bv))| -gv * av / (bv * bv))
                        .collect();
                    add_grad(grads, *b, &db);
                }
            }
            Op::AddBias(x, bias) => {
                add_grad(grads, *x, g);
                if nodes[*bias].needs_grad {
                    let ncols = nodes[*bias].cols;
                    let mut db = vec![0.0; ncols];
                    for (j, gv) in g.iter().enumerate() {
                        db[j % ncols] += gv;
                    }
                    add_grad(grads, *bias, &db);
                }
            }
            Op::Relu(x) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&nodes[*x].data)
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                add_grad(grads, *x, &dx);
            }
            Op::SoftmaxRows(x) => {
                let c = node.cols;
                let y = &node.data;
                let mut dx = vec![0.0; y.len()];
                for (row, (yrow, grow)) in y.chunks(c).zip(g.chunks(c)).enumerate() {
                    let dot: f64 = yrow.iter().zip(grow).map(|(yv, gv)| yv * gv).sum();
                    for j in 0..c {
                        dx[row * c + j] = yrow[j] * (grow[j] - dot);
                    }
                }
                add_grad(grads, *x, &dx);
            }
            Op::LayerNorm { input, inv_std } => {
                let y = &node.data;
                let n = y.len() as f64;
                let g_mean = g.iter().sum::<f64>() / n;
                let gy_mean = g.iter().zip(y).map(|(gv, yv)| gv * yv).sum::<f64>() / n;
                let dx: Vec<f64> = g
                    .iter()
                    .zip(y)
                    .map(|(gv, yv)| inv_std * (gv - g_mean - yv * gy_mean))
                    .collect();
                add_grad(grads, *input, &dx);
            }
            Op::Transpose(x) => {
                let (r, c) = (node.rows, node.cols);
                let mut dx = vec![0.0; r * c];
                for i2 in 0..r {
                    for j in 0..c {
                        dx[j * r + i2] = g[i2 * c + j];
                    }
                }
                add_grad(grads, *x, &dx);
            }
            Op::Scale(x, s) => {
                let dx: Vec<f64> = g.iter().map(|gv| gv * s).collect();
                add_grad(grads, *x, &dx);
            }
            Op::AddConst(x) => {
                add_grad(grads, *x, g);
            }
            Op::ClampMin(x, floor) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&nodes[*x].data)
                    .map(|(gv, &xv)| if xv > *floor { *gv } else { 0.0 })
                    .collect();
                add_grad(grads, *x, &dx);
            }
            Op::Sqrt(x) => {
                let dx: Vec<f64> = g
                    .iter()
                    .zip(&node.data)
                    .map(|(gv, &yv)| if yv > 0.0 { gv / (2.0 * yv) } else { 0.0 })
                    .collect();
                add_grad(grads, *x, &dx);
            }
            Op::Center(x) => {
                let n = g.len() as f64;
                let g_mean = g.iter().sum::<f64>() / n;
                let dx: Vec<f64> = g.iter().map(|gv| gv - g_mean).collect();
                add_grad(grads, *x, &dx);
            }
            Op::MeanRows(x) => {
                let m = nodes[*x].rows;
                let n = nodes[*x].cols;
                let mut dx = vec![0.0; m * n];
                for i2 in 0..m {
                    for j in 0..n {
                        dx[i2 * n + j] = g[j] / m as f64;
                    }
                }
                add_grad(grads, *x, &dx);
            }
            Op::SumAll(x) => {
                let dx = vec![g[0]; nodes[*x].data.len()];
                add_grad(grads, *x, &dx);
            }
            Op::MeanAll(x) => {
                let n = nodes[*x].data.len();
                let dx = vec![g[0] / n as f64; n];
                add_grad(grads, *x, &dx);
            }
            Op::ConcatCols(parts) => {
                let total = node.cols;
                let rows = node.rows;
                let mut offset = 0;
                for &p in parts {
                    let c = nodes[p].cols;
                    if nodes[p].needs_grad {
                        let mut dp = vec![0.0; rows * c];
                        for i2 in 0..rows {
                            dp[i2 * c..(i2 + 1) * c]
                                .copy_from_slice(&g[i2 * total + offset..i2 * total + offset + c]);
                        }
                        add_grad(grads, p, &dp);
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = node.cols;
                let mut offset = 0;
                for &p in parts {
                    let r = nodes[p].rows;
                    if nodes[p].needs_grad {
                        add_grad(grads, p, &g[offset * cols..(offset + r) * cols]);
                    }
                    offset += r;
                }
            }
            Op::CrossEntropy { logits, probs, target } => {
                let dx: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, &pv)| g[0] * (pv - if j == *target { 1.0 } else { 0.0 }))
                    .collect();
                add_grad(grads, *logits, &dx);
            }
        }
    }
}

// ── Finite-difference gradient checking ─────────────────────────────────────

/// Central finite-difference probes for verifying analytic gradients.
pub mod gradcheck {
    use super::Param;

    pub const DEFAULT_STEP: f64 = 1e-5;

    /// Central difference of `f` w.r.t. the listed components of `param`.
    /// `f` must re-run the full forward pass and return the scalar loss.
    pub fn fd_components(
        param: &Param,
        idxs: &[usize],
        h: f64,
        mut f: impl FnMut() -> f64,
    ) -> Vec<f64> {
        idxs.iter()
            .map(|&i| {
                let orig = param.component(i);
                param.set_component(i, orig + h);
                let plus = f();
                param.set_component(i, orig - h);
                let minus = f();
                param.set_component(i, orig);
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }

    /// Central difference of `f` along direction `dir` in `param`'s space.
    pub fn fd_directional(param: &Param, dir: &[f64], h: f64, mut f: impl FnMut() -> f64) -> f64 {
        let orig = param.value();
        let shifted = |sign: f64| {
            orig.iter()
                .zip(dir)
                .map(|(&x, &d)| x + sign * h * d)
                .collect::<Vec<f64>>()
        };
        param.set_value(shifted(1.0));
        let plus = f();
        param.set_value(shifted(-1.0));
        let minus = f();
        param.set_value(orig);
        (plus - minus) / (2.0 * h)
    }

    /// Relative error with an absolute floor so that near-zero pairs compare
    /// on an absolute scale.
    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    /// Relative-error check (1e-4) with an absolute floor at the central
    /// finite-difference noise level, which scales with the loss magnitude
    /// (cancellation noise ≈ |loss|·ε/h).
    pub fn grad_close(analytic: f64, numeric: f64, loss_scale: f64) -> bool {
        let tol = 1e-4 * analytic.abs().max(numeric.abs()) + 1e-7 * loss_scale.abs().max(1.0);
        (analytic - numeric).abs() <= tol
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::{fd_components, rel_err, DEFAULT_STEP};
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_param(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Param {
        let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        Param::from_values(rows, cols, data).unwrap()
    }

    /// Checks every component of `param` against central differences for the
    /// scalar produced by `f`.
    fn check_grad(param: &Param, f: impl Fn() -> f64, build: impl Fn(&mut Graph) -> Var) {
        param.zero_grad();
        let mut g = Graph::new();
        let loss = build(&mut g);
        g.backward(loss).unwrap();
        let analytic = param.grad().expect("param should receive a gradient");
        let idxs: Vec<usize> = (0..param.numel()).collect();
        let numeric = fd_components(param, &idxs, DEFAULT_STEP, f);
        for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
            assert!(
                rel_err(a, n) < 1e-4,
                "component {i}: analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn tensor_shape_invariant() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn matmul_identity() {
        let mut g = Graph::new();
        let a = g.leaf(&Tensor::matrix(2, 2, vec![3.0, -1.5, 2.0, 7.0]).unwrap());
        let eye = g.leaf(&Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let out = g.matmul(eye, a).unwrap();
        assert_eq!(g.value(out), &[3.0, -1.5, 2.0, 7.0]);
    }

    #[test]
    fn matmul_hand_example() {
        // [[1,2],[3,4]] × [[0],[1]] = [[2],[4]]
        let mut g = Graph::new();
        let a = g.leaf(&Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = g.leaf(&Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap());
        let out = g.matmul(a, b).unwrap();
        assert_eq!(g.value(out), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = Graph::new();
        let a = g.leaf(&Tensor::zeros(2, 3));
        let b = g.leaf(&Tensor::zeros(2, 3));
        let err = g.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "got: {msg}");
    }

    #[test]
    fn matmul_backward_both_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_param(&mut rng, 3, 4);
        let b = rand_param(&mut rng, 4, 2);
        let run = |g: &mut Graph| {
            let av = g.param(&a);
            let bv = g.param(&b);
            let prod = g.matmul(av, bv).unwrap();
            g.sum_all(prod)
        };
        let eval = || {
            let mut g = Graph::new();
            let loss = run(&mut g);
            g.scalar_value(loss)
        };
        check_grad(&a, eval, |g| run(g));
        check_grad(&b, eval, |g| run(g));
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::row(vec![2.0, 2.0, 2.0, 2.0]));
        let y = g.softmax_rows(x).unwrap();
        for &v in g.value(y) {
            assert_relative_eq!(v, 0.25, epsilon = 1e-12);
        }

        let x2 = g.leaf(&Tensor::row(vec![0.0, 3.0_f64.ln()]));
        let y2 = g.softmax_rows(x2).unwrap();
        assert_relative_eq!(g.value(y2)[0], 0.25, epsilon = 1e-12);
        assert_relative_eq!(g.value(y2)[1], 0.75, epsilon = 1e-12);
    }

    #[test]
    fn softmax_large_values_do_not_overflow() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::row(vec![1000.0, 1000.0]));
        let y = g.softmax_rows(x).unwrap();
        assert_relative_eq!(g.value(y)[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(g.value(y)[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn softmax_nan_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::row(vec![f64::NAN, 0.0]));
        assert!(matches!(g.softmax_rows(x), Err(TensorError::NonFinite(_))));
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let data: Vec<f64> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
            let shifted: Vec<f64> = data.iter().map(|v| v + 13.7).collect();
            let mut g = Graph::new();
            let a = g.leaf(&Tensor::matrix(3, 4, data).unwrap());
            let b = g.leaf(&Tensor::matrix(3, 4, shifted).unwrap());
            let ya = g.softmax_rows(a).unwrap();
            let yb = g.softmax_rows(b).unwrap();
            for row in g.value(ya).chunks(4) {
                assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-6);
            }
            for (va, vb) in g.value(ya).iter().zip(g.value(yb)) {
                assert_relative_eq!(va, vb, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn softmax_backward_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = rand_param(&mut rng, 2, 5);
        // Weighted readout keeps the loss sensitive to every entry.
        let weights: Vec<f64> = (0..10).map(|i| (i as f64 + 1.0) * 0.3).collect();
        let run = |g: &mut Graph| {
            let x = g.param(&p);
            let y = g.softmax_rows(x).unwrap();
            let wv = g.leaf(&Tensor::matrix(2, 5, weights.clone()).unwrap());
            let prod = g.mul(y, wv).unwrap();
            g.sum_all(prod)
        };
        check_grad(
            &p,
            || {
                let mut g = Graph::new();
                let loss = run(&mut g);
                g.scalar_value(loss)
            },
            |g| run(g),
        );
    }

    #[test]
    fn relu_examples_and_zero_grad_region() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::row(vec![-1.0, 0.0, 2.0]));
        let y = g.relu(x);
        assert_eq!(g.value(y), &[0.0, 0.0, 2.0]);

        let p = Param::from_values(1, 3, vec![-2.0, -0.5, -1.0]).unwrap();
        let mut g = Graph::new();
        let xv = g.param(&p);
        let yv = g.relu(xv);
        let loss = g.sum_all(yv);
        g.backward(loss).unwrap();
        assert_eq!(p.grad().unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn relu_backward_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = rand_param(&mut rng, 3, 3);
        let run = |g: &mut Graph| {
            let x = g.param(&p);
            let y = g.relu(x);
            let sq = g.mul(y, y).unwrap();
            g.sum_all(sq)
        };
        check_grad(
            &p,
            || {
                let mut g = Graph::new();
                let loss = run(&mut g);
                g.scalar_value(loss)
            },
            |g| run(g),
        );
    }

    #[test]
    fn layer_norm_constant_input_is_zero() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::matrix(2, 3, vec![4.2; 6]).unwrap());
        let y = g.layer_norm(x).unwrap();
        for &v in g.value(y) {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn layer_norm_fixed_point() {
        // [−1, 1] is already zero-mean unit-variance under the 1/n convention.
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::row(vec![-1.0, 1.0]));
        let y = g.layer_norm(x).unwrap();
        assert_relative_eq!(g.value(y)[0], -1.0, epsilon = 1e-4);
        assert_relative_eq!(g.value(y)[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn layer_norm_output_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<f64> = (0..160).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::matrix(5, 32, data).unwrap());
        let y = g.layer_norm(x).unwrap();
        let ys = g.value(y);
        let mean = ys.iter().sum::<f64>() / 160.0;
        let var = ys.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 160.0;
        assert!(mean.abs() < 1e-6, "mean {mean}");
        assert!((var - 1.0).abs() < 1e-4, "var {var}");
    }

    #[test]
    fn layer_norm_affine_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = data.iter().map(|v| 3.5 * v + 0.7).collect();
        let mut g = Graph::new();
        let a = g.leaf(&Tensor::matrix(4, 6, data).unwrap());
        let b = g.leaf(&Tensor::matrix(4, 6, scaled).unwrap());
        let ya = g.layer_norm(a).unwrap();
        let yb = g.layer_norm(b).unwrap();
        for (va, vb) in g.value(ya).iter().zip(g.value(yb)) {
            assert!((va - vb).abs() < 1e-4);
        }
    }

    #[test]
    fn layer_norm_rejects_single_element() {
        let mut g = Graph::new();
        let x = g.leaf(&Tensor::scalar(1.0));
        assert!(g.layer_norm(x).is_err());
    }

    #[test]
    fn layer_norm_backward_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = rand_param(&mut rng, 4, 4);
        let weights: Vec<f64> = (0..16).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let run = |g: &mut Graph| {
            let x = g.param(&p);
            let y = g.layer_norm(x).unwrap();
            let wv = g.leaf(&Tensor::matrix(4, 4, weights.clone()).unwrap());
            let prod = g.mul(y, wv).unwrap();
            g.sum_all(prod)
        };
        check_grad(
            &p,
            || {
                let mut g = Graph::new();
                let loss = run(&mut g);
                g.scalar_value(loss)
            },
            |g| run(g),
        );
    }

    #[test]
    fn misc_op_backwards_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = rand_param(&mut rng, 3, 4);
        // Exercises transpose, add_bias, center, mean_rows, clamp_min, div,
        // sqrt, scale, and concat in one composite readout.
        let bias = rand_param(&mut rng, 1, 3);
        let run = |g: &mut Graph| {
            let x = g.param(&p);
            let b = g.param(&bias);
            let xt = g.transpose(x); // 4×3
            let xb = g.add_bias(xt, b).unwrap();
            let c = g.center(xb);
            let m = g.mean_rows(c); // 1×3
            let sq = g.mul(m, m).unwrap();
            let shifted = g.add_const(sq, 2.0);
            let cl = g.clamp_min(shifted, 2.1);
            let rooted = g.sqrt(cl);
            let denom = g.add_const(rooted, 1.0);
            let ratio = g.div(rooted, denom).unwrap();
            let cat = g.concat_cols(&[ratio, rooted]).unwrap();
            let scaled = g.scale(cat, 1.7);
            g.mean_all(scaled)
        };
        let eval = || {
            let mut g = Graph::new();
            let loss = run(&mut g);
            g.scalar_value(loss)
        };
        check_grad(&p, eval, |g| run(g));
        check_grad(&bias, eval, |g| run(g));
    }

    #[test]
    fn concat_rows_backward_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = rand_param(&mut rng, 2, 3);
        let b = rand_param(&mut rng, 1, 3);
        let run = |g: &mut Graph| {
            let av = g.param(&a);
            let bv = g.param(&b);
            let cat = g.concat_rows(&[av, bv]).unwrap();
            let sq = g.mul(cat, cat).unwrap();
            g.sum_all(sq)
        };
        let eval = || {
            let mut g = Graph::new();
            let loss = run(&mut g);
            g.scalar_value(loss)
        };
        check_grad(&a, eval, |g| run(g));
        check_grad(&b, eval, |g| run(g));
    }

    #[test]
    fn backward_sum_gives_ones_and_square_gives_2x() {
        let p = Param::from_values(1, 4, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let mut g = Graph::new();
        let x = g.param(&p);
        let loss = g.sum_all(x);
        g.backward(loss).unwrap();
        assert_eq!(p.grad().unwrap(), vec![1.0; 4]);

        p.zero_grad();
        let mut g = Graph::new();
        let x = g.param(&p);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        assert_eq!(p.grad().unwrap(), vec![2.0, -4.0, 6.0, 1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let p = Param::from_values(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        let mut g = Graph::new();
        let x = g.param(&p);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn gradient_accumulation_is_additive() {
        let p = Param::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut g = Graph::new();
        let x = g.param(&p);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum_all(sq);
        g.backward(loss).unwrap();
        let once = p.grad().unwrap();
        g.backward(loss).unwrap();
        let twice = p.grad().unwrap();
        for (o, t) in once.iter().zip(&twice) {
            assert_eq!(*t, 2.0 * o);
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let build = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let p = rand_param(&mut rng, 5, 5);
            let q = rand_param(&mut rng, 5, 5);
            let mut g = Graph::new();
            let pv = g.param(&p);
            let qv = g.param(&q);
            let prod = g.matmul(pv, qv).unwrap();
            let sm = g.softmax_rows(prod).unwrap();
            let ln = g.layer_norm(sm).unwrap();
            let loss = g.mean_all(ln);
            g.backward(loss).unwrap();
            (p.grad().unwrap(), q.grad().unwrap())
        };
        let (g1p, g1q) = build();
        let (g2p, g2q) = build();
        assert_eq!(g1p, g2p);
        assert_eq!(g1q, g2q);
    }

    #[test]
    fn cross_entropy_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = rand_param(&mut rng, 1, 4);
        let run = |g: &mut Graph| {
            let x = g.param(&p);
            g.cross_entropy(x, 2).unwrap()
        };
        check_grad(
            &p,
            || {
                let mut g = Graph::new();
                let loss = run(&mut g);
                g.scalar_value(loss)
            },
            |g| run(g),
        );
    }

    #[test]
    fn op_gradients_match_fd_across_ten_seeds() {
        // One composite readout touching every differentiable op, repeated
        // over 10 seeds with fresh random values.
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let a = rand_param(&mut rng, 2, 3);
            let b = rand_param(&mut rng, 3, 2);
            let run = |g: &mut Graph| {
                let av = g.param(&a);
                let bv = g.param(&b);
                let prod = g.matmul(av, bv).unwrap(); // 2×2
                let sm = g.softmax_rows(prod).unwrap();
                let ln = g.layer_norm(sm).unwrap();
                let r = g.relu(ln);
                let t = g.transpose(r);
                let shifted = g.add_const(t, 0.3);
                let centered = g.center(shifted);
                let sq = g.mul(centered, centered).unwrap();
                let cl = g.clamp_min(sq, 0.01);
                let rt = g.sqrt(cl);
                let denom = g.add_const(rt, 1.5);
                let ratio = g.div(rt, denom).unwrap();
                let means = g.mean_rows(ratio);
                let cat = g.concat_cols(&[means, means]).unwrap();
                let anchor = g.leaf_row(&[0.2, -0.4, 0.6, 0.1]);
                let diff = g.sub(cat, anchor).unwrap();
                let summed = g.sum_all(diff);
                let again = g.mean_all(cat);
                let total = g.add(summed, again).unwrap();
                g.scale(total, 1.3)
            };
            let eval = || {
                let mut g = Graph::new();
                let loss = run(&mut g);
                g.scalar_value(loss)
            };
            check_grad(&a, eval, |g| run(g));
            check_grad(&b, eval, |g| run(g));
        }
    }

    #[test]
    fn constants_do_not_collect_gradients() {
        let p = Param::from_values(1, 2, vec![1.0, 2.0]).unwrap();
        let mut g = Graph::new();
        let x = g.param(&p);
        let k = g.leaf_row(&[5.0, 5.0]);
        let s = g.mul(x, k).unwrap();
        let loss = g.sum_all(s);
        g.backward(loss).unwrap();
        assert!(g.grad_of(k).is_none());
        assert_eq!(p.grad().unwrap(), vec![5.0, 5.0]);
    }
}

//! Dense reverse-mode differentiation over row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Trainable tensors
//! live in a [`ParamStore`]; [`Tape::backward`] returns one gradient per
//! parameter. Values are `f64`.
//!
//! Shape mismatches are programming errors and panic.

mod adam;
mod gradcheck;
mod lstm;

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

pub use adam::{adam_step, AdamState, NonFiniteGradient};
pub use gradcheck::{finite_diff_check, relative_error, GradCheck};
pub use lstm::{lstm_step, run_masked, LstmParams, LstmState, LstmWeights};

/// A row-major matrix. Vectors are `1 × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length does not match {rows}x{cols}");
        Self { rows, cols, data }
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::from_vec(1, n, data)
    }

    /// Uniform entries in `[-bound, bound)`.
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * bound).collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// `a · b`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch: {:?} x {:?}", a.shape(), b.shape());
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        let crow = &mut out.data[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let brow = &b.data[p * n..(p + 1) * n];
            for (c, bv) in crow.iter_mut().zip(brow) {
                *c += av * bv;
            }
        }
    }
    out
}

/// `dc · bᵀ`, accumulated into `out`.
fn matmul_bt_acc(dc: &Tensor, b: &Tensor, out: &mut Tensor) {
    let (m, n, k) = (dc.rows, dc.cols, b.rows);
    for i in 0..m {
        let drow = &dc.data[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b.data[p * n..(p + 1) * n];
            let s: f64 = drow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out.data[i * k + p] += s;
        }
    }
}

/// `aᵀ · dc`, accumulated into `out`.
fn matmul_at_acc(a: &Tensor, dc: &Tensor, out: &mut Tensor) {
    let (m, k, n) = (a.rows, a.cols, dc.cols);
    for i in 0..m {
        let drow = &dc.data[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            let orow = &mut out.data[p * n..(p + 1) * n];
            for (o, d) in orow.iter_mut().zip(drow) {
                *o += av * d;
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(z: &Tensor) -> Tensor {
    let mut out = z.clone();
    for r in 0..z.rows {
        softmax_in_place(out.row_mut(r));
    }
    out
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Mean negative log-likelihood of `targets` under the row distributions
/// `probs`, over rows whose mask is non-zero. Panics if every mask is zero.
pub fn masked_cross_entropy(probs: &Tensor, targets: &[usize], mask: &[f64]) -> f64 {
    assert_eq!(probs.rows, targets.len());
    assert_eq!(probs.rows, mask.len());
    let denom: f64 = mask.iter().sum();
    assert!(denom > 0.0, "masked cross-entropy with an all-zero mask");
    let mut total = 0.0;
    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
        if m != 0.0 {
            total -= m * libm::log(probs.get(r, t));
        }
    }
    total / denom
}

/// Handle to a trainable tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable tensors, in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, tensor: Tensor) -> ParamId {
        assert!(self.find(name).is_none(), "duplicate parameter `{name}`");
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names.iter().zip(&self.tensors).enumerate().map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            for v in t.data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// One gradient tensor per parameter, same shapes as the store.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self { grads: store.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect() }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.data.iter().all(|v| v.is_finite()))
    }

    /// Adds `other` into `self` tensor by tensor.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }
}

/// Node handle on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Tensor),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Var, Var),
    Slice(Var, usize),
    Gather(Var, Vec<usize>),
    Overlay(Var, Vec<usize>),
    Select(Vec<bool>, Var, Var),
    StackRows(Vec<Var>),
    SoftmaxCrossEntropy { logits: Var, targets: Vec<usize>, mask: Vec<f64>, probs: Tensor, denom: f64 },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded forward computation.
pub struct Tape<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new(), bound: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A value that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// The parameter as a tape node; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param(id), true);
        self.bound[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = matmul(self.value(a), self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p + q).collect();
        let value = Tensor::from_vec(x.rows, x.cols, data);
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::Add(a, b), rg)
    }

    /// Adds the `1 × n` row `b` to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert!(y.rows == 1 && y.cols == x.cols, "add_row shape mismatch");
        let mut value = x.clone();
        for r in 0..value.rows {
            for (v, bv) in value.row_mut(r).iter_mut().zip(&y.data) {
                *v += bv;
            }
        }
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::AddRow(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect();
        let value = Tensor::from_vec(x.rows, x.cols, data);
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Elementwise product with a fixed tensor.
    pub fn mul_const(&mut self, a: Var, k: Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), k.shape(), "mul_const shape mismatch");
        let data = x.data.iter().zip(&k.data).map(|(p, q)| p * q).collect();
        let value = Tensor::from_vec(x.rows, x.cols, data);
        let rg = self.needs(a);
        self.push(value, Op::MulConst(a, k), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|v| sigmoid(*v)).collect());
        let rg = self.needs(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let value = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|v| libm::tanh(*v)).collect());
        let rg = self.needs(a);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows, y.rows, "concat row mismatch");
        let mut value = Tensor::zeros(x.rows, x.cols + y.cols);
        for r in 0..x.rows {
            let row = value.row_mut(r);
            row[..x.cols].copy_from_slice(x.row(r));
            row[x.cols..].copy_from_slice(y.row(r));
        }
        let rg = self.needs(a) || self.needs(b);
        self.push(value, Op::Concat(a, b), rg)
    }

    /// Columns `start..end` of `a`.
    pub fn slice(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(start <= end && end <= x.cols, "slice out of range");
        let mut value = Tensor::zeros(x.rows, end - start);
        for r in 0..x.rows {
            value.row_mut(r).copy_from_slice(&x.row(r)[start..end]);
        }
        let rg = self.needs(a);
        self.push(value, Op::Slice(a, start), rg)
    }

    /// Rows `index[i]` of `a`, stacked.
    pub fn gather(&mut self, a: Var, index: Vec<usize>) -> Var {
        let x = self.value(a);
        let mut value = Tensor::zeros(index.len(), x.cols);
        for (r, &i) in index.iter().enumerate() {
            value.row_mut(r).copy_from_slice(x.row(i));
        }
        let rg = self.needs(a);
        self.push(value, Op::Gather(a, index), rg)
    }

    /// Row lookup into a fixed `f32` table whose first rows are overridden by
    /// the trainable `head`. Only `head` receives gradient.
    pub fn overlay_lookup(&mut self, head: Var, base: &[f32], dim: usize, index: Vec<usize>) -> Var {
        let h = self.value(head);
        assert_eq!(h.cols, dim, "overlay width mismatch");
        let mut value = Tensor::zeros(index.len(), dim);
        for (r, &i) in index.iter().enumerate() {
            if i < h.rows {
                value.row_mut(r).copy_from_slice(h.row(i));
            } else {
                for (v, b) in value.row_mut(r).iter_mut().zip(&base[i * dim..(i + 1) * dim]) {
                    *v = *b as f64;
                }
            }
        }
        let rg = self.needs(head);
        self.push(value, Op::Overlay(head, index), rg)
    }

    /// Row `r` comes from `new` when `take_new[r]`, otherwise from `old`.
    pub fn select_rows(&mut self, take_new: Vec<bool>, new: Var, old: Var) -> Var {
        let (n, o) = (self.value(new), self.value(old));
        assert_eq!(n.shape(), o.shape(), "select shape mismatch");
        assert_eq!(take_new.len(), n.rows);
        let mut value = o.clone();
        for (r, &t) in take_new.iter().enumerate() {
            if t {
                value.row_mut(r).copy_from_slice(n.row(r));
            }
        }
        let rg = self.needs(new) || self.needs(old);
        self.push(value, Op::Select(take_new, new, old), rg)
    }

    /// Vertical concatenation of equally wide tensors.
    pub fn stack_rows(&mut self, parts: Vec<Var>) -> Var {
        assert!(!parts.is_empty());
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for p in &parts {
            let t = self.value(*p);
            assert_eq!(t.cols, cols, "stack width mismatch");
            data.extend_from_slice(&t.data);
        }
        let rows = data.len() / cols.max(1);
        let rg = parts.iter().any(|p| self.needs(*p));
        self.push(Tensor::from_vec(rows, cols, data), Op::StackRows(parts), rg)
    }

    /// Fused row softmax and masked mean cross-entropy; returns a `1 × 1` loss.
    /// Rows with a zero mask are never read. Panics if every mask is zero.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Vec<usize>, mask: Vec<f64>) -> Var {
        let z = self.value(logits);
        assert_eq!(z.rows, targets.len());
        assert_eq!(z.rows, mask.len());
        let denom: f64 = mask.iter().sum();
        assert!(denom > 0.0, "masked cross-entropy with an all-zero mask");
        let mut probs = Tensor::zeros(z.rows, z.cols);
        let mut total = 0.0;
        for r in 0..z.rows {
            if mask[r] == 0.0 {
                continue;
            }
            let row = probs.row_mut(r);
            row.copy_from_slice(z.row(r));
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = libm::exp(*v - max);
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
            let log_p = z.get(r, targets[r]) - max - libm::log(sum);
            total -= mask[r] * log_p;
        }
        let rg = self.needs(logits);
        let value = Tensor::from_vec(1, 1, vec![total / denom]);
        self.push(value, Op::SoftmaxCrossEntropy { logits, targets, mask, probs, denom }, rg)
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).shape(), [1, 1], "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));
        let mut out = Gradients::zeros_like(self.store);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut Tensor)| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                let slot = grads[v.0].get_or_insert_with(|| {
                    let t = &self.nodes[v.0].value;
                    Tensor::zeros(t.rows, t.cols)
                });
                f(slot);
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.grads[id.0].add_assign(&g),
                Op::MatMul(a, b) => {
                    acc(*a, &mut |s| matmul_bt_acc(&g, self.value(*b), s));
                    acc(*b, &mut |s| matmul_at_acc(self.value(*a), &g, s));
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |s| s.add_assign(&g));
                    acc(*b, &mut |s| s.add_assign(&g));
                }
                Op::AddRow(a, b) => {
                    acc(*a, &mut |s| s.add_assign(&g));
                    acc(*b, &mut |s| {
                        for r in 0..g.rows {
                            for (x, y) in s.data.iter_mut().zip(g.row(r)) {
                                *x += y;
                            }
                        }
                    });
                }
                Op::Mul(a, b) => {
                    acc(*a, &mut |s| {
                        for ((x, d), y) in s.data.iter_mut().zip(&g.data).zip(&self.value(*b).data) {
                            *x += d * y;
                        }
                    });
                    acc(*b, &mut |s| {
                        for ((x, d), y) in s.data.iter_mut().zip(&g.data).zip(&self.value(*a).data) {
                            *x += d * y;
                        }
                    });
                }
                Op::MulConst(a, k) => acc(*a, &mut |s| {
                    for ((x, d), y) in s.data.iter_mut().zip(&g.data).zip(&k.data) {
                        *x += d * y;
                    }
                }),
                Op::Sigmoid(a) => acc(*a, &mut |s| {
                    for ((x, d), y) in s.data.iter_mut().zip(&g.data).zip(&node.value.data) {
                        *x += d * y * (1.0 - y);
                    }
                }),
                Op::Tanh(a) => acc(*a, &mut |s| {
                    for ((x, d), y) in s.data.iter_mut().zip(&g.data).zip(&node.value.data) {
                        *x += d * (1.0 - y * y);
                    }
                }),
                Op::Concat(a, b) => {
                    let left = self.value(*a).cols;
                    acc(*a, &mut |s| {
                        for r in 0..g.rows {
                            for (x, d) in s.row_mut(r).iter_mut().zip(&g.row(r)[..left]) {
                                *x += d;
                            }
                        }
                    });
                    acc(*b, &mut |s| {
                        for r in 0..g.rows {
                            for (x, d) in s.row_mut(r).iter_mut().zip(&g.row(r)[left..]) {
                                *x += d;
                            }
                        }
                    });
                }
                Op::Slice(a, start) => acc(*a, &mut |s| {
                    for r in 0..g.rows {
                        let dst = &mut s.row_mut(r)[*start..*start + g.cols];
                        for (x, d) in dst.iter_mut().zip(g.row(r)) {
                            *x += d;
                        }
                    }
                }),
                Op::Gather(a, index) => acc(*a, &mut |s| {
                    for (r, &i) in index.iter().enumerate() {
                        for (x, d) in s.row_mut(i).iter_mut().zip(g.row(r)) {
                            *x += d;
                        }
                    }
                }),
                Op::Overlay(head, index) => {
                    let rows = self.value(*head).rows;
                    acc(*head, &mut |s| {
                        for (r, &i) in index.iter().enumerate() {
                            if i < rows {
                                for (x, d) in s.row_mut(i).iter_mut().zip(g.row(r)) {
                                    *x += d;
                                }
                            }
                        }
                    });
                }
                Op::Select(take_new, new, old) => {
                    acc(*new, &mut |s| {
                        for (r, _) in take_new.iter().enumerate().filter(|(_, t)| **t) {
                            for (x, d) in s.row_mut(r).iter_mut().zip(g.row(r)) {
                                *x += d;
                            }
                        }
                    });
                    acc(*old, &mut |s| {
                        for (r, _) in take_new.iter().enumerate().filter(|(_, t)| !**t) {
                            for (x, d) in s.row_mut(r).iter_mut().zip(g.row(r)) {
                                *x += d;
                            }
                        }
                    });
                }
                Op::StackRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.value(*p).len();
                        acc(*p, &mut |s| {
                            for (x, d) in s.data.iter_mut().zip(&g.data[offset..offset + n]) {
                                *x += d;
                            }
                        });
                        offset += n;
                    }
                }
                Op::SoftmaxCrossEntropy { logits, targets, mask, probs, denom } => {
                    let scale = g.data[0] / denom;
                    acc(*logits, &mut |s| {
                        for r in 0..probs.rows {
                            if mask[r] == 0.0 {
                                continue;
                            }
                            let w = scale * mask[r];
                            for (c, x) in s.row_mut(r).iter_mut().enumerate() {
                                let onehot = if c == targets[r] { 1.0 } else { 0.0 };
                                *x += w * (probs.get(r, c) - onehot);
                            }
                        }
                    });
                }
            }
        }
        out
    }
}

/// Inverted dropout. In training mode each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise
/// the input is returned unchanged. Panics unless `0 <= rate < 1`.
pub fn dropout<R: Rng + ?Sized>(tape: &mut Tape<'_>, x: Var, rate: f64, training: bool, rng: &mut R) -> Var {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
    if !training || rate == 0.0 {
        return x;
    }
    let shape = tape.value(x).shape();
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..shape[0] * shape[1]).map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep }).collect();
    tape.mul_const(x, Tensor::from_vec(shape[0], shape[1], mask))
}

//! Append-only tape of dense matrix operations with reverse-mode gradients.
//!
//! Every node stores its forward value. Leaves are either parameters (tracked)
//! or constants (untracked); an operation node is tracked when any of its
//! inputs is. `backward` sweeps the tape from the root towards the leaves and
//! only visits tracked nodes, so constants and detached values stop
//! propagation.

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

/// Norms at or below this are treated as zero by the cosine and norm ops.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// Elementwise sum; the right operand may be a single row broadcast over
    /// every row of the left one (bias add).
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    LeakyRelu(NodeId, f64),
    ConcatCols(NodeId, NodeId),
    /// Column-wise mean over rows: r x c -> 1 x c.
    MeanRows(NodeId),
    MeanAll(NodeId),
    /// Euclidean norm of each row: r x c -> r x 1.
    L2NormRows(NodeId),
    /// Pairwise cosine similarity between the rows of two matrices:
    /// (n x l, m x l) -> n x m.
    CosineRows(NodeId, NodeId),
    Abs(NodeId),
    Sum(NodeId),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Mul(..) => "multiply",
            Op::Scale(..) => "scale",
            Op::Sigmoid(..) => "sigmoid",
            Op::Tanh(..) => "tanh",
            Op::LeakyRelu(..) => "leaky_relu",
            Op::ConcatCols(..) => "concat_cols",
            Op::MeanRows(..) => "mean_rows",
            Op::MeanAll(..) => "mean_all",
            Op::L2NormRows(..) => "l2_norm_rows",
            Op::CosineRows(..) => "cosine_rows",
            Op::Abs(..) => "abs",
            Op::Sum(..) => "sum",
        }
    }

    pub fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ConcatCols(a, b)
            | Op::CosineRows(a, b) => vec![a, b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::LeakyRelu(a, _)
            | Op::MeanRows(a)
            | Op::MeanAll(a)
            | Op::L2NormRows(a)
            | Op::Abs(a)
            | Op::Sum(a) => vec![a],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    tracked: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    /// Copies a node's value into a fresh constant leaf. Nothing computed from
    /// the returned node propagates gradient back to `id` or its ancestors.
    pub fn detach(&mut self, id: NodeId) -> NodeId {
        let value = self.value(id).clone();
        self.constant(value)
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn is_tracked(&self, id: NodeId) -> bool {
        self.nodes[id.0].tracked
    }

    /// Drops every node at index `len` and above. Ids of dropped nodes become
    /// invalid; only meant for inference loops that discard intermediates.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    fn push(&mut self, op: Op, value: Matrix, tracked: bool) -> NodeId {
        self.nodes.push(Node { op, value, tracked });
        NodeId(self.nodes.len() - 1)
    }

    fn shape_err(&self, op: &Op, a: NodeId, b: NodeId) -> Error {
        Error::Shape {
            op: op.name(),
            lhs: self.value(a).shape(),
            rhs: self.value(b).shape(),
        }
    }

    /// Evaluates `op` on existing nodes and appends the result.
    pub fn forward(&mut self, op: Op) -> Result<NodeId> {
        let inputs = op.inputs();
        for &i in &inputs {
            assert!(i.0 < self.nodes.len(), "node {i:?} is not on this tape");
        }
        let value = match op {
            Op::Leaf => return Err(Error::Config("leaves are created with param/constant".into())),
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                if x.cols() != y.rows() {
                    return Err(self.shape_err(&op, a, b));
                }
                gemm(x, false, y, false)
            }
            Op::Transpose(a) => self.value(a).transpose(),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                let sign = if matches!(op, Op::Add(..)) { 1.0 } else { -1.0 };
                if x.shape() == y.shape() {
                    x.zip_map(y, |p, q| p + sign * q)
                } else if matches!(op, Op::Add(..)) && y.rows() == 1 && y.cols() == x.cols() {
                    let bias = y.as_slice();
                    let mut out = x.clone();
                    for i in 0..out.rows() {
                        for (o, b) in out.row_mut(i).iter_mut().zip(bias) {
                            *o += b;
                        }
                    }
                    out
                } else {
                    return Err(self.shape_err(&op, a, b));
                }
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                if x.shape() != y.shape() {
                    return Err(self.shape_err(&op, a, b));
                }
                x.zip_map(y, |p, q| p * q)
            }
            Op::Scale(a, s) => self.value(a).map(|v| v * s),
            Op::Sigmoid(a) => self.value(a).map(sigmoid),
            Op::Tanh(a) => self.value(a).map(f64::tanh),
            Op::LeakyRelu(a, slope) => self.value(a).map(|v| if v > 0.0 { v } else { slope * v }),
            Op::ConcatCols(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                if x.rows() != y.rows() {
                    return Err(self.shape_err(&op, a, b));
                }
                let cols = x.cols() + y.cols();
                let mut data = Vec::with_capacity(x.rows() * cols);
                for i in 0..x.rows() {
                    data.extend_from_slice(x.row(i));
                    data.extend_from_slice(y.row(i));
                }
                Matrix::from_raw(x.rows(), cols, data)
            }
            Op::MeanRows(a) => {
                let x = self.value(a);
                if x.rows() == 0 {
                    return Err(self.shape_err(&op, a, a));
                }
                x.mean_rows()
            }
            Op::MeanAll(a) => {
                let x = self.value(a);
                if x.is_empty() {
                    return Err(self.shape_err(&op, a, a));
                }
                Matrix::scalar(x.sum() / x.len() as f64)
            }
            Op::L2NormRows(a) => {
                let x = self.value(a);
                Matrix::from_raw(x.rows(), 1, (0..x.rows()).map(|i| row_norm(x.row(i))).collect())
            }
            Op::CosineRows(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                if x.cols() != y.cols() {
                    return Err(self.shape_err(&op, a, b));
                }
                let xn = unit_rows(x).0;
                let yn = unit_rows(y).0;
                gemm(&xn, false, &yn, true).map(|v| v.clamp(-1.0, 1.0))
            }
            Op::Abs(a) => self.value(a).map(f64::abs),
            Op::Sum(a) => Matrix::scalar(self.value(a).sum()),
        };
        let tracked = inputs.iter().any(|&i| self.is_tracked(i));
        Ok(self.push(op, value, tracked))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        self.forward(Op::Transpose(a)).expect("transpose is total")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        self.forward(Op::Scale(a, s)).expect("scale is total")
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.forward(Op::Sigmoid(a)).expect("sigmoid is total")
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.forward(Op::Tanh(a)).expect("tanh is total")
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        self.forward(Op::LeakyRelu(a, slope)).expect("leaky_relu is total")
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(Op::ConcatCols(a, b))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(Op::MeanRows(a))
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        self.forward(Op::MeanAll(a))
    }

    pub fn l2_norm_rows(&mut self, a: NodeId) -> NodeId {
        self.forward(Op::L2NormRows(a)).expect("l2_norm_rows is total")
    }

    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.forward(Op::CosineRows(a, b))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.forward(Op::Abs(a)).expect("abs is total")
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        self.forward(Op::Sum(a)).expect("sum is total")
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let (rows, cols) = self.value(root).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        if !self.is_tracked(root) {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, out: &Matrix, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut send = |id: NodeId, contribution: Matrix| {
            if !self.is_tracked(id) {
                return;
            }
            match &mut grads[id.0] {
                Some(acc) => acc.add_assign(&contribution),
                slot => *slot = Some(contribution),
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.is_tracked(a) {
                    send(a, gemm(g, false, self.value(b), true));
                }
                if self.is_tracked(b) {
                    send(b, gemm(self.value(a), true, g, false));
                }
            }
            Op::Transpose(a) => send(a, g.transpose()),
            Op::Add(a, b) | Op::Sub(a, b) => {
                send(a, g.clone());
                if self.is_tracked(b) {
                    let sign = if matches!(node.op, Op::Add(..)) { 1.0 } else { -1.0 };
                    let gb = if self.value(b).shape() == g.shape() {
                        g.map(|v| sign * v)
                    } else {
                        Matrix::from_raw(1, g.cols(), col_sums(g))
                    };
                    send(b, gb);
                }
            }
            Op::Mul(a, b) => {
                if self.is_tracked(a) {
                    send(a, g.zip_map(self.value(b), |p, q| p * q));
                }
                if self.is_tracked(b) {
                    send(b, g.zip_map(self.value(a), |p, q| p * q));
                }
            }
            Op::Scale(a, s) => send(a, g.map(|v| v * s)),
            Op::Sigmoid(a) => send(a, g.zip_map(out, |gv, y| gv * y * (1.0 - y))),
            Op::Tanh(a) => send(a, g.zip_map(out, |gv, y| gv * (1.0 - y * y))),
            Op::LeakyRelu(a, slope) => send(
                a,
                g.zip_map(self.value(a), |gv, x| if x > 0.0 { gv } else { gv * slope }),
            ),
            Op::ConcatCols(a, b) => {
                let split = self.value(a).cols();
                let left = Matrix::from_fn(g.rows(), split, |i, j| g.get(i, j));
                let right = Matrix::from_fn(g.rows(), g.cols() - split, |i, j| g.get(i, split + j));
                send(a, left);
                send(b, right);
            }
            Op::MeanRows(a) => {
                let x = self.value(a);
                let inv = 1.0 / x.rows() as f64;
                send(a, Matrix::from_fn(x.rows(), x.cols(), |_, j| g.get(0, j) * inv));
            }
            Op::MeanAll(a) => {
                let x = self.value(a);
                send(a, Matrix::filled(x.rows(), x.cols(), g.item() / x.len() as f64));
            }
            Op::L2NormRows(a) => {
                let x = self.value(a);
                send(
                    a,
                    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
                        let n = out.get(i, 0);
                        if n > NORM_EPS {
                            g.get(i, 0) * x.get(i, j) / n
                        } else {
                            0.0
                        }
                    }),
                );
            }
            Op::CosineRows(a, b) => {
                let (x, y) = (self.value(a), self.value(b));
                let (xu, xn) = unit_rows(x);
                let (yu, yn) = unit_rows(y);
                // weight_i = sum_j g_ij * c_ij
                let gc = g.zip_map(out, |p, q| p * q);
                if self.is_tracked(a) {
                    let gy = gemm(g, false, &yu, false);
                    send(a, cosine_input_grad(x, &xn, &gy, &row_sums(&gc)));
                }
                if self.is_tracked(b) {
                    let gx = gemm(g, true, &xu, false);
                    send(b, cosine_input_grad(y, &yn, &gx, &col_sums(&gc)));
                }
            }
            Op::Abs(a) => send(
                a,
                g.zip_map(self.value(a), |gv, x| {
                    if x > 0.0 {
                        gv
                    } else if x < 0.0 {
                        -gv
                    } else {
                        0.0
                    }
                }),
            ),
            Op::Sum(a) => {
                let x = self.value(a);
                send(a, Matrix::filled(x.rows(), x.cols(), g.item()));
            }
        }
    }
}

/// d/dx_i of sum_j g_ij cos(x_i, y_j) given `gy = g * unit(y)` and
/// `weight_i = sum_j g_ij cos_ij`. Zero-norm rows get zero gradient.
fn cosine_input_grad(x: &Matrix, norms: &[f64], gy: &Matrix, weight: &[f64]) -> Matrix {
    Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        let n = norms[i];
        if n > NORM_EPS {
            gy.get(i, j) / n - weight[i] * x.get(i, j) / (n * n)
        } else {
            0.0
        }
    })
}

fn row_sums(m: &Matrix) -> Vec<f64> {
    (0..m.rows()).map(|i| m.row(i).iter().sum()).collect()
}

fn col_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    out
}

pub(crate) fn row_norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Rows scaled to unit length (zero rows stay zero) and the original norms.
pub(crate) fn unit_rows(x: &Matrix) -> (Matrix, Vec<f64>) {
    let norms: Vec<f64> = (0..x.rows()).map(|i| row_norm(x.row(i))).collect();
    let unit = Matrix::from_fn(x.rows(), x.cols(), |i, j| {
        if norms[i] > NORM_EPS {
            x.get(i, j) / norms[i]
        } else {
            0.0
        }
    });
    (unit, norms)
}

/// Cosine similarity of two vectors with the same zero-norm convention as
/// [`Op::CosineRows`].
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (row_norm(a), row_norm(b));
    if na <= NORM_EPS || nb <= NORM_EPS {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    (dot / (na * nb)).clamp(-1.0, 1.0)
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

/// Gradients from one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    /// The gradient of `id`, or zeros of `shape` when nothing reached it.
    pub fn get_or_zeros(&self, id: NodeId, shape: (usize, usize)) -> Matrix {
        self.get(id).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

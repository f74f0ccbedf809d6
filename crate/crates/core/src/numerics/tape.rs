//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! Every [`Graph`] call on a [`Tape`] appends one node holding the forward
//! value and whatever the backward rule needs. [`Tape::backward`] sweeps the
//! nodes in reverse order, accumulating adjoints. Node inputs always refer to
//! earlier nodes, so the recording order is already a topological order.

use std::collections::HashMap;
use std::rc::Rc;

use super::graph::Graph;
use super::kernels::{self, BnMode, BnStats, Segments};
use super::matrix::gemm;
use super::{Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::probe;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    GatherCols(Var, Rc<[usize]>),
    SegmentMax(Var, Vec<usize>),
    MeanRows(Var),
    Sum(Var),
    Mean(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Matrix,
    },
}

impl Op {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::MatMul(..) => OpKind::MatMul,
            Op::AddRowBias(..) => OpKind::AddRowBias,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Scale(..) => OpKind::Scale,
            Op::Relu(_) => OpKind::Relu,
            Op::Sigmoid(_) => OpKind::Sigmoid,
            Op::Softplus(_) => OpKind::Softplus,
            Op::ConcatCols(..) => OpKind::ConcatCols,
            Op::SliceCols(..) => OpKind::SliceCols,
            Op::GatherRows(..) => OpKind::GatherRows,
            Op::GatherCols(..) => OpKind::GatherCols,
            Op::SegmentMax(..) => OpKind::SegmentMax,
            Op::MeanRows(_) => OpKind::MeanRows,
            Op::Sum(_) => OpKind::Sum,
            Op::Mean(_) => OpKind::Mean,
            Op::BatchNorm { .. } => OpKind::BatchNorm,
            Op::SoftmaxCrossEntropy { .. } => OpKind::SoftmaxCrossEntropy,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::AddRowBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ConcatCols(a, b) => vec![a, b],
            Op::Scale(x, _)
            | Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Softplus(x)
            | Op::SliceCols(x, _)
            | Op::GatherRows(x, _)
            | Op::GatherCols(x, _)
            | Op::SegmentMax(x, _)
            | Op::MeanRows(x)
            | Op::Sum(x)
            | Op::Mean(x) => vec![x],
            Op::BatchNorm { x, gamma, beta, .. } => vec![x, gamma, beta],
            Op::SoftmaxCrossEntropy { logits, .. } => vec![logits],
        }
    }
}

/// Kind of primitive that produced a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    MatMul,
    AddRowBias,
    Add,
    Sub,
    Mul,
    Scale,
    Relu,
    Sigmoid,
    Softplus,
    ConcatCols,
    SliceCols,
    GatherRows,
    GatherCols,
    SegmentMax,
    MeanRows,
    Sum,
    Mean,
    BatchNorm,
    SoftmaxCrossEntropy,
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Matrix,
    needs_grad: bool,
}

/// Read-only view of one recorded node.
#[derive(Debug)]
pub struct TapeNode<'a> {
    pub kind: OpKind,
    pub inputs: Vec<Var>,
    pub value: &'a Matrix,
    pub adjoint: Option<&'a Matrix>,
}

/// Records primitives for a single backward pass. Not `Send`: a tape belongs
/// to one training step on one thread.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    adjoints: Vec<Option<Matrix>>,
    params: HashMap<(u64, usize), Var>,
    swept: bool,
    _not_send: std::marker::PhantomData<Rc<()>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        probe::record_tape();
        Tape {
            nodes: Vec::new(),
            adjoints: Vec::new(),
            params: HashMap::new(),
            swept: false,
            _not_send: std::marker::PhantomData,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Clears all nodes so the tape can record a new graph.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.adjoints.clear();
        self.params.clear();
        self.swept = false;
    }

    pub fn node(&self, var: Var) -> TapeNode<'_> {
        let n = &self.nodes[var.0];
        TapeNode {
            kind: n.op.kind(),
            inputs: n.op.inputs(),
            value: &n.value,
            adjoint: self.adjoints.get(var.0).and_then(Option::as_ref),
        }
    }

    /// Gradient of the swept loss with respect to `var`, once [`backward`](Self::backward) ran.
    /// `None` when no path connects `var` to the loss.
    pub fn adjoint(&self, var: Var) -> Option<&Matrix> {
        self.adjoints.get(var.0).and_then(Option::as_ref)
    }

    /// Differentiable leaf that is not tied to a parameter store.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    fn push(&mut self, op: Op, value: Matrix, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, value: Matrix) -> Var {
        let needs_grad = op.inputs().iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(op, value, needs_grad)
    }

    fn val(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Reverse sweep from a 1×1 loss node. Returns the gradient of every
    /// parameter registered on this tape.
    ///
    /// A tape can be swept once; call [`reset`](Self::reset) before reuse.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.swept {
            return Err(Error::Contract(
                "backward already ran on this tape; reset it first".into(),
            ));
        }
        let shape = self.val(loss).shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar (1x1) loss, got {}x{}",
                shape.0, shape.1
            )));
        }
        self.swept = true;
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if self.nodes[i].needs_grad {
                self.backprop(i, &g, &mut adj);
            }
            adj[i] = Some(g);
        }
        self.adjoints = adj;
        let mut by_param = HashMap::with_capacity(self.params.len());
        for (&key, &var) in &self.params {
            if let Some(g) = &self.adjoints[var.0] {
                by_param.insert(key, g.clone());
            }
        }
        Ok(Gradients { by_param })
    }

    fn backprop(&self, i: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let nodes = &self.nodes;
        let wants = |v: Var| nodes[v.0].needs_grad;
        match &nodes[i].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                if wants(a) {
                    let buf = slot(adj, a, nodes);
                    gemm(g, false, &nodes[b.0].value, true, buf, 1.0);
                }
                if wants(b) {
                    let buf = slot(adj, b, nodes);
                    gemm(&nodes[a.0].value, true, g, false, buf, 1.0);
                }
            }
            &Op::AddRowBias(x, b) => {
                if wants(x) {
                    slot(adj, x, nodes).add_assign(g);
                }
                if wants(b) {
                    let buf = slot(adj, b, nodes);
                    for r in 0..g.rows() {
                        for (o, v) in buf.data_mut().iter_mut().zip(g.row(r)) {
                            *o += v;
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                for v in [a, b] {
                    if wants(v) {
                        slot(adj, v, nodes).add_assign(g);
                    }
                }
            }
            &Op::Sub(a, b) => {
                if wants(a) {
                    slot(adj, a, nodes).add_assign(g);
                }
                if wants(b) {
                    let buf = slot(adj, b, nodes);
                    for (o, v) in buf.data_mut().iter_mut().zip(g.data()) {
                        *o -= v;
                    }
                }
            }
            &Op::Mul(a, b) => {
                if wants(a) {
                    let other = &nodes[b.0].value;
                    let buf = slot(adj, a, nodes);
                    for ((o, gv), ov) in buf.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
                        *o += gv * ov;
                    }
                }
                if wants(b) {
                    let other = &nodes[a.0].value;
                    let buf = slot(adj, b, nodes);
                    for ((o, gv), ov) in buf.data_mut().iter_mut().zip(g.data()).zip(other.data()) {
                        *o += gv * ov;
                    }
                }
            }
            &Op::Scale(x, s) => {
                let buf = slot(adj, x, nodes);
                for (o, gv) in buf.data_mut().iter_mut().zip(g.data()) {
                    *o += s * gv;
                }
            }
            &Op::Relu(x) => {
                let input = &nodes[x.0].value;
                let buf = slot(adj, x, nodes);
                for ((o, gv), xv) in buf.data_mut().iter_mut().zip(g.data()).zip(input.data()) {
                    if *xv > 0.0 {
                        *o += gv;
                    }
                }
            }
            &Op::Sigmoid(x) => {
                let y = &nodes[i].value;
                let buf = slot(adj, x, nodes);
                for ((o, gv), yv) in buf.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *o += gv * yv * (1.0 - yv);
                }
            }
            &Op::Softplus(x) => {
                let input = &nodes[x.0].value;
                let buf = slot(adj, x, nodes);
                for ((o, gv), xv) in buf.data_mut().iter_mut().zip(g.data()).zip(input.data()) {
                    *o += gv * kernels::sigmoid(*xv);
                }
            }
            &Op::ConcatCols(a, b) => {
                let left = nodes[a.0].value.cols();
                if wants(a) {
                    let buf = slot(adj, a, nodes);
                    for r in 0..g.rows() {
                        for (o, v) in buf.row_mut(r).iter_mut().zip(&g.row(r)[..left]) {
                            *o += v;
                        }
                    }
                }
                if wants(b) {
                    let buf = slot(adj, b, nodes);
                    for r in 0..g.rows() {
                        for (o, v) in buf.row_mut(r).iter_mut().zip(&g.row(r)[left..]) {
                            *o += v;
                        }
                    }
                }
            }
            &Op::SliceCols(x, start) => {
                let buf = slot(adj, x, nodes);
                for r in 0..g.rows() {
                    let dst = &mut buf.row_mut(r)[start..start + g.cols()];
                    for (o, v) in dst.iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::GatherRows(x, index) => {
                let buf = slot(adj, *x, nodes);
                for (r, &src) in index.iter().enumerate() {
                    for (o, v) in buf.row_mut(src).iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
            }
            Op::GatherCols(x, index) => {
                let buf = slot(adj, *x, nodes);
                for r in 0..g.rows() {
                    let gr = g.row(r);
                    let br = buf.row_mut(r);
                    for (j, &src) in index.iter().enumerate() {
                        br[src] += gr[j];
                    }
                }
            }
            Op::SegmentMax(x, argmax) => {
                let cols = g.cols();
                let buf = slot(adj, *x, nodes);
                for s in 0..g.rows() {
                    for c in 0..cols {
                        let r = argmax[s * cols + c];
                        buf.data_mut()[r * cols + c] += g.get(s, c);
                    }
                }
            }
            &Op::MeanRows(x) => {
                let buf = slot(adj, x, nodes);
                let n = buf.rows() as f64;
                for r in 0..buf.rows() {
                    for (o, v) in buf.row_mut(r).iter_mut().zip(g.row(0)) {
                        *o += v / n;
                    }
                }
            }
            &Op::Sum(x) => {
                let gv = g.item();
                slot(adj, x, nodes).data_mut().iter_mut().for_each(|o| *o += gv);
            }
            &Op::Mean(x) => {
                let buf = slot(adj, x, nodes);
                let gv = g.item() / buf.len().max(1) as f64;
                buf.data_mut().iter_mut().for_each(|o| *o += gv);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let d = g.cols();
                let n = g.rows() as f64;
                let mut sum_g = vec![0.0; d];
                let mut sum_gx = vec![0.0; d];
                for r in 0..g.rows() {
                    for ((c, gv), hv) in g.row(r).iter().enumerate().zip(xhat.row(r)) {
                        sum_g[c] += gv;
                        sum_gx[c] += gv * hv;
                    }
                }
                if wants(*gamma) {
                    let buf = slot(adj, *gamma, nodes);
                    for (o, v) in buf.data_mut().iter_mut().zip(&sum_gx) {
                        *o += v;
                    }
                }
                if wants(*beta) {
                    let buf = slot(adj, *beta, nodes);
                    for (o, v) in buf.data_mut().iter_mut().zip(&sum_g) {
                        *o += v;
                    }
                }
                if wants(*x) {
                    let gam = nodes[gamma.0].value.row(0).to_vec();
                    let buf = slot(adj, *x, nodes);
                    for r in 0..g.rows() {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        let br = buf.row_mut(r);
                        for c in 0..d {
                            let k = gam[c] * inv_std[c];
                            br[c] += if *batch_stats {
                                k * (gr[c] - sum_g[c] / n - hr[c] * sum_gx[c] / n)
                            } else {
                                k * gr[c]
                            };
                        }
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let scale = g.item() / labels.len() as f64;
                let buf = slot(adj, *logits, nodes);
                for (r, &label) in labels.iter().enumerate() {
                    let pr = probs.row(r);
                    let br = buf.row_mut(r);
                    for c in 0..pr.len() {
                        let onehot = if c == label { 1.0 } else { 0.0 };
                        br[c] += scale * (pr[c] - onehot);
                    }
                }
            }
        }
    }
}

fn slot<'a>(adj: &'a mut [Option<Matrix>], v: Var, nodes: &[Node]) -> &'a mut Matrix {
    adj[v.0].get_or_insert_with(|| {
        let (r, c) = nodes[v.0].value.shape();
        Matrix::zeros(r, c)
    })
}

/// Parameter gradients produced by one [`Tape::backward`] sweep.
#[derive(Debug, Default)]
pub struct Gradients {
    by_param: HashMap<(u64, usize), Matrix>,
}

impl Gradients {
    /// Gradient of one parameter; zero when it had no path to the loss or was never used.
    pub fn get(&self, store: &ParamStore, id: ParamId) -> Matrix {
        self.by_param
            .get(&(store.key(), id.0))
            .cloned()
            .unwrap_or_else(|| {
                let (r, c) = store.get(id).shape();
                Matrix::zeros(r, c)
            })
    }

    /// Gradients for every tensor of `store`, in store order.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Matrix> {
        store.ids().map(|id| self.get(store, id)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.by_param.values().all(Matrix::is_finite)
    }
}

impl Graph for Tape {
    type Node = Var;

    fn value<'a>(&'a self, node: &'a Var) -> &'a Matrix {
        &self.nodes[node.0].value
    }

    fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let key = (store.key(), id.0);
        if let Some(&v) = self.params.get(&key) {
            return v;
        }
        let v = self.push(Op::Leaf, store.get(id).clone(), true);
        self.params.insert(key, v);
        v
    }

    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).matmul(self.val(*b))?;
        Ok(self.push_op(Op::MatMul(*a, *b), out))
    }

    fn add_row_bias(&mut self, x: &Var, bias: &Var) -> Result<Var> {
        let out = kernels::add_row_bias(self.val(*x), self.val(*bias))?;
        Ok(self.push_op(Op::AddRowBias(*x, *bias), out))
    }

    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).zip_map(self.val(*b), "add", |x, y| x + y)?;
        Ok(self.push_op(Op::Add(*a, *b), out))
    }

    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).zip_map(self.val(*b), "sub", |x, y| x - y)?;
        Ok(self.push_op(Op::Sub(*a, *b), out))
    }

    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).zip_map(self.val(*b), "mul", |x, y| x * y)?;
        Ok(self.push_op(Op::Mul(*a, *b), out))
    }

    fn scale(&mut self, x: &Var, s: f64) -> Var {
        let out = self.val(*x).scale(s);
        self.push_op(Op::Scale(*x, s), out)
    }

    fn relu(&mut self, x: &Var) -> Var {
        let out = self.val(*x).map(kernels::relu);
        self.push_op(Op::Relu(*x), out)
    }

    fn sigmoid(&mut self, x: &Var) -> Var {
        let out = self.val(*x).map(kernels::sigmoid);
        self.push_op(Op::Sigmoid(*x), out)
    }

    fn softplus(&mut self, x: &Var) -> Var {
        let out = self.val(*x).map(kernels::softplus);
        self.push_op(Op::Softplus(*x), out)
    }

    fn concat_cols(&mut self, a: &Var, b: &Var) -> Result<Var> {
        let out = self.val(*a).concat_cols(self.val(*b))?;
        Ok(self.push_op(Op::ConcatCols(*a, *b), out))
    }

    fn slice_cols(&mut self, x: &Var, start: usize, end: usize) -> Result<Var> {
        let out = self.val(*x).slice_cols(start, end)?;
        Ok(self.push_op(Op::SliceCols(*x, start), out))
    }

    fn gather_rows(&mut self, x: &Var, index: Rc<[usize]>) -> Result<Var> {
        let out = self.val(*x).gather_rows(&index)?;
        Ok(self.push_op(Op::GatherRows(*x, index), out))
    }

    fn gather_cols(&mut self, x: &Var, index: Rc<[usize]>) -> Result<Var> {
        let out = self.val(*x).gather_cols(&index)?;
        Ok(self.push_op(Op::GatherCols(*x, index), out))
    }

    fn segment_max(&mut self, x: &Var, segments: &Segments) -> Result<Var> {
        let (out, argmax) = kernels::segment_max(self.val(*x), segments)?;
        Ok(self.push_op(Op::SegmentMax(*x, argmax), out))
    }

    fn mean_rows(&mut self, x: &Var) -> Result<Var> {
        let out = kernels::mean_rows(self.val(*x))?;
        Ok(self.push_op(Op::MeanRows(*x), out))
    }

    fn sum(&mut self, x: &Var) -> Var {
        let out = Matrix::scalar(self.val(*x).sum());
        self.push_op(Op::Sum(*x), out)
    }

    fn mean(&mut self, x: &Var) -> Var {
        let m = self.val(*x);
        let out = Matrix::scalar(m.sum() / m.len().max(1) as f64);
        self.push_op(Op::Mean(*x), out)
    }

    fn batch_norm(
        &mut self,
        x: &Var,
        gamma: &Var,
        beta: &Var,
        stats: &mut BnStats,
        mode: BnMode,
    ) -> Result<Var> {
        let f = kernels::batch_norm(self.val(*x), self.val(*gamma), self.val(*beta), stats, mode)?;
        let op = Op::BatchNorm {
            x: *x,
            gamma: *gamma,
            beta: *beta,
            xhat: f.xhat,
            inv_std: f.inv_std,
            batch_stats: mode != BnMode::Eval,
        };
        Ok(self.push_op(op, f.out))
    }

    fn softmax_cross_entropy(&mut self, logits: &Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = kernels::softmax_cross_entropy(self.val(*logits), labels)?;
        let op = Op::SoftmaxCrossEntropy {
            logits: *logits,
            labels: labels.to_vec(),
            probs,
        };
        Ok(self.push_op(op, Matrix::scalar(loss)))
    }
}

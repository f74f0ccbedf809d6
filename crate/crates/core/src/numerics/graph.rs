use std::rc::Rc;

use super::kernels::{self, BnMode, BnStats, Segments};
use super::{Matrix, ParamId, ParamStore};
use crate::error::Result;

/// The differentiable primitive set. [`Tape`](super::Tape) records every call
/// for a later backward sweep; [`Eager`] only evaluates.
///
/// Model code is written once against this trait so inference can run without
/// building a tape at all.
pub trait Graph {
    type Node: Clone;

    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Matrix;
    fn constant(&mut self, value: Matrix) -> Self::Node;
    /// A learnable tensor. Registering the same parameter twice returns the same node.
    fn param(&mut self, store: &ParamStore, id: ParamId) -> Self::Node;

    fn matmul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    /// Adds a 1×cols row to every row of `x`.
    fn add_row_bias(&mut self, x: &Self::Node, bias: &Self::Node) -> Result<Self::Node>;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    /// Elementwise product.
    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn scale(&mut self, x: &Self::Node, s: f64) -> Self::Node;

    fn relu(&mut self, x: &Self::Node) -> Self::Node;
    fn sigmoid(&mut self, x: &Self::Node) -> Self::Node;
    fn softplus(&mut self, x: &Self::Node) -> Self::Node;

    fn concat_cols(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn slice_cols(&mut self, x: &Self::Node, start: usize, end: usize) -> Result<Self::Node>;
    /// Output row `i` is input row `index[i]`; rows may repeat.
    fn gather_rows(&mut self, x: &Self::Node, index: Rc<[usize]>) -> Result<Self::Node>;
    /// Output column `j` is input column `index[j]`.
    fn gather_cols(&mut self, x: &Self::Node, index: Rc<[usize]>) -> Result<Self::Node>;

    /// Column-wise max within each row segment (ties to the lowest row).
    fn segment_max(&mut self, x: &Self::Node, segments: &Segments) -> Result<Self::Node>;
    fn mean_rows(&mut self, x: &Self::Node) -> Result<Self::Node>;
    /// Sum of all entries as a 1×1 node.
    fn sum(&mut self, x: &Self::Node) -> Self::Node;
    /// Mean of all entries as a 1×1 node.
    fn mean(&mut self, x: &Self::Node) -> Self::Node;

    fn batch_norm(
        &mut self,
        x: &Self::Node,
        gamma: &Self::Node,
        beta: &Self::Node,
        stats: &mut BnStats,
        mode: BnMode,
    ) -> Result<Self::Node>;

    /// Mean cross-entropy of row-wise softmax against `labels`, as a 1×1 node.
    fn softmax_cross_entropy(&mut self, logits: &Self::Node, labels: &[usize]) -> Result<Self::Node>;

    /// Column-wise max over all rows.
    fn max_pool_rows(&mut self, x: &Self::Node) -> Result<Self::Node> {
        let rows = self.value(x).rows();
        self.segment_max(x, &Segments::uniform(usize::from(rows > 0), rows))
    }

    fn mean_pool_rows(&mut self, x: &Self::Node) -> Result<Self::Node> {
        self.mean_rows(x)
    }
}

/// Evaluates primitives immediately and keeps no history.
#[derive(Debug, Default)]
pub struct Eager {
    _private: (),
}

impl Eager {
    pub fn new() -> Self {
        Eager { _private: () }
    }
}

impl Graph for Eager {
    type Node = Rc<Matrix>;

    fn value<'a>(&'a self, node: &'a Self::Node) -> &'a Matrix {
        node
    }

    fn constant(&mut self, value: Matrix) -> Self::Node {
        Rc::new(value)
    }

    fn param(&mut self, store: &ParamStore, id: ParamId) -> Self::Node {
        Rc::new(store.get(id).clone())
    }

    fn matmul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        a.matmul(b).map(Rc::new)
    }

    fn add_row_bias(&mut self, x: &Self::Node, bias: &Self::Node) -> Result<Self::Node> {
        kernels::add_row_bias(x, bias).map(Rc::new)
    }

    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        a.zip_map(b, "add", |x, y| x + y).map(Rc::new)
    }

    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        a.zip_map(b, "sub", |x, y| x - y).map(Rc::new)
    }

    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        a.zip_map(b, "mul", |x, y| x * y).map(Rc::new)
    }

    fn scale(&mut self, x: &Self::Node, s: f64) -> Self::Node {
        Rc::new(x.scale(s))
    }

    fn relu(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(x.map(kernels::relu))
    }

    fn sigmoid(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(x.map(kernels::sigmoid))
    }

    fn softplus(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(x.map(kernels::softplus))
    }

    fn concat_cols(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        a.concat_cols(b).map(Rc::new)
    }

    fn slice_cols(&mut self, x: &Self::Node, start: usize, end: usize) -> Result<Self::Node> {
        x.slice_cols(start, end).map(Rc::new)
    }

    fn gather_rows(&mut self, x: &Self::Node, index: Rc<[usize]>) -> Result<Self::Node> {
        x.gather_rows(&index).map(Rc::new)
    }

    fn gather_cols(&mut self, x: &Self::Node, index: Rc<[usize]>) -> Result<Self::Node> {
        x.gather_cols(&index).map(Rc::new)
    }

    fn segment_max(&mut self, x: &Self::Node, segments: &Segments) -> Result<Self::Node> {
        kernels::segment_max(x, segments).map(|(m, _)| Rc::new(m))
    }

    fn mean_rows(&mut self, x: &Self::Node) -> Result<Self::Node> {
        kernels::mean_rows(x).map(Rc::new)
    }

    fn sum(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(Matrix::scalar(x.sum()))
    }

    fn mean(&mut self, x: &Self::Node) -> Self::Node {
        Rc::new(Matrix::scalar(x.sum() / x.len().max(1) as f64))
    }

    fn batch_norm(
        &mut self,
        x: &Self::Node,
        gamma: &Self::Node,
        beta: &Self::Node,
        stats: &mut BnStats,
        mode: BnMode,
    ) -> Result<Self::Node> {
        kernels::batch_norm(x, gamma, beta, stats, mode).map(|f| Rc::new(f.out))
    }

    fn softmax_cross_entropy(&mut self, logits: &Self::Node, labels: &[usize]) -> Result<Self::Node> {
        kernels::softmax_cross_entropy(logits, labels).map(|(l, _)| Rc::new(Matrix::scalar(l)))
    }
}

//! Define-by-run reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! A [`Tape`] records every operation as a node holding its output value and
//! the ids of its operands. Because a node can only reference nodes created
//! before it, the tape is topologically ordered by construction and
//! [`Tape::backward`] is a single reverse sweep.
//!
//! Adjoints of leaf nodes accumulate across backward passes until
//! [`Tape::zero_grad`] is called; interior adjoints are transient and are
//! released as soon as they have been propagated.

mod backward;
pub(crate) mod kernels;
mod ops;

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

/// Errors raised by tape operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: non-finite or out-of-domain input")]
    NumericalDomain { op: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{op}: index {index} out of range for length {len}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("{op}: {reason}")]
    Invalid {
        op: &'static str,
        reason: &'static str,
    },
}

pub type Result<T, E = TensorError> = core::result::Result<T, E>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    /// Position of the node on its tape.
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    /// `scale * x + shift`; only the scale matters for the gradient.
    Affine(Var, f64),
    Exp(Var),
    Log(Var),
    Sigmoid(Var),
    Tanh(Var),
    Elu(Var),
    ClampMin(Var, f64),
    MatMul(Var, Var),
    BatchMatMul { a: Var, b: Var, transpose_b: bool },
    Concat(Vec<Var>),
    SliceLast { x: Var, start: usize },
    Sum { x: Var, axis: usize },
    Mean { x: Var, axis: usize },
    SumAll(Var),
    Softmax(Var),
    LogSoftmax(Var),
    IndexSelect { x: Var, index: Arc<[usize]> },
    ScatterAdd { x: Var, index: Arc<[usize]> },
    Reshape(Var),
    BroadcastTo(Var),
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) shape: Vec<usize>,
    pub(crate) value: Vec<f64>,
    pub(crate) op: Op,
    pub(crate) requires_grad: bool,
}

/// The computation tape. Single-threaded; build one per forward pass.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    pub(crate) nodes: Vec<Node>,
    /// Accumulated adjoints of leaf nodes, indexed by node id.
    adjoints: Vec<Option<Vec<f64>>>,
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

    /// A differentiable input (parameter).
    pub fn leaf(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.input(shape, data, true)
    }

    /// A non-differentiable input (data, noise).
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        self.input(shape, data, false)
    }

    pub fn zeros(&mut self, shape: &[usize]) -> Var {
        let n = kernels::numel(shape);
        self.push(shape.to_vec(), vec![0.0; n], Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.push(Vec::new(), vec![value], Op::Leaf, false)
    }

    fn input(&mut self, shape: &[usize], data: Vec<f64>, requires_grad: bool) -> Result<Var> {
        if kernels::numel(shape) != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "input",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    pub(crate) fn push(
        &mut self,
        shape: Vec<usize>,
        value: Vec<f64>,
        op: Op,
        requires_grad: bool,
    ) -> Var {
        debug_assert_eq!(kernels::numel(&shape), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub(crate) fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// The single element of a scalar-sized node.
    pub fn item(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Accumulated adjoint of a leaf; all zeros if nothing reached it yet.
    pub fn adjoint(&self, v: Var) -> Vec<f64> {
        match self.adjoints.get(v.0) {
            Some(Some(g)) => g.clone(),
            _ => vec![0.0; self.nodes[v.0].value.len()],
        }
    }

    /// Moves the accumulated adjoint of a leaf out of the tape.
    pub fn take_adjoint(&mut self, v: Var) -> Vec<f64> {
        match self.adjoints.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => vec![0.0; self.nodes[v.0].value.len()],
        }
    }

    pub fn zero_grad(&mut self) {
        self.adjoints.clear();
    }

    /// Propagates d(loss)/d(node) to every differentiable leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = &self.nodes[loss.0].shape;
        if self.nodes[loss.0].value.len() != 1 {
            return Err(TensorError::NonScalarLoss(shape.clone()));
        }
        let mut pass: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        pass[loss.0] = Some(vec![1.0]);
        if self.adjoints.len() < self.nodes.len() {
            self.adjoints.resize(self.nodes.len(), None);
        }
        for id in (0..=loss.0).rev() {
            let Some(grad) = pass[id].take() else {
                continue;
            };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                match &mut self.adjoints[id] {
                    Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g),
                    slot @ None => *slot = Some(grad),
                }
                continue;
            }
            backward::propagate(&self.nodes, Var(id), &grad, &mut pass);
        }
        Ok(())
    }
}

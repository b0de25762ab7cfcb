use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::error::{invalid, shape_err, Result};
use crate::scalar::Scalar;

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

/// Operation recorded on a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpKind {
    MatMul,
    Add,
    Sub,
    Mul,
    AddRow,
    MulRow,
    Scale,
    AddScalar,
    Concat,
    Slice,
    Transpose,
    Flip,
    Softmax,
    LogSoftmax,
    LayerNorm,
    Silu,
    Relu,
    Sigmoid,
    Exp,
    Softplus,
    ConvDown,
    ConvUp,
    Dropout,
    Sum,
    Mean,
    MeanRows,
    Dft,
    GradGate,
    SelectiveScan,
    Custom,
}

/// What a backward closure sees when it is invoked.
pub struct BackwardArgs<'a, T: Scalar> {
    /// Gradient of the loss with respect to this node's output.
    pub grad: &'a [T],
    /// The forward output.
    pub output: &'a [T],
    pub parents: &'a [Tensor<T>],
}

/// Maps the output gradient to one optional gradient per parent.
pub type BackwardFn<T> = Box<dyn Fn(&BackwardArgs<'_, T>) -> Vec<Option<Vec<T>>> + Send + Sync>;

pub struct TapeNode<T: Scalar> {
    pub op: OpKind,
    parents: Vec<Tensor<T>>,
    backward: BackwardFn<T>,
}

struct Inner<T: Scalar> {
    id: usize,
    shape: Vec<usize>,
    data: RwLock<Vec<T>>,
    grad: Mutex<Option<Vec<T>>>,
    requires_grad: bool,
    node: Option<TapeNode<T>>,
}

/// Dense row-major array with an optional tape node.
///
/// Cloning is cheap and shares storage; parameters are mutated in place by
/// the optimizer through [`Tensor::data_mut`].
pub struct Tensor<T: Scalar> {
    inner: Arc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self { inner: Arc::clone(&self.inner) }
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .field("op", &self.inner.node.as_ref().map(|n| n.op))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Scalar> Tensor<T> {
    fn build(shape: Vec<usize>, data: Vec<T>, requires_grad: bool, node: Option<TapeNode<T>>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Self {
            inner: Arc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data: RwLock::new(data),
                grad: Mutex::new(None),
                requires_grad,
                node,
            }),
        }
    }

    /// A constant tensor that never accumulates gradient.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::checked(shape, data, false)
    }

    /// A leaf parameter that receives gradients during backward.
    pub fn param(shape: &[usize], data: Vec<T>) -> Result<Self> {
        Self::checked(shape, data, true)
    }

    /// Like [`Tensor::new`] but with an explicit gradient flag.
    pub fn leaf(shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Self> {
        Self::checked(shape, data, requires_grad)
    }

    fn checked(shape: &[usize], data: Vec<T>, requires_grad: bool) -> Result<Self> {
        if shape.iter().any(|&s| s == 0) {
            return invalid(format!("shape {shape:?} has a zero extent"));
        }
        if numel(shape) != data.len() {
            return shape_err(format!(
                "shape {shape:?} holds {} values, got {}",
                numel(shape),
                data.len()
            ));
        }
        Ok(Self::build(shape.to_vec(), data, requires_grad, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::build(shape.to_vec(), vec![T::zero(); numel(shape)], false, None)
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::build(shape.to_vec(), vec![value; numel(shape)], false, None)
    }

    pub fn scalar(value: T) -> Self {
        Self::build(vec![1], vec![value], false, None)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return shape_err("ragged rows");
        }
        Self::new(&[rows.len(), cols], rows.concat())
    }

    /// Records the result of an operation. A tape node is kept only when some
    /// parent requires a gradient.
    pub fn from_op(
        op: OpKind,
        shape: Vec<usize>,
        data: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: BackwardFn<T>,
    ) -> Self {
        let requires_grad = parents.iter().any(Tensor::requires_grad);
        let node = requires_grad.then(|| TapeNode { op, parents, backward });
        Self::build(shape, data, requires_grad, node)
    }

    pub fn id(&self) -> usize {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        numel(&self.inner.shape)
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape() {
            [r, c] => Ok((*r, *c)),
            s => shape_err(format!("expected a matrix, got shape {s:?}")),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn op(&self) -> Option<OpKind> {
        self.inner.node.as_ref().map(|n| n.op)
    }

    pub fn data(&self) -> RwLockReadGuard<'_, Vec<T>> {
        self.inner.data.read().expect("tensor data lock poisoned")
    }

    /// Mutable access for optimizers and initialisers. Only meaningful on
    /// leaves; mutating an interior node does not re-run its producers.
    pub fn data_mut(&self) -> RwLockWriteGuard<'_, Vec<T>> {
        self.inner.data.write().expect("tensor data lock poisoned")
    }

    pub fn to_vec(&self) -> Vec<T> {
        self.data().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return shape_err(format!("item() on shape {:?}", self.shape()));
        }
        Ok(self.data()[0])
    }

    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.lock().expect("grad lock poisoned") = None;
    }

    fn accumulate_grad(&self, g: &[T]) {
        let mut slot = self.inner.grad.lock().expect("grad lock poisoned");
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// A copy with the same values and no tape history.
    pub fn detach(&self) -> Self {
        Self::build(self.shape().to_vec(), self.to_vec(), false, None)
    }

    /// Reverse-mode sweep from a scalar loss.
    ///
    /// Every tensor with `requires_grad` reachable from `self` has
    /// d(self)/d(tensor) added into its gradient buffer, so repeated calls
    /// accumulate.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return invalid(format!("backward needs a scalar loss, got shape {:?}", self.shape()));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topological_order();
        let mut pending: HashMap<usize, Vec<T>> = HashMap::new();
        pending.insert(self.id(), vec![T::one()]);
        for tensor in order.iter().rev() {
            let Some(grad) = pending.remove(&tensor.id()) else {
                continue;
            };
            tensor.accumulate_grad(&grad);
            let Some(node) = tensor.inner.node.as_ref() else {
                continue;
            };
            let output = tensor.data();
            let parent_grads = (node.backward)(&BackwardArgs {
                grad: &grad,
                output: &output,
                parents: &node.parents,
            });
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (parent, pg) in node.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !parent.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), parent.numel(), "{:?} gradient size", node.op);
                match pending.get_mut(&parent.id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                    None => {
                        pending.insert(parent.id(), pg);
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the gradient-carrying subgraph; parents precede children.
    fn topological_order(&self) -> Vec<Tensor<T>> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor<T>, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.id());
        while let Some((tensor, next_parent)) = stack.pop() {
            let parents = tensor.inner.node.as_ref().map_or(&[][..], |n| &n.parents[..]);
            if let Some(parent) = parents.get(next_parent) {
                let parent = parent.clone();
                stack.push((tensor, next_parent + 1));
                if parent.requires_grad() && visited.insert(parent.id()) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(tensor);
            }
        }
        order
    }
}

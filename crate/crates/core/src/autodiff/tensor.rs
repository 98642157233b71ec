//! Tensor nodes and the reverse pass.

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::{HashMap, HashSet};
use std::rc::Rc;

use super::AutodiffError;

/// Element type for tensors. Training uses `f32`; gradient checks use `f64`.
pub trait Scalar:
    num_traits::Float + num_traits::FromPrimitive + num_traits::ToPrimitive + std::fmt::Debug + Send + Sync + 'static
{
    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(1) };
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Run `f` without recording the graph: ops return constant nodes and
/// intermediate activations are freed as soon as they go out of scope.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    let prev = NO_GRAD.with(|c| c.replace(true));
    let out = f();
    NO_GRAD.with(|c| c.set(prev));
    out
}

pub(crate) fn grad_enabled() -> bool {
    !NO_GRAD.with(|c| c.get())
}

type BackwardFn<T> = Box<dyn Fn(&[T], &mut Adjoints<T>)>;

struct Inner<T: Scalar> {
    id: u64,
    shape: Vec<usize>,
    values: RefCell<Vec<T>>,
    /// Persistent gradient storage; populated for leaves that require grad.
    grad: RefCell<Option<Vec<T>>>,
    requires_grad: bool,
    parents: Vec<Tensor<T>>,
    backward: Option<BackwardFn<T>>,
}

/// Shared handle to a node in the autodiff graph.
///
/// Cloning is cheap (reference count); node values are immutable except
/// for parameter updates through [`Tensor::values_mut`].
pub struct Tensor<T: Scalar> {
    inner: Rc<Inner<T>>,
}

impl<T: Scalar> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Self { inner: Rc::clone(&self.inner) }
    }
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

impl<T: Scalar> Tensor<T> {
    fn build(
        shape: Vec<usize>,
        values: Vec<T>,
        requires_grad: bool,
        parents: Vec<Tensor<T>>,
        backward: Option<BackwardFn<T>>,
    ) -> Self {
        debug_assert_eq!(values.len(), shape.iter().product::<usize>());
        Self {
            inner: Rc::new(Inner {
                id: fresh_id(),
                shape,
                values: RefCell::new(values),
                grad: RefCell::new(None),
                requires_grad,
                parents,
                backward: backward,
            }),
        }
    }

    /// Trainable parameter leaf.
    pub fn param(shape: Vec<usize>, values: Vec<T>) -> Self {
        Self::build(shape, values, true, Vec::new(), None)
    }

    /// Non-trainable data leaf (inputs, labels).
    pub fn constant(shape: Vec<usize>, values: Vec<T>) -> Self {
        Self::build(shape, values, false, Vec::new(), None)
    }

    /// Scalar constant.
    pub fn scalar(value: T) -> Self {
        Self::constant(vec![1], vec![value])
    }

    /// Result node of an operation. When gradients are disabled, or no
    /// parent requires them, the node degenerates to a constant leaf.
    pub fn from_op(
        shape: Vec<usize>,
        values: Vec<T>,
        parents: Vec<Tensor<T>>,
        backward: impl Fn(&[T], &mut Adjoints<T>) + 'static,
    ) -> Self {
        if grad_enabled() && parents.iter().any(|p| p.requires_grad()) {
            Self::build(shape, values, true, parents, Some(Box::new(backward)))
        } else {
            Self::build(shape, values, false, Vec::new(), None)
        }
    }

    /// Leaf sharing a copy of the values, cut off from the graph.
    pub fn detach(&self) -> Self {
        Self::constant(self.shape().to_vec(), self.values().clone())
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.values.borrow().len()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.backward.is_none()
    }

    pub fn values(&self) -> Ref<'_, Vec<T>> {
        self.inner.values.borrow()
    }

    /// Mutable access to values; used by the optimizer for in-place updates.
    pub fn values_mut(&self) -> RefMut<'_, Vec<T>> {
        self.inner.values.borrow_mut()
    }

    /// Scalar value of a one-element tensor.
    pub fn item(&self) -> T {
        let v = self.inner.values.borrow();
        debug_assert_eq!(v.len(), 1);
        v[0]
    }

    /// Copy of the accumulated gradient, if any.
    pub fn grad(&self) -> Option<Vec<T>> {
        self.inner.grad.borrow().clone()
    }

    pub fn has_grad(&self) -> bool {
        self.inner.grad.borrow().is_some()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    fn accumulate_grad(&self, delta: &[T]) {
        let mut slot = self.inner.grad.borrow_mut();
        match slot.as_mut() {
            Some(g) => {
                for (gi, &di) in g.iter_mut().zip(delta) {
                    *gi = *gi + di;
                }
            }
            None => *slot = Some(delta.to_vec()),
        }
    }

    /// Assert this tensor is 5-D `(batch, channels, x, y, z)`.
    pub fn shape5(&self, context: &'static str) -> Result<[usize; 5], AutodiffError> {
        let s = self.shape();
        if s.len() != 5 {
            return Err(AutodiffError::ShapeMismatch {
                context,
                expected: vec![5],
                got: s.to_vec(),
            });
        }
        Ok([s[0], s[1], s[2], s[3], s[4]])
    }
}

/// Scratch adjoint buffers for one reverse pass, keyed by node id.
///
/// Intermediate adjoints live here and are dropped when the pass ends;
/// only leaf gradients persist on their tensors.
pub struct Adjoints<T: Scalar> {
    map: HashMap<u64, Vec<T>>,
}

impl<T: Scalar> Adjoints<T> {
    fn new() -> Self {
        Self { map: HashMap::new() }
    }

    /// Zero-initialized adjoint buffer for `t`; kernels accumulate into it.
    /// Returns `None` when `t` does not require gradients.
    pub fn entry(&mut self, t: &Tensor<T>) -> Option<&mut [T]> {
        if !t.requires_grad() {
            return None;
        }
        let numel = t.numel();
        Some(
            self.map
                .entry(t.id())
                .or_insert_with(|| vec![T::zero(); numel])
                .as_mut_slice(),
        )
    }

    /// Elementwise `adjoint[t] += delta`.
    pub fn add_slice(&mut self, t: &Tensor<T>, delta: &[T]) {
        if let Some(buf) = self.entry(t) {
            for (b, &d) in buf.iter_mut().zip(delta) {
                *b = *b + d;
            }
        }
    }
}

/// Reverse pass from a scalar loss.
///
/// Visits each reachable node exactly once in reverse topological order
/// and accumulates into the persistent gradient of every parameter leaf.
/// Calling backward twice without zeroing doubles leaf gradients.
pub fn backward<T: Scalar>(loss: &Tensor<T>) -> Result<(), AutodiffError> {
    if loss.numel() != 1 {
        return Err(AutodiffError::NonScalarLoss(loss.shape().to_vec()));
    }
    // Post-order DFS: parents precede their consumers in `order`.
    let mut order: Vec<Tensor<T>> = Vec::new();
    let mut visited: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Tensor<T>, usize)> = vec![(loss.clone(), 0)];
    visited.insert(loss.id());
    while let Some((node, pi)) = stack.pop() {
        if pi < node.inner.parents.len() {
            let parent = node.inner.parents[pi].clone();
            stack.push((node, pi + 1));
            if parent.requires_grad() && visited.insert(parent.id()) {
                stack.push((parent, 0));
            }
        } else {
            order.push(node);
        }
    }

    let mut adjoints = Adjoints::new();
    adjoints.map.insert(loss.id(), vec![T::one()]);
    for node in order.iter().rev() {
        let Some(adj) = adjoints.map.remove(&node.id()) else {
            continue;
        };
        if let Some(bwd) = node.inner.backward.as_ref() {
            bwd(&adj, &mut adjoints);
        } else if node.requires_grad() {
            node.accumulate_grad(&adj);
        }
    }
    Ok(())
}

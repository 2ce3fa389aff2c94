//! Dense `f64` tensors with define-by-run reverse-mode differentiation.
//!
//! A [`Tensor`] is a cheap reference-counted handle. Operations on tensors that
//! require gradients record their inputs and a backward closure; calling
//! [`Tensor::backward`] on a scalar walks the recorded graph once, in reverse
//! topological order, accumulating gradients into every ancestor that
//! requires them. The graph is rebuilt on every forward pass and dropped with
//! the last handle to it.
//!
//! Graphs are confined to the thread that built them (`Rc`, not `Arc`).

mod ops;
mod optim;

pub use ops::*;
pub use optim::{clip_grad_norm, Adam, AdamConfig};

use std::cell::{Cell, Ref, RefCell, RefMut};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: index {value} at position {position} out of range (limit {limit})")]
    Index {
        op: &'static str,
        position: usize,
        value: usize,
        limit: usize,
    },
    #[error("{op}: input too short, need at least {needed} rows but got {got}")]
    InputTooShort {
        op: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("{op}: invalid argument: {msg}")]
    Argument { op: &'static str, msg: String },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("backward was already run on this graph")]
    BackwardTwice,
    #[error("loss does not depend on any tensor that requires a gradient")]
    NoGradientPath,
}

pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

static NEXT_ID: AtomicU64 = AtomicU64::new(0);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
}

/// Runs `f` without recording any graph; results never require gradients.
pub fn no_grad<R>(f: impl FnOnce() -> R) -> R {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _restore = Restore(prev);
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    grad: RefCell<Option<Vec<f64>>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
    consumed: Cell<bool>,
}

// Long graphs would otherwise be freed recursively, one frame per node.
impl Drop for Node {
    fn drop(&mut self) {
        let mut stack = std::mem::take(&mut self.parents);
        while let Some(t) = stack.pop() {
            if let Ok(mut node) = Rc::try_unwrap(t.0) {
                stack.append(&mut node.parents);
            }
        }
    }
}

#[derive(Clone)]
pub struct Tensor(Rc<Node>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &*self.0.data.borrow())
            .finish()
    }
}

fn check_len(op: &'static str, data: &[f64], shape: &[usize]) -> Result<()> {
    let n: usize = shape.iter().product();
    if shape.contains(&0) {
        return Err(TensorError::Argument {
            op,
            msg: format!("dimensions must be positive, got {shape:?}"),
        });
    }
    if n != data.len() {
        return Err(TensorError::Shape {
            op,
            lhs: vec![data.len()],
            rhs: shape.to_vec(),
        });
    }
    Ok(())
}

impl Tensor {
    fn build(
        data: Vec<f64>,
        shape: Vec<usize>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Self {
        Tensor(Rc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data: RefCell::new(data),
            grad: RefCell::new(None),
            requires_grad,
            parents,
            backward,
            consumed: Cell::new(false),
        }))
    }

    /// A constant (no gradient) tensor.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_len("new", &data, shape)?;
        Ok(Self::build(data, shape.to_vec(), false, Vec::new(), None))
    }

    /// A trainable leaf tensor.
    pub fn param(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_len("param", &data, shape)?;
        Ok(Self::build(data, shape.to_vec(), true, Vec::new(), None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::build(vec![0.0; n], shape.to_vec(), false, Vec::new(), None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(vec![value], vec![1], false, Vec::new(), None)
    }

    /// Records the result of an operation. When gradients are disabled or no
    /// parent needs one, the result is a detached constant.
    pub(crate) fn from_op(
        data: Vec<f64>,
        shape: Vec<usize>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Self {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let track = grad_enabled() && parents.iter().any(|p| p.requires_grad());
        if track {
            Self::build(data, shape, true, parents, Some(backward))
        } else {
            Self::build(data, shape, false, Vec::new(), None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.iter().product()
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        *self.0.shape.last().expect("tensors have at least one axis")
    }

    /// Product of all axes but the last.
    pub fn rows(&self) -> usize {
        self.numel() / self.cols()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.0.data.borrow()
    }

    /// Mutable access to the values. Only meaningful on leaves between passes.
    pub fn data_mut(&self) -> RefMut<'_, Vec<f64>> {
        self.0.data.borrow_mut()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.borrow().clone()
    }

    pub fn item(&self) -> f64 {
        self.0.data.borrow()[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// A constant copy sharing no graph history.
    pub fn detach(&self) -> Tensor {
        Self::build(self.to_vec(), self.0.shape.clone(), false, Vec::new(), None)
    }

    pub fn same_node(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => *slot = Some(g.to_vec()),
        }
    }

    /// Same as [`accumulate_grad`](Self::accumulate_grad) but lets the caller
    /// write sparse contributions without materializing a dense buffer.
    pub(crate) fn accumulate_with(&self, f: impl FnOnce(&mut [f64])) {
        if !self.0.requires_grad {
            return;
        }
        let mut slot = self.0.grad.borrow_mut();
        let n = self.numel();
        let acc = slot.get_or_insert_with(|| vec![0.0; n]);
        f(acc);
    }

    /// Reverse-mode sweep from a scalar loss.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.0.shape.clone()));
        }
        if self.0.consumed.get() {
            return Err(TensorError::BackwardTwice);
        }
        if !self.0.requires_grad {
            return Err(TensorError::NoGradientPath);
        }
        let order = self.topo_order();
        self.accumulate_grad(&[1.0]);
        for node in order.iter().rev() {
            let Some(backward) = node.0.backward.as_ref() else {
                continue;
            };
            // Interior gradients are released once propagated.
            let g = node.0.grad.borrow_mut().take();
            if let Some(g) = g {
                backward(&g, &node.0.parents);
            }
        }
        self.0.consumed.set(true);
        Ok(())
    }

    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        seen.insert(self.0.id);
        while let Some((node, next)) = stack.pop() {
            if next < node.0.parents.len() {
                let parent = node.0.parents[next].clone();
                stack.push((node, next + 1));
                if parent.0.requires_grad && seen.insert(parent.0.id) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }
        order
    }
}

use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

use super::Matrix;
use crate::error::{Error, Result};

/// Maps the upstream gradient to one gradient per parent, in parent order.
pub type BackwardFn = Box<dyn Fn(&Matrix) -> Vec<Matrix>>;

struct Node {
    value: Rc<Matrix>,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
    requires_grad: bool,
    is_leaf: bool,
}

/// Records a forward computation so it can be replayed once in reverse.
///
/// Node ids are assigned in creation order, and an op can only reference
/// tensors that already exist, so id order is a topological order.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    grads: RefCell<Vec<Option<Matrix>>>,
    consumed: Cell<bool>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Tensor<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Gradient-tracked leaf (a parameter or differentiable input).
    pub fn leaf(&self, value: Matrix) -> Tensor<'_> {
        self.push(value, Vec::new(), None, true, true)
    }

    /// Untracked value; never receives a gradient.
    pub fn constant(&self, value: Matrix) -> Tensor<'_> {
        self.push(value, Vec::new(), None, false, true)
    }

    pub fn scalar(&self, value: f64) -> Tensor<'_> {
        self.constant(Matrix::scalar(value))
    }

    /// Records the result of an op over `parents`. `backward` receives the
    /// gradient of the output and must return one gradient per parent.
    pub fn record<'t>(
        &'t self,
        value: Matrix,
        parents: &[Tensor<'t>],
        backward: impl Fn(&Matrix) -> Vec<Matrix> + 'static,
    ) -> Tensor<'t> {
        let nodes = self.nodes.borrow();
        let requires_grad = parents.iter().any(|p| nodes[p.id].requires_grad);
        drop(nodes);
        let parent_ids = parents.iter().map(|p| p.id).collect();
        let backward: Option<BackwardFn> = if requires_grad {
            Some(Box::new(backward))
        } else {
            None
        };
        self.push(value, parent_ids, backward, requires_grad, false)
    }

    fn push(
        &self,
        value: Matrix,
        parents: Vec<usize>,
        backward: Option<BackwardFn>,
        requires_grad: bool,
        is_leaf: bool,
    ) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            parents,
            backward,
            requires_grad,
            is_leaf,
        });
        Tensor { tape: self, id }
    }

    /// Reverse pass from a scalar loss. Allowed once per tape.
    pub fn backward(&self, loss: Tensor<'_>) -> Result<()> {
        if !std::ptr::eq(loss.tape, self) {
            return Err(Error::Contract("loss belongs to a different tape".into()));
        }
        if self.consumed.get() {
            return Err(Error::TapeConsumed);
        }
        let nodes = self.nodes.borrow();
        if nodes.is_empty() {
            return Err(Error::Contract("backward on an empty tape".into()));
        }
        let shape = nodes[loss.id].value.shape();
        if shape != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a 1x1 loss, got {shape:?}"
            )));
        }
        self.consumed.set(true);

        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[loss.id] = Some(Matrix::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].as_ref() else {
                continue;
            };
            let parent_grads = backward(g);
            debug_assert_eq!(parent_grads.len(), node.parents.len());
            for (&pid, pg) in node.parents.iter().zip(parent_grads) {
                if !nodes[pid].requires_grad {
                    continue;
                }
                debug_assert_eq!(pg.shape(), nodes[pid].value.shape());
                match grads[pid].as_mut() {
                    Some(acc) => acc.add_assign(&pg),
                    None => grads[pid] = Some(pg),
                }
            }
        }
        for (id, node) in nodes.iter().enumerate() {
            if node.is_leaf && node.requires_grad && grads[id].is_none() {
                let (r, c) = node.value.shape();
                grads[id] = Some(Matrix::zeros(r, c));
            }
        }
        *self.grads.borrow_mut() = grads;
        Ok(())
    }

    pub fn is_consumed(&self) -> bool {
        self.consumed.get()
    }
}

impl<'t> Tensor<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Matrix> {
        Rc::clone(&self.tape.nodes.borrow()[self.id].value)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.id].value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Accumulated gradient after [`Tape::backward`].
    pub fn grad(&self) -> Option<Matrix> {
        self.tape.grads.borrow().get(self.id).cloned().flatten()
    }

    pub(crate) fn record(
        &self,
        value: Matrix,
        parents: &[Tensor<'t>],
        backward: impl Fn(&Matrix) -> Vec<Matrix> + 'static,
    ) -> Tensor<'t> {
        self.tape.record(value, parents, backward)
    }
}

impl fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor#{} {:?}", self.id, self.value())
    }
}

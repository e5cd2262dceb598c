//! Dynamic computation graph.
//!
//! Every evaluated operation returns a new [`Node`] that keeps references to
//! its inputs while recording is on. [`Node::compute_gradient`] walks the
//! graph from a scalar root and accumulates `d(root)/d(node)` into every
//! reachable node; [`NodeKind::Parameter`] leaves keep the result and
//! [`NodeKind::Constant`] leaves discard it.
//!
//! Nodes are processed in reverse topological order, so a node's backward
//! rule runs only after every consumer has contributed to its partial. Shared
//! sub-expressions are therefore differentiated once, with the total
//! derivative over all paths.

use std::cell::{Cell, Ref, RefCell};
use std::collections::HashMap;
use std::fmt;
use std::rc::Rc;

use crate::array::Array;
use crate::error::{Error, Result};
use crate::ops::Op;

thread_local! {
    static RECORDING: Cell<bool> = const { Cell::new(true) };
}

/// Whether evaluated operations record their inputs (training mode).
pub fn is_recording() -> bool {
    RECORDING.with(|r| r.get())
}

pub fn set_recording(on: bool) {
    RECORDING.with(|r| r.set(on));
}

/// Runs `f` with recording set to `on`, restoring the previous mode after.
pub fn with_recording<T>(on: bool, f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            set_recording(self.0);
        }
    }
    let _restore = Restore(is_recording());
    set_recording(on);
    f()
}

/// Inference mode: evaluates `f` without recording any graph edges.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    with_recording(false, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    /// Trainable leaf; accumulates its partial derivative.
    Parameter,
    /// Fixed leaf; ignores incoming partials.
    Constant,
    /// Output of an operation.
    Computed,
}

struct NodeData {
    kind: NodeKind,
    value: RefCell<Array>,
    op: Option<Op>,
    inputs: Vec<Node>,
    partial: RefCell<Option<Array>>,
    is_reset: Cell<bool>,
    // Some Parameter is reachable through `inputs`.
    needs_grad: bool,
}

#[derive(Clone)]
pub struct Node(Rc<NodeData>);

impl Node {
    /// A trainable leaf with a zeroed partial. Only allowed while recording.
    pub fn parameter(value: impl Into<Array>) -> Result<Node> {
        if !is_recording() {
            return Err(Error::NotRecording);
        }
        let value = value.into();
        let partial = Array::from_parts(
            value.shape().to_vec(),
            vec![0.0; value.len()],
            value.precision(),
        );
        Ok(Node(Rc::new(NodeData {
            kind: NodeKind::Parameter,
            value: RefCell::new(value),
            op: None,
            inputs: Vec::new(),
            partial: RefCell::new(Some(partial)),
            is_reset: Cell::new(true),
            needs_grad: true,
        })))
    }

    pub fn constant(value: impl Into<Array>) -> Node {
        Node(Rc::new(NodeData {
            kind: NodeKind::Constant,
            value: RefCell::new(value.into()),
            op: None,
            inputs: Vec::new(),
            partial: RefCell::new(None),
            is_reset: Cell::new(true),
            needs_grad: false,
        }))
    }

    fn computed(value: Array, op: Option<Op>, inputs: Vec<Node>) -> Node {
        let needs_grad = inputs.iter().any(|n| n.0.needs_grad);
        Node(Rc::new(NodeData {
            kind: NodeKind::Computed,
            value: RefCell::new(value),
            op,
            inputs,
            partial: RefCell::new(None),
            is_reset: Cell::new(true),
            needs_grad,
        }))
    }

    pub fn kind(&self) -> NodeKind {
        self.0.kind
    }

    pub fn is_parameter(&self) -> bool {
        self.0.kind == NodeKind::Parameter
    }

    pub fn is_leaf(&self) -> bool {
        self.0.op.is_none()
    }

    pub fn op(&self) -> Option<&Op> {
        self.0.op.as_ref()
    }

    pub fn inputs(&self) -> &[Node] {
        &self.0.inputs
    }

    pub fn value(&self) -> Ref<'_, Array> {
        self.0.value.borrow()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// The single element of a one-element value.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    /// Accumulated `d(root)/d(self)`; `None` for constants and nodes not yet
    /// reached by a backward pass.
    pub fn partial(&self) -> Option<Array> {
        self.0.partial.borrow().clone()
    }

    /// Replaces a parameter's value (an optimizer step). The shape must not
    /// change; the value is stored at the parameter's precision.
    pub fn set_value(&self, value: Array) -> Result<()> {
        if !self.is_parameter() {
            return Err(Error::InvalidConfig(
                "only parameters can be assigned a new value".into(),
            ));
        }
        let mut current = self.0.value.borrow_mut();
        if current.shape() != value.shape() {
            return Err(Error::IncompatibleShapes {
                left: current.shape().to_vec(),
                right: value.shape().to_vec(),
            });
        }
        *current = value.to_precision(current.precision());
        Ok(())
    }

    /// Swaps in `value` as-is, precision included, returning the old value.
    pub(crate) fn replace_value(&self, value: Array) -> Array {
        std::mem::replace(&mut *self.0.value.borrow_mut(), value)
    }

    pub fn ptr_eq(&self, other: &Node) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    fn key(&self) -> *const NodeData {
        Rc::as_ptr(&self.0)
    }

    /// Adds an incoming partial, reducing broadcast axes first.
    fn receive_partial(&self, incoming: Array) -> Result<()> {
        match self.0.kind {
            NodeKind::Constant => Ok(()),
            NodeKind::Parameter | NodeKind::Computed => {
                let mut slot = self.0.partial.borrow_mut();
                let incoming = {
                    let value = self.0.value.borrow();
                    incoming
                        .reduce_to_shape(value.shape())?
                        .to_precision(value.precision())
                };
                self.0.is_reset.set(false);
                match slot.as_mut() {
                    Some(acc) => acc.add_assign(&incoming),
                    None => *slot = Some(incoming),
                }
                Ok(())
            }
        }
    }

    /// Computes `d(self)/dp` for every reachable parameter `p`.
    ///
    /// Parameter partials are zeroed first, so repeated calls on the same
    /// graph give the same result.
    pub fn compute_gradient(&self) -> Result<()> {
        if self.value().len() != 1 {
            return Err(Error::NotScalar {
                shape: self.shape(),
            });
        }
        if !is_recording() {
            return Err(Error::NotRecording);
        }
        let order = topological_order(self)?;
        for node in &order {
            match node.0.kind {
                NodeKind::Parameter => {
                    if !node.0.is_reset.get() {
                        if let Some(p) = node.0.partial.borrow_mut().as_mut() {
                            p.fill(0.0);
                        }
                        node.0.is_reset.set(true);
                    }
                }
                NodeKind::Computed => *node.0.partial.borrow_mut() = None,
                NodeKind::Constant => {}
            }
        }
        let seed = {
            let value = self.value();
            Array::from_parts(value.shape().to_vec(), vec![1.0], value.precision())
        };
        self.receive_partial(seed)?;
        propagate(&order)
    }

    /// Number of input references stored anywhere in the graph under `self`.
    pub fn recorded_edges(&self) -> usize {
        let mut seen = HashMap::new();
        let mut stack = vec![self.clone()];
        let mut edges = 0;
        while let Some(node) = stack.pop() {
            if seen.insert(node.key(), ()).is_some() {
                continue;
            }
            edges += node.0.inputs.len();
            stack.extend(node.0.inputs.iter().cloned());
        }
        edges
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Node")
            .field("kind", &self.0.kind)
            .field("op", &self.0.op)
            .field("value", &*self.value())
            .field("inputs", &self.0.inputs.len())
            .finish()
    }
}

/// Anything usable as an operation input. Raw values become constants.
pub trait IntoNode {
    fn into_node(self) -> Node;
}

impl IntoNode for Node {
    fn into_node(self) -> Node {
        self
    }
}

impl IntoNode for &Node {
    fn into_node(self) -> Node {
        self.clone()
    }
}

impl IntoNode for f64 {
    fn into_node(self) -> Node {
        Node::constant(Array::scalar(self))
    }
}

impl IntoNode for Array {
    fn into_node(self) -> Node {
        Node::constant(self)
    }
}

impl IntoNode for &Array {
    fn into_node(self) -> Node {
        Node::constant(self.clone())
    }
}

impl IntoNode for Vec<f64> {
    fn into_node(self) -> Node {
        Node::constant(Array::from_vec(self))
    }
}

/// Applies `op` to `inputs`. While recording the result remembers `op` and
/// its inputs; otherwise it is a bare leaf.
pub fn evaluate(op: Op, inputs: Vec<Node>) -> Result<Node> {
    let value = {
        let borrowed: Vec<Ref<'_, Array>> = inputs.iter().map(|n| n.value()).collect();
        let refs: Vec<&Array> = borrowed.iter().map(|r| &**r).collect();
        op.forward(&refs)?
    };
    if !value.is_finite() {
        return Err(Error::NonFinite { op: op.name() });
    }
    if is_recording() {
        Ok(Node::computed(value, Some(op), inputs))
    } else {
        Ok(Node::computed(value, None, Vec::new()))
    }
}

/// Propagates an already seeded partial from `root` down to the leaves.
pub fn backward_traverse(root: &Node) -> Result<()> {
    let order = topological_order(root)?;
    propagate(&order)
}

fn propagate(order: &[Node]) -> Result<()> {
    for node in order.iter().rev() {
        let Some(op) = node.0.op.as_ref() else {
            continue;
        };
        let grads = {
            let partial = node.0.partial.borrow();
            let Some(grad) = partial.as_ref() else {
                continue;
            };
            let value = node.value();
            let borrowed: Vec<Ref<'_, Array>> = node.0.inputs.iter().map(|n| n.value()).collect();
            let refs: Vec<&Array> = borrowed.iter().map(|r| &**r).collect();
            op.backward(grad, &value, &refs)?
        };
        for (input, g) in node.0.inputs.iter().zip(grads) {
            if input.0.needs_grad {
                input.receive_partial(g)?;
            }
        }
    }
    Ok(())
}

/// Nodes reachable from `root` that lead to a parameter, inputs before
/// consumers.
fn topological_order(root: &Node) -> Result<Vec<Node>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Done,
    }
    let mut marks: HashMap<*const NodeData, Mark> = HashMap::new();
    let mut order = Vec::new();
    if !root.0.needs_grad {
        return Ok(order);
    }
    // (node, index of the next input to visit)
    let mut stack: Vec<(Node, usize)> = vec![(root.clone(), 0)];
    marks.insert(root.key(), Mark::Open);
    while let Some((node, next)) = stack.pop() {
        if next < node.0.inputs.len() {
            let child = node.0.inputs[next].clone();
            stack.push((node, next + 1));
            if !child.0.needs_grad {
                continue;
            }
            match marks.get(&child.key()) {
                Some(Mark::Open) => return Err(Error::CycleDetected),
                Some(Mark::Done) => {}
                None => {
                    marks.insert(child.key(), Mark::Open);
                    stack.push((child, 0));
                }
            }
        } else {
            marks.insert(node.key(), Mark::Done);
            order.push(node);
        }
    }
    Ok(order)
}

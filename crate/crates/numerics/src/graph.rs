//! Tape for reverse-mode differentiation.
//!
//! Every op appends a node holding its output value plus a backward closure
//! that maps the output gradient to per-input gradients. Nodes are stored in
//! creation order, so a reverse sweep over the tape is a valid topological
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NumericsError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout is the identity.
    Eval,
    /// Dropout samples masks from the graph's RNG.
    Train,
}

type BackwardFn<T> = Box<dyn Fn(&BackwardCtx<'_, T>, &[T]) -> Vec<Option<Vec<T>>>>;

struct Node<T: Real> {
    op: &'static str,
    value: Tensor<T>,
    inputs: Vec<Var>,
    backward: Option<BackwardFn<T>>,
}

/// Read access to a node's inputs and output while its gradient is computed.
pub struct BackwardCtx<'a, T: Real> {
    graph: &'a Graph<T>,
    node: usize,
}

impl<T: Real> BackwardCtx<'_, T> {
    pub fn input(&self, i: usize) -> &Tensor<T> {
        let var = self.graph.nodes[self.node].inputs[i];
        &self.graph.nodes[var.0].value
    }

    pub fn input_count(&self) -> usize {
        self.graph.nodes[self.node].inputs.len()
    }

    pub fn output(&self) -> &Tensor<T> {
        &self.graph.nodes[self.node].value
    }

    /// Whether input `i` wants a gradient; ops may skip work otherwise.
    pub fn needs(&self, i: usize) -> bool {
        self.input(i).requires_grad
    }
}

pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    mode: Mode,
    record: bool,
    rng: ChaCha8Rng,
}

impl<T: Real> Graph<T> {
    /// Evaluation-mode graph that records gradients.
    pub fn new() -> Self {
        Self::with_mode(Mode::Eval, 0)
    }

    /// Training-mode graph; dropout masks are drawn from `seed`.
    pub fn train(seed: u64) -> Self {
        Self::with_mode(Mode::Train, seed)
    }

    pub fn with_mode(mode: Mode, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            record: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Evaluation-mode graph that keeps no backward state.
    pub fn inference() -> Self {
        let mut g = Self::new();
        g.record = false;
        g
    }

    /// Stops recording backward state for subsequent ops.
    pub fn without_recording(mut self) -> Self {
        self.record = false;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn is_training(&self) -> bool {
        self.mode == Mode::Train
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf. Gradients reach it iff `tensor.requires_grad`.
    pub fn leaf(&mut self, mut tensor: Tensor<T>) -> Var {
        tensor.grad = None;
        if !self.record {
            tensor.requires_grad = false;
        }
        self.nodes.push(Node {
            op: "leaf",
            value: tensor,
            inputs: Vec::new(),
            backward: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Adds a leaf that never receives gradients.
    pub fn constant(&mut self, tensor: Tensor<T>) -> Var {
        self.leaf(tensor.detached())
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    pub fn op_name(&self, v: Var) -> &'static str {
        self.nodes[v.0].op
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    /// Appends an op node.
    ///
    /// The output must be finite. The backward closure is dropped when no
    /// input requires a gradient.
    pub fn push<F>(
        &mut self,
        op: &'static str,
        mut value: Tensor<T>,
        inputs: &[Var],
        backward: F,
    ) -> Result<Var>
    where
        F: Fn(&BackwardCtx<'_, T>, &[T]) -> Vec<Option<Vec<T>>> + 'static,
    {
        value.ensure_finite(op)?;
        let needs_grad = self.record && inputs.iter().any(|&v| self.requires_grad(v));
        value.requires_grad = needs_grad;
        value.grad = None;
        self.nodes.push(Node {
            op,
            value,
            inputs: inputs.to_vec(),
            backward: if needs_grad {
                Some(Box::new(backward))
            } else {
                None
            },
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Whether any of `inputs` will propagate gradients. Ops use this to avoid
    /// saving forward state nobody will read.
    pub fn any_requires_grad(&self, inputs: &[Var]) -> bool {
        self.record && inputs.iter().any(|&v| self.requires_grad(v))
    }

    /// Reverse sweep from a single-element node.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        let root_value = &self.nodes[root.0].value;
        if root_value.numel() != 1 {
            return Err(NumericsError::Usage(format!(
                "backward needs a scalar root, got shape {:?}",
                root_value.shape()
            )));
        }
        self.backward_with_seed(root, vec![T::one()])
    }

    /// Reverse sweep seeded with an arbitrary output gradient.
    pub fn backward_with_seed(&self, root: Var, seed: Vec<T>) -> Result<Gradients<T>> {
        let root_value = &self.nodes[root.0].value;
        if seed.len() != root_value.numel() {
            return Err(NumericsError::Usage(format!(
                "seed gradient has {} elements, root has {}",
                seed.len(),
                root_value.numel()
            )));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !root_value.requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(seed);
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            let Some(backward) = &node.backward else {
                continue;
            };
            let Some(g) = grads[i].take() else {
                continue;
            };
            let ctx = BackwardCtx { graph: self, node: i };
            let input_grads = backward(&ctx, &g);
            debug_assert_eq!(input_grads.len(), node.inputs.len(), "op {}", node.op);
            for (&input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[input.0].value.requires_grad {
                    continue;
                }
                debug_assert_eq!(ig.len(), self.nodes[input.0].value.numel(), "op {}", node.op);
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&ig).for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of leaves after a backward sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of a leaf, or `None` when it did not influence the root.
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, zero-filled if it was not reached.
    pub fn get_or_zeros(&self, v: Var, numel: usize) -> Vec<T> {
        self.get(v)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![T::zero(); numel])
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

//! Rank-2 tensors with reverse-mode differentiation.
//!
//! Every value is a row-major `[rows, cols]` block of f64; column vectors are
//! `[n, 1]`, scalars `[1, 1]`. Operations build an immutable expression graph
//! behind `Arc` handles, and each node carries a closure producing its
//! parents' gradient contributions. `backward` on a scalar walks the graph in
//! reverse topological order, visiting each node exactly once, and returns the
//! accumulated gradients keyed by tensor identity.
//!
//! ```
//! use tgformer::tensor::Tensor;
//!
//! let x = Tensor::leaf(2, 1, vec![3.0, -1.0]).unwrap();
//! let y = x.mul(&x).unwrap().sum_all().unwrap();
//! let grads = y.backward().unwrap();
//! assert_eq!(grads.get(&x).unwrap(), &[6.0, -2.0]);
//! ```

mod ops;
pub mod grad_check;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Gradient contributions for one node's parents: (parent id, dL/dparent).
pub(crate) type ParentGrads = Vec<(u64, Vec<f64>)>;
pub(crate) type BackwardFn = Box<dyn Fn(&Inner, &[f64]) -> ParentGrads + Send + Sync>;

pub(crate) struct Inner {
    pub(crate) id: u64,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) data: Vec<f64>,
    pub(crate) requires_grad: bool,
    pub(crate) parents: Vec<Tensor>,
    pub(crate) backward: Option<BackwardFn>,
}

/// Shared handle to one node of the expression graph.
#[derive(Clone)]
pub struct Tensor(pub(crate) Arc<Inner>);

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.0.id)
            .field("shape", &[self.0.rows, self.0.cols])
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Tensor {
    fn build(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        requires_grad: bool,
        parents: Vec<Tensor>,
        backward: Option<BackwardFn>,
    ) -> Tensor {
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            rows,
            cols,
            data,
            requires_grad,
            parents,
            backward,
        }))
    }

    fn check_dims(rows: usize, cols: usize, data: &[f64]) -> Result<()> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument {
                op: "tensor",
                reason: format!("degenerate shape [{rows}, {cols}]"),
            });
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "tensor",
                lhs: format!("[{rows}, {cols}]"),
                rhs: format!("{} values", data.len()),
            });
        }
        Ok(())
    }

    /// Constant node; gradients do not flow into it.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Self::check_dims(rows, cols, &data)?;
        Ok(Self::build(rows, cols, data, false, Vec::new(), None))
    }

    /// Trainable node: `backward` reports a gradient for it.
    pub fn leaf(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Self::check_dims(rows, cols, &data)?;
        Ok(Self::build(rows, cols, data, true, Vec::new(), None))
    }

    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Self::build(rows, cols, vec![0.0; rows * cols], false, Vec::new(), None)
    }

    pub fn scalar(v: f64) -> Tensor {
        Self::build(1, 1, vec![v], false, Vec::new(), None)
    }

    pub(crate) fn from_op(
        rows: usize,
        cols: usize,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Tensor {
        let requires_grad = parents.iter().any(|p| p.0.requires_grad);
        let backward = if requires_grad { Some(backward) } else { None };
        // Parents only need to stay alive while gradients can flow to them.
        let parents = if requires_grad { parents } else { Vec::new() };
        Self::build(rows, cols, data, requires_grad, parents, backward)
    }

    pub fn rows(&self) -> usize {
        self.0.rows
    }

    pub fn cols(&self) -> usize {
        self.0.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.0.rows, self.0.cols]
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    /// Stable identity of this node; gradients are keyed by it.
    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.0.data[r * self.0.cols + c]
    }

    /// Value of a `[1, 1]` tensor.
    pub fn item(&self) -> Result<f64> {
        if self.0.rows * self.0.cols != 1 {
            return Err(Error::InvalidArgument {
                op: "item",
                reason: format!("shape [{}, {}] is not scalar", self.0.rows, self.0.cols),
            });
        }
        Ok(self.0.data[0])
    }

    /// Fresh constant tensor with the same data (detached from the graph).
    pub fn detach(&self) -> Tensor {
        Self::build(
            self.0.rows,
            self.0.cols,
            self.0.data.clone(),
            false,
            Vec::new(),
            None,
        )
    }

    /// Reverse-mode sweep from a scalar. Returns the gradient of this value
    /// with respect to every reachable node that requires one.
    pub fn backward(&self) -> Result<Gradients> {
        if self.0.rows != 1 || self.0.cols != 1 {
            return Err(Error::NonScalarBackward {
                rows: self.0.rows,
                cols: self.0.cols,
            });
        }

        // Post-order over the requires_grad subgraph; iterative so deep
        // accumulation chains cannot overflow the stack.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashMap<u64, ()> = HashMap::new();
        let mut stack: Vec<(Tensor, usize)> = Vec::new();
        if self.0.requires_grad {
            stack.push((self.clone(), 0));
            visited.insert(self.0.id, ());
        }
        while let Some((node, child)) = stack.pop() {
            if child < node.0.parents.len() {
                stack.push((node.clone(), child + 1));
                let parent = node.0.parents[child].clone();
                if parent.0.requires_grad && !visited.contains_key(&parent.0.id) {
                    visited.insert(parent.0.id, ());
                    stack.push((parent, 0));
                }
            } else {
                order.push(node);
            }
        }

        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.0.id, vec![1.0]);
        for node in order.iter().rev() {
            let Some(grad_out) = grads.get(&node.0.id).cloned() else {
                continue;
            };
            if let Some(backward) = &node.0.backward {
                for (parent_id, contribution) in backward(&node.0, &grad_out) {
                    match grads.entry(parent_id) {
                        std::collections::hash_map::Entry::Occupied(mut e) => {
                            let acc = e.get_mut();
                            for (a, c) in acc.iter_mut().zip(&contribution) {
                                *a += c;
                            }
                        }
                        std::collections::hash_map::Entry::Vacant(e) => {
                            e.insert(contribution);
                        }
                    }
                }
            }
        }
        Ok(Gradients(grads))
    }
}

/// Gradients from one backward sweep, keyed by tensor identity.
pub struct Gradients(HashMap<u64, Vec<f64>>);

impl Gradients {
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        self.0.get(&t.0.id).map(|v| v.as_slice())
    }

    pub fn by_id(&self, id: u64) -> Option<&[f64]> {
        self.0.get(&id).map(|v| v.as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leaf_round_trip() {
        let t = Tensor::leaf(2, 3, (0..6).map(|v| v as f64).collect()).unwrap();
        assert_eq!(t.shape(), [2, 3]);
        assert_eq!(t.at(1, 2), 5.0);
        assert!(t.requires_grad());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(2, 2, vec![1.0]).is_err());
        assert!(Tensor::new(0, 2, vec![]).is_err());
        assert!(Tensor::leaf(1, 2, vec![1.0, 2.0]).unwrap().item().is_err());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let t = Tensor::leaf(2, 1, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            t.backward(),
            Err(Error::NonScalarBackward { rows: 2, cols: 1 })
        ));
    }

    #[test]
    fn shared_subexpression_accumulates_both_paths() {
        // y = sum(x + x): dy/dx = 2 everywhere, delivered via two uses of x.
        let x = Tensor::leaf(2, 1, vec![1.0, 4.0]).unwrap();
        let y = x.add(&x).unwrap().sum_all().unwrap();
        let grads = y.backward().unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[2.0, 2.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let x = Tensor::leaf(1, 1, vec![2.0]).unwrap();
        let c = Tensor::scalar(5.0);
        let y = x.mul(&c).unwrap();
        let grads = y.backward().unwrap();
        assert_eq!(grads.get(&x).unwrap(), &[5.0]);
        assert!(grads.get(&c).is_none());
    }

    #[test]
    fn diamond_graph_visits_each_node_once() {
        // y = (x*x) + (x*x) shares the square node; its gradient must be the
        // sum of both consumer contributions, applied exactly once.
        let x = Tensor::leaf(1, 1, vec![3.0]).unwrap();
        let sq = x.mul(&x).unwrap();
        let y = sq.add(&sq).unwrap();
        let grads = y.backward().unwrap();
        // d/dx 2x^2 = 4x = 12
        assert_eq!(grads.get(&x).unwrap(), &[12.0]);
    }
}

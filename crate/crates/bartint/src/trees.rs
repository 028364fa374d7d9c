//! Axis-aligned binary regression trees and sum-of-trees ensembles.
//!
//! Nodes live in a flat arena with child indices; freed slots from prune
//! moves are recycled, so a tree's memory stays proportional to its live
//! node count across long MCMC runs. Routing follows `x_k < v` to the left
//! child and ties to the right, matching the half-open cell convention in
//! [`crate::measures`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::Cell;
use crate::points::PointMatrix;

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal { var: usize, value: f64, left: NodeId, right: NodeId },
    Leaf { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    root: NodeId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    free: Vec<NodeId>,
}

impl DecisionTree {
    pub fn single_leaf(value: f64) -> Self {
        Self { nodes: vec![Node::Leaf { value }], root: 0, free: Vec::new() }
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    /// Arena capacity including recycled slots; valid as an upper bound for
    /// per-node scratch tables indexed by `NodeId`.
    pub fn arena_len(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    fn alloc(&mut self, node: Node) -> NodeId {
        if let Some(id) = self.free.pop() {
            self.nodes[id] = node;
            id
        } else {
            self.nodes.push(node);
            self.nodes.len() - 1
        }
    }

    /// Routes `x` to a leaf and returns its id.
    pub fn leaf_for(&self, x: &[f64]) -> NodeId {
        let mut id = self.root;
        loop {
            match self.nodes[id] {
                Node::Internal { var, value, left, right } => {
                    id = if x[var] < value { left } else { right };
                }
                Node::Leaf { .. } => return id,
            }
        }
    }

    /// Step-function evaluation: the leaf value `x` routes to.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_for(x)] {
            Node::Leaf { value } => value,
            Node::Internal { .. } => unreachable!("leaf_for returns leaves"),
        }
    }

    /// Live node ids paired with their depth, in depth-first order.
    pub fn walk(&self) -> Vec<(NodeId, usize)> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            out.push((id, depth));
            if let Node::Internal { left, right, .. } = self.nodes[id] {
                stack.push((right, depth + 1));
                stack.push((left, depth + 1));
            }
        }
        out
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.walk()
            .into_iter()
            .filter(|&(id, _)| matches!(self.nodes[id], Node::Leaf { .. }))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn num_leaves(&self) -> usize {
        self.walk()
            .iter()
            .filter(|&&(id, _)| matches!(self.nodes[id], Node::Leaf { .. }))
            .count()
    }

    pub fn num_internal(&self) -> usize {
        self.walk()
            .iter()
            .filter(|&&(id, _)| matches!(self.nodes[id], Node::Internal { .. }))
            .count()
    }

    /// Internal nodes whose children are both leaves (prunable).
    pub fn parents_of_two_leaves(&self) -> Vec<NodeId> {
        self.walk()
            .into_iter()
            .filter_map(|(id, _)| match self.nodes[id] {
                Node::Internal { left, right, .. }
                    if matches!(self.nodes[left], Node::Leaf { .. })
                        && matches!(self.nodes[right], Node::Leaf { .. }) =>
                {
                    Some(id)
                }
                _ => None,
            })
            .collect()
    }

    /// Splits a leaf in place; children get the provided leaf values.
    pub fn grow(
        &mut self,
        leaf: NodeId,
        var: usize,
        value: f64,
        left_value: f64,
        right_value: f64,
    ) -> Result<()> {
        if !matches!(self.nodes[leaf], Node::Leaf { .. }) {
            return Err(Error::InvalidTree(format!("grow target {leaf} is not a leaf")));
        }
        let left = self.alloc(Node::Leaf { value: left_value });
        let right = self.alloc(Node::Leaf { value: right_value });
        self.nodes[leaf] = Node::Internal { var, value, left, right };
        Ok(())
    }

    /// Collapses an internal node whose children are both leaves.
    pub fn prune(&mut self, id: NodeId, value: f64) -> Result<()> {
        match self.nodes[id] {
            Node::Internal { left, right, .. }
                if matches!(self.nodes[left], Node::Leaf { .. })
                    && matches!(self.nodes[right], Node::Leaf { .. }) =>
            {
                self.free.push(left);
                self.free.push(right);
                self.nodes[id] = Node::Leaf { value };
                Ok(())
            }
            _ => Err(Error::InvalidTree(format!("node {id} is not a parent of two leaves"))),
        }
    }

    pub fn set_rule(&mut self, id: NodeId, new_var: usize, new_value: f64) -> Result<()> {
        match &mut self.nodes[id] {
            Node::Internal { var, value, .. } => {
                *var = new_var;
                *value = new_value;
                Ok(())
            }
            Node::Leaf { .. } => Err(Error::InvalidTree(format!("node {id} is a leaf"))),
        }
    }

    pub fn rule(&self, id: NodeId) -> Result<(usize, f64)> {
        match self.nodes[id] {
            Node::Internal { var, value, .. } => Ok((var, value)),
            Node::Leaf { .. } => Err(Error::InvalidTree(format!("node {id} is a leaf"))),
        }
    }

    pub fn set_leaf_value(&mut self, id: NodeId, value: f64) -> Result<()> {
        match &mut self.nodes[id] {
            Node::Leaf { value: v } => {
                *v = value;
                Ok(())
            }
            Node::Internal { .. } => Err(Error::InvalidTree(format!("node {id} is internal"))),
        }
    }

    /// The cell each leaf induces by interval narrowing from `support`,
    /// paired with the leaf value. Errors if any split value falls outside
    /// its inherited interval (geometrically empty cell).
    pub fn leaf_cells(&self, support: &Cell) -> Result<Vec<(Cell, f64)>> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root, support.clone())];
        while let Some((id, cell)) = stack.pop() {
            match self.nodes[id] {
                Node::Leaf { value } => out.push((cell, value)),
                Node::Internal { var, value, left, right } => {
                    if !(cell.lo[var] < value && value < cell.hi[var]) {
                        return Err(Error::InvalidTree(format!(
                            "split at {value} outside inherited interval [{}, {}) in dim {var}",
                            cell.lo[var], cell.hi[var]
                        )));
                    }
                    let mut left_cell = cell.clone();
                    left_cell.hi[var] = value;
                    let mut right_cell = cell;
                    right_cell.lo[var] = value;
                    stack.push((right, right_cell));
                    stack.push((left, left_cell));
                }
            }
        }
        Ok(out)
    }

    /// Structural validity: binary by construction, every split inside its
    /// inherited interval.
    pub fn validate(&self, support: &Cell) -> Result<()> {
        self.leaf_cells(support).map(|_| ())
    }

    /// Copy with a garbage-free arena in depth-first order.
    pub fn compacted(&self) -> Self {
        let mut nodes = Vec::with_capacity(self.num_leaves() * 2);
        fn copy(src: &DecisionTree, id: NodeId, dst: &mut Vec<Node>) -> NodeId {
            match src.nodes[id] {
                Node::Leaf { value } => {
                    dst.push(Node::Leaf { value });
                    dst.len() - 1
                }
                Node::Internal { var, value, left, right } => {
                    let slot = dst.len();
                    dst.push(Node::Leaf { value: 0.0 }); // placeholder
                    let l = copy(src, left, dst);
                    let r = copy(src, right, dst);
                    dst[slot] = Node::Internal { var, value, left: l, right: r };
                    slot
                }
            }
        }
        let root = copy(self, self.root, &mut nodes);
        Self { nodes, root, free: Vec::new() }
    }
}

/// Affine response rescaling `y -> (y - shift) / scale`, stored with its
/// inverse so predictions and integrals come back on the caller's scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rescale {
    pub scale: f64,
    pub shift: f64,
}

impl Rescale {
    pub fn identity() -> Self {
        Self { scale: 1.0, shift: 0.0 }
    }

    /// Maps the observed range `[y_min, y_max]` onto `[-0.5, 0.5]`; a
    /// degenerate range falls back to unit scale.
    pub fn from_range(y_min: f64, y_max: f64) -> Self {
        let scale = if y_max > y_min { y_max - y_min } else { 1.0 };
        Self { scale, shift: 0.5 * (y_min + y_max) }
    }

    pub fn to_internal(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }

    pub fn to_external(&self, v: f64) -> f64 {
        v * self.scale + self.shift
    }
}

/// A sum-of-trees snapshot: `T` trees on the internal (rescaled) response
/// scale, the observation-noise draw, and the rescaling transform.
/// Immutable once emitted by the sampler.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SumOfTrees {
    pub trees: Vec<DecisionTree>,
    pub sigma: f64,
    pub rescale: Rescale,
}

impl SumOfTrees {
    /// Prediction on the internal scale.
    pub fn eval_internal(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.eval(x)).sum()
    }

    /// Prediction on the original response scale.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.rescale.to_external(self.eval_internal(x))
    }

    pub fn eval_many(&self, points: &PointMatrix) -> Vec<f64> {
        points.rows().map(|r| self.eval(r)).collect()
    }
}

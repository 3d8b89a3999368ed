//! Lower-confidence-bound statistics and the tree-descent selection policy.
//!
//! Rewards here are residual gradients: smaller means more similar, so the
//! policy explores with lower confidence bounds and descends toward the
//! minimum. A leaf's bound is mu_hat - c*sqrt(ln t / n); an internal node
//! takes the larger of its own bound and the smallest child value discounted
//! by the node's smoothness threshold.

use serde::{Deserialize, Serialize};

use crate::adapter::{sparsify, AdapterStack, SparsifyConfig};
use crate::error::{Error, Result};
use crate::model::GradientSet;
use crate::simtree::{NodeId, SimTree};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BanditStats {
    /// Running mean of the residuals observed in this node's subtree.
    pub mu_hat: f64,
    /// Number of observations.
    pub n: u64,
    /// Number of times the node sat on a selected path.
    pub select_count: u64,
}

impl BanditStats {
    pub fn observe(&mut self, value: f64) {
        self.n += 1;
        self.mu_hat += (value - self.mu_hat) / self.n as f64;
    }
}

/// One residual-gradient observation attributed to a leaf.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualObservation {
    pub node_id: NodeId,
    pub value: f64,
    pub round: u64,
    /// Per model layer, the L1 mass of the sparsified difference.
    pub per_layer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LcbParams {
    /// Width multiplier of the exploration radius; 2 is the reference value.
    pub exploration_coef: f64,
    /// Fallback smoothness penalty per depth when a node carries no
    /// threshold of its own.
    pub delta_schedule: Vec<f64>,
    /// Prefer the node's stored split threshold over the schedule.
    pub use_node_thresholds: bool,
}

impl Default for LcbParams {
    fn default() -> Self {
        Self { exploration_coef: 2.0, delta_schedule: Vec::new(), use_node_thresholds: true }
    }
}

impl LcbParams {
    /// Geometric schedule delta * gamma^d for depths 0..=max_depth.
    pub fn geometric(delta: f64, gamma: f64, max_depth: usize) -> Self {
        let schedule = (0..=max_depth).map(|d| delta * gamma.powi(d as i32)).collect();
        Self { exploration_coef: 2.0, delta_schedule: schedule, use_node_thresholds: true }
    }

    fn penalty(&self, depth: usize, node_threshold: f64) -> f64 {
        if self.use_node_thresholds && node_threshold > 0.0 {
            node_threshold
        } else {
            self.delta_schedule
                .get(depth)
                .copied()
                .unwrap_or_else(|| self.delta_schedule.last().copied().unwrap_or(0.0))
        }
    }
}

/// Residual gradient between the current and a previous configuration on the
/// same data, seen through the sparsifier of the current stack: the layerwise
/// L1 mass of S[g_now - g_prev].
pub fn residual(
    g_now: &GradientSet,
    g_prev: &GradientSet,
    stack: &AdapterStack,
    cfg: &SparsifyConfig,
    node_id: NodeId,
    round: u64,
) -> Result<ResidualObservation> {
    let diff = g_now.sub_base(g_prev)?;
    let sparse = sparsify(&diff, stack, cfg)?;
    let mut per_layer = vec![0.0; g_now.layers.len()];
    for f in &sparse.factors {
        per_layer[f.layer_index] += f.d_a.l1_sum() + f.d_b.l1_sum();
    }
    let value = per_layer.iter().sum();
    Ok(ResidualObservation { node_id, value, round, per_layer })
}

/// Leaf-level lower confidence bound. Unvisited leaves return negative
/// infinity so the descent is forced to explore them first.
pub fn leaf_lcb(stats: &BanditStats, t: u64, params: &LcbParams) -> Result<f64> {
    if t < 1 {
        return Err(Error::Input(format!("round index {t} must be at least 1")));
    }
    if stats.n == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let radius = params.exploration_coef * ((t as f64).ln() / stats.n as f64).sqrt();
    Ok(stats.mu_hat - radius)
}

/// Value of a node in the descent recursion: a leaf is its LCB; an internal
/// node is max(own LCB, min over children of child value minus the node's
/// smoothness penalty).
pub fn node_value(tree: &SimTree, node_id: NodeId, t: u64, params: &LcbParams) -> Result<f64> {
    let node = tree.node(node_id)?;
    let own = leaf_lcb(&node.stats, t, params)?;
    if node.is_leaf() {
        return Ok(own);
    }
    let mut best_child = f64::INFINITY;
    for &c in &node.children {
        best_child = best_child.min(node_value(tree, c, t, params)?);
    }
    let penalized = best_child - params.penalty(node.depth, node.threshold);
    Ok(own.max(penalized))
}

/// Descends from the root picking the child with the minimal value at each
/// level (ties to the lower node id), increments `select_count` along the
/// way, and returns the full root-to-leaf path.
pub fn select_branch(tree: &mut SimTree, t: u64, params: &LcbParams) -> Result<Vec<NodeId>> {
    if !tree.has_leaves() {
        return Err(Error::Input("select_branch on a tree without leaves".into()));
    }
    let mut path = vec![tree.root_id()];
    let mut cur = tree.root_id();
    loop {
        let node = tree.node(cur)?;
        if node.is_leaf() {
            break;
        }
        let mut best: Option<(f64, NodeId)> = None;
        for &c in &node.children {
            let v = node_value(tree, c, t, params)?;
            let better = match best {
                None => true,
                Some((bv, bid)) => v < bv || (v == bv && c < bid),
            };
            if better {
                best = Some((v, c));
            }
        }
        cur = best.unwrap().1;
        path.push(cur);
    }
    for &id in &path {
        tree.node_mut(id)?.stats.select_count += 1;
    }
    Ok(path)
}

/// Records an observation along a selected path: every node on the path sees
/// the residual as a new sample of its running mean.
pub fn update_stats(tree: &mut SimTree, path: &[NodeId], obs: &ResidualObservation) -> Result<()> {
    match path.last() {
        Some(&leaf) if leaf == obs.node_id => {}
        _ => {
            return Err(Error::Input(format!(
                "observation for node {} does not end the path {:?}",
                obs.node_id, path
            )))
        }
    }
    for &id in path {
        tree.node_mut(id)?.stats.observe(obs.value);
    }
    Ok(())
}

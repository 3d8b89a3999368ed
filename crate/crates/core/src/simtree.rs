//! Hierarchical gradient-similarity tree.
//!
//! Tasks are organized by the L1 distance of their flattened gradient
//! signatures. Each node keeps the mean signature of its member tasks and a
//! median-split threshold that decides whether an incoming task descends into
//! the node's subtree or opens a new branch. Insertion is a depth-first
//! nearest-branch descent; when the storage budget is exceeded, the closest
//! same-parent leaf pair is merged into one leaf.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adapter::{merge_adapters, AdapterId, AdapterStore};
use crate::bandit::BanditStats;
use crate::densemath::{l1_distance, Vector};
use crate::error::{Error, Result};

pub type NodeId = usize;

/// Margin for the nearest-branch descent: a child decisively nearer than
/// this fraction of the runner-up distance is entered even beyond the median
/// radius.
const DESCENT_MARGIN: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub depth: usize,
    pub parent: Option<NodeId>,
    pub member_tasks: BTreeSet<usize>,
    /// Mean member gradient signature; empty until the node has members.
    pub centroid: Vector,
    /// Median of member distances to the centroid; 0 with fewer than two
    /// members. Applied as the admission radius during descent and as the
    /// smoothness penalty in the bandit's value recursion.
    pub threshold: f64,
    pub children: Vec<NodeId>,
    pub adapter_ref: Option<AdapterId>,
    pub stats: BanditStats,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTree {
    nodes: BTreeMap<NodeId, TreeNode>,
    root: NodeId,
    max_depth: usize,
    storage_budget: usize,
    /// Per-task flattened gradient signatures, the data centroids and
    /// thresholds are recomputed from.
    signatures: BTreeMap<usize, Vector>,
    next_id: NodeId,
}

/// One merge performed by `enforce_budget`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecord {
    pub kept: NodeId,
    pub removed: NodeId,
    pub parent: NodeId,
    pub distance: f64,
}

impl SimTree {
    pub fn new(max_depth: usize, storage_budget: usize) -> Self {
        assert!(max_depth >= 1, "max_depth must be at least 1");
        let mut nodes = BTreeMap::new();
        nodes.insert(0, TreeNode {
            id: 0,
            depth: 0,
            parent: None,
            member_tasks: BTreeSet::new(),
            centroid: Vector::zeros(0),
            threshold: 0.0,
            children: Vec::new(),
            adapter_ref: None,
            stats: BanditStats::default(),
        });
        Self { nodes, root: 0, max_depth, storage_budget, signatures: BTreeMap::new(), next_id: 1 }
    }

    pub fn root_id(&self) -> NodeId {
        self.root
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn storage_budget(&self) -> usize {
        self.storage_budget
    }

    pub fn set_storage_budget(&mut self, budget: usize) {
        self.storage_budget = budget;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes
            .get(&id)
            .ok_or_else(|| Error::Lookup(format!("node {id} not in tree")))
    }

    pub fn node_mut(&mut self, id: NodeId) -> Result<&mut TreeNode> {
        self.nodes
            .get_mut(&id)
            .ok_or_else(|| Error::Lookup(format!("node {id} not in tree")))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.is_leaf() && n.id != self.root)
            .map(|n| n.id)
            .collect()
    }

    pub fn has_leaves(&self) -> bool {
        !self.node(self.root).unwrap().children.is_empty()
    }

    pub fn signature(&self, task_id: usize) -> Option<&Vector> {
        self.signatures.get(&task_id)
    }

    pub fn set_adapter_ref(&mut self, id: NodeId, adapter: Option<AdapterId>) -> Result<()> {
        self.node_mut(id)?.adapter_ref = adapter;
        Ok(())
    }

    /// Root-to-node path via parent pointers.
    pub fn path_to(&self, id: NodeId) -> Result<Vec<NodeId>> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.node(cur)?.parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Ok(path)
    }

    /// Leaf whose member set contains the task.
    pub fn leaf_containing(&self, task_id: usize) -> Option<NodeId> {
        self.nodes
            .values()
            .find(|n| n.is_leaf() && n.member_tasks.contains(&task_id))
            .map(|n| n.id)
    }

    fn alloc(&mut self, node: TreeNode) -> NodeId {
        let id = node.id;
        self.nodes.insert(id, node);
        id
    }

    fn fresh_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Inserts a finished task by its gradient signature.
    ///
    /// Descends from the root: at each node, the child with the nearest
    /// centroid is entered when its distance lies within the node's median
    /// threshold, otherwise a new branch opens here. Reaching a leaf splits
    /// it, moving the leaf's previous content one level down next to the new
    /// task (bounded by the tree's maximum depth).
    pub fn insert_task(
        &mut self,
        task_id: usize,
        grad: Vector,
        adapter: Option<AdapterId>,
    ) -> Result<NodeId> {
        if self.signatures.contains_key(&task_id) {
            return Err(Error::Input(format!("task {task_id} already inserted")));
        }
        if let Some(sig) = self.signatures.values().next() {
            if sig.len() != grad.len() {
                return Err(Error::Shape(format!(
                    "signature length {} vs existing {}",
                    grad.len(),
                    sig.len()
                )));
            }
        }
        enum Reach {
            Under(NodeId),
            SplitLeaf(NodeId),
        }
        let mut v = self.root;
        let reach = loop {
            let node = self.node(v)?;
            if node.children.is_empty() {
                break Reach::Under(v);
            }
            let mut best: Option<(f64, NodeId)> = None;
            let mut runner_up = f64::INFINITY;
            for &c in &node.children {
                let child = self.node(c)?;
                let d = if child.centroid.is_empty() {
                    f64::INFINITY
                } else {
                    l1_distance(&child.centroid, &grad)?
                };
                let better = match best {
                    None => true,
                    Some((bd, bid)) => d < bd || (d == bd && c < bid),
                };
                if better {
                    if let Some((bd, _)) = best {
                        runner_up = bd;
                    }
                    best = Some((d, c));
                } else {
                    runner_up = runner_up.min(d);
                }
            }
            let (dist, nearest) = best.unwrap();
            // Enter the nearest branch when it lies within the node's median
            // radius, or when it is decisively nearer than any alternative
            // (margin rule, inactive for single children so genuinely new
            // structure still opens a fresh branch).
            let decisive = runner_up.is_finite() && dist <= DESCENT_MARGIN * runner_up;
            if dist <= node.threshold || decisive {
                if self.node(nearest)?.is_leaf() {
                    break Reach::SplitLeaf(nearest);
                }
                v = nearest;
            } else {
                break Reach::Under(v);
            }
        };

        self.signatures.insert(task_id, grad.clone());
        let new_leaf = match reach {
            Reach::Under(parent) => self.attach_leaf(parent, task_id, &grad, adapter),
            Reach::SplitLeaf(leaf) => {
                let depth = self.node(leaf)?.depth;
                if depth + 1 > self.max_depth {
                    // Depth cap: the new task becomes a sibling instead.
                    let parent = self.node(leaf)?.parent.expect("leaf at depth >= 1 has a parent");
                    self.attach_leaf(parent, task_id, &grad, adapter)
                } else {
                    // Old content moves down into its own child; the split
                    // node keeps the membership, the child takes the adapter.
                    let old = self.node_mut(leaf)?;
                    let old_members = old.member_tasks.clone();
                    let old_centroid = old.centroid.clone();
                    let old_adapter = old.adapter_ref.take();
                    let relocated = self.fresh_id();
                    self.alloc(TreeNode {
                        id: relocated,
                        depth: depth + 1,
                        parent: Some(leaf),
                        member_tasks: old_members,
                        centroid: old_centroid,
                        threshold: 0.0,
                        children: Vec::new(),
                        adapter_ref: old_adapter,
                        stats: BanditStats::default(),
                    });
                    self.node_mut(leaf)?.children.push(relocated);
                    self.refresh_node(relocated)?;
                    self.attach_leaf(leaf, task_id, &grad, adapter)
                }
            }
        };
        // Membership, centroids, and thresholds refresh along the new path.
        let path = self.path_to(new_leaf)?;
        for &id in path.iter().rev().skip(1) {
            self.node_mut(id)?.member_tasks.insert(task_id);
            self.refresh_node(id)?;
        }
        Ok(new_leaf)
    }

    fn attach_leaf(
        &mut self,
        parent: NodeId,
        task_id: usize,
        grad: &Vector,
        adapter: Option<AdapterId>,
    ) -> NodeId {
        let depth = self.nodes[&parent].depth + 1;
        debug_assert!(depth <= self.max_depth);
        let id = self.fresh_id();
        self.alloc(TreeNode {
            id,
            depth,
            parent: Some(parent),
            member_tasks: BTreeSet::from([task_id]),
            centroid: grad.clone(),
            threshold: 0.0,
            children: Vec::new(),
            adapter_ref: adapter,
            stats: BanditStats::default(),
        });
        self.nodes.get_mut(&parent).unwrap().children.push(id);
        id
    }

    /// Recomputes a node's centroid (mean member signature) and threshold
    /// (median member distance to the centroid).
    fn refresh_node(&mut self, id: NodeId) -> Result<()> {
        let members: Vec<usize> = self.node(id)?.member_tasks.iter().copied().collect();
        if members.is_empty() {
            return Ok(());
        }
        let dim = self.signatures[&members[0]].len();
        let mut mean = vec![0.0; dim];
        for t in &members {
            for (m, v) in mean.iter_mut().zip(self.signatures[t].as_slice()) {
                *m += v;
            }
        }
        let inv = 1.0 / members.len() as f64;
        for m in &mut mean {
            *m *= inv;
        }
        let centroid = Vector::new(mean)?;
        let threshold = if members.len() >= 2 {
            let dists: Vec<f64> = members
                .iter()
                .map(|t| l1_distance(&self.signatures[t], &centroid).unwrap())
                .collect();
            median(&dists)
        } else {
            0.0
        };
        let node = self.node_mut(id)?;
        node.centroid = centroid;
        node.threshold = threshold;
        Ok(())
    }

    /// Merges closest same-parent leaf pairs until the number of
    /// adapter-bearing leaves fits the storage budget.
    pub fn enforce_budget(&mut self, store: &mut AdapterStore) -> Result<Vec<MergeRecord>> {
        let mut report = Vec::new();
        loop {
            let count = self
                .nodes
                .values()
                .filter(|n| n.is_leaf() && n.adapter_ref.is_some())
                .count();
            if count <= self.storage_budget {
                break;
            }
            let pair = self.closest_same_parent_pair()?;
            let (a, b, parent, distance) = match pair {
                Some(p) => p,
                None => {
                    if !self.splice_single_child_internals() {
                        break;
                    }
                    continue;
                }
            };
            let adapter_a = self.node(a)?.adapter_ref.unwrap();
            let adapter_b = self.node(b)?.adapter_ref.unwrap();
            let merged = merge_adapters(&[
                store.get(adapter_a)?.adapter.clone(),
                store.get(adapter_b)?.adapter.clone(),
            ])?;
            let members_b = self.node(b)?.member_tasks.clone();
            let task_attr = *self
                .node(a)?
                .member_tasks
                .iter()
                .chain(&members_b)
                .min()
                .unwrap();
            let merged_id = store.register(task_attr, merged);
            {
                let keep = self.node_mut(a)?;
                keep.member_tasks.extend(members_b);
                keep.adapter_ref = Some(merged_id);
                keep.stats = BanditStats::default();
            }
            self.refresh_node(a)?;
            let parent_node = self.node_mut(parent)?;
            parent_node.children.retain(|&c| c != b);
            self.nodes.remove(&b);
            report.push(MergeRecord { kept: a, removed: b, parent, distance });
        }
        Ok(report)
    }

    fn closest_same_parent_pair(&self) -> Result<Option<(NodeId, NodeId, NodeId, f64)>> {
        let mut best: Option<(NodeId, NodeId, NodeId, f64)> = None;
        for node in self.nodes.values() {
            let leaves: Vec<NodeId> = node
                .children
                .iter()
                .copied()
                .filter(|c| {
                    let n = &self.nodes[c];
                    n.is_leaf() && n.adapter_ref.is_some()
                })
                .collect();
            for i in 0..leaves.len() {
                for j in (i + 1)..leaves.len() {
                    let (x, y) = (leaves[i].min(leaves[j]), leaves[i].max(leaves[j]));
                    let d = l1_distance(&self.nodes[&x].centroid, &self.nodes[&y].centroid)?;
                    let better = match best {
                        None => true,
                        Some((bx, by, _, bd)) => {
                            d < bd || (d == bd && (x, y) < (bx, by))
                        }
                    };
                    if better {
                        best = Some((x, y, node.id, d));
                    }
                }
            }
        }
        Ok(best)
    }

    /// Hoists lone leaf children over their single-child internal parents so
    /// budget merging can always find a same-parent pair. Returns whether
    /// anything changed.
    fn splice_single_child_internals(&mut self) -> bool {
        let candidates: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| {
                n.id != self.root
                    && n.children.len() == 1
                    && self.nodes[&n.children[0]].is_leaf()
            })
            .map(|n| n.id)
            .collect();
        let mut changed = false;
        for id in candidates {
            let Some(node) = self.nodes.get(&id) else { continue };
            if node.children.len() != 1 {
                continue;
            }
            let leaf = node.children[0];
            let parent = node.parent.expect("non-root has a parent");
            let depth = node.depth;
            {
                let l = self.nodes.get_mut(&leaf).unwrap();
                l.parent = Some(parent);
                l.depth = depth;
            }
            let p = self.nodes.get_mut(&parent).unwrap();
            for c in &mut p.children {
                if *c == id {
                    *c = leaf;
                }
            }
            self.nodes.remove(&id);
            changed = true;
        }
        changed
    }

    pub fn reset_bandit_stats(&mut self) {
        for node in self.nodes.values_mut() {
            node.stats = BanditStats::default();
        }
    }

    /// Structural validator used heavily by tests: reachability, parent/child
    /// depth relation, member unions, depth bound, and centroid correctness.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return Err(Error::Validation(format!("node {id} reached twice")));
            }
            let node = self.node(id)?;
            if node.depth > self.max_depth {
                return Err(Error::Validation(format!(
                    "node {id} depth {} exceeds max {}",
                    node.depth, self.max_depth
                )));
            }
            if !node.is_leaf() {
                let mut union = BTreeSet::new();
                for &c in &node.children {
                    let child = self.node(c)?;
                    if child.parent != Some(id) {
                        return Err(Error::Validation(format!(
                            "child {c} parent pointer mismatch"
                        )));
                    }
                    if child.depth != node.depth + 1 {
                        return Err(Error::Validation(format!(
                            "child {c} depth {} under parent depth {}",
                            child.depth, node.depth
                        )));
                    }
                    union.extend(child.member_tasks.iter().copied());
                    stack.push(c);
                }
                if union != node.member_tasks {
                    return Err(Error::Validation(format!(
                        "node {id} member set is not the union of its children"
                    )));
                }
            }
            if !node.member_tasks.is_empty() && !node.centroid.is_empty() {
                let all_known = node.member_tasks.iter().all(|t| self.signatures.contains_key(t));
                if all_known {
                    let dim = node.centroid.len();
                    let mut mean = vec![0.0; dim];
                    for t in &node.member_tasks {
                        for (m, v) in mean.iter_mut().zip(self.signatures[t].as_slice()) {
                            *m += v;
                        }
                    }
                    let inv = 1.0 / node.member_tasks.len() as f64;
                    for (m, c) in mean.iter_mut().zip(node.centroid.as_slice()) {
                        *m *= inv;
                        if (*m - c).abs() > 1e-9 {
                            return Err(Error::Validation(format!(
                                "node {id} centroid deviates from member mean"
                            )));
                        }
                    }
                }
            }
        }
        if seen.len() != self.nodes.len() {
            return Err(Error::Validation(format!(
                "{} nodes unreachable from root",
                self.nodes.len() - seen.len()
            )));
        }
        if self.node(self.root)?.parent.is_some() {
            return Err(Error::Validation("root has a parent".into()));
        }
        Ok(())
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph simtree {\n");
        for node in self.nodes.values() {
            let tasks: Vec<String> = node.member_tasks.iter().map(|t| t.to_string()).collect();
            writeln!(
                out,
                "  n{} [label=\"n{} d={} delta={:.4}\\ntasks {{{}}}\"];",
                node.id,
                node.id,
                node.depth,
                node.threshold,
                tasks.join(",")
            )
            .unwrap();
        }
        for node in self.nodes.values() {
            for &c in &node.children {
                writeln!(out, "  n{} -> n{};", node.id, c).unwrap();
            }
        }
        out.push_str("}\n");
        out
    }

    pub fn to_json(&self) -> String {
        let file = SimTreeFile {
            root: self.root,
            max_depth: self.max_depth,
            storage_budget: self.storage_budget,
            next_id: self.next_id,
            nodes: self.nodes.values().cloned().collect(),
            signatures: self.signatures.clone(),
        };
        serde_json::to_string_pretty(&file).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SimTreeFile = serde_json::from_str(text)
            .map_err(|e| Error::Parse { line: e.line(), msg: e.to_string() })?;
        let tree = Self {
            nodes: file.nodes.into_iter().map(|n| (n.id, n)).collect(),
            root: file.root,
            max_depth: file.max_depth,
            storage_budget: file.storage_budget,
            signatures: file.signatures,
            next_id: file.next_id,
        };
        tree.validate()?;
        Ok(tree)
    }

    /// Fixture/builder access used by the bandit environments and tests:
    /// creates a child with explicit centroid and threshold.
    pub fn add_child(&mut self, parent: NodeId, centroid: Vector, threshold: f64) -> Result<NodeId> {
        let depth = self.node(parent)?.depth + 1;
        if depth > self.max_depth {
            return Err(Error::Input(format!(
                "child would exceed max depth {}",
                self.max_depth
            )));
        }
        let id = self.fresh_id();
        self.alloc(TreeNode {
            id,
            depth,
            parent: Some(parent),
            member_tasks: BTreeSet::new(),
            centroid,
            threshold,
            children: Vec::new(),
            adapter_ref: None,
            stats: BanditStats::default(),
        });
        self.node_mut(parent)?.children.push(id);
        Ok(id)
    }

    /// Builder companion to `add_child`: assigns leaf member labels and
    /// propagates unions upward.
    pub fn assign_member(&mut self, leaf: NodeId, task_id: usize) -> Result<()> {
        let path = self.path_to(leaf)?;
        for id in path {
            self.node_mut(id)?.member_tasks.insert(task_id);
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct SimTreeFile {
    root: NodeId,
    max_depth: usize,
    storage_budget: usize,
    next_id: NodeId,
    nodes: Vec<TreeNode>,
    signatures: BTreeMap<usize, Vector>,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Median split threshold over member gradient distances to the node
/// centroid: the value that sends members with distance at or below it to
/// the near child.
pub fn split_threshold(distances: &[f64]) -> Result<f64> {
    if distances.len() < 2 {
        return Err(Error::Input(format!(
            "split threshold needs at least 2 members, got {}",
            distances.len()
        )));
    }
    Ok(median(distances))
}

/// Partitions member tasks into (near, far) children by the median rule.
/// Distances strictly below the threshold go near, strictly above go far;
/// members exactly at the threshold are balanced by task-id parity.
pub fn median_partition(members: &[(usize, f64)]) -> Result<(f64, Vec<usize>, Vec<usize>)> {
    let dists: Vec<f64> = members.iter().map(|(_, d)| *d).collect();
    let threshold = split_threshold(&dists)?;
    let mut near = Vec::new();
    let mut far = Vec::new();
    for &(task, d) in members {
        if d < threshold {
            near.push(task);
        } else if d > threshold {
            far.push(task);
        } else if task % 2 == 0 {
            near.push(task);
        } else {
            far.push(task);
        }
    }
    Ok((threshold, near, far))
}

//! Low-rank adapters, the gradient sparsifier, the adapter store, and
//! branch assembly along a tree path.
//!
//! An adapter is a factor pair (B, A) attached to one dense layer as
//! W + B*A. The sparsifier restricts a gradient to the adapter-factor
//! coordinates: base blocks are zeroed and only the per-adapter (dA, dB)
//! blocks survive, optionally thinned further by magnitude top-k. That makes
//! it linear, idempotent, and non-expansive in L1 over the full coordinate
//! set.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::densemath::{matmul, rank_truncation, Matrix};
use crate::error::{Error, Result};
use crate::io::{atomic_write, parse_f64, ParseCursor};
use crate::model::{GradientSet, ModelParams};
use crate::simtree::{NodeId, SimTree};

/// Standard deviation for the Gaussian init of the A factor. B starts at
/// zero so a fresh adapter is a no-op at attach time.
pub const A_INIT_STD: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    pub layer_index: usize,
    /// rank x in_dim.
    pub a: Matrix,
    /// out_dim x rank, zero-initialized.
    pub b: Matrix,
    pub rank: usize,
}

impl LoraAdapter {
    pub fn new(
        layer_index: usize,
        in_dim: usize,
        out_dim: usize,
        rank: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if rank == 0 || rank > in_dim.min(out_dim) {
            return Err(Error::Input(format!(
                "rank {rank} invalid for layer {in_dim}->{out_dim}"
            )));
        }
        let a = Matrix::from_fn(rank, in_dim, |_, _| {
            // Box-Muller keeps the dependency surface small here.
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            A_INIT_STD * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        });
        Ok(Self { layer_index, a, b: Matrix::zeros(out_dim, rank), rank })
    }

    pub fn in_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.b.rows()
    }

    /// Dense effect B*A.
    pub fn effect(&self) -> Result<Matrix> {
        matmul(&self.b, &self.a)
    }

    pub fn param_count(&self) -> usize {
        self.rank * self.in_dim() + self.out_dim() * self.rank
    }

    fn same_shape(&self, other: &LoraAdapter) -> bool {
        self.layer_index == other.layer_index
            && self.rank == other.rank
            && self.in_dim() == other.in_dim()
            && self.out_dim() == other.out_dim()
    }
}

/// Ordered set of adapters, at most one per layer, with the tree nodes that
/// contributed them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdapterStack {
    entries: Vec<StackEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackEntry {
    pub adapter: LoraAdapter,
    pub source_node: Option<NodeId>,
}

impl AdapterStack {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_adapters(adapters: Vec<LoraAdapter>) -> Result<Self> {
        let entries = adapters
            .into_iter()
            .map(|adapter| StackEntry { adapter, source_node: None })
            .collect();
        Self::from_entries(entries)
    }

    pub fn from_entries(entries: Vec<StackEntry>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].adapter.layer_index >= w[1].adapter.layer_index {
                return Err(Error::Input(
                    "stack layer indices must be strictly increasing".into(),
                ));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &LoraAdapter> {
        self.entries.iter().map(|e| &e.adapter)
    }

    pub fn entries(&self) -> &[StackEntry] {
        &self.entries
    }

    pub fn adapter_at(&self, layer: usize) -> Option<&LoraAdapter> {
        self.entries
            .iter()
            .find(|e| e.adapter.layer_index == layer)
            .map(|e| &e.adapter)
    }

    pub fn adapter_at_mut(&mut self, layer: usize) -> Option<&mut LoraAdapter> {
        self.entries
            .iter_mut()
            .find(|e| e.adapter.layer_index == layer)
            .map(|e| &mut e.adapter)
    }

    /// Tree node ids that contributed adapters, in layer order.
    pub fn provenance(&self) -> Vec<Option<NodeId>> {
        self.entries.iter().map(|e| e.source_node).collect()
    }

    pub fn total_factor_params(&self) -> usize {
        self.entries.iter().map(|e| e.adapter.param_count()).sum()
    }

    pub fn check_compatible(&self, params: &ModelParams) -> Result<()> {
        for e in &self.entries {
            let l = e.adapter.layer_index;
            if l >= params.num_layers() {
                return Err(Error::Shape(format!(
                    "adapter layer {l} out of range for {}-layer model",
                    params.num_layers()
                )));
            }
            let spec = params.spec()[l];
            if e.adapter.in_dim() != spec.in_dim || e.adapter.out_dim() != spec.out_dim {
                return Err(Error::Shape(format!(
                    "adapter at layer {l} is {}x{} but layer is {}x{}",
                    e.adapter.out_dim(),
                    e.adapter.in_dim(),
                    spec.out_dim,
                    spec.in_dim
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SparsifyMode {
    LowrankProjection,
    LowrankPlusTopk,
}

impl SparsifyMode {
    pub fn name(self) -> &'static str {
        match self {
            SparsifyMode::LowrankProjection => "lowrank_projection",
            SparsifyMode::LowrankPlusTopk => "lowrank_plus_topk",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "lowrank_projection" => Some(SparsifyMode::LowrankProjection),
            "lowrank_plus_topk" => Some(SparsifyMode::LowrankPlusTopk),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsifyConfig {
    pub mode: SparsifyMode,
    pub topk_fraction: f64,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        Self { mode: SparsifyMode::LowrankProjection, topk_fraction: 1.0 }
    }
}

impl SparsifyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mode == SparsifyMode::LowrankPlusTopk
            && !(self.topk_fraction > 0.0 && self.topk_fraction <= 1.0)
        {
            return Err(Error::Input(format!(
                "topk_fraction {} must lie in (0, 1]",
                self.topk_fraction
            )));
        }
        Ok(())
    }
}

/// Restricts a gradient to the adapter-factor coordinates of `stack`.
///
/// The base blocks of the result are zero. Factor blocks are taken from the
/// input when it already carries them for this stack, otherwise derived from
/// the base weight gradients by the chain rule. In top-k mode, only the
/// ceil(fraction * factor-parameter-count) largest-magnitude factor entries
/// survive.
pub fn sparsify(g: &GradientSet, stack: &AdapterStack, cfg: &SparsifyConfig) -> Result<GradientSet> {
    cfg.validate()?;
    let aligned = g.factors.len() == stack.len()
        && g.factors.iter().zip(stack.iter()).all(|(f, ad)| {
            f.layer_index == ad.layer_index
                && f.d_a.rows() == ad.a.rows()
                && f.d_a.cols() == ad.a.cols()
                && f.d_b.rows() == ad.b.rows()
                && f.d_b.cols() == ad.b.cols()
        });
    let with = if aligned { g.clone() } else { g.with_factors(stack)? };

    let mut out = with.clone();
    for l in &mut out.layers {
        for v in l.dweight.as_mut_slice() {
            *v = 0.0;
        }
        for v in l.dbias.as_mut_slice() {
            *v = 0.0;
        }
    }

    if cfg.mode == SparsifyMode::LowrankPlusTopk {
        let total = stack.total_factor_params();
        let k = ((cfg.topk_fraction * total as f64).ceil() as usize).min(total);
        // Gather |value| over every factor coordinate in deterministic order.
        let mut mags: Vec<(f64, usize)> = Vec::with_capacity(total);
        let mut idx = 0;
        for f in &out.factors {
            for v in f.d_a.as_slice().iter().chain(f.d_b.as_slice()) {
                mags.push((v.abs(), idx));
                idx += 1;
            }
        }
        mags.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let keep: std::collections::BTreeSet<usize> =
            mags.into_iter().take(k).map(|(_, i)| i).collect();
        let mut idx = 0;
        for f in &mut out.factors {
            for v in f.d_a.as_mut_slice().iter_mut().chain(f.d_b.as_mut_slice()) {
                if !keep.contains(&idx) {
                    *v = 0.0;
                }
                idx += 1;
            }
        }
    }
    Ok(out)
}

/// Reduces several same-shape adapters to a single one whose dense effect is
/// the best rank-r approximation of the summed effects.
pub fn merge_adapters(adapters: &[LoraAdapter]) -> Result<LoraAdapter> {
    let first = adapters
        .first()
        .ok_or_else(|| Error::Input("merge_adapters: empty list".into()))?;
    if adapters.iter().any(|a| !a.same_shape(first)) {
        return Err(Error::Shape(
            "merge_adapters: adapters must share layer and shapes".into(),
        ));
    }
    if adapters.len() == 1 {
        return Ok(first.clone());
    }
    // Shared A factor: the sum is (sum B_i) A, already rank r. Exact path.
    if adapters.iter().all(|ad| ad.a == first.a) {
        let mut b = first.b.clone();
        for ad in &adapters[1..] {
            b = b.add(&ad.b)?;
        }
        return Ok(LoraAdapter {
            layer_index: first.layer_index,
            a: first.a.clone(),
            b,
            rank: first.rank,
        });
    }
    let mut sum = first.effect()?;
    for ad in &adapters[1..] {
        sum = sum.add(&ad.effect()?)?;
    }
    let (b, a) = rank_truncation(&sum, first.rank);
    Ok(LoraAdapter { layer_index: first.layer_index, a, b, rank: first.rank })
}

pub type AdapterId = u64;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredAdapter {
    pub task_id: usize,
    pub adapter: LoraAdapter,
}

/// Id-indexed persistent collection of per-task adapters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdapterStore {
    records: BTreeMap<AdapterId, StoredAdapter>,
    next_id: AdapterId,
}

impl AdapterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, task_id: usize, adapter: LoraAdapter) -> AdapterId {
        let id = self.next_id;
        self.next_id += 1;
        self.records.insert(id, StoredAdapter { task_id, adapter });
        id
    }

    pub fn get(&self, id: AdapterId) -> Result<&StoredAdapter> {
        self.records
            .get(&id)
            .ok_or_else(|| Error::Lookup(format!("adapter id {id} not in store")))
    }

    pub fn get_mut(&mut self, id: AdapterId) -> Result<&mut StoredAdapter> {
        self.records
            .get_mut(&id)
            .ok_or_else(|| Error::Lookup(format!("adapter id {id} not in store")))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&AdapterId, &StoredAdapter)> {
        self.records.iter()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "adapter-store v1").unwrap();
        writeln!(out, "count {}", self.records.len()).unwrap();
        writeln!(out, "next_id {}", self.next_id).unwrap();
        for (id, rec) in &self.records {
            let ad = &rec.adapter;
            writeln!(
                out,
                "adapter {id} task {} layer {} rank {} in {} out {}",
                rec.task_id,
                ad.layer_index,
                ad.rank,
                ad.in_dim(),
                ad.out_dim()
            )
            .unwrap();
            for r in 0..ad.a.rows() {
                let row: Vec<String> = ad.a.row(r).iter().map(|v| format!("{v}")).collect();
                writeln!(out, "a {}", row.join(" ")).unwrap();
            }
            for r in 0..ad.b.rows() {
                let row: Vec<String> = ad.b.row(r).iter().map(|v| format!("{v}")).collect();
                writeln!(out, "b {}", row.join(" ")).unwrap();
            }
        }
        atomic_write(path, out.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cur = ParseCursor::new(&text);
        cur.expect_line("adapter-store v1")?;
        let count: usize = cur.field_after("count")?;
        let next_id: AdapterId = cur.field_after("next_id")?;
        let mut records = BTreeMap::new();
        for _ in 0..count {
            let header = cur.next_line()?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 12 || parts[0] != "adapter" {
                return Err(cur.error(format!("bad adapter header {header:?}")));
            }
            let id: AdapterId = cur.parse_field(parts[1])?;
            let task_id: usize = cur.parse_field(parts[3])?;
            let layer_index: usize = cur.parse_field(parts[5])?;
            let rank: usize = cur.parse_field(parts[7])?;
            let in_dim: usize = cur.parse_field(parts[9])?;
            let out_dim: usize = cur.parse_field(parts[11])?;
            let mut read_rows = |prefix: &str, rows: usize, cols: usize| -> Result<Matrix> {
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let line = cur.next_line()?;
                    let rest = line
                        .strip_prefix(prefix)
                        .ok_or_else(|| cur.error(format!("expected {prefix:?} row")))?;
                    for tok in rest.split_whitespace() {
                        data.push(parse_f64(tok).map_err(|m| cur.error(m))?);
                    }
                }
                Matrix::new(rows, cols, data).map_err(|e| cur.error(e.to_string()))
            };
            let a = read_rows("a ", rank, in_dim)?;
            let b = read_rows("b ", out_dim, rank)?;
            records.insert(id, StoredAdapter {
                task_id,
                adapter: LoraAdapter { layer_index, a, b, rank },
            });
        }
        Ok(Self { records, next_id })
    }
}

/// Assembles the adapter stack for a root-to-node path. Every adapter-bearing
/// node on the path contributes its stored adapter; adapters are placed at
/// their own layer index, and when two nodes map to the same layer the deeper
/// node wins.
pub fn assemble_branch(path: &[NodeId], tree: &SimTree, store: &AdapterStore) -> Result<AdapterStack> {
    let mut per_layer: BTreeMap<usize, (usize, StackEntry)> = BTreeMap::new();
    for &node_id in path {
        let node = tree.node(node_id)?;
        if let Some(adapter_id) = node.adapter_ref {
            let rec = store.get(adapter_id)?;
            let layer = rec.adapter.layer_index;
            let candidate = (node.depth, StackEntry {
                adapter: rec.adapter.clone(),
                source_node: Some(node_id),
            });
            match per_layer.get(&layer) {
                Some((depth, _)) if *depth >= node.depth => {}
                _ => {
                    per_layer.insert(layer, candidate);
                }
            }
        }
    }
    AdapterStack::from_entries(per_layer.into_values().map(|(_, e)| e).collect())
}

/// Layer block a tree node of the given depth instructs, for a model with
/// `num_layers` layers: depth d maps to block d, clamped to the last block.
pub fn block_for_depth(depth: usize, num_layers: usize) -> usize {
    depth.min(num_layers.saturating_sub(1))
}

//! End-to-end continual training: offline pretraining of the base model,
//! the per-task adaptation loop with LCB branch selection and sparse
//! regularized factor updates, tree maintenance, and the continual-learning
//! metrics, plus a sequential-adapter baseline trained under an identical
//! budget.
//!
//! Base weights are frozen after pretraining; every update flows through the
//! current task's adapter factors. Each round queries exactly one previous
//! configuration's gradient, chosen by descending the similarity tree.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adapter::{
    assemble_branch, sparsify, AdapterStack, AdapterStore, LoraAdapter, SparsifyConfig,
};
use crate::bandit::{residual, select_branch, update_stats, LcbParams};
use crate::densemath::Vector;
use crate::error::{Error, Result};
use crate::io::derive_seed;
use crate::model::{
    accuracy, gradient_signature, loss_and_grad_batch, mlp_spec, GradientSet, ModelParams,
};
use crate::simtree::{NodeId, SimTree};
use crate::taskstream::{generate_stream, pretrain_split, StreamSpec, Task, TaskStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferencePolicy {
    /// Assemble the branch of the most recently learned adapter.
    MostRecentAdapter,
    /// Pick the leaf whose assembled stack scores best on the newest task's
    /// training split.
    BestBranchByValidation,
}

impl InferencePolicy {
    pub fn name(self) -> &'static str {
        match self {
            InferencePolicy::MostRecentAdapter => "most-recent",
            InferencePolicy::BestBranchByValidation => "best-branch",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "most-recent" => Some(InferencePolicy::MostRecentAdapter),
            "best-branch" => Some(InferencePolicy::BestBranchByValidation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub lambda: f64,
    /// Per-task epoch schedule; the last entry repeats for later tasks.
    pub epochs: Vec<usize>,
    pub batch_size: usize,
    pub rank: usize,
    pub max_depth: usize,
    pub storage_budget: usize,
    pub seed: u64,
    /// Layer the per-task trainable adapter attaches to.
    pub adapter_layer: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub sparsify: SparsifyConfig,
    pub exploration_coef: f64,
    pub pretrain_steps: usize,
    pub pretrain_samples: usize,
    pub pretrain_lr: f64,
    pub inference: InferencePolicy,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.005,
            lambda: 0.1,
            epochs: vec![6],
            batch_size: 32,
            rank: 8,
            max_depth: 5,
            storage_budget: 8,
            seed: 7,
            adapter_layer: 4,
            hidden_dim: 32,
            hidden_layers: 5,
            sparsify: SparsifyConfig::default(),
            exploration_coef: 2.0,
            pretrain_steps: 600,
            pretrain_samples: 512,
            pretrain_lr: 0.05,
            inference: InferencePolicy::MostRecentAdapter,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0) {
            problems.push("learning_rate must be positive".to_string());
        }
        if self.lambda < 0.0 {
            problems.push("lambda must be nonnegative".to_string());
        }
        if self.epochs.is_empty() || self.epochs.iter().any(|e| *e == 0) {
            problems.push("epochs must be a nonempty list of positive counts".to_string());
        }
        if self.batch_size == 0 || self.rank == 0 || self.max_depth == 0 {
            problems.push("batch_size, rank, and max_depth must be positive".to_string());
        }
        if self.storage_budget == 0 {
            problems.push("storage_budget must be positive".to_string());
        }
        if self.adapter_layer > self.hidden_layers {
            problems.push("adapter_layer must index a model layer".to_string());
        }
        if let Err(e) = self.sparsify.validate() {
            problems.push(e.to_string());
        }
        if !(self.exploration_coef > 0.0) {
            problems.push("exploration_coef must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Input(problems.join("; ")))
        }
    }

    pub fn epochs_for(&self, task_index: usize) -> usize {
        *self.epochs.get(task_index).unwrap_or_else(|| self.epochs.last().unwrap())
    }

    fn lcb_params(&self) -> LcbParams {
        LcbParams {
            exploration_coef: self.exploration_coef,
            delta_schedule: Vec::new(),
            use_node_thresholds: true,
        }
    }
}

/// f[(i, j)] = accuracy on task i of the model after learning task j, i <= j.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalMatrix {
    entries: BTreeMap<(usize, usize), f64>,
}

impl EvalMatrix {
    pub fn set(&mut self, task_i: usize, after_j: usize, value: f64) {
        self.entries.insert((task_i, after_j), value);
    }

    pub fn get(&self, task_i: usize, after_j: usize) -> Option<f64> {
        self.entries.get(&(task_i, after_j)).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task_i,after_task_j,accuracy\n");
        for ((i, j), v) in &self.entries {
            writeln!(out, "{i},{j},{v}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            if idx == 0 {
                if line != "task_i,after_task_j,accuracy" {
                    return Err(Error::Parse { line: 1, msg: format!("bad header {line:?}") });
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse { line: idx + 1, msg: format!("bad row {line:?}") });
            }
            let i: usize = parts[0]
                .parse()
                .map_err(|_| Error::Parse { line: idx + 1, msg: "bad task_i".into() })?;
            let j: usize = parts[1]
                .parse()
                .map_err(|_| Error::Parse { line: idx + 1, msg: "bad after_task_j".into() })?;
            let v: f64 = parts[2]
                .parse()
                .map_err(|_| Error::Parse { line: idx + 1, msg: "bad accuracy".into() })?;
            entries.insert((i, j), v);
        }
        Ok(Self { entries })
    }
}

/// Overall performance and backward transfer after task index `n` (0-based):
/// OP = mean_i f[i][n]; BWT = mean_i (f[i][i] - f[i][n]).
pub fn metrics(m: &EvalMatrix, n: usize) -> Result<(f64, f64)> {
    let count = n + 1;
    let mut op = 0.0;
    let mut bwt = 0.0;
    for i in 0..count {
        let f_in = m
            .get(i, n)
            .ok_or_else(|| Error::Input(format!("missing eval entry ({i}, {n})")))?;
        let f_ii = m
            .get(i, i)
            .ok_or_else(|| Error::Input(format!("missing eval entry ({i}, {i})")))?;
        op += f_in;
        bwt += f_ii - f_in;
    }
    Ok((op / count as f64, bwt / count as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRow {
    pub task: usize,
    pub op: f64,
    pub bwt: f64,
    pub seconds: f64,
    pub rounds: u64,
    pub grad_queries: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub task: usize,
    pub round: u64,
    pub path: Vec<NodeId>,
    pub leaf: NodeId,
    pub value: f64,
    pub per_layer: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub method: String,
    pub per_task: Vec<TaskRow>,
    pub eval: EvalMatrix,
    pub grad_query_total: u64,
    /// Peak number of simultaneously live previous-task gradient sets.
    pub peak_prev_grads: usize,
    pub observations: Vec<ObservationRow>,
    pub pretrain_accuracy: f64,
}

impl RunReport {
    pub fn final_op(&self) -> f64 {
        self.per_task.last().map(|r| r.op).unwrap_or(0.0)
    }

    pub fn final_bwt(&self) -> f64 {
        self.per_task.last().map(|r| r.bwt).unwrap_or(0.0)
    }

    /// Deterministic per-task metrics CSV (timings live in `timings_csv`).
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("task,op,bwt,rounds,grad_queries\n");
        for r in &self.per_task {
            writeln!(out, "{},{},{},{},{}", r.task, r.op, r.bwt, r.rounds, r.grad_queries).unwrap();
        }
        out
    }

    pub fn timings_csv(&self) -> String {
        let mut out = String::from("task,seconds\n");
        for r in &self.per_task {
            writeln!(out, "{},{}", r.task, r.seconds).unwrap();
        }
        out
    }

    pub fn observations_csv(&self) -> String {
        let mut out = String::from("task,round,leaf,path,value,per_layer\n");
        for o in &self.observations {
            let path: Vec<String> = o.path.iter().map(|p| p.to_string()).collect();
            let layers: Vec<String> = o.per_layer.iter().map(|v| v.to_string()).collect();
            writeln!(
                out,
                "{},{},{},{},{},{}",
                o.task,
                o.round,
                o.leaf,
                path.join(">"),
                o.value,
                layers.join("|")
            )
            .unwrap();
        }
        out
    }
}

/// Independent recomputation of OP/BWT from an eval-matrix CSV, used to
/// cross-check the run report.
pub fn recompute_metrics_from_csv(text: &str) -> Result<Vec<(usize, f64, f64)>> {
    let m = EvalMatrix::from_csv(text)?;
    let max_n = m
        .entries
        .keys()
        .map(|(_, j)| *j)
        .max()
        .ok_or_else(|| Error::Input("empty eval matrix".into()))?;
    let mut rows = Vec::new();
    for n in 0..=max_n {
        // Summation runs highest task first, deliberately not sharing the
        // accumulation order with `metrics`.
        let mut op_sum = 0.0;
        let mut bwt_sum = 0.0;
        for i in (0..=n).rev() {
            let f_in = m
                .get(i, n)
                .ok_or_else(|| Error::Input(format!("missing eval entry ({i}, {n})")))?;
            op_sum += f_in;
            bwt_sum += m.get(i, i).unwrap_or(f_in) - f_in;
        }
        let count = (n + 1) as f64;
        rows.push((n, op_sum / count, bwt_sum / count));
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Method {
    TreeLora,
    SeqLora,
}

/// Ownership gauge for the previous-task gradient: proves the training loop
/// never materializes more than one at a time.
#[derive(Debug, Default)]
struct PrevGradSlot {
    live: usize,
    peak: usize,
}

impl PrevGradSlot {
    fn acquire(&mut self) {
        self.live += 1;
        self.peak = self.peak.max(self.live);
    }

    fn release(&mut self) {
        self.live -= 1;
    }
}

#[derive(Debug, Clone)]
pub struct TrainerState {
    pub base: ModelParams,
    pub base_hash: u64,
    pub tree: SimTree,
    pub store: AdapterStore,
    pub hp: Hyperparams,
    pub last_task: Option<usize>,
}

impl TrainerState {
    /// Adapter stack used for inference under the configured policy; task
    /// identity is never consulted.
    pub fn inference_stack(&self, validation: Option<&[(Vector, usize)]>) -> Result<AdapterStack> {
        match self.hp.inference {
            InferencePolicy::MostRecentAdapter => self.most_recent_stack(),
            InferencePolicy::BestBranchByValidation => {
                let val = validation
                    .ok_or_else(|| Error::Input("best-branch policy needs validation data".into()))?;
                let mut best: Option<(f64, AdapterStack)> = None;
                for leaf in self.tree.leaf_ids() {
                    let path = self.tree.path_to(leaf)?;
                    let stack = assemble_branch(&path, &self.tree, &self.store)?;
                    let acc = accuracy(&self.base, Some(&stack), val)?;
                    if best.as_ref().map_or(true, |(b, _)| acc > *b) {
                        best = Some((acc, stack));
                    }
                }
                Ok(best.map(|(_, s)| s).unwrap_or_else(AdapterStack::empty))
            }
        }
    }

    fn most_recent_stack(&self) -> Result<AdapterStack> {
        let Some(last) = self.last_task else {
            return Ok(AdapterStack::empty());
        };
        let leaf = self
            .tree
            .leaf_containing(last)
            .ok_or_else(|| Error::Lookup(format!("no leaf holds task {last}")))?;
        let path = self.tree.path_to(leaf)?;
        assemble_branch(&path, &self.tree, &self.store)
    }
}

/// Offline initialization: plain SGD on the base weights over the mixture
/// dataset. Returns the pretrained model and its holdout accuracy.
pub fn pretrain(spec: &StreamSpec, hp: &Hyperparams) -> Result<(ModelParams, f64)> {
    hp.validate()?;
    let d0 = pretrain_split(spec, hp.pretrain_samples)?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(hp.seed, "model-init", 0));
    let mut params = ModelParams::init(
        mlp_spec(spec.input_dim, hp.hidden_dim, hp.hidden_layers, spec.num_classes),
        &mut init_rng,
    )?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(hp.seed, "pretrain-shuffle", 0));
    let mut order: Vec<usize> = (0..d0.train.len()).collect();
    let mut cursor = 0;
    for _ in 0..hp.pretrain_steps {
        if cursor + hp.batch_size > order.len() {
            order.shuffle(&mut shuffle_rng);
            cursor = 0;
        }
        let batch: Vec<(Vector, usize)> = order[cursor..cursor + hp.batch_size]
            .iter()
            .map(|&i| d0.train[i].clone())
            .collect();
        cursor += hp.batch_size;
        let (_, g) = loss_and_grad_batch(&params, None, &batch)?;
        for (i, lg) in g.layers.iter().enumerate() {
            let w = params.layer(i).weight.sub(&lg.dweight.scale(hp.pretrain_lr))?;
            let b = params.layer(i).bias.sub(&lg.dbias.scale(hp.pretrain_lr))?;
            params.layer_mut(i).weight = w;
            params.layer_mut(i).bias = b;
        }
    }
    let acc = accuracy(&params, None, &d0.test)?;
    Ok((params, acc))
}

/// First-order surrogate gradient of the L1 alignment penalty: the
/// elementwise sign of the gradient difference (taken in weight space, where
/// its entries are -1/0/+1), carried onto the adapter coordinates by the
/// factor chain rule and restricted there.
pub fn reg_gradient(
    g_now: &GradientSet,
    g_prev: &GradientSet,
    stack: &AdapterStack,
) -> Result<GradientSet> {
    let mut diff = g_now.sub_base(g_prev)?;
    let sign = |v: &mut f64| {
        *v = if *v > 0.0 {
            1.0
        } else if *v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    for l in &mut diff.layers {
        l.dweight.as_mut_slice().iter_mut().for_each(&sign);
        l.dbias.as_mut_slice().iter_mut().for_each(&sign);
    }
    let carried = diff.with_factors(stack)?;
    sparsify(&carried, stack, &SparsifyConfig::default())
}

fn fresh_adapter(base: &ModelParams, hp: &Hyperparams, task_id: usize) -> Result<LoraAdapter> {
    let layer = hp.adapter_layer;
    let spec = base.spec()[layer];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(hp.seed, "adapter-init", task_id as u64));
    LoraAdapter::new(layer, spec.in_dim, spec.out_dim, hp.rank, &mut rng)
}

struct TaskOutcome {
    adapter: LoraAdapter,
    rounds: u64,
    grad_queries: u64,
    observations: Vec<ObservationRow>,
}

fn train_task_adapter(
    base: &ModelParams,
    tree: &mut SimTree,
    store: &AdapterStore,
    task: &Task,
    task_index: usize,
    hp: &Hyperparams,
    method: Method,
    slot: &mut PrevGradSlot,
) -> Result<TaskOutcome> {
    let mut adapter = fresh_adapter(base, hp, task.task_id)?;
    let mut shuffle_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(hp.seed, "batch-shuffle", task.task_id as u64));
    let lcb = hp.lcb_params();
    let use_tree = method == Method::TreeLora && tree.has_leaves();
    if use_tree {
        tree.reset_bandit_stats();
    }
    let mut t: u64 = 0;
    let mut grad_queries: u64 = 0;
    let mut observations = Vec::new();

    for epoch in 0..hp.epochs_for(task_index) {
        let mut order: Vec<usize> = (0..task.train.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let _ = epoch;
        for chunk in order.chunks(hp.batch_size) {
            t += 1;
            let batch: Vec<(Vector, usize)> =
                chunk.iter().map(|&i| task.train[i].clone()).collect();
            let stack = AdapterStack::from_adapters(vec![adapter.clone()])?;
            let (_, g_now) = loss_and_grad_batch(base, Some(&stack), &batch)?;

            let mut reg: Option<GradientSet> = None;
            if use_tree {
                let path = select_branch(tree, t, &lcb)?;
                let leaf = *path.last().unwrap();
                let branch_stack = assemble_branch(&path, tree, store)?;
                // Exactly one previous-configuration gradient per round.
                slot.acquire();
                let (_, g_prev) = loss_and_grad_batch(base, Some(&branch_stack), &batch)?;
                grad_queries += 1;
                let obs = residual(&g_now, &g_prev, &stack, &hp.sparsify, leaf, t)?;
                update_stats(tree, &path, &obs)?;
                observations.push(ObservationRow {
                    task: task.task_id,
                    round: t,
                    path: path.clone(),
                    leaf,
                    value: obs.value,
                    per_layer: obs.per_layer.clone(),
                });
                if hp.lambda > 0.0 {
                    reg = Some(reg_gradient(&g_now, &g_prev, &stack)?);
                }
                slot.release();
            }

            // Factor-space SGD on the combined objective: the task loss plus
            // lambda times the alignment penalty, both stepped by the
            // learning rate.
            let sparse = sparsify(&g_now, &stack, &hp.sparsify)?;
            let f = &sparse.factors[0];
            adapter.a = adapter.a.sub(&f.d_a.scale(hp.learning_rate))?;
            adapter.b = adapter.b.sub(&f.d_b.scale(hp.learning_rate))?;
            if let Some(reg) = reg {
                let rf = &reg.factors[0];
                let step = hp.learning_rate * hp.lambda;
                adapter.a = adapter.a.sub(&rf.d_a.scale(step))?;
                adapter.b = adapter.b.sub(&rf.d_b.scale(step))?;
            }
        }
    }
    Ok(TaskOutcome { adapter, rounds: t, grad_queries, observations })
}

fn run_stream(
    stream: &TaskStream,
    d0_spec: &StreamSpec,
    hp: &Hyperparams,
    method: Method,
) -> Result<(RunReport, TrainerState)> {
    hp.validate()?;
    let (base, pretrain_accuracy) = pretrain(d0_spec, hp)?;
    let base_hash = base.bit_hash();
    let mut state = TrainerState {
        base,
        base_hash,
        tree: SimTree::new(hp.max_depth, hp.storage_budget),
        store: AdapterStore::new(),
        hp: hp.clone(),
        last_task: None,
    };
    let mut report = RunReport {
        method: match method {
            Method::TreeLora => "treelora".into(),
            Method::SeqLora => "seqlora".into(),
        },
        per_task: Vec::new(),
        eval: EvalMatrix::default(),
        grad_query_total: 0,
        peak_prev_grads: 0,
        observations: Vec::new(),
        pretrain_accuracy,
    };
    let mut slot = PrevGradSlot::default();
    // SeqLoRA keeps only the newest adapter; a one-slot store outside the
    // tree stands in for it.
    let mut seq_latest: Option<LoraAdapter> = None;

    for (task_index, task) in stream.tasks.iter().enumerate() {
        let started = Instant::now();
        let outcome = train_task_adapter(
            &state.base,
            &mut state.tree,
            &state.store,
            task,
            task_index,
            hp,
            method,
            &mut slot,
        )?;
        if state.base.bit_hash() != state.base_hash {
            return Err(Error::Validation("base weights changed during adaptation".into()));
        }

        match method {
            Method::TreeLora => {
                let final_stack = AdapterStack::from_adapters(vec![outcome.adapter.clone()])?;
                let sig = gradient_signature(&state.base, Some(&final_stack), &task.train)?;
                let adapter_id = state.store.register(task.task_id, outcome.adapter);
                state.tree.insert_task(task.task_id, sig, Some(adapter_id))?;
                state.tree.enforce_budget(&mut state.store)?;
            }
            Method::SeqLora => {
                seq_latest = Some(outcome.adapter);
            }
        }
        state.last_task = Some(task.task_id);

        // Evaluate every seen task under the inference stack; task identity
        // is not consulted per row.
        let stack = match method {
            Method::TreeLora => state.inference_stack(Some(&task.train))?,
            Method::SeqLora => {
                AdapterStack::from_adapters(seq_latest.iter().cloned().collect())?
            }
        };
        for prev in stream.tasks.iter().take(task_index + 1) {
            let acc = accuracy(&state.base, Some(&stack), &prev.test)?;
            report.eval.set(prev.task_id, task.task_id, acc);
        }
        let (op, bwt) = metrics(&report.eval, task_index)?;
        report.grad_query_total += outcome.grad_queries;
        report.peak_prev_grads = report.peak_prev_grads.max(slot.peak);
        report.observations.extend(outcome.observations);
        report.per_task.push(TaskRow {
            task: task.task_id,
            op,
            bwt,
            seconds: started.elapsed().as_secs_f64(),
            rounds: outcome.rounds,
            grad_queries: outcome.grad_queries,
        });
    }
    Ok((report, state))
}

/// Full tree-guided continual run over a generated stream.
pub fn run_treelora(spec: &StreamSpec, hp: &Hyperparams) -> Result<(RunReport, TrainerState)> {
    let stream = generate_stream(spec)?;
    run_stream(&stream, spec, hp, Method::TreeLora)
}

/// Sequential-adapter baseline: a fresh adapter per task, no tree, no
/// regularizer, identical training budget.
pub fn run_baseline_seqlora(spec: &StreamSpec, hp: &Hyperparams) -> Result<RunReport> {
    let stream = generate_stream(spec)?;
    let hp = Hyperparams { lambda: 0.0, ..hp.clone() };
    run_stream(&stream, spec, &hp, Method::SeqLora).map(|(r, _)| r)
}

/// Variant entry points over a pre-built stream (the CLI uses these when a
/// stream file is supplied together with its generating spec).
pub fn run_treelora_on(
    stream: &TaskStream,
    d0_spec: &StreamSpec,
    hp: &Hyperparams,
) -> Result<(RunReport, TrainerState)> {
    run_stream(stream, d0_spec, hp, Method::TreeLora)
}

pub fn run_baseline_on(
    stream: &TaskStream,
    d0_spec: &StreamSpec,
    hp: &Hyperparams,
) -> Result<RunReport> {
    let hp = Hyperparams { lambda: 0.0, ..hp.clone() };
    run_stream(stream, d0_spec, &hp, Method::SeqLora).map(|(r, _)| r)
}

/// Paired-seed comparison used by the experiment driver: each seed runs both
/// methods on the same stream. Seeds execute independently, in parallel when
/// enabled.
pub fn run_paired_seeds(
    spec: &StreamSpec,
    hp: &Hyperparams,
    seeds: &[u64],
) -> Result<Vec<(RunReport, RunReport)>> {
    let jobs: Vec<u64> = seeds.to_vec();
    let results: Vec<Result<(RunReport, RunReport)>> = crate::parallel::par_map(&jobs, |&seed| {
        let spec = StreamSpec { seed, ..spec.clone() };
        let hp = Hyperparams { seed, ..hp.clone() };
        let (tree_report, _) = run_treelora(&spec, &hp)?;
        let baseline = run_baseline_seqlora(&spec, &hp)?;
        Ok((tree_report, baseline))
    });
    results.into_iter().collect()
}

//! Synthetic smooth-tree bandit environments and regret measurement.
//!
//! Environments carry per-leaf true means generated top-down so that every
//! depth-d node bounds the spread of the leaves beneath it by delta*gamma^d.
//! Two policies run against the same arm set: the tree descent from the
//! bandit module and an unstructured flat LCB baseline, under common random
//! reward draws so identical selection sequences see identical rewards.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::bandit::{select_branch, update_stats, LcbParams, ResidualObservation};
use crate::densemath::Vector;
use crate::error::{Error, Result};
use crate::io::derive_seed;
use crate::parallel::par_map;
use crate::simtree::{NodeId, SimTree};

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothTreeSpec {
    pub depth: usize,
    pub branching: usize,
    /// Base smoothness: depth-d nodes bound their leaf spread by
    /// delta * gamma^d.
    pub delta: f64,
    pub gamma: f64,
    pub leaves: usize,
    pub noise: f64,
    pub seed: u64,
}

impl SmoothTreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.branching < 2 {
            return Err(Error::Input("depth must be >= 1 and branching >= 2".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Input(format!("gamma {} must lie in (0,1)", self.gamma)));
        }
        if self.delta < 0.0 || self.noise < 0.0 {
            return Err(Error::Input("delta and noise must be nonnegative".into()));
        }
        let capacity = (self.branching as f64).powi(self.depth as i32);
        if (self.leaves as f64) > capacity {
            return Err(Error::Input(format!(
                "{} leaves exceed branching^depth = {capacity}",
                self.leaves
            )));
        }
        if self.leaves < 2 {
            return Err(Error::Input("need at least 2 leaves".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ArmEnvironment {
    pub spec: SmoothTreeSpec,
    pub tree: SimTree,
    /// Arm index -> leaf node id, in left-to-right construction order.
    pub leaf_order: Vec<NodeId>,
    pub leaf_means: Vec<f64>,
    pub node_means: BTreeMap<NodeId, f64>,
    pub optimal_arm: usize,
    pub gaps: Vec<f64>,
}

/// Builds the arm environment: a pruned complete b-ary tree with means drawn
/// top-down, each child perturbed uniformly within half the parent depth's
/// smoothness budget. The smoothness bound is asserted constructively.
pub fn build_environment(spec: &SmoothTreeSpec) -> Result<ArmEnvironment> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "env-means", 0));
    let mut tree = SimTree::new(spec.depth, spec.leaves);
    let mut node_means = BTreeMap::new();
    let root = tree.root_id();
    let root_mean = rng.random_range(0.0..1.0);
    node_means.insert(root, root_mean);
    tree.node_mut(root)?.threshold = delta_at(spec, 0);

    let mut leaf_order = Vec::with_capacity(spec.leaves);
    // Stack of (node, depth, leaves this subtree must still provide).
    let mut stack = vec![(root, 0usize, spec.leaves)];
    while let Some((node, depth, need)) = stack.pop() {
        if depth == spec.depth {
            leaf_order.push(node);
            continue;
        }
        let child_capacity = (spec.branching as f64).powi((spec.depth - depth - 1) as i32) as usize;
        let mut remaining = need;
        let mut children = Vec::new();
        let parent_mean = node_means[&node];
        let radius = delta_at(spec, depth) / 2.0;
        for _ in 0..spec.branching {
            if remaining == 0 {
                break;
            }
            let take = remaining.min(child_capacity);
            remaining -= take;
            let mean = if radius > 0.0 {
                parent_mean + rng.random_range(-radius..=radius)
            } else {
                parent_mean
            };
            let child = tree.add_child(node, Vector::zeros(0), delta_at(spec, depth + 1))?;
            node_means.insert(child, mean);
            children.push((child, depth + 1, take));
        }
        // Reverse keeps left-to-right order on the stack pops.
        for c in children.into_iter().rev() {
            stack.push(c);
        }
    }
    debug_assert_eq!(leaf_order.len(), spec.leaves);

    let leaf_means: Vec<f64> = leaf_order.iter().map(|l| node_means[l]).collect();
    for (arm, leaf) in leaf_order.iter().enumerate() {
        tree.assign_member(*leaf, arm)?;
    }

    // Constructive smoothness check: spread of the leaves under any node
    // stays within that node's depth budget.
    for node in tree.nodes() {
        if node.is_leaf() && node.id != root {
            continue;
        }
        let bound = delta_at(spec, node.depth) + 1e-12;
        let mean = node_means[&node.id];
        for arm in &node.member_tasks {
            let diff = (leaf_means[*arm] - mean).abs();
            if diff > bound {
                return Err(Error::Validation(format!(
                    "smoothness violated at node {} depth {}: |{} - {}| > {bound}",
                    node.id, node.depth, leaf_means[*arm], mean
                )));
            }
        }
    }

    let optimal_arm = (0..spec.leaves)
        .min_by(|&a, &b| leaf_means[a].partial_cmp(&leaf_means[b]).unwrap().then(a.cmp(&b)))
        .unwrap();
    let best = leaf_means[optimal_arm];
    let gaps = leaf_means.iter().map(|m| m - best).collect();
    Ok(ArmEnvironment {
        spec: spec.clone(),
        tree,
        leaf_order,
        leaf_means,
        node_means,
        optimal_arm,
        gaps,
    })
}

fn delta_at(spec: &SmoothTreeSpec, depth: usize) -> f64 {
    spec.delta * spec.gamma.powi(depth as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    TreeLcb,
    FlatLcb,
}

impl Policy {
    pub fn name(self) -> &'static str {
        match self {
            Policy::TreeLcb => "tree_lcb",
            Policy::FlatLcb => "flat_lcb",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub policy: Policy,
    pub rounds: u64,
    /// Cumulative pseudo-regret after each round.
    pub cumulative: Vec<f64>,
    pub pulls: Vec<u64>,
    /// Sum of the drawn arms' true means, for the two-formula consistency
    /// check.
    pub chosen_mean_sum: f64,
    pub eta: f64,
    pub j_eta: usize,
    pub c_constant: f64,
}

impl RegretReport {
    pub fn final_regret(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }
}

/// Per-arm reward streams: arm i's k-th pull draws the same value regardless
/// of the policy consuming it.
struct RewardStreams {
    rngs: Vec<ChaCha8Rng>,
    normal: Normal<f64>,
    noise: f64,
}

impl RewardStreams {
    fn new(env: &ArmEnvironment, seed: u64) -> Self {
        let rngs = (0..env.leaf_means.len())
            .map(|arm| ChaCha8Rng::seed_from_u64(derive_seed(seed, "arm-rewards", arm as u64)))
            .collect();
        Self { rngs, normal: Normal::new(0.0, 1.0).unwrap(), noise: env.spec.noise }
    }

    fn draw(&mut self, env: &ArmEnvironment, arm: usize) -> f64 {
        if self.noise == 0.0 {
            return env.leaf_means[arm];
        }
        let z = self.normal.sample(&mut self.rngs[arm]);
        let clipped = (self.noise * z).clamp(-5.0 * self.noise, 5.0 * self.noise);
        env.leaf_means[arm] + clipped
    }
}

/// Runs one policy for `rounds` pulls and accounts pseudo-regret by gaps.
pub fn run_policy(
    env: &ArmEnvironment,
    policy: Policy,
    rounds: u64,
    seed: u64,
    eta: f64,
) -> Result<RegretReport> {
    let arms = env.leaf_means.len();
    if (rounds as usize) < arms {
        return Err(Error::Input(format!(
            "rounds {rounds} must be at least the number of arms {arms}"
        )));
    }
    let mut rewards = RewardStreams::new(env, seed);
    let mut pulls = vec![0u64; arms];
    let mut cumulative = Vec::with_capacity(rounds as usize);
    let mut regret = 0.0;
    let mut chosen_mean_sum = 0.0;

    match policy {
        Policy::TreeLcb => {
            let mut tree = env.tree.clone();
            tree.reset_bandit_stats();
            let params = LcbParams::geometric(env.spec.delta, env.spec.gamma, env.spec.depth);
            let arm_of: BTreeMap<NodeId, usize> = env
                .leaf_order
                .iter()
                .enumerate()
                .map(|(a, l)| (*l, a))
                .collect();
            for t in 1..=rounds {
                let path = select_branch(&mut tree, t, &params)?;
                let leaf = *path.last().unwrap();
                let arm = arm_of[&leaf];
                let value = rewards.draw(env, arm);
                update_stats(&mut tree, &path, &ResidualObservation {
                    node_id: leaf,
                    value,
                    round: t,
                    per_layer: vec![value],
                })?;
                pulls[arm] += 1;
                chosen_mean_sum += env.leaf_means[arm];
                regret += env.gaps[arm];
                cumulative.push(regret);
            }
        }
        Policy::FlatLcb => {
            let mut mu = vec![0.0f64; arms];
            let mut n = vec![0u64; arms];
            for t in 1..=rounds {
                let arm = if let Some(i) = (0..arms).find(|&i| n[i] == 0) {
                    i
                } else {
                    let mut best = 0;
                    let mut best_v = f64::INFINITY;
                    for i in 0..arms {
                        let v = mu[i] - 2.0 * ((t as f64).ln() / n[i] as f64).sqrt();
                        if v < best_v {
                            best_v = v;
                            best = i;
                        }
                    }
                    best
                };
                let value = rewards.draw(env, arm);
                n[arm] += 1;
                mu[arm] += (value - mu[arm]) / n[arm] as f64;
                pulls[arm] += 1;
                chosen_mean_sum += env.leaf_means[arm];
                regret += env.gaps[arm];
                cumulative.push(regret);
            }
        }
    }

    let j_eta = env.gaps.iter().filter(|g| **g <= eta).count();
    let c_constant = (2.0f64).ln() / (1.0 / env.spec.gamma).ln();
    Ok(RegretReport {
        policy,
        rounds,
        cumulative,
        pulls,
        chosen_mean_sum,
        eta,
        j_eta,
        c_constant,
    })
}

/// Leaf-visit bound for a suboptimal leaf with the given gap:
/// (6/gap^2) * ln(4 * 2^depth * rounds / gap^2).
pub fn leaf_visit_bound(gap: f64, depth: usize, rounds: u64) -> f64 {
    let g2 = gap * gap;
    (6.0 / g2) * ((4.0 * (2.0f64).powi(depth as i32) * rounds as f64) / g2).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingCell {
    pub policy: Policy,
    pub n_arms: usize,
    pub seed: u64,
    pub final_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSummary {
    pub cells: Vec<ScalingCell>,
    /// (policy, N, mean final regret over seeds).
    pub means: Vec<(Policy, usize, f64)>,
    pub tree_exponent: f64,
    pub flat_exponent: f64,
    pub rounds: u64,
    pub eta: f64,
}

impl ScalingSummary {
    pub fn mean_for(&self, policy: Policy, n_arms: usize) -> Option<f64> {
        self.means
            .iter()
            .find(|(p, n, _)| *p == policy && *n == n_arms)
            .map(|(_, _, m)| *m)
    }

    /// Long-format CSV: one row per (policy, N, seed) plus summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("record,policy,n_arms,seed,value\n");
        for c in &self.cells {
            writeln!(
                out,
                "cell,{},{},{},{}",
                c.policy.name(),
                c.n_arms,
                c.seed,
                c.final_regret
            )
            .unwrap();
        }
        for (policy, n, mean) in &self.means {
            writeln!(out, "mean,{},{n},,{mean}", policy.name()).unwrap();
        }
        writeln!(out, "exponent,tree_lcb,,,{}", self.tree_exponent).unwrap();
        writeln!(out, "exponent,flat_lcb,,,{}", self.flat_exponent).unwrap();
        out
    }
}

/// Runs both policies across the environment family and seed count,
/// producing mean final regrets per (policy, N) and fitted log-log growth
/// exponents of regret versus N.
pub fn compare_scaling(
    specs: &[SmoothTreeSpec],
    rounds: u64,
    seeds: usize,
    eta: f64,
) -> Result<ScalingSummary> {
    if specs.len() < 3 {
        return Err(Error::Input("need at least 3 environment sizes".into()));
    }
    if seeds < 10 {
        return Err(Error::Input("need at least 10 seeds".into()));
    }
    let mut jobs = Vec::new();
    for spec in specs {
        for s in 0..seeds {
            jobs.push((spec.clone(), s as u64));
        }
    }
    let results: Vec<Result<Vec<ScalingCell>>> = par_map(&jobs, |(spec, seed)| {
        let env_spec =
            SmoothTreeSpec { seed: derive_seed(spec.seed, "env", *seed), ..spec.clone() };
        let env = build_environment(&env_spec)?;
        let reward_seed = derive_seed(*seed, "rewards", spec.leaves as u64);
        let mut cells = Vec::with_capacity(2);
        for policy in [Policy::TreeLcb, Policy::FlatLcb] {
            let report = run_policy(&env, policy, rounds, reward_seed, eta)?;
            cells.push(ScalingCell {
                policy,
                n_arms: spec.leaves,
                seed: *seed,
                final_regret: report.final_regret(),
            });
        }
        Ok(cells)
    });
    let mut cells = Vec::new();
    for r in results {
        cells.extend(r?);
    }

    let mut means = Vec::new();
    for policy in [Policy::TreeLcb, Policy::FlatLcb] {
        for spec in specs {
            let vals: Vec<f64> = cells
                .iter()
                .filter(|c| c.policy == policy && c.n_arms == spec.leaves)
                .map(|c| c.final_regret)
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            means.push((policy, spec.leaves, mean));
        }
    }
    let exponent = |policy: Policy| -> f64 {
        let pts: Vec<(f64, f64)> = means
            .iter()
            .filter(|(p, _, _)| *p == policy)
            .map(|(_, n, m)| ((*n as f64).ln(), m.max(1e-9).ln()))
            .collect();
        let k = pts.len() as f64;
        let sx: f64 = pts.iter().map(|(x, _)| x).sum();
        let sy: f64 = pts.iter().map(|(_, y)| y).sum();
        let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
        let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
        (k * sxy - sx * sy) / (k * sxx - sx * sx)
    };
    let tree_exponent = exponent(Policy::TreeLcb);
    let flat_exponent = exponent(Policy::FlatLcb);
    Ok(ScalingSummary { cells, means, tree_exponent, flat_exponent, rounds, eta })
}

/// Down-sampled regret curve CSV for external plotting.
pub fn curves_csv(reports: &[(String, &RegretReport)], stride: usize) -> String {
    let mut out = String::from("label,round,cumulative_regret\n");
    for (label, report) in reports {
        for (i, r) in report.cumulative.iter().enumerate() {
            let round = i + 1;
            if round % stride.max(1) == 0 || round == report.cumulative.len() {
                writeln!(out, "{label},{round},{r}").unwrap();
            }
        }
    }
    out
}

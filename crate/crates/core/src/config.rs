//! Line-oriented run configuration: `[section]` headers with `key = value`
//! pairs. Parsing collects every violation (with line numbers) instead of
//! stopping at the first, and a canonical emitter round-trips any valid
//! config.

use std::fmt::Write as _;
use std::path::Path;

use crate::adapter::SparsifyMode;
use crate::error::{Error, Result};
use crate::regretlab::SmoothTreeSpec;
use crate::taskstream::StreamSpec;
use crate::trainer::{Hyperparams, InferencePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Pretrain,
    Train,
    Baseline,
    BanditBench,
    TreeExport,
    Eval,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Pretrain => "pretrain",
            Mode::Train => "train",
            Mode::Baseline => "baseline",
            Mode::BanditBench => "bandit-bench",
            Mode::TreeExport => "tree-export",
            Mode::Eval => "eval",
        }
    }

    fn required_sections(self) -> &'static [&'static str] {
        match self {
            Mode::Pretrain | Mode::Train | Mode::Baseline => &["stream", "train"],
            Mode::BanditBench => &["bench"],
            Mode::TreeExport | Mode::Eval => &[],
        }
    }
}

/// Smooth-environment benchmark settings: one environment family over
/// several arm counts.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub branching: usize,
    pub delta: f64,
    pub gamma: f64,
    pub noise: f64,
    pub n_values: Vec<usize>,
    pub rounds: u64,
    pub seeds: usize,
    pub eta: f64,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            branching: 2,
            delta: 1.0,
            gamma: 0.5,
            noise: 0.1,
            n_values: vec![16, 64, 256],
            rounds: 20_000,
            seeds: 10,
            eta: 0.1,
            seed: 7,
        }
    }
}

impl BenchConfig {
    /// Depth of the shallowest complete tree with at least `n` leaves.
    pub fn depth_for(&self, n: usize) -> usize {
        let mut depth = 1;
        let mut cap = self.branching;
        while cap < n {
            cap *= self.branching;
            depth += 1;
        }
        depth
    }

    pub fn specs(&self) -> Vec<SmoothTreeSpec> {
        self.n_values
            .iter()
            .map(|&n| SmoothTreeSpec {
                depth: self.depth_for(n),
                branching: self.branching,
                delta: self.delta,
                gamma: self.gamma,
                leaves: n,
                noise: self.noise,
                seed: self.seed,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub stream: StreamSpec,
    pub train: Hyperparams,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stream: StreamSpec::default(),
            train: Hyperparams::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub line: usize,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

pub fn validate_config_file(path: &Path, mode: Mode) -> std::result::Result<RunConfig, Vec<Violation>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        vec![Violation { line: 0, message: format!("cannot read {}: {e}", path.display()) }]
    })?;
    parse_config(&text, mode)
}

/// Parses and fully validates a config, returning either the config or the
/// complete list of violations.
pub fn parse_config(text: &str, mode: Mode) -> std::result::Result<RunConfig, Vec<Violation>> {
    let mut cfg = RunConfig::default();
    let mut violations = Vec::new();
    let mut seen_sections: Vec<String> = Vec::new();
    let mut section: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            if !line.ends_with(']') {
                violations.push(Violation { line: line_no, message: format!("unterminated section header {line:?}") });
                continue;
            }
            let name = line[1..line.len() - 1].trim().to_string();
            if !["stream", "train", "bench"].contains(&name.as_str()) {
                violations.push(Violation { line: line_no, message: format!("unknown section [{name}]") });
                section = None;
                continue;
            }
            seen_sections.push(name.clone());
            section = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            violations.push(Violation { line: line_no, message: format!("expected key = value, got {line:?}") });
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        let Some(section) = section.as_deref() else {
            violations.push(Violation { line: line_no, message: format!("key {key:?} outside any section") });
            continue;
        };
        if let Err(msg) = apply_key(&mut cfg, section, key, value) {
            violations.push(Violation { line: line_no, message: msg });
        }
    }

    for required in mode.required_sections() {
        if !seen_sections.iter().any(|s| s == required) {
            violations.push(Violation {
                line: 0,
                message: format!(
                    "missing required section [{required}] for mode {}; keys: {}",
                    mode.name(),
                    section_keys(required).join(", ")
                ),
            });
        }
    }

    // Semantic validation, collected rather than short-circuited; one
    // violation per broken rule.
    let mut semantic = |section: &str, err: Error| {
        let text = err.to_string();
        let body = text.strip_prefix("input error: ").unwrap_or(&text);
        for rule in body.split("; ") {
            violations.push(Violation { line: 0, message: format!("[{section}] {rule}") });
        }
    };
    if let Err(e) = cfg.stream.validate() {
        semantic("stream", e);
    }
    if let Err(e) = cfg.train.validate() {
        semantic("train", e);
    }
    if let Err(e) = validate_bench(&cfg.bench) {
        semantic("bench", e);
    }

    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(violations)
    }
}

fn validate_bench(b: &BenchConfig) -> Result<()> {
    if b.n_values.is_empty() {
        return Err(Error::Input("n_values must be nonempty".into()));
    }
    if !(b.gamma > 0.0 && b.gamma < 1.0) {
        return Err(Error::Input(format!("gamma {} must lie in (0,1)", b.gamma)));
    }
    if b.seeds == 0 || b.rounds == 0 {
        return Err(Error::Input("seeds and rounds must be positive".into()));
    }
    for spec in b.specs() {
        spec.validate()?;
    }
    Ok(())
}

fn section_keys(section: &str) -> Vec<&'static str> {
    match section {
        "stream" => vec![
            "n_tasks", "n_clusters", "samples_per_task", "test_per_task", "input_dim",
            "num_classes", "intra_scale", "inter_scale", "noise_scale", "seed",
        ],
        "train" => vec![
            "learning_rate", "lambda", "epochs", "batch_size", "rank", "max_depth",
            "storage_budget", "seed", "adapter_layer", "hidden_dim", "hidden_layers",
            "sparsify_mode", "topk_fraction", "exploration_coef", "pretrain_steps",
            "pretrain_samples", "pretrain_lr", "inference",
        ],
        "bench" => vec![
            "branching", "delta", "gamma", "noise", "n_values", "rounds", "seeds", "eta", "seed",
        ],
        _ => vec![],
    }
}

fn apply_key(cfg: &mut RunConfig, section: &str, key: &str, value: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
        value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
    }
    match (section, key) {
        ("stream", "n_tasks") => cfg.stream.n_tasks = num(key, value)?,
        ("stream", "n_clusters") => cfg.stream.n_clusters = num(key, value)?,
        ("stream", "samples_per_task") => cfg.stream.samples_per_task = num(key, value)?,
        ("stream", "test_per_task") => cfg.stream.test_per_task = num(key, value)?,
        ("stream", "input_dim") => cfg.stream.input_dim = num(key, value)?,
        ("stream", "num_classes") => cfg.stream.num_classes = num(key, value)?,
        ("stream", "intra_scale") => cfg.stream.intra_scale = num(key, value)?,
        ("stream", "inter_scale") => cfg.stream.inter_scale = num(key, value)?,
        ("stream", "noise_scale") => cfg.stream.noise_scale = num(key, value)?,
        ("stream", "seed") => cfg.stream.seed = num(key, value)?,
        ("train", "learning_rate") => cfg.train.learning_rate = num(key, value)?,
        ("train", "lambda") => cfg.train.lambda = num(key, value)?,
        ("train", "epochs") => {
            cfg.train.epochs = value
                .split(',')
                .map(|tok| num::<usize>(key, tok.trim()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
        }
        ("train", "batch_size") => cfg.train.batch_size = num(key, value)?,
        ("train", "rank") => cfg.train.rank = num(key, value)?,
        ("train", "max_depth") => cfg.train.max_depth = num(key, value)?,
        ("train", "storage_budget") => cfg.train.storage_budget = num(key, value)?,
        ("train", "seed") => cfg.train.seed = num(key, value)?,
        ("train", "adapter_layer") => cfg.train.adapter_layer = num(key, value)?,
        ("train", "hidden_dim") => cfg.train.hidden_dim = num(key, value)?,
        ("train", "hidden_layers") => cfg.train.hidden_layers = num(key, value)?,
        ("train", "sparsify_mode") => {
            cfg.train.sparsify.mode = SparsifyMode::from_name(value)
                .ok_or_else(|| format!("sparsify_mode: unknown mode {value:?}"))?;
        }
        ("train", "topk_fraction") => cfg.train.sparsify.topk_fraction = num(key, value)?,
        ("train", "exploration_coef") => cfg.train.exploration_coef = num(key, value)?,
        ("train", "pretrain_steps") => cfg.train.pretrain_steps = num(key, value)?,
        ("train", "pretrain_samples") => cfg.train.pretrain_samples = num(key, value)?,
        ("train", "pretrain_lr") => cfg.train.pretrain_lr = num(key, value)?,
        ("train", "inference") => {
            cfg.train.inference = InferencePolicy::from_name(value)
                .ok_or_else(|| format!("inference: unknown policy {value:?}"))?;
        }
        ("bench", "branching") => cfg.bench.branching = num(key, value)?,
        ("bench", "delta") => cfg.bench.delta = num(key, value)?,
        ("bench", "gamma") => cfg.bench.gamma = num(key, value)?,
        ("bench", "noise") => cfg.bench.noise = num(key, value)?,
        ("bench", "n_values") => {
            cfg.bench.n_values = value
                .split(',')
                .map(|tok| num::<usize>(key, tok.trim()))
                .collect::<std::result::Result<Vec<_>, _>>()?;
        }
        ("bench", "rounds") => cfg.bench.rounds = num(key, value)?,
        ("bench", "seeds") => cfg.bench.seeds = num(key, value)?,
        ("bench", "eta") => cfg.bench.eta = num(key, value)?,
        ("bench", "seed") => cfg.bench.seed = num(key, value)?,
        _ => return Err(format!("unknown key {key:?} in section [{section}]")),
    }
    Ok(())
}

/// Canonical text form: stable section and key order, round-trip parseable.
pub fn to_canonical_string(cfg: &RunConfig) -> String {
    let mut out = String::new();
    writeln!(out, "[stream]").unwrap();
    writeln!(out, "n_tasks = {}", cfg.stream.n_tasks).unwrap();
    writeln!(out, "n_clusters = {}", cfg.stream.n_clusters).unwrap();
    writeln!(out, "samples_per_task = {}", cfg.stream.samples_per_task).unwrap();
    writeln!(out, "test_per_task = {}", cfg.stream.test_per_task).unwrap();
    writeln!(out, "input_dim = {}", cfg.stream.input_dim).unwrap();
    writeln!(out, "num_classes = {}", cfg.stream.num_classes).unwrap();
    writeln!(out, "intra_scale = {}", cfg.stream.intra_scale).unwrap();
    writeln!(out, "inter_scale = {}", cfg.stream.inter_scale).unwrap();
    writeln!(out, "noise_scale = {}", cfg.stream.noise_scale).unwrap();
    writeln!(out, "seed = {}", cfg.stream.seed).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[train]").unwrap();
    writeln!(out, "learning_rate = {}", cfg.train.learning_rate).unwrap();
    writeln!(out, "lambda = {}", cfg.train.lambda).unwrap();
    let epochs: Vec<String> = cfg.train.epochs.iter().map(|e| e.to_string()).collect();
    writeln!(out, "epochs = {}", epochs.join(",")).unwrap();
    writeln!(out, "batch_size = {}", cfg.train.batch_size).unwrap();
    writeln!(out, "rank = {}", cfg.train.rank).unwrap();
    writeln!(out, "max_depth = {}", cfg.train.max_depth).unwrap();
    writeln!(out, "storage_budget = {}", cfg.train.storage_budget).unwrap();
    writeln!(out, "seed = {}", cfg.train.seed).unwrap();
    writeln!(out, "adapter_layer = {}", cfg.train.adapter_layer).unwrap();
    writeln!(out, "hidden_dim = {}", cfg.train.hidden_dim).unwrap();
    writeln!(out, "hidden_layers = {}", cfg.train.hidden_layers).unwrap();
    writeln!(out, "sparsify_mode = {}", cfg.train.sparsify.mode.name()).unwrap();
    writeln!(out, "topk_fraction = {}", cfg.train.sparsify.topk_fraction).unwrap();
    writeln!(out, "exploration_coef = {}", cfg.train.exploration_coef).unwrap();
    writeln!(out, "pretrain_steps = {}", cfg.train.pretrain_steps).unwrap();
    writeln!(out, "pretrain_samples = {}", cfg.train.pretrain_samples).unwrap();
    writeln!(out, "pretrain_lr = {}", cfg.train.pretrain_lr).unwrap();
    writeln!(out, "inference = {}", cfg.train.inference.name()).unwrap();
    writeln!(out).unwrap();
    writeln!(out, "[bench]").unwrap();
    writeln!(out, "branching = {}", cfg.bench.branching).unwrap();
    writeln!(out, "delta = {}", cfg.bench.delta).unwrap();
    writeln!(out, "gamma = {}", cfg.bench.gamma).unwrap();
    writeln!(out, "noise = {}", cfg.bench.noise).unwrap();
    let ns: Vec<String> = cfg.bench.n_values.iter().map(|n| n.to_string()).collect();
    writeln!(out, "n_values = {}", ns.join(",")).unwrap();
    writeln!(out, "rounds = {}", cfg.bench.rounds).unwrap();
    writeln!(out, "seeds = {}", cfg.bench.seeds).unwrap();
    writeln!(out, "eta = {}", cfg.bench.eta).unwrap();
    writeln!(out, "seed = {}", cfg.bench.seed).unwrap();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let cfg = RunConfig::default();
        let text = to_canonical_string(&cfg);
        let parsed = parse_config(&text, Mode::Train).unwrap();
        assert_eq!(cfg, parsed);
        assert_eq!(text, to_canonical_string(&parsed));
    }

    #[test]
    fn empty_file_lists_required_sections() {
        let err = parse_config("", Mode::Train).unwrap_err();
        let text: Vec<String> = err.iter().map(|v| v.to_string()).collect();
        assert!(text.iter().any(|m| m.contains("[stream]") && m.contains("n_tasks")));
        assert!(text.iter().any(|m| m.contains("[train]") && m.contains("learning_rate")));
    }

    #[test]
    fn negative_lambda_cites_rule() {
        let text = "[stream]\n[train]\nlambda = -1\n";
        let err = parse_config(text, Mode::Train).unwrap_err();
        assert!(err.iter().any(|v| v.message.contains("lambda must be nonnegative")));
    }

    #[test]
    fn unknown_keys_rejected_with_line_numbers() {
        let text = "[train]\nwat = 3\nlambda = 0.1\nalso_not_a_key = x\n";
        let err = parse_config(text, Mode::BanditBench).unwrap_err();
        let unknown: Vec<&Violation> = err.iter().filter(|v| v.message.contains("unknown key")).collect();
        assert_eq!(unknown.len(), 2);
        assert_eq!(unknown[0].line, 2);
        assert_eq!(unknown[1].line, 4);
    }

    #[test]
    fn all_violations_reported_not_just_first() {
        let text = "[stream]\nn_tasks = zero\n[train]\nlambda = -2\nepochs = 0\n";
        let err = parse_config(text, Mode::Train).unwrap_err();
        assert!(err.len() >= 3, "got {err:?}");
    }

    #[test]
    fn bench_specs_derive_depth() {
        let bench = BenchConfig::default();
        assert_eq!(bench.depth_for(16), 4);
        assert_eq!(bench.depth_for(64), 6);
        assert_eq!(bench.depth_for(256), 8);
        let specs = bench.specs();
        assert!(specs.iter().all(|s| s.validate().is_ok()));
    }
}

//! Command-line entry point: stream generation, pretraining, continual
//! training runs, the bandit regret benchmark, metric recomputation, and
//! tree exports. All outputs are written atomically; all randomness flows
//! from a single seed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use treelora_core::config::{parse_config, to_canonical_string, Mode, RunConfig, Violation};
use treelora_core::error::Error;
use treelora_core::io::atomic_write;
use treelora_core::regretlab::{build_environment, curves_csv, run_policy, Policy};
use treelora_core::simtree::SimTree;
use treelora_core::taskstream::{generate_stream, load_stream, save_stream};
use treelora_core::trainer::{
    pretrain, recompute_metrics_from_csv, run_baseline_on, run_treelora_on, RunReport,
    TrainerState,
};

#[derive(Parser)]
#[command(
    name = "treelora",
    version,
    about = "Continual learning with a gradient-similarity tree of low-rank adapters, plus an LCB bandit regret lab"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Dot,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the offline dataset and pretrain the base model.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for parallel sections (1 = sequential).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Full tree-guided continual learning run.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Train on a stream file instead of generating one.
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Sequential-adapter baseline under the identical budget.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        stream: Option<PathBuf>,
    },
    /// Tree-LCB versus flat-LCB regret scaling on smooth environments.
    BanditBench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Re-emit a stored tree as DOT or canonical JSON.
    TreeExport {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ExportFormat::Dot)]
        format: ExportFormat,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute OP/BWT from an eval-matrix CSV.
    Eval {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Compare against a previously written metrics CSV; mismatches
        /// beyond 1e-12 fail the command.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let help = format!(
        "Default configuration (canonical form, overridable per key):\n\n{}",
        to_canonical_string(&RunConfig::default())
    );
    let mut cmd = Cli::command().after_long_help(help.clone());
    for name in ["pretrain", "train", "baseline", "bandit-bench"] {
        cmd = cmd.mut_subcommand(name, |s| s.after_long_help(help.clone()));
    }
    let matches = cmd.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn violations_to_usage(path: &Path, violations: Vec<Violation>) -> CliError {
    let body: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
    CliError::Usage(format!("invalid config {}: {}", path.display(), body.join(" | ")))
}

fn load_config(path: &Path, mode: Mode, seed: Option<u64>) -> Result<RunConfig, CliError> {
    if !path.exists() {
        return Err(CliError::Usage(format!("config file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text, mode).map_err(|v| violations_to_usage(path, v))?;
    if let Some(seed) = seed {
        cfg.stream.seed = seed;
        cfg.train.seed = seed;
        cfg.bench.seed = seed;
    }
    Ok(cfg)
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    atomic_write(path, bytes).map_err(CliError::from)
}

fn write_run_outputs(
    out: &Path,
    report: &RunReport,
    state: Option<&TrainerState>,
) -> Result<(), CliError> {
    write(&out.join("metrics.csv"), report.metrics_csv().as_bytes())?;
    write(&out.join("timings.csv"), report.timings_csv().as_bytes())?;
    write(&out.join("eval_matrix.csv"), report.eval.to_csv().as_bytes())?;
    write(&out.join("observations.csv"), report.observations_csv().as_bytes())?;
    if let Some(state) = state {
        write(&out.join("tree.json"), state.tree.to_json().as_bytes())?;
        write(&out.join("tree.dot"), state.tree.to_dot().as_bytes())?;
        state.base.save(&out.join("model.ckpt"))?;
        state.store.save(&out.join("adapters.store"))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Pretrain { config, out, seed, jobs } => {
            treelora_core::parallel::configure_jobs(jobs);
            let cfg = load_config(&config, Mode::Pretrain, seed)?;
            let (model, holdout) = pretrain(&cfg.stream, &cfg.train)?;
            model.save(&out.join("model.ckpt"))?;
            let stream = generate_stream(&cfg.stream)?;
            save_stream(&stream, &out.join("stream.txt"))?;
            println!("pretrain holdout_accuracy {holdout}");
            Ok(())
        }
        Command::Train { config, out, seed, jobs, stream } => {
            treelora_core::parallel::configure_jobs(jobs);
            let cfg = load_config(&config, Mode::Train, seed)?;
            let stream_data = match &stream {
                Some(path) => load_stream(path)?,
                None => generate_stream(&cfg.stream)?,
            };
            let (report, state) = run_treelora_on(&stream_data, &cfg.stream, &cfg.train)?;
            save_stream(&stream_data, &out.join("stream.txt"))?;
            write_run_outputs(&out, &report, Some(&state))?;
            let last = report.per_task.last().expect("at least one task");
            println!("train tasks {} op {} bwt {}", report.per_task.len(), last.op, last.bwt);
            Ok(())
        }
        Command::Baseline { config, out, seed, jobs, stream } => {
            treelora_core::parallel::configure_jobs(jobs);
            let cfg = load_config(&config, Mode::Baseline, seed)?;
            let stream_data = match &stream {
                Some(path) => load_stream(path)?,
                None => generate_stream(&cfg.stream)?,
            };
            let report = run_baseline_on(&stream_data, &cfg.stream, &cfg.train)?;
            save_stream(&stream_data, &out.join("stream.txt"))?;
            write_run_outputs(&out, &report, None)?;
            let last = report.per_task.last().expect("at least one task");
            println!(
                "baseline tasks {} op {} bwt {}",
                report.per_task.len(),
                last.op,
                last.bwt
            );
            Ok(())
        }
        Command::BanditBench { config, out, seed, jobs } => {
            treelora_core::parallel::configure_jobs(jobs);
            let cfg = load_config(&config, Mode::BanditBench, seed)?;
            let summary = treelora_core::regretlab::compare_scaling(
                &cfg.bench.specs(),
                cfg.bench.rounds,
                cfg.bench.seeds,
                cfg.bench.eta,
            )?;
            write(&out.join("regret_summary.csv"), summary.to_csv().as_bytes())?;
            // One representative curve pair at the largest environment.
            let largest = cfg.bench.specs().last().cloned().expect("n_values nonempty");
            let env = build_environment(&largest)?;
            let rounds = cfg.bench.rounds;
            let tree = run_policy(&env, Policy::TreeLcb, rounds, cfg.bench.seed, cfg.bench.eta)?;
            let flat = run_policy(&env, Policy::FlatLcb, rounds, cfg.bench.seed, cfg.bench.eta)?;
            let curves = curves_csv(
                &[("tree_lcb".to_string(), &tree), ("flat_lcb".to_string(), &flat)],
                (rounds as usize / 200).max(1),
            );
            write(&out.join("regret_curves.csv"), curves.as_bytes())?;
            println!(
                "bandit-bench tree_exponent {} flat_exponent {}",
                summary.tree_exponent, summary.flat_exponent
            );
            Ok(())
        }
        Command::TreeExport { input, format, out } => {
            if !input.exists() {
                return Err(CliError::Usage(format!("tree file not found: {}", input.display())));
            }
            let text = std::fs::read_to_string(&input).map_err(Error::from)?;
            let tree = SimTree::from_json(&text)?;
            let rendered = match format {
                ExportFormat::Dot => tree.to_dot(),
                ExportFormat::Json => tree.to_json(),
            };
            match out {
                Some(path) => write(&path, rendered.as_bytes())?,
                None => print!("{rendered}"),
            }
            Ok(())
        }
        Command::Eval { matrix, out, compare } => {
            if !matrix.exists() {
                return Err(CliError::Usage(format!(
                    "eval matrix not found: {}",
                    matrix.display()
                )));
            }
            let text = std::fs::read_to_string(&matrix).map_err(Error::from)?;
            let rows = recompute_metrics_from_csv(&text)?;
            let mut csv = String::from("task,op,bwt\n");
            for (task, op, bwt) in &rows {
                csv.push_str(&format!("{task},{op},{bwt}\n"));
            }
            if let Some(path) = &out {
                write(path, csv.as_bytes())?;
            } else {
                print!("{csv}");
            }
            if let Some(reference) = compare {
                let ref_text = std::fs::read_to_string(&reference).map_err(Error::from)?;
                compare_metrics(&rows, &ref_text)?;
                println!("eval comparison ok within 1e-12");
            }
            Ok(())
        }
    }
}

/// Checks recomputed (task, op, bwt) rows against a metrics CSV written by a
/// run report.
fn compare_metrics(rows: &[(usize, f64, f64)], reference: &str) -> Result<(), CliError> {
    let mut ref_rows = Vec::new();
    for (i, line) in reference.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() < 3 {
            return Err(CliError::Runtime(format!("bad metrics row {line:?}")));
        }
        let task: usize = parts[0]
            .parse()
            .map_err(|_| CliError::Runtime(format!("bad task in {line:?}")))?;
        let op: f64 = parts[1]
            .parse()
            .map_err(|_| CliError::Runtime(format!("bad op in {line:?}")))?;
        let bwt: f64 = parts[2]
            .parse()
            .map_err(|_| CliError::Runtime(format!("bad bwt in {line:?}")))?;
        ref_rows.push((task, op, bwt));
    }
    if ref_rows.len() != rows.len() {
        return Err(CliError::Runtime(format!(
            "metrics row count {} vs recomputed {}",
            ref_rows.len(),
            rows.len()
        )));
    }
    for ((t1, op1, bwt1), (t2, op2, bwt2)) in rows.iter().zip(&ref_rows) {
        if t1 != t2 || (op1 - op2).abs() > 1e-12 || (bwt1 - bwt2).abs() > 1e-12 {
            return Err(CliError::Runtime(format!(
                "metrics mismatch at task {t1}: recomputed op {op1} bwt {bwt1} vs recorded op {op2} bwt {bwt2}"
            )));
        }
    }
    Ok(())
}

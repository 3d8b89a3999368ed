//! Synthetic task streams with controllable hierarchical similarity.
//!
//! Tasks are rotated/perturbed Gaussian class prototypes. Tasks assigned to
//! the same cluster share a cluster-level rotation of the base prototypes
//! plus a cluster-specific cyclic label shift, and differ only by small
//! task-level rotations, so cluster membership is the ground truth a
//! gradient-similarity tree should recover. The label shift makes clusters
//! genuinely conflict: an adapter tuned to one cluster's mapping degrades
//! the others, which is what the forgetting metrics measure. Cluster
//! assignment is round-robin over the task index.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::densemath::Vector;
use crate::error::{Error, Result};
use crate::io::{atomic_write, derive_seed, parse_f64, ParseCursor};

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub task_id: usize,
    pub train: Vec<(Vector, usize)>,
    pub test: Vec<(Vector, usize)>,
    pub true_cluster: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub num_classes: usize,
    pub input_dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamSpec {
    pub n_tasks: usize,
    pub n_clusters: usize,
    pub samples_per_task: usize,
    pub test_per_task: usize,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Angle scale (radians) of the per-task rotations within a cluster.
    pub intra_scale: f64,
    /// Angle scale (radians) of the per-cluster rotations of the base
    /// prototypes; must dominate `intra_scale` for the hierarchy to exist.
    pub inter_scale: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            n_tasks: 8,
            n_clusters: 2,
            samples_per_task: 512,
            test_per_task: 128,
            input_dim: 16,
            num_classes: 8,
            intra_scale: 0.05,
            inter_scale: 1.0,
            noise_scale: 1.3,
            seed: 1,
        }
    }
}

impl StreamSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.n_tasks == 0 {
            problems.push("n_tasks must be positive");
        }
        if self.n_clusters == 0 {
            problems.push("n_clusters must be positive");
        }
        if self.n_clusters > self.n_tasks {
            problems.push("n_clusters must not exceed n_tasks");
        }
        if self.samples_per_task == 0 || self.test_per_task == 0 {
            problems.push("samples_per_task and test_per_task must be positive");
        }
        if self.input_dim == 0 || self.num_classes < 2 {
            problems.push("input_dim must be positive and num_classes at least 2");
        }
        if !(self.intra_scale >= 0.0 && self.inter_scale >= 0.0 && self.noise_scale >= 0.0) {
            problems.push("scales must be nonnegative");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Input(problems.join("; ")))
        }
    }
}

/// A rotation built from a fixed sequence of Givens rotations; angle scale
/// controls how far it moves points.
struct GivensChain {
    rotations: Vec<(usize, usize, f64, f64)>,
}

impl GivensChain {
    /// Angles drawn uniformly within the scale: small task-level jitter.
    fn sample(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        Self::build(dim, rng, |rng| rng.random_range(-scale..=scale))
    }

    /// Angles of fixed magnitude `scale` with random planes and signs:
    /// cluster-level transforms whose separation does not hinge on lucky
    /// angle draws.
    fn sample_fixed_magnitude(dim: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        Self::build(dim, rng, |rng| {
            if rng.random_range(0.0..1.0) < 0.5 {
                scale
            } else {
                -scale
            }
        })
    }

    fn build(
        dim: usize,
        rng: &mut ChaCha8Rng,
        mut angle: impl FnMut(&mut ChaCha8Rng) -> f64,
    ) -> Self {
        let count = dim.max(2);
        let rotations = (0..count)
            .map(|_| {
                let i = rng.random_range(0..dim);
                let mut j = rng.random_range(0..dim.max(2) - 1);
                if j >= i {
                    j += 1;
                }
                let theta = angle(rng);
                (i.min(j), i.max(j), theta.cos(), theta.sin())
            })
            .collect();
        Self { rotations }
    }

    fn apply(&self, v: &mut [f64]) {
        for &(i, j, c, s) in &self.rotations {
            let (a, b) = (v[i], v[j]);
            v[i] = c * a - s * b;
            v[j] = s * a + c * b;
        }
    }
}

fn base_prototypes(spec: &StreamSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "prototypes", 0));
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..spec.num_classes)
        .map(|_| {
            let raw: Vec<f64> = (0..spec.input_dim).map(|_| normal.sample(&mut rng)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            // Unit-scale prototypes keep rotations comparable across dims.
            raw.into_iter().map(|v| v * (spec.input_dim as f64).sqrt() / norm).collect()
        })
        .collect()
}

fn task_prototypes(spec: &StreamSpec, task_id: usize) -> Vec<Vec<f64>> {
    let cluster = task_id % spec.n_clusters;
    let base = base_prototypes(spec);
    let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "cluster", cluster as u64));
    let cluster_rot = GivensChain::sample_fixed_magnitude(spec.input_dim, spec.inter_scale, &mut crng);
    let mut trng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "task-rot", task_id as u64));
    let task_rot = GivensChain::sample(spec.input_dim, spec.intra_scale, &mut trng);
    base.into_iter()
        .map(|mut p| {
            cluster_rot.apply(&mut p);
            task_rot.apply(&mut p);
            p
        })
        .collect()
}

fn draw_examples(
    prototypes: &[Vec<f64>],
    label_shift: usize,
    noise: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(Vector, usize)>> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let classes = prototypes.len();
    (0..count)
        .map(|i| {
            let base = i % classes;
            let x: Vec<f64> = prototypes[base]
                .iter()
                .map(|p| p + noise * normal.sample(rng))
                .collect();
            Ok((Vector::new(x)?, (base + label_shift) % classes))
        })
        .collect()
}

/// Deterministic stream generation: a pure function of the spec.
pub fn generate_stream(spec: &StreamSpec) -> Result<TaskStream> {
    spec.validate()?;
    let mut tasks = Vec::with_capacity(spec.n_tasks);
    for task_id in 0..spec.n_tasks {
        let cluster = task_id % spec.n_clusters;
        let protos = task_prototypes(spec, task_id);
        let mut train_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "train", task_id as u64));
        let mut test_rng =
            ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "test", task_id as u64));
        tasks.push(Task {
            task_id,
            train: draw_examples(
                &protos,
                cluster,
                spec.noise_scale,
                spec.samples_per_task,
                &mut train_rng,
            )?,
            test: draw_examples(
                &protos,
                cluster,
                spec.noise_scale,
                spec.test_per_task,
                &mut test_rng,
            )?,
            true_cluster: Some(cluster),
        });
    }
    Ok(TaskStream {
        tasks,
        num_classes: spec.num_classes,
        input_dim: spec.input_dim,
        seed: spec.seed,
    })
}

/// Offline initialization dataset: a mixture over every cluster's prototype
/// set, drawn from RNG streams disjoint from all task train/test streams.
pub fn pretrain_split(spec: &StreamSpec, samples: usize) -> Result<Task> {
    spec.validate()?;
    if samples == 0 {
        return Err(Error::Input("pretrain sample count must be positive".into()));
    }
    let base = base_prototypes(spec);
    let cluster_rots: Vec<GivensChain> = (0..spec.n_clusters)
        .map(|c| {
            let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "cluster", c as u64));
            GivensChain::sample_fixed_magnitude(spec.input_dim, spec.inter_scale, &mut crng)
        })
        .collect();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let draw = |rng: &mut ChaCha8Rng, count: usize| -> Result<Vec<(Vector, usize)>> {
        (0..count)
            .map(|i| {
                let base_class = i % spec.num_classes;
                let cluster = rng.random_range(0..spec.n_clusters);
                let mut x = base[base_class].clone();
                cluster_rots[cluster].apply(&mut x);
                for v in &mut x {
                    *v += spec.noise_scale * normal.sample(rng);
                }
                Ok((Vector::new(x)?, (base_class + cluster) % spec.num_classes))
            })
            .collect()
    };
    let mut train_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "pretrain-train", 0));
    let mut test_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, "pretrain-test", 0));
    let holdout = (samples / 4).max(16);
    Ok(Task {
        task_id: usize::MAX,
        train: draw(&mut train_rng, samples)?,
        test: draw(&mut test_rng, holdout)?,
        true_cluster: None,
    })
}

pub fn save_stream(stream: &TaskStream, path: &Path) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "stream v1").unwrap();
    writeln!(
        out,
        "header input_dim {} num_classes {} n_tasks {} seed {}",
        stream.input_dim,
        stream.num_classes,
        stream.tasks.len(),
        stream.seed
    )
    .unwrap();
    for task in &stream.tasks {
        let cluster = match task.true_cluster {
            Some(c) => c.to_string(),
            None => "none".to_string(),
        };
        writeln!(out, "task {} cluster {}", task.task_id, cluster).unwrap();
        for (split, rows) in [("train", &task.train), ("test", &task.test)] {
            for (x, y) in rows {
                let feats: Vec<String> = x.as_slice().iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{} {split} {y} {}", task.task_id, feats.join(" ")).unwrap();
            }
        }
    }
    atomic_write(path, out.as_bytes())
}

pub fn load_stream(path: &Path) -> Result<TaskStream> {
    let text = std::fs::read_to_string(path)?;
    parse_stream(&text)
}

pub fn parse_stream(text: &str) -> Result<TaskStream> {
    let mut cur = ParseCursor::new(text);
    cur.expect_line("stream v1")?;
    let header = cur.next_line()?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 9 || parts[0] != "header" {
        return Err(cur.error(format!("bad header {header:?}")));
    }
    let input_dim: usize = cur.parse_field(parts[2])?;
    let num_classes: usize = cur.parse_field(parts[4])?;
    let n_tasks: usize = cur.parse_field(parts[6])?;
    let seed: u64 = cur.parse_field(parts[8])?;

    let mut tasks: Vec<Task> = Vec::new();
    while let Some(line) = cur.try_next_line() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts[0] == "task" {
            if parts.len() != 4 || parts[2] != "cluster" {
                return Err(cur.error(format!("bad task record {line:?}")));
            }
            let task_id: usize = cur.parse_field(parts[1])?;
            let true_cluster = if parts[3] == "none" {
                None
            } else {
                Some(cur.parse_field(parts[3])?)
            };
            tasks.push(Task { task_id, train: Vec::new(), test: Vec::new(), true_cluster });
            continue;
        }
        if parts.len() < 3 {
            return Err(cur.error(format!("bad example record {line:?}")));
        }
        let task_id: usize = cur.parse_field(parts[0])?;
        let split = parts[1];
        let label: usize = cur.parse_field(parts[2])?;
        let mut feats = Vec::with_capacity(parts.len() - 3);
        for tok in &parts[3..] {
            feats.push(parse_f64(tok).map_err(|m| cur.error(m))?);
        }
        let x = Vector::new(feats).map_err(|e| cur.error(e.to_string()))?;
        let task = tasks
            .iter_mut()
            .rev()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| cur.error(format!("example before task record for task {task_id}")))?;
        match split {
            "train" => task.train.push((x, label)),
            "test" => task.test.push((x, label)),
            _ => return Err(cur.error(format!("unknown split tag {split:?}"))),
        }
    }
    if tasks.len() != n_tasks {
        return Err(Error::Parse {
            line: cur.line_no,
            msg: format!("header promised {n_tasks} tasks, found {}", tasks.len()),
        });
    }
    let stream = TaskStream { tasks, num_classes, input_dim, seed };
    validate_stream(&stream)?;
    Ok(stream)
}

pub fn validate_stream(stream: &TaskStream) -> Result<()> {
    let mut ids = BTreeSet::new();
    for task in &stream.tasks {
        if !ids.insert(task.task_id) {
            return Err(Error::Validation(format!("duplicate task id {}", task.task_id)));
        }
        if task.train.is_empty() || task.test.is_empty() {
            return Err(Error::Validation(format!(
                "task {} has an empty train or test split",
                task.task_id
            )));
        }
        for (x, y) in task.train.iter().chain(&task.test) {
            if x.len() != stream.input_dim {
                return Err(Error::Validation(format!(
                    "task {}: example dim {} does not match stream input_dim {}",
                    task.task_id,
                    x.len(),
                    stream.input_dim
                )));
            }
            if *y >= stream.num_classes {
                return Err(Error::Validation(format!(
                    "task {}: label {} out of range",
                    task.task_id, y
                )));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gradient_signature, mlp_spec, signature_distance, ModelParams};

    #[test]
    fn single_cluster_stream_labels_all_zero() {
        let spec = StreamSpec { n_clusters: 1, n_tasks: 4, ..StreamSpec::default() };
        let stream = generate_stream(&spec).unwrap();
        assert!(stream.tasks.iter().all(|t| t.true_cluster == Some(0)));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = StreamSpec::default();
        let a = generate_stream(&spec).unwrap();
        let b = generate_stream(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_stream(&StreamSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = StreamSpec { n_clusters: 9, n_tasks: 4, ..StreamSpec::default() };
        assert!(matches!(generate_stream(&spec), Err(Error::Input(_))));
    }

    #[test]
    fn train_test_disjoint_per_task() {
        let stream = generate_stream(&StreamSpec::default()).unwrap();
        for task in &stream.tasks {
            for (x, _) in &task.train {
                assert!(task.test.iter().all(|(t, _)| t != x));
            }
        }
    }

    /// Brute-force gradient oracle over all task pairs: intra-cluster mean
    /// L1 gradient distance at the initial parameters stays below the
    /// inter-cluster mean.
    #[test]
    fn cluster_separation_in_gradient_space() {
        let spec = StreamSpec::default();
        let stream = generate_stream(&spec).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let params = ModelParams::init(
            mlp_spec(spec.input_dim, 32, 2, spec.num_classes),
            &mut rng,
        )
        .unwrap();
        let sigs: Vec<Vector> = stream
            .tasks
            .iter()
            .map(|t| gradient_signature(&params, None, &t.train).unwrap())
            .collect();
        let mut intra = Vec::new();
        let mut inter = Vec::new();
        for i in 0..sigs.len() {
            for j in (i + 1)..sigs.len() {
                let d = signature_distance(&sigs[i], &sigs[j]).unwrap();
                if stream.tasks[i].true_cluster == stream.tasks[j].true_cluster {
                    intra.push(d);
                } else {
                    inter.push(d);
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&intra) < mean(&inter),
            "intra {} vs inter {}",
            mean(&intra),
            mean(&inter)
        );
    }

    #[test]
    fn stream_round_trip_is_lossless() {
        let stream = generate_stream(&StreamSpec {
            n_tasks: 3,
            samples_per_task: 8,
            test_per_task: 4,
            ..StreamSpec::default()
        })
        .unwrap();
        let dir = std::env::temp_dir().join(format!("treelora-stream-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stream.txt");
        save_stream(&stream, &path).unwrap();
        let loaded = load_stream(&path).unwrap();
        assert_eq!(stream, loaded);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_is_parse_error() {
        let stream = generate_stream(&StreamSpec {
            n_tasks: 2,
            samples_per_task: 4,
            test_per_task: 2,
            ..StreamSpec::default()
        })
        .unwrap();
        let dir = std::env::temp_dir().join(format!("treelora-trunc-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("stream.txt");
        save_stream(&stream, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut = text.len() / 2;
        let truncated = &text[..cut];
        assert!(parse_stream(truncated).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn inconsistent_dims_name_offending_task() {
        let text = "stream v1\n\
                    header input_dim 2 num_classes 2 n_tasks 2 seed 1\n\
                    task 0 cluster 0\n\
                    0 train 0 1.0 2.0\n\
                    0 test 1 0.5 0.5\n\
                    task 1 cluster 1\n\
                    1 train 0 1.0 2.0 3.0\n\
                    1 test 1 0.5 0.5\n";
        let err = parse_stream(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("task 1"), "message was {msg}");
    }

    #[test]
    fn pretrain_split_properties() {
        let spec = StreamSpec::default();
        let d0 = pretrain_split(&spec, 128).unwrap();
        assert_eq!(d0.train.len(), 128);
        let stream = generate_stream(&spec).unwrap();
        for task in &stream.tasks {
            for (x, _) in &task.test {
                assert!(d0.train.iter().all(|(t, _)| t != x));
            }
        }
    }
}

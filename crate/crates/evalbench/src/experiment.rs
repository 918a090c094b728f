//! Config-driven experiment runner.
//!
//! A TOML file lists experiments; each one produces metric rows for a CSV
//! report and pass/fail checks for the manifest.

use std::fs;
use std::path::Path;
use std::time::Instant;

use knowlens_core::dataset::normalize_features;
use knowlens_core::embednet::{fit, Hyperparams};
use knowlens_core::knowledge::LabelAssignment;
use knowlens_core::projection::{project, NeighborParams, ProjectionMethod};
use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::accuracy::clustering_accuracy;
use crate::libras::load_libras;
use crate::metrics::{centroid_distance, centroids, intra_inter_ratio};
use crate::synth::{gen_synthetic, SyntheticSpec};
use crate::timing::{bench_train, TimingStats};
use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Synth,
    Accuracy,
    Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Experiment {
    /// Four-group synthetic data trained with its true labels, optionally
    /// again with the last two groups merged into one class.
    Synthetic(SyntheticConfig),
    /// Projected cluster compaction on the synthetic data at two CLR levels.
    Compaction(CompactionConfig),
    /// Clustering accuracy of the embeddings across CLR levels.
    Accuracy(AccuracyConfig),
    Timing(TimingConfig),
}

impl Experiment {
    pub fn name(&self) -> &str {
        match self {
            Experiment::Synthetic(c) => &c.name,
            Experiment::Compaction(c) => &c.name,
            Experiment::Accuracy(c) => &c.name,
            Experiment::Timing(c) => &c.name,
        }
    }

    pub fn suite(&self) -> Suite {
        match self {
            Experiment::Synthetic(_) | Experiment::Compaction(_) => Suite::Synth,
            Experiment::Accuracy(_) => Suite::Accuracy,
            Experiment::Timing(_) => Suite::Timing,
        }
    }

    fn seeds_mut(&mut self) -> &mut Vec<u64> {
        match self {
            Experiment::Synthetic(c) => &mut c.seeds,
            Experiment::Compaction(c) => &mut c.seeds,
            Experiment::Accuracy(c) => &mut c.seeds,
            Experiment::Timing(c) => &mut c.seeds,
        }
    }

    /// Replaces the seed list with `base, base + 1, ...` of the same length.
    pub fn reseed(&mut self, base: u64) {
        let seeds = self.seeds_mut();
        let len = seeds.len();
        *seeds = (0..len as u64).map(|i| base.wrapping_add(i)).collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub name: String,
    #[serde(default = "three_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "synthetic_hp")]
    pub hyperparams: Hyperparams,
    #[serde(default = "yes")]
    pub merged: bool,
    #[serde(default = "synthetic_min_accuracy")]
    pub min_accuracy: f64,
    #[serde(default = "merged_min_accuracy")]
    pub min_merged_accuracy: f64,
    #[serde(default = "synthetic_max_seconds")]
    pub max_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompactionConfig {
    pub name: String,
    #[serde(default = "five_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "compaction_hp")]
    pub hyperparams: Hyperparams,
    /// CLR percentages; the check compares the last against the first.
    #[serde(default = "compaction_levels")]
    pub clr: Vec<f64>,
    #[serde(default = "neighbor_method")]
    pub method: ProjectionMethod,
    #[serde(default)]
    pub projection: NeighborParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Libras,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyConfig {
    pub name: String,
    #[serde(default = "libras_name")]
    pub dataset: DatasetName,
    #[serde(default = "three_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "accuracy_levels")]
    pub clr: Vec<f64>,
    #[serde(default = "libras_hp")]
    pub hyperparams: Hyperparams,
    /// Lower bound on the median accuracy at the highest CLR.
    #[serde(default)]
    pub min_accuracy: Option<f64>,
    #[serde(default)]
    pub max_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub name: String,
    #[serde(default = "one_seed")]
    pub seeds: Vec<u64>,
    #[serde(default = "timing_n")]
    pub n: Vec<usize>,
    #[serde(default = "timing_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "three")]
    pub repeats: usize,
    #[serde(default = "timing_hp")]
    pub hyperparams: Hyperparams,
    /// Allowed `[lo, hi]` for largest-dims / smallest-dims median time at
    /// the largest n.
    #[serde(default = "timing_ratio")]
    pub ratio_bounds: (f64, f64),
}

fn yes() -> bool {
    true
}
fn three() -> usize {
    3
}
fn one_seed() -> Vec<u64> {
    vec![0]
}
fn three_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn five_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn synthetic_min_accuracy() -> f64 {
    0.95
}
fn merged_min_accuracy() -> f64 {
    0.9
}
fn synthetic_max_seconds() -> f64 {
    60.0
}
fn compaction_levels() -> Vec<f64> {
    vec![0.0, 90.0]
}
fn accuracy_levels() -> Vec<f64> {
    vec![10.0, 50.0, 90.0]
}
fn neighbor_method() -> ProjectionMethod {
    ProjectionMethod::NeighborEmbedding
}
fn libras_name() -> DatasetName {
    DatasetName::Libras
}
fn timing_n() -> Vec<usize> {
    vec![100, 500, 1000]
}
fn timing_dims() -> Vec<usize> {
    vec![1000, 5000, 10000]
}
fn timing_ratio() -> (f64, f64) {
    (2.0, 10.0)
}

pub fn synthetic_hp() -> Hyperparams {
    Hyperparams {
        alpha: 0.2,
        eta: 4.0,
        batch_size: 32,
        epochs: 200,
        ..Default::default()
    }
}

pub fn compaction_hp() -> Hyperparams {
    Hyperparams {
        eta: 4.0,
        epochs: 200,
        ..Default::default()
    }
}

pub fn libras_hp() -> Hyperparams {
    Hyperparams {
        eta: 1.0,
        batch_size: 10,
        epochs: 100,
        ..Default::default()
    }
}

pub fn timing_hp() -> Hyperparams {
    Hyperparams {
        epochs: 100,
        ..Default::default()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentFile {
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<Experiment>,
}

impl ExperimentFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// The protocol used when no config file is given.
    pub fn default_for(suite: Suite) -> Self {
        let experiments = match suite {
            Suite::Synth => vec![
                Experiment::Synthetic(SyntheticConfig {
                    name: "synthetic".into(),
                    seeds: three_seeds(),
                    hyperparams: synthetic_hp(),
                    merged: true,
                    min_accuracy: synthetic_min_accuracy(),
                    min_merged_accuracy: merged_min_accuracy(),
                    max_seconds: synthetic_max_seconds(),
                }),
                Experiment::Compaction(CompactionConfig {
                    name: "compaction".into(),
                    seeds: five_seeds(),
                    hyperparams: compaction_hp(),
                    clr: compaction_levels(),
                    method: neighbor_method(),
                    projection: NeighborParams::default(),
                }),
            ],
            Suite::Accuracy => vec![Experiment::Accuracy(AccuracyConfig {
                name: "libras".into(),
                dataset: DatasetName::Libras,
                seeds: three_seeds(),
                clr: accuracy_levels(),
                hyperparams: libras_hp(),
                min_accuracy: Some(0.80),
                max_seconds: Some(300.0),
            })],
            Suite::Timing => vec![Experiment::Timing(TimingConfig {
                name: "timing".into(),
                seeds: one_seed(),
                n: timing_n(),
                dims: timing_dims(),
                repeats: 3,
                hyperparams: timing_hp(),
                ratio_bounds: timing_ratio(),
            })],
        };
        Self { experiments }
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub condition: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub experiment: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
    /// Wall-clock seconds per experiment; kept out of the CSV so that
    /// reruns produce identical files.
    pub seconds: Vec<(String, f64)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn row(&mut self, experiment: &str, condition: String, seed: u64, metric: &str, value: f64) {
        self.rows.push(Row {
            experiment: experiment.to_owned(),
            condition,
            seed,
            metric: metric.to_owned(),
            value,
        });
    }

    fn check(&mut self, experiment: &str, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            experiment: experiment.to_owned(),
            name: name.to_owned(),
            passed,
            detail,
        });
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    TimingStats::from_samples(values.to_vec()).median
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRun {
    pub seed: u64,
    pub accuracy: f64,
    pub dist_ab: f64,
    pub dist_bc: f64,
    pub dist_bd: f64,
    pub embedding_ratio: f64,
    pub merged_accuracy: Option<f64>,
    pub seconds: f64,
}

impl SyntheticRun {
    pub fn ordered(&self) -> bool {
        self.dist_ab < self.dist_bc && self.dist_bc < self.dist_bd
    }
}

/// Trains on the four-group data for one seed and measures the embedding.
pub fn synthetic_run(hp: &Hyperparams, seed: u64, merged: bool) -> Result<SyntheticRun> {
    let (ds, truth) = gen_synthetic(&SyntheticSpec::four_groups(seed))?;
    let x = normalize_features(&ds);
    let hp = Hyperparams { seed, ..*hp };
    let start = Instant::now();
    let (model, _) = fit(&x, &LabelAssignment::from_dense(&truth)?, &hp)?;
    let seconds = start.elapsed().as_secs_f64();
    let accuracy = clustering_accuracy(model.h.view(), &truth, 4, seed)?;
    let c = centroids(model.h.view(), &truth);

    let merged_accuracy = if merged {
        let labels: Vec<usize> = truth.iter().map(|&t| t.min(2)).collect();
        let (model, _) = fit(&x, &LabelAssignment::from_dense(&labels)?, &hp)?;
        let idx: Vec<usize> = (0..truth.len()).filter(|&i| truth[i] >= 2).collect();
        let sub = model.h.select(Axis(0), &idx);
        let sub_truth: Vec<usize> = idx.iter().map(|&i| truth[i] - 2).collect();
        Some(clustering_accuracy(sub.view(), &sub_truth, 2, seed)?)
    } else {
        None
    };

    Ok(SyntheticRun {
        seed,
        accuracy,
        dist_ab: centroid_distance(&c, 0, 1),
        dist_bc: centroid_distance(&c, 1, 2),
        dist_bd: centroid_distance(&c, 1, 3),
        embedding_ratio: intra_inter_ratio(model.h.view(), &truth),
        merged_accuracy,
        seconds,
    })
}

/// Projected intra/inter distance ratio per CLR level for one seed.
pub fn compaction_run(cfg: &CompactionConfig, seed: u64) -> Result<Vec<f64>> {
    let (ds, truth) = gen_synthetic(&SyntheticSpec::four_groups(seed))?;
    let x = normalize_features(&ds);
    let labels = LabelAssignment::from_dense(&truth)?;
    cfg.clr
        .iter()
        .map(|&clr| {
            let hp = Hyperparams {
                seed,
                ..cfg.hyperparams
            }
            .with_clr_percent(clr);
            let (model, _) = fit(&x, &labels, &hp)?;
            let p = project(model.h.view(), cfg.method, &cfg.projection, seed)?;
            Ok(intra_inter_ratio(p.coords.view(), &truth))
        })
        .collect()
}

/// Clustering accuracy per CLR level (outer) and seed (inner).
pub fn accuracy_runs(cfg: &AccuracyConfig) -> Result<Vec<Vec<f64>>> {
    let (ds, truth) = match cfg.dataset {
        DatasetName::Libras => load_libras()?,
        DatasetName::Synthetic => gen_synthetic(&SyntheticSpec::four_groups(0))?,
    };
    let k = truth.iter().max().map_or(0, |m| m + 1);
    let x = normalize_features(&ds);
    let labels = LabelAssignment::from_dense(&truth)?;
    cfg.clr
        .iter()
        .map(|&clr| {
            cfg.seeds
                .iter()
                .map(|&seed| {
                    let hp = Hyperparams {
                        seed,
                        ..cfg.hyperparams
                    }
                    .with_clr_percent(clr);
                    let (model, _) = fit(&x, &labels, &hp)?;
                    clustering_accuracy(model.h.view(), &truth, k, seed)
                })
                .collect()
        })
        .collect()
}

/// Median-time grid, indexed `[n][dims]`.
pub fn timing_grid(cfg: &TimingConfig, seed: u64) -> Result<Vec<Vec<TimingStats>>> {
    cfg.n
        .iter()
        .map(|&n| {
            cfg.dims
                .iter()
                .map(|&d| bench_train(n, d, &cfg.hyperparams, cfg.repeats, seed))
                .collect()
        })
        .collect()
}

/// Whether medians never decrease along either axis of the grid.
pub fn grid_monotone(grid: &[Vec<TimingStats>]) -> bool {
    let rows = grid.iter().all(|r| r.windows(2).all(|w| w[0].median <= w[1].median));
    let cols = (0..grid.first().map_or(0, Vec::len)).all(|j| grid.windows(2).all(|w| w[0][j].median <= w[1][j].median));
    rows && cols
}

fn strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[0] < w[1])
}

fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run_one(exp: &Experiment, report: &mut Report) -> Result<()> {
    let name = exp.name().to_owned();
    match exp {
        Experiment::Synthetic(cfg) => {
            let mut runs = Vec::new();
            for &seed in &cfg.seeds {
                let r = synthetic_run(&cfg.hyperparams, seed, cfg.merged)?;
                let cond = format!("clr={}", cfg.hyperparams.clr_percent());
                report.row(&name, cond.clone(), seed, "accuracy", r.accuracy);
                report.row(&name, cond.clone(), seed, "dist_ab", r.dist_ab);
                report.row(&name, cond.clone(), seed, "dist_bc", r.dist_bc);
                report.row(&name, cond.clone(), seed, "dist_bd", r.dist_bd);
                report.row(&name, cond.clone(), seed, "intra_inter_ratio", r.embedding_ratio);
                if let Some(m) = r.merged_accuracy {
                    report.row(&name, cond, seed, "merged_accuracy", m);
                }
                runs.push(r);
            }
            let acc: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
            report.check(
                &name,
                "accuracy",
                acc.iter().all(|&a| a >= cfg.min_accuracy),
                format!("{} >= {}", fmt_list(&acc), cfg.min_accuracy),
            );
            report.check(
                &name,
                "centroid_order",
                runs.iter().all(SyntheticRun::ordered),
                runs.iter()
                    .map(|r| {
                        format!(
                            "seed {}: {:.3} < {:.3} < {:.3}",
                            r.seed, r.dist_ab, r.dist_bc, r.dist_bd
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("; "),
            );
            let secs: Vec<f64> = runs.iter().map(|r| r.seconds).collect();
            report.check(
                &name,
                "runtime",
                secs.iter().all(|&s| s < cfg.max_seconds),
                format!("{} s < {}", fmt_list(&secs), cfg.max_seconds),
            );
            if cfg.merged {
                let m: Vec<f64> = runs.iter().filter_map(|r| r.merged_accuracy).collect();
                report.check(
                    &name,
                    "merged_accuracy",
                    m.iter().all(|&a| a >= cfg.min_merged_accuracy),
                    format!("{} >= {}", fmt_list(&m), cfg.min_merged_accuracy),
                );
            }
        }
        Experiment::Compaction(cfg) => {
            if cfg.clr.len() < 2 {
                return Err(BenchError::Config(format!("{name}: need at least two CLR levels")));
            }
            let mut wins = 0;
            let mut details = Vec::new();
            for &seed in &cfg.seeds {
                let ratios = compaction_run(cfg, seed)?;
                for (clr, r) in cfg.clr.iter().zip(&ratios) {
                    report.row(&name, format!("clr={clr}"), seed, "projected_ratio", *r);
                }
                let (first, last) = (ratios[0], *ratios.last().unwrap());
                wins += usize::from(last < first);
                details.push(format!("seed {seed}: {last:.3} < {first:.3}"));
            }
            report.check(&name, "compaction", wins == cfg.seeds.len(), details.join("; "));
        }
        Experiment::Accuracy(cfg) => {
            let start = Instant::now();
            let acc = accuracy_runs(cfg)?;
            let seconds = start.elapsed().as_secs_f64();
            let mut medians = Vec::new();
            for (clr, per_seed) in cfg.clr.iter().zip(&acc) {
                for (&seed, &a) in cfg.seeds.iter().zip(per_seed) {
                    report.row(&name, format!("clr={clr}"), seed, "accuracy", a);
                }
                medians.push(median(per_seed));
            }
            report.check(
                &name,
                "monotone_in_clr",
                strictly_increasing(&medians),
                format!("medians {}", fmt_list(&medians)),
            );
            if let (Some(min), Some(&last)) = (cfg.min_accuracy, medians.last()) {
                report.check(&name, "top_accuracy", last >= min, format!("{last:.3} >= {min}"));
            }
            if let Some(max) = cfg.max_seconds {
                report.check(&name, "runtime", seconds < max, format!("{seconds:.1} s < {max}"));
            }
        }
        Experiment::Timing(cfg) => {
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let grid = timing_grid(cfg, seed)?;
            for (n, row) in cfg.n.iter().zip(&grid) {
                for (d, stats) in cfg.dims.iter().zip(row) {
                    let cond = format!("n={n};dims={d}");
                    report.row(&name, cond.clone(), seed, "median_seconds", stats.median);
                    report.row(&name, cond.clone(), seed, "q1_seconds", stats.q1);
                    report.row(&name, cond, seed, "q3_seconds", stats.q3);
                }
            }
            let medians: Vec<String> = grid
                .iter()
                .map(|r| fmt_list(&r.iter().map(|s| s.median).collect::<Vec<_>>()))
                .collect();
            report.check(&name, "monotone_grid", grid_monotone(&grid), medians.join(" "));
            if let Some(last) = grid.last().filter(|r| r.len() >= 2) {
                let ratio = last.last().unwrap().median / last[0].median;
                let (lo, hi) = cfg.ratio_bounds;
                report.check(
                    &name,
                    "dims_ratio",
                    (lo..=hi).contains(&ratio),
                    format!("{ratio:.2} in [{lo}, {hi}]"),
                );
            }
        }
    }
    Ok(())
}

/// Runs every experiment in order.
pub fn run_experiments(file: &ExperimentFile) -> Result<Report> {
    let mut report = Report::default();
    for exp in &file.experiments {
        let start = Instant::now();
        run_one(exp, &mut report)?;
        report
            .seconds
            .push((exp.name().to_owned(), start.elapsed().as_secs_f64()));
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct ColumnDoc {
    name: &'static str,
    description: &'static str,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    seed: Option<u64>,
    columns: Vec<ColumnDoc>,
    experiments: &'a [Experiment],
    synthetic_groups: SyntheticSpec,
    checks: &'a [Check],
    seconds: &'a [(String, f64)],
    passed: bool,
}

/// Writes `results.csv` and `manifest.json` into `out`.
pub fn write_report(out: &Path, file: &ExperimentFile, report: &Report, seed: Option<u64>) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut csv = csv::Writer::from_path(out.join("results.csv")).map_err(|e| BenchError::Config(e.to_string()))?;
    csv.write_record(["experiment", "condition", "seed", "metric", "value"])
        .map_err(|e| BenchError::Config(e.to_string()))?;
    for row in &report.rows {
        csv.write_record([
            row.experiment.clone(),
            row.condition.clone(),
            row.seed.to_string(),
            row.metric.clone(),
            row.value.to_string(),
        ])
        .map_err(|e| BenchError::Config(e.to_string()))?;
    }
    csv.flush()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed,
        columns: [
            ("experiment", "experiment name from the config"),
            ("condition", "varied setting, e.g. clr=50 or n=100;dims=1000"),
            ("seed", "RNG seed of the run"),
            ("metric", "accuracy, dist_ab, dist_bc, dist_bd, intra_inter_ratio, merged_accuracy, projected_ratio, median_seconds, q1_seconds or q3_seconds"),
            ("value", "metric value"),
        ]
        .into_iter()
        .map(|(name, description)| ColumnDoc { name, description })
        .collect(),
        experiments: &file.experiments,
        synthetic_groups: SyntheticSpec::four_groups(0),
        checks: &report.checks,
        seconds: &report.seconds,
        passed: report.passed(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| BenchError::Config(e.to_string()))?;
    fs::write(out.join("manifest.json"), json)?;
    Ok(())
}

/// Loads, runs and writes one config; returns the report.
pub fn run_experiment(config: &Path, out: &Path) -> Result<Report> {
    let file = ExperimentFile::load(config)?;
    let report = run_experiments(&file)?;
    write_report(out, &file, &report, None)?;
    Ok(report)
}

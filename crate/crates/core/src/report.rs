//! CSV emission and cross-seed summaries.
//!
//! Per-seed round CSVs have the frozen header
//!
//! ```text
//! round,alice_acc,best_so_far,alpha_0,…,alpha_{N-1},d_0,…,d_{N-1}
//! ```
//!
//! and summary CSVs the header
//!
//! ```text
//! algorithm,distribution,seeds,mean_best_accuracy,std_best_accuracy,rounds_to_95pct_of_best,partition_hash
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reruns produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{parse_config, ExperimentConfig};
use crate::data::Distribution;
use crate::error::{Error, Result};
use crate::experiment::Experiment;
use crate::server::{Algorithm, RoundRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub distribution: String,
    pub seeds: usize,
    pub mean_best_accuracy: f64,
    /// Population standard deviation across seeds (0 for one seed).
    pub std_best_accuracy: f64,
    /// Median over seeds, lower median for an even count.
    pub rounds_to_95pct_of_best: usize,
    pub partition_hash: String,
}

/// One seed's completed run.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub alice: usize,
    pub partition_hash: String,
    pub records: Vec<RoundRecord>,
    pub csv_path: PathBuf,
}

/// Output of [`run_and_emit`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

/// Highest accuracy over all rounds.
pub fn best_accuracy(records: &[RoundRecord]) -> f64 {
    records
        .iter()
        .map(|r| r.alice_test_accuracy)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// First round whose best-so-far reaches 95% of the final best; 0 when empty.
pub fn rounds_to_95pct_of_best(records: &[RoundRecord]) -> usize {
    let Some(last) = records.last() else {
        return 0;
    };
    let target = 0.95 * last.best_so_far;
    records
        .iter()
        .find(|r| r.best_so_far >= target)
        .map_or(0, |r| r.round)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn lower_median(values: &[usize]) -> usize {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

fn combined_hash(hashes: &[&str]) -> String {
    if let [only] = hashes {
        return only.to_string();
    }
    let mut h = Sha256::new();
    for s in hashes {
        h.update(s.as_bytes());
        h.update(b"\n");
    }
    h.finalize()[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn summarize(algorithm: &str, distribution: &str, runs: &[SeedRun]) -> SummaryRow {
    let bests: Vec<f64> = runs.iter().map(|r| best_accuracy(&r.records)).collect();
    let speeds: Vec<usize> = runs.iter().map(|r| rounds_to_95pct_of_best(&r.records)).collect();
    let (mean, std) = mean_std(&bests);
    let hashes: Vec<&str> = runs.iter().map(|r| r.partition_hash.as_str()).collect();
    SummaryRow {
        algorithm: algorithm.to_string(),
        distribution: distribution.to_string(),
        seeds: runs.len(),
        mean_best_accuracy: mean,
        std_best_accuracy: std,
        rounds_to_95pct_of_best: lower_median(&speeds),
        partition_hash: combined_hash(&hashes),
    }
}

pub fn write_round_csv(path: &Path, records: &[RoundRecord], num_agents: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["round".to_string(), "alice_acc".into(), "best_so_far".into()];
    header.extend((0..num_agents).map(|i| format!("alpha_{i}")));
    header.extend((0..num_agents).map(|i| format!("d_{i}")));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.round.to_string(),
            r.alice_test_accuracy.to_string(),
            r.best_so_far.to_string(),
        ];
        row.extend(r.weights.iter().map(f64::to_string));
        row.extend(r.distances.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "distribution",
        "seeds",
        "mean_best_accuracy",
        "std_best_accuracy",
        "rounds_to_95pct_of_best",
        "partition_hash",
    ])?;
    for r in rows {
        w.write_record([
            r.algorithm.clone(),
            r.distribution.clone(),
            r.seeds.to_string(),
            r.mean_best_accuracy.to_string(),
            r.std_best_accuracy.to_string(),
            r.rounds_to_95pct_of_best.to_string(),
            r.partition_hash.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Runs every seed (and every Alice, in multi-Alice mode), writing one round
/// CSV per run and one summary CSV into `out_dir`.
pub fn run_and_emit(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let multi = cfg.alice_indices.is_some();
    let mut runs = Vec::new();
    for seed in cfg.seeds() {
        for (alice, exp) in Experiment::build_per_alice(cfg, seed)? {
            let hash = exp.partition_hash().to_string();
            let records = exp.run()?;
            let name = if multi {
                format!("seed_{seed}_alice_{alice}.csv")
            } else {
                format!("seed_{seed}.csv")
            };
            let csv_path = out_dir.join(name);
            write_round_csv(&csv_path, &records, cfg.num_agents)?;
            runs.push(SeedRun {
                seed,
                alice,
                partition_hash: hash,
                records,
                csv_path,
            });
        }
    }
    let algorithm = cfg.algorithm.name.name();
    let distribution = cfg.data.distribution.label();
    let summary = if multi {
        cfg.alices()
            .into_iter()
            .map(|a| {
                let mine: Vec<SeedRun> = runs.iter().filter(|r| r.alice == a).cloned().collect();
                summarize(&format!("{algorithm}@alice{a}"), &distribution, &mine)
            })
            .collect()
    } else {
        vec![summarize(algorithm, &distribution, &runs)]
    };
    let summary_path = out_dir.join("summary.csv");
    write_summary_csv(&summary_path, &summary)?;
    Ok(RunOutput {
        runs,
        summary,
        summary_path,
    })
}

/// Result of [`compare_suite`].
#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub rows: Vec<SummaryRow>,
    pub summary_path: PathBuf,
    pub table: String,
}

/// The benchmark grid every suite directory must cover.
pub const SUITE_ALGORITHMS: [Algorithm; 4] = [
    Algorithm::Local,
    Algorithm::FedAvg,
    Algorithm::Scaffold,
    Algorithm::Waffle,
];

/// Config with the per-cell fields blanked, for consistency checks.
fn shared_settings(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.algorithm.name = Algorithm::Waffle;
    c.data.distribution = Distribution::A;
    c.output_path = None;
    c
}

/// Loads every `*.toml` in `cfg_dir`, checks they differ only in algorithm
/// and distribution, runs each, and writes a merged summary.
///
/// `workers` and `seeds` override the configs' own values when given.
pub fn compare_suite(
    cfg_dir: &Path,
    out_dir: &Path,
    workers: Option<usize>,
    seeds: Option<&[u64]>,
) -> Result<SuiteOutput> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(cfg_dir)
        .map_err(|e| Error::io(cfg_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();

    let mut cells: BTreeMap<(String, String), (PathBuf, ExperimentConfig)> = BTreeMap::new();
    let mut reference: Option<(PathBuf, ExperimentConfig)> = None;
    for path in paths {
        let mut cfg = parse_config(&path)?;
        if workers.is_some() {
            cfg.workers = workers;
        }
        if let Some(s) = seeds {
            cfg.seeds = s.to_vec();
        }
        let shared = shared_settings(&cfg);
        match &reference {
            None => reference = Some((path.clone(), shared)),
            Some((ref_path, ref_cfg)) if *ref_cfg != shared => {
                return Err(Error::Suite(format!(
                    "{} has data or training settings that differ from {}",
                    path.display(),
                    ref_path.display()
                )));
            }
            Some(_) => {}
        }
        let key = (cfg.algorithm.name.name().to_string(), cfg.data.distribution.label());
        if let Some((other, _)) = cells.get(&key) {
            return Err(Error::Suite(format!(
                "cell {} × {} is defined by both {} and {}",
                key.0,
                key.1,
                other.display(),
                path.display()
            )));
        }
        cells.insert(key, (path, cfg));
    }

    for dist in Distribution::BENCHMARK {
        for alg in SUITE_ALGORITHMS {
            let key = (alg.name().to_string(), dist.label());
            if !cells.contains_key(&key) {
                return Err(Error::Suite(format!("missing config for cell {} × {}", key.0, key.1)));
            }
        }
    }

    create_dir(out_dir)?;
    let mut rows = Vec::new();
    for ((alg, dist), (_, cfg)) in &cells {
        let cell_dir = out_dir.join(format!("{alg}_{}", dist.replace('*', "star")));
        let out = run_and_emit(cfg, &cell_dir)?;
        rows.extend(out.summary);
    }
    let order = |row: &SummaryRow| {
        let d = Distribution::BENCHMARK
            .iter()
            .position(|d| d.label() == row.distribution)
            .unwrap_or(usize::MAX);
        let a = Algorithm::ALL
            .iter()
            .position(|a| a.name() == row.algorithm)
            .unwrap_or(usize::MAX);
        (d, a, row.distribution.clone(), row.algorithm.clone())
    };
    rows.sort_by_key(order);

    let summary_path = out_dir.join("suite_summary.csv");
    write_summary_csv(&summary_path, &rows)?;
    let table = format_table(&rows);
    let table_path = out_dir.join("suite_table.md");
    std::fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    Ok(SuiteOutput {
        rows,
        summary_path,
        table,
    })
}

/// Markdown table: one row per distribution, one column per algorithm,
/// cells `mean ± std` of best accuracy.
pub fn format_table(rows: &[SummaryRow]) -> String {
    let mut algorithms: Vec<&str> = Vec::new();
    let mut distributions: Vec<&str> = Vec::new();
    for r in rows {
        if !algorithms.contains(&r.algorithm.as_str()) {
            algorithms.push(&r.algorithm);
        }
        if !distributions.contains(&r.distribution.as_str()) {
            distributions.push(&r.distribution);
        }
    }
    let mut out = String::from("| Distr. |");
    for a in &algorithms {
        let _ = write!(out, " {a} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(algorithms.len()));
    out.push('\n');
    for d in &distributions {
        let _ = write!(out, "| {d} |");
        for a in &algorithms {
            match rows.iter().find(|r| r.algorithm == *a && r.distribution == *d) {
                Some(r) => {
                    let _ = write!(out, " {:.4} ± {:.4} |", r.mean_best_accuracy, r.std_best_accuracy);
                }
                None => out.push_str(" – |"),
            }
        }
        out.push('\n');
    }
    out
}

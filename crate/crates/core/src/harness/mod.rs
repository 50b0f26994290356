//! Multi-seed experiment orchestration and output.

mod output;
mod selftest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run, AlgoConfig, RunTrace};
use crate::environment::{generate_instance, Environment, ORACLE_ASSIGNMENT_CAP};
use crate::error::{Error, Result};
use crate::mnl::{total_revenue, Instance, Matching};

pub use output::{emit_csv, emit_plot, parse_csv, read_csv, render_plot, write_csv, CSV_HEADER};
pub use selftest::{run_selftest, solve_design_file, Check, DesignFile, DesignReport};

/// Offset between an instance seed and its feedback stream seed.
pub const FEEDBACK_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

/// Horizons above this record every tenth round by default.
pub const FULL_RECORD_HORIZON: usize = 10_000;

fn default_dim() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_agents: usize,
    pub n_arms: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub capacity: usize,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<AlgoConfig>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Runs cells one at a time so wall-clock numbers are not shared.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub decimate: Option<usize>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Config("at least one algorithm is required".into()));
        }
        if self.n_agents == 0 || self.n_arms == 0 || self.dim == 0 || self.capacity == 0 {
            return Err(Error::Config("N, K, d and L must be positive".into()));
        }
        if self.capacity > self.n_agents {
            return Err(Error::Config(format!("capacity {} exceeds N = {}", self.capacity, self.n_agents)));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.decimate == Some(0) || self.workers == Some(0) {
            return Err(Error::Config("decimate and workers must be positive".into()));
        }
        for algo in &self.algorithms {
            self.algo_for(algo).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn decimation(&self) -> usize {
        self.decimate
            .unwrap_or(if self.horizon <= FULL_RECORD_HORIZON { 1 } else { 10 })
    }

    fn algo_for(&self, algo: &AlgoConfig) -> AlgoConfig {
        let mut algo = algo.clone();
        if algo.horizon == 0 {
            algo.horizon = self.horizon;
        }
        algo
    }
}

/// One decimated point of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub seed: u64,
    pub round: usize,
    pub cum_regret: f64,
    pub cum_seconds: f64,
    pub opt_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub algorithm: String,
    pub seed: u64,
    pub error: String,
}

/// Mean and standard error across seeds at each recorded round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanCurve {
    pub algorithm: String,
    pub seeds: usize,
    pub rounds: Vec<usize>,
    pub mean_regret: Vec<f64>,
    pub stderr_regret: Vec<f64>,
    pub mean_seconds: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
    pub curves: Vec<MeanCurve>,
}

/// Rounds kept under decimation `k`: every `k`-th round plus the last.
pub fn recorded_rounds(horizon: usize, k: usize) -> Vec<usize> {
    let k = k.max(1);
    let mut rounds: Vec<usize> = (k..=horizon).step_by(k).collect();
    if !horizon.is_multiple_of(k) {
        rounds.push(horizon);
    }
    rounds
}

/// Converts a trace to rows at the decimated rounds.
pub fn summarize(trace: &RunTrace, seed: u64, decimate: usize) -> Vec<SummaryRow> {
    let mut regret = 0.0;
    let mut seconds = 0.0;
    let mut cumulative = Vec::with_capacity(trace.rounds.len());
    for r in &trace.rounds {
        regret += r.regret;
        seconds += r.seconds;
        cumulative.push((regret, seconds, r.opt_calls));
    }
    recorded_rounds(trace.rounds.len(), decimate)
        .into_iter()
        .map(|round| {
            let (cum_regret, cum_seconds, opt_calls) = cumulative[round - 1];
            SummaryRow {
                algorithm: trace.label.clone(),
                seed,
                round,
                cum_regret,
                cum_seconds,
                opt_calls,
            }
        })
        .collect()
}

/// Runs one (algorithm, seed) cell on a fresh instance.
pub fn run_cell(config: &ExperimentConfig, algo: &AlgoConfig, seed: u64) -> Result<RunTrace> {
    let instance = generate_instance(config.n_agents, config.n_arms, config.dim, config.capacity, seed)?;
    let mut env = Environment::new(instance, seed ^ FEEDBACK_SEED_OFFSET)?;
    run(&mut env, &config.algo_for(algo))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let cells: Vec<(usize, u64)> = (0..config.algorithms.len())
        .flat_map(|a| config.seeds.iter().map(move |&s| (a, s)))
        .collect();
    let decimate = config.decimation();
    let work = || -> Vec<(usize, u64, Result<Vec<SummaryRow>>)> {
        cells
            .par_iter()
            .map(|&(a, seed)| {
                let out = run_cell(config, &config.algorithms[a], seed).map(|t| summarize(&t, seed, decimate));
                (a, seed, out)
            })
            .collect()
    };
    let workers = if config.timing { Some(1) } else { config.workers };
    let outcomes = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut result = ExperimentResult::default();
    for (a, seed, out) in outcomes {
        match out {
            Ok(rows) => result.rows.extend(rows),
            Err(e) => result.failures.push(CellFailure {
                algorithm: config.algorithms[a].label(),
                seed,
                error: e.to_string(),
            }),
        }
    }
    sort_rows(&mut result.rows);
    result.failures.sort_by(|a, b| (&a.algorithm, a.seed).cmp(&(&b.algorithm, b.seed)));
    result.curves = mean_curves(&result.rows);
    Ok(result)
}

pub fn sort_rows(rows: &mut [SummaryRow]) {
    rows.sort_by(|a, b| (&a.algorithm, a.seed, a.round).cmp(&(&b.algorithm, b.seed, b.round)));
}

/// Per-algorithm mean curves over the seeds present in `rows`.
pub fn mean_curves(rows: &[SummaryRow]) -> Vec<MeanCurve> {
    let mut by_alg: BTreeMap<&str, BTreeMap<usize, Vec<&SummaryRow>>> = BTreeMap::new();
    for row in rows {
        by_alg
            .entry(&row.algorithm)
            .or_default()
            .entry(row.round)
            .or_default()
            .push(row);
    }
    by_alg
        .into_iter()
        .map(|(algorithm, by_round)| {
            let seeds = by_round.values().map(Vec::len).max().unwrap_or(0);
            let mut curve = MeanCurve {
                algorithm: algorithm.to_string(),
                seeds,
                rounds: Vec::new(),
                mean_regret: Vec::new(),
                stderr_regret: Vec::new(),
                mean_seconds: Vec::new(),
            };
            for (round, group) in by_round {
                let regrets: Vec<f64> = group.iter().map(|r| r.cum_regret).collect();
                let (mean, stderr) = mean_stderr(&regrets);
                let seconds = group.iter().map(|r| r.cum_seconds).sum::<f64>() / group.len() as f64;
                curve.rounds.push(round);
                curve.mean_regret.push(mean);
                curve.stderr_regret.push(stderr);
                curve.mean_seconds.push(seconds);
            }
            curve
        })
        .collect()
}

/// Sample mean and standard error of the mean; the error is zero for a
/// single value.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Every feasible matching, each agent on at most one arm and at most
/// `capacity` agents per arm, in canonical order.
pub fn feasible_matchings(n_agents: usize, n_arms: usize, capacity: usize) -> Result<Vec<Matching>> {
    let assignments = ((n_arms + 1) as f64).powi(n_agents as i32);
    if assignments > ORACLE_ASSIGNMENT_CAP {
        return Err(Error::InstanceTooLarge {
            assignments,
            cap: ORACLE_ASSIGNMENT_CAP,
        });
    }
    let mut out = Vec::new();
    let mut slot = vec![n_arms; n_agents];
    loop {
        let mut sets = vec![Vec::new(); n_arms];
        for (agent, &arm) in slot.iter().enumerate() {
            if arm < n_arms {
                sets[arm].push(agent);
            }
        }
        if sets.iter().all(|s| s.len() <= capacity) {
            out.push(Matching::from_sets(sets));
        }
        // odometer over {0..n_arms} with n_arms meaning unassigned
        let mut i = 0;
        loop {
            if i == n_agents {
                out.sort();
                return Ok(out);
            }
            slot[i] = (slot[i] + 1) % (n_arms + 1);
            if slot[i] != n_arms {
                break;
            }
            i += 1;
        }
    }
}

/// Expected per-round regret of offering a uniformly random feasible
/// matching.
pub fn uniform_policy_regret(instance: &Instance) -> Result<f64> {
    let all = feasible_matchings(instance.n_agents, instance.n_arms, instance.capacity)?;
    let mut best = f64::NEG_INFINITY;
    let mut total = 0.0;
    for m in &all {
        let v = total_revenue(m, instance)?;
        best = best.max(v);
        total += v;
    }
    Ok(best - total / all.len() as f64)
}

/// Writes `results.csv`, `regret.svg` and `summary.json` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    emit_csv(&result.rows, &dir.join("results.csv"))?;
    emit_plot(&result.rows, &dir.join("regret.svg"))?;
    let summary = serde_json::json!({
        "curves": result.curves,
        "failures": result.failures,
    });
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

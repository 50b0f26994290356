//! End-to-end bandit policies: batched elimination (with and without a
//! known curvature constant, and with a greedy oracle) and the per-round
//! optimistic baseline.

mod baseline;
mod bsmb;
mod bsmb_plus;
mod warmup;

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::assortment::{exact_argmax, greedy_oracle, ActiveSets, Constraint, OptimizerStats};
use crate::design::{DesignConfig, UnitLabel};
use crate::environment::{generate_instance, Environment, Feedback};
use crate::error::{Error, Result};
use crate::estimation::{ArmDataset, ChoiceObservation, MleConfig, Outcome};
use crate::mnl::{Assortment, Matching};

pub use baseline::{baseline_width, run_baseline};
pub use bsmb::{run_bsmb, run_bsmb_alpha};
pub use bsmb_plus::{run_bsmb_plus, zeta};
pub use warmup::{round_robin_chunk, run_warmup, warmup_length, WarmupParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[serde(alias = "BSMB", alias = "b-smb")]
    Bsmb,
    #[serde(alias = "BSMBplus", alias = "b-smb+")]
    BsmbPlus,
    #[serde(alias = "Baseline", alias = "ofu-mnl+")]
    Baseline,
    #[serde(alias = "BSMBAlpha", alias = "b-smb-alpha")]
    BsmbAlpha,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Bsmb => "bsmb",
            Algorithm::BsmbPlus => "bsmb_plus",
            Algorithm::Baseline => "baseline",
            Algorithm::BsmbAlpha => "bsmb_alpha",
        }
    }

    pub fn is_batched(&self) -> bool {
        !matches!(self, Algorithm::Baseline)
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

/// Absolute constants left unspecified by the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Constants {
    /// Scale of the known-curvature width.
    pub c1: f64,
    /// Scale of the regularizer of the curvature-free variant.
    pub c2: f64,
    /// Scale of the curvature-free variant's first epoch.
    pub c3: f64,
    /// Scale of the warm-up length.
    pub c3_warm: f64,
    /// Baseline width, regularizer and step size.
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c3_warm: 1.0,
            c4: 1.0,
            c5: 1.0,
            c6: 1.0,
        }
    }
}

fn default_batches() -> usize {
    3
}

fn default_warmup_cap() -> f64 {
    0.1
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgoConfig {
    pub algorithm: Algorithm,
    /// Display name; defaults to the algorithm name.
    #[serde(default)]
    pub label: Option<String>,
    /// Horizon `T`; 0 inherits the experiment's horizon.
    #[serde(default)]
    pub horizon: usize,
    /// Batch budget `M`.
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default)]
    pub constants: Constants,
    /// Curvature constant for the known-curvature variants; `None` uses
    /// the worst-case lower bound for the capacity.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub mle: MleConfig,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default = "default_warmup_cap")]
    pub warmup_cap_fraction: f64,
    /// Multiplier on the curvature-free confidence radius.
    #[serde(default = "default_one")]
    pub zeta_scale: f64,
    /// Nominal approximation ratios of the greedy oracle on the UCB and LCB
    /// sides; `None` uses the measured ratio.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    /// Cap on assortment/pair design sizes.
    #[serde(default = "default_unit_cap")]
    pub design_unit_cap: usize,
}

fn default_unit_cap() -> usize {
    crate::design::DEFAULT_UNIT_CAP
}

impl AlgoConfig {
    pub fn new(algorithm: Algorithm, horizon: usize) -> Self {
        Self {
            algorithm,
            label: None,
            horizon,
            batches: default_batches(),
            constants: Constants::default(),
            kappa: None,
            mle: MleConfig::default(),
            design: DesignConfig::default(),
            warmup_cap_fraction: default_warmup_cap(),
            zeta_scale: 1.0,
            alpha: None,
            beta: None,
            design_unit_cap: default_unit_cap(),
        }
    }

    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.algorithm.name().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.batches < 1 {
            return Err(Error::Config("batch budget M must be >= 1".into()));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0) {
                return Err(Error::Config(format!("kappa {k} must be > 0")));
            }
        }
        if !(self.warmup_cap_fraction > 0.0 && self.warmup_cap_fraction <= 1.0) {
            return Err(Error::Config("warmup_cap_fraction must lie in (0, 1]".into()));
        }
        let c = &self.constants;
        for (name, v) in [
            ("c1", c.c1),
            ("c2", c.c2),
            ("c3", c.c3),
            ("c3_warm", c.c3_warm),
            ("c4", c.c4),
            ("c5", c.c5),
            ("c6", c.c6),
            ("zeta_scale", self.zeta_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("{name} must lie in [0, 1]")));
                }
            }
        }
        Ok(())
    }
}

/// Epoch lengths `T_1 = first`, `T_{tau+1} = eta sqrt(T_tau)`, each at
/// least 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub batches: usize,
    pub eta: f64,
    pub first: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScheduleVariant {
    /// First epoch of length `eta`.
    Bsmb,
    /// First epoch `max(c3 log T log^2(TKL), eta)`.
    BsmbPlus { c3: f64, capacity: usize },
}

/// `eta_T = (T / rK)^{1 / (2 (1 - 2^{-M}))}`.
pub fn batch_schedule(horizon: usize, rank: usize, arms: usize, batches: usize, variant: ScheduleVariant) -> BatchSchedule {
    let base = horizon as f64 / (rank * arms) as f64;
    let exponent = 1.0 / (2.0 * (1.0 - 0.5f64.powi(batches as i32)));
    let eta = base.powf(exponent);
    let first = match variant {
        ScheduleVariant::Bsmb => eta,
        ScheduleVariant::BsmbPlus { c3, capacity } => {
            let t = horizon as f64;
            let log_tkl = (t * arms as f64 * capacity as f64).ln();
            (c3 * t.ln() * log_tkl * log_tkl).max(eta)
        }
    };
    BatchSchedule { batches, eta, first }
}

impl BatchSchedule {
    /// Length of epoch `tau` (1-based).
    pub fn length(&self, tau: usize) -> f64 {
        let mut t = self.first.max(1.0);
        for _ in 1..tau {
            t = (self.eta * t.sqrt()).max(1.0);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub epoch: usize,
    pub matching: Matching,
    pub outcomes: Vec<Outcome>,
    /// Expected revenue of the offered matching.
    pub revenue: f64,
    pub regret: f64,
    /// Wall-clock seconds spent since the previous round ended.
    pub seconds: f64,
    /// Cumulative optimizer invocations at the end of the round.
    pub opt_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub start_round: usize,
    /// Real-valued epoch length `T_tau`.
    pub length: f64,
    pub theta_hat: Vec<Vec<f64>>,
    pub active: ActiveSets,
    /// Per arm, the supports and weights of the designs solved this epoch.
    pub designs: Vec<Vec<(UnitLabel, f64)>>,
    pub warmup_rounds: Vec<usize>,
    /// Whether any warm-up was shortened by the cap.
    pub warmup_capped: bool,
    pub opt_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: Algorithm,
    pub label: String,
    pub horizon: usize,
    pub oracle_value: f64,
    /// Multiplier of the optimum in approximate regret (1 for exact variants).
    pub gamma: f64,
    pub rounds: Vec<RoundRecord>,
    pub epochs: Vec<EpochRecord>,
    pub optimizer: OptimizerStats,
    pub total_seconds: f64,
}

impl RunTrace {
    pub fn epoch_count(&self) -> usize {
        self.epochs.len()
    }

    pub fn cumulative_regret(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.rounds
            .iter()
            .map(|r| {
                acc += r.regret;
                acc
            })
            .collect()
    }

    /// Cumulative regret against `gamma` times the optimum.
    pub fn cumulative_gamma_regret(&self, gamma: f64) -> Vec<f64> {
        let mut acc = 0.0;
        self.rounds
            .iter()
            .map(|r| {
                acc += gamma * self.oracle_value - r.revenue;
                acc
            })
            .collect()
    }

    pub fn total_regret(&self) -> f64 {
        self.rounds.iter().map(|r| r.regret).sum()
    }
}

/// Drives the environment round by round and records the trace.
pub(crate) struct Runner<'e> {
    pub env: &'e mut Environment,
    pub horizon: usize,
    pub epoch: usize,
    pub stats: OptimizerStats,
    rounds: Vec<RoundRecord>,
    started: Instant,
    last_mark: f64,
}

impl<'e> Runner<'e> {
    pub fn new(env: &'e mut Environment, horizon: usize) -> Self {
        Self {
            env,
            horizon,
            epoch: 0,
            stats: OptimizerStats::default(),
            rounds: Vec::with_capacity(horizon),
            started: Instant::now(),
            last_mark: 0.0,
        }
    }

    /// Rounds played so far.
    pub fn t(&self) -> usize {
        self.rounds.len()
    }

    pub fn done(&self) -> bool {
        self.rounds.len() >= self.horizon
    }

    /// Plays one round; `None` once the horizon is reached.
    pub fn offer(&mut self, matching: &Matching) -> Result<Option<Feedback>> {
        if self.done() {
            return Ok(None);
        }
        let feedback = self.env.step(matching)?;
        let revenue = self.env.revenue(matching);
        let now = self.started.elapsed().as_secs_f64();
        self.rounds.push(RoundRecord {
            round: self.rounds.len() + 1,
            epoch: self.epoch,
            matching: matching.clone(),
            outcomes: feedback.outcomes.clone(),
            revenue,
            regret: self.env.oracle.value - revenue,
            seconds: now - self.last_mark,
            opt_calls: self.stats.calls,
        });
        self.last_mark = now;
        Ok(Some(feedback))
    }

    /// Plays `count` rounds of the same matching, recording arm `focal`'s
    /// feedback into `data`.
    pub fn repeat(&mut self, matching: &Matching, count: usize, focal: Option<(usize, &mut ArmDataset)>) -> Result<usize> {
        let mut played = 0;
        let mut focal = focal;
        for _ in 0..count {
            let Some(feedback) = self.offer(matching)? else {
                break;
            };
            played += 1;
            if let Some((arm, data)) = focal.as_mut() {
                record(data, self.rounds.len(), *arm, matching.assortment(*arm), &feedback)?;
            }
        }
        Ok(played)
    }

    pub fn finish(self, algorithm: Algorithm, label: String, gamma: f64, epochs: Vec<EpochRecord>) -> RunTrace {
        RunTrace {
            algorithm,
            label,
            horizon: self.horizon,
            oracle_value: self.env.oracle.value,
            gamma,
            rounds: self.rounds,
            epochs,
            optimizer: self.stats,
            total_seconds: self.started.elapsed().as_secs_f64(),
        }
    }
}

pub(crate) fn record(data: &mut ArmDataset, round: usize, arm: usize, members: &[usize], feedback: &Feedback) -> Result<()> {
    if members.is_empty() {
        return Ok(());
    }
    let assortment = Assortment::new(arm, members.to_vec())?;
    data.push(ChoiceObservation::new(round, assortment, feedback.outcomes[arm])?)
}

pub(crate) fn ceil_rounds(x: f64) -> usize {
    // guard against 3.0000000000000004 becoming 4
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Smallest ratio of greedy to exact revenue over random markets of the
/// given shape.
pub fn measure_greedy_ratio(n_agents: usize, n_arms: usize, capacity: usize, instances: usize, seed: u64) -> Result<f64> {
    let mut worst: f64 = 1.0;
    for i in 0..instances {
        let inst = generate_instance(n_agents, n_arms, 3, capacity, seed.wrapping_add(i as u64))?;
        let index = |arm: usize, members: &[usize]| inst.arm_revenue(arm, members);
        let active = ActiveSets::full(n_agents, n_arms, capacity);
        let mut stats = OptimizerStats::default();
        let (_, exact) = exact_argmax(&index, &active, n_agents, &Constraint::None, &mut stats)?;
        let (_, greedy) = greedy_oracle(&index, &active, n_agents, &Constraint::None, &mut stats)?;
        if exact > 0.0 {
            worst = worst.min(greedy / exact);
        }
    }
    Ok(worst)
}

/// Greedy ratio measured once on 100 random markets with five agents,
/// three arms and capacity two.
pub fn default_greedy_ratio() -> f64 {
    static RATIO: OnceLock<f64> = OnceLock::new();
    *RATIO.get_or_init(|| measure_greedy_ratio(5, 3, 2, 100, 0x5eed).expect("small markets are enumerable"))
}

/// Runs the configured policy on a fresh copy of the environment.
pub fn run(env: &mut Environment, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate()?;
    match config.algorithm {
        Algorithm::Bsmb => run_bsmb(env, config),
        Algorithm::BsmbPlus => run_bsmb_plus(env, config),
        Algorithm::Baseline => run_baseline(env, config),
        Algorithm::BsmbAlpha => run_bsmb_alpha(env, config),
    }
}

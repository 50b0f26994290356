//! Synthetic markets, stochastic MNL feedback and the clairvoyant oracle.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assortment::{exact_argmax, ActiveSets, Constraint, OptimizerStats};
use crate::error::{Error, Result};
use crate::estimation::Outcome;
use crate::mnl::{probs_from_utilities, project_features, Instance, Matching, ProjectedFeatures, DEFAULT_RANK_TOL};

/// Largest `(K+1)^N` the oracle will enumerate.
pub const ORACLE_ASSIGNMENT_CAP: f64 = 1e8;

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

/// Features and arm parameters uniform on `[-1, 1]^d` then scaled to unit
/// norm; rewards uniform on `[0, 1]`.
pub fn generate_instance(n_agents: usize, n_arms: usize, dim: usize, capacity: usize, seed: u64) -> Result<Instance> {
    if n_agents == 0 || n_arms == 0 || dim == 0 {
        return Err(Error::InvalidArgument("N, K and d must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<DVector<f64>> = (0..n_agents).map(|_| unit_vector(&mut rng, dim)).collect();
    let features = DMatrix::from_columns(&columns);
    let theta = (0..n_arms).map(|_| unit_vector(&mut rng, dim)).collect();
    let rewards = DMatrix::from_fn(n_agents, n_arms, |_, _| rng.random_range(0.0..1.0));
    Instance::new(capacity, features, theta, rewards, seed)
}

/// Draws an MNL choice by inverting the CDF at a single uniform variate;
/// members are scanned in the given order, the outside option last.
pub fn sample_choice(members: &[usize], utilities: &[f64], rng: &mut ChaCha8Rng) -> Outcome {
    if members.is_empty() {
        return Outcome::Outside;
    }
    let p = probs_from_utilities(utilities);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&n, pn) in members.iter().zip(&p.members) {
        acc += pn;
        if u < acc {
            return Outcome::Agent(n);
        }
    }
    Outcome::Outside
}

/// What the market did in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub outcomes: Vec<Outcome>,
    /// `y_n`: 1 if agent `n` was accepted by the arm it was offered to.
    pub accepted: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub matching: Matching,
    pub value: f64,
}

/// Exhaustive search for the revenue-maximizing feasible matching.
pub fn oracle_matching(instance: &Instance) -> Result<OracleSolution> {
    let assignments = (instance.n_arms as f64 + 1.0).powi(instance.n_agents as i32);
    if assignments > ORACLE_ASSIGNMENT_CAP {
        return Err(Error::InstanceTooLarge {
            assignments,
            cap: ORACLE_ASSIGNMENT_CAP,
        });
    }
    let index = |arm: usize, members: &[usize]| instance.arm_revenue(arm, members);
    let active = ActiveSets::full(instance.n_agents, instance.n_arms, instance.capacity);
    let (matching, value) = exact_argmax(&index, &active, instance.n_agents, &Constraint::None, &mut OptimizerStats::default())?;
    Ok(OracleSolution { matching, value })
}

/// A running market: the instance, its projected features, the oracle and
/// one feedback stream per arm.
#[derive(Debug, Clone)]
pub struct Environment {
    pub instance: Instance,
    pub projected: ProjectedFeatures,
    /// True parameters expressed in the projected coordinates.
    pub theta_projected: Vec<DVector<f64>>,
    pub oracle: OracleSolution,
    utilities: DMatrix<f64>,
    streams: Vec<ChaCha8Rng>,
}

impl Environment {
    pub fn new(instance: Instance, feedback_seed: u64) -> Result<Self> {
        let projected = project_features(&instance.features, DEFAULT_RANK_TOL)?;
        let theta_projected = instance.theta.iter().map(|t| projected.project_parameter(t)).collect();
        let oracle = oracle_matching(&instance)?;
        let utilities = instance.utilities();
        let streams = (0..instance.n_arms)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(feedback_seed);
                rng.set_stream(k as u64);
                rng
            })
            .collect();
        Ok(Self {
            instance,
            projected,
            theta_projected,
            oracle,
            utilities,
            streams,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.instance.n_agents
    }

    pub fn n_arms(&self) -> usize {
        self.instance.n_arms
    }

    pub fn capacity(&self) -> usize {
        self.instance.capacity
    }

    pub fn rank(&self) -> usize {
        self.projected.rank
    }

    /// Projected features, `r x N`.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.projected.z
    }

    /// Offers a feasible matching and draws each arm's choice from its own
    /// stream.
    pub fn step(&mut self, matching: &Matching) -> Result<Feedback> {
        matching.validate(self.instance.n_agents, self.instance.n_arms, self.instance.capacity)?;
        let mut accepted = vec![0u8; self.instance.n_agents];
        let mut outcomes = Vec::with_capacity(self.instance.n_arms);
        for (arm, members) in matching.sets.iter().enumerate() {
            let utils: Vec<f64> = members.iter().map(|&n| self.utilities[(n, arm)]).collect();
            let outcome = sample_choice(members, &utils, &mut self.streams[arm]);
            if let Outcome::Agent(n) = outcome {
                accepted[n] = 1;
            }
            outcomes.push(outcome);
        }
        Ok(Feedback { outcomes, accepted })
    }

    /// Expected revenue of a matching under the true parameters.
    pub fn revenue(&self, matching: &Matching) -> f64 {
        matching
            .sets
            .iter()
            .enumerate()
            .map(|(k, s)| self.instance.arm_revenue(k, s))
            .sum()
    }

    pub fn regret(&self, matching: &Matching) -> f64 {
        self.oracle.value - self.revenue(matching)
    }
}

/// Serialized instance. Matrices are row-major nested arrays: `features` is
/// `d x N` (column `n` is agent `n`), `theta` holds one `d`-vector per arm,
/// `rewards` is `N x K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub n_agents: usize,
    pub n_arms: usize,
    pub dim: usize,
    /// Rank of the feature matrix; informational on input.
    #[serde(default)]
    pub rank: Option<usize>,
    pub capacity: usize,
    pub seed: u64,
    pub features: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub rewards: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl InstanceDoc {
    pub fn from_instance(instance: &Instance) -> Self {
        let rank = project_features(&instance.features, DEFAULT_RANK_TOL).ok().map(|p| p.rank);
        Self {
            n_agents: instance.n_agents,
            n_arms: instance.n_arms,
            dim: instance.dim,
            rank,
            capacity: instance.capacity,
            seed: instance.seed,
            features: rows_of(&instance.features),
            theta: instance.theta.iter().map(|t| t.iter().copied().collect()).collect(),
            rewards: rows_of(&instance.rewards),
        }
    }

    pub fn to_instance(&self) -> Result<Instance> {
        let features = matrix_from_rows(&self.features, self.dim, self.n_agents, "features")?;
        if self.theta.len() != self.n_arms || self.theta.iter().any(|t| t.len() != self.dim) {
            return Err(Error::Config(format!("theta must hold {} vectors of length {}", self.n_arms, self.dim)));
        }
        let theta = self.theta.iter().map(|t| DVector::from_vec(t.clone())).collect();
        let rewards = matrix_from_rows(&self.rewards, self.n_agents, self.n_arms, "rewards")?;
        Instance::new(self.capacity, features, theta, rewards, self.seed)
    }
}

pub fn instance_to_json(instance: &Instance) -> Result<String> {
    Ok(serde_json::to_string_pretty(&InstanceDoc::from_instance(instance))?)
}

pub fn instance_from_json(text: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    doc.to_instance()
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    instance_from_json(&std::fs::read_to_string(path)?)
}

//! Confidence indices on assortment revenue, exhaustive and greedy
//! optimization over feasible matchings, and active-set elimination.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::centered_feature;
use crate::mnl::{choice_probs, expected_revenue, probs_from_utilities, Matching};

/// Comparison slack for elimination tests.
pub const ELIMINATION_SLACK: f64 = 1e-12;

/// Per-arm set function to be maximized over matchings.
pub trait ArmIndex {
    fn value(&self, arm: usize, members: &[usize]) -> f64;
}

impl<F: Fn(usize, &[usize]) -> f64> ArmIndex for F {
    fn value(&self, arm: usize, members: &[usize]) -> f64 {
        self(arm, members)
    }
}

/// Agents still eligible for each arm.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSets {
    pub per_arm: Vec<Vec<usize>>,
    pub capacity: usize,
}

impl ActiveSets {
    pub fn full(n_agents: usize, n_arms: usize, capacity: usize) -> Self {
        Self {
            per_arm: vec![(0..n_agents).collect(); n_arms],
            capacity,
        }
    }

    pub fn new(mut per_arm: Vec<Vec<usize>>, capacity: usize) -> Self {
        for set in &mut per_arm {
            set.sort_unstable();
            set.dedup();
        }
        Self { per_arm, capacity }
    }

    pub fn n_arms(&self) -> usize {
        self.per_arm.len()
    }

    pub fn contains(&self, arm: usize, agent: usize) -> bool {
        self.per_arm[arm].binary_search(&agent).is_ok()
    }

    pub fn is_subset_of(&self, other: &ActiveSets) -> bool {
        self.per_arm.len() == other.per_arm.len()
            && self
                .per_arm
                .iter()
                .zip(&other.per_arm)
                .all(|(a, b)| a.iter().all(|n| b.binary_search(n).is_ok()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Constraint {
    None,
    /// Agent must be offered to the arm.
    Pin { agent: usize, arm: usize },
    /// The arm's assortment must equal the set exactly.
    Fix { members: Vec<usize>, arm: usize },
}

/// Instrumentation shared by the optimizers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerStats {
    pub calls: u64,
    /// Complete assignments visited by the exhaustive search.
    pub leaves: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
enum IndexWidth {
    Bsmb {
        beta: f64,
        /// `[arm][agent]`: `||z_n||_{V_k^{-1}}`.
        norms: Vec<Vec<f64>>,
    },
    BsmbPlus {
        zeta: f64,
        h_inv: Vec<DMatrix<f64>>,
        theta_prev: Vec<DVector<f64>>,
        /// `[arm][agent]`: `||z_n||^2_{H_k^{-1}}`.
        sq_norms: Vec<Vec<f64>>,
    },
    Baseline {
        gamma: f64,
        norms: Vec<Vec<f64>>,
    },
}

/// Estimated revenue plus the confidence width of one algorithm family.
#[derive(Debug, Clone)]
pub struct IndexParams<'a> {
    z: &'a DMatrix<f64>,
    rewards: &'a DMatrix<f64>,
    theta_hat: Vec<DVector<f64>>,
    width: IndexWidth,
}

fn invert_all(mats: &[DMatrix<f64>], what: &'static str) -> Result<Vec<DMatrix<f64>>> {
    mats.iter()
        .map(|m| {
            m.clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or(Error::Singular(what))
        })
        .collect()
}

fn weighted_norms(z: &DMatrix<f64>, inv: &[DMatrix<f64>]) -> Vec<Vec<f64>> {
    inv.iter()
        .map(|a| {
            z.column_iter()
                .map(|zn| zn.dot(&(a * zn)).max(0.0))
                .collect()
        })
        .collect()
}

impl<'a> IndexParams<'a> {
    fn check(z: &DMatrix<f64>, rewards: &DMatrix<f64>, theta_hat: &[DVector<f64>], mats: usize) -> Result<()> {
        if rewards.nrows() != z.ncols() || rewards.ncols() != theta_hat.len() || mats != theta_hat.len() {
            return Err(Error::InvalidArgument("index parameter shapes disagree".into()));
        }
        Ok(())
    }

    /// `sum r p(n|S, theta_hat) +- 2 beta max_n ||z_n||_{V^{-1}}`.
    pub fn bsmb(
        z: &'a DMatrix<f64>,
        rewards: &'a DMatrix<f64>,
        theta_hat: Vec<DVector<f64>>,
        v: &[DMatrix<f64>],
        beta: f64,
    ) -> Result<Self> {
        Self::check(z, rewards, &theta_hat, v.len())?;
        let inv = invert_all(v, "design matrix V")?;
        let norms = weighted_norms(z, &inv)
            .into_iter()
            .map(|arm| arm.into_iter().map(f64::sqrt).collect())
            .collect();
        Ok(Self {
            z,
            rewards,
            theta_hat,
            width: IndexWidth::Bsmb { beta, norms },
        })
    }

    /// Second-order width built from the local Gram matrices `H_k`.
    pub fn bsmb_plus(
        z: &'a DMatrix<f64>,
        rewards: &'a DMatrix<f64>,
        theta_hat: Vec<DVector<f64>>,
        theta_prev: Vec<DVector<f64>>,
        h: &[DMatrix<f64>],
        zeta: f64,
    ) -> Result<Self> {
        Self::check(z, rewards, &theta_hat, h.len())?;
        if theta_prev.len() != theta_hat.len() {
            return Err(Error::InvalidArgument("index parameter shapes disagree".into()));
        }
        let h_inv = invert_all(h, "local Gram matrix H")?;
        let sq_norms = weighted_norms(z, &h_inv);
        Ok(Self {
            z,
            rewards,
            theta_hat,
            width: IndexWidth::BsmbPlus {
                zeta,
                h_inv,
                theta_prev,
                sq_norms,
            },
        })
    }

    /// Revenue under optimistic utilities `z^T theta_hat +- gamma ||z||_{G^{-1}}`.
    pub fn baseline(
        z: &'a DMatrix<f64>,
        rewards: &'a DMatrix<f64>,
        theta_hat: Vec<DVector<f64>>,
        g: &[DMatrix<f64>],
        gamma: f64,
    ) -> Result<Self> {
        Self::check(z, rewards, &theta_hat, g.len())?;
        let inv = invert_all(g, "Gram matrix G")?;
        let norms = weighted_norms(z, &inv)
            .into_iter()
            .map(|arm| arm.into_iter().map(f64::sqrt).collect())
            .collect();
        Ok(Self {
            z,
            rewards,
            theta_hat,
            width: IndexWidth::Baseline { gamma, norms },
        })
    }

    fn reward_of(&self, agent: usize, arm: usize) -> f64 {
        self.rewards[(agent, arm)]
    }

    /// Plug-in revenue `sum r p(n | S, theta_hat)`.
    pub fn estimate(&self, arm: usize, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        let rewards: Vec<f64> = self.rewards.column(arm).iter().copied().collect();
        expected_revenue(members, &self.theta_hat[arm], self.z, &rewards)
    }

    /// Symmetric confidence width; zero for the baseline, whose index is
    /// not of the form estimate plus width.
    pub fn bonus(&self, arm: usize, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        match &self.width {
            IndexWidth::Bsmb { beta, norms } => {
                let max = members.iter().map(|&n| norms[arm][n]).fold(0.0, f64::max);
                2.0 * beta * max
            }
            IndexWidth::BsmbPlus {
                zeta,
                h_inv,
                theta_prev,
                sq_norms,
            } => {
                let max_sq = members.iter().map(|&n| sq_norms[arm][n]).fold(0.0, f64::max);
                let theta = &self.theta_hat[arm];
                let mut max_centered_sq: f64 = 0.0;
                let mut weighted = 0.0;
                let prev = choice_probs(members, &theta_prev[arm], self.z);
                for (&n, p_prev) in members.iter().zip(&prev.members) {
                    let tilde = centered_feature(n, members, theta, self.z);
                    let sq = tilde.dot(&(&h_inv[arm] * &tilde)).max(0.0);
                    max_centered_sq = max_centered_sq.max(sq);
                    weighted += p_prev * sq.sqrt();
                }
                6.5 * zeta * zeta * max_sq + 2.0 * zeta * zeta * max_centered_sq + zeta * weighted
            }
            IndexWidth::Baseline { .. } => 0.0,
        }
    }

    fn shifted_revenue(&self, arm: usize, members: &[usize], sign: f64) -> f64 {
        let IndexWidth::Baseline { gamma, norms } = &self.width else {
            unreachable!("only the baseline index shifts utilities");
        };
        let theta = &self.theta_hat[arm];
        let utils: Vec<f64> = members
            .iter()
            .map(|&n| self.z.column(n).dot(theta) + sign * gamma * norms[arm][n])
            .collect();
        let p = probs_from_utilities(&utils);
        members
            .iter()
            .zip(&p.members)
            .map(|(&n, q)| self.reward_of(n, arm) * q)
            .sum()
    }

    pub fn ucb(&self, arm: usize, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        match self.width {
            IndexWidth::Baseline { .. } => self.shifted_revenue(arm, members, 1.0),
            _ => self.estimate(arm, members) + self.bonus(arm, members),
        }
    }

    pub fn lcb(&self, arm: usize, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        match self.width {
            IndexWidth::Baseline { .. } => self.shifted_revenue(arm, members, -1.0),
            _ => self.estimate(arm, members) - self.bonus(arm, members),
        }
    }

    pub fn upper(&self) -> Upper<'_, 'a> {
        Upper(self)
    }

    pub fn lower(&self) -> Lower<'_, 'a> {
        Lower(self)
    }
}

/// The UCB side of an [`IndexParams`] as an [`ArmIndex`].
pub struct Upper<'p, 'a>(&'p IndexParams<'a>);
/// The LCB side of an [`IndexParams`] as an [`ArmIndex`].
pub struct Lower<'p, 'a>(&'p IndexParams<'a>);

impl ArmIndex for Upper<'_, '_> {
    fn value(&self, arm: usize, members: &[usize]) -> f64 {
        self.0.ucb(arm, members)
    }
}

impl ArmIndex for Lower<'_, '_> {
    fn value(&self, arm: usize, members: &[usize]) -> f64 {
        self.0.lcb(arm, members)
    }
}

const DENSE_LIMIT: usize = 16;
const MAX_AGENTS: usize = 64;

#[derive(Debug, Clone)]
enum SubsetValues {
    Dense(Vec<f64>),
    Sparse(HashMap<u64, f64>),
}

impl SubsetValues {
    fn get(&self, mask: u64) -> f64 {
        match self {
            SubsetValues::Dense(v) => v[mask as usize],
            SubsetValues::Sparse(m) => m[&mask],
        }
    }
}

fn mask_members(mask: u64) -> Vec<usize> {
    (0..64).filter(|i| mask >> i & 1 == 1).collect()
}

/// Per-arm index values of every admissible assortment, precomputed once so
/// many constrained searches can share them.
#[derive(Debug, Clone)]
pub struct IndexTable {
    n_agents: usize,
    active: ActiveSets,
    values: Vec<SubsetValues>,
}

impl IndexTable {
    pub fn build(index: &dyn ArmIndex, active: &ActiveSets, n_agents: usize) -> Result<Self> {
        if n_agents > MAX_AGENTS {
            return Err(Error::InstanceTooLarge {
                assignments: (active.n_arms() as f64 + 1.0).powi(n_agents as i32),
                cap: f64::INFINITY,
            });
        }
        let mut values = Vec::with_capacity(active.n_arms());
        for (arm, set) in active.per_arm.iter().enumerate() {
            if let Some(&bad) = set.iter().find(|&&n| n >= n_agents) {
                return Err(Error::InvalidArgument(format!("active agent {bad} out of range")));
            }
            let mut subsets: Vec<u64> = vec![0];
            for &n in set {
                let bit = 1u64 << n;
                let extended: Vec<u64> = subsets
                    .iter()
                    .filter(|m| (m.count_ones() as usize) < active.capacity)
                    .map(|m| m | bit)
                    .collect();
                subsets.extend(extended);
            }
            let table = if n_agents <= DENSE_LIMIT {
                let mut dense = vec![f64::NAN; 1 << n_agents];
                for m in subsets {
                    dense[m as usize] = index.value(arm, &mask_members(m));
                }
                SubsetValues::Dense(dense)
            } else {
                SubsetValues::Sparse(
                    subsets
                        .into_iter()
                        .map(|m| (m, index.value(arm, &mask_members(m))))
                        .collect(),
                )
            };
            values.push(table);
        }
        Ok(Self {
            n_agents,
            active: active.clone(),
            values,
        })
    }

    pub fn value(&self, arm: usize, members: &[usize]) -> f64 {
        self.values[arm].get(members.iter().fold(0u64, |m, &n| m | 1 << n))
    }

    /// Exhaustive search over all assignments of agents to an arm or to
    /// nobody, pruned by capacity, active sets and the constraint.
    pub fn argmax(&self, constraint: &Constraint, stats: &mut OptimizerStats) -> Result<(Matching, f64)> {
        let started = Instant::now();
        let k = self.active.n_arms();
        let cap = self.active.capacity;
        // allowed[n] = bitmask over arms 0..k, bit k = unassigned
        let mut allowed: Vec<u64> = (0..self.n_agents)
            .map(|n| {
                let mut bits = 1u64 << k;
                for arm in 0..k {
                    if self.active.contains(arm, n) {
                        bits |= 1 << arm;
                    }
                }
                bits
            })
            .collect();
        match constraint {
            Constraint::None => {}
            Constraint::Pin { agent, arm } => {
                if *arm >= k || *agent >= self.n_agents || !self.active.contains(*arm, *agent) {
                    return Err(Error::EmptyFeasibleSet(format!(
                        "agent {agent} is not active for arm {arm}"
                    )));
                }
                allowed[*agent] = 1 << arm;
            }
            Constraint::Fix { members, arm } => {
                if *arm >= k
                    || members.is_empty()
                    || members.len() > cap
                    || members.iter().any(|&n| n >= self.n_agents || !self.active.contains(*arm, n))
                {
                    return Err(Error::EmptyFeasibleSet(format!(
                        "assortment {members:?} cannot be fixed on arm {arm}"
                    )));
                }
                for (n, bits) in allowed.iter_mut().enumerate() {
                    if members.contains(&n) {
                        *bits = 1 << arm;
                    } else {
                        *bits &= !(1u64 << arm);
                    }
                }
            }
        }

        let mut search = Search {
            table: self,
            allowed: &allowed,
            n_arms: k,
            capacity: cap,
            masks: vec![0; k],
            counts: vec![0; k],
            best: None,
            leaves: 0,
        };
        search.descend(0);
        stats.calls += 1;
        stats.leaves += search.leaves;
        stats.seconds += started.elapsed().as_secs_f64();
        let Some((value, masks)) = search.best else {
            return Err(Error::EmptyFeasibleSet(format!("{constraint:?}")));
        };
        Ok((Matching::from_sets(masks.into_iter().map(mask_members).collect()), value))
    }
}

struct Search<'t> {
    table: &'t IndexTable,
    allowed: &'t [u64],
    n_arms: usize,
    capacity: usize,
    masks: Vec<u64>,
    counts: Vec<usize>,
    best: Option<(f64, Vec<u64>)>,
    leaves: u64,
}

fn canonical_less(a: &[u64], b: &[u64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        let xs = mask_members(*x);
        let ys = mask_members(*y);
        if xs != ys {
            return xs < ys;
        }
    }
    false
}

impl Search<'_> {
    fn descend(&mut self, agent: usize) {
        if agent == self.allowed.len() {
            self.leaves += 1;
            let value: f64 = (0..self.n_arms).map(|k| self.table.values[k].get(self.masks[k])).sum();
            let better = match &self.best {
                None => true,
                Some((best, masks)) => value > *best || (value == *best && canonical_less(&self.masks, masks)),
            };
            if better {
                self.best = Some((value, self.masks.clone()));
            }
            return;
        }
        let allowed = self.allowed[agent];
        if allowed >> self.n_arms & 1 == 1 {
            self.descend(agent + 1);
        }
        for arm in 0..self.n_arms {
            if allowed >> arm & 1 == 1 && self.counts[arm] < self.capacity {
                self.masks[arm] |= 1 << agent;
                self.counts[arm] += 1;
                self.descend(agent + 1);
                self.masks[arm] &= !(1u64 << agent);
                self.counts[arm] -= 1;
            }
        }
    }
}

/// Maximizes `sum_k index(S_k, k)` over feasible matchings by exhaustive
/// search.
pub fn exact_argmax(
    index: &dyn ArmIndex,
    active: &ActiveSets,
    n_agents: usize,
    constraint: &Constraint,
    stats: &mut OptimizerStats,
) -> Result<(Matching, f64)> {
    let started = Instant::now();
    let table = IndexTable::build(index, active, n_agents)?;
    let build_seconds = started.elapsed().as_secs_f64();
    let out = table.argmax(constraint, stats);
    stats.seconds += build_seconds;
    out
}

fn matching_value(index: &dyn ArmIndex, m: &Matching) -> f64 {
    m.sets.iter().enumerate().map(|(k, s)| index.value(k, s)).sum()
}

/// Greedy insertion: starting from the constraint's mandatory part, add the
/// feasible (agent, arm) pair with the largest positive gain until none
/// remains.
pub fn greedy_oracle(
    index: &dyn ArmIndex,
    active: &ActiveSets,
    n_agents: usize,
    constraint: &Constraint,
    stats: &mut OptimizerStats,
) -> Result<(Matching, f64)> {
    let started = Instant::now();
    let k = active.n_arms();
    let mut current = Matching::empty(k);
    let mut frozen = vec![false; k];
    match constraint {
        Constraint::None => {}
        Constraint::Pin { agent, arm } => {
            if *arm >= k || !active.contains(*arm, *agent) {
                return Err(Error::EmptyFeasibleSet(format!(
                    "agent {agent} is not active for arm {arm}"
                )));
            }
            current.sets[*arm].push(*agent);
        }
        Constraint::Fix { members, arm } => {
            if *arm >= k
                || members.is_empty()
                || members.len() > active.capacity
                || members.iter().any(|&n| !active.contains(*arm, n))
            {
                return Err(Error::EmptyFeasibleSet(format!(
                    "assortment {members:?} cannot be fixed on arm {arm}"
                )));
            }
            let mut sorted = members.clone();
            sorted.sort_unstable();
            current.sets[*arm] = sorted;
            frozen[*arm] = true;
        }
    }
    let mut arm_values: Vec<f64> = (0..k).map(|a| index.value(a, &current.sets[a])).collect();
    loop {
        let mut best: Option<(f64, Matching, usize, f64)> = None;
        for agent in 0..n_agents {
            if current.arm_of(agent).is_some() {
                continue;
            }
            for arm in 0..k {
                if frozen[arm] || current.sets[arm].len() >= active.capacity || !active.contains(arm, agent) {
                    continue;
                }
                let mut set = current.sets[arm].clone();
                set.push(agent);
                set.sort_unstable();
                let new_value = index.value(arm, &set);
                let gain = new_value - arm_values[arm];
                if gain <= 0.0 {
                    continue;
                }
                let mut candidate = current.clone();
                candidate.sets[arm] = set;
                let better = match &best {
                    None => true,
                    Some((g, m, _, _)) => gain > *g || (gain == *g && candidate < *m),
                };
                if better {
                    best = Some((gain, candidate, arm, new_value));
                }
            }
        }
        match best {
            Some((_, m, arm, v)) => {
                current = m;
                arm_values[arm] = v;
            }
            None => break,
        }
    }
    stats.calls += 1;
    stats.seconds += started.elapsed().as_secs_f64();
    let value = matching_value(index, &current);
    Ok((current, value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EliminationMode {
    Bsmb,
    BsmbPlus,
    /// Greedy on both sides; an agent survives when its pinned UCB reaches
    /// `alpha` times the greedy LCB value.
    AlphaOracle { alpha: f64 },
}

/// Result of one elimination pass; the constructed matchings are reused for
/// exploration.
#[derive(Debug, Clone)]
pub struct EliminationOutcome {
    pub active: ActiveSets,
    pub lcb_best: (Matching, f64),
    /// Best UCB matching with agent `n` pinned to arm `k`, keyed `(n, k)`.
    pub pinned: BTreeMap<(usize, usize), (Matching, f64)>,
    /// Best UCB matching with arm `k` fixed to `J`, keyed `(J, k)`.
    pub fixed: BTreeMap<(Vec<usize>, usize), (Matching, f64)>,
}

/// Removes agents whose best achievable UCB with them on an arm cannot
/// reach the best LCB over the current feasible set.
pub fn eliminate(
    ucb: &dyn ArmIndex,
    lcb: &dyn ArmIndex,
    active_prev: &ActiveSets,
    n_agents: usize,
    mode: EliminationMode,
    stats: &mut OptimizerStats,
) -> Result<EliminationOutcome> {
    construct(ucb, lcb, active_prev, n_agents, mode, true, stats)
}

/// The constructions of [`eliminate`] with every agent kept, for epochs
/// that have no data to eliminate with.
pub fn construct_only(
    ucb: &dyn ArmIndex,
    lcb: &dyn ArmIndex,
    active_prev: &ActiveSets,
    n_agents: usize,
    mode: EliminationMode,
    stats: &mut OptimizerStats,
) -> Result<EliminationOutcome> {
    construct(ucb, lcb, active_prev, n_agents, mode, false, stats)
}

fn construct(
    ucb: &dyn ArmIndex,
    lcb: &dyn ArmIndex,
    active_prev: &ActiveSets,
    n_agents: usize,
    mode: EliminationMode,
    prune: bool,
    stats: &mut OptimizerStats,
) -> Result<EliminationOutcome> {
    let k = active_prev.n_arms();
    let mut pinned = BTreeMap::new();
    let mut fixed = BTreeMap::new();

    let (lcb_best, threshold) = match mode {
        EliminationMode::AlphaOracle { alpha } => {
            let best = greedy_oracle(lcb, active_prev, n_agents, &Constraint::None, stats)?;
            let t = alpha * best.1;
            (best, t)
        }
        _ => {
            let best = exact_argmax(lcb, active_prev, n_agents, &Constraint::None, stats)?;
            let t = best.1;
            (best, t)
        }
    };
    let threshold = if prune { threshold } else { f64::NEG_INFINITY };

    let table = match mode {
        EliminationMode::AlphaOracle { .. } => None,
        _ => {
            let started = Instant::now();
            let t = IndexTable::build(ucb, active_prev, n_agents)?;
            stats.seconds += started.elapsed().as_secs_f64();
            Some(t)
        }
    };
    let solve = |c: &Constraint, stats: &mut OptimizerStats| -> Result<(Matching, f64)> {
        match &table {
            Some(t) => t.argmax(c, stats),
            None => greedy_oracle(ucb, active_prev, n_agents, c, stats),
        }
    };

    let mut survivors = vec![Vec::new(); k];
    for arm in 0..k {
        for &agent in &active_prev.per_arm[arm] {
            let found = solve(&Constraint::Pin { agent, arm }, stats)?;
            if found.1 >= threshold - ELIMINATION_SLACK {
                survivors[arm].push(agent);
            }
            pinned.insert((agent, arm), found);
        }
    }

    if mode == EliminationMode::BsmbPlus {
        for (arm, agents) in survivors.iter_mut().enumerate() {
            let mut keep = vec![false; n_agents];
            for set in crate::design::subsets_up_to(agents, active_prev.capacity) {
                let found = solve(
                    &Constraint::Fix {
                        members: set.clone(),
                        arm,
                    },
                    stats,
                )?;
                if found.1 >= threshold - ELIMINATION_SLACK {
                    for &n in &set {
                        keep[n] = true;
                    }
                }
                fixed.insert((set, arm), found);
            }
            agents.retain(|&n| keep[n]);
        }
    }

    Ok(EliminationOutcome {
        active: ActiveSets::new(survivors, active_prev.capacity),
        lcb_best,
        pinned,
        fixed,
    })
}

//! Batched elimination with a known curvature constant, with exact or
//! greedy combinatorial optimization.

use nalgebra::DVector;

use crate::assortment::{construct_only, eliminate, ActiveSets, EliminationMode, IndexParams};
use crate::design::{build_agent_design, solve_g_optimal, UnitLabel};
use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::estimation::{design_matrix, fit_mle_from, ArmDataset};
use crate::mnl::kappa_lower_bound;

use super::warmup::run_warmup_on;
use super::{
    batch_schedule, ceil_rounds, default_greedy_ratio, AlgoConfig, Algorithm, EpochRecord, RunTrace, Runner,
    ScheduleVariant, WarmupParams,
};

pub fn run_bsmb(env: &mut Environment, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate()?;
    run_known_curvature(env, config, EliminationMode::Bsmb, 1.0)
}

/// Greedy oracle on both sides; approximate regret is measured against
/// `alpha * beta` times the optimum.
pub fn run_bsmb_alpha(env: &mut Environment, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate()?;
    let alpha = config.alpha.unwrap_or_else(default_greedy_ratio);
    let beta = config.beta.unwrap_or_else(default_greedy_ratio);
    run_known_curvature(env, config, EliminationMode::AlphaOracle { alpha }, alpha * beta)
}

fn run_known_curvature(env: &mut Environment, config: &AlgoConfig, mode: EliminationMode, gamma: f64) -> Result<RunTrace> {
    let (n, k, l, r) = (env.n_agents(), env.n_arms(), env.capacity(), env.rank());
    let horizon = config.horizon;
    let z = env.z().clone();
    let rewards = env.instance.rewards.clone();
    let kappa = match config.kappa {
        Some(kappa) => kappa,
        None => kappa_lower_bound(l)?,
    };
    let width = config.constants.c1 / kappa * ((horizon * n * k) as f64).ln().max(0.0).sqrt();
    let schedule = batch_schedule(horizon, r, k, config.batches, ScheduleVariant::Bsmb);
    let lambda_min = (&z * z.transpose()).symmetric_eigenvalues().min();
    if !(lambda_min > 0.0) {
        return Err(Error::Singular("agent feature second-moment matrix"));
    }
    let warm = WarmupParams {
        n_agents: n,
        n_arms: k,
        capacity: l,
        rank: r,
        horizon,
        kappa,
        c3_warm: config.constants.c3_warm,
        lambda_min,
        cap_fraction: config.warmup_cap_fraction,
    };

    let mut runner = Runner::new(env, horizon);
    let mut active = ActiveSets::full(n, k, l);
    let mut data: Vec<ArmDataset> = (0..k).map(ArmDataset::new).collect();
    let mut theta: Vec<DVector<f64>> = vec![DVector::zeros(r); k];
    let mut epochs = Vec::new();
    let mut tau = 0;

    while !runner.done() {
        tau += 1;
        runner.epoch = tau;
        let start_round = runner.t() + 1;
        let calls_before = runner.stats.calls;
        let t_tau = schedule.length(tau);

        let mut gram = Vec::with_capacity(k);
        for arm in 0..k {
            theta[arm] = fit_mle_from(&data[arm], &z, &config.mle, &theta[arm])?;
            gram.push(design_matrix(&data[arm], &z));
        }
        let params = IndexParams::bsmb(&z, &rewards, theta.clone(), &gram, width)?;
        let step = if data.iter().any(|d| !d.is_empty()) { eliminate } else { construct_only };
        let out = step(&params.upper(), &params.lower(), &active, n, mode, &mut runner.stats)?;

        let mut next: Vec<ArmDataset> = (0..k).map(ArmDataset::new).collect();
        let mut designs = Vec::with_capacity(k);
        let mut warm_rounds = Vec::with_capacity(k);
        let mut capped_any = false;
        for arm in 0..k {
            let agents = &out.active.per_arm[arm];
            if agents.is_empty() {
                // keep the epoch's length so the batch bound still holds
                runner.repeat(&out.lcb_best.0, ceil_rounds(r as f64 * t_tau), None)?;
                designs.push(Vec::new());
                warm_rounds.push(0);
                continue;
            }
            let design = solve_g_optimal(&build_agent_design(agents, &z, t_tau, 1.0)?, &config.design)?;
            let (played, capped) = run_warmup_on(&mut runner, arm, &warm, &mut next[arm])?;
            warm_rounds.push(played);
            capped_any |= capped;
            for (label, weight) in design.iter() {
                let UnitLabel::Agent(agent) = label else {
                    unreachable!("agent designs only hold agents");
                };
                let matching = &out.pinned[&(*agent, arm)].0;
                runner.repeat(matching, ceil_rounds(r as f64 * weight * t_tau), Some((arm, &mut next[arm])))?;
            }
            designs.push(design.iter().map(|(l, w)| (l.clone(), w)).collect());
        }

        epochs.push(EpochRecord {
            epoch: tau,
            start_round,
            length: t_tau,
            theta_hat: theta.iter().map(|t| t.iter().copied().collect()).collect(),
            active: out.active.clone(),
            designs,
            warmup_rounds: warm_rounds,
            warmup_capped: capped_any,
            opt_calls: runner.stats.calls - calls_before,
        });
        active = out.active;
        data = next;
    }

    let algorithm = match mode {
        EliminationMode::AlphaOracle { .. } => Algorithm::BsmbAlpha,
        _ => Algorithm::Bsmb,
    };
    Ok(runner.finish(algorithm, config.label(), gamma, epochs))
}

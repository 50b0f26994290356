//! Curvature-free batched elimination with localized Gram matrices and
//! three exploration designs per arm.

use nalgebra::{DMatrix, DVector};

use crate::assortment::{construct_only, eliminate, ActiveSets, EliminationMode, IndexParams};
use crate::design::{build_agent_design, build_assortment_design, build_pair_design, solve_g_optimal, UnitLabel};
use crate::environment::Environment;
use crate::error::Result;
use crate::estimation::{fit_mle_from, local_gram, ArmDataset, MleConfig};
use crate::mnl::Matching;

use super::{batch_schedule, ceil_rounds, AlgoConfig, Algorithm, EpochRecord, RunTrace, Runner, ScheduleVariant};

/// Width scale at epoch start `t_start` (1-based):
/// `sqrt(lam) / 2 + (2r / sqrt(lam)) log(4KT (1 + 2 (t_start - 1) L / (r lam)))`.
pub fn zeta(lam: f64, rank: usize, arms: usize, horizon: usize, capacity: usize, t_start: usize) -> f64 {
    let r = rank as f64;
    let growth = 1.0 + 2.0 * (t_start.saturating_sub(1)) as f64 * capacity as f64 / (r * lam);
    let log = (4.0 * arms as f64 * horizon as f64 * growth).ln();
    0.5 * lam.sqrt() + 2.0 * r / lam.sqrt() * log
}

pub fn run_bsmb_plus(env: &mut Environment, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate()?;
    let (n, k, l, r) = (env.n_agents(), env.n_arms(), env.capacity(), env.rank());
    let horizon = config.horizon;
    let z = env.z().clone();
    let rewards = env.instance.rewards.clone();
    let lam = config.constants.c2 * r as f64 * (k as f64).ln().max(1.0);
    let schedule = batch_schedule(
        horizon,
        r,
        k,
        config.batches,
        ScheduleVariant::BsmbPlus {
            c3: config.constants.c3,
            capacity: l,
        },
    );
    let mle = MleConfig {
        norm_cap: Some(config.mle.norm_cap.unwrap_or(1.0)),
        ..config.mle
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
        let width = config.zeta_scale * zeta(lam, r, k, horizon, l, start_round);

        let theta_prev = theta.clone();
        let mut gram: Vec<DMatrix<f64>> = Vec::with_capacity(k);
        for arm in 0..k {
            theta[arm] = fit_mle_from(&data[arm], &z, &mle, &theta_prev[arm])?;
            gram.push(local_gram(&theta[arm], &data[arm], &z, lam));
        }
        let params = IndexParams::bsmb_plus(&z, &rewards, theta.clone(), theta_prev, &gram, width)?;
        let step = if data.iter().any(|d| !d.is_empty()) { eliminate } else { construct_only };
        let out = step(
            &params.upper(),
            &params.lower(),
            &active,
            n,
            EliminationMode::BsmbPlus,
            &mut runner.stats,
        )?;

        let mut next: Vec<ArmDataset> = (0..k).map(ArmDataset::new).collect();
        let mut designs = Vec::with_capacity(k);
        for arm in 0..k {
            let agents = &out.active.per_arm[arm];
            if agents.is_empty() {
                runner.repeat(&out.lcb_best.0, ceil_rounds(r as f64 * t_tau), None)?;
                designs.push(Vec::new());
                continue;
            }
            let agent_design = solve_g_optimal(&build_agent_design(agents, &z, t_tau, lam)?, &config.design)?;
            let set_design = solve_g_optimal(
                &build_assortment_design(agents, &theta[arm], &z, l, t_tau, lam, config.design_unit_cap)?,
                &config.design,
            )?;
            let pair_design = solve_g_optimal(
                &build_pair_design(agents, &theta[arm], &z, l, t_tau, lam, config.design_unit_cap)?,
                &config.design,
            )?;

            let mut recorded = Vec::new();
            for design in [&agent_design, &set_design, &pair_design] {
                for (label, weight) in design.iter() {
                    let matching = matching_for(label, arm, &out)?;
                    let rounds = ceil_rounds(r as f64 * weight * t_tau);
                    runner.repeat(matching, rounds, Some((arm, &mut next[arm])))?;
                    recorded.push((label.clone(), weight));
                }
            }
            designs.push(recorded);
        }

        epochs.push(EpochRecord {
            epoch: tau,
            start_round,
            length: t_tau,
            theta_hat: theta.iter().map(|t| t.iter().copied().collect()).collect(),
            active: out.active.clone(),
            designs,
            warmup_rounds: vec![0; k],
            warmup_capped: false,
            opt_calls: runner.stats.calls - calls_before,
        });
        active = out.active;
        data = next;
    }

    Ok(runner.finish(Algorithm::BsmbPlus, config.label(), 1.0, epochs))
}

fn matching_for<'o>(label: &UnitLabel, arm: usize, out: &'o crate::assortment::EliminationOutcome) -> Result<&'o Matching> {
    let found = match label {
        UnitLabel::Agent(agent) => out.pinned.get(&(*agent, arm)),
        UnitLabel::Assortment(set) | UnitLabel::Pair(_, set) => out.fixed.get(&(set.clone(), arm)),
    };
    found.map(|(m, _)| m).ok_or_else(|| {
        crate::error::Error::InvalidArgument(format!("no constructed matching for design unit {label:?} on arm {arm}"))
    })
}

//! Per-round optimistic baseline: one mirror-descent step per arm and an
//! exact combinatorial argmax every round.

use nalgebra::{DMatrix, DVector};

use crate::assortment::{exact_argmax, ActiveSets, Constraint, IndexParams};
use crate::environment::Environment;
use crate::error::Result;
use crate::estimation::{omd_update, round_gradient, round_gram, ChoiceObservation};
use crate::mnl::Assortment;

use super::{AlgoConfig, Algorithm, RunTrace, Runner};

/// `c4 max(log L, 1) sqrt(d log t log(KT))`.
pub fn baseline_width(c4: f64, capacity: usize, dim: usize, t: usize, arms: usize, horizon: usize) -> f64 {
    let log_l = (capacity as f64).ln().max(1.0);
    let inner = dim as f64 * (t.max(1) as f64).ln() * ((arms * horizon) as f64).ln().max(0.0);
    c4 * log_l * inner.max(0.0).sqrt()
}

pub fn run_baseline(env: &mut Environment, config: &AlgoConfig) -> Result<RunTrace> {
    config.validate()?;
    let (n, k, l, r) = (env.n_agents(), env.n_arms(), env.capacity(), env.rank());
    let horizon = config.horizon;
    let z = env.z().clone();
    let rewards = env.instance.rewards.clone();
    let log_k = (k as f64).ln().max(1.0);
    let lam = config.constants.c5 * r as f64 * log_k;
    let step = config.constants.c6 * log_k;
    let reg = DMatrix::<f64>::identity(r, r) * lam;
    let active = ActiveSets::full(n, k, l);

    let mut runner = Runner::new(env, horizon);
    runner.epoch = 1;
    let mut theta: Vec<DVector<f64>> = vec![DVector::zeros(r); k];
    let mut sum_gram: Vec<DMatrix<f64>> = vec![DMatrix::zeros(r, r); k];
    let mut last: Vec<Option<ChoiceObservation>> = vec![None; k];

    while !runner.done() {
        let t = runner.t() + 1;
        for arm in 0..k {
            let Some(obs) = last[arm].take() else {
                continue;
            };
            let members = &obs.assortment.members;
            let gram_tilde = &reg + &sum_gram[arm] + round_gram(&theta[arm], members, &z) * step;
            let grad = round_gradient(&theta[arm], &obs, &z);
            theta[arm] = omd_update(&theta[arm], &grad, &gram_tilde, step, 1.0)?;
            sum_gram[arm] += round_gram(&theta[arm], members, &z);
        }
        let gram: Vec<DMatrix<f64>> = sum_gram.iter().map(|g| &reg + g).collect();
        let width = baseline_width(config.constants.c4, l, r, t, k, horizon);
        let params = IndexParams::baseline(&z, &rewards, theta.clone(), &gram, width)?;
        let (matching, _) = exact_argmax(&params.upper(), &active, n, &Constraint::None, &mut runner.stats)?;
        let Some(feedback) = runner.offer(&matching)? else {
            break;
        };
        for arm in 0..k {
            let members = matching.assortment(arm);
            if members.is_empty() {
                continue;
            }
            let assortment = Assortment::new(arm, members.to_vec())?;
            last[arm] = Some(ChoiceObservation::new(t, assortment, feedback.outcomes[arm])?);
        }
    }

    Ok(runner.finish(Algorithm::Baseline, config.label(), 1.0, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn width_vanishes_at_first_round() {
        assert_eq!(baseline_width(1.0, 2, 3, 1, 2, 100), 0.0);
    }

    #[test]
    fn width_uses_floored_capacity_log() {
        let a = baseline_width(1.0, 1, 3, 10, 2, 100);
        let b = baseline_width(1.0, 2, 3, 10, 2, 100);
        assert_eq!(a, b);
        let c = baseline_width(1.0, 5, 3, 10, 2, 100);
        assert!((c / a - 5f64.ln()).abs() < 1e-12);
    }
}

//! Quick invariant checks run by the `selftest` subcommand.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{feasible_matchings, parse_csv, write_csv, SummaryRow};
use crate::algorithms::{run, AlgoConfig, Algorithm};
use crate::assortment::{exact_argmax, ActiveSets, Constraint, OptimizerStats};
use crate::design::{solve_g_optimal, DesignConfig, DesignProblem, DesignUnit, DesignWeights, UnitLabel};
use crate::environment::{generate_instance, Environment};
use crate::error::{Error, Result};
use crate::estimation::{fit_mle, nll_gradient, ArmDataset, ChoiceObservation, MleConfig, Outcome};
use crate::mnl::{choice_probs, total_revenue, Assortment};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<String>) -> Check {
    match f() {
        Ok(detail) => Check {
            name,
            passed: true,
            detail,
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn fail(msg: String) -> Error {
    Error::InvalidArgument(msg)
}

pub fn run_selftest() -> Vec<Check> {
    vec![
        check("choice probabilities sum to one", probabilities),
        check("exact optimizer matches enumeration", optimizer),
        check("design certificate", design),
        check("regularized MLE stationarity", mle),
        check("epoch count within batch budget", epochs),
        check("CSV round trip", csv_round_trip),
    ]
}

fn probabilities() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let z = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let theta = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
        let p = choice_probs(&[0, 2, 4], &theta, &z);
        let total = p.total();
        if (total - 1.0).abs() > 1e-12 || p.members.iter().any(|&q| q <= 0.0) {
            return Err(fail(format!("probabilities sum to {total}")));
        }
    }
    Ok("200 random sets".into())
}

fn optimizer() -> Result<String> {
    for seed in 0..20 {
        let inst = generate_instance(4, 2, 3, 2, seed)?;
        let best = feasible_matchings(4, 2, 2)?
            .iter()
            .map(|m| total_revenue(m, &inst))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max);
        let index = |arm: usize, members: &[usize]| inst.arm_revenue(arm, members);
        let (_, value) = exact_argmax(
            &index,
            &ActiveSets::full(4, 2, 2),
            4,
            &Constraint::None,
            &mut OptimizerStats::default(),
        )?;
        if (value - best).abs() > 1e-12 {
            return Err(fail(format!("seed {seed}: optimizer {value} vs enumeration {best}")));
        }
    }
    Ok("20 instances".into())
}

fn design() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let r = 4;
        let units = (0..15)
            .map(|i| {
                DesignUnit::single(
                    UnitLabel::Agent(i),
                    DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        let problem = DesignProblem::new(units, 1e-9, r)?;
        let w = solve_g_optimal(&problem, &DesignConfig::default())?;
        worst = worst.max(w.max_leverage / r as f64);
    }
    Ok(format!("worst leverage / r = {worst:.4}"))
}

fn mle() -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
    let mut data = ArmDataset::new(0);
    for round in 1..=200 {
        let members = vec![round % 4, (round + 1) % 4];
        let outcome = match rng.random_range(0..3) {
            0 => Outcome::Outside,
            i => Outcome::Agent(members[i - 1]),
        };
        data.push(ChoiceObservation::new(round, Assortment::new(0, members)?, outcome)?)?;
    }
    let cfg = MleConfig::default();
    let theta = fit_mle(&data, &z, &cfg)?;
    let g = nll_gradient(&theta, &data, &z, cfg.ridge_weight).norm();
    if g > cfg.grad_tol {
        return Err(fail(format!("gradient norm {g:e}")));
    }
    Ok(format!("gradient norm {g:.1e}"))
}

fn epochs() -> Result<String> {
    for (seed, batches) in [(0u64, 1usize), (1, 2), (2, 3)] {
        for algorithm in [Algorithm::Bsmb, Algorithm::BsmbPlus] {
            let mut env = Environment::new(generate_instance(3, 2, 3, 2, seed)?, seed)?;
            let mut cfg = AlgoConfig::new(algorithm, 300);
            cfg.batches = batches;
            let trace = run(&mut env, &cfg)?;
            if trace.epoch_count() > batches || trace.rounds.len() != 300 {
                return Err(fail(format!("{} used {} epochs with M = {batches}", algorithm.name(), trace.epoch_count())));
            }
        }
    }
    Ok("6 runs".into())
}

fn csv_round_trip() -> Result<String> {
    let rows = vec![SummaryRow {
        algorithm: "x".into(),
        seed: 7,
        round: 1,
        cum_regret: 1.0 / 3.0,
        cum_seconds: 1e-7,
        opt_calls: 3,
    }];
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf)?;
    if parse_csv(buf.as_slice())? != rows {
        return Err(fail("rows differ after parsing".into()));
    }
    Ok("exact".into())
}

/// Input of the `design` subcommand: one vector per unit.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub points: Vec<Vec<f64>>,
    #[serde(default)]
    pub regularizer: Option<f64>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub dim: usize,
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
    pub max_leverage: f64,
    pub bound: f64,
    pub certified: bool,
    pub iterations: usize,
}

pub fn solve_design_file(file: &DesignFile) -> Result<DesignReport> {
    let dim = file.points.first().map(Vec::len).unwrap_or(0);
    if dim == 0 || file.points.iter().any(|p| p.len() != dim) {
        return Err(Error::Config("points must be nonempty vectors of equal length".into()));
    }
    let units = file
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| DesignUnit::single(UnitLabel::Agent(i), DVector::from_column_slice(p)))
        .collect();
    let problem = DesignProblem::new(units, file.regularizer.unwrap_or(1e-9), dim)?;
    let config = DesignConfig {
        tol: file.tol.unwrap_or(DesignConfig::default().tol),
        ..DesignConfig::default()
    };
    let w: DesignWeights = solve_g_optimal(&problem, &config)?;
    let bound = dim as f64 * (1.0 + config.tol);
    Ok(DesignReport {
        dim,
        support: w.unit_index.clone(),
        weights: w.weights.clone(),
        max_leverage: w.max_leverage,
        bound,
        certified: w.max_leverage <= bound,
        iterations: w.iterations,
    })
}

//! Regularized MNL maximum-likelihood estimation and the matrices built
//! around it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mnl::{choice_probs, Assortment};

/// What an arm did with an offered assortment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Agent(usize),
    Outside,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObservation {
    pub round: usize,
    pub assortment: Assortment,
    pub outcome: Outcome,
}

impl ChoiceObservation {
    pub fn new(round: usize, assortment: Assortment, outcome: Outcome) -> Result<Self> {
        if let Outcome::Agent(n) = outcome {
            if assortment.members.binary_search(&n).is_err() {
                return Err(Error::InvalidArgument(format!(
                    "outcome agent {n} was not offered ({:?})",
                    assortment.members
                )));
            }
        }
        Ok(Self {
            round,
            assortment,
            outcome,
        })
    }

    fn indicator(&self, agent: usize) -> f64 {
        match self.outcome {
            Outcome::Agent(n) if n == agent => 1.0,
            _ => 0.0,
        }
    }
}

/// Choice-feedback history of one arm.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmDataset {
    pub arm: usize,
    pub observations: Vec<ChoiceObservation>,
}

impl ArmDataset {
    pub fn new(arm: usize) -> Self {
        Self {
            arm,
            observations: Vec::new(),
        }
    }

    /// Appends an observation; rounds must be strictly increasing.
    pub fn push(&mut self, obs: ChoiceObservation) -> Result<()> {
        if obs.assortment.arm != self.arm {
            return Err(Error::InvalidArgument(format!(
                "observation for arm {} pushed into dataset of arm {}",
                obs.assortment.arm, self.arm
            )));
        }
        if let Some(last) = self.observations.last() {
            if obs.round <= last.round {
                return Err(Error::InvalidArgument(format!(
                    "round {} does not follow round {}",
                    obs.round, last.round
                )));
            }
        }
        self.observations.push(obs);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub ridge_weight: f64,
    /// Euclidean ball constraint on the estimate, if any.
    pub norm_cap: Option<f64>,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            ridge_weight: 1.0,
            norm_cap: None,
            max_iters: 100,
            grad_tol: 1e-8,
        }
    }
}

impl MleConfig {
    fn validate(&self) -> Result<()> {
        if !(self.grad_tol > 0.0) || self.max_iters < 1 || !(self.ridge_weight >= 0.0) {
            return Err(Error::InvalidArgument(format!("invalid MLE config {self:?}")));
        }
        if let Some(cap) = self.norm_cap {
            if !(cap > 0.0) {
                return Err(Error::InvalidArgument(format!("norm cap {cap} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Negative log-likelihood plus `(ridge/2) ||theta||^2`.
pub fn nll(theta: &DVector<f64>, data: &ArmDataset, z: &DMatrix<f64>, ridge_weight: f64) -> f64 {
    let mut loss = 0.5 * ridge_weight * theta.norm_squared();
    for obs in &data.observations {
        let members = &obs.assortment.members;
        let p = choice_probs(members, theta, z);
        let chosen = match obs.outcome {
            Outcome::Outside => p.outside,
            Outcome::Agent(n) => {
                let idx = members.binary_search(&n).expect("validated on construction");
                p.members[idx]
            }
        };
        loss -= chosen.ln();
    }
    loss
}

/// Gradient `sum_t sum_{n in S_t} (p - y) z_n + ridge * theta`.
pub fn nll_gradient(
    theta: &DVector<f64>,
    data: &ArmDataset,
    z: &DMatrix<f64>,
    ridge_weight: f64,
) -> DVector<f64> {
    let mut grad = theta * ridge_weight;
    for obs in &data.observations {
        grad += round_gradient(theta, obs, z);
    }
    grad
}

/// Gradient of a single round's log-loss.
pub fn round_gradient(theta: &DVector<f64>, obs: &ChoiceObservation, z: &DMatrix<f64>) -> DVector<f64> {
    let members = &obs.assortment.members;
    let p = choice_probs(members, theta, z);
    let mut grad = DVector::zeros(z.nrows());
    for (&n, pn) in members.iter().zip(&p.members) {
        grad.axpy(pn - obs.indicator(n), &z.column(n), 1.0);
    }
    grad
}

/// `sum_n p z_n z_n^T - (sum_n p z_n)(sum_n p z_n)^T` for one offered set.
pub fn round_gram(theta: &DVector<f64>, members: &[usize], z: &DMatrix<f64>) -> DMatrix<f64> {
    let r = z.nrows();
    let mut gram = DMatrix::zeros(r, r);
    if members.is_empty() {
        return gram;
    }
    let p = choice_probs(members, theta, z);
    let mut mean = DVector::zeros(r);
    for (&n, pn) in members.iter().zip(&p.members) {
        let zn = z.column(n);
        gram.ger(*pn, &zn, &zn, 1.0);
        mean.axpy(*pn, &zn, 1.0);
    }
    gram.ger(-1.0, &mean, &mean, 1.0);
    gram
}

/// `V = sum_t sum_{n in S_t} z_n z_n^T + I`.
pub fn design_matrix(data: &ArmDataset, z: &DMatrix<f64>) -> DMatrix<f64> {
    let r = z.nrows();
    let mut v = DMatrix::identity(r, r);
    for obs in &data.observations {
        for &n in &obs.assortment.members {
            let zn = z.column(n);
            v.ger(1.0, &zn, &zn, 1.0);
        }
    }
    v
}

/// Localized Gram matrix: curvature of the log-loss at `theta_hat` plus `lam I`.
pub fn local_gram(theta_hat: &DVector<f64>, data: &ArmDataset, z: &DMatrix<f64>, lam: f64) -> DMatrix<f64> {
    let r = z.nrows();
    let mut h = DMatrix::identity(r, r) * lam;
    for obs in &data.observations {
        h += round_gram(theta_hat, &obs.assortment.members, z);
    }
    h
}

/// `z_n - sum_{m in S} p(m | S, theta_hat) z_m`.
pub fn centered_feature(
    agent: usize,
    members: &[usize],
    theta_hat: &DVector<f64>,
    z: &DMatrix<f64>,
) -> DVector<f64> {
    let p = choice_probs(members, theta_hat, z);
    let mut out = z.column(agent).into_owned();
    for (&m, pm) in members.iter().zip(&p.members) {
        out.axpy(-pm, &z.column(m), 1.0);
    }
    out
}

/// `|| theta - P(theta - grad f(theta)) ||` for the ball of radius `cap`.
pub fn projected_gradient_residual(
    theta: &DVector<f64>,
    data: &ArmDataset,
    z: &DMatrix<f64>,
    ridge_weight: f64,
    cap: f64,
) -> f64 {
    let g = nll_gradient(theta, data, z, ridge_weight);
    let stepped = theta - g;
    (theta - project_ball(stepped, cap)).norm()
}

fn project_ball(v: DVector<f64>, cap: f64) -> DVector<f64> {
    let norm = v.norm();
    if norm > cap {
        v * (cap / norm)
    } else {
        v
    }
}

/// Maximum-likelihood estimate in the projected feature space, starting
/// from zero.
pub fn fit_mle(data: &ArmDataset, z: &DMatrix<f64>, config: &MleConfig) -> Result<DVector<f64>> {
    fit_mle_from(data, z, config, &DVector::zeros(z.nrows()))
}

/// Maximum-likelihood estimate warm-started at `init`.
///
/// Without a norm cap this is damped Newton on the regularized log-loss.
/// With a cap, the ball-constrained optimum is located through its KKT
/// multiplier: `theta(mu)` minimizes the loss with ridge `ridge + mu`, and
/// `||theta(mu)||` is decreasing in `mu`, so bisection finds the `mu` that
/// puts the solution on the sphere.
pub fn fit_mle_from(
    data: &ArmDataset,
    z: &DMatrix<f64>,
    config: &MleConfig,
    init: &DVector<f64>,
) -> Result<DVector<f64>> {
    config.validate()?;
    let Some(cap) = config.norm_cap else {
        return newton(data, z, config.ridge_weight, config.max_iters, config.grad_tol, init);
    };

    let inner_tol = config.grad_tol * 1e-2;
    let start = project_ball(init.clone(), cap);
    if let Ok(theta) = newton(data, z, config.ridge_weight, config.max_iters, inner_tol, &start) {
        if theta.norm() <= cap {
            return Ok(theta);
        }
    }

    let residual = |theta: &DVector<f64>| {
        projected_gradient_residual(theta, data, z, config.ridge_weight, cap)
    };

    // bracket the multiplier
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut theta_hi = loop {
        let theta = newton(data, z, config.ridge_weight + hi, config.max_iters, inner_tol, &start)?;
        if theta.norm() <= cap {
            break theta;
        }
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::MleNotConverged {
                iterations: config.max_iters,
                grad_norm: residual(&project_ball(theta, cap)),
            });
        }
    };

    let mut best = project_ball(theta_hi.clone(), cap);
    let mut best_res = residual(&best);
    for _ in 0..200 {
        if best_res <= config.grad_tol {
            return Ok(best);
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let theta = newton(data, z, config.ridge_weight + mid, config.max_iters, inner_tol, &theta_hi)?;
        if theta.norm() > cap {
            lo = mid;
        } else {
            hi = mid;
            theta_hi = theta.clone();
        }
        let candidate = project_ball(theta, cap);
        let res = residual(&candidate);
        if res < best_res {
            best = candidate;
            best_res = res;
        }
    }
    if best_res <= config.grad_tol {
        Ok(best)
    } else {
        Err(Error::MleNotConverged {
            iterations: config.max_iters,
            grad_norm: best_res,
        })
    }
}

fn newton(
    data: &ArmDataset,
    z: &DMatrix<f64>,
    ridge: f64,
    max_iters: usize,
    grad_tol: f64,
    init: &DVector<f64>,
) -> Result<DVector<f64>> {
    let r = z.nrows();
    let mut theta = init.clone();
    let mut grad = nll_gradient(&theta, data, z, ridge);
    let mut grad_norm = grad.norm();
    for _ in 0..max_iters {
        if grad_norm <= grad_tol {
            return Ok(theta);
        }
        let hess = local_gram(&theta, data, z, ridge);
        let step = match hess.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => {
                let jitter = 1e-10 * (1.0 + hess.trace());
                (hess + DMatrix::identity(r, r) * jitter)
                    .cholesky()
                    .ok_or(Error::Singular("MLE Hessian"))?
                    .solve(&grad)
            }
        };
        let f0 = nll(&theta, data, z, ridge);
        let slope = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let candidate = &theta - &step * t;
            let f1 = nll(&candidate, data, z, ridge);
            let g1 = nll_gradient(&candidate, data, z, ridge);
            // Armijo, or a strict gradient decrease once f stops resolving
            if f1 <= f0 - 1e-4 * t * slope || g1.norm() < grad_norm * (1.0 - 1e-4 * t) {
                theta = candidate;
                grad = g1;
                break;
            }
            t *= 0.5;
            if t < 1e-12 {
                return Err(Error::MleNotConverged {
                    iterations: max_iters,
                    grad_norm,
                });
            }
        }
        grad_norm = grad.norm();
    }
    if grad_norm <= grad_tol {
        Ok(theta)
    } else {
        Err(Error::MleNotConverged {
            iterations: max_iters,
            grad_norm,
        })
    }
}

/// One online-mirror-descent step: minimizes
/// `g^T theta + (1 / 2 eta) ||theta - theta_prev||^2_G` over `||theta|| <= cap`.
///
/// The unconstrained minimizer `theta_prev - eta G^{-1} g` is projected onto
/// the ball in the `G`-norm; the projection solves
/// `(G + mu I) theta = G theta'` for the multiplier `mu` by bisection.
pub fn omd_update(
    theta_prev: &DVector<f64>,
    grad_prev: &DVector<f64>,
    gram_tilde: &DMatrix<f64>,
    eta: f64,
    norm_cap: f64,
) -> Result<DVector<f64>> {
    let chol = gram_tilde
        .clone()
        .cholesky()
        .ok_or(Error::Singular("mirror-descent Gram matrix"))?;
    let target = theta_prev - chol.solve(grad_prev) * eta;
    if target.norm() <= norm_cap {
        return Ok(target);
    }
    let r = target.len();
    let rhs = gram_tilde * &target;
    let solve = |mu: f64| -> Result<DVector<f64>> {
        Ok((gram_tilde + DMatrix::identity(r, r) * mu)
            .cholesky()
            .ok_or(Error::Singular("mirror-descent projection"))?
            .solve(&rhs))
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while solve(hi)?.norm() > norm_cap {
        lo = hi;
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::Singular("mirror-descent projection bracket"));
        }
    }
    let mut theta = solve(hi)?;
    for _ in 0..200 {
        if norm_cap - theta.norm() <= 1e-8 * norm_cap {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let candidate = solve(mid)?;
        if candidate.norm() > norm_cap {
            lo = mid;
        } else {
            hi = mid;
            theta = candidate;
        }
    }
    Ok(theta)
}

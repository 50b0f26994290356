//! G/D-optimal experimental design over agents, assortments and
//! (agent, assortment) pairs, solved by Frank-Wolfe with away steps.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::centered_feature;
use crate::mnl::choice_probs;

pub const DEFAULT_UNIT_CAP: usize = 100_000;
const PRUNE_BELOW: f64 = 1e-6;

/// What an exploration unit stands for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UnitLabel {
    Agent(usize),
    Assortment(Vec<usize>),
    Pair(usize, Vec<usize>),
}

/// One exploration unit; its moment is `sum_i w_i v_i v_i^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignUnit {
    pub label: UnitLabel,
    pub terms: Vec<(f64, DVector<f64>)>,
}

impl DesignUnit {
    pub fn single(label: UnitLabel, v: DVector<f64>) -> Self {
        Self {
            label,
            terms: vec![(1.0, v)],
        }
    }

    pub fn moment(&self, dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for (w, v) in &self.terms {
            m.ger(*w, v, v, 1.0);
        }
        m
    }

    /// `tr(W^{-1} M_unit)` given the Cholesky factor of `W`.
    fn leverage(&self, chol: &Cholesky<f64, Dyn>) -> f64 {
        let l = chol.l_dirty();
        self.terms
            .iter()
            .map(|(w, v)| {
                let y = l
                    .solve_lower_triangular(v)
                    .expect("Cholesky factor has positive diagonal");
                w * y.norm_squared()
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    pub units: Vec<DesignUnit>,
    pub regularizer: f64,
    pub dim: usize,
}

impl DesignProblem {
    pub fn new(units: Vec<DesignUnit>, regularizer: f64, dim: usize) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidArgument("design needs at least one unit".into()));
        }
        if !(regularizer > 0.0) || !regularizer.is_finite() {
            return Err(Error::InvalidArgument(format!("design regularizer {regularizer} must be > 0")));
        }
        for unit in &units {
            for (w, v) in &unit.terms {
                if v.len() != dim || !w.is_finite() || *w < 0.0 || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "bad design vector for unit {:?}",
                        unit.label
                    )));
                }
            }
        }
        Ok(Self {
            units,
            regularizer,
            dim,
        })
    }

    /// `sum_u pi_u M_u + rho I`.
    pub fn information(&self, weights: &[f64]) -> DMatrix<f64> {
        let mut w = DMatrix::identity(self.dim, self.dim) * self.regularizer;
        for (unit, &pi) in self.units.iter().zip(weights) {
            if pi > 0.0 {
                for (c, v) in &unit.terms {
                    w.ger(pi * c, v, v, 1.0);
                }
            }
        }
        w
    }

    /// Per-unit leverages `tr(W(pi)^{-1} M_u)`.
    pub fn leverages(&self, weights: &[f64]) -> Result<Vec<f64>> {
        let chol = self
            .information(weights)
            .cholesky()
            .ok_or(Error::Singular("design information matrix"))?;
        Ok(self.units.iter().map(|u| u.leverage(&chol)).collect())
    }

    fn log_det(&self, weights: &[f64]) -> f64 {
        match self.information(weights).cholesky() {
            Some(chol) => 2.0 * chol.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>(),
            None => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// Certificate slack: accept when max leverage `<= dim * (1 + tol)`.
    pub tol: f64,
    /// Iteration budget; `None` means `10 * dim^2`.
    pub max_iters: Option<usize>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            tol: 0.05,
            max_iters: None,
        }
    }
}

/// A design over the units of a problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignWeights {
    pub support: Vec<UnitLabel>,
    pub weights: Vec<f64>,
    /// Indices of the support units in the originating problem.
    pub unit_index: Vec<usize>,
    pub max_leverage: f64,
    pub iterations: usize,
    /// Log-determinant of the information matrix after each iteration.
    pub log_det_history: Vec<f64>,
}

impl DesignWeights {
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UnitLabel, f64)> {
        self.support.iter().zip(self.weights.iter().copied())
    }
}

/// Solves the regularized G-optimal design by maximizing
/// `log det(sum pi_u M_u + rho I)` and certifies the result by the
/// Kiefer-Wolfowitz leverage bound.
pub fn solve_g_optimal(problem: &DesignProblem, config: &DesignConfig) -> Result<DesignWeights> {
    let r = problem.dim;
    let n = problem.units.len();
    let bound = r as f64 * (1.0 + config.tol);
    let max_iters = config.max_iters.unwrap_or(10 * r * r).max(1);

    let mut pi = vec![1.0 / n as f64; n];
    let mut history = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;

    loop {
        let lev = problem.leverages(&pi)?;
        let max_lev = lev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|(b, _)| max_lev < *b) {
            best = Some((max_lev, pi.clone()));
        }
        if max_lev <= bound {
            break;
        }
        if iterations >= max_iters {
            return Err(Error::DesignNotCertified {
                iterations,
                best: best.map(|(b, _)| b).unwrap_or(max_lev),
                bound,
            });
        }
        iterations += 1;

        let mean: f64 = pi.iter().zip(&lev).map(|(p, g)| p * g).sum();
        let toward = argmax_first(&lev);
        let away = (0..n)
            .filter(|&u| pi[u] > 0.0)
            .min_by(|&a, &b| lev[a].total_cmp(&lev[b]).then(a.cmp(&b)))
            .expect("weights sum to one");
        let fw_gap = lev[toward] - mean;
        let away_gap = mean - lev[away];

        let base = problem.information(&pi);
        let scatter = &base - DMatrix::identity(r, r) * problem.regularizer;
        if fw_gap >= away_gap || pi[away] >= 1.0 {
            let dir = problem.units[toward].moment(r) - &scatter;
            let step = line_search(&base, &dir, 1.0);
            for p in pi.iter_mut() {
                *p *= 1.0 - step;
            }
            pi[toward] += step;
        } else {
            let max_step = pi[away] / (1.0 - pi[away]);
            let dir = &scatter - problem.units[away].moment(r);
            let step = line_search(&base, &dir, max_step);
            for p in pi.iter_mut() {
                *p *= 1.0 + step;
            }
            pi[away] -= step;
            if step >= max_step {
                pi[away] = 0.0;
            }
        }
        for p in pi.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = pi.iter().sum();
        for p in pi.iter_mut() {
            *p /= total;
        }
        history.push(problem.log_det(&pi));
    }

    let raw = pi.clone();
    let reduced = prune(&pi).and_then(|p| reduce_support(problem, p));
    let (final_pi, max_lev) = match reduced {
        Some(p) => {
            let lev = problem.leverages(&p)?;
            let m = lev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if m <= bound {
                (p, m)
            } else {
                let lev = problem.leverages(&raw)?;
                (raw, lev.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            }
        }
        None => {
            let lev = problem.leverages(&raw)?;
            (raw, lev.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        }
    };

    let unit_index: Vec<usize> = (0..n).filter(|&u| final_pi[u] > 0.0).collect();
    Ok(DesignWeights {
        support: unit_index.iter().map(|&u| problem.units[u].label.clone()).collect(),
        weights: unit_index.iter().map(|&u| final_pi[u]).collect(),
        unit_index,
        max_leverage: max_lev,
        iterations,
        log_det_history: history,
    })
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Exact line search of `log det(W + s D)` over `s in [0, max_step]`.
fn line_search(base: &DMatrix<f64>, dir: &DMatrix<f64>, max_step: f64) -> f64 {
    let Some(chol) = base.clone().cholesky() else {
        return 0.0;
    };
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .expect("Cholesky factor is invertible");
    let whitened = &l_inv * dir * l_inv.transpose();
    let sym = (&whitened + whitened.transpose()) * 0.5;
    let eig = sym.symmetric_eigenvalues();
    let slope = |s: f64| eig.iter().map(|e| e / (1.0 + s * e)).sum::<f64>();
    // stay inside the positive-definite region
    let mut upper = max_step;
    for e in eig.iter() {
        if *e < 0.0 {
            upper = upper.min(-0.999_999 / e);
        }
    }
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    if slope(upper) >= 0.0 {
        return upper;
    }
    let (mut lo, mut hi) = (0.0, upper);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * upper {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn prune(pi: &[f64]) -> Option<Vec<f64>> {
    let mut out: Vec<f64> = pi.iter().map(|&p| if p < PRUNE_BELOW { 0.0 } else { p }).collect();
    let total: f64 = out.iter().sum();
    if total <= 0.0 {
        return None;
    }
    for p in out.iter_mut() {
        *p /= total;
    }
    Some(out)
}

/// Caratheodory reduction: moves weight along directions that leave the
/// information matrix unchanged until the support fits the dimension of
/// the space of symmetric matrices plus one.
fn reduce_support(problem: &DesignProblem, mut pi: Vec<f64>) -> Option<Vec<f64>> {
    let r = problem.dim;
    let rows = r * (r + 1) / 2 + 1;
    let moments: Vec<Option<DVector<f64>>> = vec![None; pi.len()];
    let mut moments = moments;
    let mut vectorize = |u: usize| -> DVector<f64> {
        moments[u]
            .get_or_insert_with(|| {
                let m = problem.units[u].moment(r);
                let mut v = Vec::with_capacity(rows);
                for i in 0..r {
                    for j in i..r {
                        v.push(m[(i, j)]);
                    }
                }
                v.push(1.0);
                DVector::from_vec(v)
            })
            .clone()
    };
    loop {
        let support: Vec<usize> = (0..pi.len()).filter(|&u| pi[u] > 0.0).collect();
        if support.len() <= rows {
            return Some(pi);
        }
        let subset = &support[..rows + 1];
        let cols: Vec<DVector<f64>> = subset.iter().map(|&u| vectorize(u)).collect();
        let a = DMatrix::from_columns(&cols);
        let gram = a.transpose() * &a;
        let eig = gram.symmetric_eigen();
        let k = (0..eig.eigenvalues.len())
            .min_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]))?;
        let c = eig.eigenvectors.column(k).into_owned();
        // step pi -= t c until the first positive-c weight hits zero
        let mut t = f64::INFINITY;
        let mut hit = None;
        for (i, &u) in subset.iter().enumerate() {
            if c[i] > 1e-12 {
                let ratio = pi[u] / c[i];
                if ratio < t {
                    t = ratio;
                    hit = Some(u);
                }
            }
        }
        let hit = hit?;
        for (i, &u) in subset.iter().enumerate() {
            pi[u] = (pi[u] - t * c[i]).max(0.0);
        }
        pi[hit] = 0.0;
        let total: f64 = pi.iter().sum();
        for p in pi.iter_mut() {
            *p /= total;
        }
    }
}

fn check_active(active: &[usize], z: &DMatrix<f64>) -> Result<()> {
    if active.is_empty() {
        return Err(Error::InvalidArgument("design over an empty agent set".into()));
    }
    if let Some(&bad) = active.iter().find(|&&n| n >= z.ncols()) {
        return Err(Error::InvalidArgument(format!("agent {bad} out of range")));
    }
    Ok(())
}

fn regularizer(lam: f64, r: usize, t_tau: f64) -> Result<f64> {
    if !(t_tau > 0.0) || !(lam > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "design regularizer needs lam > 0 and epoch length > 0 (got {lam}, {t_tau})"
        )));
    }
    Ok(lam / (r as f64 * t_tau))
}

/// One unit per active agent with vector `z_n`; regularizer `lam / (r T_tau)`.
pub fn build_agent_design(active: &[usize], z: &DMatrix<f64>, t_tau: f64, lam: f64) -> Result<DesignProblem> {
    check_active(active, z)?;
    let r = z.nrows();
    let units = active
        .iter()
        .map(|&n| DesignUnit::single(UnitLabel::Agent(n), z.column(n).into_owned()))
        .collect();
    DesignProblem::new(units, regularizer(lam, r, t_tau)?, r)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Number of nonempty subsets of size at most `capacity` of `n` items.
pub fn subset_count(n: usize, capacity: usize) -> f64 {
    (1..=capacity.min(n)).map(|j| binomial(n, j)).sum()
}

/// All nonempty subsets of `items` (sorted) with at most `capacity`
/// members, by size then lexicographically.
pub fn subsets_up_to(items: &[usize], capacity: usize) -> Vec<Vec<usize>> {
    let mut sorted = items.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::new();
    let n = sorted.len();
    for size in 1..=capacity.min(n) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| sorted[i]).collect());
            let Some(i) = (0..size).rev().find(|&i| idx[i] < n - size + i) else {
                break;
            };
            idx[i] += 1;
            for j in i + 1..size {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

fn guarded_subsets(active: &[usize], capacity: usize, per_set: usize, cap: usize) -> Result<Vec<Vec<usize>>> {
    let units = subset_count(active.len(), capacity) * per_set as f64;
    if units > cap as f64 {
        return Err(Error::DesignTooLarge {
            units: units as usize,
            cap,
        });
    }
    Ok(subsets_up_to(active, capacity))
}

/// One unit per assortment `J` of active agents, with moment
/// `sum_{n in J} p(n | J, theta_hat) z~_n(J) z~_n(J)^T`.
pub fn build_assortment_design(
    active: &[usize],
    theta_hat: &DVector<f64>,
    z: &DMatrix<f64>,
    capacity: usize,
    t_tau: f64,
    lam: f64,
    unit_cap: usize,
) -> Result<DesignProblem> {
    check_active(active, z)?;
    let r = z.nrows();
    let sets = guarded_subsets(active, capacity, 1, unit_cap)?;
    let units = sets
        .into_iter()
        .map(|set| {
            let p = choice_probs(&set, theta_hat, z);
            let terms = set
                .iter()
                .zip(&p.members)
                .map(|(&n, &pn)| (pn, centered_feature(n, &set, theta_hat, z)))
                .collect();
            DesignUnit {
                label: UnitLabel::Assortment(set),
                terms,
            }
        })
        .collect();
    DesignProblem::new(units, regularizer(lam, r, t_tau)?, r)
}

/// One unit per pair `(n, J)` with `n in J`, vector `z~_n(J)`.
pub fn build_pair_design(
    active: &[usize],
    theta_hat: &DVector<f64>,
    z: &DMatrix<f64>,
    capacity: usize,
    t_tau: f64,
    lam: f64,
    unit_cap: usize,
) -> Result<DesignProblem> {
    check_active(active, z)?;
    let r = z.nrows();
    let mean_size = {
        let total = subset_count(active.len(), capacity);
        let members: f64 = (1..=capacity.min(active.len()))
            .map(|j| j as f64 * binomial(active.len(), j))
            .sum();
        (members / total).ceil() as usize
    };
    let sets = guarded_subsets(active, capacity, mean_size.max(1), unit_cap)?;
    let mut units = Vec::new();
    for set in sets {
        for &n in &set {
            units.push(DesignUnit::single(
                UnitLabel::Pair(n, set.clone()),
                centered_feature(n, &set, theta_hat, z),
            ));
        }
    }
    DesignProblem::new(units, regularizer(lam, r, t_tau)?, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn agents(vectors: &[&[f64]]) -> Vec<DesignUnit> {
        vectors
            .iter()
            .enumerate()
            .map(|(i, v)| DesignUnit::single(UnitLabel::Agent(i), DVector::from_row_slice(v)))
            .collect()
    }

    fn weight_of(w: &DesignWeights, label: &UnitLabel) -> f64 {
        w.iter().find(|(l, _)| *l == label).map(|(_, p)| p).unwrap_or(0.0)
    }

    fn random_problem(rng: &mut ChaCha8Rng, r: usize, units: usize) -> DesignProblem {
        let us = (0..units)
            .map(|i| {
                let v = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
                DesignUnit::single(UnitLabel::Agent(i), v)
            })
            .collect();
        DesignProblem::new(us, 1e-4, r).unwrap()
    }

    #[test]
    fn orthonormal_pair_splits_evenly() {
        let p = DesignProblem::new(agents(&[&[1.0, 0.0], &[0.0, 1.0]]), 1e-6, 2).unwrap();
        let w = solve_g_optimal(&p, &DesignConfig::default()).unwrap();
        assert!((weight_of(&w, &UnitLabel::Agent(0)) - 0.5).abs() < 1e-6);
        assert!((w.max_leverage - 2.0).abs() < 1e-3);
    }

    #[test]
    fn single_unit_gets_all_mass() {
        let p = DesignProblem::new(agents(&[&[0.6, 0.8]]), 1e-6, 2).unwrap();
        let w = solve_g_optimal(&p, &DesignConfig::default()).unwrap();
        assert_eq!(w.weights, vec![1.0]);
        assert!((w.max_leverage - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dominated_unit_gets_no_mass() {
        let p = DesignProblem::new(agents(&[&[1.0], &[0.5]]), 1e-6, 1).unwrap();
        // oracle: grid search of the max leverage over pi in [0, 1]
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=10_000 {
            let a = i as f64 / 10_000.0;
            let info = a + (1.0 - a) * 0.25 + 1e-6;
            let g = (1.0 / info).max(0.25 / info);
            if g < best.0 {
                best = (g, a);
            }
        }
        assert!((best.1 - 1.0).abs() < 1e-9);
        let w = solve_g_optimal(&p, &DesignConfig::default()).unwrap();
        assert!((weight_of(&w, &UnitLabel::Agent(0)) - best.1).abs() < 1e-4);
        assert!((w.max_leverage - best.0).abs() < 1e-3);
    }

    #[test]
    fn random_problems_certify_with_small_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..30 {
            let r = 2 + trial % 4;
            let p = random_problem(&mut rng, r, 5 + trial);
            let w = solve_g_optimal(&p, &DesignConfig::default()).unwrap();
            assert!(w.max_leverage <= r as f64 * 1.05);
            assert!(w.len() <= r * (r + 1) / 2 + 5);
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let lev = p.leverages(&expand(&p, &w)).unwrap();
            assert!((lev.iter().copied().fold(0.0, f64::max) - w.max_leverage).abs() < 1e-9);
        }
    }

    fn expand(p: &DesignProblem, w: &DesignWeights) -> Vec<f64> {
        let mut pi = vec![0.0; p.units.len()];
        for (&u, &x) in w.unit_index.iter().zip(&w.weights) {
            pi[u] = x;
        }
        pi
    }

    #[test]
    fn log_det_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20 {
            let p = random_problem(&mut rng, 4, 30);
            let w = solve_g_optimal(
                &p,
                &DesignConfig {
                    tol: 0.001,
                    max_iters: Some(5_000),
                },
            )
            .unwrap();
            for pair in w.log_det_history.windows(2) {
                assert!(pair[1] >= pair[0] - 1e-9);
            }
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = random_problem(&mut rng, 3, 12);
        let a = solve_g_optimal(&p, &DesignConfig::default()).unwrap();
        let b = solve_g_optimal(&p, &DesignConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_exhaustion_reports_best() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let p = random_problem(&mut rng, 5, 40);
        let err = solve_g_optimal(
            &p,
            &DesignConfig {
                tol: 1e-9,
                max_iters: Some(1),
            },
        )
        .unwrap_err();
        match err {
            Error::DesignNotCertified { best, bound, .. } => assert!(best > bound),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_problems_rejected() {
        assert!(DesignProblem::new(vec![], 1.0, 2).is_err());
        assert!(DesignProblem::new(agents(&[&[1.0, 0.0]]), 0.0, 2).is_err());
        assert!(DesignProblem::new(agents(&[&[f64::NAN, 0.0]]), 1.0, 2).is_err());
    }

    #[test]
    fn agent_design_builder() {
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.6, 0.0, 1.0, 0.8]);
        assert!(build_agent_design(&[], &z, 10.0, 1.0).is_err());
        let single = build_agent_design(&[2], &z, 10.0, 1.0).unwrap();
        assert_eq!(single.units.len(), 1);
        assert_eq!(single.units[0].terms[0].1, z.column(2).into_owned());
        assert!((single.regularizer - 1.0 / 20.0).abs() < 1e-15);
        let full = build_agent_design(&[0, 1, 2], &z, 4.0, 3.0).unwrap();
        assert_eq!(full.units.len(), 3);
        assert!((full.regularizer - 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn subset_enumeration() {
        assert_eq!(subsets_up_to(&[4], 1), vec![vec![4]]);
        assert_eq!(subsets_up_to(&[1, 0], 2), vec![vec![0], vec![1], vec![0, 1]]);
        let all = subsets_up_to(&[0, 1, 2, 3, 4], 3);
        assert_eq!(all.len() as f64, subset_count(5, 3));
        assert_eq!(all.len(), 5 + 10 + 10);
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), all.len());
    }

    #[test]
    fn assortment_design_builder() {
        let z = DMatrix::identity(2, 2);
        let theta = DVector::from_vec(vec![0.3, -0.2]);
        let one = build_assortment_design(&[0], &theta, &z, 1, 10.0, 1.0, DEFAULT_UNIT_CAP).unwrap();
        assert_eq!(one.units.len(), 1);
        let sigma = 1.0 / (1.0 + (-0.3f64).exp());
        assert!((one.units[0].terms[0].0 - sigma).abs() < 1e-15);

        let two = build_assortment_design(&[0, 1], &theta, &z, 2, 10.0, 1.0, DEFAULT_UNIT_CAP).unwrap();
        let labels: Vec<_> = two.units.iter().map(|u| u.label.clone()).collect();
        assert_eq!(
            labels,
            vec![
                UnitLabel::Assortment(vec![0]),
                UnitLabel::Assortment(vec![1]),
                UnitLabel::Assortment(vec![0, 1])
            ]
        );
    }

    #[test]
    fn assortment_moments_at_zero_parameter() {
        let z = DMatrix::identity(3, 3);
        let zero = DVector::zeros(3);
        let p = build_assortment_design(&[0, 1, 2], &zero, &z, 2, 5.0, 1.0, DEFAULT_UNIT_CAP).unwrap();
        for unit in &p.units {
            let UnitLabel::Assortment(set) = &unit.label else { unreachable!() };
            let q = 1.0 / (1.0 + set.len() as f64);
            let mut expected = DMatrix::zeros(3, 3);
            for &n in set {
                let mut tilde = z.column(n).into_owned();
                for &m in set {
                    tilde -= z.column(m) * q;
                }
                expected += &tilde * tilde.transpose() * q;
            }
            assert!((unit.moment(3) - expected).amax() < 1e-15);
        }
    }

    #[test]
    fn pair_design_builder() {
        let z = DMatrix::identity(2, 2);
        let theta = DVector::from_vec(vec![0.1, 0.4]);
        let one = build_pair_design(&[0], &theta, &z, 1, 3.0, 1.0, DEFAULT_UNIT_CAP).unwrap();
        assert_eq!(one.units[0].label, UnitLabel::Pair(0, vec![0]));
        let two = build_pair_design(&[0, 1], &theta, &z, 2, 3.0, 1.0, DEFAULT_UNIT_CAP).unwrap();
        let labels: Vec<_> = two.units.iter().map(|u| u.label.clone()).collect();
        assert_eq!(
            labels,
            vec![
                UnitLabel::Pair(0, vec![0]),
                UnitLabel::Pair(1, vec![1]),
                UnitLabel::Pair(0, vec![0, 1]),
                UnitLabel::Pair(1, vec![0, 1])
            ]
        );
        for unit in &two.units {
            let UnitLabel::Pair(n, set) = &unit.label else { unreachable!() };
            assert_eq!(unit.terms[0].1, centered_feature(*n, set, &theta, &z));
        }
    }

    #[test]
    fn oversized_designs_rejected() {
        let z = DMatrix::identity(2, 30);
        let theta = DVector::zeros(2);
        let active: Vec<usize> = (0..30).collect();
        let err = build_assortment_design(&active, &theta, &z, 5, 1.0, 1.0, DEFAULT_UNIT_CAP).unwrap_err();
        assert!(matches!(err, Error::DesignTooLarge { .. }));
        assert!(build_pair_design(&active, &theta, &z, 5, 1.0, 1.0, DEFAULT_UNIT_CAP).is_err());
    }

    #[test]
    fn assortment_designs_certify() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let r = 3;
        let z = DMatrix::from_fn(r, 5, |_, _| rng.random_range(-1.0..1.0));
        let theta = DVector::from_fn(r, |_, _| rng.random_range(-0.5..0.5));
        let p = build_assortment_design(&[0, 1, 2, 3, 4], &theta, &z, 2, 100.0, 1.0, DEFAULT_UNIT_CAP).unwrap();
        let w = solve_g_optimal(&p, &DesignConfig::default()).unwrap();
        assert!(w.max_leverage <= r as f64 * 1.05);
        assert!(w.len() <= r * (r + 1) / 2 + 5);
    }
}

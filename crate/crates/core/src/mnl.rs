//! Multinomial-logit choice model, revenue, feature projection and the
//! non-linearity constant.
//!
//! Utilities are bounded by 2 in absolute value everywhere in this crate
//! (unit-norm features, parameters of norm at most 2), so probabilities are
//! computed from raw exponentials without a log-sum-exp shift.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values at or below `DEFAULT_RANK_TOL * sigma_max` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

const NORM_SLACK: f64 = 1e-9;

/// Ground-truth market: agent features, arm parameters, rewards and capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub n_agents: usize,
    pub n_arms: usize,
    pub capacity: usize,
    pub dim: usize,
    /// `dim x n_agents`; column `n` is the feature of agent `n`.
    pub features: DMatrix<f64>,
    /// One `dim`-vector per arm.
    pub theta: Vec<DVector<f64>>,
    /// `n_agents x n_arms` reward matrix.
    pub rewards: DMatrix<f64>,
    pub seed: u64,
}

impl Instance {
    pub fn new(
        capacity: usize,
        features: DMatrix<f64>,
        theta: Vec<DVector<f64>>,
        rewards: DMatrix<f64>,
        seed: u64,
    ) -> Result<Self> {
        let dim = features.nrows();
        let n_agents = features.ncols();
        let n_arms = theta.len();
        if n_agents == 0 || n_arms == 0 || dim == 0 {
            return Err(Error::InvalidArgument(
                "instance needs at least one agent, one arm and one feature dimension".into(),
            ));
        }
        if capacity == 0 || capacity > n_agents {
            return Err(Error::InvalidArgument(format!(
                "capacity {capacity} outside 1..={n_agents}"
            )));
        }
        if rewards.nrows() != n_agents || rewards.ncols() != n_arms {
            return Err(Error::InvalidArgument(format!(
                "reward matrix is {}x{}, expected {n_agents}x{n_arms}",
                rewards.nrows(),
                rewards.ncols()
            )));
        }
        for (n, col) in features.column_iter().enumerate() {
            let norm = col.norm();
            if !norm.is_finite() || norm > 1.0 + NORM_SLACK {
                return Err(Error::InvalidArgument(format!(
                    "feature of agent {n} has norm {norm} > 1"
                )));
            }
        }
        for (k, t) in theta.iter().enumerate() {
            if t.len() != dim {
                return Err(Error::InvalidArgument(format!(
                    "theta of arm {k} has dimension {}, expected {dim}",
                    t.len()
                )));
            }
            let norm = t.norm();
            if !norm.is_finite() || norm > 1.0 + NORM_SLACK {
                return Err(Error::InvalidArgument(format!(
                    "theta of arm {k} has norm {norm} > 1"
                )));
            }
        }
        if let Some(bad) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidArgument(format!(
                "reward {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            n_agents,
            n_arms,
            capacity,
            dim,
            features,
            theta,
            rewards,
            seed,
        })
    }

    /// Latent utility `x_n^T theta_k`.
    pub fn utility(&self, agent: usize, arm: usize) -> f64 {
        self.features.column(agent).dot(&self.theta[arm])
    }

    /// `n_agents x n_arms` table of true utilities.
    pub fn utilities(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_agents, self.n_arms, |n, k| self.utility(n, k))
    }

    pub fn reward_column(&self, arm: usize) -> Vec<f64> {
        self.rewards.column(arm).iter().copied().collect()
    }

    /// Expected revenue of `members` at `arm` under the true parameters.
    pub fn arm_revenue(&self, arm: usize, members: &[usize]) -> f64 {
        let utils: Vec<f64> = members.iter().map(|&n| self.utility(n, arm)).collect();
        let probs = probs_from_utilities(&utils);
        members
            .iter()
            .zip(&probs.members)
            .map(|(&n, p)| self.rewards[(n, arm)] * p)
            .sum()
    }
}

/// Features projected onto the column space of `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFeatures {
    pub rank: usize,
    /// `d x r` orthonormal basis (leading left singular vectors).
    pub basis: DMatrix<f64>,
    /// `r x N`; column `n` is `z_n = basis^T x_n`.
    pub z: DMatrix<f64>,
}

impl ProjectedFeatures {
    pub fn n_agents(&self) -> usize {
        self.z.ncols()
    }

    pub fn agent(&self, n: usize) -> DVector<f64> {
        self.z.column(n).into_owned()
    }

    /// Maps an ambient parameter into the projected space.
    pub fn project_parameter(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(theta)
    }
}

/// Truncated SVD projection of the feature matrix onto its numerical rank.
pub fn project_features(x: &DMatrix<f64>, tol: f64) -> Result<ProjectedFeatures> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("rank tolerance {tol} must be > 0")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("feature matrix has non-finite entries".into()));
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::RankZero);
    }
    let svd = x.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma_max = svd.singular_values[order[0]];
    if !(sigma_max > 0.0) {
        return Err(Error::RankZero);
    }
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| svd.singular_values[i] > tol * sigma_max)
        .collect();
    let rank = kept.len();
    let mut basis = DMatrix::zeros(x.nrows(), rank);
    for (j, &i) in kept.iter().enumerate() {
        let mut col = u.column(i).into_owned();
        // fix the sign so the largest-magnitude entry is positive
        let pivot = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if pivot < 0.0 {
            col.neg_mut();
        }
        basis.set_column(j, &col);
    }
    let z = basis.tr_mul(x);
    Ok(ProjectedFeatures { rank, basis, z })
}

/// Choice probabilities over an offered set plus the outside option.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceProbs {
    /// Aligned with the offered members.
    pub members: Vec<f64>,
    pub outside: f64,
}

impl ChoiceProbs {
    pub fn total(&self) -> f64 {
        self.members.iter().sum::<f64>() + self.outside
    }
}

pub fn probs_from_utilities(utilities: &[f64]) -> ChoiceProbs {
    let exps: Vec<f64> = utilities.iter().map(|u| u.exp()).collect();
    let denom = 1.0 + exps.iter().sum::<f64>();
    ChoiceProbs {
        members: exps.into_iter().map(|e| e / denom).collect(),
        outside: 1.0 / denom,
    }
}

/// Utilities `z_n^T theta` for every offered agent.
pub fn utilities(members: &[usize], theta: &DVector<f64>, z: &DMatrix<f64>) -> Vec<f64> {
    members.iter().map(|&n| z.column(n).dot(theta)).collect()
}

/// MNL probabilities `p(n | S, theta)` and `p(n_0 | S, theta)`.
pub fn choice_probs(members: &[usize], theta: &DVector<f64>, z: &DMatrix<f64>) -> ChoiceProbs {
    probs_from_utilities(&utilities(members, theta, z))
}

/// `R_k(S) = sum_{n in S} r_{n,k} p(n | S, theta)`.
pub fn expected_revenue(
    members: &[usize],
    theta: &DVector<f64>,
    z: &DMatrix<f64>,
    rewards: &[f64],
) -> f64 {
    let probs = choice_probs(members, theta, z);
    members
        .iter()
        .zip(&probs.members)
        .map(|(&n, p)| rewards[n] * p)
        .sum()
}

/// One assortment: the agents offered to a single arm.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Assortment {
    pub arm: usize,
    pub members: Vec<usize>,
}

impl Assortment {
    /// Sorts the members; duplicates are rejected.
    pub fn new(arm: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        if members.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate agent in assortment {members:?}"
            )));
        }
        Ok(Self { arm, members })
    }
}

/// `K` pairwise-disjoint assortments, one per arm.
///
/// The derived ordering compares the per-arm sorted member lists in arm
/// order, which is the canonical tie-break used by the optimizers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Matching {
    pub sets: Vec<Vec<usize>>,
}

impl Matching {
    pub fn empty(n_arms: usize) -> Self {
        Self {
            sets: vec![Vec::new(); n_arms],
        }
    }

    pub fn from_sets(mut sets: Vec<Vec<usize>>) -> Self {
        for s in &mut sets {
            s.sort_unstable();
        }
        Self { sets }
    }

    pub fn n_arms(&self) -> usize {
        self.sets.len()
    }

    pub fn assortment(&self, arm: usize) -> &[usize] {
        &self.sets[arm]
    }

    pub fn arm_of(&self, agent: usize) -> Option<usize> {
        self.sets.iter().position(|s| s.contains(&agent))
    }

    /// Membership check for the feasible set `M`.
    pub fn validate(&self, n_agents: usize, n_arms: usize, capacity: usize) -> Result<()> {
        if self.sets.len() != n_arms {
            return Err(Error::InfeasibleMatching(format!(
                "{} assortments for {n_arms} arms",
                self.sets.len()
            )));
        }
        let mut seen = vec![false; n_agents];
        for (k, s) in self.sets.iter().enumerate() {
            if s.len() > capacity {
                return Err(Error::InfeasibleMatching(format!(
                    "arm {k} offered {} agents, capacity {capacity}",
                    s.len()
                )));
            }
            if s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InfeasibleMatching(format!(
                    "arm {k} assortment {s:?} is not sorted and duplicate-free"
                )));
            }
            for &n in s {
                if n >= n_agents {
                    return Err(Error::InfeasibleMatching(format!("agent {n} out of range")));
                }
                if seen[n] {
                    return Err(Error::InfeasibleMatching(format!(
                        "agent {n} offered to more than one arm"
                    )));
                }
                seen[n] = true;
            }
        }
        Ok(())
    }
}

/// Sum of per-arm expected revenues under the true parameters.
pub fn total_revenue(m: &Matching, instance: &Instance) -> Result<f64> {
    m.validate(instance.n_agents, instance.n_arms, instance.capacity)?;
    Ok((0..instance.n_arms)
        .map(|k| instance.arm_revenue(k, m.assortment(k)))
        .sum())
}

/// `e^{-2} / (1 + L e^2)^2`, a lower bound on
/// `inf p(n|S,theta) p(n_0|S,theta)` over `||theta|| <= 2`, `|S| <= L`.
pub fn kappa_lower_bound(capacity: usize) -> Result<f64> {
    if capacity < 1 {
        return Err(Error::InvalidArgument("capacity must be at least 1".into()));
    }
    let e2 = 2f64.exp();
    let denom = 1.0 + capacity as f64 * e2;
    Ok((-2f64).exp() / (denom * denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
        let v = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        v / n
    }

    #[test]
    fn identity_projects_to_full_rank() {
        let p = project_features(&DMatrix::identity(2, 2), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.rank, 2);
        for n in 0..2 {
            let col = p.z.column(n);
            assert!((col.norm() - 1.0).abs() < 1e-12);
            assert!(col.iter().filter(|v| v.abs() > 1e-12).count() == 1);
        }
        let gram = p.basis.tr_mul(&p.basis);
        assert!((gram - DMatrix::<f64>::identity(2, 2)).amax() < 1e-10);
    }

    #[test]
    fn duplicate_column_has_rank_one() {
        let mut x = DMatrix::zeros(3, 2);
        x[(0, 0)] = 1.0;
        x[(0, 1)] = 1.0;
        let p = project_features(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.rank, 1);
        assert_eq!(p.z[(0, 0)], p.z[(0, 1)]);
        assert!((p.z[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_is_rank_zero() {
        let err = project_features(&DMatrix::zeros(3, 2), DEFAULT_RANK_TOL).unwrap_err();
        assert_eq!(err.to_string(), "rank zero feature matrix");
    }

    #[test]
    fn projection_preserves_utilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let p = project_features(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.rank, 3);
        assert!((p.basis.tr_mul(&p.basis) - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
        for _ in 0..100 {
            let theta = random_unit(&mut rng, 5) * rng.random_range(0.0..1.0);
            let theta_r = p.project_parameter(&theta);
            for n in 0..3 {
                let direct = x.column(n).dot(&theta);
                let projected = p.z.column(n).dot(&theta_r);
                assert!((direct - projected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rank_deficient_projection_preserves_utilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(6, 2, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
        let x = a * b;
        let p = project_features(&x, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p.rank, 2);
        for _ in 0..100 {
            let theta = random_unit(&mut rng, 6);
            let theta_r = p.project_parameter(&theta);
            for n in 0..5 {
                assert!((x.column(n).dot(&theta) - p.z.column(n).dot(&theta_r)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_assortment_picks_outside() {
        let z = DMatrix::identity(2, 2);
        let probs = choice_probs(&[], &DVector::zeros(2), &z);
        assert!(probs.members.is_empty());
        assert_eq!(probs.outside, 1.0);
    }

    #[test]
    fn zero_utility_is_uniform() {
        let z = DMatrix::identity(2, 2);
        let probs = choice_probs(&[0, 1], &DVector::zeros(2), &z);
        for p in probs.members.iter().chain(std::iter::once(&probs.outside)) {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_single_agent() {
        let z = DMatrix::from_element(1, 1, 1.0);
        let theta = DVector::from_element(1, 3f64.ln());
        let probs = choice_probs(&[0], &theta, &z);
        assert!((probs.members[0] - 0.75).abs() < 1e-15);
        assert!((probs.outside - 0.25).abs() < 1e-15);
    }

    #[test]
    fn revenue_closed_forms() {
        let z = DMatrix::identity(2, 2);
        let zero = DVector::zeros(2);
        assert!((expected_revenue(&[0, 1], &zero, &z, &[1.0, 1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert!((expected_revenue(&[0, 1], &zero, &z, &[0.6, 0.3]) - 0.3).abs() < 1e-15);
        let theta = DVector::from_vec(vec![2f64.ln(), 0.0]);
        assert!((expected_revenue(&[0, 1], &theta, &z, &[1.0, 0.5]) - 0.625).abs() < 1e-15);
    }

    fn small_instance(seed: u64, n: usize, k: usize, l: usize) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 3;
        let mut x = DMatrix::zeros(d, n);
        for j in 0..n {
            x.set_column(j, &random_unit(&mut rng, d));
        }
        let theta = (0..k).map(|_| random_unit(&mut rng, d)).collect();
        let rewards = DMatrix::from_fn(n, k, |_, _| rng.random_range(0.0..1.0));
        Instance::new(l, x, theta, rewards, seed).unwrap()
    }

    #[test]
    fn total_revenue_of_empty_matching_is_zero() {
        let inst = small_instance(1, 4, 2, 2);
        assert_eq!(total_revenue(&Matching::empty(2), &inst).unwrap(), 0.0);
    }

    #[test]
    fn single_arm_total_matches_expected_revenue() {
        let inst = small_instance(2, 3, 1, 2);
        let m = Matching::from_sets(vec![vec![0, 2]]);
        let direct = expected_revenue(&[0, 2], &inst.theta[0], &inst.features, &inst.reward_column(0));
        assert_eq!(total_revenue(&m, &inst).unwrap(), direct);
    }

    #[test]
    fn total_revenue_is_sum_of_arm_revenues() {
        let inst = small_instance(3, 4, 2, 2);
        let m = Matching::from_sets(vec![vec![3, 1], vec![0]]);
        let mut manual = 0.0;
        for k in 0..2 {
            let s = m.assortment(k);
            let denom: f64 = 1.0 + s.iter().map(|&n| inst.utility(n, k).exp()).sum::<f64>();
            manual += s
                .iter()
                .map(|&n| inst.rewards[(n, k)] * inst.utility(n, k).exp() / denom)
                .sum::<f64>();
        }
        assert!((total_revenue(&m, &inst).unwrap() - manual).abs() < 1e-12);
    }

    #[test]
    fn infeasible_matchings_rejected() {
        let inst = small_instance(4, 4, 2, 2);
        let shared = Matching::from_sets(vec![vec![0, 1], vec![1]]);
        assert!(matches!(total_revenue(&shared, &inst), Err(Error::InfeasibleMatching(_))));
        let over = Matching::from_sets(vec![vec![0, 1, 2], vec![]]);
        assert!(matches!(total_revenue(&over, &inst), Err(Error::InfeasibleMatching(_))));
    }

    #[test]
    fn kappa_values() {
        assert!((kappa_lower_bound(1).unwrap() - 0.001923).abs() < 5e-7);
        let e2 = std::f64::consts::E.powi(2);
        let two = (1.0 / e2) / (1.0 + 2.0 * e2).powi(2);
        assert!((kappa_lower_bound(2).unwrap() - two).abs() < 1e-15);
        assert!((two - 0.0005436).abs() < 5e-8);
        for l in 1..=10 {
            assert!(kappa_lower_bound(l + 1).unwrap() < kappa_lower_bound(l).unwrap());
        }
        assert!(kappa_lower_bound(0).is_err());
    }

    #[test]
    fn kappa_bound_holds_on_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (d, n) = (3, 6);
        let mut z = DMatrix::zeros(d, n);
        for j in 0..n {
            z.set_column(j, &random_unit(&mut rng, d));
        }
        for l in 1..=4 {
            let bound = kappa_lower_bound(l).unwrap();
            let mut min_prod = f64::INFINITY;
            for _ in 0..25_000 {
                let theta = random_unit(&mut rng, d) * rng.random_range(0.0..2.0);
                let size = rng.random_range(1..=l);
                let mut members: Vec<usize> = (0..n).collect();
                for i in 0..size {
                    let j = rng.random_range(i..n);
                    members.swap(i, j);
                }
                members.truncate(size);
                let p = choice_probs(&members, &theta, &z);
                for pm in &p.members {
                    min_prod = min_prod.min(pm * p.outside);
                }
            }
            assert!(min_prod >= bound, "L={l}: {min_prod} < {bound}");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::{prop_assert, proptest};
        use rand::Rng;

        proptest! {
            #[test]
            fn probabilities_normalize(
                utils in proptest::collection::vec(-2.0f64..2.0, 0..6),
            ) {
                let p = probs_from_utilities(&utils);
                prop_assert!((p.total() - 1.0).abs() <= 1e-12);
                for v in p.members.iter().chain(std::iter::once(&p.outside)) {
                    prop_assert!(*v > 0.0 && *v < 1.0 || utils.is_empty());
                }
            }

            #[test]
            fn revenue_bounded_by_best_reward(
                utils in proptest::collection::vec(-2.0f64..2.0, 1..6),
                seed in 0u64..1000,
            ) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rewards: Vec<f64> = utils.iter().map(|_| rng.random_range(0.0..1.0)).collect();
                let p = probs_from_utilities(&utils);
                let rev: f64 = rewards.iter().zip(&p.members).map(|(r, q)| r * q).sum();
                let best = rewards.iter().copied().fold(0.0, f64::max);
                prop_assert!(rev <= best + 1e-15);
                prop_assert!((0.0..=1.0).contains(&rev));
            }
        }
    }
}

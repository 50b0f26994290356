//! Round-robin warm-up that lower-bounds the design matrix's smallest
//! eigenvalue before estimation.

use crate::error::Result;
use crate::estimation::ArmDataset;
use crate::mnl::Matching;

use super::Runner;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarmupParams {
    pub n_agents: usize,
    pub n_arms: usize,
    pub capacity: usize,
    pub rank: usize,
    pub horizon: usize,
    pub kappa: f64,
    pub c3_warm: f64,
    /// Smallest eigenvalue of `sum_n z_n z_n^T`.
    pub lambda_min: f64,
    pub cap_fraction: f64,
}

/// Uncapped warm-up length per arm,
/// `c3 N / (i kappa^2 lambda_min log(TK)) * (r + log(TK))^2` with
/// `i = min(L, N)`. The logarithm is floored at 1.
pub fn warmup_length(p: &WarmupParams) -> f64 {
    let i = p.capacity.min(p.n_agents) as f64;
    let log_tk = ((p.horizon * p.n_arms) as f64).ln().max(1.0);
    p.c3_warm * p.n_agents as f64 / (i * p.kappa * p.kappa * p.lambda_min * log_tk) * (p.rank as f64 + log_tk).powi(2)
}

/// Agents offered at local warm-up round `t` (1-based): the `i` agents
/// following the previous chunk, wrapping around `N`. Returned 0-based and
/// sorted.
pub fn round_robin_chunk(t: usize, n_agents: usize, capacity: usize) -> Vec<usize> {
    let i = capacity.min(n_agents);
    let wrap = |x: usize| (x - 1) % n_agents + 1;
    let a = wrap(i * (t - 1) + 1);
    let b = wrap(i * t);
    let mut out: Vec<usize> = if a <= b {
        (a..=b).collect()
    } else {
        (1..=b).chain(a..=n_agents).collect()
    };
    for x in &mut out {
        *x -= 1;
    }
    out.sort_unstable();
    out
}

/// Offers round-robin chunks to `arm` (nothing to the other arms) and
/// records the arm's feedback. Returns `(rounds played, capped)`.
pub(crate) fn run_warmup_on(runner: &mut Runner<'_>, arm: usize, p: &WarmupParams, data: &mut ArmDataset) -> Result<(usize, bool)> {
    let raw = warmup_length(p);
    let cap = (p.cap_fraction * p.horizon as f64 / p.n_arms as f64).floor();
    let capped = !(raw <= cap);
    let rounds = if capped { cap as usize } else { raw.ceil() as usize };
    let mut played = 0;
    for t in 1..=rounds {
        let mut m = Matching::empty(p.n_arms);
        m.sets[arm] = round_robin_chunk(t, p.n_agents, p.capacity);
        if runner.repeat(&m, 1, Some((arm, data)))? == 0 {
            break;
        }
        played += 1;
    }
    Ok((played, capped))
}

/// Standalone warm-up on a fresh environment, mainly for inspection.
pub fn run_warmup(
    env: &mut crate::environment::Environment,
    arm: usize,
    p: &WarmupParams,
) -> Result<(ArmDataset, usize)> {
    let mut runner = Runner::new(env, p.horizon);
    let mut data = ArmDataset::new(arm);
    let (played, _) = run_warmup_on(&mut runner, arm, p, &mut data)?;
    Ok((data, played))
}

//! Bayesian inverse reinforcement learning with a random-walk
//! Metropolis-Hastings sampler over reward weights.
//!
//! The likelihood of observed `(state, action)` steps under weights `theta`
//! is the Boltzmann policy built from `Q*_theta`; state transitions do not
//! depend on `theta` and are dropped. The prior is uniform on a box, so the
//! acceptance ratio reduces to a likelihood ratio for in-box proposals and
//! out-of-box proposals are rejected without solving the MDP.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{log_softmax_table, mdp_vi, Mdp, QFunction, RewardParams, ViConfig};
use crate::rng::{rng_from_seed, ChainRng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: String,
    /// `(state, action)` pairs in time order.
    pub steps: Vec<(usize, usize)>,
}

impl Trajectory {
    pub fn new(user_id: impl Into<String>, steps: Vec<(usize, usize)>) -> Self {
        Trajectory {
            user_id: user_id.into(),
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryDataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Self {
        TrajectoryDataset { trajectories }
    }

    pub fn num_steps(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Checks every step against the state and action counts of `mdp`.
    pub fn validate(&self, mdp: &Mdp) -> Result<()> {
        for traj in &self.trajectories {
            for (t, &(s, a)) in traj.steps.iter().enumerate() {
                if s >= mdp.num_states() || a >= mdp.num_actions() {
                    return Err(Error::InvalidInput(format!(
                        "user {} step {t}: (state {s}, action {a}) outside a {}x{} MDP",
                        traj.user_id,
                        mdp.num_states(),
                        mdp.num_actions()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn counts(&self, mdp: &Mdp) -> Result<StepCounts> {
        self.validate(mdp)?;
        let mut counts = StepCounts::zeros(mdp.num_states(), mdp.num_actions());
        for traj in &self.trajectories {
            for &(s, a) in &traj.steps {
                counts.add(s, a, 1.0);
            }
        }
        Ok(counts)
    }
}

/// Visit counts per `(state, action)`. The likelihood only depends on these.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCounts {
    num_actions: usize,
    counts: Vec<f64>,
    total: f64,
}

impl StepCounts {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        StepCounts {
            num_actions,
            counts: vec![0.0; num_states * num_actions],
            total: 0.0,
        }
    }

    pub fn add(&mut self, s: usize, a: usize, weight: f64) {
        self.counts[s * self.num_actions + a] += weight;
        self.total += weight;
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0.0
    }

    /// `sum n(s, a) log pi(s, a)` against a table laid out like a Q table.
    pub fn weighted_sum(&self, log_pi: &[f64]) -> f64 {
        self.counts
            .iter()
            .zip(log_pi)
            .filter(|(&n, _)| n != 0.0)
            .map(|(&n, &lp)| n * lp)
            .sum()
    }
}

/// Log-likelihood of the counted steps under the Boltzmann policy of `q`.
pub fn counts_log_likelihood(q: &QFunction, counts: &StepCounts, eta: f64) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.weighted_sum(&log_softmax_table(q, eta))
}

pub fn log_likelihood(
    mdp: &Mdp,
    theta: &RewardParams,
    data: &TrajectoryDataset,
    eta: f64,
    vi: &ViConfig,
) -> Result<f64> {
    let counts = data.counts(mdp)?;
    if counts.is_empty() {
        return Ok(0.0);
    }
    let q = mdp_vi(mdp, theta, vi)?;
    Ok(counts_log_likelihood(&q, &counts, eta))
}

/// Uniform prior support `[lo, hi]` per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl PriorBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                what: "prior box bounds",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if let Some(k) = (0..lo.len()).find(|&k| !(lo[k] < hi[k])) {
            return Err(Error::Config(format!(
                "prior box component {k}: lower bound {} is not below upper bound {}",
                lo[k], hi[k]
            )));
        }
        Ok(PriorBox { lo, hi })
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        PriorBox::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.lo.len()
            && theta
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&t, (&lo, &hi))| t >= lo && t <= hi)
    }

    pub fn center(&self) -> RewardParams {
        RewardParams(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(lo, hi)| 0.5 * (lo + hi))
                .collect(),
        )
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RewardParams {
        RewardParams(
            self.lo
                .iter()
                .zip(&self.hi)
                .map(|(&lo, &hi)| lo + (hi - lo) * rng.random::<f64>())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mean,
    Median,
}

impl Estimator {
    /// Componentwise point estimate over `samples`.
    pub fn estimate(self, samples: &[RewardParams]) -> RewardParams {
        let dim = samples.first().map_or(0, RewardParams::dim);
        let mut column = Vec::with_capacity(samples.len());
        let mut out = Vec::with_capacity(dim);
        for k in 0..dim {
            column.clear();
            column.extend(samples.iter().map(|s| s.0[k]));
            out.push(match self {
                Estimator::Mean => column.iter().sum::<f64>() / column.len() as f64,
                Estimator::Median => median(&mut column),
            });
        }
        RewardParams(out)
    }
}

pub(crate) fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Settings shared by every Metropolis-Hastings move on reward weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MhParams {
    pub eta: f64,
    pub proposal_sigma: f64,
    pub prior: PriorBox,
    pub vi: ViConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirlConfig {
    pub mh: MhParams,
    pub n_samples: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

impl BirlConfig {
    /// Defaults for a `dim`-dimensional reward: eta 5, sigma 0.1, box
    /// `[-1, 1]^dim`, 5000 draws with 1000 burn-in, median estimate.
    pub fn with_defaults(dim: usize, seed: u64) -> Self {
        BirlConfig {
            mh: MhParams {
                eta: 5.0,
                proposal_sigma: 0.1,
                prior: PriorBox::uniform(dim, -1.0, 1.0).expect("valid default box"),
                vi: ViConfig::default(),
            },
            n_samples: 5_000,
            burn_in: 1_000,
            seed,
            estimator: Estimator::Median,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        validate_mh(&self.mh, dim)?;
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.burn_in >= self.n_samples {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than n_samples ({})",
                self.burn_in, self.n_samples
            )));
        }
        Ok(())
    }
}

pub(crate) fn validate_mh(mh: &MhParams, dim: usize) -> Result<()> {
    if !(mh.eta >= 0.0) || !mh.eta.is_finite() {
        return Err(Error::Config(format!("eta must be >= 0, got {}", mh.eta)));
    }
    if !(mh.proposal_sigma >= 0.0) || !mh.proposal_sigma.is_finite() {
        return Err(Error::Config(format!(
            "proposal_sigma must be >= 0, got {}",
            mh.proposal_sigma
        )));
    }
    if mh.prior.dim() != dim {
        return Err(Error::DimensionMismatch {
            what: "prior box",
            expected: dim,
            got: mh.prior.dim(),
        });
    }
    if !(mh.vi.tol > 0.0) {
        return Err(Error::Config("value-iteration tolerance must be > 0".into()));
    }
    Ok(())
}

/// One Metropolis-Hastings chain over reward weights.
///
/// Holds the current weights with their log-likelihood so each step solves
/// the MDP once, for the proposal only.
#[derive(Debug, Clone)]
pub struct MhChain<'a> {
    mdp: &'a Mdp,
    counts: &'a StepCounts,
    params: &'a MhParams,
    theta: RewardParams,
    q: Option<QFunction>,
    log_lik: f64,
    accepted: usize,
    proposed: usize,
}

impl<'a> MhChain<'a> {
    pub fn new(
        mdp: &'a Mdp,
        counts: &'a StepCounts,
        params: &'a MhParams,
        theta0: RewardParams,
    ) -> Result<Self> {
        if !params.prior.contains(&theta0.0) {
            return Err(Error::InvalidInput(
                "initial reward weights lie outside the prior box".into(),
            ));
        }
        let (log_lik, q) = chain_log_lik(mdp, counts, params, &theta0)?;
        Ok(MhChain {
            mdp,
            counts,
            params,
            theta: theta0,
            q,
            log_lik,
            accepted: 0,
            proposed: 0,
        })
    }

    /// Starts from weights whose `Q*` table is already known.
    pub fn with_q(
        mdp: &'a Mdp,
        counts: &'a StepCounts,
        params: &'a MhParams,
        theta0: RewardParams,
        q: QFunction,
    ) -> Result<Self> {
        if !params.prior.contains(&theta0.0) {
            return Err(Error::InvalidInput(
                "initial reward weights lie outside the prior box".into(),
            ));
        }
        Ok(MhChain {
            mdp,
            counts,
            params,
            log_lik: counts_log_likelihood(&q, counts, params.eta),
            theta: theta0,
            q: Some(q),
            accepted: 0,
            proposed: 0,
        })
    }

    pub fn theta(&self) -> &RewardParams {
        &self.theta
    }

    pub fn log_lik(&self) -> f64 {
        self.log_lik
    }

    pub fn accepted(&self) -> usize {
        self.accepted
    }

    pub fn proposed(&self) -> usize {
        self.proposed
    }

    pub fn into_theta(self) -> RewardParams {
        self.theta
    }

    /// Current weights and their `Q*` table, solving it if the chain never needed it.
    pub fn into_parts(self) -> Result<(RewardParams, QFunction)> {
        let q = match self.q {
            Some(q) => q,
            None => mdp_vi(self.mdp, &self.theta, &self.params.vi)?,
        };
        Ok((self.theta, q))
    }

    /// Proposes `theta + sigma * eps`, returns whether it was accepted.
    pub fn step(&mut self, rng: &mut ChainRng) -> Result<bool> {
        self.proposed += 1;
        let sigma = self.params.proposal_sigma;
        let proposal: Vec<f64> = self
            .theta
            .0
            .iter()
            .map(|&t| {
                let eps: f64 = rng.sample(StandardNormal);
                t + sigma * eps
            })
            .collect();
        if !self.params.prior.contains(&proposal) {
            return Ok(false);
        }
        let proposal = RewardParams(proposal);
        let (proposal_ll, proposal_q) = chain_log_lik(self.mdp, self.counts, self.params, &proposal)?;
        let log_ratio = proposal_ll - self.log_lik;
        let u: f64 = rng.random();
        if u.ln() < log_ratio {
            self.theta = proposal;
            self.q = proposal_q;
            self.log_lik = proposal_ll;
            self.accepted += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

// An empty data set has likelihood one, so the MDP is not solved.
fn chain_log_lik(
    mdp: &Mdp,
    counts: &StepCounts,
    params: &MhParams,
    theta: &RewardParams,
) -> Result<(f64, Option<QFunction>)> {
    if counts.is_empty() {
        return Ok((0.0, None));
    }
    let q = mdp_vi(mdp, theta, &params.vi)?;
    Ok((counts_log_likelihood(&q, counts, params.eta), Some(q)))
}

/// A single Metropolis-Hastings move from `theta0`.
pub fn sample_theta_step(
    mdp: &Mdp,
    theta0: &RewardParams,
    data: &TrajectoryDataset,
    params: &MhParams,
    rng: &mut ChainRng,
) -> Result<RewardParams> {
    validate_mh(params, mdp.feature_dim())?;
    let counts = data.counts(mdp)?;
    let mut chain = MhChain::new(mdp, &counts, params, theta0.clone())?;
    chain.step(rng)?;
    Ok(chain.into_theta())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub point_estimate: RewardParams,
    /// Post-burn-in draws, in chain order.
    pub samples: Vec<RewardParams>,
    pub acceptance_rate: f64,
    pub accepted: usize,
    pub proposed: usize,
    /// Log-likelihood of the chain state after every step, burn-in included.
    pub log_likelihood_trace: Vec<f64>,
}

/// Runs one chain from the centre of the prior box and summarizes it.
pub fn run_birl(mdp: &Mdp, data: &TrajectoryDataset, cfg: &BirlConfig) -> Result<PosteriorSummary> {
    cfg.validate(mdp.feature_dim())?;
    let counts = data.counts(mdp)?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut chain = MhChain::new(mdp, &counts, &cfg.mh, cfg.mh.prior.center())?;

    let mut samples = Vec::with_capacity(cfg.n_samples - cfg.burn_in);
    let mut trace = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        chain.step(&mut rng)?;
        trace.push(chain.log_lik());
        if i >= cfg.burn_in {
            samples.push(chain.theta().clone());
        }
    }

    let accepted = chain.accepted();
    let proposed = chain.proposed();
    Ok(PosteriorSummary {
        point_estimate: cfg.estimator.estimate(&samples),
        samples,
        acceptance_rate: accepted as f64 / proposed as f64,
        accepted,
        proposed,
        log_likelihood_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state_mdp() -> Mdp {
        // phi is 1-dimensional; action 0 is rewarded in state 0, action 1 in state 1.
        Mdp::new(
            2,
            2,
            1,
            vec![0.8, 0.2, 0.1, 0.9, 0.5, 0.5, 0.3, 0.7],
            vec![1.0, 0.0, -0.5, 0.5],
            0.9,
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    fn params(dim: usize, sigma: f64) -> MhParams {
        MhParams {
            eta: 2.0,
            proposal_sigma: sigma,
            prior: PriorBox::uniform(dim, -1.0, 1.0).unwrap(),
            vi: ViConfig::default(),
        }
    }

    #[test]
    fn empty_data_has_unit_likelihood() {
        let mdp = two_state_mdp();
        let ll = log_likelihood(
            &mdp,
            &RewardParams(vec![0.7]),
            &TrajectoryDataset::default(),
            5.0,
            &ViConfig::default(),
        )
        .unwrap();
        assert_eq!(ll, 0.0);
    }

    #[test]
    fn single_action_likelihood_is_zero() {
        let mdp = Mdp::new(2, 1, 1, vec![0.5, 0.5, 0.0, 1.0], vec![1.0, 2.0], 0.9, vec![1.0, 0.0])
            .unwrap();
        let data = TrajectoryDataset::new(vec![Trajectory::new("u", vec![(0, 0), (1, 0), (1, 0)])]);
        let ll = log_likelihood(&mdp, &RewardParams(vec![0.3]), &data, 5.0, &ViConfig::default())
            .unwrap();
        assert_abs_diff_eq!(ll, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn out_of_range_steps_rejected() {
        let mdp = two_state_mdp();
        let data = TrajectoryDataset::new(vec![Trajectory::new("u", vec![(0, 2)])]);
        assert!(data.counts(&mdp).is_err());
    }

    #[test]
    fn zero_sigma_keeps_theta_and_accepts() {
        let mdp = two_state_mdp();
        let data = TrajectoryDataset::new(vec![Trajectory::new("u", vec![(0, 0), (1, 1)])]);
        let p = params(1, 0.0);
        let mut rng = rng_from_seed(3);
        let theta0 = RewardParams(vec![0.25]);
        let out = sample_theta_step(&mdp, &theta0, &data, &p, &mut rng).unwrap();
        assert_eq!(out, theta0);

        let cfg = BirlConfig {
            mh: p,
            n_samples: 20,
            burn_in: 5,
            seed: 1,
            estimator: Estimator::Mean,
        };
        let summary = run_birl(&mdp, &data, &cfg).unwrap();
        assert_eq!(summary.acceptance_rate, 1.0);
        assert!(summary.samples.iter().all(|s| s.0 == vec![0.0]));
    }

    #[test]
    fn out_of_box_proposal_rejected() {
        let mdp = two_state_mdp();
        let data = TrajectoryDataset::new(vec![Trajectory::new("u", vec![(0, 0)])]);
        let mut p = params(1, 1e6);
        p.prior = PriorBox::uniform(1, -1.0, 1.0).unwrap();
        let theta0 = RewardParams(vec![0.5]);
        for seed in 0..20 {
            let mut rng = rng_from_seed(seed);
            let out = sample_theta_step(&mdp, &theta0, &data, &p, &mut rng).unwrap();
            assert_eq!(out, theta0);
        }
    }

    #[test]
    fn single_retained_sample_is_the_estimate() {
        let mdp = two_state_mdp();
        let data = TrajectoryDataset::new(vec![Trajectory::new("u", vec![(0, 0), (1, 1), (0, 0)])]);
        let cfg = BirlConfig {
            mh: params(1, 0.3),
            n_samples: 11,
            burn_in: 10,
            seed: 9,
            estimator: Estimator::Median,
        };
        let summary = run_birl(&mdp, &data, &cfg).unwrap();
        assert_eq!(summary.samples.len(), 1);
        assert_eq!(summary.point_estimate, summary.samples[0]);
        assert_eq!(summary.log_likelihood_trace.len(), 11);
        assert_eq!(summary.proposed, 11);
    }

    #[test]
    fn burn_in_must_leave_samples() {
        let mdp = two_state_mdp();
        let cfg = BirlConfig {
            mh: params(1, 0.3),
            n_samples: 10,
            burn_in: 10,
            seed: 0,
            estimator: Estimator::Median,
        };
        assert!(matches!(
            run_birl(&mdp, &TrajectoryDataset::default(), &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn estimators() {
        let samples: Vec<RewardParams> = [1.0, 5.0, 2.0, 10.0]
            .iter()
            .map(|&x| RewardParams(vec![x, -x]))
            .collect();
        assert_eq!(Estimator::Mean.estimate(&samples).0, vec![4.5, -4.5]);
        assert_eq!(Estimator::Median.estimate(&samples).0, vec![3.5, -3.5]);
    }

    #[test]
    fn prior_box_rejects_inverted_bounds() {
        assert!(PriorBox::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(PriorBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
        let b = PriorBox::uniform(2, -2.0, 4.0).unwrap();
        assert_eq!(b.center().0, vec![1.0, 1.0]);
        assert!(b.contains(&[4.0, -2.0]));
        assert!(!b.contains(&[4.1, 0.0]));
    }
}

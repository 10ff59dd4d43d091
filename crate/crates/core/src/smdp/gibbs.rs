//! Gibbs-style sampler for switched-MDP parameters.
//!
//! Each sweep decodes every trajectory under the current parameters, draws
//! the mode-transition matrix from its conjugate sticky Dirichlet posterior
//! given the expected transition counts, and moves each mode's reward
//! weights with a few Metropolis-Hastings steps on the steps assigned to it.

use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lattice::{viterbi, Lattice};
use super::{mode_q_tables, EmissionTable, ModeSequence, ModeStats, SmdpModel};
use crate::birl::{median, validate_mh, MhChain, MhParams, StepCounts, TrajectoryDataset};
use crate::error::{Error, Result};
use crate::mdp::{log_softmax_table, softmax_policy, Mdp, QFunction, RewardParams, StochasticPolicy};
use crate::rng::{rng_from_seed, ChainRng};

#[derive(Debug, Clone, PartialEq)]
pub struct DbcConfig {
    pub num_modes: usize,
    /// Sticky Dirichlet concentration: row `i` has prior `Dir(alpha + delta_i)`.
    pub alpha: f64,
    pub mh: MhParams,
    /// Metropolis-Hastings steps per mode per sweep.
    pub inner_steps: usize,
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl DbcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.num_modes < 1 {
            return Err(Error::Config("num_modes must be at least 1".into()));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        validate_mh(&self.mh, dim)?;
        if self.n_sweeps == 0 || self.burn_in >= self.n_sweeps {
            return Err(Error::Config(format!(
                "need burn_in ({}) < n_sweeps ({})",
                self.burn_in, self.n_sweeps
            )));
        }
        Ok(())
    }

    /// Prior mean of the sticky Dirichlet: `(alpha + [i == j]) / (L alpha + 1)`.
    pub fn sticky_prior_mean(&self) -> Vec<Vec<f64>> {
        let l = self.num_modes;
        let z = l as f64 * self.alpha + 1.0;
        (0..l)
            .map(|i| {
                (0..l)
                    .map(|j| (self.alpha + if i == j { 1.0 } else { 0.0 }) / z)
                    .collect()
            })
            .collect()
    }
}

/// Draws each row of the mode-transition matrix from
/// `Dir(alpha + delta_i + F_i)`.
pub fn sample_hmm_param(stats: &ModeStats, alpha: f64, rng: &mut ChainRng) -> Vec<Vec<f64>> {
    let l = stats.num_modes();
    (0..l)
        .map(|i| {
            let conc: Vec<f64> = (0..l)
                .map(|j| alpha + if i == j { 1.0 } else { 0.0 } + stats.get(i, j))
                .collect();
            sample_dirichlet(&conc, rng)
        })
        .collect()
}

fn sample_dirichlet(conc: &[f64], rng: &mut ChainRng) -> Vec<f64> {
    let mut draws: Vec<f64> = conc
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        // All gamma draws underflowed; only possible for tiny concentrations.
        let k = crate::mdp::argmax(conc);
        draws.iter_mut().enumerate().for_each(|(j, x)| *x = if j == k { 1.0 } else { 0.0 });
    }
    draws
}

/// Current sampler parameters with their solved `Q*` tables and policies.
#[derive(Debug, Clone, PartialEq)]
pub struct DbcState {
    pub thetas: Vec<RewardParams>,
    pub zeta: Vec<Vec<f64>>,
    pub qs: Vec<QFunction>,
    pub policies: Vec<StochasticPolicy>,
}

impl DbcState {
    pub fn new(mdp: &Mdp, thetas: Vec<RewardParams>, zeta: Vec<Vec<f64>>, mh: &MhParams) -> Result<Self> {
        let qs = mode_q_tables(mdp, &thetas, &mh.vi)?;
        let policies = qs
            .iter()
            .map(|q| softmax_policy(q, mh.eta))
            .collect::<Result<Vec<_>>>()?;
        Ok(DbcState {
            thetas,
            zeta,
            qs,
            policies,
        })
    }

    fn model(&self, eta: f64) -> Result<SmdpModel> {
        SmdpModel::with_uniform_start(self.thetas.clone(), self.zeta.clone(), eta)
    }
}

/// Moves each mode's weights on the steps currently assigned to it.
///
/// A mode with no assigned steps has likelihood one and random-walks under
/// the prior alone.
pub fn sample_mdp_param(
    mdp: &Mdp,
    data: &TrajectoryDataset,
    assignments: &[ModeSequence],
    prev: &DbcState,
    cfg: &DbcConfig,
    rng: &mut ChainRng,
) -> Result<(Vec<RewardParams>, Vec<QFunction>, Vec<StochasticPolicy>)> {
    let l = prev.thetas.len();
    if assignments.len() != data.trajectories.len() {
        return Err(Error::DimensionMismatch {
            what: "mode assignments",
            expected: data.trajectories.len(),
            got: assignments.len(),
        });
    }
    let mut counts = vec![StepCounts::zeros(mdp.num_states(), mdp.num_actions()); l];
    for (traj, seq) in data.trajectories.iter().zip(assignments) {
        if seq.len() != traj.len() {
            return Err(Error::DimensionMismatch {
                what: "mode sequence",
                expected: traj.len(),
                got: seq.len(),
            });
        }
        for (&(s, a), &k) in traj.steps.iter().zip(&seq.0) {
            if k >= l {
                return Err(Error::InvalidInput(format!("mode {k} out of range for {l} modes")));
            }
            counts[k].add(s, a, 1.0);
        }
    }

    let mut thetas = Vec::with_capacity(l);
    let mut qs = Vec::with_capacity(l);
    let mut policies = Vec::with_capacity(l);
    for (k, mode_counts) in counts.iter().enumerate() {
        let mut chain = MhChain::with_q(
            mdp,
            mode_counts,
            &cfg.mh,
            prev.thetas[k].clone(),
            prev.qs[k].clone(),
        )?;
        for _ in 0..cfg.inner_steps {
            chain.step(rng)?;
        }
        let (theta, q) = chain.into_parts()?;
        policies.push(softmax_policy(&q, cfg.mh.eta)?);
        thetas.push(theta);
        qs.push(q);
    }
    Ok((thetas, qs, policies))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub state: DbcState,
    /// Lattices computed under the parameters the sweep started from.
    pub lattices: Vec<Lattice>,
    pub stats: ModeStats,
}

/// One sampler sweep: decode all users, then resample `zeta` and the weights.
pub fn dbc_sweep(
    mdp: &Mdp,
    data: &TrajectoryDataset,
    state: &DbcState,
    cfg: &DbcConfig,
    rng: &mut ChainRng,
) -> Result<SweepOutput> {
    let model = state.model(cfg.mh.eta)?;
    let log_policies: Vec<Vec<f64>> = state
        .qs
        .iter()
        .map(|q| log_softmax_table(q, cfg.mh.eta))
        .collect();

    let lattices: Vec<Lattice> = data
        .trajectories
        .par_iter()
        .map(|traj| {
            let em = EmissionTable::from_log_policies(&log_policies, mdp.num_actions(), traj);
            viterbi(&em, &model)
        })
        .collect();

    // Summed in user order so the result does not depend on scheduling.
    let mut stats = ModeStats::zeros(cfg.num_modes);
    for lat in &lattices {
        stats.accumulate(&lat.stats);
    }

    let zeta = sample_hmm_param(&stats, cfg.alpha, rng);
    let paths: Vec<ModeSequence> = lattices.iter().map(|l| l.path.clone()).collect();
    let (thetas, qs, policies) = sample_mdp_param(mdp, data, &paths, state, cfg, rng)?;

    Ok(SweepOutput {
        state: DbcState {
            thetas,
            zeta,
            qs,
            policies,
        },
        lattices,
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DbcResult {
    /// Median weights and mean transition matrix over retained sweeps,
    /// with modes sorted by descending occupancy.
    pub model: SmdpModel,
    /// MAP mode sequence per user from the final sweep.
    pub sequences: Vec<ModeSequence>,
    /// Largest per-step mode posterior from the final sweep.
    pub max_marginals: Vec<Vec<f64>>,
    /// Steps assigned to each mode in the final sequences.
    pub occupancy: Vec<usize>,
    pub theta_trace: Vec<Vec<RewardParams>>,
    pub zeta_trace: Vec<Vec<Vec<f64>>>,
}

pub fn run_dbc(mdp: &Mdp, data: &TrajectoryDataset, cfg: &DbcConfig) -> Result<DbcResult> {
    cfg.validate(mdp.feature_dim())?;
    data.validate(mdp)?;
    let l = cfg.num_modes;
    let mut rng = rng_from_seed(cfg.seed);
    let thetas: Vec<RewardParams> = (0..l).map(|_| cfg.mh.prior.sample(&mut rng)).collect();
    let mut state = DbcState::new(mdp, thetas, cfg.sticky_prior_mean(), &cfg.mh)?;

    let mut theta_trace = Vec::with_capacity(cfg.n_sweeps - cfg.burn_in);
    let mut zeta_trace = Vec::with_capacity(cfg.n_sweeps - cfg.burn_in);
    let mut last_lattices = Vec::new();
    for sweep in 0..cfg.n_sweeps {
        let out = dbc_sweep(mdp, data, &state, cfg, &mut rng)?;
        state = out.state;
        if sweep >= cfg.burn_in {
            theta_trace.push(state.thetas.clone());
            zeta_trace.push(state.zeta.clone());
        }
        last_lattices = out.lattices;
    }

    let dim = mdp.feature_dim();
    let mut col = Vec::with_capacity(theta_trace.len());
    let median_thetas: Vec<RewardParams> = (0..l)
        .map(|k| {
            RewardParams(
                (0..dim)
                    .map(|d| {
                        col.clear();
                        col.extend(theta_trace.iter().map(|ths| ths[k].0[d]));
                        median(&mut col)
                    })
                    .collect(),
            )
        })
        .collect();
    let n = zeta_trace.len() as f64;
    let mean_zeta: Vec<Vec<f64>> = (0..l)
        .map(|i| {
            (0..l)
                .map(|j| zeta_trace.iter().map(|z| z[i][j]).sum::<f64>() / n)
                .collect()
        })
        .collect();

    let mut occupancy = vec![0usize; l];
    for lat in &last_lattices {
        for &k in &lat.path.0 {
            occupancy[k] += 1;
        }
    }
    // order[new] = old
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&a, &b| occupancy[b].cmp(&occupancy[a]).then(a.cmp(&b)));
    let mut rank = vec![0usize; l];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }

    let permute_thetas = |ths: &[RewardParams]| -> Vec<RewardParams> {
        order.iter().map(|&o| ths[o].clone()).collect()
    };
    let permute_zeta = |z: &[Vec<f64>]| -> Vec<Vec<f64>> {
        order
            .iter()
            .map(|&i| order.iter().map(|&j| z[i][j]).collect())
            .collect()
    };

    let model = SmdpModel::with_uniform_start(
        permute_thetas(&median_thetas),
        normalize_rows(permute_zeta(&mean_zeta)),
        cfg.mh.eta,
    )?;
    let sequences = last_lattices
        .iter()
        .map(|lat| ModeSequence(lat.path.0.iter().map(|&k| rank[k]).collect()))
        .collect();
    let max_marginals = last_lattices.iter().map(Lattice::max_marginals).collect();

    Ok(DbcResult {
        model,
        sequences,
        max_marginals,
        occupancy: order.iter().map(|&o| occupancy[o]).collect(),
        theta_trace: theta_trace.iter().map(|t| permute_thetas(t)).collect(),
        zeta_trace: zeta_trace.iter().map(|z| permute_zeta(z)).collect(),
    })
}

// Averages of stochastic rows drift from 1 by rounding only.
fn normalize_rows(mut z: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    for row in &mut z {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    z
}

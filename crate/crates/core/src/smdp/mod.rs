//! Switched MDPs: a hidden Markov chain over behavior modes, each mode
//! acting through the Boltzmann policy of its own reward weights.
//!
//! [`lattice`] holds the exact HMM computations (MAP path and pairwise
//! transition posteriors); [`gibbs`] holds the sampler that alternates
//! between mode inference and parameter updates.

pub mod gibbs;
pub mod lattice;

use serde::{Deserialize, Serialize};

use crate::birl::Trajectory;
use crate::error::{Error, Result};
use crate::mdp::{log_softmax_table, mdp_vi, Mdp, QFunction, RewardParams, ViConfig};

pub use gibbs::{
    dbc_sweep, run_dbc, sample_hmm_param, sample_mdp_param, DbcConfig, DbcResult, DbcState,
    SweepOutput,
};
pub use lattice::{viterbi, Lattice};

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmdpModel {
    pub thetas: Vec<RewardParams>,
    /// Row-stochastic `L x L` mode-transition matrix.
    pub zeta: Vec<Vec<f64>>,
    pub initial_modes: Vec<f64>,
    pub eta: f64,
}

impl SmdpModel {
    pub fn new(
        thetas: Vec<RewardParams>,
        zeta: Vec<Vec<f64>>,
        initial_modes: Vec<f64>,
        eta: f64,
    ) -> Result<Self> {
        let model = SmdpModel {
            thetas,
            zeta,
            initial_modes,
            eta,
        };
        model.validate()?;
        Ok(model)
    }

    /// Uniform initial mode distribution.
    pub fn with_uniform_start(thetas: Vec<RewardParams>, zeta: Vec<Vec<f64>>, eta: f64) -> Result<Self> {
        let l = thetas.len().max(1);
        SmdpModel::new(thetas, zeta, vec![1.0 / l as f64; l], eta)
    }

    pub fn num_modes(&self) -> usize {
        self.thetas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.thetas.len();
        if l == 0 {
            return Err(Error::InvalidInput("a switched MDP needs at least one mode".into()));
        }
        if self.zeta.len() != l || self.zeta.iter().any(|r| r.len() != l) {
            return Err(Error::DimensionMismatch {
                what: "mode transition matrix",
                expected: l * l,
                got: self.zeta.iter().map(Vec::len).sum(),
            });
        }
        if self.initial_modes.len() != l {
            return Err(Error::DimensionMismatch {
                what: "initial mode distribution",
                expected: l,
                got: self.initial_modes.len(),
            });
        }
        for (i, row) in self.zeta.iter().enumerate() {
            if !is_distribution(row) {
                return Err(Error::InvalidInput(format!(
                    "mode transition row {i} is not a probability vector"
                )));
            }
        }
        if !is_distribution(&self.initial_modes) {
            return Err(Error::InvalidInput(
                "initial mode distribution is not a probability vector".into(),
            ));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidInput(format!("eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

fn is_distribution(row: &[f64]) -> bool {
    row.iter().all(|&p| p >= 0.0 && p.is_finite()) && (row.iter().sum::<f64>() - 1.0).abs() <= PROB_TOL
}

/// Latent mode per step of a trajectory (0-based mode indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModeSequence(pub Vec<usize>);

impl ModeSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Expected (or counted) mode transitions, `counts[i][j]` for `i -> j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    num_modes: usize,
    counts: Vec<f64>,
}

impl ModeStats {
    pub fn zeros(num_modes: usize) -> Self {
        ModeStats {
            num_modes,
            counts: vec![0.0; num_modes * num_modes],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let l = rows.len();
        if rows.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidInput("transition counts must be square".into()));
        }
        if rows.iter().flatten().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput("transition counts must be >= 0".into()));
        }
        Ok(ModeStats {
            num_modes: l,
            counts: rows.concat(),
        })
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.num_modes + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.counts[i * self.num_modes..(i + 1) * self.num_modes]
    }

    pub(crate) fn add_at(&mut self, i: usize, j: usize, v: f64) {
        self.counts[i * self.num_modes + j] += v;
    }

    pub fn accumulate(&mut self, other: &ModeStats) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Per-step, per-mode log-probabilities of the observed actions (`T x L`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable {
    num_modes: usize,
    values: Vec<f64>,
}

impl EmissionTable {
    pub fn from_values(num_modes: usize, values: Vec<f64>) -> Result<Self> {
        if num_modes == 0 || !values.len().is_multiple_of(num_modes) {
            return Err(Error::InvalidInput(format!(
                "emission table of {} entries does not split into {num_modes} modes",
                values.len()
            )));
        }
        Ok(EmissionTable { num_modes, values })
    }

    /// Emissions from per-mode `log pi` tables laid out like Q tables.
    pub fn from_log_policies(log_policies: &[Vec<f64>], num_actions: usize, traj: &Trajectory) -> Self {
        let l = log_policies.len();
        let mut values = Vec::with_capacity(traj.len() * l);
        for &(s, a) in &traj.steps {
            values.extend(log_policies.iter().map(|lp| lp[s * num_actions + a]));
        }
        EmissionTable {
            num_modes: l,
            values,
        }
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.num_modes
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.num_modes..(t + 1) * self.num_modes]
    }
}

/// Solves `Q*` for every mode.
pub fn mode_q_tables(mdp: &Mdp, thetas: &[RewardParams], vi: &ViConfig) -> Result<Vec<QFunction>> {
    thetas.iter().map(|th| mdp_vi(mdp, th, vi)).collect()
}

/// `log pi_k(s_t, a_t)` for each step and mode, solving each mode's MDP once.
pub fn emission_logprobs(
    mdp: &Mdp,
    model: &SmdpModel,
    traj: &Trajectory,
    vi: &ViConfig,
) -> Result<EmissionTable> {
    model.validate()?;
    if let Some(&(s, a)) = traj
        .steps
        .iter()
        .find(|&&(s, a)| s >= mdp.num_states() || a >= mdp.num_actions())
    {
        return Err(Error::InvalidInput(format!(
            "user {}: step (state {s}, action {a}) outside the MDP",
            traj.user_id
        )));
    }
    let tables: Vec<Vec<f64>> = mode_q_tables(mdp, &model.thetas, vi)?
        .iter()
        .map(|q| log_softmax_table(q, model.eta))
        .collect();
    Ok(EmissionTable::from_log_policies(&tables, mdp.num_actions(), traj))
}

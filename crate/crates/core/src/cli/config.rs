//! Run configuration: a flat key-value TOML file.
//!
//! Every key is optional; missing keys take the defaults below.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `seed` | 20190501 | master seed |
//! | `threads` | all cores | worker threads (never affects results) |
//! | `eta` | 5.0 | Boltzmann confidence |
//! | `discount` | 0.9 | MDP discount |
//! | `session_gap_ms` | 1800000 | gap that splits sessions |
//! | `features` | indicator | expert feature file (JSON) |
//! | `vi_tol`, `vi_max_iter` | 1e-9, 10000 | value iteration |
//! | `proposal_sigma` | 0.1 | random-walk step |
//! | `prior_lo`, `prior_hi` | -1, 1 | uniform prior box |
//! | `n_samples`, `burn_in` | 5000, 1000 | per-user MH chain |
//! | `estimator` | median | `median` or `mean` |
//! | `lp_sigma` | median distance | label propagation kernel width |
//! | `lp_tol`, `lp_max_iter` | 1e-8, 10000 | label propagation stopping |
//! | `num_modes` | 3 | switched-model modes |
//! | `alpha` | 1.0 | Dirichlet concentration |
//! | `inner_steps` | 10 | MH moves per mode per sweep |
//! | `n_sweeps`, `dbc_burn_in` | 500, 100 | Gibbs sweeps |
//! | `timeline_users` | 3 | users drawn in the timeline plot |

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::birl::{BirlConfig, Estimator, MhParams, PriorBox};
use crate::error::{Error, Result};
use crate::label_prop::LpConfig;
use crate::mdp::ViConfig;
use crate::mooc::{SbcConfig, DEFAULT_DISCOUNT, DEFAULT_SESSION_GAP_MS};
use crate::smdp::DbcConfig;
use crate::synth::DEFAULT_SEED;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Kept out of manifests: results do not depend on it.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
    pub eta: f64,
    pub discount: f64,
    pub session_gap_ms: i64,
    pub features: Option<PathBuf>,
    pub vi_tol: f64,
    pub vi_max_iter: usize,
    pub proposal_sigma: f64,
    pub prior_lo: f64,
    pub prior_hi: f64,
    pub n_samples: usize,
    pub burn_in: usize,
    pub estimator: Estimator,
    pub lp_sigma: Option<f64>,
    pub lp_tol: f64,
    pub lp_max_iter: usize,
    pub num_modes: usize,
    pub alpha: f64,
    pub inner_steps: usize,
    pub n_sweeps: usize,
    pub dbc_burn_in: usize,
    pub timeline_users: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let vi = ViConfig::default();
        let lp = LpConfig::default();
        RunConfig {
            seed: DEFAULT_SEED,
            threads: None,
            eta: 5.0,
            discount: DEFAULT_DISCOUNT,
            session_gap_ms: DEFAULT_SESSION_GAP_MS,
            features: None,
            vi_tol: vi.tol,
            vi_max_iter: vi.max_iter,
            proposal_sigma: 0.1,
            prior_lo: -1.0,
            prior_hi: 1.0,
            n_samples: 5000,
            burn_in: 1000,
            estimator: Estimator::Median,
            lp_sigma: None,
            lp_tol: lp.tol,
            lp_max_iter: lp.max_iter,
            num_modes: 3,
            alpha: 1.0,
            inner_steps: 10,
            n_sweeps: 500,
            dbc_burn_in: 100,
            timeline_users: 3,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Checks the constraints that do not depend on the feature dimension.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be finite and non-negative, got {}", self.eta));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount must lie in (0, 1), got {}", self.discount));
        }
        if self.session_gap_ms < 0 {
            return bad("session_gap_ms must be non-negative".into());
        }
        if !(self.vi_tol > 0.0) || self.vi_max_iter == 0 {
            return bad("vi_tol must be positive and vi_max_iter at least 1".into());
        }
        if !(self.proposal_sigma >= 0.0 && self.proposal_sigma.is_finite()) {
            return bad("proposal_sigma must be finite and non-negative".into());
        }
        if !(self.prior_lo < self.prior_hi) || !self.prior_lo.is_finite() || !self.prior_hi.is_finite() {
            return bad(format!(
                "prior box needs finite prior_lo < prior_hi, got [{}, {}]",
                self.prior_lo, self.prior_hi
            ));
        }
        if self.burn_in >= self.n_samples {
            return bad("burn_in must be smaller than n_samples".into());
        }
        if let Some(s) = self.lp_sigma {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("lp_sigma must be positive, got {s}"));
            }
        }
        if !(self.lp_tol > 0.0) || self.lp_max_iter == 0 {
            return bad("lp_tol must be positive and lp_max_iter at least 1".into());
        }
        if self.num_modes < 1 {
            return bad("num_modes must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.dbc_burn_in >= self.n_sweeps {
            return bad("dbc_burn_in must be smaller than n_sweeps".into());
        }
        Ok(())
    }

    pub fn vi(&self) -> ViConfig {
        ViConfig {
            tol: self.vi_tol,
            max_iter: self.vi_max_iter,
        }
    }

    pub fn mh(&self, dim: usize) -> Result<MhParams> {
        Ok(MhParams {
            eta: self.eta,
            proposal_sigma: self.proposal_sigma,
            prior: PriorBox::uniform(dim, self.prior_lo, self.prior_hi)?,
            vi: self.vi(),
        })
    }

    pub fn sbc(&self, dim: usize) -> Result<SbcConfig> {
        Ok(SbcConfig {
            birl: BirlConfig {
                mh: self.mh(dim)?,
                n_samples: self.n_samples,
                burn_in: self.burn_in,
                seed: self.seed,
                estimator: self.estimator,
            },
            lp_sigma: self.lp_sigma,
            lp: LpConfig {
                tol: self.lp_tol,
                max_iter: self.lp_max_iter,
            },
        })
    }

    pub fn dbc(&self, dim: usize) -> Result<DbcConfig> {
        Ok(DbcConfig {
            num_modes: self.num_modes,
            alpha: self.alpha,
            mh: self.mh(dim)?,
            inner_steps: self.inner_steps,
            n_sweeps: self.n_sweeps,
            burn_in: self.dbc_burn_in,
            seed: self.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn keys_override_defaults() {
        let cfg = RunConfig::parse("eta = 2.5\nnum_modes = 4\nestimator = \"mean\"\nlp_sigma = 0.3\n").unwrap();
        assert_eq!(cfg.eta, 2.5);
        assert_eq!(cfg.num_modes, 4);
        assert_eq!(cfg.estimator, Estimator::Mean);
        assert_eq!(cfg.lp_sigma, Some(0.3));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse("etaa = 1.0").is_err());
        assert!(RunConfig::parse("num_modes = 0").is_err());
        assert!(RunConfig::parse("discount = 1.0").is_err());
        assert!(RunConfig::parse("prior_lo = 1.0\nprior_hi = -1.0").is_err());
        assert!(RunConfig::parse("threads = 0").is_err());
    }

    #[test]
    fn json_round_trip_drops_threads() {
        let cfg = RunConfig {
            threads: Some(4),
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back.threads, None);
        assert_eq!(RunConfig { threads: None, ..cfg }, back);
    }
}

//! Exact inference on the mode lattice of one trajectory.
//!
//! The MAP path comes from max-sum dynamic programming with backtracking;
//! the pairwise transition posteriors `F_ij = sum_t P(z_t = i, z_t+1 = j | y)`
//! and per-step marginals come from the sum-product forward-backward pass.
//! Everything runs in log space.

use super::{EmissionTable, ModeSequence, ModeStats, SmdpModel};
use crate::mdp::log_sum_exp;

#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    pub path: ModeSequence,
    pub stats: ModeStats,
    /// `P(z_t = k | y)`, row-major `T x L`.
    pub marginals: Vec<f64>,
    pub log_evidence: f64,
}

impl Lattice {
    pub fn marginal_row(&self, t: usize) -> &[f64] {
        let l = self.stats.num_modes();
        &self.marginals[t * l..(t + 1) * l]
    }

    /// Largest mode posterior at each step.
    pub fn max_marginals(&self) -> Vec<f64> {
        let l = self.stats.num_modes();
        self.marginals
            .chunks(l)
            .map(|r| r.iter().copied().fold(0.0, f64::max))
            .collect()
    }
}

fn ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// MAP mode path and transition posteriors for one emission table.
///
/// Ties in the max-sum recursion go to the lower mode index.
pub fn viterbi(emissions: &EmissionTable, model: &SmdpModel) -> Lattice {
    let l = model.num_modes();
    assert_eq!(emissions.num_modes(), l, "emission table and model disagree on L");
    let t_len = emissions.len();
    let log_zeta: Vec<f64> = model.zeta.iter().flatten().map(|&p| ln(p)).collect();
    let log_init: Vec<f64> = model.initial_modes.iter().map(|&p| ln(p)).collect();

    if t_len == 0 {
        return Lattice {
            path: ModeSequence(Vec::new()),
            stats: ModeStats::zeros(l),
            marginals: Vec::new(),
            log_evidence: 0.0,
        };
    }

    // Max-sum.
    let mut delta: Vec<f64> = log_init
        .iter()
        .zip(emissions.row(0))
        .map(|(a, b)| a + b)
        .collect();
    let mut back = vec![0usize; t_len * l];
    let mut next = vec![0.0; l];
    for t in 1..t_len {
        let e = emissions.row(t);
        for j in 0..l {
            let mut best_i = 0;
            let mut best = delta[0] + log_zeta[j];
            for i in 1..l {
                let v = delta[i] + log_zeta[i * l + j];
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            next[j] = best + e[j];
            back[t * l + j] = best_i;
        }
        std::mem::swap(&mut delta, &mut next);
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = crate::mdp::argmax(&delta);
    for t in (1..t_len).rev() {
        path[t - 1] = back[t * l + path[t]];
    }

    // Sum-product.
    let mut alpha = vec![0.0; t_len * l];
    for k in 0..l {
        alpha[k] = log_init[k] + emissions.row(0)[k];
    }
    let mut scratch = vec![0.0; l];
    for t in 1..t_len {
        let e = emissions.row(t);
        for j in 0..l {
            for i in 0..l {
                scratch[i] = alpha[(t - 1) * l + i] + log_zeta[i * l + j];
            }
            alpha[t * l + j] = e[j] + log_sum_exp(&scratch);
        }
    }
    let mut beta = vec![0.0; t_len * l];
    for t in (0..t_len - 1).rev() {
        let e = emissions.row(t + 1);
        for i in 0..l {
            for j in 0..l {
                scratch[j] = log_zeta[i * l + j] + e[j] + beta[(t + 1) * l + j];
            }
            beta[t * l + i] = log_sum_exp(&scratch);
        }
    }
    let log_evidence = log_sum_exp(&alpha[(t_len - 1) * l..]);

    let marginals: Vec<f64> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| (a + b - log_evidence).exp())
        .collect();

    let mut stats = ModeStats::zeros(l);
    for t in 0..t_len - 1 {
        let e = emissions.row(t + 1);
        for i in 0..l {
            let a = alpha[t * l + i];
            if a == f64::NEG_INFINITY {
                continue;
            }
            for j in 0..l {
                let v = a + log_zeta[i * l + j] + e[j] + beta[(t + 1) * l + j] - log_evidence;
                stats.add_at(i, j, v.exp());
            }
        }
    }

    Lattice {
        path: ModeSequence(path),
        stats,
        marginals,
        log_evidence,
    }
}

//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use behavior_irl::birl::{Trajectory, TrajectoryDataset};
use behavior_irl::mdp::{Mdp, RewardParams};
use behavior_irl::rng::ChainRng;
use behavior_irl::smdp::{EmissionTable, SmdpModel};

/// Dense random MDP with Gamma(1)-based rows and features in `[-1, 1]`.
pub fn random_mdp(rng: &mut ChainRng, n_s: usize, n_a: usize, dim: usize, nu: f64) -> Mdp {
    let mut p = Vec::with_capacity(n_s * n_a * n_s);
    for _ in 0..n_s * n_a {
        let row: Vec<f64> = (0..n_s).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
        let z: f64 = row.iter().sum();
        p.extend(row.iter().map(|x| x / z));
    }
    let phi: Vec<f64> = (0..n_s * n_a * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..n_s).map(|_| rng.random::<f64>() + 0.1).collect();
    let z: f64 = x0.iter().sum();
    Mdp::new(n_s, n_a, dim, p, phi, nu, x0.iter().map(|x| x / z).collect()).unwrap()
}

pub fn random_theta(rng: &mut ChainRng, dim: usize) -> RewardParams {
    RewardParams((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Reward `θ·φ(s,a)` by explicit summation.
pub fn reward(mdp: &Mdp, theta: &RewardParams, s: usize, a: usize) -> f64 {
    mdp.feature(s, a).iter().zip(&theta.0).map(|(f, t)| f * t).sum()
}

/// Exact value of a deterministic policy: solves `(I - ν P_π) V = R_π`.
pub fn deterministic_policy_value(mdp: &Mdp, theta: &RewardParams, policy: &[usize]) -> Vec<f64> {
    let n = mdp.num_states();
    let nu = mdp.discount();
    let mut a_mat = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in 0..n {
        let a = policy[s];
        b[s] = reward(mdp, theta, s, a);
        for s2 in 0..n {
            a_mat[(s, s2)] -= nu * mdp.transition(s, a, s2);
        }
    }
    let v = a_mat.lu().solve(&b).expect("I - νP is invertible");
    v.iter().copied().collect()
}

/// All `N_a^{N_s}` deterministic policies.
pub fn all_policies(n_s: usize, n_a: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..n_s {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n_a).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

/// Best achievable value per state over every deterministic policy.
pub fn enumerated_optimal_values(mdp: &Mdp, theta: &RewardParams) -> Vec<f64> {
    let mut best = vec![f64::NEG_INFINITY; mdp.num_states()];
    for pol in all_policies(mdp.num_states(), mdp.num_actions()) {
        let v = deterministic_policy_value(mdp, theta, &pol);
        for (b, x) in best.iter_mut().zip(v) {
            *b = b.max(x);
        }
    }
    best
}

/// Softmax by the textbook formula, with a shift only when needed to stay finite.
pub fn softmax_row(q: &[f64], eta: f64) -> Vec<f64> {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|x| (eta * (x - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// Unnormalized log posterior on the midpoints of an `n`-cell grid over
/// `[lo, hi]` for a 1-dim weight, normalized to cell masses.
pub fn grid_posterior(log_lik: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let ll: Vec<f64> = xs.iter().map(|&x| log_lik(x)).collect();
    let m = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ll.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    (xs, w.iter().map(|x| x / z).collect())
}

/// Total variation between a sample histogram and grid masses, both
/// aggregated into `bins` equal cells over `[lo, hi]`.
pub fn histogram_tv(samples: &[f64], grid_x: &[f64], grid_p: &[f64], lo: f64, hi: f64, bins: usize) -> f64 {
    let cell = |x: f64| (((x - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1);
    let mut emp = vec![0.0; bins];
    for &x in samples {
        emp[cell(x)] += 1.0 / samples.len() as f64;
    }
    let mut exact = vec![0.0; bins];
    for (&x, &p) in grid_x.iter().zip(grid_p) {
        exact[cell(x)] += p;
    }
    0.5 * emp.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Clamped fixed point of row-normalized propagation by direct solve:
/// `Y_U = (I - T̄_uu)^{-1} T̄_ul Y_L` with `T̄` the row-normalized kernel.
pub fn closed_form_label_prop(
    points: &[Vec<f64>],
    labels: &[Option<usize>],
    num_classes: usize,
    sigma: f64,
) -> Vec<Vec<f64>> {
    let m = points.len();
    let mut w = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let d2: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            w[(i, j)] = (-d2 / (sigma * sigma)).exp();
        }
    }
    let mut t = w.clone();
    for j in 0..m {
        let col: f64 = w.column(j).sum();
        for i in 0..m {
            t[(i, j)] = w[(i, j)] / col;
        }
    }
    for i in 0..m {
        let row: f64 = t.row(i).sum();
        for j in 0..m {
            t[(i, j)] /= row;
        }
    }
    let lab: Vec<usize> = (0..m).filter(|&i| labels[i].is_some()).collect();
    let unl: Vec<usize> = (0..m).filter(|&i| labels[i].is_none()).collect();
    let mut out = vec![vec![0.0; num_classes]; m];
    for &i in &lab {
        out[i][labels[i].unwrap()] = 1.0;
    }
    if unl.is_empty() {
        return out;
    }
    let u = unl.len();
    let mut a = DMatrix::<f64>::identity(u, u);
    for (r, &i) in unl.iter().enumerate() {
        for (c, &j) in unl.iter().enumerate() {
            a[(r, c)] -= t[(i, j)];
        }
    }
    let mut rhs = DMatrix::<f64>::zeros(u, num_classes);
    for (r, &i) in unl.iter().enumerate() {
        for &j in &lab {
            rhs[(r, labels[j].unwrap())] += t[(i, j)];
        }
    }
    let y = a.lu().solve(&rhs).expect("I - T̄_uu is invertible");
    for (r, &i) in unl.iter().enumerate() {
        for c in 0..num_classes {
            out[i][c] = y[(r, c)];
        }
    }
    out
}

/// MAP path, pairwise expected transitions and per-step marginals by
/// enumerating every mode sequence.
pub struct Enumerated {
    pub map_path: Vec<usize>,
    pub pairwise: Vec<Vec<f64>>,
    pub marginals: Vec<Vec<f64>>,
}

pub fn enumerate_lattice(em: &EmissionTable, model: &SmdpModel) -> Enumerated {
    let l = model.num_modes();
    let t_len = em.len();
    let total = l.pow(t_len as u32);
    let mut seqs = Vec::with_capacity(total);
    let mut logp = Vec::with_capacity(total);
    for code in 0..total {
        let mut z = vec![0usize; t_len];
        let mut c = code;
        for t in (0..t_len).rev() {
            z[t] = c % l;
            c /= l;
        }
        let mut lp = model.initial_modes[z[0]].ln() + em.row(0)[z[0]];
        for t in 1..t_len {
            lp += model.zeta[z[t - 1]][z[t]].ln() + em.row(t)[z[t]];
        }
        seqs.push(z);
        logp.push(lp);
    }
    let best = (0..total)
        .max_by(|&a, &b| logp[a].total_cmp(&logp[b]).then(b.cmp(&a)))
        .unwrap();
    let m = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logp.iter().map(|x| (x - m).exp()).sum();
    let mut pairwise = vec![vec![0.0; l]; l];
    let mut marginals = vec![vec![0.0; l]; t_len];
    for (seq, lp) in seqs.iter().zip(&logp) {
        let p = (lp - m).exp() / z;
        for t in 0..t_len {
            marginals[t][seq[t]] += p;
            if t + 1 < t_len {
                pairwise[seq[t]][seq[t + 1]] += p;
            }
        }
    }
    Enumerated {
        map_path: seqs[best].clone(),
        pairwise,
        marginals,
    }
}

pub fn single_user(steps: Vec<(usize, usize)>) -> TrajectoryDataset {
    TrajectoryDataset::new(vec![Trajectory::new("u", steps)])
}

//! Finite Markov decision processes with linearly parametrized rewards.
//!
//! An [`Mdp`] carries everything except the reward weights: the transition
//! kernel, the feature map, the discount and the initial state distribution.
//! Rewards are `R(s, a) = theta . phi(s, a)` for a [`RewardParams`] vector.
//!
//! Value iteration works on the state-action table directly. Successor lists
//! are precomputed at construction so each Bellman backup only touches the
//! non-zero entries of the kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// Stopping rule for value iteration and policy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViConfig {
    /// Target sup-norm distance to the exact fixed point.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ViConfig {
    fn default() -> Self {
        ViConfig {
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpData", into = "MdpData")]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    feature_dim: usize,
    transitions: Vec<f64>,
    features: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
    // (successor, probability) pairs for each (s, a), flattened.
    succ_offsets: Vec<usize>,
    succ: Vec<(usize, f64)>,
}

/// Plain serialized form of an [`Mdp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpData {
    pub num_states: usize,
    pub num_actions: usize,
    pub feature_dim: usize,
    /// Row-major `[s][a][s']`.
    pub transitions: Vec<f64>,
    /// Row-major `[s][a][k]`.
    pub features: Vec<f64>,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
}

impl TryFrom<MdpData> for Mdp {
    type Error = Error;

    fn try_from(d: MdpData) -> Result<Self> {
        Mdp::new(
            d.num_states,
            d.num_actions,
            d.feature_dim,
            d.transitions,
            d.features,
            d.discount,
            d.initial_dist,
        )
    }
}

impl From<Mdp> for MdpData {
    fn from(m: Mdp) -> Self {
        MdpData {
            num_states: m.num_states,
            num_actions: m.num_actions,
            feature_dim: m.feature_dim,
            transitions: m.transitions,
            features: m.features,
            discount: m.discount,
            initial_dist: m.initial_dist,
        }
    }
}

impl Mdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        feature_dim: usize,
        transitions: Vec<f64>,
        features: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidMdp(
                "state and action spaces must be non-empty".into(),
            ));
        }
        let n_sa = num_states * num_actions;
        check_len("transitions", n_sa * num_states, transitions.len())?;
        check_len("features", n_sa * feature_dim, features.len())?;
        check_len("initial distribution", num_states, initial_dist.len())?;
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidMdp(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidMdp("features must be finite".into()));
        }
        for (sa, row) in transitions.chunks(num_states).enumerate() {
            check_distribution(row).map_err(|msg| {
                Error::InvalidMdp(format!(
                    "transition row (s={}, a={}) {msg}",
                    sa / num_actions,
                    sa % num_actions
                ))
            })?;
        }
        check_distribution(&initial_dist)
            .map_err(|msg| Error::InvalidMdp(format!("initial distribution {msg}")))?;

        let mut succ_offsets = Vec::with_capacity(n_sa + 1);
        let mut succ = Vec::new();
        succ_offsets.push(0);
        for row in transitions.chunks(num_states) {
            succ.extend(
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(s2, &p)| (s2, p)),
            );
            succ_offsets.push(succ.len());
        }

        Ok(Mdp {
            num_states,
            num_actions,
            feature_dim,
            transitions,
            features,
            discount,
            initial_dist,
            succ_offsets,
            succ,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[(s * self.num_actions + a) * self.num_states + next]
    }

    /// Full next-state distribution for `(s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    /// Non-zero successors of `(s, a)` with their probabilities.
    pub fn successors(&self, s: usize, a: usize) -> &[(usize, f64)] {
        let sa = s * self.num_actions + a;
        &self.succ[self.succ_offsets[sa]..self.succ_offsets[sa + 1]]
    }

    pub fn feature(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.feature_dim;
        &self.features[start..start + self.feature_dim]
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err("has a negative or non-finite entry".into());
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(format!("sums to {total}, not 1"));
    }
    Ok(())
}

/// Reward weights `theta`, paired with an [`Mdp`] of the same feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardParams(pub Vec<f64>);

impl RewardParams {
    pub fn zeros(dim: usize) -> Self {
        RewardParams(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for RewardParams {
    fn from(v: Vec<f64>) -> Self {
        RewardParams(v)
    }
}

/// Dense state-action table, row-major by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QFunction {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QFunction {
    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        check_len("Q table", num_states * num_actions, values.len())?;
        Ok(QFunction {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn state_values(&self) -> Vec<f64> {
        (0..self.num_states).map(|s| row_max(self.row(s))).collect()
    }

    /// Greedy policy, lowest action index on ties.
    pub fn greedy(&self) -> Vec<usize> {
        (0..self.num_states).map(|s| argmax(self.row(s))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn from_probs(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_len("policy table", num_states * num_actions, probs.len())?;
        for (s, row) in probs.chunks(num_actions).enumerate() {
            check_distribution(row)
                .map_err(|msg| Error::InvalidInput(format!("policy row {s} {msg}")))?;
        }
        Ok(StochasticPolicy {
            num_states,
            num_actions,
            probs,
        })
    }

    /// Deterministic policy playing `actions[s]` in state `s`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        StochasticPolicy {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }
}

pub(crate) fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `log(sum(exp(xs)))` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = row_max(xs);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Reward table `R(s, a) = theta . phi(s, a)`, row-major by state.
pub fn reward_of(mdp: &Mdp, theta: &RewardParams) -> Result<Vec<f64>> {
    check_len("reward parameters", mdp.feature_dim, theta.dim())?;
    let d = mdp.feature_dim;
    Ok((0..mdp.num_states * mdp.num_actions)
        .map(|sa| {
            mdp.features[sa * d..(sa + 1) * d]
                .iter()
                .zip(&theta.0)
                .map(|(f, t)| f * t)
                .sum()
        })
        .collect())
}

/// Optimal state-action values by value iteration.
///
/// Iterates the Bellman optimality operator from `Q = 0` until the residual
/// `||T Q - Q||` drops to `tol (1 - nu) / nu`, which bounds the distance of
/// the returned table to the exact `Q*` by `tol`.
pub fn mdp_vi(mdp: &Mdp, theta: &RewardParams, cfg: &ViConfig) -> Result<QFunction> {
    let reward = reward_of(mdp, theta)?;
    let (n_s, n_a) = (mdp.num_states, mdp.num_actions);
    let nu = mdp.discount;
    let target = cfg.tol * (1.0 - nu) / nu;

    let mut q = vec![0.0; n_s * n_a];
    let mut next = vec![0.0; n_s * n_a];
    let mut v = vec![0.0; n_s];
    let mut residual = f64::INFINITY;

    for _ in 0..cfg.max_iter {
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = row_max(&q[s * n_a..(s + 1) * n_a]);
        }
        residual = 0.0;
        for s in 0..n_s {
            for a in 0..n_a {
                let sa = s * n_a + a;
                let expected: f64 = mdp.successors(s, a).iter().map(|&(s2, p)| p * v[s2]).sum();
                let backed = reward[sa] + nu * expected;
                residual = f64::max(residual, (backed - q[sa]).abs());
                next[sa] = backed;
            }
        }
        std::mem::swap(&mut q, &mut next);
        if residual <= target {
            return QFunction::from_values(n_s, n_a, q);
        }
    }
    Err(Error::NonConvergence {
        what: "value iteration",
        iterations: cfg.max_iter,
        residual,
    })
}

/// Boltzmann policy `pi(s, a) ∝ exp(eta Q(s, a))`.
pub fn softmax_policy(q: &QFunction, eta: f64) -> Result<StochasticPolicy> {
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "softmax confidence must be finite and >= 0, got {eta}"
        )));
    }
    if q.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("Q table has non-finite entries".into()));
    }
    let n_a = q.num_actions;
    let mut probs = Vec::with_capacity(q.values.len());
    for s in 0..q.num_states {
        let row = q.row(s);
        let m = row_max(row);
        let start = probs.len();
        probs.extend(row.iter().map(|&x| (eta * (x - m)).exp()));
        let z: f64 = probs[start..].iter().sum();
        for p in &mut probs[start..start + n_a] {
            *p /= z;
        }
    }
    Ok(StochasticPolicy {
        num_states: q.num_states,
        num_actions: n_a,
        probs,
    })
}

/// `log pi(s, a)` for the Boltzmann policy, same layout as the Q table.
pub fn log_softmax_table(q: &QFunction, eta: f64) -> Vec<f64> {
    let n_a = q.num_actions;
    let mut out = Vec::with_capacity(q.values.len());
    let mut scaled = vec![0.0; n_a];
    for s in 0..q.num_states {
        for (dst, &x) in scaled.iter_mut().zip(q.row(s)) {
            *dst = eta * x;
        }
        let lse = log_sum_exp(&scaled);
        out.extend(scaled.iter().map(|&x| x - lse));
    }
    out
}

/// State values of a fixed policy, plus the initial-distribution average.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub per_state: Vec<f64>,
    pub total: f64,
}

/// Iterative policy evaluation to sup-norm accuracy `tol`.
pub fn policy_value(
    mdp: &Mdp,
    theta: &RewardParams,
    policy: &StochasticPolicy,
    tol: f64,
) -> Result<PolicyValue> {
    if policy.num_states != mdp.num_states || policy.num_actions != mdp.num_actions {
        return Err(Error::DimensionMismatch {
            what: "policy table",
            expected: mdp.num_states * mdp.num_actions,
            got: policy.num_states * policy.num_actions,
        });
    }
    let reward = reward_of(mdp, theta)?;
    let (n_s, n_a) = (mdp.num_states, mdp.num_actions);
    let nu = mdp.discount;
    let target = tol * (1.0 - nu) / nu;

    let mut v = vec![0.0; n_s];
    let mut next = vec![0.0; n_s];
    // The contraction bound makes this cap generous; it only guards against
    // tolerances below floating-point resolution.
    let cap = 10 + ((target.max(f64::EPSILON)).ln() / nu.ln()).ceil().max(0.0) as usize * 4;
    for _ in 0..cap {
        let mut delta: f64 = 0.0;
        for s in 0..n_s {
            let mut acc = 0.0;
            for a in 0..n_a {
                let p = policy.prob(s, a);
                if p == 0.0 {
                    continue;
                }
                let expected: f64 = mdp.successors(s, a).iter().map(|&(s2, pr)| pr * v[s2]).sum();
                acc += p * (reward[s * n_a + a] + nu * expected);
            }
            delta = delta.max((acc - v[s]).abs());
            next[s] = acc;
        }
        std::mem::swap(&mut v, &mut next);
        if delta <= target {
            break;
        }
    }
    let total = v.iter().zip(&mdp.initial_dist).map(|(x, p)| x * p).sum();
    Ok(PolicyValue { per_state: v, total })
}

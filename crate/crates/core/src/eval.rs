//! Scoring inference output against planted ground truth.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::error::{Error, Result};
use crate::mdp::{mdp_vi, Mdp, RewardParams, ViConfig};
use crate::synth::GroundTruth;

/// Confusion counts; rows are planted classes, columns predicted ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticReport {
    pub num_users: usize,
    pub accuracy: f64,
    /// Accuracy over users whose label was not given to the classifier.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unlabeled_accuracy: Option<f64>,
    pub confusion: Confusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedReport {
    pub num_users: usize,
    pub num_steps: usize,
    /// Accuracy under the best one-to-one relabeling of estimated modes.
    pub mode_accuracy: f64,
    /// Planted mode matched to each estimated mode.
    pub mapping: Vec<Option<usize>>,
    /// Per planted mode: fraction of states where the matched estimated
    /// weights pick the same greedy action.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub policy_agreement: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta_diag_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted_zeta_diag_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Static(StaticReport),
    Switched(SwitchedReport),
}

fn check_user_sets<'a>(
    predicted: impl Iterator<Item = &'a String>,
    planted: impl Iterator<Item = &'a String>,
) -> Result<()> {
    let p: BTreeSet<&String> = predicted.collect();
    let t: BTreeSet<&String> = planted.collect();
    if p == t {
        return Ok(());
    }
    let missing: Vec<&str> = t.difference(&p).map(|s| s.as_str()).collect();
    let extra: Vec<&str> = p.difference(&t).map(|s| s.as_str()).collect();
    Err(Error::Mismatch(format!(
        "user sets differ; missing from predictions: [{}]; not in ground truth: [{}]",
        missing.join(", "),
        extra.join(", ")
    )))
}

/// Scores hard class predictions. `labeled` lists users whose class was
/// supplied to the classifier.
pub fn eval_static(
    predicted: &BTreeMap<String, String>,
    truth: &GroundTruth,
    labeled: Option<&BTreeSet<String>>,
) -> Result<StaticReport> {
    if truth.is_switched() {
        return Err(Error::InvalidInput("ground truth is for a switched scenario".into()));
    }
    let planted: BTreeMap<&String, &str> = truth
        .users
        .iter()
        .map(|u| (&u.user_id, u.class.as_deref().unwrap_or("")))
        .collect();
    check_user_sets(predicted.keys(), planted.keys().copied())?;

    let classes: Vec<String> = planted
        .values()
        .map(|c| c.to_string())
        .chain(predicted.values().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idx: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut counts = vec![vec![0usize; classes.len()]; classes.len()];
    let (mut hits, mut un_hits, mut un_total) = (0usize, 0usize, 0usize);
    for (user, pred) in predicted {
        let want = planted[user];
        counts[idx[want]][idx[pred.as_str()]] += 1;
        let hit = want == pred;
        hits += hit as usize;
        if labeled.is_some_and(|l| !l.contains(user)) {
            un_total += 1;
            un_hits += hit as usize;
        }
    }
    let n = predicted.len();
    Ok(StaticReport {
        num_users: n,
        accuracy: if n == 0 { 0.0 } else { hits as f64 / n as f64 },
        unlabeled_accuracy: labeled
            .filter(|_| un_total > 0)
            .map(|_| un_hits as f64 / un_total as f64),
        confusion: Confusion { classes, counts },
    })
}

/// Best accuracy over one-to-one relabelings of predicted modes.
///
/// Returns the accuracy and, per predicted mode, the planted mode it maps to.
pub fn permutation_matched_accuracy(
    predicted: &[Vec<usize>],
    planted: &[Vec<usize>],
) -> Result<(f64, Vec<Option<usize>>)> {
    if predicted.len() != planted.len() {
        return Err(Error::DimensionMismatch {
            what: "mode sequences",
            expected: planted.len(),
            got: predicted.len(),
        });
    }
    let mut n_pred = 0;
    let mut n_true = 0;
    let mut total = 0usize;
    for (p, t) in predicted.iter().zip(planted) {
        if p.len() != t.len() {
            return Err(Error::DimensionMismatch {
                what: "mode sequence length",
                expected: t.len(),
                got: p.len(),
            });
        }
        n_pred = p.iter().map(|&k| k + 1).max().unwrap_or(0).max(n_pred);
        n_true = t.iter().map(|&k| k + 1).max().unwrap_or(0).max(n_true);
        total += p.len();
    }
    let mut agree = vec![vec![0.0; n_true]; n_pred];
    for (p, t) in predicted.iter().zip(planted) {
        for (&a, &b) in p.iter().zip(t) {
            agree[a][b] += 1.0;
        }
    }
    let mapping = max_weight_assignment(&agree);
    let hits: f64 = mapping
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| agree[i][j]))
        .sum();
    let acc = if total == 0 { 0.0 } else { hits / total as f64 };
    Ok((acc, mapping))
}

/// Fraction of states where both weight vectors have the same greedy action.
pub fn greedy_agreement(mdp: &Mdp, a: &RewardParams, b: &RewardParams) -> Result<f64> {
    let vi = ViConfig::default();
    let ga = mdp_vi(mdp, a, &vi)?.greedy();
    let gb = mdp_vi(mdp, b, &vi)?.greedy();
    let same = ga.iter().zip(&gb).filter(|(x, y)| x == y).count();
    Ok(same as f64 / mdp.num_states().max(1) as f64)
}

fn diag_mean(z: &[Vec<f64>]) -> Option<f64> {
    (!z.is_empty()).then(|| z.iter().enumerate().map(|(i, r)| r[i]).sum::<f64>() / z.len() as f64)
}

/// Estimated model pieces needed for the parameter-level scores.
pub struct SwitchedEstimate<'a> {
    pub mdp: &'a Mdp,
    pub thetas: &'a [RewardParams],
    pub zeta: &'a [Vec<f64>],
}

/// Scores per-user mode sequences against the planted ones.
pub fn eval_switched(
    predicted: &BTreeMap<String, Vec<usize>>,
    truth: &GroundTruth,
    estimate: Option<SwitchedEstimate<'_>>,
) -> Result<SwitchedReport> {
    if !truth.is_switched() {
        return Err(Error::InvalidInput("ground truth is for a static scenario".into()));
    }
    let planted: BTreeMap<&String, &Vec<usize>> = truth
        .users
        .iter()
        .map(|u| {
            u.modes
                .as_ref()
                .map(|m| (&u.user_id, m))
                .ok_or_else(|| Error::InvalidInput(format!("user {} has no planted modes", u.user_id)))
        })
        .collect::<Result<_>>()?;
    check_user_sets(predicted.keys(), planted.keys().copied())?;

    let pred: Vec<Vec<usize>> = predicted.values().cloned().collect();
    let plant: Vec<Vec<usize>> = planted.values().map(|m| (*m).clone()).collect();
    let (mode_accuracy, mapping) = permutation_matched_accuracy(&pred, &plant)?;

    let mut policy_agreement = Vec::new();
    let mut zeta_diag_mean = None;
    if let Some(est) = estimate {
        policy_agreement = vec![None; truth.mode_thetas.len()];
        for (j, m) in mapping.iter().enumerate() {
            if let (Some(k), Some(th)) = (m, est.thetas.get(j)) {
                if let Some(slot) = policy_agreement.get_mut(*k) {
                    *slot = Some(greedy_agreement(est.mdp, th, &truth.mode_thetas[*k])?);
                }
            }
        }
        zeta_diag_mean = diag_mean(est.zeta);
    }
    Ok(SwitchedReport {
        num_users: pred.len(),
        num_steps: pred.iter().map(Vec::len).sum(),
        mode_accuracy,
        mapping,
        policy_agreement,
        zeta_diag_mean,
        planted_zeta_diag_mean: diag_mean(&truth.zeta),
    })
}

//! Semi-supervised label propagation over real-valued points.
//!
//! Points exchange labels through a Gaussian-kernel transition matrix:
//! `w_ij = exp(-|x_i - x_j|^2 / sigma^2)` and `T_ij = w_ij / sum_k w_kj`.
//! Propagation repeats `Y <- T Y`, normalizes rows to sum to one and clamps
//! the known rows back to their one-hot labels until `Y` stops moving.

use serde::{Deserialize, Serialize};

use crate::birl::median;
use crate::error::{Error, Result};
use crate::mdp::argmax;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    points: Vec<Vec<f64>>,
    labels: Vec<Option<usize>>,
    num_classes: usize,
}

impl LabeledSet {
    /// `labels[i]` is the known class of point `i`, if any.
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("label propagation needs at least one point".into()));
        }
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch {
                what: "label vector",
                expected: points.len(),
                got: labels.len(),
            });
        }
        let dim = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch {
                what: "point",
                expected: dim,
                got: p.len(),
            });
        }
        if num_classes == 0 {
            return Err(Error::InvalidInput("at least one class is required".into()));
        }
        if labels.iter().all(Option::is_none) {
            return Err(Error::InvalidInput("at least one point must be labeled".into()));
        }
        if let Some(&c) = labels.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "label {c} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledSet {
            points,
            labels,
            num_classes,
        })
    }

    /// The first `known.len()` points carry the given labels, the rest are unlabeled.
    pub fn with_leading_labels(
        points: Vec<Vec<f64>>,
        known: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        let mut labels = vec![None; points.len()];
        for (slot, &c) in labels.iter_mut().zip(known) {
            *slot = Some(c);
        }
        LabeledSet::new(points, labels, num_classes)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

/// Class probabilities, one row per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMatrix {
    num_classes: usize,
    probs: Vec<f64>,
}

impl LabelMatrix {
    pub fn num_rows(&self) -> usize {
        self.probs.len() / self.num_classes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_classes..(i + 1) * self.num_classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.num_classes)
    }

    /// Most probable class per row, lowest class index on ties.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.rows().map(argmax).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LpConfig {
    fn default() -> Self {
        LpConfig {
            tol: 1e-8,
            max_iter: 10_000,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median Euclidean distance over distinct pairs; 1 when it is zero or undefined.
pub fn median_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let m = median(&mut d);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Column-normalized Gaussian-kernel matrix, row-major `M x M`.
pub fn transition_matrix(points: &[Vec<f64>], sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("kernel width must be > 0, got {sigma}")));
    }
    let m = points.len();
    let s2 = sigma * sigma;
    let mut w = vec![0.0; m * m];
    for i in 0..m {
        w[i * m + i] = 1.0;
        for j in i + 1..m {
            let v = (-sq_dist(&points[i], &points[j]) / s2).exp();
            w[i * m + j] = v;
            w[j * m + i] = v;
        }
    }
    for j in 0..m {
        let col: f64 = (0..m).map(|k| w[k * m + j]).sum();
        for i in 0..m {
            w[i * m + j] /= col;
        }
    }
    Ok(w)
}

pub fn label_prop(set: &LabeledSet, sigma: f64, cfg: &LpConfig) -> Result<LabelMatrix> {
    label_prop_traced(set, sigma, cfg).map(|(y, _)| y)
}

/// Like [`label_prop`], also returning the max-abs change of every iteration.
pub fn label_prop_traced(
    set: &LabeledSet,
    sigma: f64,
    cfg: &LpConfig,
) -> Result<(LabelMatrix, Vec<f64>)> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Config("label propagation tolerance must be > 0".into()));
    }
    let m = set.points.len();
    let c = set.num_classes;
    let t = transition_matrix(&set.points, sigma)?;

    let mut y = vec![1.0 / c as f64; m * c];
    clamp(&mut y, &set.labels, c);
    let mut next = vec![0.0; m * c];
    let mut deltas = Vec::new();

    for _ in 0..cfg.max_iter {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let out = &mut next[i * c..(i + 1) * c];
            for j in 0..m {
                let tij = t[i * m + j];
                for (o, &yj) in out.iter_mut().zip(&y[j * c..(j + 1) * c]) {
                    *o += tij * yj;
                }
            }
            let total: f64 = out.iter().sum();
            if total > 0.0 {
                out.iter_mut().for_each(|v| *v /= total);
            } else {
                out.iter_mut().for_each(|v| *v = 1.0 / c as f64);
            }
        }
        clamp(&mut next, &set.labels, c);
        let delta = y
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut y, &mut next);
        deltas.push(delta);
        if delta <= cfg.tol {
            return Ok((
                LabelMatrix {
                    num_classes: c,
                    probs: y,
                },
                deltas,
            ));
        }
    }
    Err(Error::NonConvergence {
        what: "label propagation",
        iterations: cfg.max_iter,
        residual: deltas.last().copied().unwrap_or(f64::INFINITY),
    })
}

fn clamp(y: &mut [f64], labels: &[Option<usize>], c: usize) {
    for (i, label) in labels.iter().enumerate() {
        if let Some(k) = *label {
            let row = &mut y[i * c..(i + 1) * c];
            row.iter_mut().for_each(|v| *v = 0.0);
            row[k] = 1.0;
        }
    }
}

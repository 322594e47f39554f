//! Shared pieces of the linear classifiers: feature standardization,
//! numerically stable sigmoid/softmax and full-batch cross-entropy gradients.

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::par::chunked_reduce;

pub const MIN_STDDEV: f64 = 1e-8;

/// Per-feature z-scoring; standard deviations are clamped below at [`MIN_STDDEV`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            stddev: vec![1.0; dim],
        }
    }

    pub fn fit(set: &EmbeddingSet) -> Self {
        let dim = set.dim();
        let n = set.count().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in set.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v as f64;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in set.rows() {
            for ((s, &v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v as f64 - m;
                *s += d * d;
            }
        }
        let stddev = var.iter().map(|s| (s / n).sqrt().max(MIN_STDDEV)).collect();
        Self { mean, stddev }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_into(&self, row: &[f32], out: &mut [f64]) {
        for (((o, &v), m), s) in out.iter_mut().zip(row).zip(&self.mean).zip(&self.stddev) {
            *o = (v as f64 - m) / s;
        }
    }

    /// Standardized copy of the whole set, row-major.
    pub fn transform(&self, set: &EmbeddingSet) -> Vec<f64> {
        let dim = set.dim();
        let mut out = vec![0.0; set.count() * dim];
        for (row, dst) in set.rows().zip(out.chunks_exact_mut(dim)) {
            self.apply_into(row, dst);
        }
        out
    }

    pub(crate) fn is_valid(&self) -> bool {
        self.mean.len() == self.stddev.len()
            && self.mean.iter().all(|m| m.is_finite())
            && self.stddev.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy and its gradient for `sigmoid(w·x + b)`.
///
/// `features` is row-major with `weights.len()` columns; labels are 0 or 1.
pub fn logistic_loss_grad(
    weights: &[f64],
    bias: f64,
    features: &[f64],
    labels: &[f64],
) -> (f64, Vec<f64>, f64) {
    let dim = weights.len();
    let n = labels.len();
    let (loss, mut gw, gb) = chunked_reduce(
        n,
        |range| {
            let mut loss = 0.0;
            let mut gw = vec![0.0; dim];
            let mut gb = 0.0;
            for i in range {
                let x = &features[i * dim..(i + 1) * dim];
                let z = dot(weights, x) + bias;
                let y = labels[i];
                // -[y ln s(z) + (1-y) ln(1-s(z))] = softplus(z) - y z
                loss += softplus(z) - y * z;
                let r = sigmoid(z) - y;
                for (g, &xv) in gw.iter_mut().zip(x) {
                    *g += r * xv;
                }
                gb += r;
            }
            (loss, gw, gb)
        },
        |(l, mut g, b), (l2, g2, b2)| {
            for (a, c) in g.iter_mut().zip(&g2) {
                *a += c;
            }
            (l + l2, g, b + b2)
        },
    )
    .unwrap_or((0.0, vec![0.0; dim], 0.0));
    let scale = 1.0 / n.max(1) as f64;
    gw.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, gw, gb * scale)
}

/// Softmax of `logits` in place, shifted by the max for stability.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        sum += *l;
    }
    logits.iter_mut().for_each(|l| *l /= sum);
}

/// Mean multinomial cross-entropy and gradients for logits `W x + b`.
///
/// `weights` is `classes × dim` row-major; labels are class indices.
pub fn softmax_loss_grad(
    weights: &[f64],
    biases: &[f64],
    features: &[f64],
    labels: &[usize],
) -> (f64, Vec<f64>, Vec<f64>) {
    let classes = biases.len();
    let dim = weights.len() / classes;
    let n = labels.len();
    let (loss, mut gw, mut gb) = chunked_reduce(
        n,
        |range| {
            let mut loss = 0.0;
            let mut gw = vec![0.0; classes * dim];
            let mut gb = vec![0.0; classes];
            let mut probs = vec![0.0; classes];
            for i in range {
                let x = &features[i * dim..(i + 1) * dim];
                for (c, p) in probs.iter_mut().enumerate() {
                    *p = dot(&weights[c * dim..(c + 1) * dim], x) + biases[c];
                }
                let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + probs.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                loss += lse - probs[labels[i]];
                softmax_in_place(&mut probs);
                for c in 0..classes {
                    let r = probs[c] - if c == labels[i] { 1.0 } else { 0.0 };
                    gb[c] += r;
                    for (g, &xv) in gw[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                        *g += r * xv;
                    }
                }
            }
            (loss, gw, gb)
        },
        |(l, mut g, mut b), (l2, g2, b2)| {
            for (a, c) in g.iter_mut().zip(&g2) {
                *a += c;
            }
            for (a, c) in b.iter_mut().zip(&b2) {
                *a += c;
            }
            (l + l2, g, b)
        },
    )
    .unwrap_or((0.0, vec![0.0; classes * dim], vec![0.0; classes]));
    let scale = 1.0 / n.max(1) as f64;
    gw.iter_mut().for_each(|g| *g *= scale);
    gb.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, gw, gb)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

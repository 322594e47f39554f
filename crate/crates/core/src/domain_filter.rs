//! Source-vs-target domain classifier filtering.
//!
//! A balanced training set is built from all target rows (label 1) and an
//! equally sized uniform sample of source rows (label 0). A logistic
//! regression on standardized embeddings is fitted by full-batch gradient
//! descent on the mean binary cross-entropy, and every source row is scored
//! by its predicted target-domain probability. The highest probabilities are
//! kept.
//!
//! Training stops at the end of the first epoch whose held-out accuracy falls
//! inside the configured band (0.92..=0.95 by default). Finishing outside the
//! band is reported, not treated as an error.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::linear::{dot, logistic_loss_grad, sigmoid, Standardizer};
use crate::par::map_rows;
use crate::selection::{Method, ScoredSelection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub standardization: Standardizer,
}

impl LinearClassifier {
    pub fn zeros(standardization: Standardizer) -> Self {
        let dim = standardization.dim();
        Self {
            dim,
            weights: vec![0.0; dim],
            bias: 0.0,
            standardization,
        }
    }

    pub fn logit(&self, row: &[f32], scratch: &mut [f64]) -> f64 {
        self.standardization.apply_into(row, scratch);
        dot(&self.weights, scratch) + self.bias
    }

    fn validate(&self) -> Result<()> {
        if self.weights.len() != self.dim
            || self.standardization.dim() != self.dim
            || !self.standardization.is_valid()
            || !self.bias.is_finite()
            || self.weights.iter().any(|w| !w.is_finite())
        {
            return Err(Error::Data("invalid linear classifier parameters".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Serialize(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub val_fraction: f64,
    /// Early-stop band for held-out accuracy, inclusive.
    pub accuracy_band: (f64, f64),
    pub seed: u64,
}

impl Default for DomainTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            val_fraction: 0.2,
            accuracy_band: (0.92, 0.95),
            seed: 42,
        }
    }
}

impl DomainTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::arg("val_fraction must lie in (0, 1)"));
        }
        let (lo, hi) = self.accuracy_band;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::arg(
                "accuracy band must satisfy 0 < lower < upper < 1",
            ));
        }
        Ok(())
    }
}

/// Balanced two-domain training data: `m` source rows labelled 0 followed
/// by `m` target rows labelled 1.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub rows: EmbeddingSet,
    pub labels: Vec<u8>,
    /// Source rows that were sampled, in dataset order.
    pub source_indices: Vec<usize>,
    /// Set when the source had fewer rows than the target.
    pub clamped: bool,
}

impl DomainDataset {
    pub fn per_label(&self) -> usize {
        self.labels.len() / 2
    }
}

pub fn build_domain_dataset(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    seed: u64,
) -> Result<DomainDataset> {
    target.check_dim(source.dim(), "domain dataset")?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::arg("source and target must both be non-empty"));
    }
    let m = target.count().min(source.count());
    let clamped = m < target.count();
    if clamped {
        log::warn!(
            "source has {} rows, fewer than the {} target rows; using {m} per domain",
            source.count(),
            target.count()
        );
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut source_indices = index::sample(&mut rng, source.count(), m).into_vec();
    source_indices.sort_unstable();
    let target_indices: Vec<usize> = if clamped {
        let mut t = index::sample(&mut rng, target.count(), m).into_vec();
        t.sort_unstable();
        t
    } else {
        (0..m).collect()
    };

    let mut data = Vec::with_capacity(2 * m * source.dim());
    for &i in &source_indices {
        data.extend_from_slice(source.row(i));
    }
    for &i in &target_indices {
        data.extend_from_slice(target.row(i));
    }
    let mut labels = vec![0u8; m];
    labels.resize(2 * m, 1);
    Ok(DomainDataset {
        rows: EmbeddingSet::new(source.dim(), data)?,
        labels,
        source_indices,
        clamped,
    })
}

#[derive(Debug, Clone)]
pub struct DomainTraining {
    pub classifier: LinearClassifier,
    pub val_accuracy: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// Final held-out accuracy lies inside the band.
    pub in_band: bool,
    /// Training loss at the start of every epoch, then after the last update.
    pub loss_history: Vec<f64>,
}

/// Stratified split of row indices into (train, validation).
pub(crate) fn stratified_split(
    labels: &[usize],
    classes: usize,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for c in 0..classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        rows.shuffle(&mut rng);
        let n_val = ((rows.len() as f64 * val_fraction).round() as usize).max(1);
        if n_val >= rows.len() {
            return Err(Error::arg(format!(
                "degenerate split: class {c} has {} rows, cannot hold out {n_val} and still train",
                rows.len()
            )));
        }
        val.extend_from_slice(&rows[..n_val]);
        train.extend_from_slice(&rows[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

fn gather(features: &[f64], dim: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * dim);
    for &i in rows {
        out.extend_from_slice(&features[i * dim..(i + 1) * dim]);
    }
    out
}

fn accuracy(weights: &[f64], bias: f64, features: &[f64], labels: &[f64]) -> f64 {
    let dim = weights.len();
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| {
            let z = dot(weights, &features[i * dim..(i + 1) * dim]) + bias;
            (z > 0.0) == (y > 0.5)
        })
        .count();
    correct as f64 / labels.len() as f64
}

pub fn train_domain_classifier(
    data: &DomainDataset,
    cfg: &DomainTrainConfig,
) -> Result<DomainTraining> {
    cfg.validate()?;
    if data.rows.is_empty() {
        return Err(Error::arg("empty domain dataset"));
    }
    let dim = data.rows.dim();
    let class_of: Vec<usize> = data.labels.iter().map(|&l| l as usize).collect();
    let (train_idx, val_idx) = stratified_split(&class_of, 2, cfg.val_fraction, cfg.seed)?;

    let standardization = Standardizer::fit(&data.rows);
    let features = standardization.transform(&data.rows);
    let x_train = gather(&features, dim, &train_idx);
    let y_train: Vec<f64> = train_idx.iter().map(|&i| data.labels[i] as f64).collect();
    let x_val = gather(&features, dim, &val_idx);
    let y_val: Vec<f64> = val_idx.iter().map(|&i| data.labels[i] as f64).collect();

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut loss_history = Vec::with_capacity(cfg.epochs + 1);
    let (lo, hi) = cfg.accuracy_band;
    let mut val_accuracy = accuracy(&weights, bias, &x_val, &y_val);
    let mut epochs_run = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let (loss, gw, gb) = logistic_loss_grad(&weights, bias, &x_train, &y_train);
        loss_history.push(loss);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        bias -= cfg.learning_rate * gb;
        epochs_run = epoch;
        val_accuracy = accuracy(&weights, bias, &x_val, &y_val);
        if (lo..=hi).contains(&val_accuracy) {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    loss_history.push(logistic_loss_grad(&weights, bias, &x_train, &y_train).0);

    let in_band = (lo..=hi).contains(&val_accuracy);
    if !in_band {
        log::warn!(
            "domain classifier finished at held-out accuracy {val_accuracy:.4}, outside [{lo}, {hi}]"
        );
    }
    Ok(DomainTraining {
        classifier: LinearClassifier {
            dim,
            weights,
            bias,
            standardization,
        },
        val_accuracy,
        epochs_run,
        stopped_early,
        in_band,
        loss_history,
    })
}

/// Target-domain probability of every row, strictly inside (0, 1).
pub fn score_domain(classifier: &LinearClassifier, source: &EmbeddingSet) -> Result<Vec<f64>> {
    source.check_dim(classifier.dim, "domain scoring")?;
    const UPPER: f64 = 1.0 - f64::EPSILON / 2.0;
    Ok(map_rows(source.count(), |i| {
        let mut scratch = vec![0.0; classifier.dim];
        let z = classifier.logit(source.row(i), &mut scratch);
        sigmoid(z).clamp(f64::MIN_POSITIVE, UPPER)
    }))
}

#[derive(Debug, Clone)]
pub struct DomainFilterOutcome {
    pub selection: ScoredSelection,
    pub training: DomainTraining,
    pub dataset_clamped: bool,
}

pub fn filter_domain(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    cfg: &DomainTrainConfig,
    budget: usize,
) -> Result<DomainFilterOutcome> {
    if budget == 0 {
        return Err(Error::arg("budget must be at least 1"));
    }
    let data = build_domain_dataset(source, target, cfg.seed)?;
    let training = train_domain_classifier(&data, cfg)?;
    let scores = score_domain(&training.classifier, source)?;
    let selection = ScoredSelection::from_scores(scores, budget, Method::Domain, cfg.seed)?;
    Ok(DomainFilterOutcome {
        selection,
        training,
        dataset_clamped: data.clamped,
    })
}

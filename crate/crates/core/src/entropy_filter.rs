//! Predictive-entropy ranking under a classifier trained on the labelled target.
//!
//! `Active` keeps the most uncertain source rows, `Inverse` the most
//! confident ones. Entropy uses the natural log, with probabilities floored at
//! `1e-12` inside the sum.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::domain_filter::DomainTrainConfig;
use crate::error::{Error, Result};
use crate::linear::{dot, softmax_in_place, softmax_loss_grad, Standardizer};
use crate::par::map_rows;
use crate::selection::{Method, ScoredSelection};

const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClassifier {
    pub dim: usize,
    pub classes: usize,
    /// `classes × dim`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub standardization: Standardizer,
}

impl SoftmaxClassifier {
    pub fn zeros(classes: usize, standardization: Standardizer) -> Self {
        let dim = standardization.dim();
        Self {
            dim,
            classes,
            weights: vec![0.0; classes * dim],
            biases: vec![0.0; classes],
            standardization,
        }
    }

    /// Class probabilities for one row.
    pub fn predict_proba(&self, row: &[f32]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        self.standardization.apply_into(row, &mut x);
        let mut p: Vec<f64> = (0..self.classes)
            .map(|c| dot(&self.weights[c * self.dim..(c + 1) * self.dim], &x) + self.biases[c])
            .collect();
        softmax_in_place(&mut p);
        p
    }

    fn validate(&self) -> Result<()> {
        let ok = self.classes >= 2
            && self.weights.len() == self.classes * self.dim
            && self.biases.len() == self.classes
            && self.standardization.dim() == self.dim
            && self.standardization.is_valid()
            && self
                .weights
                .iter()
                .chain(&self.biases)
                .all(|v| v.is_finite());
        if !ok {
            return Err(Error::Data("invalid softmax classifier parameters".into()));
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
}

/// Shannon entropy (nats) of a probability vector, terms floored at 1e-12.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .map(|&p| {
            let p = p.max(PROB_FLOOR);
            p * p.ln()
        })
        .sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct TargetTraining {
    pub classifier: SoftmaxClassifier,
    pub train_accuracy: f64,
    /// Training loss at the start of every epoch, then after the last update.
    pub loss_history: Vec<f64>,
}

/// Validate labels and map them to `0..classes`.
fn class_labels(target: &EmbeddingSet) -> Result<(Vec<usize>, usize)> {
    let labels = target
        .labels()
        .ok_or_else(|| Error::arg("entropy filtering needs target labels"))?;
    let mut counts: Vec<usize> = Vec::new();
    for &l in labels {
        if l < 0 {
            return Err(Error::arg(format!("negative class id {l}")));
        }
        let l = l as usize;
        if l >= counts.len() {
            counts.resize(l + 1, 0);
        }
        counts[l] += 1;
    }
    if counts.len() < 2 {
        return Err(Error::arg("need at least two classes"));
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::arg(format!(
            "class ids are not dense: class {c} has no rows"
        )));
    }
    if let Some(c) = counts.iter().position(|&n| n < 2) {
        return Err(Error::arg(format!("class {c} has a single row")));
    }
    Ok((labels.iter().map(|&l| l as usize).collect(), counts.len()))
}

/// Multinomial logistic regression by full-batch gradient descent.
///
/// Uses `epochs`, `learning_rate` from the config; the held-out band does not
/// apply to this classifier.
pub fn train_target_classifier(
    target: &EmbeddingSet,
    cfg: &DomainTrainConfig,
) -> Result<TargetTraining> {
    if cfg.epochs == 0 || cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::arg("epochs and learning rate must be positive"));
    }
    let (labels, classes) = class_labels(target)?;
    let standardization = Standardizer::fit(target);
    let features = standardization.transform(target);
    let mut model = SoftmaxClassifier::zeros(classes, standardization);

    let mut loss_history = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, gw, gb) = softmax_loss_grad(&model.weights, &model.biases, &features, &labels);
        loss_history.push(loss);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= cfg.learning_rate * g;
        }
        for (b, g) in model.biases.iter_mut().zip(&gb) {
            *b -= cfg.learning_rate * g;
        }
    }
    loss_history.push(softmax_loss_grad(&model.weights, &model.biases, &features, &labels).0);

    let correct = (0..target.count())
        .filter(|&i| {
            let p = model.predict_proba(target.row(i));
            argmax(&p) == labels[i]
        })
        .count();
    Ok(TargetTraining {
        train_accuracy: correct as f64 / target.count() as f64,
        classifier: model,
        loss_history,
    })
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn score_entropy(classifier: &SoftmaxClassifier, source: &EmbeddingSet) -> Result<Vec<f64>> {
    source.check_dim(classifier.dim, "entropy scoring")?;
    Ok(map_rows(source.count(), |i| {
        entropy(&classifier.predict_proba(source.row(i)))
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyMode {
    Active,
    Inverse,
}

impl EntropyMode {
    pub fn method(self) -> Method {
        match self {
            EntropyMode::Active => Method::EntropyActive,
            EntropyMode::Inverse => Method::EntropyInverse,
        }
    }
}

impl fmt::Display for EntropyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntropyMode::Active => "active",
            EntropyMode::Inverse => "inverse",
        })
    }
}

impl FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "active" => Ok(EntropyMode::Active),
            "inverse" => Ok(EntropyMode::Inverse),
            _ => Err(Error::arg(format!("unknown entropy mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EntropyFilterOutcome {
    pub selection: ScoredSelection,
    pub training: TargetTraining,
}

pub fn filter_entropy(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    cfg: &DomainTrainConfig,
    budget: usize,
    mode: EntropyMode,
) -> Result<EntropyFilterOutcome> {
    if budget == 0 {
        return Err(Error::arg("budget must be at least 1"));
    }
    target.check_dim(source.dim(), "entropy filter target")?;
    let training = train_target_classifier(target, cfg)?;
    let scores = score_entropy(&training.classifier, source)?;
    let selection = ScoredSelection::from_scores(scores, budget, mode.method(), cfg.seed)?;
    Ok(EntropyFilterOutcome {
        selection,
        training,
    })
}

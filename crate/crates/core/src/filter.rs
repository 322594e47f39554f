//! One entry point over every filtering method.

use std::time::Instant;

use crate::cluster_filter::{filter_cluster, AggOp, ClusterFilterSpec, Norm};
use crate::data::EmbeddingSet;
use crate::domain_filter::{filter_domain, DomainTrainConfig, LinearClassifier};
use crate::entropy_filter::{filter_entropy, EntropyMode, SoftmaxClassifier};
use crate::error::Result;
use crate::kmeans::{ClusterModel, KMeansParams};
use crate::selection::{Method, RunReport, ScoredSelection};

/// Knobs shared by all filters. `seed` overrides the seeds inside `kmeans` and `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub seed: u64,
    pub kmeans: KMeansParams,
    pub p: Norm,
    pub train: DomainTrainConfig,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            seed: 42,
            kmeans: KMeansParams::default(),
            p: Norm::L2,
            train: DomainTrainConfig::default(),
        }
    }
}

/// What a filter fitted on the target before scoring.
#[derive(Debug, Clone)]
pub enum FilterModel {
    Centers(ClusterModel),
    Domain(LinearClassifier),
    Target(SoftmaxClassifier),
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    pub selection: ScoredSelection,
    pub report: RunReport,
    pub model: FilterModel,
}

/// Run `method` on `(source, target)` and assemble its report.
pub fn run_filter(
    method: Method,
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    budget: usize,
    settings: &FilterSettings,
) -> Result<FilterRun> {
    let start = Instant::now();
    let train = DomainTrainConfig {
        seed: settings.seed,
        ..settings.train.clone()
    };
    let mut extra: Vec<(&str, String)> = Vec::new();
    let mut warnings = Vec::new();
    let (selection, model) = match method {
        Method::ClusterAvg | Method::ClusterMin => {
            let agg = if method == Method::ClusterAvg {
                AggOp::Avg
            } else {
                AggOp::Min
            };
            let spec = ClusterFilterSpec {
                agg,
                p: settings.p,
                budget,
                seed: settings.seed,
            };
            let out = filter_cluster(source, target, &spec, &settings.kmeans)?;
            extra.push(("k", out.model.k.to_string()));
            extra.push(("agg", agg.to_string()));
            extra.push(("p", settings.p.p().to_string()));
            extra.push(("inertia", out.model.inertia.to_string()));
            extra.push(("kmeans_iterations", out.model.iterations_run.to_string()));
            (out.selection, FilterModel::Centers(out.model))
        }
        Method::Domain => {
            let out = filter_domain(source, target, &train, budget)?;
            extra.push(("val_accuracy", out.training.val_accuracy.to_string()));
            extra.push(("epochs_run", out.training.epochs_run.to_string()));
            extra.push(("learning_rate", train.learning_rate.to_string()));
            extra.push((
                "accuracy_band",
                format!("{}-{}", train.accuracy_band.0, train.accuracy_band.1),
            ));
            if out.dataset_clamped {
                warnings.push("source smaller than target; domain dataset clamped".into());
            }
            if !out.training.in_band {
                warnings.push(format!(
                    "held-out accuracy {:.4} outside band",
                    out.training.val_accuracy
                ));
            }
            (out.selection, FilterModel::Domain(out.training.classifier))
        }
        Method::EntropyActive | Method::EntropyInverse => {
            let mode = if method == Method::EntropyActive {
                EntropyMode::Active
            } else {
                EntropyMode::Inverse
            };
            let out = filter_entropy(source, target, &train, budget, mode)?;
            extra.push(("mode", mode.to_string()));
            extra.push(("classes", out.training.classifier.classes.to_string()));
            extra.push(("train_accuracy", out.training.train_accuracy.to_string()));
            (out.selection, FilterModel::Target(out.training.classifier))
        }
    };
    let mut report = selection.report();
    for (k, v) in extra {
        report.param(k, v);
    }
    report.warnings.extend(warnings);
    report.input_digests = vec![source.digest(), target.digest()];
    report.wall_ms = start.elapsed().as_millis() as u64;
    Ok(FilterRun {
        selection,
        report,
        model,
    })
}

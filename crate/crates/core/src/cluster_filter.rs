//! Relevance scoring by distance to target cluster centers.
//!
//! Each source row is scored by its Lp distances to the K centers fitted on
//! the target, aggregated by mean or minimum. Smaller is more relevant, so
//! selection keeps the lowest scores.

use std::fmt;
use std::str::FromStr;

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::kmeans::{fit_kmeans, ClusterModel, KMeansParams};
use crate::par::{l1_dist, map_rows, sq_dist};
use crate::selection::{Method, ScoredSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggOp {
    Avg,
    Min,
}

impl AggOp {
    pub fn method(self) -> Method {
        match self {
            AggOp::Avg => Method::ClusterAvg,
            AggOp::Min => Method::ClusterMin,
        }
    }
}

impl fmt::Display for AggOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AggOp::Avg => "avg",
            AggOp::Min => "min",
        })
    }
}

impl FromStr for AggOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(AggOp::Avg),
            "min" => Ok(AggOp::Min),
            _ => Err(Error::arg(format!(
                "unknown aggregation {s:?}, expected avg or min"
            ))),
        }
    }
}

/// Lp norm used for source-to-center distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L1,
    L2,
}

impl Norm {
    pub fn from_p(p: u32) -> Result<Self> {
        match p {
            1 => Ok(Norm::L1),
            2 => Ok(Norm::L2),
            _ => Err(Error::arg(format!("p must be 1 or 2, got {p}"))),
        }
    }

    pub fn p(self) -> u32 {
        match self {
            Norm::L1 => 1,
            Norm::L2 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterFilterSpec {
    pub agg: AggOp,
    pub p: Norm,
    pub budget: usize,
    pub seed: u64,
}

impl ClusterFilterSpec {
    pub fn new(agg: AggOp, budget: usize, seed: u64) -> Self {
        Self {
            agg,
            p: Norm::L2,
            budget,
            seed,
        }
    }
}

fn score_row(row: &[f32], model: &ClusterModel, agg: AggOp, p: Norm) -> f64 {
    let centers = model.centers.chunks_exact(model.dim);
    match (agg, p) {
        // sqrt is monotone, so the minimum can be taken on squared distances
        (AggOp::Min, Norm::L2) => centers
            .map(|c| sq_dist(row, c))
            .fold(f64::INFINITY, f64::min)
            .sqrt(),
        (AggOp::Min, Norm::L1) => centers
            .map(|c| l1_dist(row, c))
            .fold(f64::INFINITY, f64::min),
        (AggOp::Avg, Norm::L2) => {
            centers.map(|c| sq_dist(row, c).sqrt()).sum::<f64>() / model.k as f64
        }
        (AggOp::Avg, Norm::L1) => centers.map(|c| l1_dist(row, c)).sum::<f64>() / model.k as f64,
    }
}

/// Per-row aggregated distance to the model's centers.
pub fn score_cluster(
    source: &EmbeddingSet,
    model: &ClusterModel,
    spec: &ClusterFilterSpec,
) -> Result<Vec<f64>> {
    source.check_dim(model.dim, "cluster scoring")?;
    let (agg, p) = (spec.agg, spec.p);
    Ok(map_rows(source.count(), |i| {
        score_row(source.row(i), model, agg, p)
    }))
}

#[derive(Debug, Clone)]
pub struct ClusterFilterOutcome {
    pub selection: ScoredSelection,
    pub model: ClusterModel,
}

/// Fit K-means on the target, score the source and keep the `budget` closest rows.
///
/// `kmeans.seed` is overridden by `spec.seed`.
pub fn filter_cluster(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    spec: &ClusterFilterSpec,
    kmeans: &KMeansParams,
) -> Result<ClusterFilterOutcome> {
    if spec.budget == 0 {
        return Err(Error::arg("budget must be at least 1"));
    }
    target.check_dim(source.dim(), "cluster filter target")?;
    let params = KMeansParams {
        seed: spec.seed,
        ..kmeans.clone()
    };
    let model = fit_kmeans(target, &params)?;
    let scores = score_cluster(source, &model, spec)?;
    let selection =
        ScoredSelection::from_scores(scores, spec.budget, spec.agg.method(), spec.seed)?;
    Ok(ClusterFilterOutcome { selection, model })
}

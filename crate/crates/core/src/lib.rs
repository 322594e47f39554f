//! Target-conditioned subset selection.
//!
//! Given embeddings of a large source dataset and a small target dataset,
//! pick a fixed-size subset of the source that looks like the target. Three
//! families of scores are available: distance to target cluster centers, the
//! output of a source-vs-target domain classifier, and the prediction entropy
//! of a classifier trained on the labelled target. The crate also schedules
//! chained pre-training over a stream of target tasks and estimates
//! pre-training cost.

pub mod cluster_filter;
pub mod cost_model;
pub mod data;
pub mod domain_filter;
pub mod entropy_filter;
pub mod error;
pub mod filter;
pub mod kmeans;
pub mod linear;
mod par;
pub mod selection;
pub mod sequential;
pub mod synth;

pub use data::{load_embeddings, save_embeddings, EmbeddingFormat, EmbeddingSet};
pub use error::{Error, Result};
pub use filter::{run_filter, FilterRun, FilterSettings};
pub use kmeans::{fit_kmeans, ClusterModel, KMeansParams};
pub use selection::{select_top, Method, Order, RunReport, ScoredSelection};

//! Budgeted selection over per-row scores, selection files and run reports.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClusterAvg,
    ClusterMin,
    Domain,
    EntropyActive,
    EntropyInverse,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ClusterAvg,
        Method::ClusterMin,
        Method::Domain,
        Method::EntropyActive,
        Method::EntropyInverse,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ClusterAvg => "cluster_avg",
            Method::ClusterMin => "cluster_min",
            Method::Domain => "domain",
            Method::EntropyActive => "entropy_active",
            Method::EntropyInverse => "entropy_inverse",
        }
    }

    /// Direction in which scores are ranked for this method.
    pub fn order(self) -> Order {
        match self {
            Method::ClusterAvg | Method::ClusterMin | Method::EntropyInverse => Order::Ascending,
            Method::Domain | Method::EntropyActive => Order::Descending,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::arg(format!("unknown method {s:?}")))
    }
}

/// Ascending keeps the smallest scores, descending the largest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Order {
    Ascending,
    Descending,
}

impl Order {
    pub fn as_str(self) -> &'static str {
        match self {
            Order::Ascending => "ascending",
            Order::Descending => "descending",
        }
    }

    /// `Less` when row `a` ranks ahead of row `b`. Ties go to the lower index.
    fn rank(self, scores: &[f64], a: usize, b: usize) -> Ordering {
        let by_score = match self {
            Order::Ascending => scores[a].total_cmp(&scores[b]),
            Order::Descending => scores[b].total_cmp(&scores[a]),
        };
        by_score.then(a.cmp(&b))
    }
}

/// Indices of the `budget` best rows under `order`, returned in ascending index order.
///
/// `budget` larger than `scores.len()` selects everything.
pub fn select_top(scores: &[f64], budget: usize, order: Order) -> Vec<usize> {
    let n = scores.len();
    let budget = budget.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    if budget == 0 {
        return Vec::new();
    }
    if budget < n {
        idx.select_nth_unstable_by(budget - 1, |&a, &b| order.rank(scores, a, b));
        idx.truncate(budget);
    }
    idx.sort_unstable();
    idx
}

/// Scores for every source row and the rows kept under the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSelection {
    pub scores: Vec<f64>,
    pub selected: Vec<usize>,
    pub budget: usize,
    pub method: Method,
    pub seed: u64,
    pub order: Order,
    /// Set when the requested budget exceeded the number of rows.
    pub budget_clamped: bool,
}

impl ScoredSelection {
    /// Rank `scores` in `method`'s direction and keep `budget` rows.
    pub fn from_scores(scores: Vec<f64>, budget: usize, method: Method, seed: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::arg("budget must be at least 1"));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Data(format!("score of row {i} is not finite")));
        }
        let order = method.order();
        let budget_clamped = budget > scores.len();
        if budget_clamped {
            log::warn!(
                "budget {budget} exceeds {} source rows; selecting all of them",
                scores.len()
            );
        }
        let selected = select_top(&scores, budget, order);
        Ok(Self {
            scores,
            selected,
            budget,
            method,
            seed,
            order,
            budget_clamped,
        })
    }

    /// SHA-256 over the selected indices (as little-endian u64s).
    pub fn digest(&self) -> String {
        digest_indices(&self.selected)
    }

    /// Report skeleton for this selection; callers add inputs, timings and parameters.
    pub fn report(&self) -> RunReport {
        let (min, max, mean) = score_stats(&self.scores);
        let mut report = RunReport {
            method: self.method.to_string(),
            order: self.order.as_str().to_string(),
            budget: self.budget as u64,
            selected_count: self.selected.len() as u64,
            source_count: self.scores.len() as u64,
            score_min: min,
            score_max: max,
            score_mean: mean,
            seed: self.seed,
            wall_ms: 0,
            selection_digest: self.digest(),
            input_digests: Vec::new(),
            warnings: Vec::new(),
            params: BTreeMap::new(),
        };
        if self.budget_clamped {
            report.warnings.push(format!(
                "budget {} clamped to {} source rows",
                self.budget,
                self.scores.len()
            ));
        }
        report
    }
}

pub fn digest_indices(indices: &[usize]) -> String {
    let mut hasher = Sha256::new();
    for &i in indices {
        hasher.update((i as u64).to_le_bytes());
    }
    hex::encode(hasher.finalize())
}

fn score_stats(scores: &[f64]) -> (f64, f64, f64) {
    if scores.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    // summation rounding can push the mean a hair outside [min, max]
    (min, max, mean.clamp(min, max))
}

/// Write one decimal row index per line, ascending, newline-terminated.
pub fn write_selection(sel: &ScoredSelection, path: impl AsRef<Path>) -> Result<()> {
    write_indices(&sel.selected, path)
}

pub fn write_indices(indices: &[usize], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Data("selection is not strictly increasing".into()));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for i in indices {
        writeln!(out, "{i}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_selection(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let indices = text
        .lines()
        .enumerate()
        .map(|(n, l)| {
            l.trim().parse::<usize>().map_err(|_| {
                Error::format(path, format!("line {}: {l:?} is not a row index", n + 1))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::format(path, "indices are not strictly increasing"));
    }
    Ok(indices)
}

/// Summary of one filtering run.
///
/// Serialized as flat `key = value` TOML with a fixed key order; method
/// specific parameters go in the trailing `params` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub order: String,
    pub budget: u64,
    pub selected_count: u64,
    pub source_count: u64,
    pub score_min: f64,
    pub score_max: f64,
    pub score_mean: f64,
    /// Written as a string: TOML integers stop at `i64::MAX`.
    #[serde(with = "u64_text")]
    pub seed: u64,
    pub wall_ms: u64,
    pub selection_digest: String,
    pub input_digests: Vec<String>,
    pub warnings: Vec<String>,
    pub params: BTreeMap<String, String>,
}

mod u64_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

impl RunReport {
    pub fn param(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

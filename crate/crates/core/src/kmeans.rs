//! K-means over target embeddings: k-means++ seeding followed by Lloyd
//! iterations.
//!
//! Assignment and center accumulation run in parallel over fixed-size row
//! chunks whose partial sums are merged in chunk order, so a fit is bitwise
//! reproducible for a given seed no matter how many workers run it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::par::{chunked_reduce, map_rows, sq_dist};

pub const DEFAULT_K: usize = 200;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
pub const DEFAULT_N_INIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once `(previous - current) / previous` inertia drops below this.
    pub rel_tol: f64,
    /// Independent k-means++ starts; the lowest-inertia fit wins, ties to the earliest.
    pub n_init: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            seed: 42,
            max_iters: DEFAULT_MAX_ITERS,
            rel_tol: DEFAULT_REL_TOL,
            n_init: DEFAULT_N_INIT,
        }
    }
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            ..Self::default()
        }
    }
}

/// `k` centers in row-major `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    pub centers: Vec<f64>,
    /// Sum of squared distances of the training rows to their nearest center.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after seeding and after every Lloyd iteration.
    pub inertia_history: Vec<f64>,
}

impl ClusterModel {
    /// Wrap externally supplied centers (e.g. loaded from an EMB1 file).
    pub fn from_centers(dim: usize, centers: Vec<f64>) -> Result<Self> {
        if dim == 0 || centers.is_empty() || !centers.len().is_multiple_of(dim) {
            return Err(Error::arg(
                "centers must be a non-empty whole number of rows",
            ));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::Data("non-finite cluster center".into()));
        }
        Ok(Self {
            k: centers.len() / dim,
            dim,
            centers,
            inertia: 0.0,
            iterations_run: 0,
            inertia_history: Vec::new(),
        })
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.dim..(k + 1) * self.dim]
    }

    /// Centers as an embedding set (values narrowed to `f32`).
    pub fn to_embeddings(&self) -> Result<EmbeddingSet> {
        EmbeddingSet::new(self.dim, self.centers.iter().map(|&c| c as f32).collect())
    }

    pub fn from_embeddings(set: &EmbeddingSet) -> Result<Self> {
        Self::from_centers(set.dim(), set.data().iter().map(|&v| v as f64).collect())
    }
}

/// Index and squared distance of the nearest center; ties go to the lower index.
#[inline]
pub(crate) fn nearest(row: &[f32], centers: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centers.chunks_exact(dim).enumerate() {
        let d = sq_dist(row, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

pub fn fit_kmeans(target: &EmbeddingSet, params: &KMeansParams) -> Result<ClusterModel> {
    let k = params.k;
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    if target.count() == 0 {
        return Err(Error::arg("cannot cluster an empty set"));
    }
    if k > target.count() {
        return Err(Error::arg(format!(
            "k = {k} exceeds the {} target rows",
            target.count()
        )));
    }
    if params.max_iters == 0 {
        return Err(Error::arg("max_iters must be at least 1"));
    }
    if params.rel_tol.is_nan() || params.rel_tol < 0.0 {
        return Err(Error::arg("rel_tol must be non-negative"));
    }
    if params.n_init == 0 {
        return Err(Error::arg("n_init must be at least 1"));
    }

    let mut best: Option<ClusterModel> = None;
    for start in 0..params.n_init {
        let mut rng = ChaCha20Rng::seed_from_u64(params.seed);
        rng.set_stream(start as u64);
        let centers = seed_plus_plus(target, k, &mut rng);
        let model = lloyd(target, centers, k, params.max_iters, params.rel_tol);
        if best.as_ref().is_none_or(|b| model.inertia < b.inertia) {
            best = Some(model);
        }
        if best.as_ref().is_some_and(|b| b.inertia == 0.0) {
            break;
        }
    }
    Ok(best.expect("n_init >= 1"))
}

/// Lloyd iterations starting from caller-supplied centers.
pub fn refine_kmeans(
    rows: &EmbeddingSet,
    initial: &ClusterModel,
    max_iters: usize,
    rel_tol: f64,
) -> Result<ClusterModel> {
    rows.check_dim(initial.dim, "refine")?;
    if rows.is_empty() {
        return Err(Error::arg("cannot cluster an empty set"));
    }
    Ok(lloyd(
        rows,
        initial.centers.clone(),
        initial.k,
        max_iters,
        rel_tol,
    ))
}

fn lloyd(
    target: &EmbeddingSet,
    mut centers: Vec<f64>,
    k: usize,
    max_iters: usize,
    rel_tol: f64,
) -> ClusterModel {
    let dim = target.dim();
    let (mut labels, mut dists) = assign_with_dist(target, &centers, dim);
    let mut inertia = total(&dists);
    let mut history = vec![inertia];
    let mut iterations_run = 0;

    for it in 1..=max_iters {
        centers = update_centers(target, &labels, &mut dists, &centers, k);
        let (l, d) = assign_with_dist(target, &centers, dim);
        labels = l;
        dists = d;
        let next = total(&dists);
        history.push(next);
        iterations_run = it;
        let improvement = if inertia > 0.0 {
            (inertia - next) / inertia
        } else {
            0.0
        };
        let stalled = next == inertia;
        inertia = next;
        if inertia == 0.0 || stalled || improvement < rel_tol {
            break;
        }
    }

    ClusterModel {
        k,
        dim,
        centers,
        inertia,
        iterations_run,
        inertia_history: history,
    }
}

/// Nearest center for every row (L2, ties to the lower center index).
pub fn assign(model: &ClusterModel, rows: &EmbeddingSet) -> Result<Vec<usize>> {
    rows.check_dim(model.dim, "assign")?;
    let dim = model.dim;
    Ok(map_rows(rows.count(), |i| {
        nearest(rows.row(i), &model.centers, dim).0
    }))
}

/// Sum of squared distances of `rows` to their nearest center.
pub fn inertia_of(model: &ClusterModel, rows: &EmbeddingSet) -> Result<f64> {
    rows.check_dim(model.dim, "inertia")?;
    let (_, d) = assign_with_dist(rows, &model.centers, model.dim);
    Ok(total(&d))
}

fn total(dists: &[f64]) -> f64 {
    chunked_reduce(dists.len(), |r| dists[r].iter().sum::<f64>(), |a, b| a + b).unwrap_or(0.0)
}

fn assign_with_dist(rows: &EmbeddingSet, centers: &[f64], dim: usize) -> (Vec<usize>, Vec<f64>) {
    map_rows(rows.count(), |i| nearest(rows.row(i), centers, dim))
        .into_iter()
        .unzip()
}

fn seed_plus_plus(target: &EmbeddingSet, k: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let n = target.count();
    let dim = target.dim();
    let mut centers = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centers.extend(target.row(first).iter().map(|&v| v as f64));
    let mut chosen = vec![false; n];
    chosen[first] = true;

    let mut d2: Vec<f64> = map_rows(n, |i| sq_dist(target.row(i), &centers[..dim]));
    for _ in 1..k {
        let weight = total(&d2);
        let pick = if weight > 0.0 {
            let mut u = rng.random::<f64>() * weight;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            pick.expect("positive total weight implies a positive entry")
        } else {
            // every row already coincides with a center
            (0..n).find(|&i| !chosen[i]).unwrap_or(0)
        };
        chosen[pick] = true;
        let start = centers.len();
        centers.extend(target.row(pick).iter().map(|&v| v as f64));
        let newest = &centers[start..];
        let updated: Vec<f64> = map_rows(n, |i| d2[i].min(sq_dist(target.row(i), newest)));
        d2 = updated;
    }
    centers
}

/// Lloyd update. A cluster that lost all its rows is re-seeded at the row
/// currently farthest from its own center.
fn update_centers(
    rows: &EmbeddingSet,
    labels: &[usize],
    dists: &mut [f64],
    old: &[f64],
    k: usize,
) -> Vec<f64> {
    let dim = rows.dim();
    let (mut sums, counts) = chunked_reduce(
        rows.count(),
        |range| {
            let mut sums = vec![0.0f64; k * dim];
            let mut counts = vec![0usize; k];
            for i in range {
                let c = labels[i];
                counts[c] += 1;
                let acc = &mut sums[c * dim..(c + 1) * dim];
                for (a, &v) in acc.iter_mut().zip(rows.row(i)) {
                    *a += v as f64;
                }
            }
            (sums, counts)
        },
        |(mut s, mut c), (s2, c2)| {
            for (a, b) in s.iter_mut().zip(&s2) {
                *a += b;
            }
            for (a, b) in c.iter_mut().zip(&c2) {
                *a += b;
            }
            (s, c)
        },
    )
    .expect("at least one row");

    for c in 0..k {
        let center = &mut sums[c * dim..(c + 1) * dim];
        if counts[c] > 0 {
            let n = counts[c] as f64;
            center.iter_mut().for_each(|v| *v /= n);
            continue;
        }
        // Farthest row wins; ties to the lower index. Its distance is zeroed
        // so a second empty cluster picks a different row.
        let mut far = None;
        for (i, &d) in dists.iter().enumerate() {
            if d > 0.0 && far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        match far {
            Some((i, _)) => {
                for (dst, &v) in center.iter_mut().zip(rows.row(i)) {
                    *dst = v as f64;
                }
                dists[i] = 0.0;
            }
            None => center.copy_from_slice(&old[c * dim..(c + 1) * dim]),
        }
    }
    sums
}

//! Seeded Gaussian-mixture generators and brute-force reference oracles.
//!
//! Normal draws use the Box–Muller transform on uniforms from a ChaCha20
//! stream, so a given `(spec, seed)` yields the same rows on every platform.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: Vec<f64>,
    /// Isotropic standard deviation.
    pub stddev: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
    pub components: Vec<Component>,
}

impl MixtureSpec {
    /// Single isotropic Gaussian.
    pub fn gaussian(mean: Vec<f64>, stddev: f64, n: usize, seed: u64) -> Self {
        Self {
            dim: mean.len(),
            n,
            seed,
            components: vec![Component {
                mean,
                stddev,
                weight: 1.0,
            }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::arg("mixture dimension must be positive"));
        }
        if self.components.is_empty() {
            return Err(Error::arg("mixture needs at least one component"));
        }
        let mut weight_sum = 0.0;
        for (j, c) in self.components.iter().enumerate() {
            if c.mean.len() != self.dim {
                return Err(Error::arg(format!(
                    "component {j} mean has {} entries, expected {}",
                    c.mean.len(),
                    self.dim
                )));
            }
            if !(c.stddev > 0.0 && c.stddev.is_finite()) {
                return Err(Error::arg(format!("component {j} stddev must be positive")));
            }
            if !(c.weight >= 0.0 && c.weight.is_finite()) {
                return Err(Error::arg(format!(
                    "component {j} weight must be non-negative"
                )));
            }
            if c.mean.iter().any(|m| !m.is_finite()) {
                return Err(Error::arg(format!("component {j} mean is not finite")));
            }
            weight_sum += c.weight;
        }
        if (weight_sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!(
                "weights sum to {weight_sum}, expected 1"
            )));
        }
        Ok(())
    }

    /// Mixture density at `x`.
    pub fn density(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let var = c.stddev * c.stddev;
                let d2: f64 = x.iter().zip(&c.mean).map(|(a, m)| (a - m) * (a - m)).sum();
                c.weight
                    * (2.0 * PI * var).powf(-(self.dim as f64) / 2.0)
                    * (-d2 / (2.0 * var)).exp()
            })
            .sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Normal deviates via Box–Muller, both outputs of each pair used in turn.
pub struct BoxMuller {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl BoxMuller {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the log finite
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2 = self.rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Generated rows plus the index of the component that produced each one.
#[derive(Debug, Clone)]
pub struct Mixture {
    /// Rows labelled with their component index.
    pub set: EmbeddingSet,
    pub components: Vec<usize>,
}

pub fn generate_mixture(spec: &MixtureSpec) -> Result<Mixture> {
    spec.validate()?;
    let mut gen = BoxMuller::new(spec.seed);
    let mut data = Vec::with_capacity(spec.n * spec.dim);
    let mut components = Vec::with_capacity(spec.n);
    let last_live = spec
        .components
        .iter()
        .rposition(|c| c.weight > 0.0)
        .expect("validated weights sum to one");
    for _ in 0..spec.n {
        let u = gen.uniform();
        let mut acc = 0.0;
        let mut pick = last_live;
        for (j, c) in spec.components.iter().enumerate() {
            acc += c.weight;
            if u < acc && c.weight > 0.0 {
                pick = j;
                break;
            }
        }
        let c = &spec.components[pick];
        for m in &c.mean {
            data.push((m + c.stddev * gen.standard_normal()) as f32);
        }
        components.push(pick);
    }
    let labels = components.iter().map(|&c| c as i32).collect();
    let set = EmbeddingSet::new(spec.dim, data)?.with_labels(labels)?;
    Ok(Mixture { set, components })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesProbability {
    pub value: f64,
    /// Both densities underflowed to zero; `value` is then 0.5.
    pub underflow: bool,
}

/// `p_t(x) / (p_s(x) + p_t(x))`, the probability an ideal source-vs-target
/// classifier assigns to the target domain.
pub fn bayes_probability(
    source: &MixtureSpec,
    target: &MixtureSpec,
    x: &[f64],
) -> Result<BayesProbability> {
    source.validate()?;
    target.validate()?;
    if source.dim != target.dim || x.len() != source.dim {
        return Err(Error::arg(
            "dimension mismatch between mixtures and query point",
        ));
    }
    let ps = source.density(x);
    let pt = target.density(x);
    if ps + pt == 0.0 {
        return Ok(BayesProbability {
            value: 0.5,
            underflow: true,
        });
    }
    Ok(BayesProbability {
        value: pt / (ps + pt),
        underflow: false,
    })
}

pub const BRUTE_FORCE_MAX_ROWS: usize = 10;
pub const BRUTE_FORCE_MAX_K: usize = 3;

/// Smallest achievable inertia over every assignment of rows to `k` labels.
pub fn brute_force_kmeans(rows: &EmbeddingSet, k: usize) -> Result<f64> {
    let n = rows.count();
    if k == 0 || n == 0 {
        return Err(Error::arg("need at least one row and one cluster"));
    }
    if n > BRUTE_FORCE_MAX_ROWS || k > BRUTE_FORCE_MAX_K {
        return Err(Error::arg(format!(
            "exhaustive search limited to {BRUTE_FORCE_MAX_ROWS} rows and k <= {BRUTE_FORCE_MAX_K}"
        )));
    }
    let dim = rows.dim();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![0.0f64; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, &v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(rows.row(i)) {
                *s += v as f64;
            }
        }
        let mut cost = 0.0;
        for (i, &l) in labels.iter().enumerate() {
            let n_l = counts[l] as f64;
            for (s, &v) in sums[l * dim..(l + 1) * dim].iter().zip(rows.row(i)) {
                let d = v as f64 - s / n_l;
                cost += d * d;
            }
        }
        best = best.min(cost);

        // odometer increment over k^n assignments
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(best);
            }
            labels[pos] += 1;
            if labels[pos] < k {
                break;
            }
            labels[pos] = 0;
            pos += 1;
        }
    }
}

/// Source/target pair used by the filtering benchmarks.
#[derive(Debug, Clone)]
pub struct MixtureBenchmark {
    pub source: EmbeddingSet,
    /// Generating component of each source row (index into the source spec).
    pub source_components: Vec<usize>,
    pub target: EmbeddingSet,
    pub source_spec: MixtureSpec,
    pub target_spec: MixtureSpec,
}

/// Source: balanced mixture of unit Gaussians at `-5·1` and `+5·1`.
/// Target: draws from the `+5·1` component only.
pub fn two_component_benchmark(
    dim: usize,
    source_n: usize,
    target_n: usize,
    seed: u64,
) -> Result<MixtureBenchmark> {
    let source_spec = MixtureSpec {
        dim,
        n: source_n,
        seed,
        components: vec![
            Component {
                mean: vec![-5.0; dim],
                stddev: 1.0,
                weight: 0.5,
            },
            Component {
                mean: vec![5.0; dim],
                stddev: 1.0,
                weight: 0.5,
            },
        ],
    };
    let target_spec =
        MixtureSpec::gaussian(vec![5.0; dim], 1.0, target_n, seed ^ 0x9e37_79b9_7f4a_7c15);
    let source = generate_mixture(&source_spec)?;
    let target = generate_mixture(&target_spec)?;
    Ok(MixtureBenchmark {
        source: source.set.without_labels(),
        source_components: source.components,
        target: target.set.without_labels(),
        source_spec,
        target_spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_1d(mean: f64) -> MixtureSpec {
        MixtureSpec::gaussian(vec![mean], 1.0, 1, 0)
    }

    #[test]
    fn sample_mean_near_origin() {
        for seed in 0..5 {
            let mix = generate_mixture(&MixtureSpec::gaussian(vec![0.0, 0.0], 1.0, 10_000, seed))
                .unwrap();
            for d in 0..2 {
                let mean: f64 = mix.set.rows().map(|r| r[d] as f64).sum::<f64>() / 10_000.0;
                assert!(mean.abs() < 0.05, "seed {seed} dim {d}: {mean}");
            }
        }
    }

    #[test]
    fn zero_weight_component_never_drawn() {
        let spec = MixtureSpec {
            dim: 1,
            n: 500,
            seed: 3,
            components: vec![
                Component {
                    mean: vec![0.0],
                    stddev: 1.0,
                    weight: 1.0,
                },
                Component {
                    mean: vec![9.0],
                    stddev: 1.0,
                    weight: 0.0,
                },
            ],
        };
        let mix = generate_mixture(&spec).unwrap();
        assert!(mix.components.iter().all(|&c| c == 0));
    }

    #[test]
    fn same_seed_same_bits() {
        let spec = MixtureSpec::gaussian(vec![1.0, -2.0, 0.5], 2.0, 300, 77);
        let a = generate_mixture(&spec).unwrap();
        let b = generate_mixture(&spec).unwrap();
        assert_eq!(a.set.digest(), b.set.digest());
    }

    #[test]
    fn invalid_specs() {
        let mut spec = MixtureSpec::gaussian(vec![0.0], 0.0, 10, 0);
        assert!(generate_mixture(&spec).is_err());
        spec.components[0].stddev = 1.0;
        spec.components[0].weight = 0.5;
        assert!(generate_mixture(&spec).is_err());
    }

    #[test]
    fn bayes_symmetric_gaussians() {
        let (s, t) = (unit_1d(-1.0), unit_1d(1.0));
        let at0 = bayes_probability(&s, &t, &[0.0]).unwrap();
        assert!((at0.value - 0.5).abs() < 1e-15);
        let at1 = bayes_probability(&s, &t, &[1.0]).unwrap().value;
        // sigma(2x) at x = 1
        assert!((at1 - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
        assert!((at1 - 0.8808).abs() < 1e-4);
    }

    #[test]
    fn bayes_identical_specs_is_half() {
        let s = unit_1d(0.3);
        for x in [-4.0, 0.0, 0.3, 2.0] {
            assert_eq!(bayes_probability(&s, &s, &[x]).unwrap().value, 0.5);
        }
    }

    #[test]
    fn bayes_underflow_flag() {
        let p = bayes_probability(&unit_1d(-1.0), &unit_1d(1.0), &[1.0e6]).unwrap();
        assert!(p.underflow);
        assert_eq!(p.value, 0.5);
    }

    #[test]
    fn brute_force_small_cases() {
        let set = EmbeddingSet::new(1, vec![0.0, 0.0, 10.0, 10.0]).unwrap();
        assert_eq!(brute_force_kmeans(&set, 2).unwrap(), 0.0);
        let set = EmbeddingSet::new(1, vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(brute_force_kmeans(&set, 1).unwrap(), 2.0);
        let big = EmbeddingSet::new(1, vec![0.0; 11]).unwrap();
        assert!(brute_force_kmeans(&big, 2).is_err());
        let small = EmbeddingSet::new(1, vec![0.0; 3]).unwrap();
        assert!(brute_force_kmeans(&small, 4).is_err());
    }

    #[test]
    fn benchmark_shapes() {
        let b = two_component_benchmark(16, 2000, 500, 1).unwrap();
        assert_eq!(b.source.count(), 2000);
        assert_eq!(b.target.count(), 500);
        assert_eq!(b.source.dim(), 16);
        let plus = b.source_components.iter().filter(|&&c| c == 1).count();
        assert!((900..1100).contains(&plus));
    }
}

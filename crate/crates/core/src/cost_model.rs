//! Pre-training cost estimates.
//!
//! Compute per image scales with the pixel count, so an image-epoch at side
//! length `r` costs `(r / 224)^2` of one at 224. On top of that sits an
//! overhead term, either a flat number of hours or a per-image-epoch cost
//! that does not shrink with resolution (decoding, augmentation, loading).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REFERENCE_RESOLUTION: u32 = 224;
/// Target-side resolution is never varied.
pub const TARGET_RESOLUTION: u32 = 224;
pub const CALIBRATED_RESOLUTIONS: [u32; 2] = [112, 224];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverheadKind {
    /// `overhead` is hours, paid once per run.
    Fixed,
    /// `overhead` is hours per image-epoch, independent of resolution.
    PerImageEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    /// Hours per image-epoch at the reference resolution.
    pub throughput_coeff: f64,
    pub overhead: f64,
    pub overhead_kind: OverheadKind,
    pub reference_resolution: u32,
}

impl CostProfile {
    pub fn new(throughput_coeff: f64, overhead: f64, overhead_kind: OverheadKind) -> Result<Self> {
        let p = Self {
            throughput_coeff,
            overhead,
            overhead_kind,
            reference_resolution: REFERENCE_RESOLUTION,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.throughput_coeff.is_finite() && self.throughput_coeff > 0.0) {
            return Err(Error::arg("throughput coefficient must be positive"));
        }
        if !(self.overhead.is_finite() && self.overhead >= 0.0) {
            return Err(Error::arg("overhead must be nonnegative"));
        }
        if self.reference_resolution == 0 {
            return Err(Error::arg("reference resolution must be positive"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text).map_err(|e| Error::Serialize(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    fn columns(&self, images: f64, epochs: f64, resolution: u32) -> (f64, f64) {
        design_row(
            images,
            epochs,
            resolution,
            self.reference_resolution,
            self.overhead_kind,
        )
    }
}

fn design_row(
    images: f64,
    epochs: f64,
    resolution: u32,
    reference: u32,
    kind: OverheadKind,
) -> (f64, f64) {
    let scale = resolution as f64 / reference as f64;
    let work = images * epochs;
    let overhead = match kind {
        OverheadKind::Fixed => 1.0,
        OverheadKind::PerImageEpoch => work,
    };
    (work * scale * scale, overhead)
}

/// Estimated pre-training hours.
pub fn estimate_cost(
    images: u64,
    epochs: u32,
    resolution: u32,
    profile: &CostProfile,
) -> Result<f64> {
    if images == 0 || epochs == 0 || resolution == 0 {
        return Err(Error::arg("images, epochs and resolution must be positive"));
    }
    profile.validate()?;
    if !CALIBRATED_RESOLUTIONS.contains(&resolution) {
        log::warn!(
            "resolution {resolution} is outside the calibrated set {CALIBRATED_RESOLUTIONS:?}"
        );
    }
    let (a, b) = profile.columns(images as f64, epochs as f64, resolution);
    Ok(profile.throughput_coeff * a + profile.overhead * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostObservation {
    pub images: u64,
    pub epochs: u32,
    pub resolution: u32,
    pub hours: f64,
}

impl CostObservation {
    pub fn new(images: u64, epochs: u32, resolution: u32, hours: f64) -> Self {
        Self {
            images,
            epochs,
            resolution,
            hours,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub profile: CostProfile,
    /// Observed minus predicted hours, one per observation.
    pub residuals: Vec<f64>,
    pub rms: f64,
}

/// Least-squares fit of the throughput coefficient and overhead.
pub fn calibrate(observations: &[CostObservation], kind: OverheadKind) -> Result<Calibration> {
    if observations.len() < 2 {
        return Err(Error::Calibration("need at least two observations".into()));
    }
    for o in observations {
        if o.images == 0 || o.epochs == 0 || o.resolution == 0 {
            return Err(Error::Calibration(
                "observations need positive images, epochs and resolution".into(),
            ));
        }
        if !(o.hours.is_finite() && o.hours >= 0.0) {
            return Err(Error::Calibration(
                "observed hours must be finite and nonnegative".into(),
            ));
        }
    }
    let rows: Vec<(f64, f64)> = observations
        .iter()
        .map(|o| {
            design_row(
                o.images as f64,
                o.epochs as f64,
                o.resolution,
                REFERENCE_RESOLUTION,
                kind,
            )
        })
        .collect();

    // columns differ by orders of magnitude; scale them to unit norm first
    let na = rows.iter().map(|r| r.0 * r.0).sum::<f64>().sqrt();
    let nb = rows.iter().map(|r| r.1 * r.1).sum::<f64>().sqrt();
    let (mut saa, mut sab, mut sbb, mut sya, mut syb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (r, o) in rows.iter().zip(observations) {
        let (a, b) = (r.0 / na, r.1 / nb);
        saa += a * a;
        sab += a * b;
        sbb += b * b;
        sya += o.hours * a;
        syb += o.hours * b;
    }
    let det = saa * sbb - sab * sab;
    if det.abs() < 1e-10 {
        return Err(Error::Calibration(
            "observations do not separate throughput from overhead".into(),
        ));
    }
    let coeff = (sbb * sya - sab * syb) / det / na;
    let overhead = (saa * syb - sab * sya) / det / nb;
    if coeff <= 0.0 || coeff.is_nan() {
        return Err(Error::Calibration(format!(
            "fitted throughput coefficient {coeff:e} is not positive"
        )));
    }
    if overhead < 0.0 {
        return Err(Error::Calibration(format!(
            "fitted overhead {overhead:e} is negative"
        )));
    }
    let profile = CostProfile::new(coeff, overhead, kind)?;
    let residuals: Vec<f64> = rows
        .iter()
        .zip(observations)
        .map(|(r, o)| o.hours - (coeff * r.0 + overhead * r.1))
        .collect();
    let rms = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();
    Ok(Calibration {
        profile,
        residuals,
        rms,
    })
}

pub const IMAGENET_IMAGES: u64 = 1_280_000;

/// Full supervised ImageNet pre-training on one GPU, range midpoints.
pub fn supervised_imagenet_observations() -> [CostObservation; 2] {
    [
        CostObservation::new(IMAGENET_IMAGES, 90, 224, 170.0),
        CostObservation::new(IMAGENET_IMAGES, 90, 112, 100.0),
    ]
}

/// Full MoCo-v2 ImageNet pre-training on four GPUs, range midpoints.
pub fn unsupervised_imagenet_observations() -> [CostObservation; 2] {
    [
        CostObservation::new(IMAGENET_IMAGES, 100, 224, 215.0),
        CostObservation::new(IMAGENET_IMAGES, 100, 112, 115.0),
    ]
}

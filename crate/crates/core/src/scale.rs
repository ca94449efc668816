//! Mapping HDR float data to 8-bit display values.
//!
//! Display limits come from manual input, the finite min/max, or the zscale
//! line-fit estimator. A transfer curve then maps the clamped, normalized
//! value to `[0, 1]`, and quantization rounds `255 * d` half away from zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ByteRaster, ImageF32, Raster};

/// Scale constant of the logarithmic curve.
pub const LOG_CURVE_A: f64 = 1000.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleError {
    #[error("image has {found} finite sampled pixels, zscale needs at least {needed}")]
    TooFewPixels { found: usize, needed: usize },
    #[error("image has no finite pixels")]
    AllNonFinite,
    #[error("invalid limits z1 = {z1}, z2 = {z2}")]
    InvalidLimits { z1: f64, z2: f64 },
    #[error("invalid zscale parameters: {0}")]
    BadParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitsSource {
    Manual,
    ZScale,
    MinMax,
}

/// Display black point `z1` and white point `z2` in data units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleLimits {
    z1: f64,
    z2: f64,
    source: LimitsSource,
}

impl ScaleLimits {
    pub fn new(z1: f64, z2: f64, source: LimitsSource) -> Result<Self, ScaleError> {
        if !(z1.is_finite() && z2.is_finite() && z1 <= z2) {
            return Err(ScaleError::InvalidLimits { z1, z2 });
        }
        Ok(Self { z1, z2, source })
    }

    pub fn manual(z1: f64, z2: f64) -> Result<Self, ScaleError> {
        Self::new(z1, z2, LimitsSource::Manual)
    }

    pub fn z1(&self) -> f64 {
        self.z1
    }

    pub fn z2(&self) -> f64 {
        self.z2
    }

    pub fn source(&self) -> LimitsSource {
        self.source
    }

    /// Normalized position of `v` inside the limits, clamped to `[0, 1]`.
    /// Zero for non-finite `v` or degenerate limits.
    #[inline]
    pub fn normalize(&self, v: f32) -> f64 {
        if !v.is_finite() || self.z1 == self.z2 {
            return 0.0;
        }
        ((v as f64 - self.z1) / (self.z2 - self.z1)).clamp(0.0, 1.0)
    }
}

/// zscale tuning. Defaults: 1000 samples, contrast 0.25, rejection at 2.5
/// RMS, at most half the samples rejected, 5 iterations, 5 pixels minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZScaleParams {
    pub n_samples: usize,
    pub contrast: f64,
    pub krej: f64,
    pub max_reject_fraction: f64,
    pub max_iterations: usize,
    pub min_pixels: usize,
}

impl Default for ZScaleParams {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            contrast: 0.25,
            krej: 2.5,
            max_reject_fraction: 0.5,
            max_iterations: 5,
            min_pixels: 5,
        }
    }
}

impl ZScaleParams {
    pub fn validate(&self) -> Result<(), ScaleError> {
        if !(self.contrast > 0.0 && self.contrast <= 1.0) {
            return Err(ScaleError::BadParams("contrast must be in (0, 1]"));
        }
        if !(self.max_reject_fraction > 0.0 && self.max_reject_fraction < 1.0) {
            return Err(ScaleError::BadParams("max_reject_fraction must be in (0, 1)"));
        }
        if self.n_samples < self.min_pixels || self.min_pixels == 0 {
            return Err(ScaleError::BadParams("need n_samples >= min_pixels >= 1"));
        }
        if !(self.krej > 0.0) {
            return Err(ScaleError::BadParams("krej must be positive"));
        }
        Ok(())
    }
}

/// Transfer curve applied after normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferCurve {
    #[default]
    Linear,
    Log,
    Sqrt,
}

impl TransferCurve {
    #[inline]
    pub fn eval(self, t: f64) -> f64 {
        match self {
            TransferCurve::Linear => t,
            TransferCurve::Sqrt => t.sqrt(),
            TransferCurve::Log => (1.0 + LOG_CURVE_A * t).ln() / (1.0 + LOG_CURVE_A).ln(),
        }
    }
}

/// `round(255 * d)` with ties away from zero, for `d` in `[0, 1]`.
#[inline]
pub fn quantize(d: f64) -> u8 {
    (255.0 * d).round().clamp(0.0, 255.0) as u8
}

/// Finite minimum and maximum.
pub fn minmax_limits(img: &ImageF32) -> Result<ScaleLimits, ScaleError> {
    let (lo, hi) = img
        .finite_values()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
    if lo > hi {
        return Err(ScaleError::AllNonFinite);
    }
    ScaleLimits::new(lo as f64, hi as f64, LimitsSource::MinMax)
}

/// Samples used by zscale: a uniform stride over the flattened image
/// (`stride = max(1, total / n_samples)`, at most `n_samples` taken), with
/// non-finite values dropped, sorted ascending.
pub fn zscale_samples(img: &ImageF32, n_samples: usize) -> Vec<f64> {
    let stride = (img.len() / n_samples.max(1)).max(1);
    let mut samples: Vec<f64> = img
        .data()
        .iter()
        .step_by(stride)
        .take(n_samples)
        .filter(|v| v.is_finite())
        .map(|&v| v as f64)
        .collect();
    samples.sort_by(f64::total_cmp);
    samples
}

/// Least-squares line `y = slope * x + intercept` through the kept samples,
/// with `x` the sample index. Returns `None` with fewer than two points.
fn fit_line(samples: &[f64], keep: &[bool]) -> Option<(f64, f64)> {
    let (mut n, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64);
    for (i, (&y, &k)) in samples.iter().zip(keep).enumerate() {
        if k {
            n += 1;
            sx += i as f64;
            sy += y;
        }
    }
    if n < 2 {
        return None;
    }
    let (mx, my) = (sx / n as f64, sy / n as f64);
    let (mut sxy, mut sxx) = (0.0f64, 0.0f64);
    for (i, (&y, &k)) in samples.iter().zip(keep).enumerate() {
        if k {
            let dx = i as f64 - mx;
            sxy += dx * (y - my);
            sxx += dx * dx;
        }
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// zscale display limits.
///
/// A line is fitted to the sorted samples against their index. Each
/// iteration rejects samples whose residual exceeds `krej` times the
/// residual RMS and also rejects their immediate neighbours. The loop ends
/// after `max_iterations`, when nothing new is rejected, or when fewer than
/// `max(min_pixels, max_reject_fraction * n)` samples survive. If enough
/// samples survive, the limits extend from the median by the fitted slope
/// divided by `contrast`, clamped to the sample extremes; otherwise the
/// extremes themselves are returned.
pub fn zscale_limits(img: &ImageF32, p: &ZScaleParams) -> Result<ScaleLimits, ScaleError> {
    p.validate()?;
    let samples = zscale_samples(img, p.n_samples);
    let n = samples.len();
    if n < p.min_pixels {
        return Err(ScaleError::TooFewPixels {
            found: n,
            needed: p.min_pixels,
        });
    }
    let (zmin, zmax) = (samples[0], samples[n - 1]);
    let median = if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2.0
    };
    let min_good = p
        .min_pixels
        .max((n as f64 * p.max_reject_fraction) as usize);

    let mut keep = vec![true; n];
    let mut good = n;
    let mut slope = 0.0;
    let mut rejected = Vec::new();
    for _ in 0..p.max_iterations {
        let Some((s, b)) = fit_line(&samples, &keep) else {
            break;
        };
        slope = s;
        let mut sq = 0.0;
        for (i, (&y, &k)) in samples.iter().zip(&keep).enumerate() {
            if k {
                let r = y - (s * i as f64 + b);
                sq += r * r;
            }
        }
        let threshold = p.krej * (sq / good as f64).sqrt();
        rejected.clear();
        for (i, (&y, &k)) in samples.iter().zip(&keep).enumerate() {
            if k && (y - (s * i as f64 + b)).abs() > threshold {
                rejected.push(i);
            }
        }
        if rejected.is_empty() {
            break;
        }
        for &i in &rejected {
            for j in i.saturating_sub(1)..=(i + 1).min(n - 1) {
                keep[j] = false;
            }
        }
        good = keep.iter().filter(|&&k| k).count();
        if good < min_good {
            break;
        }
    }

    let (z1, z2) = if good >= min_good {
        let step = slope.max(0.0) / p.contrast;
        let mid = (n - 1) / 2;
        (
            zmin.max(median - mid as f64 * step),
            zmax.min(median + (n - mid) as f64 * step),
        )
    } else {
        (zmin, zmax)
    };
    ScaleLimits::new(z1, z2, LimitsSource::ZScale)
}

/// Maps every pixel through the limits and curve to a display byte.
pub fn apply_curve(img: &ImageF32, limits: &ScaleLimits, curve: TransferCurve) -> ByteRaster {
    let mut out = vec![0u8; img.len()];
    out.par_chunks_mut(img.width())
        .zip(img.data().par_chunks(img.width()))
        .for_each(|(dst, src)| {
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = quantize(curve.eval(limits.normalize(v)));
            }
        });
    Raster::from_vec(img.width(), img.height(), out).expect("dimensions copied from input")
}

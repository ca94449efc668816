//! Robust statistics over the finite pixels of an image.
//!
//! Non-finite pixels (NaN, +/-Inf) never take part in any statistic here.

use thiserror::Error;

use crate::raster::ImageF32;

pub const DEFAULT_SIGMA_K: f64 = 3.0;
pub const DEFAULT_SIGMA_ITERS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("image has no finite pixels")]
    AllNonFinite,
    #[error("invalid sigma-clip parameters: k = {k}, max_iters = {max_iters}")]
    BadParams { k: f64, max_iters: usize },
}

/// Closed interval `[lo, hi]` in data units; `lo <= hi`, both finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipBounds {
    pub lo: f64,
    pub hi: f64,
}

impl ClipBounds {
    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    #[inline]
    pub fn clamp(&self, v: f32) -> f32 {
        if !v.is_finite() {
            return v;
        }
        let c = (v as f64).clamp(self.lo, self.hi);
        c as f32
    }
}

/// Median of `values`, reordering them. Even lengths average the two middle
/// elements. Panics on an empty slice.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        *upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (below + *upper) / 2.0
    }
}

/// Same as [`median_in_place`] for `f32` data.
pub fn median_in_place_f32(values: &mut [f32]) -> f32 {
    let n = values.len();
    assert!(n > 0, "median of empty slice");
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, f32::total_cmp);
    if n % 2 == 1 {
        *upper
    } else {
        let below = lower.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        (below + *upper) / 2.0
    }
}

/// Population mean and standard deviation, summed in slice order.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Outcome of an iterative sigma clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaClip {
    pub bounds: ClipBounds,
    /// Passes executed (each pass computes one interval).
    pub iterations: usize,
    /// True when the last pass rejected nothing.
    pub converged: bool,
    /// Finite values left inside `bounds` after the last pass.
    pub survivors: usize,
}

/// Iterative median-centred k-sigma clip.
///
/// Each pass takes the median `m` and population standard deviation `s` of
/// the surviving values and keeps those inside `[m - k*s, m + k*s]`. Passes
/// repeat until one rejects nothing or `max_iters` passes have run. The
/// interval from the last pass is returned.
pub fn sigma_clip(values: &[f32], k: f64, max_iters: usize) -> Result<SigmaClip, StatsError> {
    if !(k > 0.0 && k.is_finite()) || max_iters == 0 {
        return Err(StatsError::BadParams { k, max_iters });
    }
    let mut survivors: Vec<f64> = values
        .iter()
        .filter(|v| v.is_finite())
        .map(|&v| v as f64)
        .collect();
    if survivors.is_empty() {
        return Err(StatsError::AllNonFinite);
    }
    let mut scratch = Vec::with_capacity(survivors.len());
    let mut bounds = ClipBounds { lo: 0.0, hi: 0.0 };
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        scratch.clear();
        scratch.extend_from_slice(&survivors);
        let m = median_in_place(&mut scratch);
        let (_, s) = mean_std(&survivors);
        bounds = ClipBounds {
            lo: m - k * s,
            hi: m + k * s,
        };
        let before = survivors.len();
        survivors.retain(|&v| bounds.contains(v));
        if survivors.len() == before {
            converged = true;
            break;
        }
        if survivors.is_empty() {
            break;
        }
    }
    Ok(SigmaClip {
        bounds,
        iterations,
        converged,
        survivors: survivors.len(),
    })
}

/// Bounds of an iterative k-sigma clip over the finite pixels of `img`.
pub fn sigma_clip_bounds(img: &ImageF32, k: f64, max_iters: usize) -> Result<ClipBounds, StatsError> {
    sigma_clip(img.data(), k, max_iters).map(|c| c.bounds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;

    #[test]
    fn median_odd_even() {
        assert_eq!(median_in_place(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_in_place(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median_in_place_f32(&mut [5.0]), 5.0);
    }

    #[test]
    fn constant_image_degenerates() {
        let img = Raster::filled(4, 4, 7.0f32).unwrap();
        let b = sigma_clip_bounds(&img, 3.0, 5).unwrap();
        assert_eq!((b.lo, b.hi), (7.0, 7.0));
    }

    #[test]
    fn single_outlier_is_rejected() {
        let mut v = vec![0.0f32; 9];
        v.push(1000.0);
        let c = sigma_clip(&v, 3.0, 5).unwrap();
        assert_eq!((c.bounds.lo, c.bounds.hi), (0.0, 0.0));
        assert_eq!(c.iterations, 2);
        assert!(c.converged);
        assert_eq!(c.survivors, 9);
    }

    #[test]
    fn non_finite_policy() {
        let img = Raster::from_vec(3, 1, vec![f32::NAN, f32::INFINITY, 2.0]).unwrap();
        let b = sigma_clip_bounds(&img, 3.0, 5).unwrap();
        assert_eq!((b.lo, b.hi), (2.0, 2.0));
        let img = Raster::from_vec(2, 1, vec![f32::NAN, f32::NEG_INFINITY]).unwrap();
        assert_eq!(sigma_clip_bounds(&img, 3.0, 5), Err(StatsError::AllNonFinite));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(matches!(sigma_clip(&[1.0], 0.0, 5), Err(StatsError::BadParams { .. })));
        assert!(matches!(sigma_clip(&[1.0], 3.0, 0), Err(StatsError::BadParams { .. })));
    }

    #[test]
    fn clamp_leaves_non_finite() {
        let b = ClipBounds { lo: -1.0, hi: 1.0 };
        assert_eq!(b.clamp(5.0), 1.0);
        assert_eq!(b.clamp(-5.0), -1.0);
        assert!(b.clamp(f32::NAN).is_nan());
    }
}

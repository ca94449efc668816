use tinyseg::pipeline::{LimitsMode, PipelineParams};
use tinyseg::scale::TransferCurve;

use crate::{mask, stats, zscale};

fn clamp_finite(img: &[f32], lo: f64, hi: f64) -> Vec<f32> {
    img.iter()
        .map(|&v| if v.is_finite() { (v as f64).clamp(lo, hi) as f32 } else { v })
        .collect()
}

/// Display limits for `img` under `mode`, including the fallbacks: too
/// few samples for zscale uses min/max, no finite pixel gives `(0, 0)`.
pub fn limits(img: &[f32], mode: &LimitsMode) -> (f64, f64) {
    let finite: Vec<f64> = img.iter().filter(|v| v.is_finite()).map(|&v| v as f64).collect();
    let minmax = || {
        if finite.is_empty() {
            (0.0, 0.0)
        } else {
            let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    match mode {
        LimitsMode::Manual { z1, z2 } => (*z1, *z2),
        LimitsMode::MinMax => minmax(),
        LimitsMode::ZScale(p) => {
            let p = zscale::Params {
                n_samples: p.n_samples,
                contrast: p.contrast,
                krej: p.krej,
                max_reject_fraction: p.max_reject_fraction,
                max_iterations: p.max_iterations,
                min_pixels: p.min_pixels,
            };
            zscale::zscale(img, &p).unwrap_or_else(minmax)
        }
    }
}

/// Display byte for one value.
pub fn display_byte(v: f32, z1: f64, z2: f64, curve: TransferCurve) -> u8 {
    let t = if !v.is_finite() || z1 == z2 {
        0.0
    } else {
        ((v as f64 - z1) / (z2 - z1)).clamp(0.0, 1.0)
    };
    let d = match curve {
        TransferCurve::Linear => t,
        TransferCurve::Sqrt => t.sqrt(),
        TransferCurve::Log => (1.0 + 1000.0 * t).ln() / 1001f64.ln(),
    };
    let x = 255.0 * d;
    let r = if x - x.floor() >= 0.5 { x.floor() + 1.0 } else { x.floor() };
    r.clamp(0.0, 255.0) as u8
}

/// Runs the whole image chain from scratch.
pub fn display(img: &[f32], p: &PipelineParams) -> Vec<u8> {
    let mut data = img.to_vec();
    if let Some((lo, hi)) = p.raw_clip {
        data = clamp_finite(&data, lo, hi);
    }
    if let Some(k) = p.sigma_k {
        if let Some(c) = stats::sigma_clip(&data, k, 5) {
            data = clamp_finite(&data, c.lo, c.hi);
        }
    }
    let (z1, z2) = limits(&data, &p.limits);
    data.iter().map(|&v| display_byte(v, z1, z2, p.curve)).collect()
}

/// Runs the whole mask chain from scratch. `overlay` uses 0/1/2 states.
pub fn final_mask(prob: &[f32], w: usize, h: usize, p: &PipelineParams, overlay: &[u8]) -> Vec<u8> {
    let m = mask::threshold(prob, p.threshold);
    let m = mask::dilate(&m, w, h, p.dilation);
    mask::apply_overlay(&m, overlay)
}

use crate::stats::median_f32;

/// Per-pixel median over a `window` x `window` neighbourhood with edge
/// replication, skipping non-finite values (NaN if none remain).
pub fn median_filter(img: &[f32], w: usize, h: usize, window: usize) -> Vec<f32> {
    let r = (window / 2) as i64;
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut nb = Vec::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    let v = img[yy * w + xx];
                    if v.is_finite() {
                        nb.push(v);
                    }
                }
            }
            out.push(if nb.is_empty() { f32::NAN } else { median_f32(&nb) });
        }
    }
    out
}

/// `1.4826 * median(|r - median(r)|)` over finite residuals.
pub fn robust_sigma(residual: &[f32]) -> f64 {
    let finite: Vec<f32> = residual.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return 0.0;
    }
    let med = median_f32(&finite);
    let dev: Vec<f32> = finite.iter().map(|v| (v - med).abs()).collect();
    1.4826 * median_f32(&dev) as f64
}

/// Baseline probability: positive residual over the median background,
/// reaching 1 at ten robust sigmas times `scale`.
pub fn baseline(img: &[f32], w: usize, h: usize, window: usize, scale: f64) -> Vec<f32> {
    let bg = median_filter(img, w, h, window);
    let residual: Vec<f32> = img
        .iter()
        .zip(&bg)
        .map(|(&v, &m)| if v.is_finite() && m.is_finite() { v - m } else { f32::NAN })
        .collect();
    let sigma = robust_sigma(&residual).max(1e-12);
    residual
        .iter()
        .map(|&r| {
            if r.is_finite() {
                (r as f64 / (scale * sigma * 10.0)).clamp(0.0, 1.0) as f32
            } else {
                0.0
            }
        })
        .collect()
}

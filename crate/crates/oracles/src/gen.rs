//! Seeded random rasters.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Astronomical-looking image: flat sky, optional gradient, Gaussian point
/// sources, read noise and at most 1% extreme outliers.
pub fn sky_image(rng: &mut StdRng, w: usize, h: usize) -> Vec<f32> {
    let sky: f64 = rng.gen_range(-100.0..5000.0);
    let (gx, gy): (f64, f64) = if rng.gen_bool(0.5) {
        (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))
    } else {
        (0.0, 0.0)
    };
    let noise_sigma: f64 = rng.gen_range(1.0..50.0);
    let noise = Normal::new(0.0, noise_sigma).unwrap();
    let mut img: Vec<f64> = (0..w * h)
        .map(|i| sky + gx * (i % w) as f64 + gy * (i / w) as f64 + noise.sample(rng))
        .collect();
    for _ in 0..rng.gen_range(0..20) {
        let (cx, cy) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..h as f64));
        let amp = rng.gen_range(10.0..50.0) * noise_sigma;
        let s2 = rng.gen_range(1.0f64..9.0);
        let r = (4.0 * s2.sqrt()).ceil() as i64;
        for y in (cy as i64 - r).max(0)..(cy as i64 + r + 1).min(h as i64) {
            for x in (cx as i64 - r).max(0)..(cx as i64 + r + 1).min(w as i64) {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                img[y as usize * w + x as usize] += amp * (-d2 / (2.0 * s2)).exp();
            }
        }
    }
    let n_out = rng.gen_range(0..=(w * h) / 100);
    for _ in 0..n_out {
        let i = rng.gen_range(0..w * h);
        img[i] = if rng.gen_bool(0.8) { 65535.0 } else { -1e4 };
    }
    img.into_iter().map(|v| v as f32).collect()
}

/// Standard normal pixels.
pub fn normal_image(rng: &mut StdRng, n: usize) -> Vec<f32> {
    let d = Normal::new(0.0f32, 1.0).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

/// Uniform probabilities, with some exact 0, 1 and repeated values.
pub fn prob_map(rng: &mut StdRng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            2 => 0.5,
            _ => rng.gen::<f32>(),
        })
        .collect()
}

/// Binary mask with the given density of ones.
pub fn binary_mask(rng: &mut StdRng, n: usize, density: f64) -> Vec<u8> {
    (0..n).map(|_| rng.gen_bool(density) as u8).collect()
}

/// Overlay states 0/1/2, mostly neutral.
pub fn overlay(rng: &mut StdRng, n: usize, edit_density: f64) -> Vec<u8> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(edit_density) {
                rng.gen_range(1..=2)
            } else {
                0
            }
        })
        .collect()
}

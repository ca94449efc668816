/// zscale parameters, mirrored as plain fields.
#[derive(Debug, Clone, Copy)]
pub struct Params {
    pub n_samples: usize,
    pub contrast: f64,
    pub krej: f64,
    pub max_reject_fraction: f64,
    pub max_iterations: usize,
    pub min_pixels: usize,
}

impl Default for Params {
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

/// Reference zscale over a row-major pixel buffer. `None` when fewer than
/// `min_pixels` finite samples are available.
///
/// The line is fitted by solving the 2x2 normal equations directly from
/// raw sums, which gives numerics independent of a centred fit.
pub fn zscale(pixels: &[f32], p: &Params) -> Option<(f64, f64)> {
    let stride = std::cmp::max(1, pixels.len() / p.n_samples);
    let mut samples = Vec::new();
    let mut idx = 0;
    while idx < pixels.len() && samples.len() < p.n_samples {
        samples.push(pixels[idx]);
        idx += stride;
    }
    let mut s: Vec<f64> = samples
        .into_iter()
        .filter(|v| v.is_finite())
        .map(f64::from)
        .collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n < p.min_pixels {
        return None;
    }
    let zmin = s[0];
    let zmax = s[n - 1];
    let median = crate::stats::median(&s);
    let min_good = std::cmp::max(p.min_pixels, (p.max_reject_fraction * n as f64).floor() as usize);

    let mut bad = vec![false; n];
    let mut slope = 0.0;
    let mut ngood = n;
    for _ in 0..p.max_iterations {
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            if !bad[i] {
                let x = i as f64;
                sw += 1.0;
                sx += x;
                sy += s[i];
                sxx += x * x;
                sxy += x * s[i];
            }
        }
        if sw < 2.0 {
            break;
        }
        let det = sw * sxx - sx * sx;
        let a = (sw * sxy - sx * sy) / det;
        let b = (sxx * sy - sx * sxy) / det;
        slope = a;

        let mut ssr = 0.0;
        for i in 0..n {
            if !bad[i] {
                let r = s[i] - (a * i as f64 + b);
                ssr += r * r;
            }
        }
        let limit = p.krej * (ssr / ngood as f64).sqrt();
        let flagged: Vec<usize> = (0..n)
            .filter(|&i| !bad[i] && (s[i] - (a * i as f64 + b)).abs() > limit)
            .collect();
        if flagged.is_empty() {
            break;
        }
        for i in flagged {
            bad[i] = true;
            if i > 0 {
                bad[i - 1] = true;
            }
            if i + 1 < n {
                bad[i + 1] = true;
            }
        }
        ngood = bad.iter().filter(|b| !**b).count();
        if ngood < min_good {
            break;
        }
    }

    if ngood < min_good {
        return Some((zmin, zmax));
    }
    let slope = if slope > 0.0 { slope / p.contrast } else { 0.0 };
    let mid = ((n - 1) / 2) as f64;
    let z1 = f64::max(zmin, median - mid * slope);
    let z2 = f64::min(zmax, median + (n as f64 - mid) * slope);
    Some((z1, z2))
}

/// Median by full sort. Even lengths average the two middle values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// f32 median by full sort, averaging in f32 for even lengths.
pub fn median_f32(values: &[f32]) -> f32 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Result of [`sigma_clip`]: final bounds and the number of passes run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipResult {
    pub lo: f64,
    pub hi: f64,
    pub passes: usize,
}

/// Brute-force iterative clip around the median with population sigma.
///
/// Every pass rebuilds the survivor list from the full input by testing
/// each original value against every interval produced so far.
pub fn sigma_clip(values: &[f32], k: f64, max_iters: usize) -> Option<ClipResult> {
    let finite: Vec<f64> = values
        .iter()
        .filter(|v| v.is_finite())
        .map(|&v| v as f64)
        .collect();
    if finite.is_empty() {
        return None;
    }
    let surviving = |intervals: &[(f64, f64)]| -> Vec<f64> {
        finite
            .iter()
            .copied()
            .filter(|&v| intervals.iter().all(|&(lo, hi)| lo <= v && v <= hi))
            .collect()
    };
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    loop {
        let survivors = surviving(&intervals);
        let n = survivors.len() as f64;
        let m = median(&survivors);
        let mut sum = 0.0;
        for v in &survivors {
            sum += v;
        }
        let mean = sum / n;
        let mut ss = 0.0;
        for v in &survivors {
            ss += (v - mean) * (v - mean);
        }
        let s = (ss / n).sqrt();
        intervals.push((m - k * s, m + k * s));
        let next = surviving(&intervals);
        if next.len() == survivors.len() || next.is_empty() || intervals.len() == max_iters {
            break;
        }
    }
    let &(lo, hi) = intervals.last()?;
    Some(ClipResult {
        lo,
        hi,
        passes: intervals.len(),
    })
}

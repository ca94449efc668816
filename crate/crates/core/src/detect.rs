//! Detectors that turn a science image into a probability map.
//!
//! Three kinds share one contract (same dimensions, values in `[0, 1]`):
//! a classical median-residual baseline, a probability map loaded from disk
//! or from the uploaded FITS file, and a remote model server spoken to over
//! HTTP with NPY bodies.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::fits::{load_fits, FitsDocument};
use crate::mask::ProbMap;
use crate::npy::{load_npy, serialize_npy};
use crate::raster::{ImageF32, Raster};
use crate::stats::median_in_place_f32;

/// Residual, in robust sigmas, at which the baseline probability reaches 1.
pub const BASELINE_RAMP_SIGMAS: f64 = 10.0;
/// MAD to Gaussian sigma.
pub const MAD_SCALE: f64 = 1.4826;
pub const SIGMA_FLOOR: f64 = 1e-12;
pub const DEFAULT_WINDOW: usize = 5;
pub const DEFAULT_PROB_EXTNAME: &str = "CR_PROB";
pub const DEFAULT_REMOTE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("remote detector unreachable: {0}")]
    RemoteUnreachable(String),
    #[error("remote detector returned a bad response: {0}")]
    RemoteBadResponse(String),
    #[error("precomputed probability map unavailable: {0}")]
    PrecomputedMissing(String),
    #[error("probability map is {actual:?}, image is {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("window {window} larger than image {width}x{height}")]
    WindowTooLarge {
        window: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid detector spec: {0}")]
    InvalidSpec(String),
}

/// Which detector to run, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    Baseline {
        /// Odd median window side, at least 3.
        window: usize,
        /// Gain normalization: residuals are divided by `scale * sigma`.
        scale: f64,
    },
    Precomputed {
        /// NPY file or FITS file. `None` reads from the uploaded document.
        path: Option<PathBuf>,
        /// Extension holding the map when the source is FITS.
        extname: String,
    },
    Remote {
        url: String,
        timeout: Duration,
    },
}

impl Default for DetectorSpec {
    fn default() -> Self {
        DetectorSpec::Baseline {
            window: DEFAULT_WINDOW,
            scale: 1.0,
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<(), DetectError> {
        match self {
            DetectorSpec::Baseline { window, scale } => {
                if *window < 3 || window % 2 == 0 {
                    return Err(DetectError::InvalidSpec(format!(
                        "baseline window must be odd and >= 3, got {window}"
                    )));
                }
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(DetectError::InvalidSpec(format!(
                        "baseline scale must be positive, got {scale}"
                    )));
                }
            }
            DetectorSpec::Precomputed { extname, .. } if extname.is_empty() => {
                return Err(DetectError::InvalidSpec("empty extension name".into()));
            }
            DetectorSpec::Remote { url, timeout } => {
                if timeout.is_zero() {
                    return Err(DetectError::InvalidSpec("remote timeout must be > 0".into()));
                }
                if !(url.starts_with("http://") || url.starts_with("https://")) {
                    return Err(DetectError::InvalidSpec(format!("not an http url: {url}")));
                }
            }
            DetectorSpec::Precomputed { .. } => {}
        }
        Ok(())
    }
}

/// Textual form used by config files, environment and query strings:
///
/// * `baseline`, `baseline:window=7,scale=2`
/// * `precomputed`, `precomputed:ext=NAME`, `precomputed:path=FILE[,ext=NAME]`
/// * `remote:URL`, optionally followed by `#timeout=SECONDS`
impl FromStr for DetectorSpec {
    type Err = DetectError;

    fn from_str(s: &str) -> Result<Self, DetectError> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        let bad = |msg: String| DetectError::InvalidSpec(msg);
        let spec = match kind {
            "baseline" => {
                let (mut window, mut scale) = (DEFAULT_WINDOW, 1.0);
                for (k, v) in options(rest)? {
                    match k {
                        "window" => window = v.parse().map_err(|_| bad(format!("window {v:?}")))?,
                        "scale" => scale = v.parse().map_err(|_| bad(format!("scale {v:?}")))?,
                        _ => return Err(bad(format!("unknown baseline option {k:?}"))),
                    }
                }
                DetectorSpec::Baseline { window, scale }
            }
            "precomputed" => {
                let (mut path, mut extname) = (None, DEFAULT_PROB_EXTNAME.to_string());
                for (k, v) in options(rest)? {
                    match k {
                        "path" => path = Some(PathBuf::from(v)),
                        "ext" => extname = v.to_string(),
                        _ => return Err(bad(format!("unknown precomputed option {k:?}"))),
                    }
                }
                DetectorSpec::Precomputed { path, extname }
            }
            "remote" => {
                let (url, timeout) = match rest.rsplit_once("#timeout=") {
                    Some((u, t)) => {
                        let secs: f64 = t.parse().map_err(|_| bad(format!("timeout {t:?}")))?;
                        if !(secs > 0.0 && secs.is_finite()) {
                            return Err(bad(format!("timeout {t:?}")));
                        }
                        (u, Duration::from_secs_f64(secs))
                    }
                    None => (rest, DEFAULT_REMOTE_TIMEOUT),
                };
                DetectorSpec::Remote {
                    url: url.to_string(),
                    timeout,
                }
            }
            other => return Err(bad(format!("unknown detector {other:?}"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn options(rest: &str) -> Result<Vec<(&str, &str)>, DetectError> {
    rest.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.split_once('=')
                .ok_or_else(|| DetectError::InvalidSpec(format!("expected key=value, got {p:?}")))
        })
        .collect()
}

impl fmt::Display for DetectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorSpec::Baseline { window, scale } => {
                write!(f, "baseline:window={window},scale={scale}")
            }
            DetectorSpec::Precomputed { path, extname } => {
                write!(f, "precomputed:")?;
                if let Some(p) = path {
                    write!(f, "path={},", p.display())?;
                }
                write!(f, "ext={extname}")
            }
            DetectorSpec::Remote { url, timeout } => {
                write!(f, "remote:{url}#timeout={}", timeout.as_secs_f64())
            }
        }
    }
}

/// Runs the detector on `img`. A baseline window larger than the image
/// shrinks to [`fitted_window`].
pub fn detect(spec: &DetectorSpec, img: &ImageF32) -> Result<ProbMap, DetectError> {
    detect_with_document(spec, img, None)
}

/// Like [`detect`], with access to the uploaded FITS document for
/// precomputed maps stored as an extension of the input file.
pub fn detect_with_document(
    spec: &DetectorSpec,
    img: &ImageF32,
    document: Option<&FitsDocument>,
) -> Result<ProbMap, DetectError> {
    spec.validate()?;
    match spec {
        DetectorSpec::Baseline { window, scale } => {
            let (w, h) = img.dims();
            Ok(baseline_unchecked(img, fitted_window(*window, w, h), *scale))
        }
        DetectorSpec::Precomputed { path, extname } => {
            let raster = match path {
                Some(path) => {
                    let bytes = std::fs::read(path).map_err(|e| {
                        DetectError::PrecomputedMissing(format!("{}: {e}", path.display()))
                    })?;
                    if bytes.starts_with(b"\x93NUMPY") {
                        load_npy(&bytes)
                            .map_err(|e| DetectError::PrecomputedMissing(e.to_string()))?
                    } else {
                        load_fits(&bytes)
                            .and_then(|doc| doc.extension_image(extname))
                            .map_err(|e| DetectError::PrecomputedMissing(e.to_string()))?
                    }
                }
                None => document
                    .ok_or_else(|| {
                        DetectError::PrecomputedMissing("input is not a FITS file".into())
                    })?
                    .extension_image(extname)
                    .map_err(|e| DetectError::PrecomputedMissing(e.to_string()))?,
            };
            check_dims(img, &raster)?;
            let (map, clamped) = ProbMap::from_raster_clamped(raster);
            if clamped > 0 {
                log::warn!("precomputed map had {clamped} values outside [0, 1]; clamped");
            }
            Ok(map)
        }
        DetectorSpec::Remote { url, timeout } => remote_detect(url, *timeout, img),
    }
}

fn check_dims(img: &ImageF32, map: &ImageF32) -> Result<(), DetectError> {
    if img.dims() != map.dims() {
        return Err(DetectError::DimensionMismatch {
            expected: img.dims(),
            actual: map.dims(),
        });
    }
    Ok(())
}

/// `window` x `window` median filter with edge replication. Non-finite
/// neighbours are skipped; a neighbourhood with no finite value yields NaN.
pub fn median_filter(img: &ImageF32, window: usize) -> ImageF32 {
    let (w, h) = img.dims();
    let r = (window / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let src = img.data();
    let mut out = vec![0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each_init(
        || Vec::with_capacity(window * window),
        |buf, (y, row)| {
            let rows: Vec<&[f32]> = (-r..=r)
                .map(|dy| {
                    let yy = clamp(y as isize + dy, h);
                    &src[yy * w..(yy + 1) * w]
                })
                .collect();
            for (x, out_px) in row.iter_mut().enumerate() {
                buf.clear();
                let x0 = x as isize - r;
                let interior = x0 >= 0 && x as isize + r < w as isize;
                for line in &rows {
                    if interior {
                        let s = &line[x0 as usize..x0 as usize + window];
                        buf.extend(s.iter().copied().filter(|v| v.is_finite()));
                    } else {
                        for dx in -r..=r {
                            let v = line[clamp(x as isize + dx, w)];
                            if v.is_finite() {
                                buf.push(v);
                            }
                        }
                    }
                }
                *out_px = if buf.is_empty() {
                    f32::NAN
                } else {
                    median_in_place_f32(buf)
                };
            }
        },
    );
    Raster::from_vec(w, h, out).expect("dimensions copied from input")
}

/// Classical stand-in for a learned detector.
///
/// The residual `r = img - median_filter(img)` is scaled by a robust sigma
/// `1.4826 * MAD(r)` and mapped linearly so that 10 sigma gives probability
/// 1: `p = clamp(r / (scale * max(sigma, 1e-12) * 10), 0, 1)`. Negative
/// residuals and non-finite pixels get 0.
pub fn baseline_probability(
    img: &ImageF32,
    window: usize,
    scale: f64,
) -> Result<ProbMap, DetectError> {
    DetectorSpec::Baseline { window, scale }.validate()?;
    let (w, h) = img.dims();
    if window > w.min(h) {
        return Err(DetectError::WindowTooLarge {
            window,
            width: w,
            height: h,
        });
    }
    Ok(baseline_unchecked(img, window, scale))
}

/// Largest odd window not above `window` that fits a `w` x `h` image.
/// Images thinner than 3 pixels get 1, which yields an all-zero map.
pub fn fitted_window(window: usize, w: usize, h: usize) -> usize {
    let n = window.min(w).min(h).max(1);
    if n % 2 == 0 {
        n - 1
    } else {
        n
    }
}

fn baseline_unchecked(img: &ImageF32, window: usize, scale: f64) -> ProbMap {
    let (w, h) = img.dims();
    let background = median_filter(img, window);
    let residual: Vec<f32> = img
        .data()
        .par_iter()
        .zip(background.data().par_iter())
        .map(|(&v, &m)| if v.is_finite() && m.is_finite() { v - m } else { f32::NAN })
        .collect();
    let sigma = robust_sigma(&residual);
    let denom = scale * sigma.max(SIGMA_FLOOR) * BASELINE_RAMP_SIGMAS;
    let prob: Vec<f32> = residual
        .par_iter()
        .map(|&r| {
            if r.is_finite() {
                (r as f64 / denom).clamp(0.0, 1.0) as f32
            } else {
                0.0
            }
        })
        .collect();
    let raster = Raster::from_vec(w, h, prob).expect("dimensions copied from input");
    ProbMap::from_raster_clamped(raster).0
}

/// `1.4826 * median(|r - median(r)|)` over finite values; 0 if none.
pub fn robust_sigma(values: &[f32]) -> f64 {
    let mut finite: Vec<f32> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return 0.0;
    }
    let med = median_in_place_f32(&mut finite);
    for v in finite.iter_mut() {
        *v = (*v - med).abs();
    }
    MAD_SCALE * median_in_place_f32(&mut finite) as f64
}

/// Posts the image as an NPY body and reads an NPY probability map back.
/// Out-of-range values are clamped with a warning.
pub fn remote_detect(url: &str, timeout: Duration, img: &ImageF32) -> Result<ProbMap, DetectError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let body = serialize_npy(img);
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/octet-stream")
        .send(&body[..])
        .map_err(|e| DetectError::RemoteUnreachable(e.to_string()))?;
    if !resp.status().is_success() {
        return Err(DetectError::RemoteBadResponse(format!("status {}", resp.status())));
    }
    let limit = body.len() as u64 * 2 + 65_536;
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(limit)
        .read_to_vec()
        .map_err(|e| DetectError::RemoteBadResponse(e.to_string()))?;
    let raster = load_npy(&bytes).map_err(|e| DetectError::RemoteBadResponse(e.to_string()))?;
    if raster.dims() != img.dims() {
        return Err(DetectError::RemoteBadResponse(format!(
            "shape {:?}, expected {:?}",
            (raster.height(), raster.width()),
            (img.height(), img.width())
        )));
    }
    let (map, clamped) = ProbMap::from_raster_clamped(raster);
    if clamped > 0 {
        log::warn!("remote detector returned {clamped} values outside [0, 1]; clamped");
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_is_all_zero() {
        let img = Raster::filled(16, 16, 123.0f32).unwrap();
        let p = baseline_probability(&img, 5, 1.0).unwrap();
        assert!(p.raster().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hot_pixel_on_flat_background() {
        let mut img = Raster::filled(21, 21, 100.0f32).unwrap();
        *img.get_mut(10, 10).unwrap() = 10_000.0;
        let p = baseline_probability(&img, 5, 1.0).unwrap();
        assert!(p.get(10, 10).unwrap() > 0.5);
        for y in 0..21usize {
            for x in 0..21usize {
                if x.abs_diff(10).max(y.abs_diff(10)) >= 2 {
                    assert!(p.get(x, y).unwrap() < 0.1);
                }
            }
        }
    }

    #[test]
    fn window_validation() {
        let img = Raster::filled(4, 8, 0.0f32).unwrap();
        assert!(matches!(
            baseline_probability(&img, 5, 1.0),
            Err(DetectError::WindowTooLarge { .. })
        ));
        assert!(matches!(
            baseline_probability(&img, 4, 1.0),
            Err(DetectError::InvalidSpec(_))
        ));
    }

    #[test]
    fn nan_pixels_get_zero() {
        let mut img = Raster::filled(9, 9, 1.0f32).unwrap();
        *img.get_mut(4, 4).unwrap() = f32::NAN;
        let p = baseline_probability(&img, 3, 1.0).unwrap();
        assert_eq!(p.get(4, 4), Some(0.0));
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in [
            "baseline",
            "baseline:window=7,scale=2.5",
            "precomputed",
            "precomputed:path=/tmp/p.npy,ext=PROB",
            "remote:http://localhost:9000/infer",
            "remote:http://h/x#timeout=2.5",
        ] {
            let spec: DetectorSpec = s.parse().unwrap();
            let again: DetectorSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again, "{s}");
        }
        assert!("baseline:window=4".parse::<DetectorSpec>().is_err());
        assert!("remote:ftp://x".parse::<DetectorSpec>().is_err());
        assert!("magic".parse::<DetectorSpec>().is_err());
    }

    #[test]
    fn precomputed_shape_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.npy");
        std::fs::write(&path, serialize_npy(&Raster::filled(3, 3, 0.2f32).unwrap())).unwrap();
        let spec = DetectorSpec::Precomputed {
            path: Some(path),
            extname: DEFAULT_PROB_EXTNAME.into(),
        };
        let img = Raster::filled(4, 3, 0.0f32).unwrap();
        assert_eq!(
            detect(&spec, &img),
            Err(DetectError::DimensionMismatch {
                expected: (4, 3),
                actual: (3, 3)
            })
        );
        let ok = detect(&spec, &Raster::filled(3, 3, 0.0f32).unwrap()).unwrap();
        assert_eq!(ok.get(0, 0), Some(0.2));
    }

    #[test]
    fn precomputed_from_document_extension() {
        let img = Raster::filled(2, 2, 5.0f32).unwrap();
        let doc = FitsDocument::from_image(&img);
        let spec: DetectorSpec = "precomputed:ext=PROB".parse().unwrap();
        assert!(matches!(
            detect_with_document(&spec, &img, Some(&doc)),
            Err(DetectError::PrecomputedMissing(_))
        ));
        assert!(matches!(detect(&spec, &img), Err(DetectError::PrecomputedMissing(_))));
    }
}

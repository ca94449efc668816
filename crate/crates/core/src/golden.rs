//! Golden vectors for checking other implementations of the pipeline.
//!
//! A suite directory holds `manifest.json` and one subdirectory per case:
//!
//! | file           | contents                                              |
//! |----------------|-------------------------------------------------------|
//! | `image.npy`    | input image, `<f4`, shape (height, width)             |
//! | `prob.npy`     | probability map, same shape                           |
//! | `params.json`  | [`CaseParams`]: stage parameters plus RLE overlay     |
//! | `display.u8`   | expected 8-bit display raster, row-major              |
//! | `mask.u8`      | expected composited mask (0/1), row-major             |

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::baseline_probability;
use crate::mask::{EditOverlay, EditState, MaskError, ProbMap, RleRun};
use crate::npy::{load_npy, serialize_npy, NpyError};
use crate::pipeline::{stage_id, LimitsMode, ParamValue, PipelineError, PipelineParams, PipelineState};
use crate::raster::{ImageF32, Raster};
use crate::scale::{TransferCurve, ZScaleParams};

pub const MANIFEST: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GoldenError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("case {case}: {what} has {actual} bytes, expected {expected}")]
    Size {
        case: String,
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

/// Everything needed to reproduce one case's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseParams {
    #[serde(flatten)]
    pub pipeline: PipelineParams,
    pub overlay: Vec<RleRun>,
}

#[derive(Debug, Clone)]
pub struct GoldenCase {
    pub name: String,
    pub image: ImageF32,
    pub prob: ProbMap,
    pub params: CaseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub cases: Vec<ManifestEntry>,
}

/// Expected outputs of a case.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseOutput {
    pub display: Vec<u8>,
    pub mask: Vec<u8>,
}

/// A case whose stored outputs disagree with a fresh render.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub case: String,
    pub display_diffs: usize,
    pub mask_diffs: usize,
}

/// Renders a case through a fresh [`PipelineState`].
pub fn render_case(case: &GoldenCase) -> Result<CaseOutput, GoldenError> {
    let (w, h) = case.image.dims();
    let mut state =
        PipelineState::with_sources(Arc::new(case.image.clone()), Arc::new(case.prob.clone()))?;
    state.apply_params(&case.params.pipeline)?;
    let overlay = EditOverlay::from_rle(w, h, &case.params.overlay)?;
    state.set_param(stage_id::OVERLAY, ParamValue::Overlay(overlay))?;
    let out = state.render()?;
    Ok(CaseOutput {
        display: out.display.data().to_vec(),
        mask: out.mask.data().to_vec(),
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GoldenError + '_ {
    move |source| GoldenError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<(), GoldenError> {
    fs::write(&path, bytes).map_err(io_err(&path))
}

fn read(path: PathBuf) -> Result<Vec<u8>, GoldenError> {
    fs::read(&path).map_err(io_err(&path))
}

fn to_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>, GoldenError> {
    serde_json::to_vec_pretty(value).map_err(|source| GoldenError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn from_json<T: for<'de> Deserialize<'de>>(path: PathBuf) -> Result<T, GoldenError> {
    let bytes = read(path.clone())?;
    serde_json::from_slice(&bytes).map_err(|source| GoldenError::Json { path, source })
}

/// Writes every case and the manifest under `dir`.
pub fn export(dir: &Path, cases: &[GoldenCase]) -> Result<Manifest, GoldenError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut manifest = Manifest {
        version: FORMAT_VERSION,
        cases: Vec::with_capacity(cases.len()),
    };
    for case in cases {
        let out = render_case(case)?;
        let case_dir = dir.join(&case.name);
        fs::create_dir_all(&case_dir).map_err(io_err(&case_dir))?;
        write(case_dir.join("image.npy"), &serialize_npy(&case.image))?;
        write(case_dir.join("prob.npy"), &serialize_npy(case.prob.raster()))?;
        let params_path = case_dir.join("params.json");
        write(params_path.clone(), &to_json(&params_path, &case.params)?)?;
        write(case_dir.join("display.u8"), &out.display)?;
        write(case_dir.join("mask.u8"), &out.mask)?;
        let (width, height) = case.image.dims();
        manifest.cases.push(ManifestEntry {
            name: case.name.clone(),
            width,
            height,
        });
    }
    let path = dir.join(MANIFEST);
    write(path.clone(), &to_json(&path, &manifest)?)?;
    Ok(manifest)
}

/// Reads one case's inputs and expected outputs.
pub fn load_case(dir: &Path, name: &str) -> Result<(GoldenCase, CaseOutput), GoldenError> {
    let case_dir = dir.join(name);
    let image = load_npy(&read(case_dir.join("image.npy"))?)?;
    let (prob, _) = ProbMap::from_raster_clamped(load_npy(&read(case_dir.join("prob.npy"))?)?);
    let params: CaseParams = from_json(case_dir.join("params.json"))?;
    let expected = CaseOutput {
        display: read(case_dir.join("display.u8"))?,
        mask: read(case_dir.join("mask.u8"))?,
    };
    let n = image.len();
    for (what, len) in [("display.u8", expected.display.len()), ("mask.u8", expected.mask.len())] {
        if len != n {
            return Err(GoldenError::Size {
                case: name.to_string(),
                what,
                expected: n,
                actual: len,
            });
        }
    }
    let case = GoldenCase {
        name: name.to_string(),
        image,
        prob,
        params,
    };
    Ok((case, expected))
}

/// Re-renders every case in the suite at `dir` and reports disagreements.
pub fn verify(dir: &Path) -> Result<Vec<Mismatch>, GoldenError> {
    let manifest: Manifest = from_json(dir.join(MANIFEST))?;
    let mut mismatches = Vec::new();
    for entry in &manifest.cases {
        let (case, expected) = load_case(dir, &entry.name)?;
        let actual = render_case(&case)?;
        let diffs = |a: &[u8], b: &[u8]| a.iter().zip(b).filter(|(x, y)| x != y).count();
        let m = Mismatch {
            case: entry.name.clone(),
            display_diffs: diffs(&actual.display, &expected.display),
            mask_diffs: diffs(&actual.mask, &expected.mask),
        };
        if m.display_diffs + m.mask_diffs > 0 {
            mismatches.push(m);
        }
    }
    Ok(mismatches)
}

/// Deterministic value in `[0, 1)` for a pixel, independent of platform.
fn hash01(x: usize, y: usize, salt: u64) -> f32 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ salt.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 40) as f32 / (1u64 << 24) as f32
}

/// The five reference images of the standard suite.
pub fn standard_images() -> Vec<(&'static str, ImageF32)> {
    let (w, h) = (48, 40);
    let ramp = Raster::from_fn(w, h, |x, y| (x + y * w) as f32).expect("nonzero dims");
    let sky = Raster::from_fn(w, h, |x, y| {
        let mut v = 1000.0 + 0.5 * x as f32 + 20.0 * (hash01(x, y, 1) - 0.5);
        for &(cx, cy, amp) in &[(12.0f32, 10.0f32, 4000.0f32), (33.0, 25.0, 1500.0)] {
            let r2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
            v += amp * (-r2 / 4.5).exp();
        }
        if (x * 7 + y * 3) % 97 == 0 {
            v += 30_000.0;
        }
        v
    })
    .expect("nonzero dims");
    let holes = Raster::from_fn(w, h, |x, y| {
        if (x + 2 * y) % 13 == 0 {
            f32::NAN
        } else if x == 5 && y == 5 {
            f32::INFINITY
        } else {
            50.0 * hash01(x, y, 2) - 10.0
        }
    })
    .expect("nonzero dims");
    let flat = Raster::filled(w, h, 42.0f32).expect("nonzero dims");
    let tiny = Raster::from_fn(5, 3, |x, y| (x as f32 - 2.0) * 1e-3 + y as f32 * 1e3)
        .expect("nonzero dims");
    vec![("ramp", ramp), ("sky", sky), ("holes", holes), ("flat", flat), ("tiny", tiny)]
}

fn standard_overlay(w: usize, h: usize) -> EditOverlay {
    Raster::from_fn(w, h, |x, y| match (x * 5 + y * 11) % 17 {
        0 => EditState::ForceOn,
        1 => EditState::ForceOff,
        _ => EditState::Neutral,
    })
    .map(EditOverlay::from_raster)
    .expect("nonzero dims")
}

/// Every curve and limits-mode combination over [`standard_images`], with
/// baseline probabilities and varied mask parameters.
pub fn standard_cases() -> Vec<GoldenCase> {
    let curves = [TransferCurve::Linear, TransferCurve::Log, TransferCurve::Sqrt];
    let mut cases = Vec::new();
    for (name, image) in standard_images() {
        let window = if image.width().min(image.height()) >= 5 { 5 } else { 3 };
        let prob = baseline_probability(&image, window, 1.0).expect("window fits");
        let (lo, hi) = image
            .finite_values()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v as f64), b.max(v as f64)));
        let manual = LimitsMode::Manual {
            z1: lo + 0.1 * (hi - lo),
            z2: lo + 0.8 * (hi - lo) + 1.0,
        };
        let modes = [
            ("zscale", LimitsMode::ZScale(ZScaleParams::default())),
            ("minmax", LimitsMode::MinMax),
            ("manual", manual),
        ];
        let (w, h) = image.dims();
        let overlay = standard_overlay(w, h).to_rle();
        for (ci, curve) in curves.into_iter().enumerate() {
            for (mi, (mode_name, mode)) in modes.iter().enumerate() {
                let variant = ci * modes.len() + mi;
                let pipeline = PipelineParams {
                    raw_clip: (variant % 4 == 3).then_some((lo, 0.5 * (lo + hi))),
                    sigma_k: if variant % 5 == 4 { None } else { Some(3.0) },
                    limits: *mode,
                    curve,
                    threshold: [0.5, 0.2, 0.9][variant % 3],
                    dilation: variant % 3,
                };
                cases.push(GoldenCase {
                    name: format!("{name}-{curve:?}-{mode_name}").to_lowercase(),
                    image: image.clone(),
                    prob: prob.clone(),
                    params: CaseParams {
                        pipeline,
                        overlay: if variant % 2 == 0 { overlay.clone() } else { Vec::new() },
                    },
                });
            }
        }
    }
    cases
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_suite_shape() {
        let cases = standard_cases();
        assert_eq!(cases.len(), 5 * 3 * 3);
        let mut names: Vec<_> = cases.iter().map(|c| c.name.as_str()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), cases.len());
    }

    #[test]
    fn hash_is_in_unit_interval() {
        for i in 0..1000 {
            let v = hash01(i, i * 3, 7);
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn params_json_round_trip() {
        let p = CaseParams {
            pipeline: PipelineParams {
                raw_clip: Some((1.0, 2.0)),
                limits: LimitsMode::Manual { z1: 0.0, z2: 9.0 },
                ..Default::default()
            },
            overlay: vec![RleRun {
                start: 1,
                len: 2,
                state: 1,
            }],
        };
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<CaseParams>(&s).unwrap(), p);
        let d: CaseParams = serde_json::from_str(r#"{"overlay": []}"#).unwrap();
        assert_eq!(d.pipeline, PipelineParams::default());
    }
}

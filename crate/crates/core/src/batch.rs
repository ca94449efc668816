//! File-level segmentation shared by the command line and the HTTP service.
//!
//! [`segment`] runs detection and mask composition on one loaded input and
//! [`masked_fits`] serializes the result. Both front ends go through these
//! two functions, so a file processed by either produces identical bytes.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::detect::{detect_with_document, DetectError, DetectorSpec};
use crate::fits::{load_fits, write_fits_with_mask, FitsDocument, FitsError, DEFAULT_MASK_EXTNAME};
use crate::mask::{compose, connected_components, BinaryMask, EditOverlay, MaskError, ObjectRegion, ProbMap, DEFAULT_THRESHOLD};
use crate::npy::{load_npy, NpyError, NPY_MAGIC};
use crate::raster::ImageF32;

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unparsable FITS: {0}")]
    Fits(#[from] FitsError),
    #[error("unparsable NPY: {0}")]
    Npy(#[from] NpyError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("{0} exists (use overwrite to replace it)")]
    OutputExists(PathBuf),
    #[error("bad input pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("no inputs given")]
    NoInputs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Fits,
    Npy,
}

/// A parsed upload or input file. NPY arrays are wrapped in a minimal
/// single-HDU FITS document so both kinds can carry a mask extension.
#[derive(Debug, Clone)]
pub struct Input {
    document: FitsDocument,
    kind: InputKind,
}

impl Input {
    /// Parses FITS or NPY bytes, recognised by their magic prefix. The
    /// primary HDU must hold a 2-D image.
    pub fn parse(bytes: &[u8]) -> Result<Self, BatchError> {
        let (document, kind) = if bytes.starts_with(NPY_MAGIC) {
            (FitsDocument::from_image(&load_npy(bytes)?), InputKind::Npy)
        } else {
            (load_fits(bytes)?, InputKind::Fits)
        };
        document.image()?;
        Ok(Self { document, kind })
    }

    pub fn read(path: &Path) -> Result<Self, BatchError> {
        let bytes = fs::read(path).map_err(|source| BatchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&bytes)
    }

    pub fn image(&self) -> &ImageF32 {
        self.document.image().expect("checked at parse time")
    }

    pub fn document(&self) -> &FitsDocument {
        &self.document
    }

    pub fn into_document(self) -> FitsDocument {
        self.document
    }

    pub fn kind(&self) -> InputKind {
        self.kind
    }
}

/// Mask parameters applied after detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskSettings {
    pub threshold: f64,
    pub dilation: usize,
}

impl Default for MaskSettings {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            dilation: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub prob: ProbMap,
    pub mask: BinaryMask,
    pub objects: Vec<ObjectRegion>,
}

/// Runs the detector, then builds the final mask and its object list.
pub fn segment(
    input: &Input,
    detector: &DetectorSpec,
    settings: MaskSettings,
    overlay: Option<&EditOverlay>,
) -> Result<Segmentation, BatchError> {
    let document = (input.kind == InputKind::Fits).then_some(&input.document);
    let prob = detect_with_document(detector, input.image(), document)?;
    let mask = compose(&prob, settings.threshold, settings.dilation, overlay)?;
    let objects = connected_components(&mask);
    Ok(Segmentation { prob, mask, objects })
}

/// The original document with `mask` appended as a `SEG_MASK` extension.
pub fn masked_fits(document: &FitsDocument, mask: &BinaryMask) -> Result<Vec<u8>, BatchError> {
    Ok(write_fits_with_mask(document, mask.raster(), DEFAULT_MASK_EXTNAME)?)
}

/// `<stem>_masked.fits`.
pub fn output_name(input: &Path) -> PathBuf {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    PathBuf::from(format!("{stem}_masked.fits"))
}

/// Expands glob patterns. Arguments without glob metacharacters are kept
/// verbatim even if the file does not exist, so the failure is reported
/// for that file. A pattern matching nothing is also kept verbatim.
pub fn expand_inputs<S: AsRef<str>>(patterns: &[S]) -> Result<Vec<PathBuf>, BatchError> {
    let mut out = Vec::new();
    for p in patterns {
        let p = p.as_ref();
        if !p.contains(['*', '?', '[']) {
            out.push(PathBuf::from(p));
            continue;
        }
        let paths = glob::glob(p).map_err(|e| BatchError::BadPattern {
            pattern: p.to_string(),
            reason: e.to_string(),
        })?;
        let mut matched: Vec<PathBuf> = paths.filter_map(Result::ok).collect();
        if matched.is_empty() {
            out.push(PathBuf::from(p));
        } else {
            matched.sort();
            out.append(&mut matched);
        }
    }
    if out.is_empty() {
        return Err(BatchError::NoInputs);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BatchJob {
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub settings: MaskSettings,
    pub detector: DetectorSpec,
    pub overwrite: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileSummary {
    pub objects: usize,
    pub masked_pixels: usize,
}

#[derive(Debug)]
pub struct FileReport {
    pub input: PathBuf,
    pub output: PathBuf,
    pub result: Result<FileSummary, BatchError>,
}

impl FileReport {
    /// `path: N objects, M masked pixels`, or `path: error` on failure.
    pub fn line(&self) -> String {
        match &self.result {
            Ok(s) => format!(
                "{}: {} objects, {} masked pixels",
                self.input.display(),
                s.objects,
                s.masked_pixels
            ),
            Err(e) => format!("{}: error: {e}", self.input.display()),
        }
    }
}

/// Processes one file end to end and writes its masked copy.
pub fn process_file(
    input: &Path,
    output: &Path,
    detector: &DetectorSpec,
    settings: MaskSettings,
    overwrite: bool,
) -> Result<FileSummary, BatchError> {
    if !overwrite && output.exists() {
        return Err(BatchError::OutputExists(output.to_path_buf()));
    }
    let parsed = Input::read(input)?;
    let seg = segment(&parsed, detector, settings, None)?;
    let bytes = masked_fits(parsed.document(), &seg.mask)?;
    fs::write(output, bytes).map_err(|source| BatchError::Io {
        path: output.to_path_buf(),
        source,
    })?;
    Ok(FileSummary {
        objects: seg.objects.len(),
        masked_pixels: seg.mask.count_ones(),
    })
}

/// Runs every file of `job` in parallel. Reports follow input order and a
/// failing file never stops the others.
pub fn run_batch(job: &BatchJob) -> Vec<FileReport> {
    job.inputs
        .par_iter()
        .map(|input| {
            let output = job.output_dir.join(output_name(input));
            let result = process_file(input, &output, &job.detector, job.settings, job.overwrite);
            FileReport {
                input: input.clone(),
                output,
                result,
            }
        })
        .collect()
}

//! Cosmic-ray segmentation for astronomical images.
//!
//! The crate covers the whole path from raw files to an edited mask:
//!
//! * [`fits`] and [`npy`] load and save 2-D images, preserving every byte
//!   of the original FITS file.
//! * [`stats`] and [`scale`] compute robust display limits (sigma clipping,
//!   zscale) and map pixels to 8-bit display values.
//! * [`detect`] produces per-pixel cosmic-ray probabilities.
//! * [`mask`] thresholds, dilates and edits binary masks and labels their
//!   connected objects.
//! * [`pipeline`] chains those operations with per-stage caching.
//! * [`batch`] runs detection over many files, and [`golden`] exports
//!   reference vectors for other implementations of the display pipeline.

pub mod batch;
pub mod detect;
pub mod fits;
pub mod golden;

pub mod mask;
pub mod npy;
pub mod pipeline;
pub mod raster;
pub mod scale;
pub mod stats;

pub use detect::{DetectError, DetectorSpec};
pub use fits::{FitsDocument, FitsError};
pub use mask::{BinaryMask, EditOverlay, EditState, MaskError, ObjectRegion, PencilMode, ProbMap};
pub use npy::NpyError;
pub use pipeline::{PipelineError, PipelineParams, PipelineState};
pub use raster::{ByteRaster, ImageF32, Raster, RasterError};
pub use scale::{ScaleError, ScaleLimits, TransferCurve, ZScaleParams};
pub use stats::StatsError;

/// Any error produced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Fits(#[from] FitsError),
    #[error(transparent)]
    Npy(#[from] NpyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Batch(#[from] batch::BatchError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

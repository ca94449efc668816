//! Buffered display and mask pipelines with minimal recomputation.
//!
//! Two independent chains of stages run over the loaded sources:
//!
//! ```text
//! image: raw_clip -> sigma_clip -> auto_limits -> curve -> quantize8
//! mask:  threshold -> dilate -> overlay
//! ```
//!
//! Every stage caches its output. Changing a parameter marks that stage and
//! everything downstream on the same chain dirty; [`PipelineState::render`]
//! recomputes only the dirty suffix. New stages can be inserted anywhere in
//! a chain without touching the invalidation logic.

use std::any::Any;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{
    apply_overlay, dilate, threshold, BinaryMask, EditOverlay, MaskError, PencilMode, ProbMap,
    DEFAULT_THRESHOLD,
};
use crate::raster::{ByteRaster, ImageF32, Raster};
use crate::scale::{
    minmax_limits, quantize, zscale_limits, LimitsSource, ScaleError, ScaleLimits, TransferCurve,
    ZScaleParams,
};
use crate::stats::{sigma_clip_bounds, StatsError, DEFAULT_SIGMA_ITERS, DEFAULT_SIGMA_K};

pub mod stage_id {
    pub const RAW_CLIP: &str = "raw_clip";
    pub const SIGMA_CLIP: &str = "sigma_clip";
    pub const AUTO_LIMITS: &str = "auto_limits";
    pub const CURVE: &str = "curve";
    pub const QUANTIZE: &str = "quantize8";
    pub const THRESHOLD: &str = "threshold";
    pub const DILATE: &str = "dilate";
    pub const OVERLAY: &str = "overlay";
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("unknown stage {0:?}")]
    UnknownStage(String),
    #[error("value out of domain for stage {stage}: {reason}")]
    ValueOutOfDomain { stage: String, reason: String },
    #[error("no source image loaded")]
    NoSourceLoaded,
    #[error("pixel ({x}, {y}) out of bounds")]
    OutOfBounds { x: usize, y: usize },
    #[error("image is {image:?} but probability map is {prob:?}")]
    DimensionMismatch {
        image: (usize, usize),
        prob: (usize, usize),
    },
    #[error("stage {stage} got an unexpected input buffer")]
    BadInput { stage: String },
    #[error(transparent)]
    Scale(#[from] ScaleError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Display-limit selection for the `auto_limits` stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum LimitsMode {
    #[serde(rename = "zscale")]
    ZScale(ZScaleParams),
    MinMax,
    Manual { z1: f64, z2: f64 },
}

impl Default for LimitsMode {
    fn default() -> Self {
        LimitsMode::ZScale(ZScaleParams::default())
    }
}

/// A stage parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamValue {
    /// Manual `(min, max)` applied to raw data; `None` is the identity.
    ClipRange(Option<(f64, f64)>),
    /// Sigma-clip `k`; `None` disables the stage.
    SigmaK(Option<f64>),
    Limits(LimitsMode),
    Curve(TransferCurve),
    Threshold(f64),
    Dilation(usize),
    Overlay(EditOverlay),
    /// For parameterless stages.
    Unit,
}

/// Cached output of one stage.
#[derive(Debug, Clone)]
pub enum Buffer {
    Image(Arc<ImageF32>),
    /// Image together with the display limits chosen for it.
    Limited {
        image: Arc<ImageF32>,
        limits: ScaleLimits,
    },
    /// Transfer-curve output in `[0, 1]`.
    Unit(Arc<Raster<f64>>),
    Bytes(Arc<ByteRaster>),
    Prob(Arc<ProbMap>),
    Mask(Arc<BinaryMask>),
}

/// One pipeline operation.
pub trait Stage: Send + Sync {
    fn id(&self) -> &str;
    fn param(&self) -> ParamValue;
    /// Validates and stores `value`. Returns whether it changed.
    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError>;
    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError>;
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

fn out_of_domain(stage: &str, reason: impl Into<String>) -> PipelineError {
    PipelineError::ValueOutOfDomain {
        stage: stage.to_string(),
        reason: reason.into(),
    }
}

fn bad_input(stage: &str) -> PipelineError {
    PipelineError::BadInput {
        stage: stage.to_string(),
    }
}

fn clamp_image(img: &ImageF32, lo: f64, hi: f64) -> ImageF32 {
    let data: Vec<f32> = img
        .data()
        .par_iter()
        .map(|&v| {
            if v.is_finite() {
                (v as f64).clamp(lo, hi) as f32
            } else {
                v
            }
        })
        .collect();
    Raster::from_vec(img.width(), img.height(), data).expect("same dims")
}

/// Clamps finite raw values into the user's manual range.
#[derive(Debug, Default)]
pub struct RawClipStage {
    range: Option<(f64, f64)>,
}

impl Stage for RawClipStage {
    fn id(&self) -> &str {
        stage_id::RAW_CLIP
    }

    fn param(&self) -> ParamValue {
        ParamValue::ClipRange(self.range)
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        let ParamValue::ClipRange(range) = value else {
            return Err(out_of_domain(self.id(), "expected a clip range"));
        };
        if let Some((lo, hi)) = range {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(out_of_domain(self.id(), format!("min {lo} > max {hi}")));
            }
        }
        let changed = range != self.range;
        self.range = range;
        Ok(changed)
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Image(img) = input else {
            return Err(bad_input(self.id()));
        };
        Ok(match self.range {
            None => Buffer::Image(Arc::clone(img)),
            Some((lo, hi)) => Buffer::Image(Arc::new(clamp_image(img, lo, hi))),
        })
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Clamps values into the k-sigma clip bounds. Images without finite pixels
/// pass through unchanged.
#[derive(Debug)]
pub struct SigmaClipStage {
    k: Option<f64>,
}

impl Default for SigmaClipStage {
    fn default() -> Self {
        Self {
            k: Some(DEFAULT_SIGMA_K),
        }
    }
}

impl Stage for SigmaClipStage {
    fn id(&self) -> &str {
        stage_id::SIGMA_CLIP
    }

    fn param(&self) -> ParamValue {
        ParamValue::SigmaK(self.k)
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        let ParamValue::SigmaK(k) = value else {
            return Err(out_of_domain(self.id(), "expected a sigma multiplier"));
        };
        if let Some(k) = k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(out_of_domain(self.id(), format!("k = {k}")));
            }
        }
        let changed = k != self.k;
        self.k = k;
        Ok(changed)
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Image(img) = input else {
            return Err(bad_input(self.id()));
        };
        let Some(k) = self.k else {
            return Ok(Buffer::Image(Arc::clone(img)));
        };
        match sigma_clip_bounds(img, k, DEFAULT_SIGMA_ITERS) {
            Ok(b) => Ok(Buffer::Image(Arc::new(clamp_image(img, b.lo, b.hi)))),
            Err(StatsError::AllNonFinite) => Ok(Buffer::Image(Arc::clone(img))),
            Err(e) => Err(e.into()),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Chooses display limits. zscale falls back to min/max when too few
/// finite pixels are available; with no finite pixel at all the limits are
/// `(0, 0)`, which renders black.
#[derive(Debug, Default)]
pub struct AutoLimitsStage {
    mode: LimitsMode,
}

pub fn compute_limits(img: &ImageF32, mode: &LimitsMode) -> Result<ScaleLimits, PipelineError> {
    let limits = match mode {
        LimitsMode::Manual { z1, z2 } => ScaleLimits::manual(*z1, *z2),
        LimitsMode::MinMax => minmax_limits(img),
        LimitsMode::ZScale(p) => match zscale_limits(img, p) {
            Err(ScaleError::TooFewPixels { .. }) => minmax_limits(img),
            other => other,
        },
    };
    match limits {
        Err(ScaleError::AllNonFinite) => Ok(ScaleLimits::new(0.0, 0.0, LimitsSource::MinMax)?),
        other => Ok(other?),
    }
}

impl Stage for AutoLimitsStage {
    fn id(&self) -> &str {
        stage_id::AUTO_LIMITS
    }

    fn param(&self) -> ParamValue {
        ParamValue::Limits(self.mode)
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        let ParamValue::Limits(mode) = value else {
            return Err(out_of_domain(self.id(), "expected a limits mode"));
        };
        match &mode {
            LimitsMode::Manual { z1, z2 } => {
                ScaleLimits::manual(*z1, *z2).map_err(|e| out_of_domain(self.id(), e.to_string()))?;
            }
            LimitsMode::ZScale(p) => {
                p.validate().map_err(|e| out_of_domain(self.id(), e.to_string()))?;
            }
            LimitsMode::MinMax => {}
        }
        let changed = mode != self.mode;
        self.mode = mode;
        Ok(changed)
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Image(img) = input else {
            return Err(bad_input(self.id()));
        };
        Ok(Buffer::Limited {
            image: Arc::clone(img),
            limits: compute_limits(img, &self.mode)?,
        })
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Normalizes into the limits and applies the transfer curve.
#[derive(Debug, Default)]
pub struct CurveStage {
    curve: TransferCurve,
}

impl Stage for CurveStage {
    fn id(&self) -> &str {
        stage_id::CURVE
    }

    fn param(&self) -> ParamValue {
        ParamValue::Curve(self.curve)
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        let ParamValue::Curve(curve) = value else {
            return Err(out_of_domain(self.id(), "expected a transfer curve"));
        };
        let changed = curve != self.curve;
        self.curve = curve;
        Ok(changed)
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Limited { image, limits } = input else {
            return Err(bad_input(self.id()));
        };
        let curve = self.curve;
        let data: Vec<f64> = image
            .data()
            .par_iter()
            .map(|&v| curve.eval(limits.normalize(v)))
            .collect();
        Ok(Buffer::Unit(Arc::new(
            Raster::from_vec(image.width(), image.height(), data).expect("same dims"),
        )))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// `round(255 * d)`, half away from zero.
#[derive(Debug, Default)]
pub struct QuantizeStage;

impl Stage for QuantizeStage {
    fn id(&self) -> &str {
        stage_id::QUANTIZE
    }

    fn param(&self) -> ParamValue {
        ParamValue::Unit
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        match value {
            ParamValue::Unit => Ok(false),
            _ => Err(out_of_domain(self.id(), "stage has no parameters")),
        }
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Unit(unit) = input else {
            return Err(bad_input(self.id()));
        };
        let data: Vec<u8> = unit.data().par_iter().map(|&d| quantize(d)).collect();
        Ok(Buffer::Bytes(Arc::new(
            Raster::from_vec(unit.width(), unit.height(), data).expect("same dims"),
        )))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[derive(Debug)]
pub struct ThresholdStage {
    t: f64,
}

impl Default for ThresholdStage {
    fn default() -> Self {
        Self {
            t: DEFAULT_THRESHOLD,
        }
    }
}

impl Stage for ThresholdStage {
    fn id(&self) -> &str {
        stage_id::THRESHOLD
    }

    fn param(&self) -> ParamValue {
        ParamValue::Threshold(self.t)
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        let ParamValue::Threshold(t) = value else {
            return Err(out_of_domain(self.id(), "expected a threshold"));
        };
        if !(0.0..=1.0).contains(&t) {
            return Err(out_of_domain(self.id(), format!("t = {t} outside [0, 1]")));
        }
        let changed = t != self.t;
        self.t = t;
        Ok(changed)
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Prob(prob) = input else {
            return Err(bad_input(self.id()));
        };
        Ok(Buffer::Mask(Arc::new(threshold(prob, self.t)?)))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[derive(Debug, Default)]
pub struct DilateStage {
    iterations: usize,
}

impl Stage for DilateStage {
    fn id(&self) -> &str {
        stage_id::DILATE
    }

    fn param(&self) -> ParamValue {
        ParamValue::Dilation(self.iterations)
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        let ParamValue::Dilation(k) = value else {
            return Err(out_of_domain(self.id(), "expected an iteration count"));
        };
        let changed = k != self.iterations;
        self.iterations = k;
        Ok(changed)
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Mask(mask) = input else {
            return Err(bad_input(self.id()));
        };
        Ok(Buffer::Mask(if self.iterations == 0 {
            Arc::clone(mask)
        } else {
            Arc::new(dilate(mask, self.iterations))
        }))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Composites manual edits over the mask. Without an overlay the mask
/// passes through.
#[derive(Debug, Default)]
pub struct OverlayStage {
    overlay: Option<EditOverlay>,
}

impl OverlayStage {
    pub fn overlay(&self) -> Option<&EditOverlay> {
        self.overlay.as_ref()
    }
}

impl Stage for OverlayStage {
    fn id(&self) -> &str {
        stage_id::OVERLAY
    }

    fn param(&self) -> ParamValue {
        match &self.overlay {
            Some(o) => ParamValue::Overlay(o.clone()),
            None => ParamValue::Unit,
        }
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        let ParamValue::Overlay(overlay) = value else {
            return Err(out_of_domain(self.id(), "expected an edit overlay"));
        };
        let changed = self.overlay.as_ref() != Some(&overlay);
        self.overlay = Some(overlay);
        Ok(changed)
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Mask(mask) = input else {
            return Err(bad_input(self.id()));
        };
        Ok(Buffer::Mask(match &self.overlay {
            Some(o) if o.dims() != mask.dims() => {
                return Err(MaskError::DimensionMismatch(mask.dims(), o.dims()).into())
            }
            Some(o) if !o.is_neutral() => Arc::new(apply_overlay(mask, o)?),
            _ => Arc::clone(mask),
        }))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Which of the two independent chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chain {
    Image,
    Mask,
}

struct StageChain {
    stages: Vec<Box<dyn Stage>>,
    buffers: Vec<Option<Buffer>>,
    counters: Vec<u64>,
    /// Stages at or after this index are dirty.
    dirty_from: Option<usize>,
}

impl StageChain {
    fn new(stages: Vec<Box<dyn Stage>>) -> Self {
        let n = stages.len();
        Self {
            stages,
            buffers: vec![None; n],
            counters: vec![0; n],
            dirty_from: Some(0),
        }
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.id() == id)
    }

    fn invalidate_from(&mut self, i: usize) {
        self.dirty_from = Some(self.dirty_from.map_or(i, |d| d.min(i)));
    }

    fn render(&mut self, source: Buffer) -> Result<(), PipelineError> {
        let Some(first) = self.dirty_from else {
            return Ok(());
        };
        for i in first..self.stages.len() {
            let input = if i == 0 {
                &source
            } else {
                self.buffers[i - 1].as_ref().expect("upstream buffers are clean")
            };
            match self.stages[i].run(input) {
                Ok(out) => {
                    self.buffers[i] = Some(out);
                    self.counters[i] += 1;
                }
                Err(e) => {
                    self.dirty_from = Some(i);
                    return Err(e);
                }
            }
        }
        self.dirty_from = None;
        Ok(())
    }

    fn last(&self) -> Option<&Buffer> {
        self.buffers.last().and_then(Option::as_ref)
    }
}

/// Output of [`PipelineState::render`].
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub display: Arc<ByteRaster>,
    pub mask: Arc<BinaryMask>,
}

/// Pixel readout from the original data, independent of every pipeline
/// parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    pub x: usize,
    pub y: usize,
    /// Original data value; NaN (serialized as `null`) for non-finite pixels.
    pub raw_value: f32,
    pub probability: f32,
}

/// Plain-data view of every stage parameter except the overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub raw_clip: Option<(f64, f64)>,
    pub sigma_k: Option<f64>,
    pub limits: LimitsMode,
    pub curve: TransferCurve,
    pub threshold: f64,
    pub dilation: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            raw_clip: None,
            sigma_k: Some(DEFAULT_SIGMA_K),
            limits: LimitsMode::default(),
            curve: TransferCurve::Linear,
            threshold: DEFAULT_THRESHOLD,
            dilation: 0,
        }
    }
}

/// One session's pipeline: sources, stage parameters and cached buffers.
pub struct PipelineState {
    source: Option<Arc<ImageF32>>,
    prob: Option<Arc<ProbMap>>,
    image: StageChain,
    mask: StageChain,
}

impl Default for PipelineState {
    fn default() -> Self {
        Self::new()
    }
}

impl PipelineState {
    /// Default stages and parameters, no sources loaded.
    pub fn new() -> Self {
        Self {
            source: None,
            prob: None,
            image: StageChain::new(vec![
                Box::<RawClipStage>::default(),
                Box::<SigmaClipStage>::default(),
                Box::<AutoLimitsStage>::default(),
                Box::<CurveStage>::default(),
                Box::<QuantizeStage>::default(),
            ]),
            mask: StageChain::new(vec![
                Box::<ThresholdStage>::default(),
                Box::<DilateStage>::default(),
                Box::<OverlayStage>::default(),
            ]),
        }
    }

    pub fn with_sources(image: Arc<ImageF32>, prob: Arc<ProbMap>) -> Result<Self, PipelineError> {
        let mut state = Self::new();
        state.load(image, prob)?;
        Ok(state)
    }

    /// Replaces both sources, resets the overlay to neutral and dirties
    /// every stage.
    pub fn load(&mut self, image: Arc<ImageF32>, prob: Arc<ProbMap>) -> Result<(), PipelineError> {
        if image.dims() != prob.dims() {
            return Err(PipelineError::DimensionMismatch {
                image: image.dims(),
                prob: prob.dims(),
            });
        }
        let (w, h) = image.dims();
        self.source = Some(image);
        self.prob = Some(prob);
        if let Some(stage) = self.overlay_stage_mut() {
            stage.overlay = Some(EditOverlay::new(w, h));
        }
        self.image.invalidate_from(0);
        self.mask.invalidate_from(0);
        Ok(())
    }

    fn chain(&self, which: Chain) -> &StageChain {
        match which {
            Chain::Image => &self.image,
            Chain::Mask => &self.mask,
        }
    }

    fn chain_mut(&mut self, which: Chain) -> &mut StageChain {
        match which {
            Chain::Image => &mut self.image,
            Chain::Mask => &mut self.mask,
        }
    }

    fn locate(&self, id: &str) -> Result<(Chain, usize), PipelineError> {
        [Chain::Image, Chain::Mask]
            .into_iter()
            .find_map(|c| self.chain(c).position(id).map(|i| (c, i)))
            .ok_or_else(|| PipelineError::UnknownStage(id.to_string()))
    }

    fn overlay_stage_mut(&mut self) -> Option<&mut OverlayStage> {
        let i = self.mask.position(stage_id::OVERLAY)?;
        self.mask.stages[i].as_any_mut().downcast_mut::<OverlayStage>()
    }

    /// Stores a parameter and dirties the stage and its downstream suffix.
    /// Setting the current value is a no-op. Returns whether it changed.
    pub fn set_param(&mut self, stage: &str, value: ParamValue) -> Result<bool, PipelineError> {
        let (chain, i) = self.locate(stage)?;
        if let ParamValue::Overlay(o) = &value {
            if let Some(p) = &self.prob {
                if o.dims() != p.dims() {
                    return Err(out_of_domain(stage, "overlay dimensions differ from image"));
                }
            }
        }
        let c = self.chain_mut(chain);
        let changed = c.stages[i].set_param(value)?;
        if changed {
            c.invalidate_from(i);
        }
        Ok(changed)
    }

    pub fn param(&self, stage: &str) -> Result<ParamValue, PipelineError> {
        let (chain, i) = self.locate(stage)?;
        Ok(self.chain(chain).stages[i].param())
    }

    /// Applies every field of `params`.
    pub fn apply_params(&mut self, params: &PipelineParams) -> Result<(), PipelineError> {
        self.set_param(stage_id::RAW_CLIP, ParamValue::ClipRange(params.raw_clip))?;
        self.set_param(stage_id::SIGMA_CLIP, ParamValue::SigmaK(params.sigma_k))?;
        self.set_param(stage_id::AUTO_LIMITS, ParamValue::Limits(params.limits))?;
        self.set_param(stage_id::CURVE, ParamValue::Curve(params.curve))?;
        self.set_param(stage_id::THRESHOLD, ParamValue::Threshold(params.threshold))?;
        self.set_param(stage_id::DILATE, ParamValue::Dilation(params.dilation))?;
        Ok(())
    }

    /// Pencil edit on the overlay. Dirties only the overlay stage's suffix,
    /// and only when the pixel actually changed.
    pub fn pencil(&mut self, x: usize, y: usize, mode: PencilMode) -> Result<bool, PipelineError> {
        if self.prob.is_none() {
            return Err(PipelineError::NoSourceLoaded);
        }
        let stage = self
            .overlay_stage_mut()
            .ok_or_else(|| PipelineError::UnknownStage(stage_id::OVERLAY.into()))?;
        let overlay = stage.overlay.as_mut().ok_or(PipelineError::NoSourceLoaded)?;
        let changed = overlay.pencil(x, y, mode).map_err(|e| match e {
            MaskError::OutOfBounds { x, y, .. } => PipelineError::OutOfBounds { x, y },
            other => other.into(),
        })?;
        if changed {
            let i = self.mask.position(stage_id::OVERLAY).expect("overlay stage present");
            self.mask.invalidate_from(i);
        }
        Ok(changed)
    }

    pub fn overlay(&self) -> Option<&EditOverlay> {
        let i = self.mask.position(stage_id::OVERLAY)?;
        self.mask.stages[i]
            .as_any()
            .downcast_ref::<OverlayStage>()
            .and_then(OverlayStage::overlay)
    }

    /// Inserts a custom stage at `index` in `chain`. The new stage and
    /// everything after it become dirty.
    pub fn insert_stage(
        &mut self,
        chain: Chain,
        index: usize,
        stage: Box<dyn Stage>,
    ) -> Result<(), PipelineError> {
        if self.locate(stage.id()).is_ok() {
            return Err(out_of_domain(stage.id(), "duplicate stage id"));
        }
        let c = self.chain_mut(chain);
        if index > c.stages.len() {
            return Err(out_of_domain(stage.id(), format!("index {index} past end of chain")));
        }
        c.stages.insert(index, stage);
        c.buffers.insert(index, None);
        c.counters.insert(index, 0);
        c.invalidate_from(index);
        Ok(())
    }

    /// Recomputes the dirty stages of both chains and returns the display
    /// bytes and the composited mask.
    pub fn render(&mut self) -> Result<RenderOutput, PipelineError> {
        let (Some(source), Some(prob)) = (&self.source, &self.prob) else {
            return Err(PipelineError::NoSourceLoaded);
        };
        let (source, prob) = (Buffer::Image(Arc::clone(source)), Buffer::Prob(Arc::clone(prob)));
        self.image.render(source)?;
        self.mask.render(prob)?;
        let display = match self.image.last() {
            Some(Buffer::Bytes(b)) => Arc::clone(b),
            _ => return Err(bad_input("image chain output")),
        };
        let mask = match self.mask.last() {
            Some(Buffer::Mask(m)) => Arc::clone(m),
            _ => return Err(bad_input("mask chain output")),
        };
        Ok(RenderOutput { display, mask })
    }

    /// Reads the original value and probability at `(x, y)`.
    pub fn probe(&self, x: usize, y: usize) -> Result<ProbeResult, PipelineError> {
        let (Some(source), Some(prob)) = (&self.source, &self.prob) else {
            return Err(PipelineError::NoSourceLoaded);
        };
        let raw = *source.get(x, y).ok_or(PipelineError::OutOfBounds { x, y })?;
        let raw_value = if raw.is_finite() { raw } else { f32::NAN };
        let probability = if raw.is_finite() {
            prob.get(x, y).unwrap_or(0.0)
        } else {
            0.0
        };
        Ok(ProbeResult {
            x,
            y,
            raw_value,
            probability,
        })
    }

    /// Stage ids in order, image chain first.
    pub fn stage_ids(&self) -> Vec<String> {
        self.image
            .stages
            .iter()
            .chain(&self.mask.stages)
            .map(|s| s.id().to_string())
            .collect()
    }

    /// Recompute counts, in [`stage_ids`](Self::stage_ids) order.
    pub fn counters(&self) -> Vec<u64> {
        self.image.counters.iter().chain(&self.mask.counters).copied().collect()
    }

    pub fn counter(&self, stage: &str) -> Result<u64, PipelineError> {
        let (chain, i) = self.locate(stage)?;
        Ok(self.chain(chain).counters[i])
    }

    /// Ids of the stages that the next render will recompute.
    pub fn dirty_stages(&self) -> Vec<String> {
        let mut out = Vec::new();
        for c in [&self.image, &self.mask] {
            if let Some(d) = c.dirty_from {
                out.extend(c.stages[d..].iter().map(|s| s.id().to_string()));
            }
        }
        out
    }

    /// Cached output of a stage, if it has been computed.
    pub fn buffer(&self, stage: &str) -> Result<Option<&Buffer>, PipelineError> {
        let (chain, i) = self.locate(stage)?;
        Ok(self.chain(chain).buffers[i].as_ref())
    }

    pub fn source(&self) -> Option<&Arc<ImageF32>> {
        self.source.as_ref()
    }

    pub fn prob(&self) -> Option<&Arc<ProbMap>> {
        self.prob.as_ref()
    }
}

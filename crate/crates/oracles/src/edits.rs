//! Reference model of parameter edits and the stages they invalidate.
//!
//! Counter order is the pipeline order: image stages 0..5, mask stages 5..8.

use rand::rngs::StdRng;
use rand::Rng;
use tinyseg::mask::PencilMode;
use tinyseg::pipeline::{stage_id, LimitsMode, ParamValue, PipelineParams};
use tinyseg::scale::{TransferCurve, ZScaleParams};

use crate::gen;

/// Random sky image with a few non-finite pixels, plus a probability map.
pub fn sources(rng: &mut StdRng, w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut img = gen::sky_image(rng, w, h);
    for _ in 0..rng.gen_range(0..3) {
        let i = rng.gen_range(0..w * h);
        img[i] = if rng.gen() { f32::NAN } else { f32::INFINITY };
    }
    (img, gen::prob_map(rng, w * h))
}

/// One user edit.
pub enum Change {
    Param(&'static str, ParamValue),
    Pencil(usize, usize, PencilMode),
}

/// Draws an edit; some draws repeat the current value on purpose.
pub fn random_change(rng: &mut StdRng, p: &PipelineParams, w: usize, h: usize) -> Change {
    match rng.gen_range(0..7) {
        0 => {
            let v = if rng.gen_bool(0.3) {
                None
            } else {
                let lo = rng.gen_range(900.0..1000.0);
                Some((lo, lo + rng.gen_range(0.0..200.0)))
            };
            Change::Param(stage_id::RAW_CLIP, ParamValue::ClipRange(v))
        }
        1 => {
            let v = [None, Some(2.0), Some(3.0), p.sigma_k][rng.gen_range(0..4)];
            Change::Param(stage_id::SIGMA_CLIP, ParamValue::SigmaK(v))
        }
        2 => {
            let v = match rng.gen_range(0..3) {
                0 => LimitsMode::ZScale(ZScaleParams::default()),
                1 => LimitsMode::MinMax,
                _ => LimitsMode::Manual { z1: rng.gen_range(900.0..1000.0), z2: rng.gen_range(1000.0..1100.0) },
            };
            Change::Param(stage_id::AUTO_LIMITS, ParamValue::Limits(v))
        }
        3 => {
            let c = [TransferCurve::Linear, TransferCurve::Log, TransferCurve::Sqrt][rng.gen_range(0..3)];
            Change::Param(stage_id::CURVE, ParamValue::Curve(c))
        }
        4 => {
            let t = if rng.gen_bool(0.2) { p.threshold } else { rng.gen_range(0.0..=1.0) };
            Change::Param(stage_id::THRESHOLD, ParamValue::Threshold(t))
        }
        5 => Change::Param(stage_id::DILATE, ParamValue::Dilation(rng.gen_range(0..4))),
        _ => {
            let mode = [PencilMode::Add, PencilMode::Delete, PencilMode::Clear][rng.gen_range(0..3)];
            Change::Pencil(rng.gen_range(0..w), rng.gen_range(0..h), mode)
        }
    }
}

/// Applies `change` to the reference model and returns the index (in
/// counter order) of the first stage it dirties, if any.
pub fn model_apply(change: &Change, p: &mut PipelineParams, overlay: &mut [u8], w: usize) -> Option<usize> {
    match change {
        Change::Pencil(x, y, mode) => {
            let s = match mode {
                PencilMode::Add => 1,
                PencilMode::Delete => 2,
                PencilMode::Clear => 0,
            };
            let old = std::mem::replace(&mut overlay[y * w + x], s);
            (old != s).then_some(7)
        }
        Change::Param(stage, value) => {
            let (i, changed) = match (stage, value) {
                (&stage_id::RAW_CLIP, ParamValue::ClipRange(v)) => (0, std::mem::replace(&mut p.raw_clip, *v) != *v),
                (&stage_id::SIGMA_CLIP, ParamValue::SigmaK(v)) => (1, std::mem::replace(&mut p.sigma_k, *v) != *v),
                (&stage_id::AUTO_LIMITS, ParamValue::Limits(v)) => (2, std::mem::replace(&mut p.limits, *v) != *v),
                (&stage_id::CURVE, ParamValue::Curve(v)) => (3, std::mem::replace(&mut p.curve, *v) != *v),
                (&stage_id::THRESHOLD, ParamValue::Threshold(v)) => (5, std::mem::replace(&mut p.threshold, *v) != *v),
                (&stage_id::DILATE, ParamValue::Dilation(v)) => (6, std::mem::replace(&mut p.dilation, *v) != *v),
                _ => unreachable!(),
            };
            changed.then_some(i)
        }
    }
}

/// Counter increments after a render, given the stages dirtied since the
/// last one: each chain recomputes from its first dirty stage onward.
pub fn expected_delta(dirty: &[usize]) -> Vec<u64> {
    let image = dirty.iter().copied().filter(|&i| i < 5).min();
    let mask = dirty.iter().copied().filter(|&i| i >= 5).min();
    (0..8)
        .map(|i| {
            let d = if i < 5 { image } else { mask };
            d.is_some_and(|d| i >= d) as u64
        })
        .collect()
}

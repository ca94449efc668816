//! Drive the cached display pipeline and watch which stages recompute.
//!
//! ```text
//! cargo run -p tinyseg --example display_pipeline
//! ```

use std::sync::Arc;

use tinyseg::pipeline::{stage_id, LimitsMode, ParamValue};
use tinyseg::raster::Raster;
use tinyseg::{PencilMode, PipelineState, ProbMap, TransferCurve};

fn render(state: &mut PipelineState, what: &str) -> Result<(), tinyseg::PipelineError> {
    let before = state.counters();
    let out = state.render()?;
    let recomputed: Vec<String> = state
        .stage_ids()
        .into_iter()
        .zip(state.counters().iter().zip(&before))
        .filter(|(_, (a, b))| a > b)
        .map(|(id, _)| id)
        .collect();
    println!("{what:<28} recomputed {recomputed:?}, {} masked", out.mask.count_ones());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (64, 64);
    let image = Raster::from_fn(w, h, |x, y| 500.0 + ((x * 13 + y * 7) % 23) as f32 + if x == 20 && y == 20 { 5e4 } else { 0.0 })?;
    let prob = Raster::from_fn(w, h, |x, y| if (19..=21).contains(&x) && y == 20 { 0.8 } else { 0.0 })?;
    let mut state = PipelineState::with_sources(Arc::new(image), Arc::new(ProbMap::from_raster_clamped(prob).0))?;

    render(&mut state, "first render")?;
    render(&mut state, "nothing changed")?;

    state.set_param(stage_id::THRESHOLD, ParamValue::Threshold(0.9))?;
    render(&mut state, "threshold 0.9")?;

    state.set_param(stage_id::CURVE, ParamValue::Curve(TransferCurve::Log))?;
    render(&mut state, "log curve")?;

    state.set_param(stage_id::AUTO_LIMITS, ParamValue::Limits(LimitsMode::MinMax))?;
    render(&mut state, "min/max limits")?;

    state.set_param(stage_id::DILATE, ParamValue::Dilation(2))?;
    render(&mut state, "dilation 2")?;

    state.pencil(5, 5, PencilMode::Add)?;
    render(&mut state, "pencil add at (5, 5)")?;

    let probe = state.probe(20, 20)?;
    println!("probe (20, 20): {}", serde_json::to_string(&probe)?);
    Ok(())
}

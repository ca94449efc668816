use std::any::Any;
use std::sync::Arc;

use rand::Rng;
use tinyseg::golden::{self, GoldenCase, MANIFEST};
use tinyseg::mask::{EditOverlay, PencilMode, ProbMap};
use tinyseg::pipeline::{
    stage_id, Buffer, Chain, LimitsMode, ParamValue, PipelineError, PipelineParams, PipelineState, Stage,
};
use tinyseg::raster::{ImageF32, Raster};
use tinyseg::scale::TransferCurve;
use tinyseg_oracles::edits::{expected_delta, model_apply, random_change, sources, Change};
use tinyseg_oracles::{gen, pipeline as opipe};

const IMAGE_STAGES: [&str; 5] = [
    stage_id::RAW_CLIP,
    stage_id::SIGMA_CLIP,
    stage_id::AUTO_LIMITS,
    stage_id::CURVE,
    stage_id::QUANTIZE,
];
const MASK_STAGES: [&str; 3] = [stage_id::THRESHOLD, stage_id::DILATE, stage_id::OVERLAY];

fn state_for(w: usize, h: usize, img: &[f32], prob: &[f32]) -> PipelineState {
    let image = Arc::new(Raster::from_vec(w, h, img.to_vec()).unwrap());
    let prob = Arc::new(ProbMap::from_raster_clamped(Raster::from_vec(w, h, prob.to_vec()).unwrap()).0);
    PipelineState::with_sources(image, prob).unwrap()
}

#[test]
fn random_edit_sequences_match_full_recompute() {
    for seed in 0..40u64 {
        let mut rng = gen::rng(seed);
        let (w, h) = (rng.gen_range(6..40), rng.gen_range(6..40));
        let (img, prob) = sources(&mut rng, w, h);
        let mut state = state_for(w, h, &img, &prob);
        let mut ids = IMAGE_STAGES.to_vec();
        ids.extend(MASK_STAGES);
        assert_eq!(state.stage_ids(), ids);

        let mut params = PipelineParams::default();
        let mut overlay = vec![0u8; w * h];
        state.render().unwrap();
        assert_eq!(state.counters(), vec![1; 8]);

        for step in 0..30 {
            let before = state.counters();
            let mut dirty = Vec::new();
            for _ in 0..rng.gen_range(1..=3) {
                let change = random_change(&mut rng, &params, w, h);
                let want = model_apply(&change, &mut params, &mut overlay, w);
                let got = match change {
                    Change::Param(stage, value) => state.set_param(stage, value).unwrap(),
                    Change::Pencil(x, y, mode) => state.pencil(x, y, mode).unwrap(),
                };
                assert_eq!(got, want.is_some(), "seed {seed} step {step}");
                dirty.extend(want);
            }
            let out = state.render().unwrap();
            let delta: Vec<u64> = state.counters().iter().zip(&before).map(|(a, b)| a - b).collect();
            assert_eq!(delta, expected_delta(&dirty), "seed {seed} step {step}");
            assert_eq!(out.display.data(), &opipe::display(&img, &params)[..], "seed {seed} step {step}");
            assert_eq!(
                out.mask.data(),
                &opipe::final_mask(&prob, w, h, &params, &overlay)[..],
                "seed {seed} step {step}"
            );
            assert!(state.dirty_stages().is_empty());
        }
    }
}

#[test]
fn threshold_change_recomputes_only_mask_chain() {
    let mut rng = gen::rng(5);
    let (img, prob) = sources(&mut rng, 20, 20);
    let mut state = state_for(20, 20, &img, &prob);
    state.render().unwrap();
    let before = state.counters();
    state.set_param(stage_id::THRESHOLD, ParamValue::Threshold(0.7)).unwrap();
    assert_eq!(state.dirty_stages(), MASK_STAGES.to_vec());
    state.render().unwrap();
    let delta: Vec<u64> = state.counters().iter().zip(&before).map(|(a, b)| a - b).collect();
    assert_eq!(delta, vec![0, 0, 0, 0, 0, 1, 1, 1]);

    let before = state.counters();
    assert!(!state.set_param(stage_id::THRESHOLD, ParamValue::Threshold(0.7)).unwrap());
    state.render().unwrap();
    assert_eq!(state.counters(), before);

    state.set_param(stage_id::CURVE, ParamValue::Curve(TransferCurve::Log)).unwrap();
    assert_eq!(state.dirty_stages(), vec![stage_id::CURVE, stage_id::QUANTIZE]);
}

#[test]
fn invalid_parameters_leave_state_untouched() {
    let mut rng = gen::rng(6);
    let (img, prob) = sources(&mut rng, 10, 10);
    let mut state = state_for(10, 10, &img, &prob);
    state.render().unwrap();
    let bad = [
        (stage_id::THRESHOLD, ParamValue::Threshold(1.5)),
        (stage_id::THRESHOLD, ParamValue::Threshold(f64::NAN)),
        (stage_id::SIGMA_CLIP, ParamValue::SigmaK(Some(0.0))),
        (stage_id::RAW_CLIP, ParamValue::ClipRange(Some((5.0, 1.0)))),
        (stage_id::AUTO_LIMITS, ParamValue::Limits(LimitsMode::Manual { z1: 3.0, z2: 2.0 })),
        (stage_id::CURVE, ParamValue::Threshold(0.5)),
        (stage_id::OVERLAY, ParamValue::Overlay(EditOverlay::new(3, 3))),
    ];
    for (stage, value) in bad {
        assert!(
            matches!(state.set_param(stage, value), Err(PipelineError::ValueOutOfDomain { .. })),
            "{stage}"
        );
    }
    assert!(matches!(
        state.set_param("nope", ParamValue::Unit),
        Err(PipelineError::UnknownStage(_))
    ));
    assert!(state.dirty_stages().is_empty());
    assert_eq!(state.param(stage_id::THRESHOLD).unwrap(), ParamValue::Threshold(0.5));
}

#[test]
fn probe_ignores_parameters() {
    let img = Raster::from_vec(3, 1, vec![7.5f32, f32::NAN, -1.0]).unwrap();
    let prob = ProbMap::from_raster_clamped(Raster::from_vec(3, 1, vec![0.25f32, 0.9, 1.0]).unwrap()).0;
    let mut state = PipelineState::with_sources(Arc::new(img), Arc::new(prob)).unwrap();
    let first = state.probe(0, 0).unwrap();
    assert_eq!((first.raw_value, first.probability), (7.5, 0.25));
    state.set_param(stage_id::RAW_CLIP, ParamValue::ClipRange(Some((0.0, 1.0)))).unwrap();
    state.set_param(stage_id::THRESHOLD, ParamValue::Threshold(0.9)).unwrap();
    state.render().unwrap();
    assert_eq!(state.probe(0, 0).unwrap(), first);
    let nan = state.probe(1, 0).unwrap();
    assert!(nan.raw_value.is_nan());
    assert_eq!(nan.probability, 0.0);
    assert_eq!(serde_json::to_value(nan).unwrap()["raw_value"], serde_json::Value::Null);
    assert_eq!(state.probe(3, 0), Err(PipelineError::OutOfBounds { x: 3, y: 0 }));
    assert!(matches!(PipelineState::new().probe(0, 0), Err(PipelineError::NoSourceLoaded)));
    assert!(matches!(PipelineState::new().render(), Err(PipelineError::NoSourceLoaded)));
}

#[derive(Debug)]
struct Gain(f64);

impl Stage for Gain {
    fn id(&self) -> &str {
        "gain"
    }

    fn param(&self) -> ParamValue {
        ParamValue::SigmaK(Some(self.0))
    }

    fn set_param(&mut self, value: ParamValue) -> Result<bool, PipelineError> {
        match value {
            ParamValue::SigmaK(Some(g)) => Ok(std::mem::replace(&mut self.0, g) != g),
            _ => Err(PipelineError::ValueOutOfDomain { stage: "gain".into(), reason: "expects a gain".into() }),
        }
    }

    fn run(&self, input: &Buffer) -> Result<Buffer, PipelineError> {
        let Buffer::Image(img) = input else {
            return Err(PipelineError::BadInput { stage: "gain".into() });
        };
        let data = img.data().iter().map(|&v| (v as f64 * self.0) as f32).collect();
        Ok(Buffer::Image(Arc::new(Raster::from_vec(img.width(), img.height(), data).unwrap())))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[test]
fn custom_stage_participates_in_invalidation() {
    let mut rng = gen::rng(11);
    let (img, prob) = sources(&mut rng, 16, 12);
    let mut state = state_for(16, 12, &img, &prob);
    state.render().unwrap();
    state.insert_stage(Chain::Image, 0, Box::new(Gain(2.0))).unwrap();
    assert_eq!(state.stage_ids()[0], "gain");
    assert_eq!(state.dirty_stages().len(), 6);
    state
        .set_param(stage_id::AUTO_LIMITS, ParamValue::Limits(LimitsMode::Manual { z1: 1900.0, z2: 2100.0 }))
        .unwrap();
    let out = state.render().unwrap();
    let doubled: Vec<f32> = img.iter().map(|&v| (v as f64 * 2.0) as f32).collect();
    let p = PipelineParams { limits: LimitsMode::Manual { z1: 1900.0, z2: 2100.0 }, ..Default::default() };
    assert_eq!(out.display.data(), &opipe::display(&doubled, &p)[..]);

    let before = state.counters();
    state.set_param("gain", ParamValue::SigmaK(Some(3.0))).unwrap();
    state.render().unwrap();
    let delta: Vec<u64> = state.counters().iter().zip(&before).map(|(a, b)| a - b).collect();
    assert_eq!(delta, vec![1, 1, 1, 1, 1, 1, 0, 0, 0]);
    assert!(state.insert_stage(Chain::Mask, 0, Box::new(Gain(1.0))).is_err());
}

#[test]
fn load_resets_overlay() {
    let mut rng = gen::rng(12);
    let (img, prob) = sources(&mut rng, 8, 8);
    let mut state = state_for(8, 8, &img, &prob);
    state.pencil(1, 1, PencilMode::Add).unwrap();
    assert_eq!(state.overlay().unwrap().to_rle().len(), 1);
    let image: Arc<ImageF32> = Arc::clone(state.source().unwrap());
    let p = Arc::clone(state.prob().unwrap());
    state.load(image, p).unwrap();
    assert!(state.overlay().unwrap().to_rle().is_empty());
    assert_eq!(state.dirty_stages().len(), 8);
}

#[test]
fn golden_vectors_export_and_verify() {
    let cases = golden::standard_cases();
    assert!(cases.len() >= 40);
    for case in &cases {
        let out = golden::render_case(case).unwrap();
        let (w, h) = case.image.dims();
        let overlay = EditOverlay::from_rle(w, h, &case.params.overlay).unwrap();
        let states: Vec<u8> = overlay.raster().data().iter().map(|&s| s as u8).collect();
        assert_eq!(out.display, opipe::display(case.image.data(), &case.params.pipeline), "{}", case.name);
        assert_eq!(
            out.mask,
            opipe::final_mask(case.prob.raster().data(), w, h, &case.params.pipeline, &states),
            "{}",
            case.name
        );
    }

    let dir = tempfile::tempdir().unwrap();
    let manifest = golden::export(dir.path(), &cases).unwrap();
    assert_eq!(manifest.cases.len(), cases.len());
    assert!(dir.path().join(MANIFEST).is_file());
    assert!(golden::verify(dir.path()).unwrap().is_empty());

    let name = &manifest.cases[0].name;
    let (loaded, _): (GoldenCase, _) = golden::load_case(dir.path(), name).unwrap();
    assert_eq!(loaded.params, cases[0].params);
    let path = dir.path().join(name).join("display.u8");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[0] ^= 0xff;
    std::fs::write(&path, bytes).unwrap();
    let bad = golden::verify(dir.path()).unwrap();
    assert_eq!(bad.len(), 1);
    assert_eq!((bad[0].case.as_str(), bad[0].display_diffs, bad[0].mask_diffs), (name.as_str(), 1, 0));
}

use proptest::prelude::*;
use rand::Rng;
use tinyseg::mask::{
    apply_overlay, compose, connected_components, dilate, label_components, thumbnail_windows, threshold,
    BinaryMask, CropRect, EditOverlay, EditState, MaskError, PencilMode, ProbMap, RleRun,
};
use tinyseg::raster::Raster;
use tinyseg_oracles::{gen, mask as omask};

fn prob(w: usize, h: usize, v: Vec<f32>) -> ProbMap {
    ProbMap::from_raster_clamped(Raster::from_vec(w, h, v).unwrap()).0
}

fn bmask(w: usize, h: usize, v: Vec<u8>) -> BinaryMask {
    BinaryMask::from_raster(Raster::from_vec(w, h, v).unwrap())
}

fn overlay(w: usize, h: usize, v: &[u8]) -> EditOverlay {
    let states = v.iter().map(|&s| EditState::try_from(s).unwrap()).collect();
    EditOverlay::from_raster(Raster::from_vec(w, h, states).unwrap())
}

fn case() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..40, 1usize..40, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn threshold_matches_oracle_and_is_monotone((w, h, seed) in case(), t1 in 0.0f64..=1.0, t2 in 0.0f64..=1.0) {
        let mut rng = gen::rng(seed);
        let p = gen::prob_map(&mut rng, w * h);
        let pm = prob(w, h, p.clone());
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = threshold(&pm, lo).unwrap();
        let b = threshold(&pm, hi).unwrap();
        prop_assert_eq!(a.data(), &omask::threshold(&p, lo)[..]);
        prop_assert!(b.is_subset_of(&a));
    }

    #[test]
    fn dilation_matches_oracle((w, h, seed) in case(), k in 0usize..6) {
        let mut rng = gen::rng(seed);
        let m = gen::binary_mask(&mut rng, w * h, 0.05);
        let got = dilate(&bmask(w, h, m.clone()), k);
        prop_assert_eq!(got.data(), &omask::dilate(&m, w, h, k)[..]);
    }

    #[test]
    fn dilation_extensive_monotone_composes((w, h, seed) in case(), a in 0usize..5, b in 0usize..5) {
        let mut rng = gen::rng(seed);
        let m = bmask(w, h, gen::binary_mask(&mut rng, w * h, 0.08));
        let da = dilate(&m, a);
        let dab = dilate(&m, a + b);
        prop_assert!(m.is_subset_of(&da));
        prop_assert!(da.is_subset_of(&dab));
        prop_assert_eq!(dilate(&da, b), dab);
    }

    #[test]
    fn overlay_idempotent_and_permanent((w, h, seed) in case(), t in 0.0f64..=1.0, k in 0usize..4) {
        let mut rng = gen::rng(seed);
        let p = gen::prob_map(&mut rng, w * h);
        let o = gen::overlay(&mut rng, w * h, 0.2);
        let ov = overlay(w, h, &o);
        let m = compose(&prob(w, h, p.clone()), t, k, Some(&ov)).unwrap();
        prop_assert_eq!(apply_overlay(&m, &ov).unwrap(), m.clone());
        for (i, &s) in o.iter().enumerate() {
            match s {
                1 => prop_assert_eq!(m.data()[i], 1),
                2 => prop_assert_eq!(m.data()[i], 0),
                _ => {}
            }
        }
        let want = omask::apply_overlay(&omask::dilate(&omask::threshold(&p, t), w, h, k), &o);
        prop_assert_eq!(m.data(), &want[..]);
    }

    #[test]
    fn rle_round_trip((w, h, seed) in case()) {
        let mut rng = gen::rng(seed);
        let ov = overlay(w, h, &gen::overlay(&mut rng, w * h, 0.3));
        let runs = ov.to_rle();
        prop_assert!(runs.iter().all(|r| r.len > 0 && r.state != 0));
        prop_assert_eq!(EditOverlay::from_rle(w, h, &runs).unwrap(), ov);
    }
}

#[test]
fn components_match_flood_fill_oracle() {
    for seed in 0..300u64 {
        let mut rng = gen::rng(seed);
        let (w, h) = (rng.gen_range(1..=32), rng.gen_range(1..=32));
        let density = rng.gen_range(0.0..0.7);
        let m = gen::binary_mask(&mut rng, w * h, density);
        let (labels, regions) = label_components(&bmask(w, h, m.clone()));
        let want = omask::rank(omask::flood_fill(&m, w, h));
        assert_eq!(regions.len(), want.len(), "seed {seed}");
        assert_eq!(regions.iter().map(|r| r.pixel_count).sum::<usize>(), m.iter().filter(|&&v| v != 0).count());
        for (r, c) in regions.iter().zip(&want) {
            let pixels: Vec<usize> = (0..w * h).filter(|&i| labels.data()[i] == r.label).collect();
            assert_eq!(pixels, c.pixels, "seed {seed} label {}", r.label);
            assert_eq!((r.bbox.x_min, r.bbox.y_min, r.bbox.x_max, r.bbox.y_max), c.bbox);
            assert_eq!(r.centroid, c.centroid);
        }
        for (i, &v) in m.iter().enumerate() {
            assert_eq!(v == 0, labels.data()[i] == 0);
        }
        assert_eq!(connected_components(&bmask(w, h, m)), regions);
    }
}

#[test]
fn mask_examples() {
    assert_eq!(threshold(&prob(2, 1, vec![0.4, 0.6]), 0.5).unwrap().data(), &[0, 1]);
    assert_eq!(threshold(&prob(1, 1, vec![0.5]), 0.5).unwrap().data(), &[1]);
    assert_eq!(threshold(&prob(3, 1, vec![0.0, f32::NAN, 1.0]), 0.0).unwrap().data(), &[1, 1, 1]);
    assert_eq!(
        threshold(&prob(1, 1, vec![0.5]), 1.5),
        Err(MaskError::ThresholdOutOfRange(1.5))
    );

    let mut m = BinaryMask::empty(5, 5);
    m.set(2, 2, true);
    let d = dilate(&m, 1);
    for y in 0..5 {
        for x in 0..5 {
            assert_eq!(d.is_set(x, y), (1..=3).contains(&x) && (1..=3).contains(&y));
        }
    }
    let mut c = BinaryMask::empty(4, 4);
    c.set(0, 0, true);
    assert_eq!(dilate(&c, 1).count_ones(), 4);
    assert_eq!(dilate(&BinaryMask::empty(3, 3), 7).count_ones(), 0);

    let one = bmask(1, 1, vec![1]);
    assert_eq!(apply_overlay(&one, &overlay(1, 1, &[2])).unwrap().data(), &[0]);
    let zero = bmask(1, 1, vec![0]);
    assert_eq!(apply_overlay(&zero, &overlay(1, 1, &[1])).unwrap().data(), &[1]);
    assert!(matches!(
        apply_overlay(&zero, &EditOverlay::new(2, 1)),
        Err(MaskError::DimensionMismatch(..))
    ));
}

#[test]
fn pencil_examples() {
    let start = EditOverlay::new(4, 3);
    let mut o = start.clone();
    assert!(o.pencil(1, 1, PencilMode::Add).unwrap());
    let non_neutral = o.raster().data().iter().filter(|&&s| s != EditState::Neutral).count();
    assert_eq!(non_neutral, 1);
    assert_eq!(o.get(1, 1), Some(EditState::ForceOn));
    o.pencil(1, 1, PencilMode::Clear).unwrap();
    assert_eq!(o, start);
    assert!(matches!(o.pencil(4, 0, PencilMode::Delete), Err(MaskError::OutOfBounds { .. })));
}

#[test]
fn rle_examples() {
    let o = EditOverlay::from_rle(2, 2, &[RleRun { start: 0, len: 4, state: 2 }]).unwrap();
    assert!(o.raster().data().iter().all(|&s| s == EditState::ForceOff));
    let m = compose(&prob(2, 2, vec![1.0; 4]), 0.5, 0, Some(&o)).unwrap();
    assert_eq!(m.count_ones(), 0);
    assert!(matches!(
        EditOverlay::from_rle(2, 2, &[RleRun { start: 2, len: 3, state: 1 }]),
        Err(MaskError::MalformedRle(_))
    ));
    assert!(matches!(
        EditOverlay::from_rle(2, 2, &[RleRun { start: 0, len: 1, state: 9 }]),
        Err(MaskError::MalformedRle(_))
    ));
}

#[test]
fn component_examples() {
    let diag = bmask(2, 2, vec![1, 0, 0, 1]);
    let r = connected_components(&diag);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].pixel_count, 2);

    let mut m = BinaryMask::empty(20, 5);
    for x in 0..5 {
        m.set(x, 0, true);
    }
    for x in 8..10 {
        m.set(x, 0, true);
    }
    for x in 12..15 {
        for y in 0..3 {
            m.set(x, y, true);
        }
    }
    let sizes: Vec<usize> = connected_components(&m).iter().map(|r| r.pixel_count).collect();
    assert_eq!(sizes, vec![9, 5, 2]);
    assert!(connected_components(&BinaryMask::empty(3, 3)).is_empty());
}

#[test]
fn thumbnail_examples() {
    let mut m = BinaryMask::empty(1000, 1000);
    m.set(0, 0, true);
    m.set(500, 500, true);
    m.set(501, 500, true);
    let r = connected_components(&m);
    let t = thumbnail_windows(&r, 1000, 1000, 64, 50);
    assert_eq!(t.len(), 2);
    let center = t[0].1;
    let cx = (center.x0 + center.x1) as f64 / 2.0;
    assert!((cx - r[0].centroid.0).abs() <= 1.0);
    assert_eq!(center.x1 - center.x0 + 1, 64);
    assert_eq!(t[1].1, CropRect { x0: 0, y0: 0, x1: 63, y1: 63 });

    let mut s = BinaryMask::empty(10, 20);
    s.set(5, 5, true);
    let t = thumbnail_windows(&connected_components(&s), 10, 20, 64, 50);
    assert_eq!(t[0].1, CropRect { x0: 0, y0: 0, x1: 9, y1: 19 });
    assert_eq!(thumbnail_windows(&r, 1000, 1000, 64, 1).len(), 1);
}

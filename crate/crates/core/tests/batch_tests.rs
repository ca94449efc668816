use std::fs;

use tinyseg::batch::{expand_inputs, run_batch, segment, BatchError, BatchJob, Input, InputKind, MaskSettings};
use tinyseg::detect::DetectorSpec;
use tinyseg::fits::{load_fits, FitsDocument, DEFAULT_MASK_EXTNAME};
use tinyseg::npy::serialize_npy;
use tinyseg::raster::Raster;
use tinyseg_oracles::{detect as odetect, files, mask as omask};

fn hot_image() -> Raster<f32> {
    let mut img = Raster::from_fn(32, 24, |x, y| 100.0 + ((x * 7 + y * 13) % 5) as f32).unwrap();
    for (x, y) in [(5, 5), (20, 10), (21, 10), (28, 20)] {
        *img.get_mut(x, y).unwrap() = 5000.0;
    }
    img
}

#[test]
fn batch_writes_masked_copies_and_isolates_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    fs::create_dir(&out).unwrap();
    let img = hot_image();
    let fits_bytes = FitsDocument::from_image(&img).to_bytes();
    fs::write(dir.path().join("a.fits"), &fits_bytes).unwrap();
    fs::write(dir.path().join("b.npy"), serialize_npy(&img)).unwrap();
    fs::write(dir.path().join("c.fits"), b"garbage").unwrap();

    let pattern = format!("{}/*.*", dir.path().display());
    let inputs = expand_inputs(&[pattern.as_str(), "/nonexistent/d.fits"]).unwrap();
    assert_eq!(inputs.len(), 4);
    let job = BatchJob {
        inputs,
        output_dir: out.clone(),
        settings: MaskSettings { threshold: 0.5, dilation: 1 },
        detector: DetectorSpec::default(),
        overwrite: false,
    };
    let reports = run_batch(&job);
    let ok: Vec<bool> = reports.iter().map(|r| r.result.is_ok()).collect();
    assert_eq!(ok, vec![true, true, false, false]);

    let (w, h) = img.dims();
    let prob = odetect::baseline(img.data(), w, h, 5, 1.0);
    let want_mask = omask::dilate(&omask::threshold(&prob, 0.5), w, h, 1);
    let want_objects = omask::flood_fill(&want_mask, w, h).len();
    for r in &reports[..2] {
        let s = r.result.as_ref().unwrap();
        assert_eq!(s.objects, want_objects);
        assert_eq!(s.masked_pixels, want_mask.iter().filter(|&&v| v == 1).count());
        assert!(r.line().ends_with(&format!("{want_objects} objects, {} masked pixels", s.masked_pixels)));
        let written = fs::read(&r.output).unwrap();
        let doc = load_fits(&written).unwrap();
        let ext = doc.extension_image(DEFAULT_MASK_EXTNAME).unwrap();
        let got: Vec<u8> = ext.data().iter().map(|&v| v as u8).collect();
        assert_eq!(got, want_mask);
    }
    let a_out = fs::read(out.join("a_masked.fits")).unwrap();
    assert_eq!(&a_out[..fits_bytes.len()], &fits_bytes[..]);
    assert!(reports[2].line().contains("error"));

    let again = run_batch(&job);
    assert!(matches!(again[0].result, Err(BatchError::OutputExists(_))));
    let job = BatchJob { overwrite: true, ..job };
    assert!(run_batch(&job)[0].result.is_ok());
}

#[test]
fn input_sniffing() {
    let img = hot_image();
    let npy = Input::parse(&serialize_npy(&img)).unwrap();
    assert_eq!(npy.kind(), InputKind::Npy);
    assert_eq!(npy.image(), &img);
    let fits = Input::parse(&files::simple_fits(2, 1, &[1.0, 2.0])).unwrap();
    assert_eq!(fits.kind(), InputKind::Fits);
    assert!(Input::parse(b"neither").is_err());

    let seg = segment(&npy, &DetectorSpec::default(), MaskSettings::default(), None).unwrap();
    assert_eq!(seg.objects.len(), 3);
    assert_eq!(seg.objects[0].pixel_count, 2);
    let pre: DetectorSpec = "precomputed".parse().unwrap();
    assert!(segment(&npy, &pre, MaskSettings::default(), None).is_err());
}

#[test]
fn expansion_edge_cases() {
    assert!(matches!(expand_inputs::<&str>(&[]), Err(BatchError::NoInputs)));
    assert_eq!(expand_inputs(&["/no/match/*.fits"]).unwrap().len(), 1);
    assert!(matches!(expand_inputs(&["[bad"]), Err(BatchError::BadPattern { .. })));
}

//! Segment several files in parallel and write `<stem>_masked.fits` for each.
//!
//! ```text
//! cargo run -p tinyseg --example batch_detect -- [OUTPUT_DIR]
//! ```

use std::path::PathBuf;

use tinyseg::batch::{expand_inputs, run_batch, BatchJob, MaskSettings};
use tinyseg::npy::serialize_npy;
use tinyseg::raster::Raster;
use tinyseg::{DetectorSpec, FitsDocument};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let work = std::env::temp_dir().join(format!("tinyseg-batch-{}", std::process::id()));
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| work.join("out"));
    std::fs::create_dir_all(&work)?;
    std::fs::create_dir_all(&out)?;

    for i in 0..4 {
        let mut img = Raster::from_fn(48, 32, |x, y| 300.0 + ((x * 5 + y * 3 + i) % 7) as f32)?;
        for k in 0..=i {
            *img.get_mut(5 + 9 * k, 4 + 6 * k).unwrap() = 9000.0;
        }
        if i % 2 == 0 {
            std::fs::write(work.join(format!("frame{i}.fits")), FitsDocument::from_image(&img).to_bytes())?;
        } else {
            std::fs::write(work.join(format!("frame{i}.npy")), serialize_npy(&img))?;
        }
    }
    std::fs::write(work.join("broken.fits"), b"SIMPLE  = not really")?;

    let pattern = work.join("*.*").display().to_string();
    let job = BatchJob {
        inputs: expand_inputs(&[pattern])?,
        output_dir: out.clone(),
        settings: MaskSettings { threshold: 0.5, dilation: 1 },
        detector: DetectorSpec::default(),
        overwrite: true,
    };
    for report in run_batch(&job) {
        println!("{}", report.line());
    }
    println!("outputs in {}", out.display());
    Ok(())
}

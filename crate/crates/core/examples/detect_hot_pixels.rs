//! Run the classical baseline detector on a noisy frame with injected
//! cosmic-ray hits.
//!
//! ```text
//! cargo run -p tinyseg --example detect_hot_pixels -- [DETECTOR]
//! ```
//!
//! `DETECTOR` uses the CLI syntax, e.g. `baseline:window=7,scale=1.5`.

use tinyseg::detect::{detect, robust_sigma};
use tinyseg::mask::{compose, connected_components};
use tinyseg::raster::Raster;
use tinyseg::DetectorSpec;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec: DetectorSpec = std::env::args().nth(1).as_deref().unwrap_or("baseline").parse()?;
    let (w, h) = (256, 256);

    // Deterministic pseudo-noise in [-4, 4].
    let mut img = Raster::from_fn(w, h, |x, y| {
        let n = (x as u64 * 2_654_435_761 ^ y as u64 * 40_503) % 1000;
        800.0 + (n as f32 / 125.0 - 4.0)
    })?;
    let sigma = robust_sigma(&img.data().iter().map(|v| v - 800.0).collect::<Vec<_>>()) as f32;
    let hits = [(10, 10), (100, 37), (101, 37), (200, 150), (33, 220)];
    for &(x, y) in &hits {
        *img.get_mut(x, y).unwrap() += 25.0 * sigma;
    }

    let prob = detect(&spec, &img)?;
    println!("detector {spec}, noise sigma {sigma:.2}");
    for &(x, y) in &hits {
        println!("  hit at ({x:3}, {y:3}): p = {:.3}", prob.get(x, y).unwrap());
    }
    let mask = compose(&prob, 0.5, 1, None)?;
    let objects = connected_components(&mask);
    println!("{} objects, {} masked pixels after one dilation", objects.len(), mask.count_ones());
    Ok(())
}

//! Compute display limits for an image and write 8-bit PGM renderings.
//!
//! ```text
//! cargo run -p tinyseg --example zscale_stretch -- [OUTPUT_DIR]
//! ```

use std::path::PathBuf;

use tinyseg::raster::Raster;
use tinyseg::scale::{apply_curve, minmax_limits, zscale_limits, TransferCurve, ZScaleParams};
use tinyseg::stats::sigma_clip_bounds;
use tinyseg::ByteRaster;

/// Sky background with a gradient, two stars and a few saturated pixels.
fn synthetic(w: usize, h: usize) -> Raster<f32> {
    let star = |x: f64, y: f64, cx: f64, cy: f64, amp: f64| amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / 8.0).exp();
    Raster::from_fn(w, h, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let ripple = ((x * 7919 + y * 104_729) % 17) as f64;
        let v = 1000.0 + 0.5 * fx + ripple + star(fx, fy, 40.0, 30.0, 4000.0) + star(fx, fy, 90.0, 70.0, 900.0);
        if (x * 31 + y * 17) % 997 == 0 {
            65535.0
        } else {
            v as f32
        }
    })
    .unwrap()
}

fn write_pgm(path: &PathBuf, img: &ByteRaster) -> std::io::Result<()> {
    let (w, h) = img.dims();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(img.data());
    std::fs::write(path, out)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().display().to_string()));
    let img = synthetic(128, 96);

    let clip = sigma_clip_bounds(&img, 3.0, 5)?;
    let z = zscale_limits(&img, &ZScaleParams::default())?;
    let mm = minmax_limits(&img)?;
    println!("sigma clip: [{:.1}, {:.1}]", clip.lo, clip.hi);
    println!("zscale:     [{:.1}, {:.1}]", z.z1(), z.z2());
    println!("min/max:    [{:.1}, {:.1}]", mm.z1(), mm.z2());

    for curve in [TransferCurve::Linear, TransferCurve::Sqrt, TransferCurve::Log] {
        let bytes = apply_curve(&img, &z, curve);
        let path = dir.join(format!("zscale_{curve:?}.pgm").to_lowercase());
        write_pgm(&path, &bytes)?;
        let mean = bytes.data().iter().map(|&b| b as f64).sum::<f64>() / bytes.len() as f64;
        println!("{curve:?}: mean display value {mean:.1} -> {}", path.display());
    }
    Ok(())
}

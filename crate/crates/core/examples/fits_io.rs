//! Load a FITS or NPY file, list its HDUs, and append a mask extension.
//!
//! ```text
//! cargo run -p tinyseg --example fits_io -- [INPUT] [OUTPUT.fits]
//! ```
//!
//! Without arguments a small synthetic image is used.

use tinyseg::batch::{masked_fits, Input};
use tinyseg::fits::{load_fits, DEFAULT_MASK_EXTNAME};
use tinyseg::mask::BinaryMask;
use tinyseg::raster::Raster;
use tinyseg::FitsDocument;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let bytes = match args.first() {
        Some(path) => std::fs::read(path)?,
        None => {
            let img = Raster::from_fn(64, 48, |x, y| 100.0 + (x + 2 * y) as f32)?;
            FitsDocument::from_image(&img).to_bytes()
        }
    };

    let input = Input::parse(&bytes)?;
    println!("format: {:?}", input.kind());
    for (i, hdu) in input.document().hdus().iter().enumerate() {
        println!(
            "  HDU {i}: {} cards, {} data bytes, EXTNAME={:?}",
            hdu.header().cards().len(),
            hdu.data().len(),
            hdu.extname()
        );
    }
    let img = input.image();
    let (w, h) = img.dims();
    println!("image: {w}x{h}, {} finite pixels", img.finite_count());

    // A diagonal stripe stands in for a real segmentation.
    let mut mask = BinaryMask::empty(w, h);
    for i in 0..w.min(h) {
        mask.set(i, i, true);
    }
    let out = masked_fits(input.document(), &mask)?;
    let prefix = input.document().byte_len() - input.document().trailing().len();
    assert_eq!(&out[..prefix], &input.document().to_bytes()[..prefix]);

    let back = load_fits(&out)?.extension_image(DEFAULT_MASK_EXTNAME)?;
    println!("appended {DEFAULT_MASK_EXTNAME}: {:?}, {} bytes total", back.dims(), out.len());
    if let Some(path) = args.get(1) {
        std::fs::write(path, &out)?;
        println!("wrote {path}");
    }
    Ok(())
}

//! Encode an image and probability map as a FrameV1 message and decode it.
//!
//! ```text
//! cargo run -p tinyseg-server --example frame_codec
//! ```

use tinyseg_server::frame::{decode, encode, Compression, Frame, HEADER_LEN};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tiny = Frame::new(2, 2, vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4])?;
    let bytes = encode(&tiny, Compression::Never);
    println!("2x2 frame, {} bytes:", bytes.len());
    for chunk in bytes.chunks(16) {
        let hex: Vec<String> = chunk.iter().map(|b| format!("{b:02x}")).collect();
        println!("  {}", hex.join(" "));
    }

    let (w, h) = (512u32, 384u32);
    let n = (w * h) as usize;
    let image: Vec<f32> = (0..n).map(|i| 1000.0 + (i % w as usize) as f32 * 0.25).collect();
    let prob: Vec<f32> = (0..n).map(|i| if i % 997 == 0 { 0.9 } else { 0.0 }).collect();
    let frame = Frame::new(w, h, image, prob)?;
    for mode in [Compression::Never, Compression::Always, Compression::Auto] {
        let b = encode(&frame, mode);
        let back = decode(&b)?;
        assert!(back.bits_eq(&frame));
        println!(
            "{mode:?}: {} bytes (flags {:#04x}), payload ratio {:.2}",
            b.len(),
            b[5],
            (b.len() - HEADER_LEN) as f64 / (2 * n * 4) as f64
        );
    }

    match decode(&bytes[..bytes.len() - 3]) {
        Err(e) => println!("truncated frame rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}

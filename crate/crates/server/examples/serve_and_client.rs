//! Start the HTTP service in-process and walk one session through it:
//! upload, fetch the frame, post a mask edit and download the result.
//!
//! ```text
//! cargo run -p tinyseg-server --example serve_and_client
//! ```

use reqwest::multipart::{Form, Part};
use serde_json::Value;
use tinyseg::fits::{load_fits, DEFAULT_MASK_EXTNAME};
use tinyseg::raster::Raster;
use tinyseg::FitsDocument;
use tinyseg_server::{decode, MaskRequest, RunningService, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let svc = RunningService::start(ServiceConfig { port: 0, ..Default::default() }).await?;
    println!("service at {}", svc.url("/"));
    let http = reqwest::Client::new();

    let mut img = Raster::from_fn(96, 64, |x, y| 420.0 + ((x * 3 + y * 5) % 9) as f32)?;
    for (x, y) in [(12, 9), (50, 30), (51, 30), (80, 55)] {
        *img.get_mut(x, y).unwrap() = 20_000.0;
    }
    let upload = FitsDocument::from_image(&img).to_bytes();

    let form = Form::new()
        .text("client_uuid", "123e4567-e89b-12d3-a456-426614174000")
        .part("file", Part::bytes(upload.clone()).file_name("hits.fits"));
    let body = http.post(svc.url("/api/v1/images")).multipart(form).send().await?.bytes().await?;
    let reply: Value = serde_json::from_slice(&body)?;
    let key = reply["key"].as_str().ok_or("no key")?.to_string();
    println!(
        "uploaded: key {key}, {}x{}, {} objects",
        reply["width"],
        reply["height"],
        reply["objects"].as_array().map_or(0, Vec::len)
    );

    let frame = http.get(svc.url(&format!("/api/v1/frame/{key}"))).send().await?.bytes().await?;
    let frame = decode(&frame)?;
    let hot = frame.prob.iter().filter(|&&p| p >= 0.5).count();
    println!("frame: {}x{}, {hot} pixels at p >= 0.5", frame.width, frame.height);

    // Grow detections by one pixel and force one extra pixel on.
    let edit = MaskRequest { width: 96, height: 64, threshold: 0.5, dilation: 1, overlay: vec![(2 * 96 + 2, 1, 1)] };
    let status = http
        .post(svc.url(&format!("/api/v1/mask/{key}")))
        .header("content-type", "application/json")
        .body(serde_json::to_vec(&edit)?)
        .send()
        .await?
        .status();
    println!("mask edit: {status}");

    let fits = http.get(svc.url(&format!("/api/v1/download/{key}"))).send().await?.bytes().await?;
    assert_eq!(&fits[..upload.len()], &upload[..]);
    let mask = load_fits(&fits)?.extension_image(DEFAULT_MASK_EXTNAME)?;
    let on = mask.data().iter().filter(|&&v| v != 0.0).count();
    println!("download: {} bytes, original preserved, {DEFAULT_MASK_EXTNAME} has {on} pixels set", fits.len());

    svc.stop().await?;
    Ok(())
}

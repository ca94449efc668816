//! Threshold a probability map, grow it, apply pencil edits and list the
//! resulting objects.
//!
//! ```text
//! cargo run -p tinyseg --example mask_editing
//! ```

use tinyseg::mask::{compose, connected_components, thumbnail_windows, RleRun};
use tinyseg::raster::Raster;
use tinyseg::{EditOverlay, PencilMode, ProbMap};

fn show(label: &str, mask: &tinyseg::BinaryMask) {
    println!("{label} ({} pixels)", mask.count_ones());
    for y in 0..mask.height() {
        let row: String = (0..mask.width()).map(|x| if mask.is_set(x, y) { '#' } else { '.' }).collect();
        println!("  {row}");
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (16, 8);
    let raw = Raster::from_fn(w, h, |x, y| match (x, y) {
        (3, 2) | (4, 2) => 0.9,
        (11, 5) => 0.6,
        (8, 6) => 0.3,
        _ => 0.05,
    })?;
    let (prob, clamped) = ProbMap::from_raster_clamped(raw);
    assert_eq!(clamped, 0);

    let auto = compose(&prob, 0.5, 0, None)?;
    show("threshold 0.5", &auto);
    let grown = compose(&prob, 0.5, 1, None)?;
    show("threshold 0.5, dilation 1", &grown);

    let mut overlay = EditOverlay::new(w, h);
    overlay.pencil(8, 6, PencilMode::Add)?;
    overlay.pencil(11, 5, PencilMode::Delete)?;
    let edited = compose(&prob, 0.5, 1, Some(&overlay))?;
    show("with pencil edits", &edited);

    // Edits survive any later threshold or dilation change.
    let strict = compose(&prob, 0.95, 2, Some(&overlay))?;
    assert!(strict.is_set(8, 6) && !strict.is_set(11, 5));

    let runs: Vec<RleRun> = overlay.to_rle();
    println!("overlay as runs: {runs:?}");
    assert_eq!(EditOverlay::from_rle(w, h, &runs)?, overlay);

    let objects = connected_components(&edited);
    for o in &objects {
        println!(
            "object {}: {} px, bbox ({},{})-({},{}), centroid ({:.1}, {:.1})",
            o.label, o.pixel_count, o.bbox.x_min, o.bbox.y_min, o.bbox.x_max, o.bbox.y_max, o.centroid.0, o.centroid.1
        );
    }
    for (label, rect) in thumbnail_windows(&objects, w, h, 5, 10) {
        println!("thumbnail for {label}: {rect:?}");
    }
    Ok(())
}

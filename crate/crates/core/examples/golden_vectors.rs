//! Export the reference display/mask vectors used to cross-check other
//! implementations of the pipeline, then verify them.
//!
//! ```text
//! cargo run -p tinyseg --example golden_vectors -- [OUTPUT_DIR]
//! ```

use std::path::PathBuf;

use tinyseg::golden::{export, standard_cases, verify, MANIFEST};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => std::env::temp_dir().join("tinyseg-golden"),
    };
    std::fs::create_dir_all(&dir)?;
    let cases = standard_cases();
    let manifest = export(&dir, &cases)?;
    println!("wrote {} cases to {}", manifest.cases.len(), dir.join(MANIFEST).display());
    for entry in manifest.cases.iter().take(5) {
        println!("  {} ({}x{})", entry.name, entry.width, entry.height);
    }
    let mismatches = verify(&dir)?;
    println!("verify: {} mismatching cases", mismatches.len());
    Ok(())
}

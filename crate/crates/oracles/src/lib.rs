//! Slow, straightforward reference implementations and seeded data
//! generators for testing `tinyseg`.
//!
//! Nothing here calls into the algorithms under test; only plain data
//! types are shared.

pub mod detect;
pub mod edits;
pub mod files;
pub mod gen;
pub mod mask;
pub mod pipeline;
pub mod stats;
pub mod zscale;

/// `|a - b| <= tol * max(|a|, |b|)`, treating two values within `1e-12`
/// of each other as equal.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let d = (a - b).abs();
    d <= 1e-12 || d <= tol * a.abs().max(b.abs())
}

//! Probability thresholding, dilation, manual edit overlays and
//! connected-component extraction.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{ByteRaster, ImageF32, Raster};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_THUMBNAIL_SIDE: usize = 64;
pub const DEFAULT_THUMBNAIL_COUNT: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskError {
    #[error("threshold {0} outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("malformed overlay run-length encoding: {0}")]
    MalformedRle(String),
    #[error("pixel ({x}, {y}) outside {width}x{height} raster")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
}

/// Detector confidence per pixel. Every stored value is finite and in
/// `[0, 1]`; non-finite inputs are stored as 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap(Raster<f32>);

impl ProbMap {
    /// Wraps `raster`, replacing non-finite values by 0 and clamping the rest
    /// into `[0, 1]`. Returns the map and how many finite values had to be
    /// clamped.
    pub fn from_raster_clamped(mut raster: Raster<f32>) -> (Self, usize) {
        let mut clamped = 0;
        for v in raster.data_mut() {
            if !v.is_finite() {
                *v = 0.0;
            } else if *v < 0.0 || *v > 1.0 {
                clamped += 1;
                *v = v.clamp(0.0, 1.0);
            }
        }
        (ProbMap(raster), clamped)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        ProbMap(Raster::filled(width, height, 0.0).expect("valid dimensions"))
    }

    pub fn raster(&self) -> &Raster<f32> {
        &self.0
    }

    pub fn into_raster(self) -> ImageF32 {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f32> {
        self.0.get(x, y).copied()
    }
}

/// A 0/1 mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask(ByteRaster);

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask(Raster::filled(width, height, 0).expect("valid dimensions"))
    }

    /// Nonzero bytes become 1.
    pub fn from_raster(raster: ByteRaster) -> Self {
        BinaryMask(raster.map(|&v| u8::from(v != 0)))
    }

    pub fn raster(&self) -> &ByteRaster {
        &self.0
    }

    pub fn into_raster(self) -> ByteRaster {
        self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    pub fn data(&self) -> &[u8] {
        self.0.data()
    }

    pub fn is_set(&self, x: usize, y: usize) -> bool {
        self.0.get(x, y).is_some_and(|&v| v != 0)
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        if let Some(v) = self.0.get_mut(x, y) {
            *v = u8::from(on);
        }
    }

    pub fn count_ones(&self) -> usize {
        self.0.data().iter().filter(|&&v| v != 0).count()
    }

    /// True when every set pixel of `self` is set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.0.same_dims(&other.0)
            && self.data().iter().zip(other.data()).all(|(&a, &b)| a <= b)
    }
}

/// Manual decision for one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[repr(u8)]
pub enum EditState {
    #[default]
    Neutral = 0,
    ForceOn = 1,
    ForceOff = 2,
}

impl TryFrom<u8> for EditState {
    type Error = u8;

    fn try_from(v: u8) -> Result<Self, u8> {
        match v {
            0 => Ok(EditState::Neutral),
            1 => Ok(EditState::ForceOn),
            2 => Ok(EditState::ForceOff),
            other => Err(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PencilMode {
    Add,
    Delete,
    Clear,
}

impl From<PencilMode> for EditState {
    fn from(m: PencilMode) -> Self {
        match m {
            PencilMode::Add => EditState::ForceOn,
            PencilMode::Delete => EditState::ForceOff,
            PencilMode::Clear => EditState::Neutral,
        }
    }
}

/// The user's pixel-level edits, composited after all global operations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditOverlay(Raster<EditState>);

impl EditOverlay {
    pub fn new(width: usize, height: usize) -> Self {
        EditOverlay(Raster::filled(width, height, EditState::Neutral).expect("valid dimensions"))
    }

    pub fn from_raster(raster: Raster<EditState>) -> Self {
        EditOverlay(raster)
    }

    pub fn raster(&self) -> &Raster<EditState> {
        &self.0
    }

    pub fn dims(&self) -> (usize, usize) {
        self.0.dims()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<EditState> {
        self.0.get(x, y).copied()
    }

    pub fn is_neutral(&self) -> bool {
        self.0.data().iter().all(|&s| s == EditState::Neutral)
    }

    /// Sets one pixel. Returns whether the overlay changed.
    pub fn pencil(&mut self, x: usize, y: usize, mode: PencilMode) -> Result<bool, MaskError> {
        let (width, height) = self.0.dims();
        let cell = self
            .0
            .get_mut(x, y)
            .ok_or(MaskError::OutOfBounds { x, y, width, height })?;
        let new = EditState::from(mode);
        let changed = *cell != new;
        *cell = new;
        Ok(changed)
    }
}

/// One run of identical overlay states in row-major order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleRun {
    pub start: usize,
    pub len: usize,
    pub state: u8,
}

impl EditOverlay {
    /// Decodes runs over a `width` x `height` overlay. Pixels not covered by
    /// any run stay neutral. Runs must be non-empty, sorted, non-overlapping
    /// and inside the raster.
    pub fn from_rle(width: usize, height: usize, runs: &[RleRun]) -> Result<Self, MaskError> {
        let mut data = vec![EditState::Neutral; width * height];
        let mut next_free = 0usize;
        for (i, run) in runs.iter().enumerate() {
            let state = EditState::try_from(run.state)
                .map_err(|s| MaskError::MalformedRle(format!("run {i}: unknown state {s}")))?;
            if run.len == 0 {
                return Err(MaskError::MalformedRle(format!("run {i}: zero length")));
            }
            if run.start < next_free {
                return Err(MaskError::MalformedRle(format!("run {i}: overlaps or unsorted")));
            }
            let end = run
                .start
                .checked_add(run.len)
                .filter(|&e| e <= data.len())
                .ok_or_else(|| {
                    MaskError::MalformedRle(format!("run {i}: extends past {} pixels", data.len()))
                })?;
            data[run.start..end].fill(state);
            next_free = end;
        }
        Raster::from_vec(width, height, data)
            .map(EditOverlay)
            .map_err(|e| MaskError::MalformedRle(e.to_string()))
    }

    /// Runs covering every non-neutral pixel.
    pub fn to_rle(&self) -> Vec<RleRun> {
        let mut runs: Vec<RleRun> = Vec::new();
        for (i, &s) in self.0.data().iter().enumerate() {
            if s == EditState::Neutral {
                continue;
            }
            match runs.last_mut() {
                Some(r) if r.start + r.len == i && r.state == s as u8 => r.len += 1,
                _ => runs.push(RleRun {
                    start: i,
                    len: 1,
                    state: s as u8,
                }),
            }
        }
        runs
    }
}

/// `out[i] = 1` iff `prob[i] >= t`.
pub fn threshold(prob: &ProbMap, t: f64) -> Result<BinaryMask, MaskError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(MaskError::ThresholdOutOfRange(t));
    }
    Ok(BinaryMask(prob.0.map(|&p| u8::from(p as f64 >= t))))
}

/// `iterations` rounds of 3x3 square dilation, clipped at the borders.
///
/// Equivalent to a single pass with a `(2k+1) x (2k+1)` square, computed
/// separably with running counts so the cost does not depend on `k`.
pub fn dilate(mask: &BinaryMask, iterations: usize) -> BinaryMask {
    if iterations == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let r = iterations;
    let src = mask.data();

    let mut rows = vec![0u8; w * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        let out = &mut rows[y * w..(y + 1) * w];
        let mut count: usize = line[..r.min(w)].iter().map(|&v| v as usize).sum();
        for x in 0..w {
            if x + r < w {
                count += line[x + r] as usize;
            }
            out[x] = u8::from(count > 0);
            if x >= r {
                count -= line[x - r] as usize;
            }
        }
    }

    let mut out = vec![0u8; w * h];
    let mut counts = vec![0usize; w];
    for y in 0..r.min(h) {
        for (c, &v) in counts.iter_mut().zip(&rows[y * w..(y + 1) * w]) {
            *c += v as usize;
        }
    }
    for y in 0..h {
        if y + r < h {
            for (c, &v) in counts.iter_mut().zip(&rows[(y + r) * w..(y + r + 1) * w]) {
                *c += v as usize;
            }
        }
        for (o, &c) in out[y * w..(y + 1) * w].iter_mut().zip(&counts) {
            *o = u8::from(c > 0);
        }
        if y >= r {
            for (c, &v) in counts.iter_mut().zip(&rows[(y - r) * w..(y - r + 1) * w]) {
                *c -= v as usize;
            }
        }
    }
    BinaryMask(Raster::from_vec(w, h, out).expect("dimensions copied from input"))
}

/// Forced pixels override the mask; neutral pixels pass it through.
pub fn apply_overlay(mask: &BinaryMask, overlay: &EditOverlay) -> Result<BinaryMask, MaskError> {
    if mask.dims() != overlay.dims() {
        return Err(MaskError::DimensionMismatch(mask.dims(), overlay.dims()));
    }
    let data = mask
        .data()
        .iter()
        .zip(overlay.0.data())
        .map(|(&m, &e)| match e {
            EditState::Neutral => m,
            EditState::ForceOn => 1,
            EditState::ForceOff => 0,
        })
        .collect();
    Ok(BinaryMask(Raster::from_vec(mask.width(), mask.height(), data).expect("same dims")))
}

/// `apply_overlay(dilate(threshold(prob, t), k), overlay)`.
pub fn compose(
    prob: &ProbMap,
    t: f64,
    k: usize,
    overlay: Option<&EditOverlay>,
) -> Result<BinaryMask, MaskError> {
    let grown = dilate(&threshold(prob, t)?, k);
    match overlay {
        Some(o) => apply_overlay(&grown, o),
        None => Ok(grown),
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

/// A connected group of set pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRegion {
    /// 1-based rank in the size ordering.
    pub label: u32,
    pub pixel_count: usize,
    pub bbox: BBox,
    pub centroid: (f64, f64),
}

const NEIGHBOURS_8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// 8-connected components, largest first.
///
/// Ties in size are ordered by bounding-box origin `(y_min, x_min)`, then by
/// raster position of the first pixel. Labels are the 1-based ranks.
pub fn connected_components(mask: &BinaryMask) -> Vec<ObjectRegion> {
    label_components(mask).1
}

/// Like [`connected_components`], also returning a raster holding each
/// pixel's label (0 for background).
pub fn label_components(mask: &BinaryMask) -> (Raster<u32>, Vec<ObjectRegion>) {
    let (w, h) = mask.dims();
    let data = mask.data();
    // Provisional component index + 1 per pixel; 0 = background/unvisited.
    let mut ids = vec![0u32; w * h];
    let mut queue = VecDeque::new();
    let mut found: Vec<(usize, ObjectRegion)> = Vec::new();

    for start in 0..w * h {
        if data[start] == 0 || ids[start] != 0 {
            continue;
        }
        let id = found.len() as u32 + 1;
        ids[start] = id;
        queue.push_back(start);
        let (mut count, mut sx, mut sy) = (0usize, 0f64, 0f64);
        let mut bbox = BBox {
            x_min: usize::MAX,
            y_min: usize::MAX,
            x_max: 0,
            y_max: 0,
        };
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            count += 1;
            sx += x as f64;
            sy += y as f64;
            bbox.x_min = bbox.x_min.min(x);
            bbox.y_min = bbox.y_min.min(y);
            bbox.x_max = bbox.x_max.max(x);
            bbox.y_max = bbox.y_max.max(y);
            for (dx, dy) in NEIGHBOURS_8 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if data[j] != 0 && ids[j] == 0 {
                    ids[j] = id;
                    queue.push_back(j);
                }
            }
        }
        found.push((
            start,
            ObjectRegion {
                label: id,
                pixel_count: count,
                bbox,
                centroid: (sx / count as f64, sy / count as f64),
            },
        ));
    }

    found.sort_by(|(sa, a), (sb, b)| {
        b.pixel_count
            .cmp(&a.pixel_count)
            .then(a.bbox.y_min.cmp(&b.bbox.y_min))
            .then(a.bbox.x_min.cmp(&b.bbox.x_min))
            .then(sa.cmp(sb))
    });
    let mut rank_of = vec![0u32; found.len() + 1];
    let regions = found
        .into_iter()
        .enumerate()
        .map(|(rank, (_, mut r))| {
            rank_of[r.label as usize] = rank as u32 + 1;
            r.label = rank as u32 + 1;
            r
        })
        .collect();
    for v in &mut ids {
        *v = rank_of[*v as usize];
    }
    let labels = Raster::from_vec(w, h, ids).expect("dimensions copied from mask");
    (labels, regions)
}

/// Inclusive crop rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

fn crop_axis(center: f64, side: usize, extent: usize) -> (usize, usize) {
    if side >= extent {
        return (0, extent - 1);
    }
    let start = (center.round() as i64 - (side / 2) as i64).clamp(0, (extent - side) as i64);
    (start as usize, start as usize + side - 1)
}

/// `side` x `side` windows around the first `max_n` region centroids,
/// shifted to lie inside the image. Images smaller than `side` yield the
/// whole image on that axis.
pub fn thumbnail_windows(
    regions: &[ObjectRegion],
    img_w: usize,
    img_h: usize,
    side: usize,
    max_n: usize,
) -> Vec<(u32, CropRect)> {
    let side = side.max(1);
    regions
        .iter()
        .take(max_n)
        .map(|r| {
            let (x0, x1) = crop_axis(r.centroid.0, side, img_w);
            let (y0, y1) = crop_axis(r.centroid.1, side, img_h);
            (r.label, CropRect { x0, y0, x1, y1 })
        })
        .collect()
}

//! FrameV1: the binary stream carrying an image and its probability map
//! to the browser.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "TSEG"
//!      4     1  version (1)
//!      5     1  flags (bit 0: payload is a zlib stream)
//!      6     1  dtype (0: f32 little-endian)
//!      7     1  reserved (0)
//!      8     4  width, u32 LE
//!     12     4  height, u32 LE
//!     16     …  image raster then probability raster, row-major
//! ```

use std::io::{Read, Write};

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"TSEG";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
pub const FLAG_DEFLATE: u8 = 0b1;
pub const DTYPE_F32_LE: u8 = 0;
/// Compressed payload must be at most this fraction of the raw size.
pub const MIN_SAVING: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame shorter than its {HEADER_LEN}-byte header")]
    TooShort,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),
    #[error("unsupported dtype {0}")]
    UnsupportedDtype(u8),
    #[error("unknown flag bits {0:#04x}")]
    UnknownFlags(u8),
    #[error("reserved byte is {0}, expected 0")]
    ReservedNonZero(u8),
    #[error("zero-sized frame {0}x{1}")]
    ZeroDimension(u32, u32),
    #[error("payload is {actual} bytes, expected {expected}")]
    PayloadLength { expected: usize, actual: usize },
    #[error("rasters hold {actual} values, expected {expected}")]
    RasterLength { expected: usize, actual: usize },
    #[error("corrupt compressed payload: {0}")]
    Inflate(String),
}

/// Whether to deflate the payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compression {
    /// Deflate when it saves at least [`MIN_SAVING`] of the payload.
    #[default]
    Auto,
    Never,
    Always,
}

/// Decoded frame contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: u32,
    pub height: u32,
    pub image: Vec<f32>,
    pub prob: Vec<f32>,
}

impl Frame {
    pub fn new(width: u32, height: u32, image: Vec<f32>, prob: Vec<f32>) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::ZeroDimension(width, height));
        }
        let expected = width as usize * height as usize;
        for len in [image.len(), prob.len()] {
            if len != expected {
                return Err(FrameError::RasterLength { expected, actual: len });
            }
        }
        Ok(Self { width, height, image, prob })
    }

    fn payload_len(width: u32, height: u32) -> usize {
        2 * width as usize * height as usize * 4
    }

    /// Bitwise equality, so NaN payloads compare equal to themselves.
    pub fn bits_eq(&self, other: &Frame) -> bool {
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        (self.width, self.height) == (other.width, other.height)
            && bits(&self.image) == bits(&other.image)
            && bits(&self.prob) == bits(&other.prob)
    }
}

/// Serializes `frame`.
pub fn encode(frame: &Frame, compression: Compression) -> Vec<u8> {
    encode_parts(frame.width, frame.height, &frame.image, &frame.prob, compression)
}

/// Serializes borrowed rasters without building a [`Frame`].
///
/// # Panics
/// If a raster length differs from `width * height`.
pub fn encode_parts(width: u32, height: u32, image: &[f32], prob: &[f32], compression: Compression) -> Vec<u8> {
    let n = width as usize * height as usize;
    assert!(image.len() == n && prob.len() == n, "raster length must equal width * height");
    let mut raw = Vec::with_capacity(Frame::payload_len(width, height));
    for v in image.iter().chain(prob) {
        raw.extend_from_slice(&v.to_le_bytes());
    }
    let packed = match compression {
        Compression::Never => None,
        Compression::Always => Some(deflate(&raw)),
        Compression::Auto => {
            let z = deflate(&raw);
            ((z.len() as f64) <= raw.len() as f64 * (1.0 - MIN_SAVING)).then_some(z)
        }
    };
    let flags = if packed.is_some() { FLAG_DEFLATE } else { 0 };
    let payload = packed.as_deref().unwrap_or(&raw);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, flags, DTYPE_F32_LE, 0]);
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(payload);
    out
}

fn deflate(raw: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::with_capacity(raw.len() / 2), flate2::Compression::fast());
    enc.write_all(raw).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail")
}

/// Parses and validates a frame.
pub fn decode(bytes: &[u8]) -> Result<Frame, FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::TooShort);
    }
    if &bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic);
    }
    let (version, flags, dtype, reserved) = (bytes[4], bytes[5], bytes[6], bytes[7]);
    if version != VERSION {
        return Err(FrameError::UnsupportedVersion(version));
    }
    if flags & !FLAG_DEFLATE != 0 {
        return Err(FrameError::UnknownFlags(flags));
    }
    if dtype != DTYPE_F32_LE {
        return Err(FrameError::UnsupportedDtype(dtype));
    }
    if reserved != 0 {
        return Err(FrameError::ReservedNonZero(reserved));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    let height = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes"));
    if width == 0 || height == 0 {
        return Err(FrameError::ZeroDimension(width, height));
    }
    let expected = Frame::payload_len(width, height);
    let body = &bytes[HEADER_LEN..];
    let inflated;
    let raw = if flags & FLAG_DEFLATE != 0 {
        let mut out = Vec::with_capacity(expected);
        ZlibDecoder::new(body)
            .take(expected as u64 + 1)
            .read_to_end(&mut out)
            .map_err(|e| FrameError::Inflate(e.to_string()))?;
        inflated = out;
        &inflated[..]
    } else {
        body
    };
    if raw.len() != expected {
        return Err(FrameError::PayloadLength { expected, actual: raw.len() });
    }
    let floats = |b: &[u8]| -> Vec<f32> {
        b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect()
    };
    let (image, prob) = raw.split_at(expected / 2);
    Ok(Frame {
        width,
        height,
        image: floats(image),
        prob: floats(prob),
    })
}

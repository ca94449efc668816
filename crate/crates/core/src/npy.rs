//! Reading and writing 2-D float arrays in the NumPy `.npy` format.
//!
//! Only the subset the toolkit exchanges is supported: format versions 1.0
//! and 2.0, little-endian `<f4` or `<f8`, C order, two dimensions. `<f8`
//! payloads are narrowed to `f32` (round to nearest).

use thiserror::Error;

use crate::raster::{ImageF32, Raster};

pub const NPY_MAGIC: &[u8; 6] = b"\x93NUMPY";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NpyError {
    #[error("missing \\x93NUMPY magic")]
    BadMagic,
    #[error("unsupported npy format version {0}.{1}")]
    UnsupportedVersion(u8, u8),
    #[error("malformed npy header: {0}")]
    MalformedHeader(String),
    #[error("unsupported dtype {0:?}; expected '<f4' or '<f8'")]
    UnsupportedDtype(String),
    #[error("fortran-ordered arrays are not supported")]
    FortranOrderUnsupported,
    #[error("expected a 2-D array with nonzero extents, got shape {0:?}")]
    ShapeNot2D(Vec<usize>),
    #[error("payload truncated: need {expected} bytes, found {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dtype {
    F4,
    F8,
}

#[derive(Debug, PartialEq)]
struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
}

/// Parses an `.npy` byte stream into an image of `shape[1]` x `shape[0]`.
pub fn load_npy(bytes: &[u8]) -> Result<ImageF32, NpyError> {
    if bytes.len() < 10 || &bytes[..6] != NPY_MAGIC {
        return Err(NpyError::BadMagic);
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (header_len, prefix) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 => {
            if bytes.len() < 12 {
                return Err(NpyError::BadMagic);
            }
            (
                u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize,
                12,
            )
        }
        _ => return Err(NpyError::UnsupportedVersion(major, minor)),
    };
    let header_end = prefix + header_len;
    if bytes.len() < header_end {
        return Err(NpyError::MalformedHeader("header runs past end of input".into()));
    }
    let text = std::str::from_utf8(&bytes[prefix..header_end])
        .map_err(|_| NpyError::MalformedHeader("header is not ASCII".into()))?;
    let header = parse_header(text)?;

    let (height, width) = match header.shape[..] {
        [h, w] if h > 0 && w > 0 => (h, w),
        _ => return Err(NpyError::ShapeNot2D(header.shape)),
    };
    let count = height * width;
    let payload = &bytes[header_end..];
    let item = match header.dtype {
        Dtype::F4 => 4,
        Dtype::F8 => 8,
    };
    let expected = count * item;
    if payload.len() < expected {
        return Err(NpyError::TruncatedPayload {
            expected,
            actual: payload.len(),
        });
    }
    let data: Vec<f32> = match header.dtype {
        Dtype::F4 => payload[..expected]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        Dtype::F8 => payload[..expected]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32)
            .collect(),
    };
    Raster::from_vec(width, height, data).map_err(|_| NpyError::ShapeNot2D(vec![height, width]))
}

/// Serializes an image as a version 1.0 `<f4` array of shape `(height, width)`.
pub fn serialize_npy(img: &ImageF32) -> Vec<u8> {
    let dict = format!(
        "{{'descr': '<f4', 'fortran_order': False, 'shape': ({}, {}), }}",
        img.height(),
        img.width()
    );
    // Total header (magic through newline) is padded to a multiple of 64.
    let unpadded = NPY_MAGIC.len() + 4 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + pad + 1;
    let mut out = Vec::with_capacity(10 + header_len + img.len() * 4);
    out.extend_from_slice(NPY_MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat(b' ').take(pad));
    out.push(b'\n');
    for v in img.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Tokens of the Python literal subset used in npy headers.
#[derive(Debug, Clone, PartialEq)]
enum Literal {
    Str(String),
    Bool(bool),
    Int(usize),
    Tuple(Vec<Literal>),
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, what: &str) -> NpyError {
        NpyError::MalformedHeader(format!("{what} at offset {}", self.pos))
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), NpyError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn literal(&mut self) -> Result<Literal, NpyError> {
        match self.peek() {
            Some(q @ (b'\'' | b'"')) => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos] != q {
                    self.pos += 1;
                }
                if self.pos == self.src.len() {
                    return Err(self.err("unterminated string"));
                }
                let s = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
                self.pos += 1;
                Ok(Literal::Str(s))
            }
            Some(b'(') => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                        break;
                    }
                    items.push(self.literal()?);
                    match self.peek() {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {}
                        _ => return Err(self.err("expected ',' or ')'")),
                    }
                }
                Ok(Literal::Tuple(items))
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
                // Python 2 era writers emit long suffixes like `3L`.
                if self.src.get(self.pos) == Some(&b'L') {
                    self.pos += 1;
                }
                let digits = std::str::from_utf8(&self.src[start..self.pos])
                    .unwrap()
                    .trim_end_matches('L');
                digits
                    .parse()
                    .map(Literal::Int)
                    .map_err(|_| self.err("integer out of range"))
            }
            Some(_) => {
                for (word, value) in [("True", true), ("False", false)] {
                    if self.src[self.pos..].starts_with(word.as_bytes()) {
                        self.pos += word.len();
                        return Ok(Literal::Bool(value));
                    }
                }
                Err(self.err("unexpected token"))
            }
            None => Err(self.err("unexpected end")),
        }
    }
}

fn parse_header(text: &str) -> Result<Header, NpyError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    p.expect(b'{')?;
    let (mut descr, mut fortran, mut shape) = (None, None, None);
    loop {
        if p.peek() == Some(b'}') {
            break;
        }
        let key = match p.literal()? {
            Literal::Str(k) => k,
            _ => return Err(p.err("dictionary key must be a string")),
        };
        p.expect(b':')?;
        let value = p.literal()?;
        match (key.as_str(), value) {
            ("descr", Literal::Str(s)) => descr = Some(s),
            ("fortran_order", Literal::Bool(b)) => fortran = Some(b),
            ("shape", Literal::Tuple(items)) => {
                let dims = items
                    .into_iter()
                    .map(|l| match l {
                        Literal::Int(n) => Ok(n),
                        _ => Err(NpyError::MalformedHeader("non-integer shape entry".into())),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                shape = Some(dims);
            }
            (k, _) => return Err(NpyError::MalformedHeader(format!("unexpected entry {k:?}"))),
        }
        match p.peek() {
            Some(b',') => p.pos += 1,
            Some(b'}') => {}
            _ => return Err(p.err("expected ',' or '}'")),
        }
    }
    let descr = descr.ok_or_else(|| NpyError::MalformedHeader("missing descr".into()))?;
    let fortran =
        fortran.ok_or_else(|| NpyError::MalformedHeader("missing fortran_order".into()))?;
    let shape = shape.ok_or_else(|| NpyError::MalformedHeader("missing shape".into()))?;
    let dtype = match descr.as_str() {
        "<f4" => Dtype::F4,
        "<f8" => Dtype::F8,
        _ => return Err(NpyError::UnsupportedDtype(descr)),
    };
    if fortran {
        return Err(NpyError::FortranOrderUnsupported);
    }
    Ok(Header { dtype, shape })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v1(dict: &str, payload: &[u8]) -> Vec<u8> {
        let mut out = NPY_MAGIC.to_vec();
        out.extend_from_slice(&[1, 0]);
        out.extend_from_slice(&((dict.len() + 1) as u16).to_le_bytes());
        out.extend_from_slice(dict.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(payload);
        out
    }

    #[test]
    fn header_parser_accepts_writer_variants() {
        let h = parse_header("{'descr': '<f8', 'fortran_order': False, 'shape': (4L, 5L), }")
            .unwrap();
        assert_eq!(
            h,
            Header {
                dtype: Dtype::F8,
                shape: vec![4, 5]
            }
        );
        let h = parse_header("{\"shape\":(2,3),\"fortran_order\":False,\"descr\":\"<f4\"}")
            .unwrap();
        assert_eq!(h.shape, vec![2, 3]);
    }

    #[test]
    fn error_paths() {
        assert_eq!(load_npy(b"NOTNUMPY!!"), Err(NpyError::BadMagic));
        let f = v1("{'descr': '<f4', 'fortran_order': True, 'shape': (2, 3), }", &[0; 24]);
        assert_eq!(load_npy(&f), Err(NpyError::FortranOrderUnsupported));
        let s = v1("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3, 4), }", &[]);
        assert_eq!(load_npy(&s), Err(NpyError::ShapeNot2D(vec![2, 3, 4])));
        let d = v1("{'descr': '>f4', 'fortran_order': False, 'shape': (1, 1), }", &[0; 4]);
        assert_eq!(load_npy(&d), Err(NpyError::UnsupportedDtype(">f4".into())));
        let t = v1("{'descr': '<f4', 'fortran_order': False, 'shape': (2, 3), }", &[0; 23]);
        assert_eq!(
            load_npy(&t),
            Err(NpyError::TruncatedPayload {
                expected: 24,
                actual: 23
            })
        );
        let z = v1("{'descr': '<f4', 'fortran_order': False, 'shape': (0, 3), }", &[]);
        assert_eq!(load_npy(&z), Err(NpyError::ShapeNot2D(vec![0, 3])));
    }

    #[test]
    fn f8_is_narrowed() {
        let mut payload = Vec::new();
        payload.extend_from_slice(&0.1f64.to_le_bytes());
        let b = v1("{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1), }", &payload);
        assert_eq!(load_npy(&b).unwrap().data(), &[0.1f32]);
    }

    #[test]
    fn version_2_header() {
        let dict = "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2), }\n";
        let mut b = NPY_MAGIC.to_vec();
        b.extend_from_slice(&[2, 0]);
        b.extend_from_slice(&(dict.len() as u32).to_le_bytes());
        b.extend_from_slice(dict.as_bytes());
        b.extend_from_slice(&1.5f32.to_le_bytes());
        b.extend_from_slice(&(-2.0f32).to_le_bytes());
        let img = load_npy(&b).unwrap();
        assert_eq!((img.width(), img.height()), (2, 1));
        assert_eq!(img.data(), &[1.5, -2.0]);
    }

    #[test]
    fn writer_aligns_header() {
        let img = Raster::filled(7, 3, 1.0f32).unwrap();
        let b = serialize_npy(&img);
        let header_len = u16::from_le_bytes([b[8], b[9]]) as usize;
        assert_eq!((10 + header_len) % 64, 0);
        assert_eq!(b[10 + header_len - 1], b'\n');
        assert_eq!(load_npy(&b).unwrap(), img);
    }
}

//! Minimal FITS reader and writer.
//!
//! Covers what the toolkit needs: a 2-D primary image in any of the common
//! BITPIX encodings, opaque pass-through of every following HDU, and
//! appending an 8-bit IMAGE extension that holds a segmentation mask. Every
//! HDU keeps its raw bytes so an unmodified document serializes back to the
//! exact input.

use thiserror::Error;

use crate::raster::{ByteRaster, ImageF32, Raster, RasterError};

/// Size of a FITS logical record.
pub const BLOCK_LEN: usize = 2880;
/// Size of one header card.
pub const CARD_LEN: usize = 80;

/// Extension name used for appended masks unless configured otherwise.
pub const DEFAULT_MASK_EXTNAME: &str = "SEG_MASK";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitsError {
    #[error("not a FITS file: first card is not SIMPLE")]
    MissingMagic,
    #[error("header has no END card")]
    MissingEnd,
    #[error("unsupported BITPIX {0}")]
    UnsupportedBitpix(i64),
    #[error("data block truncated: need {expected} bytes, found {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("image has NAXIS = {0}, expected 2")]
    NaxisNot2(i64),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    DimensionMismatch {
        mask_w: usize,
        mask_h: usize,
        image_w: usize,
        image_h: usize,
    },
    #[error("no IMAGE extension named {0:?}")]
    ExtensionNotFound(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// A parsed header value.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Logical(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn as_int(&self) -> Option<i64> {
        match *self {
            Value::Int(i) => Some(i),
            Value::Float(f) if f.fract() == 0.0 && f.abs() < 9.0e15 => Some(f as i64),
            _ => None,
        }
    }

    pub fn as_float(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(f) => Some(f),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }
}

/// One 80-character header card.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Card([u8; CARD_LEN]);

impl Card {
    fn from_slice(raw: &[u8]) -> Self {
        let mut buf = [b' '; CARD_LEN];
        buf.copy_from_slice(&raw[..CARD_LEN]);
        Card(buf)
    }

    /// Fixed-format card: keyword, value indicator, value and optional comment.
    pub fn new(keyword: &str, value: &Value, comment: Option<&str>) -> Self {
        let mut text = format!("{keyword:<8}= ");
        match value {
            Value::Logical(b) => text.push_str(&format!("{:>20}", if *b { "T" } else { "F" })),
            Value::Int(i) => text.push_str(&format!("{i:>20}")),
            Value::Float(f) => text.push_str(&format!("{:>20}", format_float(*f))),
            Value::Str(s) => {
                let quoted = format!("'{:<8}'", s.replace('\'', "''"));
                text.push_str(&format!("{quoted:<20}"));
            }
        }
        if let Some(c) = comment {
            text.push_str(" / ");
            text.push_str(c);
        }
        Self::from_text(&text)
    }

    /// Card holding only a keyword, such as `END`.
    pub fn keyword_only(keyword: &str) -> Self {
        Self::from_text(keyword)
    }

    fn from_text(text: &str) -> Self {
        let mut buf = [b' '; CARD_LEN];
        for (dst, src) in buf.iter_mut().zip(text.bytes()) {
            *dst = if src.is_ascii() && !src.is_ascii_control() {
                src
            } else {
                b'?'
            };
        }
        Card(buf)
    }

    pub fn as_bytes(&self) -> &[u8; CARD_LEN] {
        &self.0
    }

    pub fn keyword(&self) -> &str {
        std::str::from_utf8(&self.0[..8]).unwrap_or("").trim_end()
    }

    fn has_value(&self) -> bool {
        &self.0[8..10] == b"= "
    }

    pub fn is_end(&self) -> bool {
        &self.0[..8] == b"END     "
    }

    /// Parses the value field, if this is a value card.
    pub fn value(&self) -> Option<Value> {
        if !self.has_value() {
            return None;
        }
        let field = std::str::from_utf8(&self.0[10..]).ok()?;
        let field = field.trim_start();
        if let Some(rest) = field.strip_prefix('\'') {
            let mut out = String::new();
            let mut chars = rest.chars().peekable();
            while let Some(c) = chars.next() {
                if c == '\'' {
                    if chars.peek() == Some(&'\'') {
                        chars.next();
                        out.push('\'');
                    } else {
                        return Some(Value::Str(out.trim_end().to_string()));
                    }
                } else {
                    out.push(c);
                }
            }
            return None;
        }
        let token = field.split('/').next().unwrap_or("").trim();
        match token {
            "T" => Some(Value::Logical(true)),
            "F" => Some(Value::Logical(false)),
            "" => None,
            _ => {
                if let Ok(i) = token.parse::<i64>() {
                    Some(Value::Int(i))
                } else {
                    token.replace(['D', 'd'], "E").parse::<f64>().ok().map(Value::Float)
                }
            }
        }
    }
}

impl std::fmt::Display for Card {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&String::from_utf8_lossy(&self.0))
    }
}

fn format_float(f: f64) -> String {
    let s = format!("{f:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s.replace('e', "E")
    } else {
        format!("{s}.0")
    }
}

/// Ordered header cards, up to and including `END`.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    cards: Vec<Card>,
}

impl Header {
    pub fn cards(&self) -> &[Card] {
        &self.cards
    }

    pub fn get(&self, keyword: &str) -> Option<Value> {
        self.cards
            .iter()
            .find(|c| c.keyword() == keyword && c.has_value())
            .and_then(Card::value)
    }

    fn required_int(&self, keyword: &str) -> Result<i64, FitsError> {
        self.get(keyword)
            .and_then(|v| v.as_int())
            .ok_or_else(|| FitsError::MalformedHeader(format!("missing integer {keyword}")))
    }

    fn float_or(&self, keyword: &str, default: f64) -> f64 {
        self.get(keyword).and_then(|v| v.as_float()).unwrap_or(default)
    }

    /// Axis lengths `NAXIS1..NAXISn`.
    pub fn axes(&self) -> Result<Vec<usize>, FitsError> {
        let naxis = self.required_int("NAXIS")?;
        if !(0..=999).contains(&naxis) {
            return Err(FitsError::MalformedHeader(format!("NAXIS = {naxis}")));
        }
        (1..=naxis)
            .map(|i| {
                let n = self.required_int(&format!("NAXIS{i}"))?;
                usize::try_from(n)
                    .map_err(|_| FitsError::MalformedHeader(format!("NAXIS{i} = {n}")))
            })
            .collect()
    }

    pub fn bitpix(&self) -> Result<i64, FitsError> {
        self.required_int("BITPIX")
    }

    /// Unpadded length of the data block that follows this header.
    fn data_len(&self) -> Result<usize, FitsError> {
        let bitpix = self.bitpix()?;
        if ![8, 16, 32, 64, -32, -64].contains(&bitpix) {
            return Err(FitsError::UnsupportedBitpix(bitpix));
        }
        let axes = self.axes()?;
        if axes.is_empty() {
            return Ok(0);
        }
        let pcount = self.get("PCOUNT").and_then(|v| v.as_int()).unwrap_or(0);
        let gcount = self.get("GCOUNT").and_then(|v| v.as_int()).unwrap_or(1);
        let overflow = || FitsError::MalformedHeader("data size overflows".into());
        let product = axes
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(overflow)?;
        let elements = (product as u128 + pcount.max(0) as u128) * gcount.max(0) as u128;
        let bytes = elements * (bitpix.unsigned_abs() as u128 / 8);
        usize::try_from(bytes).map_err(|_| overflow())
    }
}

/// One header-data unit with its raw bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Hdu {
    header: Header,
    header_bytes: Vec<u8>,
    /// Data block as read, including whatever padding was present.
    data_bytes: Vec<u8>,
    data_len: usize,
}

impl Hdu {
    pub fn header(&self) -> &Header {
        &self.header
    }

    pub fn header_bytes(&self) -> &[u8] {
        &self.header_bytes
    }

    /// The data block without padding.
    pub fn data(&self) -> &[u8] {
        &self.data_bytes[..self.data_len]
    }

    pub fn extname(&self) -> Option<String> {
        self.header.get("EXTNAME").and_then(|v| v.as_str().map(str::to_string))
    }

    pub fn byte_len(&self) -> usize {
        self.header_bytes.len() + self.data_bytes.len()
    }

    /// Decodes this HDU's data as a 2-D image in physical units.
    pub fn image(&self) -> Result<ImageF32, FitsError> {
        let bitpix = self.header.bitpix()?;
        let axes = self.header.axes()?;
        if axes.len() != 2 {
            return Err(FitsError::NaxisNot2(axes.len() as i64));
        }
        let scaling = Scaling {
            bscale: self.header.float_or("BSCALE", 1.0),
            bzero: self.header.float_or("BZERO", 0.0),
            blank: self.header.get("BLANK").and_then(|v| v.as_int()),
        };
        let pixels = decode_pixels(self.data(), bitpix, axes[0] * axes[1], &scaling)?;
        Ok(Raster::from_vec(axes[0], axes[1], pixels)?)
    }
}

struct Scaling {
    bscale: f64,
    bzero: f64,
    blank: Option<i64>,
}

impl Scaling {
    #[inline]
    fn int(&self, stored: i64) -> f32 {
        if self.blank == Some(stored) {
            f32::NAN
        } else {
            (self.bzero + self.bscale * stored as f64) as f32
        }
    }

    #[inline]
    fn float(&self, stored: f64) -> f32 {
        if self.bscale == 1.0 && self.bzero == 0.0 {
            stored as f32
        } else {
            (self.bzero + self.bscale * stored) as f32
        }
    }
}

fn decode_pixels(
    data: &[u8],
    bitpix: i64,
    count: usize,
    scaling: &Scaling,
) -> Result<Vec<f32>, FitsError> {
    let width = match bitpix {
        8 => 1,
        16 => 2,
        32 | -32 => 4,
        -64 => 8,
        other => return Err(FitsError::UnsupportedBitpix(other)),
    };
    let need = count * width;
    if data.len() < need {
        return Err(FitsError::TruncatedData {
            expected: need,
            actual: data.len(),
        });
    }
    let data = &data[..need];
    let out = match bitpix {
        8 => data.iter().map(|&b| scaling.int(b as i64)).collect(),
        16 => data
            .chunks_exact(2)
            .map(|c| scaling.int(i16::from_be_bytes([c[0], c[1]]) as i64))
            .collect(),
        32 => data
            .chunks_exact(4)
            .map(|c| scaling.int(i32::from_be_bytes(c.try_into().unwrap()) as i64))
            .collect(),
        -32 => data
            .chunks_exact(4)
            .map(|c| scaling.float(f32::from_be_bytes(c.try_into().unwrap()) as f64))
            .collect(),
        _ => data
            .chunks_exact(8)
            .map(|c| scaling.float(f64::from_be_bytes(c.try_into().unwrap())))
            .collect(),
    };
    Ok(out)
}

/// A parsed FITS file.
#[derive(Debug, Clone, PartialEq)]
pub struct FitsDocument {
    hdus: Vec<Hdu>,
    /// Bytes after the last recognizable HDU, kept verbatim.
    trailing: Vec<u8>,
    primary_image: Option<ImageF32>,
    bitpix: i64,
    bscale: f64,
    bzero: f64,
}

fn padded(len: usize) -> usize {
    len.div_ceil(BLOCK_LEN) * BLOCK_LEN
}

/// Reads header blocks starting at `offset`. Returns the header and its
/// length in bytes (a whole number of blocks).
fn read_header(bytes: &[u8], offset: usize) -> Result<(Header, usize), FitsError> {
    let mut cards = Vec::new();
    let mut pos = offset;
    loop {
        if pos + BLOCK_LEN > bytes.len() {
            return Err(FitsError::MissingEnd);
        }
        for raw in bytes[pos..pos + BLOCK_LEN].chunks_exact(CARD_LEN) {
            let card = Card::from_slice(raw);
            let end = card.is_end();
            cards.push(card);
            if end {
                return Ok((Header { cards }, pos + BLOCK_LEN - offset));
            }
        }
        pos += BLOCK_LEN;
    }
}

fn read_hdu(bytes: &[u8], offset: usize) -> Result<Hdu, FitsError> {
    let (header, header_len) = read_header(bytes, offset)?;
    let data_len = header.data_len()?;
    let data_start = offset + header_len;
    let available = bytes.len() - data_start;
    if available < data_len {
        return Err(FitsError::TruncatedData {
            expected: data_len,
            actual: available,
        });
    }
    let stored = padded(data_len).min(available);
    Ok(Hdu {
        header,
        header_bytes: bytes[offset..data_start].to_vec(),
        data_bytes: bytes[data_start..data_start + stored].to_vec(),
        data_len,
    })
}

/// Parses a FITS byte stream.
///
/// The primary HDU must be well formed. Following HDUs are parsed as far as
/// they are recognizable; anything after that is retained as trailing bytes.
pub fn load_fits(bytes: &[u8]) -> Result<FitsDocument, FitsError> {
    if bytes.len() < 10 || &bytes[..10] != b"SIMPLE  = " {
        return Err(FitsError::MissingMagic);
    }
    let bitpix = read_header(bytes, 0)?.0.bitpix()?;
    if ![8, 16, 32, -32, -64].contains(&bitpix) {
        return Err(FitsError::UnsupportedBitpix(bitpix));
    }
    let primary = read_hdu(bytes, 0)?;
    let bscale = primary.header.float_or("BSCALE", 1.0);
    let bzero = primary.header.float_or("BZERO", 0.0);
    let primary_image = match primary.header.axes()?.len() {
        2 => Some(primary.image()?),
        _ => None,
    };

    let mut offset = primary.byte_len();
    let mut hdus = vec![primary];
    while offset + BLOCK_LEN <= bytes.len() && bytes[offset..].starts_with(b"XTENSION=") {
        match read_hdu(bytes, offset) {
            Ok(hdu) => {
                offset += hdu.byte_len();
                hdus.push(hdu);
            }
            Err(e) => {
                log::warn!("keeping unparsable extension at byte {offset} verbatim: {e}");
                break;
            }
        }
    }
    Ok(FitsDocument {
        hdus,
        trailing: bytes[offset..].to_vec(),
        primary_image,
        bitpix,
        bscale,
        bzero,
    })
}

impl FitsDocument {
    /// Builds a single-HDU document holding `image` as 32-bit floats.
    pub fn from_image(image: &ImageF32) -> Self {
        let cards = [
            Card::new("SIMPLE", &Value::Logical(true), Some("conforms to FITS standard")),
            Card::new("BITPIX", &Value::Int(-32), Some("IEEE single precision")),
            Card::new("NAXIS", &Value::Int(2), None),
            Card::new("NAXIS1", &Value::Int(image.width() as i64), None),
            Card::new("NAXIS2", &Value::Int(image.height() as i64), None),
            Card::new("EXTEND", &Value::Logical(true), None),
            Card::keyword_only("END"),
        ];
        let mut bytes = header_block(&cards);
        for v in image.data() {
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        bytes.resize(padded(bytes.len()), 0);
        load_fits(&bytes).expect("generated primary HDU is well formed")
    }

    pub fn hdus(&self) -> &[Hdu] {
        &self.hdus
    }

    pub fn primary(&self) -> &Hdu {
        &self.hdus[0]
    }

    pub fn primary_image(&self) -> Option<&ImageF32> {
        self.primary_image.as_ref()
    }

    /// The displayable primary image.
    pub fn image(&self) -> Result<&ImageF32, FitsError> {
        match &self.primary_image {
            Some(img) => Ok(img),
            None => Err(FitsError::NaxisNot2(self.primary().header.axes()?.len() as i64)),
        }
    }

    pub fn into_image(self) -> Result<ImageF32, FitsError> {
        let naxis = self.primary().header.axes()?.len() as i64;
        self.primary_image.ok_or(FitsError::NaxisNot2(naxis))
    }

    pub fn bitpix(&self) -> i64 {
        self.bitpix
    }

    pub fn bscale(&self) -> f64 {
        self.bscale
    }

    pub fn bzero(&self) -> f64 {
        self.bzero
    }

    pub fn trailing(&self) -> &[u8] {
        &self.trailing
    }

    /// Finds an extension by `EXTNAME` and decodes it as a 2-D image.
    pub fn extension_image(&self, extname: &str) -> Result<ImageF32, FitsError> {
        self.hdus[1..]
            .iter()
            .find(|h| h.extname().as_deref() == Some(extname))
            .ok_or_else(|| FitsError::ExtensionNotFound(extname.to_string()))?
            .image()
    }

    /// Serialized length in bytes.
    pub fn byte_len(&self) -> usize {
        self.hdus.iter().map(Hdu::byte_len).sum::<usize>() + self.trailing.len()
    }

    /// Serializes the document. Unmodified documents reproduce their input.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        for hdu in &self.hdus {
            out.extend_from_slice(&hdu.header_bytes);
            out.extend_from_slice(&hdu.data_bytes);
        }
        out.extend_from_slice(&self.trailing);
        out
    }
}

fn header_block(cards: &[Card]) -> Vec<u8> {
    let mut out: Vec<u8> = cards.iter().flat_map(|c| c.0).collect();
    out.resize(padded(out.len()), b' ');
    out
}

/// Returns the original bytes with the mask appended as an 8-bit IMAGE
/// extension. Nonzero mask values are written as 1.
///
/// The extension follows the last parsed HDU. Trailing bytes that could
/// not be parsed as HDUs are kept after it, unchanged.
pub fn write_fits_with_mask(
    original: &FitsDocument,
    mask: &ByteRaster,
    ext_name: &str,
) -> Result<Vec<u8>, FitsError> {
    let image = original.image()?;
    if !image.same_dims(mask) {
        return Err(FitsError::DimensionMismatch {
            mask_w: mask.width(),
            mask_h: mask.height(),
            image_w: image.width(),
            image_h: image.height(),
        });
    }
    let cards = [
        Card::new("XTENSION", &Value::Str("IMAGE".into()), Some("image extension")),
        Card::new("BITPIX", &Value::Int(8), None),
        Card::new("NAXIS", &Value::Int(2), None),
        Card::new("NAXIS1", &Value::Int(mask.width() as i64), None),
        Card::new("NAXIS2", &Value::Int(mask.height() as i64), None),
        Card::new("PCOUNT", &Value::Int(0), None),
        Card::new("GCOUNT", &Value::Int(1), None),
        Card::new("EXTNAME", &Value::Str(ext_name.to_string()), Some("segmentation mask")),
        Card::keyword_only("END"),
    ];
    let mut out = Vec::with_capacity(original.byte_len() + 2 * BLOCK_LEN + mask.len());
    for hdu in &original.hdus {
        out.extend_from_slice(&hdu.header_bytes);
        out.extend_from_slice(&hdu.data_bytes);
    }
    // Files that ended without their final padding get it now.
    out.resize(padded(out.len()), 0);
    out.extend_from_slice(&header_block(&cards));
    out.extend(mask.data().iter().map(|&v| u8::from(v != 0)));
    out.resize(padded(out.len()), 0);
    // Unrecognized trailing bytes stay last so the mask remains reachable.
    out.extend_from_slice(&original.trailing);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header(cards: &[Card]) -> Vec<u8> {
        header_block(cards)
    }

    fn image_header(bitpix: i64, w: i64, h: i64, extra: &[Card]) -> Vec<u8> {
        let mut cards = vec![
            Card::new("SIMPLE", &Value::Logical(true), None),
            Card::new("BITPIX", &Value::Int(bitpix), None),
            Card::new("NAXIS", &Value::Int(2), None),
            Card::new("NAXIS1", &Value::Int(w), None),
            Card::new("NAXIS2", &Value::Int(h), None),
        ];
        cards.extend_from_slice(extra);
        cards.push(Card::keyword_only("END"));
        header(&cards)
    }

    #[test]
    fn card_layout_is_fixed_format() {
        let c = Card::new("NAXIS1", &Value::Int(3), None);
        assert_eq!(&c.to_string()[..30], "NAXIS1  =                    3");
        let s = Card::new("EXTNAME", &Value::Str("SEG_MASK".into()), None);
        assert_eq!(&s.to_string()[..20], "EXTNAME = 'SEG_MASK'");
        let short = Card::new("XTENSION", &Value::Str("IMAGE".into()), None);
        assert_eq!(&short.to_string()[..20], "XTENSION= 'IMAGE   '");
        assert_eq!(short.value(), Some(Value::Str("IMAGE".into())));
    }

    #[test]
    fn parses_values() {
        let c = Card::from_text("BSCALE  =              1.5D+00 / scale");
        assert_eq!(c.value(), Some(Value::Float(1.5)));
        let c = Card::from_text("OBJECT  = 'it''s    '");
        assert_eq!(c.value(), Some(Value::Str("it's".into())));
        let c = Card::from_text("COMMENT hello = world");
        assert_eq!(c.value(), None);
    }

    #[test]
    fn bitpix16_with_bzero_offsets_stored_values() {
        let mut bytes = image_header(
            16,
            1,
            1,
            &[
                Card::new("BSCALE", &Value::Float(1.0), None),
                Card::new("BZERO", &Value::Float(32768.0), None),
            ],
        );
        bytes.extend_from_slice(&(-32768i16).to_be_bytes());
        bytes.resize(padded(bytes.len()), 0);
        let doc = load_fits(&bytes).unwrap();
        assert_eq!(doc.image().unwrap().data(), &[0.0]);
        assert_eq!(doc.bzero(), 32768.0);
    }

    #[test]
    fn integer_blank_becomes_nan() {
        let mut bytes = image_header(32, 2, 1, &[Card::new("BLANK", &Value::Int(-1), None)]);
        bytes.extend_from_slice(&(-1i32).to_be_bytes());
        bytes.extend_from_slice(&7i32.to_be_bytes());
        bytes.resize(padded(bytes.len()), 0);
        let img = load_fits(&bytes).unwrap().into_image().unwrap();
        assert!(img.data()[0].is_nan());
        assert_eq!(img.data()[1], 7.0);
    }

    #[test]
    fn all_supported_bitpix_decode() {
        let cases: [(i64, Vec<u8>, f32); 5] = [
            (8, vec![200], 200.0),
            (16, (-5i16).to_be_bytes().to_vec(), -5.0),
            (32, 70000i32.to_be_bytes().to_vec(), 70000.0),
            (-32, 2.5f32.to_be_bytes().to_vec(), 2.5),
            (-64, (-0.25f64).to_be_bytes().to_vec(), -0.25),
        ];
        for (bitpix, data, expect) in cases {
            let mut bytes = image_header(bitpix, 1, 1, &[]);
            bytes.extend_from_slice(&data);
            bytes.resize(padded(bytes.len()), 0);
            let doc = load_fits(&bytes).unwrap();
            assert_eq!(doc.image().unwrap().data(), &[expect], "BITPIX {bitpix}");
        }
    }

    #[test]
    fn error_paths() {
        assert_eq!(load_fits(b"hello world"), Err(FitsError::MissingMagic));
        assert_eq!(load_fits(&[]), Err(FitsError::MissingMagic));

        let no_end = header(&[
            Card::new("SIMPLE", &Value::Logical(true), None),
            Card::new("BITPIX", &Value::Int(8), None),
            Card::new("NAXIS", &Value::Int(0), None),
        ]);
        assert_eq!(load_fits(&no_end), Err(FitsError::MissingEnd));

        let bytes = image_header(64, 1, 1, &[]);
        assert_eq!(load_fits(&bytes), Err(FitsError::UnsupportedBitpix(64)));

        let mut bytes = image_header(-32, 3, 2, &[]);
        bytes.extend_from_slice(&[0; 20]);
        assert_eq!(
            load_fits(&bytes),
            Err(FitsError::TruncatedData {
                expected: 24,
                actual: 20
            })
        );
    }

    #[test]
    fn non_2d_primary_loads_but_has_no_image() {
        let bytes = header(&[
            Card::new("SIMPLE", &Value::Logical(true), None),
            Card::new("BITPIX", &Value::Int(8), None),
            Card::new("NAXIS", &Value::Int(0), None),
            Card::keyword_only("END"),
        ]);
        let doc = load_fits(&bytes).unwrap();
        assert_eq!(doc.image(), Err(FitsError::NaxisNot2(0)));
        assert_eq!(doc.to_bytes(), bytes);
    }

    #[test]
    fn mask_append_layout() {
        let img = Raster::from_vec(3, 2, vec![1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let doc = FitsDocument::from_image(&img);
        let original = doc.to_bytes();
        let mask = Raster::from_vec(3, 2, vec![1u8, 0, 0, 0, 1, 0]).unwrap();
        let out = write_fits_with_mask(&doc, &mask, DEFAULT_MASK_EXTNAME).unwrap();
        assert_eq!(out.len() % BLOCK_LEN, 0);
        assert_eq!(&out[..original.len()], &original[..]);
        let data_start = original.len() + BLOCK_LEN;
        assert_eq!(&out[data_start..data_start + 6], &[1, 0, 0, 0, 1, 0]);
        assert!(out[data_start + 6..].iter().all(|&b| b == 0));
        assert_eq!(out.len(), data_start + BLOCK_LEN);

        let back = load_fits(&out).unwrap();
        assert_eq!(back.hdus().len(), 2);
        let ext = back.extension_image(DEFAULT_MASK_EXTNAME).unwrap();
        assert_eq!(ext.data(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(back.to_bytes(), out);
    }

    #[test]
    fn mask_dimension_mismatch() {
        let img = Raster::filled(3, 2, 0.0f32).unwrap();
        let doc = FitsDocument::from_image(&img);
        let mask = Raster::filled(2, 3, 0u8).unwrap();
        assert!(matches!(
            write_fits_with_mask(&doc, &mask, "M"),
            Err(FitsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn unpadded_tail_is_preserved_and_padded_on_append() {
        let mut bytes = image_header(-32, 1, 1, &[]);
        bytes.extend_from_slice(&1.0f32.to_be_bytes());
        let doc = load_fits(&bytes).unwrap();
        assert_eq!(doc.to_bytes(), bytes);
        let mask = Raster::filled(1, 1, 1u8).unwrap();
        let out = write_fits_with_mask(&doc, &mask, "M").unwrap();
        assert_eq!(&out[..bytes.len()], &bytes[..]);
        assert_eq!(out.len(), 4 * BLOCK_LEN);
    }
}

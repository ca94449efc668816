//! Hand-assembled FITS and NPY byte streams.

use rand::rngs::StdRng;
use rand::Rng;

pub const BLOCK: usize = 2880;

/// Fixed-format header card.
pub fn card(key: &str, value: &str) -> String {
    let s = if value.starts_with('\'') {
        format!("{key:<8}= {value:<20}")
    } else {
        format!("{key:<8}= {value:>20}")
    };
    format!("{s:<80}")
}

/// Commentary card without a value indicator.
pub fn text_card(key: &str, text: &str) -> String {
    format!("{:<80}", format!("{key:<8}{text}"))
}

/// Header bytes padded with spaces to whole blocks. `END` is appended.
pub fn header(cards: &[String]) -> Vec<u8> {
    let mut s: String = cards.concat();
    s.push_str(&format!("{:<80}", "END"));
    let mut b = s.into_bytes();
    let n = b.len().div_ceil(BLOCK) * BLOCK;
    b.resize(n, b' ');
    b
}

/// Appends `data` zero-padded to whole blocks.
pub fn push_data(out: &mut Vec<u8>, data: &[u8], pad: bool) {
    out.extend_from_slice(data);
    if pad {
        let n = out.len().div_ceil(BLOCK) * BLOCK;
        out.resize(n, 0);
    }
}

/// Big-endian pixel payload of `n` random values for `bitpix`. Float
/// payloads sprinkle in NaN.
pub fn random_payload(rng: &mut StdRng, bitpix: i64, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n * (bitpix.unsigned_abs() as usize / 8));
    for _ in 0..n {
        match bitpix {
            8 => out.push(rng.gen()),
            16 => out.extend_from_slice(&rng.gen::<i16>().to_be_bytes()),
            32 => out.extend_from_slice(&rng.gen::<i32>().to_be_bytes()),
            -32 => {
                let v = if rng.gen_bool(0.02) { f32::NAN } else { rng.gen_range(-1e4f32..1e5) };
                out.extend_from_slice(&v.to_be_bytes());
            }
            -64 => {
                let v = if rng.gen_bool(0.02) { f64::NAN } else { rng.gen_range(-1e4..1e5) };
                out.extend_from_slice(&v.to_be_bytes());
            }
            _ => panic!("unsupported bitpix {bitpix}"),
        }
    }
    out
}

/// Primary image header cards for a `w` x `h` image.
pub fn primary_cards(bitpix: i64, w: usize, h: usize) -> Vec<String> {
    vec![
        card("SIMPLE", "T"),
        card("BITPIX", &bitpix.to_string()),
        card("NAXIS", "2"),
        card("NAXIS1", &w.to_string()),
        card("NAXIS2", &h.to_string()),
    ]
}

/// A FITS file with a float primary image holding `pixels`.
pub fn simple_fits(w: usize, h: usize, pixels: &[f32]) -> Vec<u8> {
    let mut out = header(&primary_cards(-32, w, h));
    let data: Vec<u8> = pixels.iter().flat_map(|v| v.to_be_bytes()).collect();
    push_data(&mut out, &data, true);
    out
}

/// At least 20 structurally varied FITS files: every supported BITPIX,
/// scaling keywords, BLANK, commentary cards, image and table extensions,
/// an unknown extension, a non-image primary, a missing final padding and
/// trailing bytes.
pub fn fits_corpus(rng: &mut StdRng) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    for (i, &bitpix) in [8i64, 16, 32, -32, -64].iter().enumerate() {
        let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..40));
        let mut out = header(&primary_cards(bitpix, w, h));
        push_data(&mut out, &random_payload(rng, bitpix, w * h), true);
        files.push((format!("plain_bitpix{bitpix}"), out));

        let mut cards = primary_cards(bitpix, w, h);
        cards.push(card("BSCALE", "2.5"));
        cards.push(card("BZERO", if bitpix == 16 { "32768" } else { "-1.5E2" }));
        if bitpix > 0 {
            cards.push(card("BLANK", "7"));
        }
        cards.push(card("OBJECT", "'M31 field'"));
        cards.push(text_card("COMMENT", "generated test file"));
        cards.push(text_card("HISTORY", &format!("variant {i}")));
        let mut out = header(&cards);
        push_data(&mut out, &random_payload(rng, bitpix, w * h), true);
        files.push((format!("scaled_bitpix{bitpix}"), out));

        let mut cards = primary_cards(bitpix, w, h);
        cards.push(card("EXTEND", "T"));
        let mut out = header(&cards);
        push_data(&mut out, &random_payload(rng, bitpix, w * h), true);
        let (ew, eh) = (rng.gen_range(1..20), rng.gen_range(1..20));
        out.extend(header(&[
            card("XTENSION", "'IMAGE   '"),
            card("BITPIX", "16"),
            card("NAXIS", "2"),
            card("NAXIS1", &ew.to_string()),
            card("NAXIS2", &eh.to_string()),
            card("PCOUNT", "0"),
            card("GCOUNT", "1"),
            card("EXTNAME", "'SCI2'"),
        ]));
        push_data(&mut out, &random_payload(rng, 16, ew * eh), true);
        files.push((format!("ext_bitpix{bitpix}"), out));

        let mut out = header(&primary_cards(bitpix, w, h));
        push_data(&mut out, &random_payload(rng, bitpix, w * h), false);
        files.push((format!("unpadded_bitpix{bitpix}"), out));
    }

    let (w, h) = (17, 9);
    let mut out = header(&primary_cards(-32, w, h));
    push_data(&mut out, &random_payload(rng, -32, w * h), true);
    let rows = 3;
    out.extend(header(&[
        card("XTENSION", "'BINTABLE'"),
        card("BITPIX", "8"),
        card("NAXIS", "2"),
        card("NAXIS1", "8"),
        card("NAXIS2", &rows.to_string()),
        card("PCOUNT", "10"),
        card("GCOUNT", "1"),
        card("TFIELDS", "1"),
        card("TFORM1", "'1D      '"),
    ]));
    push_data(&mut out, &random_payload(rng, 8, 8 * rows + 10), true);
    out.extend(header(&[
        card("XTENSION", "'FOOBAR  '"),
        card("BITPIX", "8"),
        card("NAXIS", "1"),
        card("NAXIS1", "5"),
        card("PCOUNT", "0"),
        card("GCOUNT", "1"),
    ]));
    push_data(&mut out, b"abcde", true);
    files.push(("bintable_and_unknown".into(), out));

    let mut out = header(&[
        card("SIMPLE", "T"),
        card("BITPIX", "16"),
        card("NAXIS", "3"),
        card("NAXIS1", "4"),
        card("NAXIS2", "3"),
        card("NAXIS3", "2"),
    ]);
    push_data(&mut out, &random_payload(rng, 16, 24), true);
    files.push(("cube_primary".into(), out));

    let mut out = header(&primary_cards(-32, 5, 4));
    push_data(&mut out, &random_payload(rng, -32, 20), true);
    out.extend_from_slice(b"trailing bytes that are not a header");
    files.push(("trailing_junk".into(), out));

    let mut cards = primary_cards(-32, 3, 3);
    cards.extend((0..80).map(|i| card(&format!("KEY{i}"), &(i * 3).to_string())));
    let mut out = header(&cards);
    push_data(&mut out, &random_payload(rng, -32, 9), true);
    files.push(("multi_block_header".into(), out));

    files
}

/// NPY stream with an arbitrary header dictionary, padded like NumPy
/// does (total header length a multiple of 64).
pub fn npy_raw(version: u8, dict: &str, payload: &[u8]) -> Vec<u8> {
    let prefix = if version == 1 { 10 } else { 12 };
    let total = (prefix + dict.len() + 1).div_ceil(64) * 64;
    let hlen = total - prefix;
    let mut out = b"\x93NUMPY".to_vec();
    out.push(version);
    out.push(0);
    if version == 1 {
        out.extend_from_slice(&(hlen as u16).to_le_bytes());
    } else {
        out.extend_from_slice(&(hlen as u32).to_le_bytes());
    }
    out.extend_from_slice(dict.as_bytes());
    out.resize(total - 1, b' ');
    out.push(b'\n');
    out.extend_from_slice(payload);
    out
}

pub fn npy_bytes(version: u8, descr: &str, h: usize, w: usize, payload: &[u8]) -> Vec<u8> {
    let dict = format!("{{'descr': '{descr}', 'fortran_order': False, 'shape': ({h}, {w}), }}");
    npy_raw(version, &dict, payload)
}

/// Canonical `<f4` version 1.0 files as NumPy writes them.
pub fn npy_corpus(rng: &mut StdRng) -> Vec<(String, Vec<u8>)> {
    let mut shapes = vec![(1usize, 1usize), (2, 3), (3, 2), (1, 100), (100, 1), (64, 64)];
    for _ in 0..14 {
        shapes.push((rng.gen_range(1..80), rng.gen_range(1..80)));
    }
    shapes
        .into_iter()
        .map(|(h, w)| {
            let payload: Vec<u8> = (0..w * h)
                .flat_map(|_| {
                    let v = match rng.gen_range(0..20) {
                        0 => f32::NAN,
                        1 => f32::INFINITY,
                        2 => -0.0,
                        _ => rng.gen_range(-1e6f32..1e6),
                    };
                    v.to_le_bytes()
                })
                .collect();
            (format!("npy_{h}x{w}"), npy_bytes(1, "<f4", h, w, &payload))
        })
        .collect()
}

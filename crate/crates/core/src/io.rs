//! File formats: binary PGM for viewing, the `LVAE` raw record format for
//! datasets and checkpoints of fields, and `key=value` sidecar text.
//!
//! Raw record layout (little-endian):
//!
//! ```text
//! "LVAE" | version u32 | count u32 | height u32 | width u32 | bytes_per_value u32
//! count * height * width binary32 values, row-major, records back to back
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field2D;

pub const RAW_MAGIC: &[u8; 4] = b"LVAE";
pub const RAW_VERSION: u32 = 1;
const RAW_HEADER_LEN: usize = 24;
/// Refuse to allocate images beyond this many pixels.
const MAX_PIXELS: usize = 1 << 28;

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::file(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let f = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).map_err(|e| Error::file(path, e))?;
    w.flush().map_err(|e| Error::file(path, e))
}

/// Encodes a field as 8-bit P5 with maxval 255, `round(255 * clamp(v, 0, 1))`.
pub fn encode_pgm(img: &Field2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(
        img.data()
            .iter()
            .map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8),
    );
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Field2D> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::MalformedHeader(format!(
            "expected P5 magic, found {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let width = parse_header_number(bytes, &mut pos, "width")?;
    let height = parse_header_number(bytes, &mut pos, "height")?;
    let maxval = parse_header_number(bytes, &mut pos, "maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::MalformedHeader(format!(
            "maxval {maxval} unsupported (8-bit only)"
        )));
    }
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("empty image {width}x{height}")));
    }
    let pixels = width
        .checked_mul(height)
        .filter(|&n| n <= MAX_PIXELS)
        .ok_or_else(|| Error::DimensionOverflow(format!("{width}x{height}")))?;
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("missing whitespace after maxval".into())),
    }
    let payload = &bytes[pos..];
    if payload.len() < pixels {
        return Err(Error::TruncatedPayload {
            expected: pixels,
            found: payload.len(),
        });
    }
    let scale = maxval as f64;
    let data = payload[..pixels].iter().map(|&b| b as f64 / scale).collect();
    Field2D::new(width, height, data)
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        if bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
        } else if bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::MalformedHeader("unexpected end of header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    let s = std::str::from_utf8(tok)
        .map_err(|_| Error::MalformedHeader(format!("{what} is not ASCII")))?;
    if !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::MalformedHeader(format!("{what} `{s}` is not a number")));
    }
    s.parse::<usize>()
        .map_err(|_| Error::DimensionOverflow(format!("{what} `{s}`")))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Field2D) -> Result<()> {
    write_file(path.as_ref(), &encode_pgm(img))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Field2D> {
    decode_pgm(&read_file(path.as_ref())?)
}

/// Serializes equally shaped records into the raw format.
pub fn encode_raw(records: &[Field2D]) -> Result<Vec<u8>> {
    let first = records
        .first()
        .ok_or_else(|| Error::param("records", "at least one record is required"))?;
    let (h, w) = (first.height(), first.width());
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::DimensionOverflow(format!("{what} {v}")))
    };
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + records.len() * h * w * 4);
    out.extend_from_slice(RAW_MAGIC);
    for v in [
        RAW_VERSION,
        to_u32(records.len(), "record count")?,
        to_u32(h, "height")?,
        to_u32(w, "width")?,
        4,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for rec in records {
        first.expect_shape(rec)?;
        for &v in rec.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<Vec<Field2D>> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "raw header needs {RAW_HEADER_LEN} bytes, found {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != RAW_MAGIC {
        return Err(Error::MalformedHeader("bad magic, expected LVAE".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let (version, count, height, width, bpv) = (word(0), word(1), word(2), word(3), word(4));
    if version != RAW_VERSION {
        return Err(Error::MalformedHeader(format!("unsupported version {version}")));
    }
    if bpv != 4 {
        return Err(Error::MalformedHeader(format!("unsupported bytes-per-value {bpv}")));
    }
    if height == 0 || width == 0 {
        return Err(Error::MalformedHeader(format!("empty record {height}x{width}")));
    }
    let (count, height, width) = (count as usize, height as usize, width as usize);
    let per_record = height
        .checked_mul(width)
        .filter(|&n| n <= MAX_PIXELS)
        .ok_or_else(|| Error::DimensionOverflow(format!("{height}x{width}")))?;
    let expected = per_record
        .checked_mul(count)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::DimensionOverflow(format!("{count} records of {per_record}")))?;
    let payload = &bytes[RAW_HEADER_LEN..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    payload[..expected]
        .chunks_exact(per_record * 4)
        .map(|chunk| {
            let data = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            Field2D::new(width, height, data)
        })
        .collect()
}

pub fn write_raw(path: impl AsRef<Path>, records: &[Field2D]) -> Result<()> {
    write_file(path.as_ref(), &encode_raw(records)?)
}

pub fn read_raw(path: impl AsRef<Path>) -> Result<Vec<Field2D>> {
    decode_raw(&read_file(path.as_ref())?)
}

/// Writes `key=value` lines in the given order.
pub fn write_key_values(path: impl AsRef<Path>, entries: &[(String, String)]) -> Result<()> {
    let mut text = String::new();
    for (k, v) in entries {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    write_file(path.as_ref(), text.as_bytes())
}

pub fn read_key_values(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = String::from_utf8(read_file(path)?)
        .map_err(|_| Error::MalformedHeader(format!("{} is not UTF-8", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| Error::MalformedHeader(format!("line without `=`: {l}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_of_ones_is_255() {
        let bytes = encode_pgm(&Field2D::filled(3, 2, 1.0));
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert!(bytes[bytes.len() - 6..].iter().all(|&b| b == 255));
    }

    #[test]
    fn pgm_round_trip_within_quantization() {
        let img = Field2D::from_fn(5, 4, |r, c| ((r * 5 + c) as f64 / 19.0).min(1.0));
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        assert!(img.max_abs_diff(&back).unwrap() <= 0.5 / 255.0 + 1e-12);
    }

    #[test]
    fn pgm_header_with_comments() {
        let mut bytes = b"P5 # comment\n2 # w\n1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_errors_are_distinct() {
        assert!(matches!(
            decode_pgm(b"P2\n1 1\n255\n0"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n4 4\n255\n\x00\x00"),
            Err(Error::TruncatedPayload { expected: 16, found: 2 })
        ));
        assert!(matches!(
            decode_pgm(b"P5\n99999999999 99999999999\n255\n"),
            Err(Error::DimensionOverflow(_))
        ));
        assert!(matches!(
            decode_pgm(b"P5\n1 1\n65535\n\x00\x00"),
            Err(Error::MalformedHeader(_))
        ));
    }

    #[test]
    fn raw_round_trip_three_records() {
        let recs: Vec<Field2D> = (0..3)
            .map(|k| Field2D::from_fn(4, 2, |r, c| (k * 8 + r * 4 + c) as f64 * 0.25))
            .collect();
        let bytes = encode_raw(&recs).unwrap();
        assert_eq!(&bytes[..4], b"LVAE");
        assert_eq!(bytes.len(), 24 + 3 * 8 * 4);
        let back = decode_raw(&bytes).unwrap();
        assert_eq!(back, recs);
        assert_eq!(encode_raw(&back).unwrap(), bytes);
    }

    #[test]
    fn raw_errors_are_distinct() {
        let recs = vec![Field2D::zeros(2, 2)];
        let bytes = encode_raw(&recs).unwrap();
        assert!(matches!(
            decode_raw(&bytes[..10]),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(
            decode_raw(&bytes[..bytes.len() - 1]),
            Err(Error::TruncatedPayload { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_raw(&bad), Err(Error::MalformedHeader(_))));
        let mut huge = bytes.clone();
        huge[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[16..20].copy_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(decode_raw(&huge), Err(Error::DimensionOverflow(_))));
        assert!(encode_raw(&[Field2D::zeros(2, 2), Field2D::zeros(3, 2)]).is_err());
    }

    #[test]
    fn key_values_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("params.txt");
        let kv = vec![
            ("epsilon".to_string(), "4".to_string()),
            ("dt".to_string(), "0.5".to_string()),
        ];
        write_key_values(&p, &kv).unwrap();
        assert_eq!(read_key_values(&p).unwrap(), kv);
    }
}

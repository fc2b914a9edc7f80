//! Binary PGM (P5). Writes 16-bit samples; reads 8- or 16-bit.

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::measurement::SceneImage;

const MAXVAL: f64 = 65535.0;

pub fn encode_pgm(img: &SceneImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", img.width(), img.height()).into_bytes();
    out.reserve(2 * img.len());
    for v in img.pixels() {
        let q = (v * MAXVAL).round().clamp(0.0, MAXVAL) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let corrupt = |offset: usize, reason: &str| Error::Corrupt {
        offset: offset as u64,
        reason: reason.into(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(corrupt(0, "not a binary PGM (missing P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(corrupt(pos, "truncated header")),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if start == pos {
            return Err(corrupt(pos, "expected a number in the header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt(start, "header number out of range"))?;
    }
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(corrupt(pos, "missing whitespace after maxval")),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(corrupt(0, "zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(corrupt(0, "maxval must be in 1..=65535"));
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_offset: pos,
    })
}

/// Decodes a P5 image, mapping samples to `value / maxval`.
pub fn decode_pgm(bytes: &[u8]) -> Result<SceneImage> {
    let h = parse_header(bytes)?;
    let wide = h.maxval > 255;
    let sample = if wide { 2 } else { 1 };
    let need = h.width * h.height * sample;
    let data = &bytes[h.data_offset..];
    if data.len() < need {
        return Err(Error::Corrupt {
            offset: bytes.len() as u64,
            reason: format!("expected {need} bytes of pixel data, found {}", data.len()),
        });
    }
    let maxval = h.maxval as f64;
    let pixels: Vec<f64> = if wide {
        data[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / maxval)
            .collect()
    } else {
        data[..need].iter().map(|&b| b as f64 / maxval).collect()
    };
    if pixels.iter().any(|v| *v > 1.0) {
        return Err(Error::Corrupt {
            offset: h.data_offset as u64,
            reason: "sample exceeds maxval".into(),
        });
    }
    SceneImage::new(h.height, h.width, pixels)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<SceneImage> {
    let path = path.as_ref();
    decode_pgm(&read_bytes(path)?).map_err(|e| e.at(path.display().to_string()))
}

pub fn write_pgm(path: impl AsRef<Path>, img: &SceneImage) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(img))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_quantization() {
        let img = SceneImage::new(3, 5, (0..15).map(|i| (i as f64 * 0.731).fract()).collect()).unwrap();
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        assert_eq!((back.height(), back.width()), (3, 5));
        let worst = img
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 65535.0);
    }

    #[test]
    fn reads_8bit_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 255]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn truncated_pixels_are_corrupt() {
        let img = SceneImage::constant(4, 4, 0.5).unwrap();
        let bytes = encode_pgm(&img);
        let err = decode_pgm(&bytes[..bytes.len() - 3]).unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }));
        assert!(matches!(decode_pgm(b"P6\n1 1\n255\n\0"), Err(Error::Corrupt { offset: 0, .. })));
    }
}

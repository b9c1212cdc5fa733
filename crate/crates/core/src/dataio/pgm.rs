//! Binary (P5) grayscale PGM images, scaled to `[0, 1]` on load.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Decodes a P5 image into an `[H, W, 1]` tensor.
pub fn decode_pgm(bytes: &[u8], origin: &str) -> Result<Tensor> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        // skip whitespace and comments
        while pos < bytes.len() {
            match bytes[pos] {
                b'#' => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(origin, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if fields[0] != "P5" {
        return Err(Error::parse(origin, format!("expected P5 magic, got `{}`", fields[0])));
    }
    let num = |s: &str, what: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::parse(origin, format!("bad {what} `{s}`")))
    };
    let (w, h, maxval) = (num(&fields[1], "width")?, num(&fields[2], "height")?, num(&fields[3], "maxval")?);
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::parse(origin, format!("unsupported PGM {w}x{h} maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let depth = if maxval < 256 { 1 } else { 2 };
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() < w * h * depth {
        return Err(Error::parse(origin, "truncated PGM raster"));
    }
    let scale = maxval as f64;
    let data = (0..w * h)
        .map(|i| {
            let v = if depth == 1 {
                raster[i] as f64
            } else {
                u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as f64
            };
            (v / scale).min(1.0)
        })
        .collect();
    Tensor::new(vec![h, w, 1], data)
}

/// Encodes the first channel of an `[H, W, C]` tensor as 8-bit P5.
pub fn encode_pgm(pixels: &Tensor) -> Result<Vec<u8>> {
    let s = pixels.shape();
    if s.len() != 3 {
        return Err(Error::shape("encode_pgm", format!("expected [H, W, C], got {s:?}")));
    }
    let (h, w, c) = (s[0], s[1], s[2]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        pixels
            .data()
            .iter()
            .step_by(c)
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

pub fn read_pgm(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes, &path.display().to_string())
}

pub fn write_pgm(path: &Path, pixels: &Tensor) -> Result<()> {
    std::fs::write(path, encode_pgm(pixels)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_with_comments_and_scales() {
        let mut bytes = b"P5\n# a comment\n3 2\n255\n".to_vec();
        bytes.extend([0u8, 51, 255, 102, 153, 204]);
        let t = decode_pgm(&bytes, "x").unwrap();
        assert_eq!(t.shape(), &[2, 3, 1]);
        assert_eq!(t.data(), &[0.0, 0.2, 1.0, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn sixteen_bit_big_endian() {
        let mut bytes = b"P5 1 1 65535\n".to_vec();
        bytes.extend([0x80, 0x00]);
        let t = decode_pgm(&bytes, "x").unwrap();
        assert!((t.data()[0] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn round_trip_of_quantized_pixels() {
        let data: Vec<f64> = (0..12).map(|i| (i * 20) as f64 / 255.0).collect();
        let t = Tensor::new(vec![3, 4, 1], data).unwrap();
        assert_eq!(decode_pgm(&encode_pgm(&t).unwrap(), "x").unwrap(), t);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0", "x").is_err());
        assert!(decode_pgm(b"P5\n2 2\n255\n\x00", "x").is_err());
        assert!(decode_pgm(b"P5\n2", "x").is_err());
    }
}

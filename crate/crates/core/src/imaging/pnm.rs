//! Binary PPM (P6) and PGM (P5) reader and writer, 8-bit only.
//!
//! Reading maps byte `v` to `v / 255`. Writing clamps to `[0, 1]` and
//! quantizes round-half-up to a byte. Parse failures report the byte offset
//! where scanning stopped; a truncated raster never yields a partial image.

use std::path::Path;

use super::{FieldImage, Image};
use crate::error::{Error, Result};

struct Scanner<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::PnmParse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Option<u8> {
        let b = self.bytes.get(self.pos).copied();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    /// Skip whitespace and `#` comments that run to end of line.
    fn skip_separators(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
    }

    fn read_number(&mut self, what: &str) -> Result<usize> {
        self.skip_separators();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| b.is_ascii_digit())
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err(format!("expected {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("ascii digits");
        text.parse::<usize>()
            .map_err(|_| self.err(format!("{what} out of range")))
    }
}

/// Parse a binary PPM/PGM byte stream into an [`Image`].
pub fn parse_pnm(bytes: &[u8]) -> Result<Image> {
    let mut s = Scanner { bytes, pos: 0 };
    let magic = (s.next(), s.next());
    let channels = match magic {
        (Some(b'P'), Some(b'5')) => 1,
        (Some(b'P'), Some(b'6')) => 3,
        _ => {
            s.pos = 0;
            return Err(s.err("expected magic P5 or P6"));
        }
    };
    let width = s.read_number("width")?;
    let height = s.read_number("height")?;
    if width == 0 || height == 0 {
        return Err(s.err(format!("degenerate dimensions {width}x{height}")));
    }
    let maxval_at = {
        s.skip_separators();
        s.pos
    };
    let maxval = s.read_number("maxval")?;
    if maxval != 255 {
        return Err(Error::PnmParse {
            offset: maxval_at,
            message: format!("unsupported maxval {maxval}, only 255 is supported"),
        });
    }
    match s.next() {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => {
            s.pos = s.pos.saturating_sub(1);
            return Err(s.err("expected single whitespace before raster"));
        }
    }
    let expected = width * height * channels;
    let raster = &s.bytes[s.pos.min(s.bytes.len())..];
    if raster.len() < expected {
        s.pos = s.bytes.len();
        return Err(s.err(format!(
            "truncated raster: expected {expected} bytes, found {}",
            raster.len()
        )));
    }
    let pixels = raster[..expected].iter().map(|&b| b as f64 / 255.0).collect();
    Image::new(width, height, channels, pixels)
}

/// Read a PPM/PGM file.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    parse_pnm(&bytes)
}

/// Quantize a unit-range value to a byte, rounding half up.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encode an image as binary PGM (1 channel) or PPM (3 channels).
pub fn encode(img: &Image) -> Vec<u8> {
    let (width, height, channels) = img.shape();
    let magic = if channels == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{width} {height}\n255\n").into_bytes();
    out.extend(img.pixels().iter().map(|&v| quantize(v)));
    out
}

/// Write an [`Image`] as binary PPM (3 channels) or PGM (1 channel).
pub fn write_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(img))?;
    Ok(())
}

/// Write a [`FieldImage`], clamping to `[0, 1]` first.
pub fn write_field_image(field: &FieldImage, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(&field.clamped()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_pgm_with_comment() {
        let img = parse_pnm(b"P5 # gray\n1 1\n255\n\xff").unwrap();
        assert_eq!(img.shape(), (1, 1, 1));
        assert_eq!(img.pixels(), &[1.0]);
    }

    #[test]
    fn rejects_bad_magic_at_offset_zero() {
        match parse_pnm(b"P4\n1 1\n255\n\x00") {
            Err(Error::PnmParse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unsupported_maxval_at_its_offset() {
        match parse_pnm(b"P5\n1 1\n65535\n\x00\x00") {
            Err(Error::PnmParse { offset, message }) => {
                assert_eq!(offset, 7);
                assert!(message.contains("65535"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_truncated_raster() {
        assert!(matches!(
            parse_pnm(b"P6\n2 2\n255\n\x01\x02"),
            Err(Error::PnmParse { .. })
        ));
    }

    #[test]
    fn quantization_rounds_half_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
    }
}

//! Binary PPM (P6, maxval 255).
//!
//! The encoder emits exactly `P6\n<w> <h>\n255\n` followed by w*h*3 bytes,
//! row-major, top row first; golden-file tests depend on that byte layout.
//! The decoder accepts the general P6 header grammar (whitespace runs and
//! `#` comments between tokens).

use super::{RasterImage, BYTES_PER_PIXEL};
use crate::error::{Error, Result};

// Decoded dimension guard; a P6 header could otherwise claim terabytes.
const MAX_DIMENSION: u64 = 1 << 20;

pub(super) fn encode(img: &RasterImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.data().len());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(img.data());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::MalformedFile {
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    /// Skip one run of whitespace and any `#` comment lines.
    fn skip_separators(&mut self) -> Result<()> {
        let start = self.pos;
        loop {
            match self.peek() {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') => {
                    while let Some(b) = self.peek() {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                _ => break,
            }
        }
        if self.pos == start {
            return Err(self.malformed("expected whitespace between header fields"));
        }
        Ok(())
    }

    fn read_uint(&mut self, what: &str) -> Result<u64> {
        let start = self.pos;
        let mut value: u64 = 0;
        while let Some(b) = self.peek() {
            if !b.is_ascii_digit() {
                break;
            }
            value = value
                .checked_mul(10)
                .and_then(|v| v.checked_add((b - b'0') as u64))
                .ok_or_else(|| self.malformed(format!("{what} overflows")))?;
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.malformed(format!("expected decimal {what}")));
        }
        Ok(value)
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<RasterImage> {
    let mut cur = Cursor { bytes, pos: 0 };
    if !bytes.starts_with(b"P6") {
        return Err(cur.malformed("bad magic, expected 'P6'"));
    }
    cur.pos = 2;
    cur.skip_separators()?;
    let width = cur.read_uint("width")?;
    cur.skip_separators()?;
    let height = cur.read_uint("height")?;
    cur.skip_separators()?;
    let maxval = cur.read_uint("maxval")?;

    if width == 0 || height == 0 {
        return Err(cur.malformed(format!("degenerate dimensions {width}x{height}")));
    }
    if width > MAX_DIMENSION || height > MAX_DIMENSION {
        return Err(cur.malformed(format!("dimensions {width}x{height} exceed decoder limit")));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat {
            reason: format!("PPM maxval {maxval}; only 8-bit (maxval 255) is supported"),
        });
    }

    // Exactly one whitespace byte separates the header from pixel data.
    match cur.peek() {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(cur.malformed("expected single whitespace before pixel data")),
    }

    let need = (width * height) as usize * BYTES_PER_PIXEL;
    let available = bytes.len() - cur.pos;
    if available < need {
        return Err(cur.malformed(format!(
            "truncated pixel data: need {need} bytes, found {available}"
        )));
    }
    let data = bytes[cur.pos..cur.pos + need].to_vec();
    Ok(RasterImage::new(width as u32, height as u32, data))
}

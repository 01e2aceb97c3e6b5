//! 8-bit interleaved RGB rasters and the exact primitives every other
//! module builds on: lossless dihedral transforms, Catmull-Rom bicubic
//! resizing, and PPM/PNG codecs.
//!
//! All geometric ops are pure functions; images are immutable once built
//! and safe to share across threads. One quantization rule applies
//! everywhere: compute in f64, clamp to [0, 255], round half away from
//! zero.

mod png_codec;
mod ppm;
mod resize;

use std::fmt;

pub use resize::bicubic_resize;
pub(crate) use resize::quantize_sample;

use crate::error::{Error, Result};

pub const BYTES_PER_PIXEL: usize = 3;

/// Row-major interleaved RGB image, 3 bytes per pixel, top row first.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RasterImage({}x{})", self.width, self.height)
    }
}

impl RasterImage {
    /// Build from raw samples. Dimension/length mismatches are programming
    /// errors and panic.
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "empty image {width}x{height}");
        let expected = width as usize * height as usize * BYTES_PER_PIXEL;
        assert_eq!(
            data.len(),
            expected,
            "pixel buffer length {} does not match {}x{}x3",
            data.len(),
            width,
            height
        );
        RasterImage {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * BYTES_PER_PIXEL);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        RasterImage::new(width, height, data)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * BYTES_PER_PIXEL);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage::new(width, height, data)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        assert!(
            x < self.width && y < self.height,
            "pixel ({x},{y}) out of bounds for {}x{}",
            self.width,
            self.height
        );
        (y as usize * self.width as usize + x as usize) * BYTES_PER_PIXEL
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&rgb);
    }

    /// Copy the axis-aligned rectangle at (x0, y0) of size w x h.
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> RasterImage {
        assert!(
            x0 + w <= self.width && y0 + h <= self.height,
            "crop {w}x{h}@({x0},{y0}) exceeds {}x{}",
            self.width,
            self.height
        );
        let mut data = Vec::with_capacity(w as usize * h as usize * BYTES_PER_PIXEL);
        for y in y0..y0 + h {
            let start = (y as usize * self.width as usize + x0 as usize) * BYTES_PER_PIXEL;
            data.extend_from_slice(&self.data[start..start + w as usize * BYTES_PER_PIXEL]);
        }
        RasterImage::new(w, h, data)
    }

    /// k counter-clockwise quarter turns. Lossless: the pixel multiset is
    /// preserved exactly.
    pub fn rotate90(&self, k: u8) -> RasterImage {
        assert!(k < 4, "rotation count must be in 0..=3, got {k}");
        let (w, h) = (self.width as usize, self.height as usize);
        let src = &self.data;
        match k {
            0 => self.clone(),
            1 => {
                // out[r][c] = in[c][w-1-r]; output is h wide, w tall
                let mut out = vec![0u8; src.len()];
                for r in 0..w {
                    for c in 0..h {
                        let s = (c * w + (w - 1 - r)) * BYTES_PER_PIXEL;
                        let d = (r * h + c) * BYTES_PER_PIXEL;
                        out[d..d + 3].copy_from_slice(&src[s..s + 3]);
                    }
                }
                RasterImage {
                    width: self.height,
                    height: self.width,
                    data: out,
                }
            }
            2 => {
                let mut out = vec![0u8; src.len()];
                for r in 0..h {
                    for c in 0..w {
                        let s = ((h - 1 - r) * w + (w - 1 - c)) * BYTES_PER_PIXEL;
                        let d = (r * w + c) * BYTES_PER_PIXEL;
                        out[d..d + 3].copy_from_slice(&src[s..s + 3]);
                    }
                }
                RasterImage {
                    width: self.width,
                    height: self.height,
                    data: out,
                }
            }
            _ => {
                // out[r][c] = in[h-1-c][r]
                let mut out = vec![0u8; src.len()];
                for r in 0..w {
                    for c in 0..h {
                        let s = ((h - 1 - c) * w + r) * BYTES_PER_PIXEL;
                        let d = (r * h + c) * BYTES_PER_PIXEL;
                        out[d..d + 3].copy_from_slice(&src[s..s + 3]);
                    }
                }
                RasterImage {
                    width: self.height,
                    height: self.width,
                    data: out,
                }
            }
        }
    }

    /// Mirror rows: row r maps to row height-1-r.
    pub fn flip_vertical(&self) -> RasterImage {
        let row_bytes = self.width as usize * BYTES_PER_PIXEL;
        let mut data = Vec::with_capacity(self.data.len());
        for r in (0..self.height as usize).rev() {
            data.extend_from_slice(&self.data[r * row_bytes..(r + 1) * row_bytes]);
        }
        RasterImage {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn resize_bicubic(&self, out_w: u32, out_h: u32) -> RasterImage {
        bicubic_resize(self, out_w, out_h)
    }

    /// Decode PPM (P6) or PNG, dispatching on the magic bytes.
    pub fn decode(bytes: &[u8]) -> Result<RasterImage> {
        if bytes.starts_with(b"P6") {
            ppm::decode(bytes)
        } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
            png_codec::decode(bytes)
        } else {
            Err(Error::UnsupportedFormat {
                reason: "unknown magic bytes (expected P6 PPM or PNG)".into(),
            })
        }
    }

    pub fn encode(&self, format: ImageFormat) -> Result<Vec<u8>> {
        match format {
            ImageFormat::Ppm => Ok(ppm::encode(self)),
            ImageFormat::Png => png_codec::encode(self),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
        }
    }

    pub fn from_extension(ext: &str) -> Option<ImageFormat> {
        match ext.to_ascii_lowercase().as_str() {
            "ppm" => Some(ImageFormat::Ppm),
            "png" => Some(ImageFormat::Png),
            _ => None,
        }
    }
}

/// One element of the dihedral group D4: k counter-clockwise quarter
/// turns followed by an optional vertical reflection. The 8 (k, flip_v)
/// combinations enumerate the group exactly once each.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RotationFlip {
    pub k: u8,
    pub flip_v: bool,
}

impl RotationFlip {
    pub const ALL: [RotationFlip; 8] = [
        RotationFlip { k: 0, flip_v: false },
        RotationFlip { k: 1, flip_v: false },
        RotationFlip { k: 2, flip_v: false },
        RotationFlip { k: 3, flip_v: false },
        RotationFlip { k: 0, flip_v: true },
        RotationFlip { k: 1, flip_v: true },
        RotationFlip { k: 2, flip_v: true },
        RotationFlip { k: 3, flip_v: true },
    ];

    pub fn new(k: u8, flip_v: bool) -> Self {
        assert!(k < 4, "rotation count must be in 0..=3, got {k}");
        RotationFlip { k, flip_v }
    }

    pub fn apply(&self, img: &RasterImage) -> RasterImage {
        let rotated = img.rotate90(self.k);
        if self.flip_v {
            rotated.flip_vertical()
        } else {
            rotated
        }
    }

    /// Group inverse. Reflections are involutions; rotations invert their
    /// turn count.
    pub fn inverse(&self) -> RotationFlip {
        if self.flip_v {
            *self
        } else {
            RotationFlip {
                k: (4 - self.k) % 4,
                flip_v: false,
            }
        }
    }
}

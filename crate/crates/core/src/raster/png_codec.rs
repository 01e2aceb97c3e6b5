//! PNG decode/encode behind the spec contract: 8-bit RGB in, color type 2
//! out. RGBA input is accepted with the alpha plane dropped (warned);
//! 16-bit and non-RGB color types are rejected as unsupported.

use super::{RasterImage, BYTES_PER_PIXEL};
use crate::error::{Error, Result};

fn malformed(reason: impl Into<String>) -> Error {
    Error::MalformedFile {
        offset: 0,
        reason: reason.into(),
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<RasterImage> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder
        .read_info()
        .map_err(|e| malformed(format!("PNG header: {e}")))?;

    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat {
            reason: format!(
                "PNG bit depth {:?}; only 8-bit images are supported",
                info.bit_depth
            ),
        });
    }
    let color_type = info.color_type;
    match color_type {
        png::ColorType::Rgb | png::ColorType::Rgba => {}
        other => {
            return Err(Error::UnsupportedFormat {
                reason: format!("PNG color type {other:?}; only RGB/RGBA is supported"),
            })
        }
    }

    let buf_len = reader
        .output_buffer_size()
        .ok_or_else(|| malformed("PNG output size overflows"))?;
    let mut buf = vec![0u8; buf_len];
    let frame = reader
        .next_frame(&mut buf)
        .map_err(|e| malformed(format!("PNG pixel data: {e}")))?;
    buf.truncate(frame.buffer_size());

    let (width, height) = (frame.width, frame.height);
    if width == 0 || height == 0 {
        return Err(malformed(format!("degenerate dimensions {width}x{height}")));
    }

    let data = match color_type {
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => {
            log::warn!("PNG has an alpha channel; dropping it");
            let mut rgb = Vec::with_capacity(width as usize * height as usize * BYTES_PER_PIXEL);
            for px in buf.chunks_exact(4) {
                rgb.extend_from_slice(&px[..3]);
            }
            rgb
        }
        _ => unreachable!(),
    };
    if data.len() != width as usize * height as usize * BYTES_PER_PIXEL {
        return Err(malformed("PNG pixel payload length mismatch"));
    }
    Ok(RasterImage::new(width, height, data))
}

pub(super) fn encode(img: &RasterImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width(), img.height());
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Internal {
                reason: format!("PNG header write: {e}"),
            })?;
        writer
            .write_image_data(img.data())
            .map_err(|e| Error::Internal {
                reason: format!("PNG data write: {e}"),
            })?;
    }
    Ok(out)
}

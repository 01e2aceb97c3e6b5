//! Catmull-Rom bicubic resampling with pixel-center alignment and
//! clamp-to-edge borders.

use super::{RasterImage, BYTES_PER_PIXEL};

/// Clamp to [0, 255] and round half away from zero. The single
/// quantization rule for every float-to-byte conversion in this crate.
#[inline]
pub(crate) fn quantize_sample(v: f64) -> u8 {
    let c = v.clamp(0.0, 255.0);
    (c + 0.5).floor() as u8
}

/// Catmull-Rom kernel (bicubic with a = -0.5).
#[inline]
fn catmull_rom(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        ((1.5 * x - 2.5) * x) * x + 1.0
    } else if x < 2.0 {
        ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0
    } else {
        0.0
    }
}

/// Interleaved-RGB float plane used between passes; quantization happens
/// only once at the very end.
struct PlaneF64 {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl PlaneF64 {
    fn from_image(img: &RasterImage) -> PlaneF64 {
        PlaneF64 {
            w: img.width() as usize,
            h: img.height() as usize,
            data: img.data().iter().map(|&b| b as f64).collect(),
        }
    }

    fn into_image(self) -> RasterImage {
        let data = self.data.iter().map(|&v| quantize_sample(v)).collect();
        RasterImage::new(self.w as u32, self.h as u32, data)
    }
}

/// Per-output-position source window: 4 clamped taps and their weights.
fn tap_table(in_dim: usize, out_dim: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = in_dim as f64 / out_dim as f64;
    (0..out_dim)
        .map(|o| {
            // Pixel-center alignment: output center maps into source space.
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let t = src - base;
            let weights = [
                catmull_rom(t + 1.0),
                catmull_rom(t),
                catmull_rom(1.0 - t),
                catmull_rom(2.0 - t),
            ];
            let idx = std::array::from_fn(|i| {
                (base as i64 + i as i64 - 1).clamp(0, in_dim as i64 - 1) as usize
            });
            (idx, weights)
        })
        .collect()
}

fn resample_rows(src: &PlaneF64, out_w: usize) -> PlaneF64 {
    let taps = tap_table(src.w, out_w);
    let mut data = vec![0.0; out_w * src.h * BYTES_PER_PIXEL];
    for y in 0..src.h {
        let row = &src.data[y * src.w * BYTES_PER_PIXEL..(y + 1) * src.w * BYTES_PER_PIXEL];
        let out_row = &mut data[y * out_w * BYTES_PER_PIXEL..(y + 1) * out_w * BYTES_PER_PIXEL];
        for (x, (idx, w)) in taps.iter().enumerate() {
            for ch in 0..BYTES_PER_PIXEL {
                let v = w[0] * row[idx[0] * BYTES_PER_PIXEL + ch]
                    + w[1] * row[idx[1] * BYTES_PER_PIXEL + ch]
                    + w[2] * row[idx[2] * BYTES_PER_PIXEL + ch]
                    + w[3] * row[idx[3] * BYTES_PER_PIXEL + ch];
                out_row[x * BYTES_PER_PIXEL + ch] = v;
            }
        }
    }
    PlaneF64 {
        w: out_w,
        h: src.h,
        data,
    }
}

fn resample_cols(src: &PlaneF64, out_h: usize) -> PlaneF64 {
    let taps = tap_table(src.h, out_h);
    let row_len = src.w * BYTES_PER_PIXEL;
    let mut data = vec![0.0; src.w * out_h * BYTES_PER_PIXEL];
    for (y, (idx, w)) in taps.iter().enumerate() {
        let rows: [&[f64]; 4] =
            std::array::from_fn(|i| &src.data[idx[i] * row_len..(idx[i] + 1) * row_len]);
        let out_row = &mut data[y * row_len..(y + 1) * row_len];
        for s in 0..row_len {
            out_row[s] = w[0] * rows[0][s] + w[1] * rows[1][s] + w[2] * rows[2][s] + w[3] * rows[3][s];
        }
    }
    PlaneF64 {
        w: src.w,
        h: out_h,
        data,
    }
}

/// Average horizontal groups of `ratio` samples (last group may be
/// shorter). Anti-aliasing prefilter for heavy downscales.
fn box_reduce_rows(src: &PlaneF64, ratio: usize) -> PlaneF64 {
    let out_w = src.w.div_ceil(ratio);
    let mut data = vec![0.0; out_w * src.h * BYTES_PER_PIXEL];
    for y in 0..src.h {
        for ox in 0..out_w {
            let start = ox * ratio;
            let end = (start + ratio).min(src.w);
            let n = (end - start) as f64;
            for ch in 0..BYTES_PER_PIXEL {
                let mut acc = 0.0;
                for x in start..end {
                    acc += src.data[(y * src.w + x) * BYTES_PER_PIXEL + ch];
                }
                data[(y * out_w + ox) * BYTES_PER_PIXEL + ch] = acc / n;
            }
        }
    }
    PlaneF64 {
        w: out_w,
        h: src.h,
        data,
    }
}

fn box_reduce_cols(src: &PlaneF64, ratio: usize) -> PlaneF64 {
    let out_h = src.h.div_ceil(ratio);
    let mut data = vec![0.0; src.w * out_h * BYTES_PER_PIXEL];
    for oy in 0..out_h {
        let start = oy * ratio;
        let end = (start + ratio).min(src.h);
        let n = (end - start) as f64;
        for x in 0..src.w {
            for ch in 0..BYTES_PER_PIXEL {
                let mut acc = 0.0;
                for y in start..end {
                    acc += src.data[(y * src.w + x) * BYTES_PER_PIXEL + ch];
                }
                data[(oy * src.w + x) * BYTES_PER_PIXEL + ch] = acc / n;
            }
        }
    }
    PlaneF64 {
        w: src.w,
        h: out_h,
        data,
    }
}

/// Resize with the Catmull-Rom kernel. Output pixel (i, j) samples source
/// coordinate ((i+0.5)*w/out_w - 0.5, (j+0.5)*h/out_h - 0.5); edge taps
/// clamp to the border. Downscales beyond 2x per axis are prefiltered
/// with an integer-ratio averaging box.
pub fn bicubic_resize(img: &RasterImage, out_w: u32, out_h: u32) -> RasterImage {
    assert!(out_w >= 1 && out_h >= 1, "empty resize target");
    let mut plane = PlaneF64::from_image(img);

    if plane.w > 2 * out_w as usize {
        plane = box_reduce_rows(&plane, plane.w / out_w as usize);
    }
    if plane.h > 2 * out_h as usize {
        plane = box_reduce_cols(&plane, plane.h / out_h as usize);
    }

    if plane.w != out_w as usize {
        plane = resample_rows(&plane, out_w as usize);
    }
    if plane.h != out_h as usize {
        plane = resample_cols(&plane, out_h as usize);
    }
    plane.into_image()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn kernel_anchor_values() {
        assert_eq!(catmull_rom(0.0), 1.0);
        assert!(catmull_rom(1.0).abs() < 1e-15);
        assert!(catmull_rom(2.0).abs() < 1e-15);
        assert!(catmull_rom(2.5).abs() < 1e-15);
    }

    #[test]
    fn same_size_resize_is_identity() {
        let mut rng = SplitMix64::new(42);
        let img = RasterImage::from_fn(19, 11, |_, _| {
            [
                rng.next_u64() as u8,
                rng.next_u64() as u8,
                rng.next_u64() as u8,
            ]
        });
        assert_eq!(bicubic_resize(&img, 19, 11), img);
    }

    #[test]
    fn constant_image_stays_constant_at_any_size() {
        let img = RasterImage::filled(16, 16, [200, 33, 7]);
        for (w, h) in [(1, 1), (3, 64), (64, 3), (16, 16), (64, 64), (5, 7)] {
            let out = bicubic_resize(&img, w, h);
            assert!(
                out.data().chunks(3).all(|p| p == [200, 33, 7]),
                "constant not preserved at {w}x{h}"
            );
        }
    }

    #[test]
    fn ramp_upscale_matches_scalar_oracle() {
        // 4x4 horizontal ramp resized to 8x8 compared to a direct
        // per-output-pixel evaluation of the 2-D Catmull-Rom sum.
        let cols = [0u8, 85, 170, 255];
        let img = RasterImage::from_fn(4, 4, |x, _| [cols[x as usize]; 3]);
        let out = bicubic_resize(&img, 8, 8);

        let kernel = |x: f64| -> f64 {
            let x = x.abs();
            if x < 1.0 {
                1.5 * x * x * x - 2.5 * x * x + 1.0
            } else if x < 2.0 {
                -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0
            } else {
                0.0
            }
        };
        let sample = |xs: &[u8; 4], fx: f64, fy: f64| -> f64 {
            // Separable 2-D evaluation over the 4x4 neighborhood; ramp is
            // constant per column so rows collapse.
            let bx = fx.floor();
            let by = fy.floor();
            let mut acc = 0.0;
            for dy in -1i64..=2 {
                let wy = kernel(fy - (by + dy as f64));
                let mut row = 0.0;
                for dx in -1i64..=2 {
                    let wx = kernel(fx - (bx + dx as f64));
                    let sx = (bx as i64 + dx).clamp(0, 3) as usize;
                    row += wx * xs[sx] as f64;
                }
                acc += wy * row;
            }
            acc
        };

        for oy in 0..8u32 {
            for ox in 0..8u32 {
                let fx = (ox as f64 + 0.5) * 0.5 - 0.5;
                let fy = (oy as f64 + 0.5) * 0.5 - 0.5;
                let expect = quantize_sample(sample(&cols, fx, fy));
                assert_eq!(
                    out.pixel(ox, oy)[0],
                    expect,
                    "mismatch at ({ox},{oy}) vs oracle"
                );
            }
        }
    }

    #[test]
    fn heavy_downscale_prefilters_without_breaking_constancy() {
        let img = RasterImage::filled(64, 48, [90, 91, 92]);
        let out = bicubic_resize(&img, 5, 3);
        assert!(out.data().chunks(3).all(|p| p == [90, 91, 92]));
    }

    #[test]
    fn output_dimensions_are_exact() {
        let img = RasterImage::filled(10, 10, [1, 2, 3]);
        let out = bicubic_resize(&img, 7, 13);
        assert_eq!((out.width(), out.height()), (7, 13));
    }
}

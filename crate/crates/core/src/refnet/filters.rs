//! First-layer filter visualization: each filter's RGB channels combine
//! into one tile so detector structure is visible at a glance.

use crate::error::{Error, Result};
use crate::raster::{quantize_sample, RasterImage};

use super::arch::LayerSpec;
use super::net::CnnParameters;

const UPSCALE: u32 = 16;
const SEPARATOR: u32 = 2;

/// Render every first-layer filter as an RGB tile: min-max normalize each
/// k x k x 3 filter independently to [0, 255], upscale x16 nearest
/// neighbor, and arrange the tiles in a near-square grid with 2-pixel
/// black separators. A flat filter (min == max) renders mid-grey (128).
pub fn export_first_layer_filters(params: &CnnParameters) -> Result<RasterImage> {
    let arch = params.arch();
    let (kernel, out_channels) = match arch.layers().first() {
        Some(&LayerSpec::Conv {
            kernel,
            out_channels,
        }) => (kernel, out_channels),
        _ => {
            return Err(Error::ShapeMismatch {
                context: "first layer is not a convolution".into(),
            })
        }
    };
    let in_c = arch.input_shape_of(0).c;
    if in_c != 3 {
        return Err(Error::ShapeMismatch {
            context: format!("first convolution reads {in_c} channels, filter export needs 3"),
        });
    }

    let weights = &params.layers()[0].weights;
    let per_filter = kernel * kernel * in_c;
    let tile = kernel as u32 * UPSCALE;
    let grid_cols = (out_channels as f64).sqrt().ceil() as u32;
    let grid_rows = (out_channels as u32).div_ceil(grid_cols);
    let width = grid_cols * tile + (grid_cols - 1) * SEPARATOR;
    let height = grid_rows * tile + (grid_rows - 1) * SEPARATOR;

    let mut canvas = RasterImage::filled(width, height, [0, 0, 0]);
    for f in 0..out_channels {
        let fw = &weights[f * per_filter..(f + 1) * per_filter];
        let min = fw.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = fw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let normalize = |v: f64| -> u8 {
            if max > min {
                quantize_sample((v - min) / (max - min) * 255.0)
            } else {
                128
            }
        };
        let tx = (f as u32 % grid_cols) * (tile + SEPARATOR);
        let ty = (f as u32 / grid_cols) * (tile + SEPARATOR);
        for py in 0..tile {
            for px in 0..tile {
                let ky = (py / UPSCALE) as usize;
                let kx = (px / UPSCALE) as usize;
                let base = (ky * kernel + kx) * in_c;
                let rgb = [
                    normalize(fw[base]),
                    normalize(fw[base + 1]),
                    normalize(fw[base + 2]),
                ];
                canvas.set_pixel(tx + px, ty + py, rgb);
            }
        }
    }
    Ok(canvas)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refnet::arch::CnnArchitecture;
    use crate::refnet::net::init_params;

    #[test]
    fn sixteen_filters_make_a_4x4_grid() {
        let arch = CnnArchitecture::baseline(17, 16, 1, 1, 2).unwrap();
        let img = export_first_layer_filters(&init_params(&arch, 1)).unwrap();
        // 4 tiles of 32px with 3 separators of 2px
        assert_eq!((img.width(), img.height()), (134, 134));
    }

    #[test]
    fn flat_filter_renders_mid_grey() {
        let arch = CnnArchitecture::baseline(17, 1, 1, 1, 2).unwrap();
        let mut params = init_params(&arch, 1);
        for w in params.layers_mut()[0].weights.iter_mut() {
            *w = 0.37;
        }
        let img = export_first_layer_filters(&params).unwrap();
        assert_eq!(img.pixel(0, 0), [128, 128, 128]);
    }

    #[test]
    fn zero_weight_in_minus_one_to_one_filter_renders_128() {
        let arch = CnnArchitecture::baseline(17, 1, 1, 1, 2).unwrap();
        let mut params = init_params(&arch, 1);
        let ws = &mut params.layers_mut()[0].weights;
        for w in ws.iter_mut() {
            *w = 0.0;
        }
        ws[0] = -1.0;
        ws[1] = 1.0;
        let img = export_first_layer_filters(&params).unwrap();
        // kernel position (0,0) holds channels (-1, 1, 0): red 0, green
        // 255, blue (0 - -1)/2 * 255 = 127.5 -> 128
        assert_eq!(img.pixel(0, 0), [0, 255, 128]);
        // kernel position (0,1) is all zeros -> all 128
        assert_eq!(img.pixel(UPSCALE, 0), [128, 128, 128]);
    }

    #[test]
    fn non_conv_first_layer_is_rejected() {
        let arch = CnnArchitecture::new(
            1,
            vec![crate::refnet::arch::LayerSpec::FullyConnected { units: 4 }],
        )
        .unwrap();
        assert!(export_first_layer_filters(&init_params(&arch, 0)).is_err());
    }
}

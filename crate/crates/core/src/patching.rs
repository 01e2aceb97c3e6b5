//! Deterministic division of a whole image into contiguous,
//! non-overlapping patches, plus classifier-input preparation.
//!
//! Patch files are named `<image_id>_p<grid_index>.<ext>`; the prediction
//! aggregator keys on that stem, so the naming rules live here.

use crate::error::{Error, Result};
use crate::raster::{bicubic_resize, RasterImage};

/// Patch grid. cols x rows is the patch count per image (default 4x3 = 12,
/// which yields near-square patches on 2040x1536 inputs).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub cols: u32,
    pub rows: u32,
}

impl GridSpec {
    pub fn new(cols: u32, rows: u32) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::validation(format!(
                "patch grid must be at least 1x1, got {cols}x{rows}"
            )));
        }
        Ok(GridSpec { cols, rows })
    }

    pub fn patch_count(&self) -> u32 {
        self.cols * self.rows
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { cols: 4, rows: 3 }
    }
}

/// One tile of a source image, carrying its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub image_id: String,
    pub grid_index: u32,
    /// Pixel offset of the patch in the source image.
    pub origin: (u32, u32),
    pub pixels: RasterImage,
}

impl Patch {
    pub fn new(image_id: impl Into<String>, grid_index: u32, pixels: RasterImage) -> Self {
        Patch {
            image_id: image_id.into(),
            grid_index,
            origin: (0, 0),
            pixels,
        }
    }

    /// Same provenance, new pixel content.
    pub fn with_pixels(&self, pixels: RasterImage) -> Patch {
        Patch {
            image_id: self.image_id.clone(),
            grid_index: self.grid_index,
            origin: self.origin,
            pixels,
        }
    }

    pub fn file_stem(&self) -> String {
        patch_file_stem(&self.image_id, self.grid_index)
    }
}

pub fn patch_file_stem(image_id: &str, grid_index: u32) -> String {
    format!("{image_id}_p{grid_index}")
}

/// Parse `<image_id>_p<grid_index>` using the rightmost `_p<digits>` run,
/// so image ids containing `_p` still round-trip.
pub fn parse_patch_stem(stem: &str) -> Option<(String, u32)> {
    let at = stem.rfind("_p")?;
    let digits = &stem[at + 2..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let index: u32 = digits.parse().ok()?;
    Some((stem[..at].to_string(), index))
}

/// Tile an image into cols x rows patches of floor(w/cols) x floor(h/rows)
/// pixels. Any remainder is cropped from the right/bottom edge; ordering
/// is row-major with grid_index = r*cols + c.
pub fn extract_patches(image_id: &str, img: &RasterImage, grid: &GridSpec) -> Result<Vec<Patch>> {
    if img.width() < grid.cols || img.height() < grid.rows {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            cols: grid.cols,
            rows: grid.rows,
        });
    }
    let pw = img.width() / grid.cols;
    let ph = img.height() / grid.rows;
    let mut patches = Vec::with_capacity(grid.patch_count() as usize);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let origin = (c * pw, r * ph);
            patches.push(Patch {
                image_id: image_id.to_string(),
                grid_index: r * grid.cols + c,
                origin,
                pixels: img.crop(origin.0, origin.1, pw, ph),
            });
        }
    }
    Ok(patches)
}

/// Scale a patch to the classifier's square input (aspect ratio is not
/// preserved; patches are scaled directly).
pub fn to_classifier_input(patch: &Patch, side: u32) -> RasterImage {
    assert!(side >= 8, "classifier input side must be >= 8, got {side}");
    bicubic_resize(&patch.pixels, side, side)
}

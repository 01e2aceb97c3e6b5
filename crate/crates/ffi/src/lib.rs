//! C ABI for the histopatch pipeline.
//!
//! Conventions: every fallible call returns an [`HpStatus`]; results come
//! back through out-pointers holding opaque handles that must be released
//! with the matching `hp_*_free`. On failure the thread-local message
//! retrieved by [`hp_last_error_message`] describes what went wrong.
//! Pixel data is always row-major interleaved 8-bit RGB.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;

use histopatch::aggregate::{majority_vote, ClassLabel};
use histopatch::augment::{augment_batch, expand_eight, AugmentConfig};
use histopatch::error::Error;
use histopatch::patching::{extract_patches, GridSpec, Patch};
use histopatch::raster::{ImageFormat, RasterImage};
use histopatch::refnet::{self, predict_patch, CnnParameters};

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    MalformedFile = 3,
    UnsupportedFormat = 4,
    ValidationError = 5,
    InternalError = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error_message(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: HpStatus, msg: &str) -> HpStatus {
    set_error_message(msg);
    status
}

fn fail_with(err: &Error) -> HpStatus {
    let status = match err {
        Error::MalformedFile { .. } => HpStatus::MalformedFile,
        Error::UnsupportedFormat { .. } => HpStatus::UnsupportedFormat,
        Error::Internal { .. } => HpStatus::InternalError,
        _ => HpStatus::ValidationError,
    };
    fail(status, &err.to_string())
}

/// Copy the last error message (UTF-8, NUL-terminated) into `buf`,
/// truncating to `cap` bytes. Returns the full message length.
///
/// # Safety
/// `buf` must point to at least `cap` writable bytes (or be null).
#[no_mangle]
pub unsafe extern "C" fn hp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let msg = slot.borrow();
        let bytes = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap);
            unsafe {
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                // always terminate
                *buf.add(n - 1) = 0;
            }
        }
        bytes.len() - 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Opaque 8-bit RGB image.
pub struct HpImage(RasterImage);

/// Opaque ordered list of images (patches or dihedral variants).
pub struct HpImageList(Vec<RasterImage>);

/// Opaque byte buffer returned by encoders.
pub struct HpBuffer(Vec<u8>);

/// Opaque augmentation configuration.
pub struct HpAugmentConfig(AugmentConfig);

/// Opaque trained network handle.
pub struct HpNet(CnnParameters);

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> HpStatus {
    if out.is_null() {
        return fail(HpStatus::NullArgument, "out pointer is null");
    }
    *out = Box::into_raw(Box::new(value));
    HpStatus::Ok
}

unsafe fn cstr<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, HpStatus> {
    if ptr.is_null() {
        return Err(fail(
            HpStatus::NullArgument,
            &format!("{what} pointer is null"),
        ));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        fail(
            HpStatus::InvalidArgument,
            &format!("{what} is not valid UTF-8"),
        )
    })
}

/// Decode a PPM (P6) or PNG image from memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` must be a valid
/// pointer slot for the new handle.
#[no_mangle]
pub unsafe extern "C" fn hp_image_decode(
    bytes: *const u8,
    len: usize,
    out: *mut *mut HpImage,
) -> HpStatus {
    if bytes.is_null() {
        return fail(HpStatus::NullArgument, "bytes pointer is null");
    }
    let slice = std::slice::from_raw_parts(bytes, len);
    match RasterImage::decode(slice) {
        Ok(img) => write_out(out, HpImage(img)),
        Err(e) => fail_with(&e),
    }
}

/// Build an image from `width * height * 3` interleaved RGB bytes.
///
/// # Safety
/// `rgb` must point to exactly `width * height * 3` readable bytes.
#[no_mangle]
pub unsafe extern "C" fn hp_image_from_pixels(
    width: u32,
    height: u32,
    rgb: *const u8,
    out: *mut *mut HpImage,
) -> HpStatus {
    if rgb.is_null() {
        return fail(HpStatus::NullArgument, "rgb pointer is null");
    }
    if width == 0 || height == 0 {
        return fail(HpStatus::InvalidArgument, "image dimensions must be positive");
    }
    let len = match (width as usize)
        .checked_mul(height as usize)
        .and_then(|n| n.checked_mul(3))
    {
        Some(n) => n,
        None => return fail(HpStatus::InvalidArgument, "image dimensions overflow"),
    };
    let data = std::slice::from_raw_parts(rgb, len).to_vec();
    write_out(out, HpImage(RasterImage::new(width, height, data)))
}

/// # Safety
/// `img` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_image_width(img: *const HpImage) -> u32 {
    if img.is_null() {
        return 0;
    }
    (*img).0.width()
}

/// # Safety
/// `img` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_image_height(img: *const HpImage) -> u32 {
    if img.is_null() {
        return 0;
    }
    (*img).0.height()
}

/// Borrow the pixel bytes (w*h*3, row-major RGB). Valid until the image
/// handle is freed.
///
/// # Safety
/// `img` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_image_pixels(img: *const HpImage) -> *const u8 {
    if img.is_null() {
        return std::ptr::null();
    }
    (*img).0.data().as_ptr()
}

/// Encode to `format` (0 = PPM P6, 1 = PNG).
///
/// # Safety
/// `img` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_image_encode(
    img: *const HpImage,
    format: u32,
    out: *mut *mut HpBuffer,
) -> HpStatus {
    if img.is_null() {
        return fail(HpStatus::NullArgument, "image handle is null");
    }
    let format = match format {
        0 => ImageFormat::Ppm,
        1 => ImageFormat::Png,
        other => {
            return fail(
                HpStatus::InvalidArgument,
                &format!("unknown format code {other} (0 = PPM, 1 = PNG)"),
            )
        }
    };
    match (*img).0.encode(format) {
        Ok(bytes) => write_out(out, HpBuffer(bytes)),
        Err(e) => fail_with(&e),
    }
}

/// k counter-clockwise quarter turns (k in 0..=3).
///
/// # Safety
/// `img` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_image_rotate90(
    img: *const HpImage,
    k: u8,
    out: *mut *mut HpImage,
) -> HpStatus {
    if img.is_null() {
        return fail(HpStatus::NullArgument, "image handle is null");
    }
    if k > 3 {
        return fail(HpStatus::InvalidArgument, "rotation count must be 0..=3");
    }
    write_out(out, HpImage((*img).0.rotate90(k)))
}

/// # Safety
/// `img` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_image_flip_vertical(
    img: *const HpImage,
    out: *mut *mut HpImage,
) -> HpStatus {
    if img.is_null() {
        return fail(HpStatus::NullArgument, "image handle is null");
    }
    write_out(out, HpImage((*img).0.flip_vertical()))
}

/// Catmull-Rom bicubic resize.
///
/// # Safety
/// `img` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_image_resize_bicubic(
    img: *const HpImage,
    width: u32,
    height: u32,
    out: *mut *mut HpImage,
) -> HpStatus {
    if img.is_null() {
        return fail(HpStatus::NullArgument, "image handle is null");
    }
    if width == 0 || height == 0 {
        return fail(HpStatus::InvalidArgument, "resize target must be positive");
    }
    write_out(out, HpImage((*img).0.resize_bicubic(width, height)))
}

/// The 8 dihedral variants (rotations then flipped rotations) in fixed
/// order; element 0 is the input.
///
/// # Safety
/// `img` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_image_expand_eight(
    img: *const HpImage,
    out: *mut *mut HpImageList,
) -> HpStatus {
    if img.is_null() {
        return fail(HpStatus::NullArgument, "image handle is null");
    }
    let patch = Patch::new("ffi", 0, (*img).0.clone());
    let variants = expand_eight(&patch).into_iter().map(|p| p.pixels).collect();
    write_out(out, HpImageList(variants))
}

/// Tile into cols x rows contiguous patches (row-major order, remainder
/// cropped from the right/bottom).
///
/// # Safety
/// `img` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_image_extract_patches(
    img: *const HpImage,
    cols: u32,
    rows: u32,
    out: *mut *mut HpImageList,
) -> HpStatus {
    if img.is_null() {
        return fail(HpStatus::NullArgument, "image handle is null");
    }
    let grid = match GridSpec::new(cols, rows) {
        Ok(g) => g,
        Err(e) => return fail_with(&e),
    };
    match extract_patches("ffi", &(*img).0, &grid) {
        Ok(patches) => write_out(
            out,
            HpImageList(patches.into_iter().map(|p| p.pixels).collect()),
        ),
        Err(e) => fail_with(&e),
    }
}

/// # Safety
/// `img` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn hp_image_free(img: *mut HpImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

/// # Safety
/// `list` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_image_list_len(list: *const HpImageList) -> usize {
    if list.is_null() {
        return 0;
    }
    (*list).0.len()
}

/// Borrow element `index` as a new owned handle (must be freed).
///
/// # Safety
/// `list` must be a live handle; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_image_list_get(
    list: *const HpImageList,
    index: usize,
    out: *mut *mut HpImage,
) -> HpStatus {
    if list.is_null() {
        return fail(HpStatus::NullArgument, "list handle is null");
    }
    let items = &(*list).0;
    match items.get(index) {
        Some(img) => write_out(out, HpImage(img.clone())),
        None => fail(
            HpStatus::InvalidArgument,
            &format!("index {index} out of range 0..{}", items.len()),
        ),
    }
}

/// # Safety
/// `list` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn hp_image_list_free(list: *mut HpImageList) {
    if !list.is_null() {
        drop(Box::from_raw(list));
    }
}

/// # Safety
/// `buf` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_buffer_data(buf: *const HpBuffer) -> *const u8 {
    if buf.is_null() {
        return std::ptr::null();
    }
    (*buf).0.as_ptr()
}

/// # Safety
/// `buf` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_buffer_len(buf: *const HpBuffer) -> usize {
    if buf.is_null() {
        return 0;
    }
    (*buf).0.len()
}

/// # Safety
/// `buf` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn hp_buffer_free(buf: *mut HpBuffer) {
    if !buf.is_null() {
        drop(Box::from_raw(buf));
    }
}

/// Default augmentation config (axis scale 0.7-1.3, gain/offset 0.2,
/// blur sigma 0.3-0.6, 1% noise, 80-99% resample; all stages on).
///
/// # Safety
/// `out` must be a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_augment_config_default(out: *mut *mut HpAugmentConfig) -> HpStatus {
    write_out(out, HpAugmentConfig(AugmentConfig::default()))
}

/// Parse a flat key=value config (same format the CLI reads).
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_augment_config_parse(
    text: *const c_char,
    out: *mut *mut HpAugmentConfig,
) -> HpStatus {
    let text = match cstr(text, "config text") {
        Ok(t) => t,
        Err(status) => return status,
    };
    match AugmentConfig::parse(text, "config") {
        Ok(cfg) => write_out(out, HpAugmentConfig(cfg)),
        Err(e) => fail_with(&e),
    }
}

/// # Safety
/// `cfg` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn hp_augment_config_free(cfg: *mut HpAugmentConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run the enabled stochastic stages on one image. `image_id`, `grid_index`
/// and `epoch` identify the item: identical identities always reproduce
/// identical bytes under the same master seed.
///
/// # Safety
/// `img` and `cfg` must be live handles; `image_id` NUL-terminated; `out`
/// a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_augment_image(
    img: *const HpImage,
    cfg: *const HpAugmentConfig,
    image_id: *const c_char,
    grid_index: u32,
    master_seed: u64,
    epoch: u32,
    out: *mut *mut HpImage,
) -> HpStatus {
    if img.is_null() || cfg.is_null() {
        return fail(HpStatus::NullArgument, "image or config handle is null");
    }
    let id = match cstr(image_id, "image id") {
        Ok(s) => s,
        Err(status) => return status,
    };
    if (*cfg).0.validate().is_err() {
        return fail(HpStatus::ValidationError, "augment config is invalid");
    }
    let patch = Patch::new(id, grid_index, (*img).0.clone());
    let result = augment_batch(&[patch], &(*cfg).0, master_seed, epoch);
    write_out(out, HpImage(result.into_iter().next().unwrap().pixels))
}

/// Majority vote over class indices (0 Normal, 1 Benign, 2 InSitu,
/// 3 Invasive); ties break toward the lowest index.
///
/// # Safety
/// `labels` must point to `len` readable bytes; `out_label` must be a
/// valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_majority_vote(
    labels: *const u8,
    len: usize,
    out_label: *mut u8,
) -> HpStatus {
    if labels.is_null() || out_label.is_null() {
        return fail(HpStatus::NullArgument, "labels or out pointer is null");
    }
    let raw = std::slice::from_raw_parts(labels, len);
    let mut votes = Vec::with_capacity(raw.len());
    for &v in raw {
        match ClassLabel::from_index(v as usize) {
            Some(l) => votes.push(l),
            None => {
                return fail(
                    HpStatus::InvalidArgument,
                    &format!("class index {v} out of range 0..=3"),
                )
            }
        }
    }
    match majority_vote(&votes) {
        Ok(winner) => {
            *out_label = winner.index() as u8;
            HpStatus::Ok
        }
        Err(e) => fail_with(&e),
    }
}

/// Load a trained checkpoint from a file path.
///
/// # Safety
/// `path` must be NUL-terminated; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_checkpoint_load(
    path: *const c_char,
    out: *mut *mut HpNet,
) -> HpStatus {
    let path = match cstr(path, "checkpoint path") {
        Ok(p) => p,
        Err(status) => return status,
    };
    match refnet::load(Path::new(path)) {
        Ok(params) => write_out(out, HpNet(params)),
        Err(e) => fail_with(&e),
    }
}

/// Decode a checkpoint already held in memory.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` a valid slot.
#[no_mangle]
pub unsafe extern "C" fn hp_checkpoint_decode(
    bytes: *const u8,
    len: usize,
    out: *mut *mut HpNet,
) -> HpStatus {
    if bytes.is_null() {
        return fail(HpStatus::NullArgument, "bytes pointer is null");
    }
    let slice = std::slice::from_raw_parts(bytes, len);
    match refnet::decode_checkpoint(slice) {
        Ok(params) => write_out(out, HpNet(params)),
        Err(e) => fail_with(&e),
    }
}

/// # Safety
/// `net` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn hp_net_input_side(net: *const HpNet) -> u32 {
    if net.is_null() {
        return 0;
    }
    (*net).0.arch().input_side() as u32
}

/// Classify one image: it is bicubic-resized to the network input side,
/// normalized and run through the forward pass. Writes 4 probabilities
/// and the argmax label (lowest index wins ties).
///
/// # Safety
/// `net` and `img` must be live handles; `out_probs` must point to 4
/// writable doubles; `out_label` to a writable byte.
#[no_mangle]
pub unsafe extern "C" fn hp_net_predict_image(
    net: *const HpNet,
    img: *const HpImage,
    out_probs: *mut f64,
    out_label: *mut u8,
) -> HpStatus {
    if net.is_null() || img.is_null() || out_probs.is_null() || out_label.is_null() {
        return fail(HpStatus::NullArgument, "handle or out pointer is null");
    }
    let params = &(*net).0;
    let side = params.arch().input_side() as u32;
    let patch = Patch::new("ffi", 0, (*img).0.clone());
    match predict_patch(params, &patch, side, "ffi") {
        Ok(record) => {
            let probs = record.probs.unwrap_or([0.0; 4]);
            std::ptr::copy_nonoverlapping(probs.as_ptr(), out_probs, 4);
            *out_label = record.label.index() as u8;
            HpStatus::Ok
        }
        Err(e) => fail_with(&e),
    }
}

/// # Safety
/// `net` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn hp_net_free(net: *mut HpNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

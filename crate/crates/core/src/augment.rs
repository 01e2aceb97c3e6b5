//! Patch augmentation: the deterministic eight-fold dihedral expansion
//! and the stochastic per-batch pipeline (elastic scaling, brightness/
//! contrast, Gaussian blur, pixel-swap noise, resample jitter).
//!
//! Every random draw comes from a per-(item, epoch, stage) stream, so a
//! batch augments to identical bytes no matter how many workers run it or
//! how the batch is composed.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::patching::Patch;
use crate::raster::{bicubic_resize, quantize_sample, RasterImage, RotationFlip, BYTES_PER_PIXEL};
use crate::rng::{stream_for_item, ItemKey, SplitMix64, StageId};

/// Parameter ranges and stage toggles for the stochastic pipeline.
/// Defaults follow the reference procedure: axis scaling 0.7-1.3, gain
/// and offset within +/-0.2, blur sigma 0.3-0.6, 1% pixel noise, and
/// resampling to 80-99% of the original size.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    /// Gain is 1 + delta with delta drawn from [-alpha_delta_range, +range].
    pub alpha_delta_range: f64,
    /// Offset drawn from [-beta_range, +beta_range], as a fraction of the
    /// full dynamic range (so 0.2 means +/-20% of 255).
    pub beta_range: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub noise_fraction: f64,
    pub resample_min: f64,
    pub resample_max: f64,
    pub enable_elastic: bool,
    pub enable_brightness_contrast: bool,
    pub enable_blur: bool,
    pub enable_noise: bool,
    pub enable_resample: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scale_min: 0.7,
            scale_max: 1.3,
            alpha_delta_range: 0.2,
            beta_range: 0.2,
            sigma_min: 0.3,
            sigma_max: 0.6,
            noise_fraction: 0.01,
            resample_min: 0.80,
            resample_max: 0.99,
            enable_elastic: true,
            enable_brightness_contrast: true,
            enable_blur: true,
            enable_noise: true,
            enable_resample: true,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.scale_min,
            self.scale_max,
            self.alpha_delta_range,
            self.beta_range,
            self.sigma_min,
            self.sigma_max,
            self.noise_fraction,
            self.resample_min,
            self.resample_max,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("augment config contains non-finite values"));
        }
        if self.scale_min <= 0.0 || self.scale_min > self.scale_max {
            return Err(Error::validation(format!(
                "scale bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.scale_min, self.scale_max
            )));
        }
        if self.alpha_delta_range < 0.0 || self.beta_range < 0.0 {
            return Err(Error::validation(
                "alpha_delta_range and beta_range must be nonnegative",
            ));
        }
        if self.sigma_min <= 0.0 || self.sigma_min > self.sigma_max {
            return Err(Error::validation(format!(
                "sigma bounds must satisfy 0 < min <= max, got [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::validation(format!(
                "noise_fraction must be in [0,1], got {}",
                self.noise_fraction
            )));
        }
        if self.resample_min <= 0.0 || self.resample_min > self.resample_max || self.resample_max > 1.0
        {
            return Err(Error::validation(format!(
                "resample bounds must satisfy 0 < min <= max <= 1, got [{}, {}]",
                self.resample_min, self.resample_max
            )));
        }
        Ok(())
    }

    pub fn disable_all_stages(&mut self) {
        self.enable_elastic = false;
        self.enable_brightness_contrast = false;
        self.enable_blur = false;
        self.enable_noise = false;
        self.enable_resample = false;
    }

    pub fn any_stage_enabled(&self) -> bool {
        self.enable_elastic
            || self.enable_brightness_contrast
            || self.enable_blur
            || self.enable_noise
            || self.enable_resample
    }

    /// Parse a flat `key=value` config (one per line, `#` comments).
    /// Unknown keys and bad values report the offending line.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut cfg = AugmentConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(source_name, lineno, format!("expected key=value, got '{line}'"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let fval = || -> Result<f64> {
                value.parse().map_err(|_| {
                    Error::parse(source_name, lineno, format!("bad number '{value}' for key '{key}'"))
                })
            };
            let bval = || -> Result<bool> {
                match value {
                    "true" | "1" => Ok(true),
                    "false" | "0" => Ok(false),
                    _ => Err(Error::parse(
                        source_name,
                        lineno,
                        format!("bad bool '{value}' for key '{key}' (use true/false)"),
                    )),
                }
            };
            match key {
                "scale_min" => cfg.scale_min = fval()?,
                "scale_max" => cfg.scale_max = fval()?,
                "alpha_delta_range" => cfg.alpha_delta_range = fval()?,
                "beta_range" => cfg.beta_range = fval()?,
                "sigma_min" => cfg.sigma_min = fval()?,
                "sigma_max" => cfg.sigma_max = fval()?,
                "noise_fraction" => cfg.noise_fraction = fval()?,
                "resample_min" => cfg.resample_min = fval()?,
                "resample_max" => cfg.resample_max = fval()?,
                "enable_elastic" => cfg.enable_elastic = bval()?,
                "enable_brightness_contrast" => cfg.enable_brightness_contrast = bval()?,
                "enable_blur" => cfg.enable_blur = bval()?,
                "enable_noise" => cfg.enable_noise = bval()?,
                "enable_resample" => cfg.enable_resample = bval()?,
                other => {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("unknown key '{other}'"),
                    ))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Render in the same flat format `parse` reads.
    pub fn to_key_values(&self) -> String {
        format!(
            "scale_min={}\nscale_max={}\nalpha_delta_range={}\nbeta_range={}\n\
             sigma_min={}\nsigma_max={}\nnoise_fraction={}\nresample_min={}\nresample_max={}\n\
             enable_elastic={}\nenable_brightness_contrast={}\nenable_blur={}\n\
             enable_noise={}\nenable_resample={}\n",
            self.scale_min,
            self.scale_max,
            self.alpha_delta_range,
            self.beta_range,
            self.sigma_min,
            self.sigma_max,
            self.noise_fraction,
            self.resample_min,
            self.resample_max,
            self.enable_elastic,
            self.enable_brightness_contrast,
            self.enable_blur,
            self.enable_noise,
            self.enable_resample,
        )
    }
}

/// The eight dihedral variants of a patch: rotate90(p, k) for k in 0..=3,
/// then the vertically flipped version of each, in that fixed order.
pub fn expand_eight(p: &Patch) -> Vec<Patch> {
    RotationFlip::ALL
        .iter()
        .map(|g| p.with_pixels(g.apply(&p.pixels)))
        .collect()
}

/// Symmetric reflection of index i into [0, n): the edge sample is
/// repeated in the mirror (..., s1, s0 | s0, s1, ...). Used for both
/// reflect-padding and blur borders.
#[inline]
fn reflect_index(i: i64, n: i64) -> usize {
    debug_assert!(n >= 1);
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - 1 - j;
    }
    j as usize
}

/// Per-axis index map realizing "center-crop when larger, reflect-pad
/// when smaller".
fn axis_restore_map(current: u32, target: u32) -> Vec<u32> {
    if current >= target {
        let off = (current - target) / 2;
        (0..target).map(|i| i + off).collect()
    } else {
        let pad_left = (target - current) / 2;
        (0..target)
            .map(|i| reflect_index(i as i64 - pad_left as i64, current as i64) as u32)
            .collect()
    }
}

/// Stretch/compress the patch content by (sx, sy), then restore the
/// original dimensions: center-crop on axes that grew, reflect-pad on
/// axes that shrank.
pub fn elastic_scale(p: &Patch, sx: f64, sy: f64) -> Patch {
    let (w, h) = (p.pixels.width(), p.pixels.height());
    let nw = ((w as f64 * sx).round() as u32).max(1);
    let nh = ((h as f64 * sy).round() as u32).max(1);
    let scaled = bicubic_resize(&p.pixels, nw, nh);
    if nw == w && nh == h {
        return p.with_pixels(scaled);
    }
    let xmap = axis_restore_map(nw, w);
    let ymap = axis_restore_map(nh, h);
    let restored = RasterImage::from_fn(w, h, |x, y| {
        scaled.pixel(xmap[x as usize], ymap[y as usize])
    });
    p.with_pixels(restored)
}

/// Affine photometric map g = (1 + alpha_delta) * v + beta * 255 per
/// channel sample, clamped and rounded half away from zero.
pub fn brightness_contrast(p: &Patch, alpha_delta: f64, beta: f64) -> Patch {
    let gain = 1.0 + alpha_delta;
    let offset = beta * 255.0;
    let data = p
        .pixels
        .data()
        .iter()
        .map(|&v| quantize_sample(gain * v as f64 + offset))
        .collect();
    p.with_pixels(RasterImage::new(p.pixels.width(), p.pixels.height(), data))
}

/// Normalized 1-D Gaussian taps for offsets -r..=r with r = ceil(3*sigma).
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive, got {sigma}");
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur: horizontal then vertical 1-D passes in f64,
/// reflected borders, quantized once after the second pass.
pub fn gaussian_blur(p: &Patch, sigma: f64) -> Patch {
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as i64;
    let (w, h) = (p.pixels.width() as usize, p.pixels.height() as usize);
    let src = p.pixels.data();

    let mut mid = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..BYTES_PER_PIXEL {
                let mut acc = 0.0;
                for (ti, tap) in taps.iter().enumerate() {
                    let sx = reflect_index(x as i64 + ti as i64 - r, w as i64);
                    acc += tap * src[(y * w + sx) * BYTES_PER_PIXEL + ch] as f64;
                }
                mid[(y * w + x) * BYTES_PER_PIXEL + ch] = acc;
            }
        }
    }

    let mut out = vec![0u8; src.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..BYTES_PER_PIXEL {
                let mut acc = 0.0;
                for (ti, tap) in taps.iter().enumerate() {
                    let sy = reflect_index(y as i64 + ti as i64 - r, h as i64);
                    acc += tap * mid[(sy * w + x) * BYTES_PER_PIXEL + ch];
                }
                out[(y * w + x) * BYTES_PER_PIXEL + ch] = quantize_sample(acc);
            }
        }
    }
    p.with_pixels(RasterImage::new(w as u32, h as u32, out))
}

/// Replace round(fraction * w * h) pixels, chosen uniformly without
/// replacement, with the RGB triplet of a uniformly chosen *other*
/// position, read from the original patch so replacements never cascade.
pub fn uniform_noise(p: &Patch, fraction: f64, stream: &mut SplitMix64) -> Patch {
    assert!(
        (0.0..=1.0).contains(&fraction),
        "noise fraction must be in [0,1], got {fraction}"
    );
    let n_pixels = p.pixels.width() as usize * p.pixels.height() as usize;
    let n = (fraction * n_pixels as f64).round() as usize;
    if n == 0 || n_pixels < 2 {
        return p.clone();
    }
    let targets = stream.sample_indices(n_pixels, n);
    let original = p.pixels.data().to_vec();
    let mut out = original.clone();
    for &t in &targets {
        let mut s = stream.below(n_pixels as u64 - 1) as usize;
        if s >= t {
            s += 1;
        }
        out[t * BYTES_PER_PIXEL..(t + 1) * BYTES_PER_PIXEL]
            .copy_from_slice(&original[s * BYTES_PER_PIXEL..(s + 1) * BYTES_PER_PIXEL]);
    }
    p.with_pixels(RasterImage::new(p.pixels.width(), p.pixels.height(), out))
}

/// Bicubic downscale to round(dim * factor) then back up to the original
/// size; a mild low-pass.
pub fn resample_jitter(p: &Patch, factor: f64) -> Patch {
    let (w, h) = (p.pixels.width(), p.pixels.height());
    let dw = ((w as f64 * factor).round() as u32).max(1);
    let dh = ((h as f64 * factor).round() as u32).max(1);
    let down = bicubic_resize(&p.pixels, dw, dh);
    p.with_pixels(bicubic_resize(&down, w, h))
}

/// One logged parameter draw, for range-containment audits.
#[derive(Clone, Debug)]
pub struct DrawRecord {
    pub image_id: String,
    pub grid_index: u32,
    pub epoch: u32,
    pub stage: StageId,
    pub params: Vec<(&'static str, f64)>,
}

impl DrawRecord {
    pub fn log_line(&self) -> String {
        let params = self
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        format!(
            "{},{},{},{},{}",
            self.image_id,
            self.grid_index,
            self.epoch,
            self.stage.name(),
            params
        )
    }
}

fn augment_one(
    p: &Patch,
    cfg: &AugmentConfig,
    master_seed: u64,
    epoch: u32,
) -> (Patch, Vec<DrawRecord>) {
    let key = |stage: StageId| ItemKey {
        image_id: &p.image_id,
        grid_index: p.grid_index,
        epoch,
        stage,
    };
    let record = |stage: StageId, params: Vec<(&'static str, f64)>| DrawRecord {
        image_id: p.image_id.clone(),
        grid_index: p.grid_index,
        epoch,
        stage,
        params,
    };

    let mut out = p.clone();
    let mut draws = Vec::new();

    if cfg.enable_elastic {
        let mut s = stream_for_item(master_seed, &key(StageId::Elastic));
        let sx = s.uniform(cfg.scale_min, cfg.scale_max);
        let sy = s.uniform(cfg.scale_min, cfg.scale_max);
        out = elastic_scale(&out, sx, sy);
        draws.push(record(StageId::Elastic, vec![("sx", sx), ("sy", sy)]));
    }
    if cfg.enable_brightness_contrast {
        let mut s = stream_for_item(master_seed, &key(StageId::BrightnessContrast));
        let alpha_delta = s.uniform(-cfg.alpha_delta_range, cfg.alpha_delta_range);
        let beta = s.uniform(-cfg.beta_range, cfg.beta_range);
        out = brightness_contrast(&out, alpha_delta, beta);
        draws.push(record(
            StageId::BrightnessContrast,
            vec![("alpha_delta", alpha_delta), ("beta", beta)],
        ));
    }
    if cfg.enable_blur {
        let mut s = stream_for_item(master_seed, &key(StageId::Blur));
        let sigma = s.uniform(cfg.sigma_min, cfg.sigma_max);
        out = gaussian_blur(&out, sigma);
        draws.push(record(StageId::Blur, vec![("sigma", sigma)]));
    }
    if cfg.enable_noise {
        let mut s = stream_for_item(master_seed, &key(StageId::Noise));
        out = uniform_noise(&out, cfg.noise_fraction, &mut s);
        draws.push(record(
            StageId::Noise,
            vec![("fraction", cfg.noise_fraction)],
        ));
    }
    if cfg.enable_resample {
        let mut s = stream_for_item(master_seed, &key(StageId::Resample));
        let factor = s.uniform(cfg.resample_min, cfg.resample_max);
        out = resample_jitter(&out, factor);
        draws.push(record(StageId::Resample, vec![("factor", factor)]));
    }
    (out, draws)
}

/// Apply the enabled stages to every patch, in the fixed order elastic ->
/// brightness/contrast -> blur -> noise -> resample. Output order matches
/// input order and is a pure function of (inputs, cfg, master_seed,
/// epoch). Panics if cfg fails validation.
pub fn augment_batch(
    patches: &[Patch],
    cfg: &AugmentConfig,
    master_seed: u64,
    epoch: u32,
) -> Vec<Patch> {
    augment_batch_logged(patches, cfg, master_seed, epoch).0
}

/// As `augment_batch` but also returns every parameter draw, ordered by
/// input patch then stage.
pub fn augment_batch_logged(
    patches: &[Patch],
    cfg: &AugmentConfig,
    master_seed: u64,
    epoch: u32,
) -> (Vec<Patch>, Vec<DrawRecord>) {
    cfg.validate().expect("invalid augment config");
    let results: Vec<(Patch, Vec<DrawRecord>)> = patches
        .par_iter()
        .map(|p| augment_one(p, cfg, master_seed, epoch))
        .collect();
    let mut out = Vec::with_capacity(results.len());
    let mut draws = Vec::new();
    for (p, d) in results {
        out.push(p);
        draws.extend(d);
    }
    (out, draws)
}

/// Run `augment_batch_logged` on a dedicated pool of `workers` threads.
/// The contract is byte-identical output for any worker count.
pub fn augment_batch_with_workers(
    patches: &[Patch],
    cfg: &AugmentConfig,
    master_seed: u64,
    epoch: u32,
    workers: usize,
) -> (Vec<Patch>, Vec<DrawRecord>) {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("failed to build worker pool");
    pool.install(|| augment_batch_logged(patches, cfg, master_seed, epoch))
}

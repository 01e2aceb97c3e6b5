//! Shared helpers for integration tests: synthetic datasets and a runner
//! for the CLI binary.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histopatch::aggregate::ClassLabel;
use histopatch::raster::{ImageFormat, RasterImage};
use histopatch::rng::SplitMix64;

pub fn random_image(w: u32, h: u32, seed: u64) -> RasterImage {
    let mut rng = SplitMix64::new(seed);
    RasterImage::from_fn(w, h, |_, _| {
        [
            rng.next_u64() as u8,
            rng.next_u64() as u8,
            rng.next_u64() as u8,
        ]
    })
}

/// Noisy constant-color image; class-separable but not trivially uniform.
/// The palette sits near mid-grey so He-initialized logits stay small.
pub fn class_image(w: u32, h: u32, class: usize, seed: u64) -> RasterImage {
    let base: [[i32; 3]; 4] = [
        [150, 105, 105],
        [105, 150, 105],
        [105, 105, 150],
        [150, 150, 105],
    ];
    let mut rng = SplitMix64::new(seed);
    RasterImage::from_fn(w, h, |_, _| {
        let jitter = (rng.below(31) as i32) - 15;
        let px = base[class];
        [
            (px[0] + jitter).clamp(0, 255) as u8,
            (px[1] + jitter).clamp(0, 255) as u8,
            (px[2] + jitter).clamp(0, 255) as u8,
        ]
    })
}

/// Write `count` class-separable images plus a manifest CSV; returns the
/// manifest path.
pub fn write_synthetic_manifest(dir: &Path, count: usize, w: u32, h: u32) -> PathBuf {
    let img_dir = dir.join("images");
    fs::create_dir_all(&img_dir).unwrap();
    let mut manifest = String::from("image_id,path,label\n");
    for i in 0..count {
        let class = i % 4;
        let img = class_image(w, h, class, 1000 + i as u64);
        let path = img_dir.join(format!("img{i:02}.ppm"));
        fs::write(&path, img.encode(ImageFormat::Ppm).unwrap()).unwrap();
        manifest.push_str(&format!(
            "img{i:02},{},{}\n",
            path.display(),
            ClassLabel::from_index(class).unwrap()
        ));
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).unwrap();
    manifest_path
}

pub fn histopatch_bin() -> &'static str {
    env!("CARGO_BIN_EXE_histopatch")
}

pub fn run_cli(args: &[&str]) -> Output {
    Command::new(histopatch_bin())
        .args(args)
        .output()
        .expect("failed to spawn histopatch binary")
}

pub fn run_cli_ok(args: &[&str]) -> Output {
    let out = run_cli(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

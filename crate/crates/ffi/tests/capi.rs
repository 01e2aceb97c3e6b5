//! Exercises the C ABI end to end: direct calls from Rust, header
//! coverage of every exported symbol, and a real C program compiled
//! against include/histopatch.h and the static library.

use std::ffi::CString;
use std::fs;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use histopatch_ffi::*;

fn ppm_red_2x1() -> Vec<u8> {
    b"P6\n2 1\n255\n\xff\x00\x00\x00\xff\x00".to_vec()
}

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    let n = unsafe { hp_last_error_message(buf.as_mut_ptr() as *mut _, buf.len()) };
    let bytes: Vec<u8> = buf.iter().take(n.min(buf.len() - 1)).map(|&b| b as u8).collect();
    String::from_utf8_lossy(&bytes).into_owned()
}

#[test]
fn decode_inspect_encode_round_trip() {
    unsafe {
        let bytes = ppm_red_2x1();
        let mut img: *mut HpImage = ptr::null_mut();
        assert_eq!(
            hp_image_decode(bytes.as_ptr(), bytes.len(), &mut img),
            HpStatus::Ok
        );
        assert_eq!(hp_image_width(img), 2);
        assert_eq!(hp_image_height(img), 1);
        let px = std::slice::from_raw_parts(hp_image_pixels(img), 6);
        assert_eq!(px, &[255, 0, 0, 0, 255, 0]);

        let mut buf: *mut HpBuffer = ptr::null_mut();
        assert_eq!(hp_image_encode(img, 0, &mut buf), HpStatus::Ok);
        let encoded =
            std::slice::from_raw_parts(hp_buffer_data(buf), hp_buffer_len(buf)).to_vec();
        assert_eq!(encoded, bytes);

        hp_buffer_free(buf);
        hp_image_free(img);
    }
}

#[test]
fn malformed_input_reports_status_and_message() {
    unsafe {
        let bytes = b"P6\n2 2\n255\nxxx";
        let mut img: *mut HpImage = ptr::null_mut();
        let status = hp_image_decode(bytes.as_ptr(), bytes.len(), &mut img);
        assert_eq!(status, HpStatus::MalformedFile);
        assert!(last_error().contains("truncated"), "message: {}", last_error());
    }
}

#[test]
fn null_arguments_are_rejected() {
    unsafe {
        let mut img: *mut HpImage = ptr::null_mut();
        assert_eq!(
            hp_image_decode(ptr::null(), 0, &mut img),
            HpStatus::NullArgument
        );
        assert_eq!(hp_image_width(ptr::null()), 0);
        hp_image_free(ptr::null_mut()); // must be a no-op
    }
}

#[test]
fn rotate_and_expand_follow_library_semantics() {
    unsafe {
        let bytes = ppm_red_2x1();
        let mut img: *mut HpImage = ptr::null_mut();
        hp_image_decode(bytes.as_ptr(), bytes.len(), &mut img);

        let mut rot: *mut HpImage = ptr::null_mut();
        assert_eq!(hp_image_rotate90(img, 1, &mut rot), HpStatus::Ok);
        assert_eq!((hp_image_width(rot), hp_image_height(rot)), (1, 2));
        let px = std::slice::from_raw_parts(hp_image_pixels(rot), 6);
        // CCW: right pixel (green) lands on the top row
        assert_eq!(px, &[0, 255, 0, 255, 0, 0]);

        let mut bad: *mut HpImage = ptr::null_mut();
        assert_eq!(hp_image_rotate90(img, 4, &mut bad), HpStatus::InvalidArgument);

        let mut list: *mut HpImageList = ptr::null_mut();
        assert_eq!(hp_image_expand_eight(img, &mut list), HpStatus::Ok);
        assert_eq!(hp_image_list_len(list), 8);
        let mut first: *mut HpImage = ptr::null_mut();
        assert_eq!(hp_image_list_get(list, 0, &mut first), HpStatus::Ok);
        let first_px = std::slice::from_raw_parts(hp_image_pixels(first), 6);
        assert_eq!(first_px, &[255, 0, 0, 0, 255, 0], "variant 0 is the input");

        hp_image_free(first);
        hp_image_list_free(list);
        hp_image_free(rot);
        hp_image_free(img);
    }
}

#[test]
fn patch_extraction_counts() {
    unsafe {
        let mut rgb = Vec::new();
        for i in 0..(8 * 6 * 3) {
            rgb.push((i % 251) as u8);
        }
        let mut img: *mut HpImage = ptr::null_mut();
        assert_eq!(hp_image_from_pixels(8, 6, rgb.as_ptr(), &mut img), HpStatus::Ok);
        let mut list: *mut HpImageList = ptr::null_mut();
        assert_eq!(hp_image_extract_patches(img, 4, 3, &mut list), HpStatus::Ok);
        assert_eq!(hp_image_list_len(list), 12);
        let mut p: *mut HpImage = ptr::null_mut();
        hp_image_list_get(list, 0, &mut p);
        assert_eq!((hp_image_width(p), hp_image_height(p)), (2, 2));
        hp_image_free(p);
        hp_image_list_free(list);
        hp_image_free(img);
    }
}

#[test]
fn augment_is_deterministic_per_identity() {
    unsafe {
        let mut rgb = Vec::new();
        for i in 0..(20 * 20 * 3) {
            rgb.push((i * 7 % 256) as u8);
        }
        let mut img: *mut HpImage = ptr::null_mut();
        hp_image_from_pixels(20, 20, rgb.as_ptr(), &mut img);
        let mut cfg: *mut HpAugmentConfig = ptr::null_mut();
        assert_eq!(hp_augment_config_default(&mut cfg), HpStatus::Ok);

        let id = CString::new("imgZ").unwrap();
        let run = |img: *const HpImage, cfg: *const HpAugmentConfig| -> Vec<u8> {
            let mut out: *mut HpImage = ptr::null_mut();
            assert_eq!(
                hp_augment_image(img, cfg, id.as_ptr(), 3, 99, 1, &mut out),
                HpStatus::Ok
            );
            let px =
                std::slice::from_raw_parts(hp_image_pixels(out), 20 * 20 * 3).to_vec();
            hp_image_free(out);
            px
        };
        let a = run(img, cfg);
        let b = run(img, cfg);
        assert_eq!(a, b, "same identity must reproduce identical bytes");

        hp_augment_config_free(cfg);
        hp_image_free(img);
    }
}

#[test]
fn config_parse_rejects_unknown_keys() {
    unsafe {
        let text = CString::new("definitely_not_a_key=1\n").unwrap();
        let mut cfg: *mut HpAugmentConfig = ptr::null_mut();
        assert_eq!(
            hp_augment_config_parse(text.as_ptr(), &mut cfg),
            HpStatus::ValidationError
        );
        assert!(last_error().contains("definitely_not_a_key"));
    }
}

#[test]
fn majority_vote_ties_break_low() {
    unsafe {
        let votes = [0u8, 0, 1, 1, 2, 2, 3, 3];
        let mut winner = 42u8;
        assert_eq!(
            hp_majority_vote(votes.as_ptr(), votes.len(), &mut winner),
            HpStatus::Ok
        );
        assert_eq!(winner, 0);

        let bad = [9u8];
        assert_eq!(
            hp_majority_vote(bad.as_ptr(), 1, &mut winner),
            HpStatus::InvalidArgument
        );
    }
}

#[test]
fn version_is_a_c_string() {
    unsafe {
        let v = std::ffi::CStr::from_ptr(hp_version());
        assert!(!v.to_str().unwrap().is_empty());
    }
}

fn exported_symbols() -> Vec<String> {
    let src = include_str!("../src/lib.rs");
    let mut out = Vec::new();
    for line in src.lines() {
        let line = line.trim();
        for prefix in ["pub extern \"C\" fn ", "pub unsafe extern \"C\" fn "] {
            if let Some(rest) = line.strip_prefix(prefix) {
                if let Some(name) = rest.split('(').next() {
                    out.push(name.trim().to_string());
                }
            }
        }
    }
    assert!(out.len() >= 20, "symbol scan looks broken: {out:?}");
    out
}

#[test]
fn generated_header_covers_every_symbol() {
    let header_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/histopatch.h");
    let header = fs::read_to_string(&header_path).expect("header must be generated by build.rs");
    for sym in exported_symbols() {
        assert!(
            header.contains(&format!("{sym}(")),
            "symbol '{sym}' missing from histopatch.h"
        );
    }
    assert!(header.contains("HP_STATUS_OK"));
}

#[test]
fn c_program_links_and_runs_against_the_abi() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let include_dir = manifest.join("include");
    let release = !cfg!(debug_assertions);

    // `cargo test` only builds the rlib; materialize the staticlib.
    let mut build = Command::new(env!("CARGO"));
    build.args(["build", "-p", "histopatch-ffi"]);
    if release {
        build.arg("--release");
    }
    let built = build.output().unwrap();
    assert!(
        built.status.success(),
        "staticlib build failed: {}",
        String::from_utf8_lossy(&built.stderr)
    );

    let lib_dir = manifest.join(format!(
        "../../target/{}",
        if release { "release" } else { "debug" }
    ));
    let lib = lib_dir.join("libhistopatch_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());

    let cc = ["cc", "gcc", "clang"]
        .iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok())
        .expect("no C compiler available");

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    fs::write(
        &src,
        r#"
#include <stdio.h>
#include <string.h>
#include "histopatch.h"

int main(void) {
    const unsigned char ppm[] = "P6\n2 1\n255\n\xff\x00\x00\x00\xff\x00";
    HpImage *img = NULL;
    if (hp_image_decode(ppm, sizeof(ppm) - 1, &img) != HP_STATUS_OK) return 1;
    if (hp_image_width(img) != 2 || hp_image_height(img) != 1) return 2;

    HpImage *rot = NULL;
    if (hp_image_rotate90(img, 1, &rot) != HP_STATUS_OK) return 3;
    if (hp_image_width(rot) != 1 || hp_image_height(rot) != 2) return 4;

    HpImageList *variants = NULL;
    if (hp_image_expand_eight(img, &variants) != HP_STATUS_OK) return 5;
    if (hp_image_list_len(variants) != 8) return 6;

    unsigned char votes[] = {2, 2, 1, 2};
    unsigned char winner = 0;
    if (hp_majority_vote(votes, 4, &winner) != HP_STATUS_OK || winner != 2) return 7;

    /* error path: bad magic must fail with a message */
    HpImage *bad = NULL;
    const unsigned char junk[] = "JUNK";
    if (hp_image_decode(junk, 4, &bad) == HP_STATUS_OK) return 8;
    char msg[128];
    hp_last_error_message(msg, sizeof msg);
    if (strlen(msg) == 0) return 9;

    hp_image_list_free(variants);
    hp_image_free(rot);
    hp_image_free(img);
    printf("c-abi-smoke-ok\n");
    return 0;
}
"#,
    )
    .unwrap();

    let exe = dir.path().join("smoke");
    let compile = Command::new(cc)
        .arg(&src)
        .arg("-I")
        .arg(&include_dir)
        .arg(lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "C compile failed: {}",
        String::from_utf8_lossy(&compile.stderr)
    );
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "C smoke test exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c-abi-smoke-ok"));
}

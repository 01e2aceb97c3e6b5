//! CLI contract tests: exit codes, error messages naming the offending
//! input, and the documented output formats.

mod common;

use std::fs;

use histopatch::aggregate::{write_prediction_file, ClassLabel, PredictionRecord};

use common::{run_cli, run_cli_ok, write_synthetic_manifest};

fn stderr_of(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn empty_manifest_yields_empty_index_and_success() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.csv");
    fs::write(&manifest, "image_id,path,label\n").unwrap();
    let out_dir = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let index = fs::read_to_string(out_dir.join("index.csv")).unwrap();
    assert_eq!(index, "file,image_id,grid_index,label\n");
}

#[test]
fn unreadable_file_fails_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("manifest.csv");
    fs::write(
        &manifest,
        "image_id,path,label\nimgX,/nonexistent/imgX.ppm,Normal\n",
    )
    .unwrap();
    let out = run_cli(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        dir.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("/nonexistent/imgX.ppm"),
        "stderr must name the missing file: {}",
        stderr_of(&out)
    );
}

#[test]
fn bad_config_key_fails_naming_the_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_manifest(dir.path(), 4, 40, 24);
    let manifest = dir.path().join("manifest.csv");
    let patches = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        patches.to_str().unwrap(),
    ]);

    let cfg = dir.path().join("augment.cfg");
    fs::write(&cfg, "scale_min=0.7\nnot_a_real_key=3\n").unwrap();
    let out = run_cli(&[
        "augment",
        "--patches",
        patches.to_str().unwrap(),
        "--out",
        dir.path().join("aug").to_str().unwrap(),
        "--seed",
        "1",
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("not_a_real_key"), "stderr: {err}");
    assert!(err.contains(":2:"), "stderr must carry the line number: {err}");
}

#[test]
fn expand8_without_stochastic_multiplies_by_eight() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_manifest(dir.path(), 1, 40, 24);
    let manifest = dir.path().join("manifest.csv");
    let patches = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        patches.to_str().unwrap(),
    ]);
    let aug = dir.path().join("aug");
    run_cli_ok(&[
        "augment",
        "--patches",
        patches.to_str().unwrap(),
        "--out",
        aug.to_str().unwrap(),
        "--seed",
        "1",
        "--expand8",
        "--no-stochastic",
    ]);
    let count = fs::read_dir(&aug)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "ppm")
        })
        .count();
    assert_eq!(count, 96, "12 patches x 8 variants");
}

#[test]
fn augment_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_manifest(dir.path(), 2, 40, 24);
    let manifest = dir.path().join("manifest.csv");
    let patches = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        patches.to_str().unwrap(),
    ]);
    let run = |name: &str| {
        let out = dir.path().join(name);
        run_cli_ok(&[
            "augment",
            "--patches",
            patches.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "9",
            "--epoch",
            "2",
        ]);
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| (p.file_name().unwrap().to_owned(), fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn draw_log_lists_every_stage_draw() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_manifest(dir.path(), 1, 40, 24);
    let manifest = dir.path().join("manifest.csv");
    let patches = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        patches.to_str().unwrap(),
    ]);
    let log = dir.path().join("draws.txt");
    run_cli_ok(&[
        "augment",
        "--patches",
        patches.to_str().unwrap(),
        "--out",
        dir.path().join("aug").to_str().unwrap(),
        "--seed",
        "4",
        "--draw-log",
        log.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&log).unwrap();
    // 12 patches x 5 stages + header
    assert_eq!(text.lines().count(), 61, "log:\n{text}");
    assert!(text.lines().any(|l| l.contains(",elastic,sx=")));
    assert!(text.lines().any(|l| l.contains(",blur,sigma=")));
}

#[test]
fn vote_missing_patch_fails_with_image_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut records: Vec<PredictionRecord> = (0..12)
        .map(|i| PredictionRecord::from_label("imgA", i, "m", ClassLabel::Benign))
        .collect();
    records.remove(7);
    let mut buf = Vec::new();
    write_prediction_file(&mut buf, &records).unwrap();
    let preds = dir.path().join("preds.csv");
    fs::write(&preds, buf).unwrap();

    let out = run_cli(&[
        "vote",
        "--pred",
        preds.to_str().unwrap(),
        "--out",
        dir.path().join("d.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("imgA"), "stderr: {err}");
}

#[test]
fn vote_single_file_gives_one_label_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let mut records = Vec::new();
    for img in ["a", "b", "c"] {
        for i in 0..12 {
            records.push(PredictionRecord::from_label(img, i, "m", ClassLabel::InSitu));
        }
    }
    let mut buf = Vec::new();
    write_prediction_file(&mut buf, &records).unwrap();
    let preds = dir.path().join("preds.csv");
    fs::write(&preds, buf).unwrap();
    let decisions = dir.path().join("decisions.csv");
    run_cli_ok(&[
        "vote",
        "--pred",
        preds.to_str().unwrap(),
        "--out",
        decisions.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&decisions).unwrap();
    assert_eq!(text, "image_id,label\na,InSitu\nb,InSitu\nc,InSitu\n");
}

#[test]
fn committee_vote_matches_library_aggregation() {
    // three prediction files over the same split; the M=1 subset must
    // reproduce single-model decisions
    let dir = tempfile::tempdir().unwrap();
    let make_file = |name: &str, model: &str, labels: [ClassLabel; 2], counts: [usize; 2]| {
        let mut records = Vec::new();
        let mut idx = 0u32;
        for (label, count) in labels.iter().zip(counts) {
            for _ in 0..count {
                records.push(PredictionRecord::from_label("img", idx, model, *label));
                idx += 1;
            }
        }
        let mut buf = Vec::new();
        write_prediction_file(&mut buf, &records).unwrap();
        let path = dir.path().join(name);
        fs::write(&path, buf).unwrap();
        path
    };
    use ClassLabel::{InSitu, Normal};
    let f1 = make_file("m1.csv", "m1", [InSitu, Normal], [7, 5]);
    let f2 = make_file("m2.csv", "m2", [Normal, InSitu], [7, 5]);
    let f3 = make_file("m3.csv", "m3", [InSitu, Normal], [7, 5]);

    // single file: majority of m2 is Normal
    let single = dir.path().join("single.csv");
    run_cli_ok(&[
        "vote",
        "--pred",
        f2.to_str().unwrap(),
        "--out",
        single.to_str().unwrap(),
    ]);
    assert!(fs::read_to_string(&single)
        .unwrap()
        .contains("img,Normal"));

    // committee of three: pooled votes 19 InSitu vs 17 Normal
    let committee = dir.path().join("committee.csv");
    run_cli_ok(&[
        "vote",
        "--pred",
        f1.to_str().unwrap(),
        "--pred",
        f2.to_str().unwrap(),
        "--pred",
        f3.to_str().unwrap(),
        "--out",
        committee.to_str().unwrap(),
    ]);
    assert!(fs::read_to_string(&committee)
        .unwrap()
        .contains("img,InSitu"));
}

#[test]
fn eval_without_models_emits_header_only_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.csv");
    fs::write(&truth, "image_id,label\na,Normal\n").unwrap();
    let report = dir.path().join("report");
    run_cli_ok(&[
        "eval",
        "--truth",
        truth.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    for block in ["patchwise.csv", "imagewise.csv", "perclass.csv", "binary.csv"] {
        let text = fs::read_to_string(report.join(block)).unwrap();
        assert_eq!(text.lines().count(), 1, "{block} should be header-only");
        assert!(text.starts_with("model,"), "{block} header: {text}");
    }
}

#[test]
fn run_metadata_written_alongside_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_manifest(dir.path(), 1, 40, 24);
    let manifest = dir.path().join("manifest.csv");
    let patches = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        patches.to_str().unwrap(),
    ]);
    let md = fs::read_to_string(patches.join("run_metadata.txt")).unwrap();
    assert!(md.contains("command=patch"));
    assert!(md.contains("tool_version="));
    assert!(md.contains("input_digest.manifest="));

    let split = dir.path().join("split.csv");
    run_cli_ok(&[
        "split",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        split.to_str().unwrap(),
        "--seed",
        "3",
        "--test-count",
        "0",
    ]);
    let sidecar = dir.path().join("split.csv.run_metadata.txt");
    assert!(
        fs::read_to_string(sidecar).unwrap().contains("master_seed=3"),
        "file-output commands write a metadata sidecar"
    );
}

#[test]
fn bad_tie_break_flag_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let preds = dir.path().join("p.csv");
    fs::write(
        &preds,
        "image_id,patch_index,model_id,p_normal,p_benign,p_insitu,p_invasive,label\n",
    )
    .unwrap();
    let out = run_cli(&[
        "vote",
        "--pred",
        preds.to_str().unwrap(),
        "--out",
        dir.path().join("d.csv").to_str().unwrap(),
        "--tie-break",
        "coinflip",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("coinflip"));
}

#[test]
fn filters_subcommand_renders_grid() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_manifest(dir.path(), 4, 40, 24);
    let manifest = dir.path().join("manifest.csv");
    let patches = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        patches.to_str().unwrap(),
    ]);
    let model = dir.path().join("model");
    run_cli_ok(&[
        "train",
        "--patches",
        patches.to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--seed",
        "1",
        "--epochs",
        "1",
        "--input-side",
        "17",
        "--channels",
        "16,2,2",
        "--fc-units",
        "8",
    ]);
    let filters = dir.path().join("filters.png");
    run_cli_ok(&[
        "filters",
        "--checkpoint",
        model.join("checkpoint.bin").to_str().unwrap(),
        "--out",
        filters.to_str().unwrap(),
    ]);
    let img = histopatch::raster::RasterImage::decode(&fs::read(&filters).unwrap()).unwrap();
    // 16 filters -> 4x4 grid of 32px tiles with 2px separators
    assert_eq!((img.width(), img.height()), (134, 134));
}

#[test]
fn train_without_labels_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_synthetic_manifest(dir.path(), 1, 40, 24);
    let manifest = dir.path().join("manifest.csv");
    let patches = dir.path().join("patches");
    run_cli_ok(&[
        "patch",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        patches.to_str().unwrap(),
    ]);
    // strip the labels from the index
    let index_path = patches.join("index.csv");
    let stripped: String = fs::read_to_string(&index_path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut fields: Vec<&str> = l.split(',').collect();
            if fields.len() == 4 && fields[3] != "label" {
                fields[3] = "";
            }
            fields.join(",") + "\n"
        })
        .collect();
    fs::write(&index_path, stripped).unwrap();

    let out = run_cli(&[
        "train",
        "--patches",
        patches.to_str().unwrap(),
        "--out",
        dir.path().join("model").to_str().unwrap(),
        "--seed",
        "1",
        "--epochs",
        "1",
        "--input-side",
        "17",
        "--channels",
        "2,2,2",
        "--fc-units",
        "4",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("label"));
}

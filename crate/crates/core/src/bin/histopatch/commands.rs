use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use histopatch::aggregate::{
    committee_prediction_with, group_by_image, read_prediction_file, to_binary,
    write_prediction_file, ClassLabel, CommitteeMode, PredictionRecord, TieBreak,
};
use histopatch::augment::{augment_batch_with_workers, expand_eight, AugmentConfig};
use histopatch::error::{Error, Result};
use histopatch::eval::{
    confusion, split_dataset, BinaryConfusion, BinaryRow, ConfusionMatrix, DatasetManifest,
    EvalReport, ImagewiseRow, PatchwiseRow, SplitSpec, MANIFEST_HEADER,
};
use histopatch::metadata::RunMetadata;
use histopatch::patching::{extract_patches, patch_file_stem, GridSpec, Patch};
use histopatch::raster::ImageFormat;
use histopatch::refnet::{
    self, export_first_layer_filters, init_params, predict_patch, CnnArchitecture, TrainConfig,
    EPOCH_METRICS_HEADER,
};

use crate::patchdir::{self, IndexRow, LoadedPatch};
use crate::{
    AugmentArgs, EvalArgs, FiltersArgs, PatchArgs, PredictArgs, SplitArgs, TrainArgs, VoteArgs,
};

fn parse_format(s: &str) -> Result<ImageFormat> {
    ImageFormat::from_extension(s)
        .ok_or_else(|| Error::validation(format!("unknown image format '{s}' (use ppm or png)")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::io(format!("creating directory '{}'", dir.display()), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(format!("writing '{}'", path.display()), e))
}

/// Metadata sidecar for commands whose output is a single file.
fn write_sidecar_metadata(md: &RunMetadata, out_file: &Path) -> Result<()> {
    let path = out_file.with_file_name(format!(
        "{}.run_metadata.txt",
        out_file.file_name().and_then(|s| s.to_str()).unwrap_or("out")
    ));
    write_bytes(&path, md.render().as_bytes())
}

pub fn cmd_patch(args: PatchArgs) -> Result<()> {
    let format = parse_format(&args.format)?;
    let grid = GridSpec::new(args.cols, args.rows)?;
    let manifest = DatasetManifest::load(&args.manifest, true)?;
    ensure_dir(&args.out)?;

    let mut rows = Vec::new();
    for entry in manifest.entries() {
        let img = patchdir::read_image_file(&entry.path)?;
        let patches = extract_patches(&entry.image_id, &img, &grid)?;
        for p in patches {
            let file = format!("{}.{}", p.file_stem(), format.extension());
            write_bytes(&args.out.join(&file), &p.pixels.encode(format)?)?;
            rows.push(IndexRow {
                file,
                image_id: p.image_id.clone(),
                grid_index: p.grid_index,
                label: Some(entry.label),
            });
        }
    }
    patchdir::write_index(&args.out, &rows)?;

    let mut md = RunMetadata::for_command("patch");
    md.push("grid_cols", args.cols.to_string());
    md.push("grid_rows", args.rows.to_string());
    md.push("format", format.extension());
    md.push_input_digest("manifest", &args.manifest)?;
    md.write_into(&args.out)?;

    println!(
        "wrote {} patches from {} images to {}",
        rows.len(),
        manifest.len(),
        args.out.display()
    );
    Ok(())
}

pub fn cmd_split(args: SplitArgs) -> Result<()> {
    let manifest = DatasetManifest::load(&args.manifest, false)?;
    let split = split_dataset(&manifest, args.seed, args.test_count, args.stratified)?;
    let mut buf = Vec::new();
    split
        .write(&mut buf)
        .map_err(|e| Error::io("rendering split", e))?;
    write_bytes(&args.out, &buf)?;

    let mut md = RunMetadata::for_command("split");
    md.push("master_seed", args.seed.to_string());
    md.push("test_count", args.test_count.to_string());
    md.push("stratified", args.stratified.to_string());
    md.push_input_digest("manifest", &args.manifest)?;
    write_sidecar_metadata(&md, &args.out)?;

    println!(
        "split {} images into {} train / {} test",
        manifest.len(),
        split.train_ids.len(),
        split.test_ids.len()
    );
    Ok(())
}

pub fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let format = parse_format(&args.format)?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading config '{}'", path.display()), e))?;
            AugmentConfig::parse(&text, &path.display().to_string())?
        }
        None => AugmentConfig::default(),
    };
    if args.no_stochastic {
        cfg.disable_all_stages();
    }

    let loaded = patchdir::load_patch_dir(&args.patches)?;
    ensure_dir(&args.out)?;

    // Expansion first: each dihedral variant becomes an independent item
    // whose id carries a _d<k> marker, so variants draw distinct
    // stochastic parameters.
    let mut items: Vec<(LoadedPatchMeta, Patch)> = Vec::new();
    for lp in &loaded {
        let base = lp.as_patch();
        if args.expand8 {
            for (v, variant) in expand_eight(&base).into_iter().enumerate() {
                let seeded = Patch::new(
                    format!("{}_d{v}", variant.image_id),
                    variant.grid_index,
                    variant.pixels,
                );
                items.push((meta_of(lp), seeded));
            }
        } else {
            items.push((meta_of(lp), base));
        }
    }

    let patches: Vec<Patch> = items.iter().map(|(_, p)| p.clone()).collect();
    let (augmented, draws) =
        augment_batch_with_workers(&patches, &cfg, args.seed, args.epoch, args.workers);

    let mut rows = Vec::with_capacity(augmented.len());
    for ((meta, _), out_patch) in items.iter().zip(&augmented) {
        let file = format!(
            "{}_e{}.{}",
            patch_file_stem(&out_patch.image_id, out_patch.grid_index),
            args.epoch,
            format.extension()
        );
        write_bytes(&args.out.join(&file), &out_patch.pixels.encode(format)?)?;
        rows.push(IndexRow {
            file,
            image_id: meta.image_id.clone(),
            grid_index: meta.grid_index,
            label: meta.label,
        });
    }
    patchdir::write_index(&args.out, &rows)?;

    if let Some(log_path) = &args.draw_log {
        let mut text = String::from("image_id,grid_index,epoch,stage,params\n");
        for d in &draws {
            text.push_str(&d.log_line());
            text.push('\n');
        }
        write_bytes(log_path, text.as_bytes())?;
    }

    let mut md = RunMetadata::for_command("augment");
    md.push("master_seed", args.seed.to_string());
    md.push("epoch", args.epoch.to_string());
    md.push("expand8", args.expand8.to_string());
    md.push("workers", args.workers.to_string());
    md.push_config("augment", &cfg.to_key_values());
    md.write_into(&args.out)?;

    println!(
        "augmented {} inputs into {} patches at {}",
        loaded.len(),
        rows.len(),
        args.out.display()
    );
    Ok(())
}

struct LoadedPatchMeta {
    image_id: String,
    grid_index: u32,
    label: Option<ClassLabel>,
}

fn meta_of(lp: &LoadedPatch) -> LoadedPatchMeta {
    LoadedPatchMeta {
        image_id: lp.image_id.clone(),
        grid_index: lp.grid_index,
        label: lp.label,
    }
}

fn parse_channels(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::validation(format!(
            "--channels expects three comma-separated widths, got '{s}'"
        )));
    }
    let mut widths = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        widths[i] = p
            .trim()
            .parse()
            .map_err(|_| Error::validation(format!("bad channel width '{p}'")))?;
    }
    Ok((widths[0], widths[1], widths[2]))
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let loaded = patchdir::load_patch_dir(&args.patches)?;
    if loaded.is_empty() {
        return Err(Error::validation(format!(
            "no patches found in '{}'",
            args.patches.display()
        )));
    }
    let mut dataset: Vec<(Patch, ClassLabel)> = Vec::with_capacity(loaded.len());
    for lp in &loaded {
        let label = lp.label.ok_or_else(|| {
            Error::validation(format!(
                "patch '{}' has no label; training needs a labeled index.csv",
                lp.file_stem
            ))
        })?;
        // Seeding identity is the file stem: unique per item even for
        // dihedral variants of the same source patch.
        dataset.push((lp.as_stem_patch(), label));
    }

    let (c1, c2, c3) = parse_channels(&args.channels)?;
    let arch = CnnArchitecture::baseline(args.input_side, c1, c2, c3, args.fc_units)?;
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        batch_size: args.batch_size,
        epochs: args.epochs,
        seed: args.seed,
    };
    let augment_cfg = match (&args.augment_config, args.augment) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::io(format!("reading config '{}'", path.display()), e))?;
            Some(AugmentConfig::parse(&text, &path.display().to_string())?)
        }
        (None, true) => Some(AugmentConfig::default()),
        (None, false) => None,
    };

    ensure_dir(&args.out)?;
    println!("{EPOCH_METRICS_HEADER}");
    let params = init_params(&arch, args.seed);
    let (trained, metrics) = refnet::train_with_progress(
        params,
        &dataset,
        &cfg,
        augment_cfg.as_ref(),
        |m| println!("{}", m.csv_line()),
    )?;

    refnet::save(&trained, &args.out.join("checkpoint.bin"))?;
    let mut metrics_csv = String::from(EPOCH_METRICS_HEADER);
    metrics_csv.push('\n');
    for m in &metrics {
        metrics_csv.push_str(&m.csv_line());
        metrics_csv.push('\n');
    }
    write_bytes(&args.out.join("metrics.csv"), metrics_csv.as_bytes())?;

    let mut md = RunMetadata::for_command("train");
    md.push("master_seed", args.seed.to_string());
    md.push("input_side", args.input_side.to_string());
    md.push("channels", &args.channels);
    md.push("fc_units", args.fc_units.to_string());
    md.push("learning_rate", args.learning_rate.to_string());
    md.push("momentum", args.momentum.to_string());
    md.push("batch_size", args.batch_size.to_string());
    md.push("epochs", args.epochs.to_string());
    if let Some(acfg) = &augment_cfg {
        md.push_config("augment", &acfg.to_key_values());
    }
    md.push_input_digest("patch_index", &args.patches.join(patchdir::INDEX_FILE))?;
    md.write_into(&args.out)?;
    Ok(())
}

pub fn cmd_predict(args: PredictArgs) -> Result<()> {
    if args.model_id.is_empty() || args.model_id.contains(',') {
        return Err(Error::validation(format!(
            "model id '{}' must be nonempty and comma-free (it becomes a CSV field)",
            args.model_id
        )));
    }
    let params = refnet::load(&args.checkpoint)?;
    let side = params.arch().input_side() as u32;
    let mut loaded = patchdir::load_patch_dir(&args.patches)?;
    loaded.sort_by(|a, b| {
        (&a.image_id, a.grid_index).cmp(&(&b.image_id, b.grid_index))
    });

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.max(1))
        .build()
        .map_err(|e| Error::Internal {
            reason: format!("worker pool: {e}"),
        })?;
    let records: Result<Vec<PredictionRecord>> = pool.install(|| {
        use rayon::prelude::*;
        loaded
            .par_iter()
            .map(|lp| predict_patch(&params, &lp.as_patch(), side, &args.model_id))
            .collect()
    });
    let records = records?;

    let mut buf = Vec::new();
    write_prediction_file(&mut buf, &records)
        .map_err(|e| Error::io("rendering predictions", e))?;
    write_bytes(&args.out, &buf)?;

    let mut md = RunMetadata::for_command("predict");
    md.push("model_id", &args.model_id);
    md.push("input_side", side.to_string());
    md.push_input_digest("checkpoint", &args.checkpoint)?;
    write_sidecar_metadata(&md, &args.out)?;

    println!("wrote {} prediction records to {}", records.len(), args.out.display());
    Ok(())
}

pub fn cmd_vote(args: VoteArgs) -> Result<()> {
    let tie_break = match args.tie_break.as_str() {
        "index" => TieBreak::LowestIndex,
        "prob-sum" => TieBreak::ProbabilitySum,
        other => {
            return Err(Error::validation(format!(
                "unknown tie-break '{other}' (use index or prob-sum)"
            )))
        }
    };
    let mode = if args.per_model {
        CommitteeMode::PerModelMajority
    } else {
        CommitteeMode::FlatPool
    };

    let mut records = Vec::new();
    for path in &args.preds {
        let file = fs::File::open(path)
            .map_err(|e| Error::io(format!("opening '{}'", path.display()), e))?;
        records.extend(read_prediction_file(
            BufReader::new(file),
            &path.display().to_string(),
        )?);
    }

    let mut out = String::from("image_id,label\n");
    let grouped = group_by_image(&records);
    let n_images = grouped.len();
    for (image_id, group) in grouped {
        let decision =
            committee_prediction_with(&group, args.patches_per_image, mode, tie_break)?;
        out.push_str(&format!("{image_id},{decision}\n"));
    }
    write_bytes(&args.out, out.as_bytes())?;

    let mut md = RunMetadata::for_command("vote");
    md.push("patches_per_image", args.patches_per_image.to_string());
    md.push("mode", if args.per_model { "per-model" } else { "flat-pool" });
    md.push("tie_break", &args.tie_break);
    for (i, path) in args.preds.iter().enumerate() {
        md.push_input_digest(&format!("pred{i}"), path)?;
    }
    write_sidecar_metadata(&md, &args.out)?;

    println!("voted {n_images} image decisions to {}", args.out.display());
    Ok(())
}

/// Truth file: either a full manifest (image_id,path,label) or bare
/// (image_id,label) pairs.
fn load_truth(path: &Path) -> Result<BTreeMap<String, ClassLabel>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading truth '{}'", path.display()), e))?;
    let name = path.display().to_string();
    let mut truth = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty()
            || line.starts_with('#')
            || (lineno == 1 && (line == MANIFEST_HEADER || line == "image_id,label"))
        {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let (id, label_str) = match fields.len() {
            2 => (fields[0], fields[1]),
            3 => (fields[0], fields[2]),
            n => {
                return Err(Error::parse(
                    &name,
                    lineno,
                    format!("expected 2 or 3 fields, got {n}"),
                ))
            }
        };
        let label: ClassLabel = label_str.trim().parse().map_err(|_| {
            Error::parse(&name, lineno, format!("bad label '{label_str}'"))
        })?;
        if truth.insert(id.trim().to_string(), label).is_some() {
            return Err(Error::parse(&name, lineno, format!("duplicate image id '{id}'")));
        }
    }
    Ok(truth)
}

fn load_decisions(path: &Path) -> Result<Vec<(String, ClassLabel)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading decisions '{}'", path.display()), e))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || (lineno == 1 && line == "image_id,label") {
            continue;
        }
        let (id, label_str) = line.split_once(',').ok_or_else(|| {
            Error::parse(&name, lineno, format!("expected image_id,label, got '{line}'"))
        })?;
        let label: ClassLabel = label_str.trim().parse().map_err(|_| {
            Error::parse(&name, lineno, format!("bad label '{label_str}'"))
        })?;
        out.push((id.trim().to_string(), label));
    }
    Ok(out)
}

pub fn cmd_eval(args: EvalArgs) -> Result<()> {
    let truth = load_truth(&args.truth)?;
    let split_sets = match &args.split {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| Error::io(format!("opening split '{}'", path.display()), e))?;
            let (train, test) =
                SplitSpec::read_lists(BufReader::new(file), &path.display().to_string())?;
            Some((
                train.into_iter().collect::<std::collections::BTreeSet<_>>(),
                test.into_iter().collect::<std::collections::BTreeSet<_>>(),
            ))
        }
        None => None,
    };

    let truth_of = |image_id: &str, source: &str| -> Result<ClassLabel> {
        truth.get(image_id).copied().ok_or_else(|| {
            Error::validation(format!(
                "{source}: image '{image_id}' is not in the truth file"
            ))
        })
    };

    let mut report = EvalReport::default();

    for (name, path) in &args.preds {
        let file = fs::File::open(path)
            .map_err(|e| Error::io(format!("opening '{}'", path.display()), e))?;
        let records = read_prediction_file(BufReader::new(file), &path.display().to_string())?;
        let mut train_pairs: Vec<(ClassLabel, ClassLabel)> = Vec::new();
        let mut test_pairs: Vec<(ClassLabel, ClassLabel)> = Vec::new();
        for r in &records {
            let t = truth_of(&r.image_id, name)?;
            match &split_sets {
                Some((train_set, test_set)) => {
                    if train_set.contains(&r.image_id) {
                        train_pairs.push((t, r.label));
                    } else if test_set.contains(&r.image_id) {
                        test_pairs.push((t, r.label));
                    } else {
                        return Err(Error::validation(format!(
                            "{name}: image '{}' is in neither split half",
                            r.image_id
                        )));
                    }
                }
                // Without a split file the records are scored as one set
                // and reported in the test column.
                None => test_pairs.push((t, r.label)),
            }
        }
        let build = |pairs: &[(ClassLabel, ClassLabel)]| -> Result<Option<ConfusionMatrix>> {
            if pairs.is_empty() {
                return Ok(None);
            }
            let truth_v: Vec<ClassLabel> = pairs.iter().map(|p| p.0).collect();
            let pred_v: Vec<ClassLabel> = pairs.iter().map(|p| p.1).collect();
            confusion(&truth_v, &pred_v).map(Some)
        };
        report.patchwise.push(PatchwiseRow {
            model: name.clone(),
            train: build(&train_pairs)?,
            test: build(&test_pairs)?,
        });
    }

    for (name, path) in &args.decisions {
        let decisions = load_decisions(path)?;
        if decisions.is_empty() {
            return Err(Error::validation(format!(
                "{name}: decisions file '{}' is empty",
                path.display()
            )));
        }
        let mut cm = ConfusionMatrix::new();
        let mut bin = BinaryConfusion::new();
        for (image_id, decided) in &decisions {
            let t = truth_of(image_id, name)?;
            cm.increment(t, *decided);
            // Binary task maps the final 4-class image decision.
            bin.increment(to_binary(t), to_binary(*decided));
        }
        report.imagewise.push(ImagewiseRow {
            model: name.clone(),
            cm,
        });
        report.binary.push(BinaryRow {
            model: name.clone(),
            cm: bin,
        });
    }

    ensure_dir(&args.out)?;
    report.write_csv_files(&args.out)?;
    let text = report.render_text();
    write_bytes(&args.out.join("report.txt"), text.as_bytes())?;
    print!("{text}");

    let mut md = RunMetadata::for_command("eval");
    md.push_input_digest("truth", &args.truth)?;
    for (name, path) in args.decisions.iter().chain(&args.preds) {
        md.push_input_digest(name, path)?;
    }
    if let Some(split) = &args.split {
        md.push_input_digest("split", split)?;
    }
    md.write_into(&args.out)?;
    Ok(())
}

pub fn cmd_filters(args: FiltersArgs) -> Result<()> {
    let params = refnet::load(&args.checkpoint)?;
    let grid = export_first_layer_filters(&params)?;
    let ext = args
        .out
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or("png");
    let format = parse_format(ext)?;
    write_bytes(&args.out, &grid.encode(format)?)?;

    let mut md = RunMetadata::for_command("filters");
    md.push_input_digest("checkpoint", &args.checkpoint)?;
    write_sidecar_metadata(&md, &args.out)?;

    println!(
        "wrote {}x{} filter grid to {}",
        grid.width(),
        grid.height(),
        args.out.display()
    );
    Ok(())
}

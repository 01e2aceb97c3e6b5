//! Dataset manifests, seeded train/test splits, and metric reporting in
//! the familiar three-table layout (patchwise accuracy, whole-image
//! accuracy, per-class accuracy) plus the binary carcinoma task.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::aggregate::{BinaryLabel, ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::stream_for_purpose;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub path: PathBuf,
    pub label: ClassLabel,
}

/// Labeled image inventory. Image ids are unique; class counts are
/// available for balance reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: &str = "image_id,path,label";

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.image_id.clone()) {
                return Err(Error::validation(format!(
                    "duplicate image id '{}' in manifest",
                    e.image_id
                )));
            }
        }
        Ok(DatasetManifest { entries })
    }

    /// Parse `image_id,path,label` CSV. When `check_files` is set, every
    /// referenced path must exist.
    pub fn parse(text: &str, source_name: &str, check_files: bool) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if lineno == 1 && line == MANIFEST_HEADER {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("expected 3 fields (image_id,path,label), got {}", fields.len()),
                ));
            }
            let label: ClassLabel = fields[2].trim().parse().map_err(|_| {
                Error::parse(source_name, lineno, format!("bad label '{}'", fields[2]))
            })?;
            let path = PathBuf::from(fields[1].trim());
            if check_files && !path.exists() {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("referenced file '{}' does not exist", path.display()),
                ));
            }
            entries.push(ManifestEntry {
                image_id: fields[0].trim().to_string(),
                path,
                label,
            });
        }
        DatasetManifest::new(entries)
    }

    pub fn load(path: &Path, check_files: bool) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading manifest '{}'", path.display()), e))?;
        let manifest = Self::parse(&text, &path.display().to_string(), check_files)?;
        let counts = manifest.class_counts();
        log::info!(
            "manifest '{}': {} images (Normal {}, Benign {}, InSitu {}, Invasive {})",
            path.display(),
            manifest.len(),
            counts[0],
            counts[1],
            counts[2],
            counts[3]
        );
        Ok(manifest)
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0usize; NUM_CLASSES];
        for e in &self.entries {
            counts[e.label.index()] += 1;
        }
        counts
    }

    pub fn label_of(&self, image_id: &str) -> Option<ClassLabel> {
        self.entries
            .iter()
            .find(|e| e.image_id == image_id)
            .map(|e| e.label)
    }
}

/// A seeded train/test partition. Train and test are disjoint, cover the
/// manifest, and |test| equals the requested count.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_count: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Sample `test_count` test images uniformly without replacement from the
/// stream seeded by `seed`. Stratified mode draws test_count/4 per class.
/// Output id lists follow manifest order.
pub fn split_dataset(
    manifest: &DatasetManifest,
    seed: u64,
    test_count: usize,
    stratified: bool,
) -> Result<SplitSpec> {
    let n = manifest.len();
    if test_count >= n {
        return Err(Error::TestCountTooLarge {
            requested: test_count,
            available: n,
        });
    }
    let mut stream = stream_for_purpose(seed, "dataset-split", 0);
    let mut is_test = vec![false; n];
    if stratified {
        if !test_count.is_multiple_of(NUM_CLASSES) {
            return Err(Error::validation(format!(
                "stratified split needs a test count divisible by {NUM_CLASSES}, got {test_count}"
            )));
        }
        let per_class = test_count / NUM_CLASSES;
        for class in ClassLabel::ALL {
            let members: Vec<usize> = manifest
                .entries
                .iter()
                .enumerate()
                .filter(|(_, e)| e.label == class)
                .map(|(i, _)| i)
                .collect();
            if members.len() < per_class {
                return Err(Error::validation(format!(
                    "class {class} has only {} images, cannot draw {per_class} test images",
                    members.len()
                )));
            }
            for pick in stream.sample_indices(members.len(), per_class) {
                is_test[members[pick]] = true;
            }
        }
    } else {
        for pick in stream.sample_indices(n, test_count) {
            is_test[pick] = true;
        }
    }
    let mut train_ids = Vec::with_capacity(n - test_count);
    let mut test_ids = Vec::with_capacity(test_count);
    for (i, e) in manifest.entries.iter().enumerate() {
        if is_test[i] {
            test_ids.push(e.image_id.clone());
        } else {
            train_ids.push(e.image_id.clone());
        }
    }
    Ok(SplitSpec {
        seed,
        test_count,
        train_ids,
        test_ids,
    })
}

impl SplitSpec {
    pub fn write(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "image_id,split")?;
        for id in &self.train_ids {
            writeln!(w, "{id},train")?;
        }
        for id in &self.test_ids {
            writeln!(w, "{id},test")?;
        }
        Ok(())
    }

    /// Parse an `image_id,split` file back into (train, test) id lists.
    pub fn read_lists(r: impl BufRead, source_name: &str) -> Result<(Vec<String>, Vec<String>)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(source_name.to_string(), e))?;
            let line = line.trim();
            if line.is_empty() || (lineno == 1 && line == "image_id,split") {
                continue;
            }
            match line.rsplit_once(',') {
                Some((id, "train")) => train.push(id.to_string()),
                Some((id, "test")) => test.push(id.to_string()),
                _ => {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("expected 'image_id,train|test', got '{line}'"),
                    ))
                }
            }
        }
        Ok((train, test))
    }
}

/// 4x4 confusion counts; rows are true classes, columns predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&mut self, truth: ClassLabel, predicted: ClassLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn count(&self, truth: ClassLabel, predicted: ClassLabel) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    /// Overall accuracy = trace / total.
    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(self.trace() as f64 / total as f64)
    }

    /// Per-class recall: diagonal over row sum. Classes with an empty row
    /// report None (undefined).
    pub fn per_class_accuracy(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|i| {
            let row: u64 = self.counts[i].iter().sum();
            (row > 0).then(|| self.counts[i][i] as f64 / row as f64)
        })
    }
}

/// Tally equal-length truth/prediction label sequences.
pub fn confusion(truth: &[ClassLabel], predicted: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut cm = ConfusionMatrix::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        cm.increment(t, p);
    }
    Ok(cm)
}

/// 2x2 confusion for the carcinoma/non-carcinoma task.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BinaryConfusion {
    counts: [[u64; 2]; 2],
}

impl BinaryConfusion {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&mut self, truth: BinaryLabel, predicted: BinaryLabel) {
        self.counts[truth as usize][predicted as usize] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        self.counts[0][0] + self.counts[1][1]
    }

    pub fn accuracy(&self) -> Result<f64> {
        let total = self.total();
        if total == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(self.trace() as f64 / total as f64)
    }
}

/// Accuracy as a percentage with one decimal, matching the granularity
/// of the reference tables (70/80 renders as "87.5").
pub fn percent(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}

#[derive(Clone, Debug)]
pub struct PatchwiseRow {
    pub model: String,
    pub train: Option<ConfusionMatrix>,
    pub test: Option<ConfusionMatrix>,
}

#[derive(Clone, Debug)]
pub struct ImagewiseRow {
    pub model: String,
    pub cm: ConfusionMatrix,
}

#[derive(Clone, Debug)]
pub struct BinaryRow {
    pub model: String,
    pub cm: BinaryConfusion,
}

/// Assembled evaluation results: one row per model (or committee) per
/// table. Per-class accuracies derive from the imagewise matrices.
#[derive(Clone, Debug, Default)]
pub struct EvalReport {
    pub patchwise: Vec<PatchwiseRow>,
    pub imagewise: Vec<ImagewiseRow>,
    pub binary: Vec<BinaryRow>,
}

fn acc_cell(cm: &Option<ConfusionMatrix>) -> (String, String, String) {
    match cm {
        Some(cm) => (
            cm.trace().to_string(),
            cm.total().to_string(),
            percent(cm.accuracy().unwrap_or(0.0)),
        ),
        None => (String::new(), String::new(), String::new()),
    }
}

impl EvalReport {
    /// Human-readable report: the three tables plus the binary task.
    pub fn render_text(&self) -> String {
        let mut out = String::new();

        out.push_str("Patchwise classification accuracy\n");
        let _ = writeln!(out, "{:<40} {:>10} {:>10}", "model", "train", "test");
        for row in &self.patchwise {
            let train = row
                .train
                .as_ref()
                .map(|cm| format!("{}%", percent(cm.accuracy().unwrap_or(0.0))))
                .unwrap_or_else(|| "-".into());
            let test = row
                .test
                .as_ref()
                .map(|cm| format!("{}%", percent(cm.accuracy().unwrap_or(0.0))))
                .unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{:<40} {:>10} {:>10}", row.model, train, test);
        }

        out.push_str("\nWhole-image classification accuracy\n");
        let _ = writeln!(out, "{:<40} {:>10}", "model", "accuracy");
        for row in &self.imagewise {
            let _ = writeln!(
                out,
                "{:<40} {:>9}%",
                row.model,
                percent(row.cm.accuracy().unwrap_or(0.0))
            );
        }

        out.push_str("\nAccuracy on individual classes\n");
        let _ = writeln!(
            out,
            "{:<40} {:>8} {:>8} {:>8} {:>8}",
            "model", "Normal", "Benign", "InSitu", "Invasive"
        );
        for row in &self.imagewise {
            let cells = row.cm.per_class_accuracy();
            let fmt_cell = |c: Option<f64>| match c {
                Some(v) => format!("{}%", percent(v)),
                None => "-".into(),
            };
            let _ = writeln!(
                out,
                "{:<40} {:>8} {:>8} {:>8} {:>8}",
                row.model,
                fmt_cell(cells[0]),
                fmt_cell(cells[1]),
                fmt_cell(cells[2]),
                fmt_cell(cells[3])
            );
        }

        out.push_str("\nBinary carcinoma/non-carcinoma accuracy\n");
        let _ = writeln!(out, "{:<40} {:>10}", "model", "accuracy");
        for row in &self.binary {
            let _ = writeln!(
                out,
                "{:<40} {:>9}%",
                row.model,
                percent(row.cm.accuracy().unwrap_or(0.0))
            );
        }
        out
    }

    pub fn patchwise_csv(&self) -> String {
        let mut out = String::from(
            "model,train_correct,train_total,train_accuracy_percent,\
             test_correct,test_total,test_accuracy_percent\n",
        );
        for row in &self.patchwise {
            let (tc, tt, tp) = acc_cell(&row.train);
            let (ec, et, ep) = acc_cell(&row.test);
            let _ = writeln!(out, "{},{tc},{tt},{tp},{ec},{et},{ep}", row.model);
        }
        out
    }

    pub fn imagewise_csv(&self) -> String {
        let mut out = String::from("model,correct,total,accuracy_percent\n");
        for row in &self.imagewise {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                row.model,
                row.cm.trace(),
                row.cm.total(),
                percent(row.cm.accuracy().unwrap_or(0.0))
            );
        }
        out
    }

    pub fn perclass_csv(&self) -> String {
        let mut out = String::from(
            "model,normal_percent,benign_percent,insitu_percent,invasive_percent\n",
        );
        for row in &self.imagewise {
            let cells = row.cm.per_class_accuracy();
            let fmt_cell =
                |c: Option<f64>| c.map(percent).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.model,
                fmt_cell(cells[0]),
                fmt_cell(cells[1]),
                fmt_cell(cells[2]),
                fmt_cell(cells[3])
            );
        }
        out
    }

    pub fn binary_csv(&self) -> String {
        let mut out = String::from("model,correct,total,accuracy_percent\n");
        for row in &self.binary {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                row.model,
                row.cm.trace(),
                row.cm.total(),
                percent(row.cm.accuracy().unwrap_or(0.0))
            );
        }
        out
    }

    /// Write the four CSV blocks into `dir` as patchwise.csv,
    /// imagewise.csv, perclass.csv and binary.csv.
    pub fn write_csv_files(&self, dir: &Path) -> Result<()> {
        let blocks = [
            ("patchwise.csv", self.patchwise_csv()),
            ("imagewise.csv", self.imagewise_csv()),
            ("perclass.csv", self.perclass_csv()),
            ("binary.csv", self.binary_csv()),
        ];
        for (name, content) in blocks {
            let path = dir.join(name);
            fs::write(&path, content)
                .map_err(|e| Error::io(format!("writing '{}'", path.display()), e))?;
        }
        Ok(())
    }
}

//! Patch-to-image majority voting, committee voting across models, and
//! the 4-class to carcinoma/non-carcinoma mapping.
//!
//! Prediction files are the contract by which external models enter a
//! committee: CSV with header
//! `image_id,patch_index,model_id,p_normal,p_benign,p_insitu,p_invasive,label`,
//! probability fields optional.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

/// The four diagnosis classes, ordered; the ordering is load-bearing for
/// tie-breaking and report columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ClassLabel {
    Normal = 0,
    Benign = 1,
    InSitu = 2,
    Invasive = 3,
}

pub const NUM_CLASSES: usize = 4;

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Normal,
        ClassLabel::Benign,
        ClassLabel::InSitu,
        ClassLabel::Invasive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<ClassLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Normal => "Normal",
            ClassLabel::Benign => "Benign",
            ClassLabel::InSitu => "InSitu",
            ClassLabel::Invasive => "Invasive",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Normal" => Ok(ClassLabel::Normal),
            "Benign" => Ok(ClassLabel::Benign),
            "InSitu" => Ok(ClassLabel::InSitu),
            "Invasive" => Ok(ClassLabel::Invasive),
            other => Err(Error::validation(format!(
                "unknown class label '{other}' (expected Normal, Benign, InSitu or Invasive)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryLabel {
    NonCarcinoma = 0,
    Carcinoma = 1,
}

impl BinaryLabel {
    pub fn name(self) -> &'static str {
        match self {
            BinaryLabel::NonCarcinoma => "NonCarcinoma",
            BinaryLabel::Carcinoma => "Carcinoma",
        }
    }
}

impl fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Normal and Benign map to NonCarcinoma; InSitu and Invasive (the two
/// malignant types) map to Carcinoma.
pub fn to_binary(label: ClassLabel) -> BinaryLabel {
    match label {
        ClassLabel::Normal | ClassLabel::Benign => BinaryLabel::NonCarcinoma,
        ClassLabel::InSitu | ClassLabel::Invasive => BinaryLabel::Carcinoma,
    }
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax_label(probs: &[f64; NUM_CLASSES]) -> ClassLabel {
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    ClassLabel::from_index(best).unwrap()
}

/// One per-patch prediction from one model: the interchange unit between
/// classifiers and the aggregator.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub image_id: String,
    pub patch_index: u32,
    pub model_id: String,
    pub probs: Option<[f64; NUM_CLASSES]>,
    pub label: ClassLabel,
}

impl PredictionRecord {
    /// Build from a probability vector; the label is derived by argmax.
    pub fn from_probs(
        image_id: impl Into<String>,
        patch_index: u32,
        model_id: impl Into<String>,
        probs: [f64; NUM_CLASSES],
    ) -> Self {
        PredictionRecord {
            image_id: image_id.into(),
            patch_index,
            model_id: model_id.into(),
            label: argmax_label(&probs),
            probs: Some(probs),
        }
    }

    pub fn from_label(
        image_id: impl Into<String>,
        patch_index: u32,
        model_id: impl Into<String>,
        label: ClassLabel,
    ) -> Self {
        PredictionRecord {
            image_id: image_id.into(),
            patch_index,
            model_id: model_id.into(),
            probs: None,
            label,
        }
    }
}

/// Most frequent label; ties broken toward the lowest class index.
pub fn majority_vote(labels: &[ClassLabel]) -> Result<ClassLabel> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = [0usize; NUM_CLASSES];
    for l in labels {
        counts[l.index()] += 1;
    }
    let mut best = 0;
    for i in 1..NUM_CLASSES {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    Ok(ClassLabel::from_index(best).unwrap())
}

/// Vote tie-break policy for record-level voting. `LowestIndex` is the
/// default documented behavior; `ProbabilitySum` breaks count ties by the
/// summed probability mass of each tied label (falling back to lowest
/// index when no probabilities exist or the sums tie).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TieBreak {
    LowestIndex,
    ProbabilitySum,
}

fn vote_records(records: &[&PredictionRecord], tie_break: TieBreak) -> Result<ClassLabel> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut counts = [0usize; NUM_CLASSES];
    for r in records {
        counts[r.label.index()] += 1;
    }
    let top = *counts.iter().max().unwrap();
    let tied: Vec<usize> = (0..NUM_CLASSES).filter(|&i| counts[i] == top).collect();
    if tied.len() == 1 || tie_break == TieBreak::LowestIndex {
        return Ok(ClassLabel::from_index(tied[0]).unwrap());
    }
    let mut sums = [0.0f64; NUM_CLASSES];
    for r in records {
        if let Some(p) = r.probs {
            for i in 0..NUM_CLASSES {
                sums[i] += p[i];
            }
        }
    }
    let mut best = tied[0];
    for &i in &tied[1..] {
        if sums[i] > sums[best] {
            best = i;
        }
    }
    Ok(ClassLabel::from_index(best).unwrap())
}

/// Check that `records` holds patch indices 0..expected exactly once for
/// the given model.
fn check_patch_cover(
    records: &[&PredictionRecord],
    image_id: &str,
    model_id: &str,
    expected_patches: usize,
) -> Result<()> {
    let mut seen = vec![false; expected_patches];
    for r in records {
        let i = r.patch_index as usize;
        if i >= expected_patches {
            return Err(Error::Validation {
                reason: format!(
                    "image '{image_id}' (model '{model_id}'): patch index {i} out of range 0..{expected_patches}"
                ),
            });
        }
        if seen[i] {
            return Err(Error::DuplicatePatch {
                image_id: image_id.to_string(),
                model_id: model_id.to_string(),
                index: r.patch_index,
            });
        }
        seen[i] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::MissingPatch {
            image_id: image_id.to_string(),
            model_id: model_id.to_string(),
            index: missing as u32,
        });
    }
    Ok(())
}

/// Majority vote over the patch predictions of one image from one model.
/// Records must cover patch indices 0..expected_patches exactly once.
pub fn image_prediction(
    records: &[PredictionRecord],
    expected_patches: usize,
) -> Result<ClassLabel> {
    image_prediction_with(records, expected_patches, TieBreak::LowestIndex)
}

pub fn image_prediction_with(
    records: &[PredictionRecord],
    expected_patches: usize,
    tie_break: TieBreak,
) -> Result<ClassLabel> {
    let refs: Vec<&PredictionRecord> = records.iter().collect();
    let (image_id, model_id) = single_image_and_model(&refs)?;
    check_patch_cover(&refs, &image_id, &model_id, expected_patches)?;
    vote_records(&refs, tie_break)
}

fn single_image_and_model(records: &[&PredictionRecord]) -> Result<(String, String)> {
    let first = records.first().ok_or(Error::EmptyInput)?;
    for r in records {
        if r.image_id != first.image_id {
            return Err(Error::validation(format!(
                "mixed image ids in one vote: '{}' and '{}'",
                first.image_id, r.image_id
            )));
        }
        if r.model_id != first.model_id {
            return Err(Error::validation(format!(
                "mixed model ids in a single-model vote: '{}' and '{}'",
                first.model_id, r.model_id
            )));
        }
    }
    Ok((first.image_id.clone(), first.model_id.clone()))
}

/// How a committee pools votes: one flat majority over all M*P patch
/// votes (default), or a majority over the M per-model image decisions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommitteeMode {
    FlatPool,
    PerModelMajority,
}

/// Committee decision for one image across M models. Every model must
/// contribute exactly `expected_patches` records for the image.
pub fn committee_prediction(
    records: &[PredictionRecord],
    expected_patches: usize,
) -> Result<ClassLabel> {
    committee_prediction_with(
        records,
        expected_patches,
        CommitteeMode::FlatPool,
        TieBreak::LowestIndex,
    )
}

pub fn committee_prediction_with(
    records: &[PredictionRecord],
    expected_patches: usize,
    mode: CommitteeMode,
    tie_break: TieBreak,
) -> Result<ClassLabel> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let image_id = records[0].image_id.clone();
    let mut by_model: BTreeMap<&str, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        if r.image_id != image_id {
            return Err(Error::validation(format!(
                "mixed image ids in one committee vote: '{}' and '{}'",
                image_id, r.image_id
            )));
        }
        by_model.entry(&r.model_id).or_default().push(r);
    }
    for (model_id, group) in &by_model {
        if group.len() != expected_patches {
            return Err(Error::InconsistentPatchCount {
                image_id: image_id.clone(),
                model_id: model_id.to_string(),
                expected: expected_patches,
                actual: group.len(),
            });
        }
        check_patch_cover(group, &image_id, model_id, expected_patches)?;
    }
    match mode {
        CommitteeMode::FlatPool => {
            let all: Vec<&PredictionRecord> = records.iter().collect();
            vote_records(&all, tie_break)
        }
        CommitteeMode::PerModelMajority => {
            let decisions: Vec<ClassLabel> = by_model
                .values()
                .map(|group| {
                    let labels: Vec<ClassLabel> = group.iter().map(|r| r.label).collect();
                    majority_vote(&labels)
                })
                .collect::<Result<_>>()?;
            majority_vote(&decisions)
        }
    }
}

/// Group records by image id (deterministic order).
pub fn group_by_image(records: &[PredictionRecord]) -> BTreeMap<String, Vec<PredictionRecord>> {
    let mut map: BTreeMap<String, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.image_id.clone()).or_default().push(r.clone());
    }
    map
}

pub const PREDICTION_HEADER: &str =
    "image_id,patch_index,model_id,p_normal,p_benign,p_insitu,p_invasive,label";

// Written probabilities are shortest-round-trip floats, so parsing them
// back recovers the exact values; this tolerance only covers files
// produced by other tools that round.
const ARGMAX_TOLERANCE: f64 = 1e-6;
const PROB_SUM_TOLERANCE: f64 = 1e-3;

pub fn write_prediction_file(
    w: &mut impl Write,
    records: &[PredictionRecord],
) -> std::io::Result<()> {
    writeln!(w, "{PREDICTION_HEADER}")?;
    for r in records {
        let probs = match &r.probs {
            Some(p) => p.map(|v| v.to_string()).join(","),
            None => ",,,".to_string(),
        };
        writeln!(
            w,
            "{},{},{},{},{}",
            r.image_id, r.patch_index, r.model_id, probs, r.label
        )?;
    }
    Ok(())
}

/// Read and validate a prediction file. `source_name` is used in error
/// messages.
pub fn read_prediction_file(
    r: impl BufRead,
    source_name: &str,
) -> Result<Vec<PredictionRecord>> {
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(h))) => h,
        Some((_, Err(e))) => return Err(Error::io(source_name.to_string(), e)),
        None => return Err(Error::parse(source_name, 1, "empty prediction file")),
    };
    if header.trim() != PREDICTION_HEADER {
        return Err(Error::parse(
            source_name,
            1,
            format!("bad header; expected '{PREDICTION_HEADER}'"),
        ));
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source_name.to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let patch_index: u32 = fields[1].parse().map_err(|_| {
            Error::parse(source_name, lineno, format!("bad patch index '{}'", fields[1]))
        })?;
        let label: ClassLabel = fields[7].trim().parse().map_err(|_| {
            Error::parse(source_name, lineno, format!("bad label '{}'", fields[7]))
        })?;
        let prob_fields = &fields[3..7];
        let probs = if prob_fields.iter().all(|f| f.trim().is_empty()) {
            None
        } else {
            let mut p = [0.0f64; NUM_CLASSES];
            for (j, f) in prob_fields.iter().enumerate() {
                p[j] = f.trim().parse().map_err(|_| {
                    Error::parse(source_name, lineno, format!("bad probability '{f}'"))
                })?;
                if !(0.0..=1.0).contains(&p[j]) {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        format!("probability {} outside [0,1]", p[j]),
                    ));
                }
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("probabilities sum to {sum}, expected 1"),
                ));
            }
            let max = p.iter().cloned().fold(f64::MIN, f64::max);
            if p[label.index()] < max - ARGMAX_TOLERANCE {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    format!("label {label} is not the argmax of the probabilities"),
                ));
            }
            Some(p)
        };
        records.push(PredictionRecord {
            image_id: fields[0].to_string(),
            patch_index,
            model_id: fields[2].to_string(),
            probs,
            label,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    use ClassLabel::*;

    #[test]
    fn single_vote() {
        assert_eq!(majority_vote(&[InSitu]).unwrap(), InSitu);
    }

    #[test]
    fn four_way_tie_goes_to_lowest_index() {
        let votes = [
            Normal, Normal, Normal, Benign, Benign, Benign, InSitu, InSitu, InSitu, Invasive,
            Invasive, Invasive,
        ];
        assert_eq!(majority_vote(&votes).unwrap(), Normal);
    }

    #[test]
    fn empty_vote_is_an_error() {
        assert!(matches!(majority_vote(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn random_votes_match_counting_oracle() {
        let mut rng = SplitMix64::new(77);
        for _ in 0..10_000 {
            let votes: Vec<ClassLabel> = (0..12)
                .map(|_| ClassLabel::from_index(rng.below(4) as usize).unwrap())
                .collect();
            // independent oracle: tally then scan for first maximal count
            let mut counts = [0usize; 4];
            for v in &votes {
                counts[v.index()] += 1;
            }
            let top = *counts.iter().max().unwrap();
            let expect = ClassLabel::from_index(counts.iter().position(|&c| c == top).unwrap())
                .unwrap();
            assert_eq!(majority_vote(&votes).unwrap(), expect);
        }
    }

    #[test]
    fn vote_is_permutation_invariant() {
        let mut rng = SplitMix64::new(3);
        let mut votes: Vec<ClassLabel> = (0..12)
            .map(|_| ClassLabel::from_index(rng.below(4) as usize).unwrap())
            .collect();
        let base = majority_vote(&votes).unwrap();
        for _ in 0..50 {
            rng.shuffle(&mut votes);
            assert_eq!(majority_vote(&votes).unwrap(), base);
        }
    }

    #[test]
    fn adding_winner_vote_never_changes_result() {
        let mut rng = SplitMix64::new(4);
        for _ in 0..500 {
            let mut votes: Vec<ClassLabel> = (0..7)
                .map(|_| ClassLabel::from_index(rng.below(4) as usize).unwrap())
                .collect();
            let winner = majority_vote(&votes).unwrap();
            votes.push(winner);
            assert_eq!(majority_vote(&votes).unwrap(), winner);
        }
    }

    fn records_for(image: &str, model: &str, labels: &[ClassLabel]) -> Vec<PredictionRecord> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &l)| PredictionRecord::from_label(image, i as u32, model, l))
            .collect()
    }

    #[test]
    fn unanimous_image_prediction() {
        let recs = records_for("img1", "m", &[Invasive; 12]);
        assert_eq!(image_prediction(&recs, 12).unwrap(), Invasive);
    }

    #[test]
    fn strict_majority_wins() {
        let mut labels = vec![Benign; 7];
        labels.extend(vec![InSitu; 5]);
        let recs = records_for("img1", "m", &labels);
        assert_eq!(image_prediction(&recs, 12).unwrap(), Benign);
    }

    #[test]
    fn missing_patch_is_reported_with_index() {
        let mut recs = records_for("img1", "m", &[Normal; 12]);
        recs.remove(5);
        match image_prediction(&recs, 12) {
            Err(Error::MissingPatch { image_id, index, .. }) => {
                assert_eq!(image_id, "img1");
                assert_eq!(index, 5);
            }
            other => panic!("expected MissingPatch, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_patch_is_reported() {
        let mut recs = records_for("img1", "m", &[Normal; 11]);
        recs.push(PredictionRecord::from_label("img1", 3, "m", Benign));
        assert!(matches!(
            image_prediction(&recs, 12),
            Err(Error::DuplicatePatch { index: 3, .. })
        ));
    }

    #[test]
    fn committee_of_one_equals_image_prediction() {
        let mut rng = SplitMix64::new(9);
        for _ in 0..200 {
            let labels: Vec<ClassLabel> = (0..12)
                .map(|_| ClassLabel::from_index(rng.below(4) as usize).unwrap())
                .collect();
            let recs = records_for("img", "solo", &labels);
            assert_eq!(
                committee_prediction(&recs, 12).unwrap(),
                image_prediction(&recs, 12).unwrap()
            );
        }
    }

    #[test]
    fn committee_flat_pool_hand_count() {
        // 3 models x 12 patches: pooled counts InSitu 19 vs Normal 17.
        let mut recs = Vec::new();
        let m1: Vec<ClassLabel> = [vec![InSitu; 7], vec![Normal; 5]].concat();
        let m2: Vec<ClassLabel> = [vec![Normal; 7], vec![InSitu; 5]].concat();
        let m3: Vec<ClassLabel> = [vec![InSitu; 7], vec![Normal; 5]].concat();
        recs.extend(records_for("img", "m1", &m1));
        recs.extend(records_for("img", "m2", &m2));
        recs.extend(records_for("img", "m3", &m3));
        assert_eq!(committee_prediction(&recs, 12).unwrap(), InSitu);
        // per-model majorities are InSitu, Normal, InSitu -> InSitu too
        assert_eq!(
            committee_prediction_with(
                &recs,
                12,
                CommitteeMode::PerModelMajority,
                TieBreak::LowestIndex
            )
            .unwrap(),
            InSitu
        );
    }

    #[test]
    fn committee_unanimous() {
        let mut recs = Vec::new();
        for m in ["a", "b", "c"] {
            recs.extend(records_for("img", m, &[Benign; 12]));
        }
        assert_eq!(committee_prediction(&recs, 12).unwrap(), Benign);
    }

    #[test]
    fn committee_rejects_inconsistent_patch_counts() {
        let mut recs = records_for("img", "m1", &[Normal; 12]);
        recs.extend(records_for("img", "m2", &[Benign; 11]));
        assert!(matches!(
            committee_prediction(&recs, 12),
            Err(Error::InconsistentPatchCount { actual: 11, .. })
        ));
    }

    #[test]
    fn binary_mapping() {
        assert_eq!(to_binary(Normal), BinaryLabel::NonCarcinoma);
        assert_eq!(to_binary(Benign), BinaryLabel::NonCarcinoma);
        assert_eq!(to_binary(InSitu), BinaryLabel::Carcinoma);
        assert_eq!(to_binary(Invasive), BinaryLabel::Carcinoma);
    }

    #[test]
    fn probability_sum_tie_break() {
        // 6 Normal vs 6 Benign votes; Benign holds more probability mass.
        let mut recs = Vec::new();
        for i in 0..6 {
            recs.push(PredictionRecord::from_probs(
                "img",
                i,
                "m",
                [0.4, 0.3, 0.2, 0.1],
            ));
        }
        for i in 6..12 {
            recs.push(PredictionRecord::from_probs(
                "img",
                i,
                "m",
                [0.05, 0.9, 0.03, 0.02],
            ));
        }
        assert_eq!(
            image_prediction_with(&recs, 12, TieBreak::LowestIndex).unwrap(),
            Normal
        );
        assert_eq!(
            image_prediction_with(&recs, 12, TieBreak::ProbabilitySum).unwrap(),
            Benign
        );
    }

    #[test]
    fn prediction_file_round_trip() {
        let recs = vec![
            PredictionRecord::from_probs("img1", 0, "m", [0.7, 0.1, 0.1, 0.1]),
            PredictionRecord::from_label("img1", 1, "m", Invasive),
            PredictionRecord::from_probs("img2", 0, "m", [0.25, 0.25, 0.25, 0.25]),
        ];
        let mut buf = Vec::new();
        write_prediction_file(&mut buf, &recs).unwrap();
        let parsed = read_prediction_file(&buf[..], "mem").unwrap();
        assert_eq!(parsed, recs);
    }

    #[test]
    fn prediction_file_rejects_label_argmax_mismatch() {
        let text = format!("{PREDICTION_HEADER}\nimg,0,m,0.7,0.1,0.1,0.1,Benign\n");
        match read_prediction_file(text.as_bytes(), "mem") {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("argmax"), "reason: {reason}");
            }
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn prediction_file_rejects_bad_header() {
        assert!(matches!(
            read_prediction_file("image,patch\n".as_bytes(), "mem"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn prediction_file_rejects_bad_probability_sum() {
        let text = format!("{PREDICTION_HEADER}\nimg,0,m,0.9,0.9,0.1,0.1,Normal\n");
        assert!(read_prediction_file(text.as_bytes(), "mem").is_err());
    }

    #[test]
    fn binary_is_mapped_from_four_class_decision() {
        // The binary result comes from mapping the 4-class image decision,
        // not from a binary-majority over mapped patch votes. 5 Normal + 4
        // InSitu + 3 Invasive: 4-class majority is Normal -> NonCarcinoma,
        // while mapped patch votes would give Carcinoma 7:5.
        let labels: Vec<ClassLabel> =
            [vec![Normal; 5], vec![InSitu; 4], vec![Invasive; 3]].concat();
        let recs = records_for("img", "m", &labels);
        let four_class = image_prediction(&recs, 12).unwrap();
        assert_eq!(to_binary(four_class), BinaryLabel::NonCarcinoma);

        let carcinoma_votes = labels
            .iter()
            .filter(|&&l| to_binary(l) == BinaryLabel::Carcinoma)
            .count();
        assert!(carcinoma_votes > labels.len() / 2, "setup lost its point");
    }
}

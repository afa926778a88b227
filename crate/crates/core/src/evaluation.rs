//! Closed- and open-set metrics over a [`ScoreMatrix`].
//!
//! A probe's rank is the number of gallery subjects scoring at least as high
//! as its own subject, so rank 1 means correctly identified. The false alarm
//! rate at threshold `t` is the fraction of unknown probes whose best score is
//! `>= t`; the detection and identification rate is the fraction of known
//! probes with rank `<= r` whose own-subject score is `>= t`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::feature::ScoreMatrix;
use crate::protocol::{ProbeSetId, ProtocolPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum ThresholdPolicy {
    /// No threshold exists when the selected score is already the maximum.
    #[default]
    Strict,
    /// Use the next representable value above the maximum score instead.
    AboveMax,
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(ThresholdPolicy::Strict),
            "above-max" => Ok(ThresholdPolicy::AboveMax),
            other => Err(Error::invalid(format!("unknown threshold policy `{other}`"))),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThresholdPolicy::Strict => "strict",
            ThresholdPolicy::AboveMax => "above-max",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub rank: usize,
    pub far_targets: Vec<f64>,
    pub threshold_policy: ThresholdPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rank: 1,
            far_targets: alloc::vec![0.001, 0.01, 0.1, 1.0],
            threshold_policy: ThresholdPolicy::Strict,
        }
    }
}

impl EvalConfig {
    pub fn check(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        if let Some(t) = self.far_targets.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::invalid(format!("FAR target {t} outside (0, 1]")));
        }
        if self.far_targets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("FAR targets must be sorted ascending"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fmr: f64,
    pub tmr: f64,
    pub threshold: f64,
}

/// A known probe: its matrix row and the column of its own subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownProbe {
    pub row: usize,
    pub subject: usize,
}

/// Which matrix rows are known probes and which are unknown ones.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProbeSplit {
    pub known: Vec<KnownProbe>,
    pub unknown: Vec<usize>,
}

impl ProbeSplit {
    pub fn new(known: Vec<KnownProbe>, unknown: Vec<usize>) -> Self {
        ProbeSplit { known, unknown }
    }

    /// Classifies the rows of `scores` for probe set `set`. Rows outside the
    /// set are ignored; every key of the set must have a row.
    pub fn from_partition(scores: &ScoreMatrix, partition: &ProtocolPartition, set: ProbeSetId) -> Result<Self> {
        let unknown_keys = partition.unknown_keys(set);
        let mut split = ProbeSplit::default();
        let mut seen = BTreeSet::new();
        for (row, key) in scores.probe_keys().iter().enumerate() {
            if partition.probes_known.contains(key) {
                let subject = scores.subject_column(&key.identity).ok_or_else(|| {
                    Error::invalid(format!("known probe {key} has no gallery column `{}`", key.identity))
                })?;
                split.known.push(KnownProbe { row, subject });
            } else if unknown_keys.contains(key) {
                split.unknown.push(row);
            } else {
                continue;
            }
            seen.insert(key);
        }
        let expected = partition.probe_set(set);
        if let Some(missing) = expected.iter().find(|k| !seen.contains(k)) {
            return Err(Error::invalid(format!(
                "score matrix has no row for probe {missing} of set {set}"
            )));
        }
        Ok(split)
    }

    fn check(&self, scores: &ScoreMatrix) -> Result<()> {
        let rows = scores.rows();
        let cols = scores.cols();
        if self.known.iter().any(|k| k.row >= rows || k.subject >= cols) || self.unknown.iter().any(|&r| r >= rows) {
            return Err(Error::invalid(
                "probe split refers to rows or columns outside the score matrix",
            ));
        }
        Ok(())
    }

    fn require_known(&self, scores: &ScoreMatrix) -> Result<()> {
        self.check(scores)?;
        if self.known.is_empty() {
            return Err(Error::invalid("no known probes"));
        }
        Ok(())
    }

    fn require_unknown(&self, scores: &ScoreMatrix) -> Result<()> {
        self.check(scores)?;
        if self.unknown.is_empty() {
            return Err(Error::invalid("no unknown probes: open-set metrics are undefined"));
        }
        Ok(())
    }
}

/// Number of entries in `row` that are `>=` the entry at `correct`.
pub fn rank_in_row(row: &[f64], correct: usize) -> usize {
    let genuine = row[correct];
    row.iter().filter(|&&s| s >= genuine).count()
}

pub fn rank_of(scores: &ScoreMatrix, row: usize, subject: &str) -> Result<usize> {
    let col = scores
        .subject_column(subject)
        .ok_or_else(|| Error::invalid(format!("`{subject}` is not a gallery subject")))?;
    if row >= scores.rows() {
        return Err(Error::invalid(format!("row {row} outside the score matrix")));
    }
    Ok(rank_in_row(scores.row(row), col))
}

fn rate(count: usize, total: usize) -> f64 {
    count as f64 / total as f64
}

fn max_of(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Identification rate at ranks `1..=N`.
pub fn cmc_curve(scores: &ScoreMatrix, split: &ProbeSplit) -> Result<Vec<CurvePoint>> {
    split.require_known(scores)?;
    let n = scores.cols();
    let mut hist = alloc::vec![0usize; n + 1];
    for k in &split.known {
        hist[rank_in_row(scores.row(k.row), k.subject)] += 1;
    }
    let total = split.known.len();
    let mut cumulative = 0;
    Ok((1..=n)
        .map(|r| {
            cumulative += hist[r];
            CurvePoint {
                x: r as f64,
                y: rate(cumulative, total),
            }
        })
        .collect())
}

pub fn cmc_at(scores: &ScoreMatrix, split: &ProbeSplit, rank: usize) -> Result<f64> {
    split.require_known(scores)?;
    let hits = split
        .known
        .iter()
        .filter(|k| rank_in_row(scores.row(k.row), k.subject) <= rank)
        .count();
    Ok(rate(hits, split.known.len()))
}

pub fn unknown_max_scores(scores: &ScoreMatrix, split: &ProbeSplit) -> Vec<f64> {
    split.unknown.iter().map(|&r| max_of(scores.row(r))).collect()
}

pub fn far_at(scores: &ScoreMatrix, split: &ProbeSplit, threshold: f64) -> Result<f64> {
    split.require_unknown(scores)?;
    let alarms = split
        .unknown
        .iter()
        .filter(|&&r| max_of(scores.row(r)) >= threshold)
        .count();
    Ok(rate(alarms, split.unknown.len()))
}

pub fn dir_at(scores: &ScoreMatrix, split: &ProbeSplit, threshold: f64, rank: usize) -> Result<f64> {
    split.require_known(scores)?;
    if rank == 0 {
        return Err(Error::invalid("rank must be >= 1"));
    }
    let hits = split
        .known
        .iter()
        .filter(|k| {
            let row = scores.row(k.row);
            rank_in_row(row, k.subject) <= rank && row[k.subject] >= threshold
        })
        .count();
    Ok(rate(hits, split.known.len()))
}

/// The smallest observed unknown max-score strictly above the score found at
/// index `floor(target * n)` of the descending sort (clamped to `n - 1`).
/// Guarantees `far_at(threshold) <= target`.
pub fn threshold_for_far(
    scores: &ScoreMatrix,
    split: &ProbeSplit,
    target: f64,
    policy: ThresholdPolicy,
) -> Result<Option<f64>> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::invalid(format!("FAR target {target} outside (0, 1]")));
    }
    split.require_unknown(scores)?;
    let mut sorted = unknown_max_scores(scores, split);
    sorted.sort_by(|a, b| b.total_cmp(a));
    let n = sorted.len();
    let index = ((target * n as f64) as usize).min(n - 1);
    let pivot = sorted[index];
    match sorted[..index].iter().rev().find(|&&s| s > pivot) {
        Some(&t) => Ok(Some(t)),
        None => Ok(match policy {
            ThresholdPolicy::Strict => None,
            ThresholdPolicy::AboveMax => Some(sorted[0].next_up()),
        }),
    }
}

/// DIR against FAR over every distinct unknown max-score, plus the vacuous
/// threshold (FAR 1, DIR = CMC at `rank`) and, under
/// [`ThresholdPolicy::AboveMax`], the point just above the largest unknown
/// score. Sorted by ascending FAR, then DIR.
pub fn dir_curve(
    scores: &ScoreMatrix,
    split: &ProbeSplit,
    rank: usize,
    policy: ThresholdPolicy,
) -> Result<Vec<CurvePoint>> {
    split.require_unknown(scores)?;
    split.require_known(scores)?;
    let mut thresholds = unknown_max_scores(scores, split);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    if policy == ThresholdPolicy::AboveMax {
        let top = thresholds[0].next_up();
        thresholds.insert(0, top);
    }
    thresholds.push(f64::NEG_INFINITY);
    let mut points = thresholds
        .iter()
        .map(|&t| {
            Ok(CurvePoint {
                x: far_at(scores, split, t)?,
                y: dir_at(scores, split, t, rank)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    points.dedup();
    Ok(points)
}

fn count_at_least(sorted_asc: &[f64], t: f64) -> usize {
    sorted_asc.len() - sorted_asc.partition_point(|&s| s < t)
}

/// Verification ROC on the known probes: each probe against its own subject
/// is genuine, against every other subject an impostor. One point per
/// distinct score, plus the empty-acceptance point just above the maximum.
pub fn roc_curve(scores: &ScoreMatrix, split: &ProbeSplit) -> Result<Vec<RocPoint>> {
    split.require_known(scores)?;
    let mut genuine = Vec::with_capacity(split.known.len());
    let mut impostor = Vec::new();
    for k in &split.known {
        for (j, &s) in scores.row(k.row).iter().enumerate() {
            if j == k.subject {
                genuine.push(s);
            } else {
                impostor.push(s);
            }
        }
    }
    if impostor.is_empty() {
        return Err(Error::invalid(
            "no impostor scores: ROC needs at least two gallery subjects",
        ));
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let top = thresholds[thresholds.len() - 1].next_up();
    thresholds.push(top);
    let mut points: Vec<RocPoint> = thresholds
        .iter()
        .map(|&t| RocPoint {
            fmr: rate(count_at_least(&impostor, t), impostor.len()),
            tmr: rate(count_at_least(&genuine, t), genuine.len()),
            threshold: t,
        })
        .collect();
    points.sort_by(|a, b| {
        a.fmr
            .total_cmp(&b.fmr)
            .then(a.tmr.total_cmp(&b.tmr))
            .then(b.threshold.total_cmp(&a.threshold))
    });
    Ok(points)
}

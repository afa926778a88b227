//! Feature vectors, labeled records, datasets and the elementary vector
//! operations every scorer builds on.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Deref;

use crate::error::{Error, Result};

/// A deep feature vector. Construction does not validate; datasets do.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(values: Vec<f64>) -> Self {
        FeatureVector(values)
    }
}

/// `(identity, image_index)`, the key of one image in the protocol.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageKey {
    pub identity: String,
    pub image: u32,
}

impl ImageKey {
    pub fn new(identity: impl Into<String>, image: u32) -> Self {
        ImageKey {
            identity: identity.into(),
            image,
        }
    }
}

impl fmt::Display for ImageKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{:04}", self.identity, self.image)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeature {
    pub identity: String,
    /// Per-identity image number, starting at 1.
    pub image: u32,
    pub feature: FeatureVector,
}

impl LabeledFeature {
    pub fn new(identity: impl Into<String>, image: u32, feature: impl Into<FeatureVector>) -> Self {
        LabeledFeature {
            identity: identity.into(),
            image,
            feature: feature.into(),
        }
    }

    pub fn key(&self) -> ImageKey {
        ImageKey::new(self.identity.clone(), self.image)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    DuplicateKey {
        record: usize,
        key: ImageKey,
    },
    ImageIndexZero {
        record: usize,
        identity: String,
    },
    EmptyFeature {
        record: usize,
    },
    DimensionMismatch {
        record: usize,
        expected: usize,
        found: usize,
    },
    NonFinite {
        record: usize,
    },
    ZeroVector {
        record: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "dataset is empty"),
            Violation::DuplicateKey { record, key } => {
                write!(f, "record {record}: duplicate key {key}")
            }
            Violation::ImageIndexZero { record, identity } => {
                write!(f, "record {record}: image index of `{identity}` must be >= 1")
            }
            Violation::EmptyFeature { record } => write!(f, "record {record}: empty feature vector"),
            Violation::DimensionMismatch {
                record,
                expected,
                found,
            } => write!(f, "record {record}: dimension {found}, expected {expected}"),
            Violation::NonFinite { record } => write!(f, "record {record}: non-finite component"),
            Violation::ZeroVector { record } => write!(f, "record {record}: all-zero feature vector"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violations.first() {
            None => write!(f, "no violations"),
            Some(first) if self.violations.len() == 1 => write!(f, "{first}"),
            Some(first) => write!(f, "{first} (and {} more)", self.violations.len() - 1),
        }
    }
}

/// Reports every violated dataset invariant. The expected dimension is the
/// dimension of the first record.
pub fn validate_dataset(records: &[LabeledFeature]) -> ValidationReport {
    let mut violations = Vec::new();
    if records.is_empty() {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }
    let expected = records[0].feature.dim();
    let mut seen: BTreeMap<(&str, u32), usize> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if seen.insert((r.identity.as_str(), r.image), i).is_some() {
            violations.push(Violation::DuplicateKey {
                record: i,
                key: r.key(),
            });
        }
        if r.image == 0 {
            violations.push(Violation::ImageIndexZero {
                record: i,
                identity: r.identity.clone(),
            });
        }
        let dim = r.feature.dim();
        if dim == 0 {
            violations.push(Violation::EmptyFeature { record: i });
            continue;
        }
        if dim != expected {
            violations.push(Violation::DimensionMismatch {
                record: i,
                expected,
                found: dim,
            });
        }
        if !r.feature.is_finite() {
            violations.push(Violation::NonFinite { record: i });
        } else if r.feature.is_zero() {
            violations.push(Violation::ZeroVector { record: i });
        }
    }
    ValidationReport { violations }
}

/// A validated, non-empty collection of labeled features of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<LabeledFeature>,
    dimension: usize,
    index: BTreeMap<ImageKey, usize>,
}

impl Dataset {
    pub fn new(records: Vec<LabeledFeature>) -> Result<Self> {
        let report = validate_dataset(&records);
        if !report.is_empty() {
            return Err(Error::Validation(report));
        }
        let dimension = records[0].feature.dim();
        let index = records.iter().enumerate().map(|(i, r)| (r.key(), i)).collect();
        Ok(Dataset {
            records,
            dimension,
            index,
        })
    }

    pub fn records(&self) -> &[LabeledFeature] {
        &self.records
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, key: &ImageKey) -> Option<&LabeledFeature> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    /// Looks up every key, in order.
    pub fn select<'a, I>(&self, keys: I) -> Result<Vec<LabeledFeature>>
    where
        I: IntoIterator<Item = &'a ImageKey>,
    {
        keys.into_iter()
            .map(|k| {
                self.get(k)
                    .cloned()
                    .ok_or_else(|| Error::invalid(format!("no record for {k}")))
            })
            .collect()
    }

    pub fn into_records(self) -> Vec<LabeledFeature> {
        self.records
    }
}

/// The enrolled features of one gallery subject and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GalleryTemplate {
    pub identity: String,
    pub features: Vec<FeatureVector>,
    /// Component-wise mean of `features`, not re-normalized.
    pub mean: Vec<f64>,
}

impl GalleryTemplate {
    pub fn new(identity: impl Into<String>, features: Vec<FeatureVector>) -> Result<Self> {
        let mean = template_mean(&features)?;
        Ok(GalleryTemplate {
            identity: identity.into(),
            features,
            mean,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Probes x gallery subjects, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    probe_keys: Vec<ImageKey>,
    gallery_subjects: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(probe_keys: Vec<ImageKey>, gallery_subjects: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != probe_keys.len() * gallery_subjects.len() {
            return Err(Error::invalid(format!(
                "score matrix has {} entries, expected {} x {}",
                scores.len(),
                probe_keys.len(),
                gallery_subjects.len()
            )));
        }
        if let Some(pos) = scores.iter().position(|s| !s.is_finite()) {
            let cols = gallery_subjects.len();
            return Err(Error::invalid(format!(
                "non-finite score for probe {} and subject `{}`",
                probe_keys[pos / cols],
                gallery_subjects[pos % cols]
            )));
        }
        Ok(ScoreMatrix {
            probe_keys,
            gallery_subjects,
            scores,
        })
    }

    pub fn rows(&self) -> usize {
        self.probe_keys.len()
    }

    pub fn cols(&self) -> usize {
        self.gallery_subjects.len()
    }

    pub fn probe_keys(&self) -> &[ImageKey] {
        &self.probe_keys
    }

    pub fn gallery_subjects(&self) -> &[String] {
        &self.gallery_subjects
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.scores[i * c..(i + 1) * c]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols() + col]
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    pub fn subject_column(&self, identity: &str) -> Option<usize> {
        self.gallery_subjects.iter().position(|s| s == identity)
    }

    pub fn probe_row(&self, key: &ImageKey) -> Option<usize> {
        self.probe_keys.iter().position(|k| k == key)
    }

    pub fn is_probability_valued(&self) -> bool {
        self.scores.iter().all(|s| (0.0..=1.0).contains(s))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("empty vectors"));
    }
    Ok(())
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine of a zero-norm vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// `1 - cosine_similarity(a, b)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

pub fn template_mean<V: AsRef<[f64]>>(features: &[V]) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::invalid("template mean of an empty set"))?
        .as_ref();
    let mut sum = first.to_vec();
    for f in &features[1..] {
        let f = f.as_ref();
        if f.len() != sum.len() {
            return Err(Error::invalid(format!(
                "dimension mismatch in template: {} vs {}",
                f.len(),
                sum.len()
            )));
        }
        for (s, v) in sum.iter_mut().zip(f) {
            *s += v;
        }
    }
    let n = features.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const SQRT_HALF: f64 = core::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - SQRT_HALF).abs() < 1e-15);
    }

    #[test]
    fn distance_examples() {
        let v = [2.0, 5.0];
        assert!(cosine_distance(&v, &v).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!((cosine_distance(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - (1.0 - SQRT_HALF)).abs() < 1e-15);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(
            cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            cosine_similarity(&[1.0], &[1.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn mean_examples() {
        let v = vec![1.5, -2.0];
        assert_eq!(template_mean(&[v.clone(), v.clone(), v.clone()]).unwrap(), v);
        let m = template_mean(&[vec![3.0, 0.0], vec![0.0, 3.0], vec![3.0, 3.0]]).unwrap();
        assert_eq!(m, vec![2.0, 2.0]);
        assert!(template_mean::<Vec<f64>>(&[]).is_err());
    }

    #[test]
    fn validation_examples() {
        let one = [LabeledFeature::new("a", 1, vec![1.0, 0.0])];
        assert!(validate_dataset(&one).is_empty());

        let dup = [
            LabeledFeature::new("a", 1, vec![1.0, 0.0]),
            LabeledFeature::new("a", 1, vec![0.0, 1.0]),
        ];
        let r = validate_dataset(&dup);
        assert_eq!(r.len(), 1);
        assert!(matches!(r.violations[0], Violation::DuplicateKey { record: 1, .. }));

        let nan = [LabeledFeature::new("a", 1, vec![f64::NAN, 0.0])];
        let r = validate_dataset(&nan);
        assert_eq!(r.violations, vec![Violation::NonFinite { record: 0 }]);
    }

    #[test]
    fn validation_catches_shape_problems() {
        let recs = [
            LabeledFeature::new("a", 1, vec![1.0, 0.0]),
            LabeledFeature::new("b", 0, vec![1.0, 0.0]),
            LabeledFeature::new("c", 1, vec![1.0]),
            LabeledFeature::new("d", 1, vec![0.0, 0.0]),
        ];
        let r = validate_dataset(&recs);
        assert_eq!(r.len(), 3);
        assert!(Dataset::new(recs.to_vec()).is_err());
        assert!(matches!(validate_dataset(&[]).violations[..], [Violation::Empty]));
    }

    #[test]
    fn score_matrix_rejects_nan() {
        let keys = vec![ImageKey::new("p", 1)];
        let subjects = vec![String::from("g")];
        assert!(ScoreMatrix::new(keys.clone(), subjects.clone(), vec![f64::NAN]).is_err());
        assert!(ScoreMatrix::new(keys, subjects, vec![0.5, 0.2]).is_err());
    }
}

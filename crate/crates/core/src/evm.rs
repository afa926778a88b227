//! Extreme Value Machine gallery models.
//!
//! Every enrolled feature (or, in averaged mode, every template mean) becomes
//! an extreme vector: the `alpha`-scaled cosine distances from it to all
//! training features of *other* identities are collected, a Weibull is fit to
//! the lowest `tail_size` of them, and a probe is scored by the Weibull
//! survival function of its own distance. All extreme vectors are kept.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::evt::{self, WeibullFit};
use crate::feature::{cosine_distance, GalleryTemplate, LabeledFeature};
use crate::par;
use crate::scoring::Fusion;

pub const DEFAULT_ALPHA: f64 = 0.7;
pub const DEFAULT_TAIL_SIZE: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvmConfig {
    /// Multiplier applied to cosine distances.
    pub alpha: f64,
    pub tail_size: usize,
    pub fusion: Fusion,
    /// Whether the query distance is multiplied by `alpha` too. When false,
    /// only the training distances are scaled.
    #[cfg_attr(feature = "serde", serde(default = "default_true"))]
    pub scale_query_distance: bool,
}

#[cfg(feature = "serde")]
fn default_true() -> bool {
    true
}

impl Default for EvmConfig {
    fn default() -> Self {
        EvmConfig {
            alpha: DEFAULT_ALPHA,
            tail_size: DEFAULT_TAIL_SIZE,
            fusion: Fusion::Max,
            scale_query_distance: true,
        }
    }
}

impl EvmConfig {
    pub fn with_fusion(fusion: Fusion) -> Self {
        EvmConfig {
            fusion,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.tail_size < 2 {
            return Err(Error::invalid(format!(
                "tail size must be >= 2, got {}",
                self.tail_size
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExtremeVector {
    pub feature: Vec<f64>,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub fit: WeibullFit,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvmSubject {
    pub identity: String,
    pub vectors: Vec<ExtremeVector>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvmGalleryModel {
    pub config: EvmConfig,
    pub subjects: Vec<EvmSubject>,
}

/// `alpha * cosine_distance(anchor, t)` for every training feature whose
/// identity differs from `anchor_identity`.
pub fn negative_distances(
    anchor: &[f64],
    anchor_identity: &str,
    training: &[LabeledFeature],
    alpha: f64,
) -> Result<Vec<f64>> {
    let dist = training
        .iter()
        .filter(|t| t.identity != anchor_identity)
        .map(|t| cosine_distance(anchor, &t.feature).map(|d| alpha * d))
        .collect::<Result<Vec<f64>>>()?;
    if dist.is_empty() {
        return Err(Error::TrainingData(format!(
            "no training features of an identity other than `{anchor_identity}`"
        )));
    }
    Ok(dist)
}

pub fn train(gallery: &[GalleryTemplate], training: &[LabeledFeature], cfg: &EvmConfig) -> Result<EvmGalleryModel> {
    cfg.check()?;
    if gallery.is_empty() {
        return Err(Error::invalid("EVM training needs at least one gallery subject"));
    }
    let anchors: Vec<(usize, usize, &[f64])> = gallery
        .iter()
        .enumerate()
        .flat_map(|(s, t)| -> Vec<(usize, usize, &[f64])> {
            match cfg.fusion {
                Fusion::Max => t
                    .features
                    .iter()
                    .enumerate()
                    .map(|(i, f)| (s, i, f.as_slice()))
                    .collect(),
                Fusion::Avg => alloc::vec![(s, 0, t.mean.as_slice())],
            }
        })
        .collect();

    let fits = par::map(&anchors, |&(s, i, anchor)| {
        let identity = &gallery[s].identity;
        negative_distances(anchor, identity, training, cfg.alpha)
            .and_then(|dist| evt::fit_low_tail(&dist, cfg.tail_size))
            .map_err(|e| e.context(format!("EVM anchor {i} of subject `{identity}`")))
    });

    let mut subjects: Vec<EvmSubject> = gallery
        .iter()
        .map(|t| EvmSubject {
            identity: t.identity.clone(),
            vectors: Vec::new(),
        })
        .collect();
    for (&(s, _, anchor), fit) in anchors.iter().zip(fits) {
        subjects[s].vectors.push(ExtremeVector {
            feature: anchor.to_vec(),
            fit: fit?,
        });
    }
    Ok(EvmGalleryModel { config: *cfg, subjects })
}

impl EvmGalleryModel {
    pub fn fit_count(&self) -> usize {
        self.subjects.iter().map(|s| s.vectors.len()).sum()
    }

    pub fn dim(&self) -> Option<usize> {
        self.subjects.first()?.vectors.first().map(|v| v.feature.len())
    }

    pub fn check(&self) -> Result<()> {
        self.config.check()?;
        let dim = self
            .dim()
            .ok_or_else(|| Error::invalid("EVM model without extreme vectors"))?;
        for s in &self.subjects {
            if s.vectors.is_empty() {
                return Err(Error::invalid(format!(
                    "EVM subject `{}` has no extreme vectors",
                    s.identity
                )));
            }
            if self.config.fusion == Fusion::Avg && s.vectors.len() != 1 {
                return Err(Error::invalid(format!(
                    "averaged EVM subject `{}` has {} extreme vectors",
                    s.identity,
                    s.vectors.len()
                )));
            }
            for v in &s.vectors {
                if v.feature.len() != dim {
                    return Err(Error::invalid(format!(
                        "EVM subject `{}` has mixed dimensions",
                        s.identity
                    )));
                }
                v.fit.check()?;
            }
        }
        Ok(())
    }

    fn query_distance(&self, d: f64) -> f64 {
        if self.config.scale_query_distance {
            self.config.alpha * d
        } else {
            d
        }
    }

    /// Probability of inclusion of `probe` in subject `index`: the maximum
    /// over the subject's extreme vectors.
    pub fn score_subject(&self, index: usize, probe: &[f64]) -> Result<f64> {
        let subject = &self.subjects[index];
        let mut best = 0.0f64;
        for v in &subject.vectors {
            let d = self.query_distance(cosine_distance(&v.feature, probe)?);
            best = best.max(evt::psi(&v.fit, d)?);
        }
        Ok(best)
    }

    /// Per-subject probabilities for either fusion mode.
    pub fn score(&self, probe: &[f64]) -> Result<Vec<f64>> {
        (0..self.subjects.len()).map(|i| self.score_subject(i, probe)).collect()
    }

    fn require(&self, fusion: Fusion) -> Result<()> {
        if self.config.fusion != fusion {
            return Err(Error::invalid(format!(
                "EVM model was trained for {:?} fusion, not {fusion:?}",
                self.config.fusion
            )));
        }
        Ok(())
    }
}

/// Maximum over each subject's enrolled features.
pub fn score_max(model: &EvmGalleryModel, probe: &[f64]) -> Result<Vec<f64>> {
    model.require(Fusion::Max)?;
    model.score(probe)
}

/// One probability per subject from its template-mean model.
pub fn score_avg(model: &EvmGalleryModel, probe: &[f64]) -> Result<Vec<f64>> {
    model.require(Fusion::Avg)?;
    model.score(probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    use crate::feature::FeatureVector;

    fn rec(id: &str, image: u32, v: &[f64]) -> LabeledFeature {
        LabeledFeature::new(id, image, v.to_vec())
    }

    fn toy() -> (Vec<GalleryTemplate>, Vec<LabeledFeature>) {
        let a = [[1.0, 0.1, 0.0], [1.0, 0.0, 0.1], [0.9, 0.1, 0.1]];
        let b = [[0.0, 1.0, 0.1], [0.1, 1.0, 0.0], [0.1, 0.9, 0.1]];
        let mut training = Vec::new();
        for (i, v) in a.iter().enumerate() {
            training.push(rec("a", i as u32 + 1, v));
        }
        for (i, v) in b.iter().enumerate() {
            training.push(rec("b", i as u32 + 1, v));
        }
        training.push(rec("ku", 1, &[0.5, 0.5, 1.0]));
        let fv = |rows: &[[f64; 3]]| rows.iter().map(|r| FeatureVector::new(r.to_vec())).collect::<Vec<_>>();
        let gallery = vec![
            GalleryTemplate::new("a", fv(&a)).unwrap(),
            GalleryTemplate::new("b", fv(&b)).unwrap(),
        ];
        (gallery, training)
    }

    #[test]
    fn negative_distance_examples() {
        let training = [
            rec("x", 1, &[1.0, 0.0]),
            rec("x", 2, &[0.5, 0.5]),
            rec("x", 3, &[0.0, 1.0]),
        ];
        assert!(matches!(
            negative_distances(&[1.0, 0.0], "x", &training, 0.7),
            Err(Error::TrainingData(_))
        ));
        let training = [rec("y", 1, &[0.0, 1.0])];
        let d = negative_distances(&[1.0, 0.0], "x", &training, 0.7).unwrap();
        assert_eq!(d, vec![0.7]);
        let d = negative_distances(&[1.0, 0.0], "x", &training, 0.5).unwrap();
        assert_eq!(d, vec![0.5]);
    }

    #[test]
    fn retain_all_counts() {
        let (gallery, training) = toy();
        let max = train(&gallery, &training, &EvmConfig::with_fusion(Fusion::Max)).unwrap();
        assert_eq!(max.fit_count(), 6);
        assert!(max.subjects.iter().all(|s| s.vectors.iter().all(|v| v.fit.clamped)));
        let avg = train(&gallery, &training, &EvmConfig::with_fusion(Fusion::Avg)).unwrap();
        assert_eq!(avg.fit_count(), 2);
        assert_eq!(avg.subjects[0].vectors[0].feature, gallery[0].mean);
        // 3 other-subject features plus the known unknown.
        assert_eq!(avg.subjects[0].vectors[0].fit.tail_size_used, 4);
    }

    #[test]
    fn enrolled_probe_scores_one() {
        let (gallery, training) = toy();
        let model = train(&gallery, &training, &EvmConfig::with_fusion(Fusion::Max)).unwrap();
        let s = score_max(&model, &gallery[1].features[2]).unwrap();
        assert_eq!(s[1], 1.0);
        assert!(s[0] < 1.0);
        assert!(score_avg(&model, &gallery[1].features[2]).is_err());
        assert!(score_max(&model, &[1.0, 0.0]).is_err());

        let avg = train(&gallery, &training, &EvmConfig::with_fusion(Fusion::Avg)).unwrap();
        let s = score_avg(&avg, &gallery[0].mean).unwrap();
        assert_eq!(s[0], 1.0);
        assert!(s.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn query_scaling_flag() {
        let (gallery, training) = toy();
        let mut cfg = EvmConfig::with_fusion(Fusion::Avg);
        let scaled = train(&gallery, &training, &cfg).unwrap();
        cfg.scale_query_distance = false;
        let raw = train(&gallery, &training, &cfg).unwrap();
        let probe = [0.6, 0.4, 0.2];
        let fit = scaled.subjects[0].vectors[0].fit;
        let d = cosine_distance(&gallery[0].mean, &probe).unwrap();
        assert_eq!(scaled.score(&probe).unwrap()[0], evt::psi(&fit, 0.7 * d).unwrap());
        assert_eq!(raw.score(&probe).unwrap()[0], evt::psi(&fit, d).unwrap());
    }

    #[test]
    fn config_validation() {
        let (gallery, training) = toy();
        let mut cfg = EvmConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(train(&gallery, &training, &cfg).is_err());
        cfg.alpha = 0.7;
        cfg.tail_size = 1;
        assert!(train(&gallery, &training, &cfg).is_err());
    }

    #[test]
    fn errors_name_the_subject() {
        let (gallery, _) = toy();
        let training = [rec("a", 1, &[1.0, 0.0, 0.0]), rec("b", 1, &[0.0, 1.0, 0.0])];
        // Only one negative per anchor: a single distance cannot be fit.
        let err = train(&gallery, &training, &EvmConfig::default()).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("subject `a`"), "{msg}");
    }
}

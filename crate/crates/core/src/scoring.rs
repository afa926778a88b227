//! Probe-versus-gallery scoring for the three methods and both fusion
//! strategies, and dense score matrices.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};
use crate::evm::EvmGalleryModel;
use crate::feature::{cosine_similarity, GalleryTemplate, LabeledFeature, ScoreMatrix};
use crate::par;
use crate::subspace::SubspaceModel;

/// How the enrolled features of a template are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Fusion {
    /// Best score over the enrolled features.
    Max,
    /// Score against the template mean.
    Avg,
}

impl Fusion {
    pub const ALL: [Fusion; 2] = [Fusion::Max, Fusion::Avg];

    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::Max => "max",
            Fusion::Avg => "avg",
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(Fusion::Max),
            "avg" => Ok(Fusion::Avg),
            other => Err(Error::invalid(format!("unknown fusion `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum ScoringMethod<'a> {
    Cosine(Fusion),
    Lda(&'a SubspaceModel, Fusion),
    Evm(&'a EvmGalleryModel, Fusion),
}

impl ScoringMethod<'_> {
    pub fn fusion(&self) -> Fusion {
        match *self {
            ScoringMethod::Cosine(f) | ScoringMethod::Lda(_, f) | ScoringMethod::Evm(_, f) => f,
        }
    }

    pub fn check(&self) -> Result<()> {
        match self {
            ScoringMethod::Evm(model, fusion) if model.config.fusion != *fusion => Err(Error::invalid(format!(
                "EVM model trained for {} fusion cannot score with {fusion}",
                model.config.fusion
            ))),
            _ => Ok(()),
        }
    }
}

pub fn score_cosine_max(g: &GalleryTemplate, p: &[f64]) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for f in &g.features {
        best = best.max(cosine_similarity(f, p)?);
    }
    if g.features.is_empty() {
        return Err(Error::invalid(format!("template `{}` has no features", g.identity)));
    }
    Ok(best)
}

pub fn score_cosine_avg(g: &GalleryTemplate, p: &[f64]) -> Result<f64> {
    cosine_similarity(&g.mean, p)
}

/// Cosine scoring after projecting template and probe into the discriminant
/// subspace. Averaged mode projects the template mean.
pub fn score_lda(m: &SubspaceModel, g: &GalleryTemplate, p: &[f64], fusion: Fusion) -> Result<f64> {
    let yp = m.project(p)?;
    match fusion {
        Fusion::Max => {
            let projected = g.features.iter().map(|f| m.project(f)).collect::<Result<Vec<_>>>()?;
            max_cosine(&projected, &yp)
        }
        Fusion::Avg => cosine_similarity(&m.project(&g.mean)?, &yp),
    }
}

fn max_cosine(features: &[Vec<f64>], p: &[f64]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::invalid("template has no features"));
    }
    let mut best = f64::NEG_INFINITY;
    for f in features {
        best = best.max(cosine_similarity(f, p)?);
    }
    Ok(best)
}

/// Score of one probe against gallery subject `subject` (the index into
/// `gallery` and, for EVM, into the model's subjects).
pub fn score_pair(method: &ScoringMethod<'_>, gallery: &[GalleryTemplate], subject: usize, p: &[f64]) -> Result<f64> {
    method.check()?;
    let g = &gallery[subject];
    match *method {
        ScoringMethod::Cosine(Fusion::Max) => score_cosine_max(g, p),
        ScoringMethod::Cosine(Fusion::Avg) => score_cosine_avg(g, p),
        ScoringMethod::Lda(m, fusion) => score_lda(m, g, p, fusion),
        ScoringMethod::Evm(model, _) => {
            check_evm_gallery(model, gallery)?;
            model.score_subject(subject, p)
        }
    }
}

fn check_evm_gallery(model: &EvmGalleryModel, gallery: &[GalleryTemplate]) -> Result<()> {
    let same = model.subjects.len() == gallery.len()
        && model
            .subjects
            .iter()
            .zip(gallery)
            .all(|(s, g)| s.identity == g.identity);
    if !same {
        return Err(Error::invalid("EVM model subjects do not match the gallery"));
    }
    Ok(())
}

enum Prepared<'a> {
    Cosine(Fusion),
    Projected {
        model: &'a SubspaceModel,
        /// Per subject, the projected features (max) or projected mean (avg).
        templates: Vec<Vec<Vec<f64>>>,
    },
    Evm(&'a EvmGalleryModel),
}

/// Scores every probe against every gallery subject. Rows follow `probes`,
/// columns follow `gallery`.
pub fn score_all(
    method: &ScoringMethod<'_>,
    gallery: &[GalleryTemplate],
    probes: &[LabeledFeature],
) -> Result<ScoreMatrix> {
    method.check()?;
    if probes.is_empty() {
        return Err(Error::invalid("no probes to score"));
    }
    if gallery.is_empty() {
        return Err(Error::invalid("empty gallery"));
    }
    let prepared = match *method {
        ScoringMethod::Cosine(f) => Prepared::Cosine(f),
        ScoringMethod::Lda(model, fusion) => {
            let templates = gallery
                .iter()
                .map(|g| match fusion {
                    Fusion::Max => g.features.iter().map(|f| model.project(f)).collect::<Result<Vec<_>>>(),
                    Fusion::Avg => model.project(&g.mean).map(|y| alloc::vec![y]),
                })
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.context("projecting gallery"))?;
            Prepared::Projected { model, templates }
        }
        ScoringMethod::Evm(model, _) => {
            check_evm_gallery(model, gallery)?;
            Prepared::Evm(model)
        }
    };

    let rows = par::map(probes, |probe| -> Result<Vec<f64>> {
        let p = probe.feature.as_slice();
        let annotate =
            |j: usize, e: Error| e.context(format!("probe {} vs subject `{}`", probe.key(), gallery[j].identity));
        match &prepared {
            Prepared::Cosine(fusion) => (0..gallery.len())
                .map(|j| {
                    match fusion {
                        Fusion::Max => score_cosine_max(&gallery[j], p),
                        Fusion::Avg => score_cosine_avg(&gallery[j], p),
                    }
                    .map_err(|e| annotate(j, e))
                })
                .collect(),
            Prepared::Projected { model, templates } => {
                let yp = model.project(p).map_err(|e| annotate(0, e))?;
                templates
                    .iter()
                    .enumerate()
                    .map(|(j, t)| max_cosine(t, &yp).map_err(|e| annotate(j, e)))
                    .collect()
            }
            Prepared::Evm(model) => (0..gallery.len())
                .map(|j| model.score_subject(j, p).map_err(|e| annotate(j, e)))
                .collect(),
        }
    });

    let mut scores = Vec::with_capacity(probes.len() * gallery.len());
    for row in rows {
        scores.extend(row?);
    }
    let keys = probes.iter().map(LabeledFeature::key).collect();
    let subjects: Vec<String> = gallery.iter().map(|g| g.identity.clone()).collect();
    ScoreMatrix::new(keys, subjects, scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature::FeatureVector;
    use alloc::vec;

    fn template(id: &str, rows: &[&[f64]]) -> GalleryTemplate {
        GalleryTemplate::new(id, rows.iter().map(|r| FeatureVector::new(r.to_vec())).collect()).unwrap()
    }

    #[test]
    fn cosine_max_examples() {
        let g = template("g", &[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(score_cosine_max(&g, &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(score_cosine_max(&g, &[0.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_avg_examples() {
        let g = template("g", &[&[0.2, 0.5], &[0.2, 0.5], &[0.2, 0.5]]);
        assert!((score_cosine_avg(&g, &[0.2, 0.5]).unwrap() - 1.0).abs() < 1e-15);
        let g = template("g", &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        assert!((g.mean[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((score_cosine_avg(&g, &[1.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        let g = template("g", &[&[1.0, 0.0], &[-1.0, 0.0]]);
        assert!(matches!(score_cosine_avg(&g, &[1.0, 1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn identity_lda_reduces_to_cosine() {
        let g = template("g", &[&[1.0, 0.2, 0.0], &[0.3, 1.0, -0.4], &[0.1, 0.1, 0.9]]);
        let m = SubspaceModel::identity(3);
        let p = [0.4, -0.2, 0.7];
        assert_eq!(
            score_lda(&m, &g, &p, Fusion::Max).unwrap(),
            score_cosine_max(&g, &p).unwrap()
        );
        assert_eq!(
            score_lda(&m, &g, &p, Fusion::Avg).unwrap(),
            score_cosine_avg(&g, &p).unwrap()
        );
    }

    #[test]
    fn single_pair_matrix() {
        let g = vec![template("g", &[&[1.0, 0.0], &[0.6, 0.8]])];
        let probes = vec![LabeledFeature::new("p", 1, vec![0.0, 1.0])];
        let m = score_all(&ScoringMethod::Cosine(Fusion::Max), &g, &probes).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.get(0, 0), score_cosine_max(&g[0], &[0.0, 1.0]).unwrap());
    }

    #[test]
    fn batch_errors_carry_context() {
        let g = vec![template("g", &[&[1.0, 0.0], &[-1.0, 0.0]])];
        let probes = vec![LabeledFeature::new("p", 3, vec![0.0, 1.0])];
        let err = score_all(&ScoringMethod::Cosine(Fusion::Avg), &g, &probes).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("p/0003") && msg.contains("`g`"), "{msg}");
        assert!(score_all(&ScoringMethod::Cosine(Fusion::Avg), &g, &[]).is_err());
    }

    #[test]
    fn fusion_parse() {
        assert_eq!("max".parse::<Fusion>().unwrap(), Fusion::Max);
        assert_eq!("avg".parse::<Fusion>().unwrap(), Fusion::Avg);
        assert!("mean".parse::<Fusion>().is_err());
    }
}

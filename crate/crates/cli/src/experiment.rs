//! End-to-end runs: partition, fit, score and evaluate a grid of
//! method x fusion cells on the requested probe sets.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use openset_core::evaluation::{self, ProbeSplit};
use openset_core::evm::{self, EvmConfig};
use openset_core::protocol::{categorize_identities, IdentityCategory};
use openset_core::{
    build_partition, fit_subspace, score_all, CurvePoint, Dataset, EvalConfig, EvmGalleryModel, Fusion, ImageKey,
    ProbeSetId, ProtocolPartition, RocPoint, ScoreMatrix, ScoringMethod, SubspaceModel, ThresholdPolicy,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result, StageExt};
use crate::formats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cos,
    Lda,
    Evm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Cos, Method::Lda, Method::Evm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cos => "cos",
            Method::Lda => "lda",
            Method::Evm => "evm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(Method::Cos),
            "lda" => Ok(Method::Lda),
            "evm" => Ok(Method::Evm),
            other => Err(Error::Usage(format!(
                "unknown method `{other}` (expected cos, lda or evm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub methods: Vec<Method>,
    pub fusions: Vec<Fusion>,
    pub probe_sets: Vec<ProbeSetId>,
    pub alpha: f64,
    pub tail: usize,
    pub pca_retention: f64,
    pub rank: usize,
    pub far_targets: Vec<f64>,
    pub threshold_policy: ThresholdPolicy,
    pub scale_query_distance: bool,
    #[serde(skip)]
    pub write_scores: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let eval = EvalConfig::default();
        RunConfig {
            methods: Method::ALL.to_vec(),
            fusions: Fusion::ALL.to_vec(),
            probe_sets: ProbeSetId::ALL.to_vec(),
            alpha: evm::DEFAULT_ALPHA,
            tail: evm::DEFAULT_TAIL_SIZE,
            pca_retention: openset_core::subspace::DEFAULT_RETENTION,
            rank: eval.rank,
            far_targets: eval.far_targets,
            threshold_policy: eval.threshold_policy,
            scale_query_distance: true,
            write_scores: false,
        }
    }
}

impl RunConfig {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            rank: self.rank,
            far_targets: self.far_targets.clone(),
            threshold_policy: self.threshold_policy,
        }
    }

    pub fn evm_config(&self, fusion: Fusion) -> EvmConfig {
        EvmConfig {
            alpha: self.alpha,
            tail_size: self.tail,
            fusion,
            scale_query_distance: self.scale_query_distance,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.methods.is_empty() || self.fusions.is_empty() || self.probe_sets.is_empty() {
            return Err(Error::Usage("methods, fusions and probe sets must not be empty".into()));
        }
        self.eval_config().check()?;
        self.evm_config(Fusion::Max).check()?;
        if !(self.pca_retention > 0.0 && self.pca_retention <= 1.0) {
            return Err(Error::Usage(format!(
                "PCA retention {} outside (0, 1]",
                self.pca_retention
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PartitionCounts {
    pub known_identities: usize,
    pub known_unknown_identities: usize,
    pub unknown_unknown_identities: usize,
    pub training: usize,
    pub gallery_images: usize,
    pub known_probes: usize,
    pub known_unknown_probes: usize,
    pub unknown_unknown_probes: usize,
}

impl PartitionCounts {
    pub fn new(d: &Dataset, p: &ProtocolPartition) -> Self {
        let cats = categorize_identities(d);
        let count = |c: IdentityCategory| cats.values().filter(|&&v| v == c).count();
        PartitionCounts {
            known_identities: count(IdentityCategory::Known),
            known_unknown_identities: count(IdentityCategory::KnownUnknown),
            unknown_unknown_identities: count(IdentityCategory::UnknownUnknown),
            training: p.training.len(),
            gallery_images: p.gallery.values().map(Vec::len).sum(),
            known_probes: p.probes_known.len(),
            known_unknown_probes: p.probes_known_unknown.len(),
            unknown_unknown_probes: p.probes_unknown_unknown.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FarOperatingPoint {
    pub target: f64,
    pub threshold: Option<f64>,
    pub achieved_far: Option<f64>,
    pub dir: Option<f64>,
    /// No threshold reaches the target.
    pub absent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Curves {
    Closed {
        cmc: Vec<CurvePoint>,
        roc: Option<Vec<RocPoint>>,
    },
    Open {
        dir: Vec<CurvePoint>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetReport {
    pub probe_set: ProbeSetId,
    pub known_probes: usize,
    pub unknown_probes: usize,
    pub rank: usize,
    pub rank1: f64,
    pub cmc_at_rank: f64,
    pub far_operating_points: Vec<FarOperatingPoint>,
    #[serde(skip)]
    pub curves: Curves,
}

impl SetReport {
    pub fn dir_curve(&self) -> Option<&[CurvePoint]> {
        match &self.curves {
            Curves::Open { dir } => Some(dir),
            Curves::Closed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellReport {
    pub method: Method,
    pub fusion: Fusion,
    pub sets: Vec<SetReport>,
    #[serde(skip)]
    pub scores: ScoreMatrix,
}

impl CellReport {
    pub fn set(&self, id: ProbeSetId) -> Option<&SetReport> {
        self.sets.iter().find(|s| s.probe_set == id)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetStats {
    pub records: usize,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment {
    pub dataset: DatasetStats,
    pub config: RunConfig,
    pub partition_counts: PartitionCounts,
    pub subspace_output_dim: Option<usize>,
    pub cells: Vec<CellReport>,
    #[serde(skip)]
    pub partition: ProtocolPartition,
    #[serde(skip)]
    pub subspace: Option<SubspaceModel>,
    #[serde(skip)]
    pub evm_models: Vec<EvmGalleryModel>,
}

impl Experiment {
    pub fn cell(&self, method: Method, fusion: Fusion) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.method == method && c.fusion == fusion)
    }
}

pub fn evaluate_set(
    scores: &ScoreMatrix,
    partition: &ProtocolPartition,
    set: ProbeSetId,
    cfg: &EvalConfig,
) -> Result<SetReport> {
    let split = ProbeSplit::from_partition(scores, partition, set)?;
    let cmc = evaluation::cmc_curve(scores, &split)?;
    let rank1 = cmc[0].y;
    let cmc_at_rank = evaluation::cmc_at(scores, &split, cfg.rank)?;
    let (curves, far_operating_points) = if set.is_open() {
        let dir = evaluation::dir_curve(scores, &split, cfg.rank, cfg.threshold_policy)?;
        let points = cfg
            .far_targets
            .iter()
            .map(|&target| -> Result<FarOperatingPoint> {
                let threshold = evaluation::threshold_for_far(scores, &split, target, cfg.threshold_policy)?;
                Ok(match threshold {
                    Some(t) => FarOperatingPoint {
                        target,
                        threshold: Some(t),
                        achieved_far: Some(evaluation::far_at(scores, &split, t)?),
                        dir: Some(evaluation::dir_at(scores, &split, t, cfg.rank)?),
                        absent: false,
                    },
                    None => FarOperatingPoint {
                        target,
                        threshold: None,
                        achieved_far: None,
                        dir: None,
                        absent: true,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        (Curves::Open { dir }, points)
    } else {
        let roc = if scores.cols() >= 2 {
            Some(evaluation::roc_curve(scores, &split)?)
        } else {
            None
        };
        (Curves::Closed { cmc, roc }, Vec::new())
    };
    Ok(SetReport {
        probe_set: set,
        known_probes: split.known.len(),
        unknown_probes: split.unknown.len(),
        rank: cfg.rank,
        rank1,
        cmc_at_rank,
        far_operating_points,
        curves,
    })
}

pub fn run_experiment(dataset: &Dataset, cfg: &RunConfig) -> Result<Experiment> {
    cfg.check()?;
    let eval = cfg.eval_config();
    let partition = build_partition(dataset).stage("protocol")?;
    let gallery = partition.gallery_templates(dataset).stage("protocol")?;
    let training = partition.training_records(dataset).stage("protocol")?;

    let probe_keys: BTreeSet<ImageKey> = cfg.probe_sets.iter().flat_map(|&s| partition.probe_set(s)).collect();
    if probe_keys.is_empty() {
        return Err(Error::Core(openset_core::Error::invalid("the requested probe sets are empty")).stage("protocol"));
    }
    let probes = dataset.select(&probe_keys).stage("protocol")?;

    let subspace = if cfg.methods.contains(&Method::Lda) {
        let (labels, features) = partition.training_classes(dataset).stage("fit-subspace")?;
        Some(fit_subspace(&labels, &features, cfg.pca_retention).stage("fit-subspace")?)
    } else {
        None
    };
    let evm_models = if cfg.methods.contains(&Method::Evm) {
        cfg.fusions
            .iter()
            .map(|&f| evm::train(&gallery, &training, &cfg.evm_config(f)).stage(&format!("fit-evm ({f})")))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let cells: Vec<(Method, Fusion)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.fusions.iter().map(move |&f| (m, f)))
        .collect();
    let cells = cells
        .par_iter()
        .map(|&(method, fusion)| -> Result<CellReport> {
            let scoring = match method {
                Method::Cos => ScoringMethod::Cosine(fusion),
                Method::Lda => ScoringMethod::Lda(subspace.as_ref().expect("subspace fitted"), fusion),
                Method::Evm => {
                    let model = evm_models
                        .iter()
                        .find(|m| m.config.fusion == fusion)
                        .expect("EVM model trained");
                    ScoringMethod::Evm(model, fusion)
                }
            };
            let stage = format!("{method}/{fusion}");
            let scores = score_all(&scoring, &gallery, &probes).stage(&format!("score {stage}"))?;
            let sets = cfg
                .probe_sets
                .iter()
                .map(|&set| evaluate_set(&scores, &partition, set, &eval).stage(&format!("evaluate {stage} on {set}")))
                .collect::<Result<Vec<_>>>()?;
            Ok(CellReport {
                method,
                fusion,
                sets,
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Experiment {
        dataset: DatasetStats {
            records: dataset.len(),
            dimension: dataset.dimension(),
        },
        config: cfg.clone(),
        partition_counts: PartitionCounts::new(dataset, &partition),
        subspace_output_dim: subspace.as_ref().map(|s| s.output_dim),
        cells,
        partition,
        subspace,
        evm_models,
    })
}

/// Writes the partition, models, curves and `summary.json` under `dir`.
pub fn write_experiment(exp: &Experiment, dir: &Path) -> Result<()> {
    formats::write_json(&dir.join("partition.json"), &exp.partition)?;
    if let Some(s) = &exp.subspace {
        formats::write_json(&dir.join("models").join("subspace.json"), s)?;
    }
    for m in &exp.evm_models {
        formats::write_json(&dir.join("models").join(format!("evm_{}.json", m.config.fusion)), m)?;
    }
    for cell in &exp.cells {
        let stem = format!("{}_{}", cell.method, cell.fusion);
        if exp.config.write_scores {
            formats::write_score_matrix(&dir.join("scores").join(format!("{stem}.csv")), &cell.scores)?;
        }
        for set in &cell.sets {
            let base = dir.join("curves");
            match &set.curves {
                Curves::Closed { cmc, roc } => {
                    formats::write_cmc_csv(&base.join(format!("{stem}_{}_cmc.csv", set.probe_set)), cmc)?;
                    if let Some(roc) = roc {
                        formats::write_roc_csv(&base.join(format!("{stem}_{}_roc.csv", set.probe_set)), roc)?;
                    }
                }
                Curves::Open { dir: curve } => {
                    formats::write_dir_csv(&base.join(format!("{stem}_{}_dir.csv", set.probe_set)), curve)?;
                }
            }
        }
    }
    formats::write_json(&dir.join("summary.json"), exp)
}

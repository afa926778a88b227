use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use openset::config::ConfigFile;
use openset::error::{Error, Result, StageExt};
use openset::experiment::{evaluate_set, PartitionCounts};
use openset::{
    formats, generate_synthetic, init_workers, run_experiment, write_experiment, Method, RunConfig, SyntheticSpec,
};
use openset_core::evaluation::{self, ProbeSplit};
use openset_core::evm::{self, EvmConfig};
use openset_core::{
    build_partition, fit_subspace, score_all, Dataset, EvalConfig, EvmGalleryModel, Fusion, ProbeSetId,
    ProtocolPartition, ScoringMethod, SubspaceModel, ThresholdPolicy,
};

#[derive(Parser, Debug)]
#[command(name = "openset", version, about = "Open-set face identification experiments")]
struct Cli {
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (overrides OPENSET_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a feature table and report its shape.
    Validate {
        #[arg(long)]
        features: PathBuf,
    },
    /// Split a feature table into training, gallery and probe sets.
    Protocol {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a seeded synthetic feature table.
    Synth {
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the PCA+LDA subspace on the training set.
    FitSubspace {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        pca_retention: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit per-gallery Weibull models on the training set.
    FitEvm {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        fusion: Option<Fusion>,
        #[command(flatten)]
        evm: EvmArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a probe set against the gallery.
    Score {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        fusion: Option<Fusion>,
        #[arg(long)]
        probe_set: Option<ProbeSetId>,
        /// Subspace model from `fit-subspace`; fitted on the fly when absent.
        #[arg(long)]
        subspace: Option<PathBuf>,
        /// EVM model from `fit-evm`; fitted on the fly when absent.
        #[arg(long)]
        evm_model: Option<PathBuf>,
        #[arg(long)]
        pca_retention: Option<f64>,
        #[command(flatten)]
        evm: EvmArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cumulative match characteristic of a closed-set score matrix.
    EvalCmc {
        #[command(flatten)]
        eval: EvalInputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verification ROC of a score matrix.
    EvalRoc {
        #[command(flatten)]
        eval: EvalInputs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Detection and identification rate against false alarm rate.
    EvalDir {
        #[command(flatten)]
        eval: EvalInputs,
        #[command(flatten)]
        open: OpenArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full method x fusion x probe-set grid.
    Run {
        /// Feature table; synthetic data is generated when absent.
        #[arg(long)]
        features: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthArgs,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long, value_delimiter = ',')]
        fusions: Option<Vec<Fusion>>,
        #[arg(long, value_delimiter = ',')]
        probe_sets: Option<Vec<ProbeSetId>>,
        #[arg(long)]
        pca_retention: Option<f64>,
        #[command(flatten)]
        evm: EvmArgs,
        #[command(flatten)]
        open: OpenArgs,
        /// Also write every score matrix.
        #[arg(long)]
        write_scores: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    known: Option<usize>,
    #[arg(long)]
    known_unknown: Option<usize>,
    #[arg(long)]
    unknown_unknown: Option<usize>,
    #[arg(long)]
    images_per_known: Option<u32>,
    #[arg(long)]
    images_per_known_unknown: Option<u32>,
    #[arg(long)]
    sigma: Option<f64>,
}

#[derive(Args, Debug)]
struct EvmArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    tail: Option<usize>,
    /// Compare the raw query distance against the fitted Weibull.
    #[arg(long)]
    unscaled_query: bool,
}

#[derive(Args, Debug)]
struct EvalInputs {
    /// Score matrix CSV from `score`.
    #[arg(long)]
    scores: PathBuf,
    /// Partition JSON from `protocol`.
    #[arg(long)]
    partition: PathBuf,
    #[arg(long)]
    probe_set: Option<ProbeSetId>,
}

#[derive(Args, Debug)]
struct OpenArgs {
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    far_targets: Option<Vec<f64>>,
    /// `strict` or `above-max`.
    #[arg(long)]
    threshold_policy: Option<ThresholdPolicy>,
}

const CONFIG_KEYS: [&str; 23] = [
    "features",
    "seed",
    "dimension",
    "known",
    "known-unknown",
    "unknown-unknown",
    "images-per-known",
    "images-per-known-unknown",
    "sigma",
    "method",
    "methods",
    "fusion",
    "fusions",
    "probe-set",
    "probe-sets",
    "pca-retention",
    "alpha",
    "tail",
    "unscaled-query",
    "rank",
    "far-targets",
    "threshold-policy",
    "write-scores",
];

/// Flag value, else config-file value, else default.
struct Resolver(ConfigFile);

impl Resolver {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.0.get(key)?.unwrap_or(default),
        })
    }

    fn pick_list<T: FromStr>(&self, flag: Option<Vec<T>>, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        Ok(match flag {
            Some(v) => v,
            None => self.0.list(key)?.unwrap_or(default),
        })
    }

    fn flag(&self, flag: bool, key: &str) -> Result<bool> {
        Ok(flag || self.0.get(key)?.unwrap_or(false))
    }

    fn synth(&self, a: SynthArgs) -> Result<SyntheticSpec> {
        let d = SyntheticSpec::default();
        Ok(SyntheticSpec {
            dimension: self.pick(a.dimension, "dimension", d.dimension)?,
            known: self.pick(a.known, "known", d.known)?,
            known_unknown: self.pick(a.known_unknown, "known-unknown", d.known_unknown)?,
            unknown_unknown: self.pick(a.unknown_unknown, "unknown-unknown", d.unknown_unknown)?,
            images_per_known: self.pick(a.images_per_known, "images-per-known", d.images_per_known)?,
            images_per_known_unknown: self.pick(
                a.images_per_known_unknown,
                "images-per-known-unknown",
                d.images_per_known_unknown,
            )?,
            sigma: self.pick(a.sigma, "sigma", d.sigma)?,
            seed: self.pick(a.seed, "seed", d.seed)?,
        })
    }

    fn evm(&self, a: &EvmArgs, fusion: Fusion) -> Result<EvmConfig> {
        let d = EvmConfig::with_fusion(fusion);
        let cfg = EvmConfig {
            alpha: self.pick(a.alpha, "alpha", d.alpha)?,
            tail_size: self.pick(a.tail, "tail", d.tail_size)?,
            fusion,
            scale_query_distance: !self.flag(a.unscaled_query, "unscaled-query")?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn eval(&self, a: OpenArgs) -> Result<EvalConfig> {
        let d = EvalConfig::default();
        let cfg = EvalConfig {
            rank: self.pick(a.rank, "rank", d.rank)?,
            far_targets: self.pick_list(a.far_targets, "far-targets", d.far_targets)?,
            threshold_policy: self.pick(a.threshold_policy, "threshold-policy", d.threshold_policy)?,
        };
        cfg.check()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load(path: &Path) -> Result<Dataset> {
    formats::read_feature_table(path).stage("read features")
}

fn partition_of(d: &Dataset) -> Result<ProtocolPartition> {
    build_partition(d).stage("protocol")
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let s = formats::to_json_string(v).map_err(|source| Error::Json {
        path: "<stdout>".into(),
        source,
    })?;
    print!("{s}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_workers(cli.workers)?;
    let config = match &cli.config {
        Some(p) => ConfigFile::read(p)?,
        None => ConfigFile::default(),
    };
    config.reject_unknown(&CONFIG_KEYS)?;
    let r = Resolver(config);
    match cli.command {
        Command::Validate { features } => {
            let d = load(&features)?;
            println!("{} records, dimension {}", d.len(), d.dimension());
        }
        Command::Protocol { features, out } => {
            let d = load(&features)?;
            let p = partition_of(&d)?;
            formats::write_json(&out, &p)?;
            print_json(&PartitionCounts::new(&d, &p))?;
        }
        Command::Synth { synth, out } => {
            let d = generate_synthetic(&r.synth(synth)?).stage("synth")?;
            formats::write_feature_table(&out, d.records())?;
        }
        Command::FitSubspace {
            features,
            pca_retention,
            out,
        } => {
            let d = load(&features)?;
            let model = fit_subspace_for(&d, &partition_of(&d)?, r.pick(pca_retention, "pca-retention", 0.99)?)?;
            formats::write_json(&out, &model)?;
            println!(
                "{} -> {} dimensions (PCA kept {})",
                model.input_dim, model.output_dim, model.pca_retained
            );
        }
        Command::FitEvm {
            features,
            fusion,
            evm: e,
            out,
        } => {
            let d = load(&features)?;
            let cfg = r.evm(&e, r.pick(fusion, "fusion", Fusion::Max)?)?;
            let model = fit_evm_for(&d, &partition_of(&d)?, &cfg)?;
            formats::write_json(&out, &model)?;
            let clamped = model
                .subjects
                .iter()
                .flat_map(|s| &s.vectors)
                .filter(|v| v.fit.clamped)
                .count();
            println!("{} Weibull fits ({} with clamped tails)", model.fit_count(), clamped);
        }
        Command::Score {
            features,
            method,
            fusion,
            probe_set,
            subspace,
            evm_model,
            pca_retention,
            evm: e,
            out,
        } => {
            let d = load(&features)?;
            let p = partition_of(&d)?;
            let method = r.pick(method, "method", Method::Cos)?;
            let fusion = r.pick(fusion, "fusion", Fusion::Max)?;
            let set = r.pick(probe_set, "probe-set", ProbeSetId::C)?;
            let gallery = p.gallery_templates(&d).stage("protocol")?;
            let probes = p.probe_records(&d, set).stage("protocol")?;
            let lda: SubspaceModel;
            let evm_fit: EvmGalleryModel;
            let scoring = match method {
                Method::Cos => ScoringMethod::Cosine(fusion),
                Method::Lda => {
                    lda = match subspace {
                        Some(path) => load_model(&path, SubspaceModel::check)?,
                        None => fit_subspace_for(&d, &p, r.pick(pca_retention, "pca-retention", 0.99)?)?,
                    };
                    ScoringMethod::Lda(&lda, fusion)
                }
                Method::Evm => {
                    evm_fit = match evm_model {
                        Some(path) => load_model(&path, EvmGalleryModel::check)?,
                        None => fit_evm_for(&d, &p, &r.evm(&e, fusion)?)?,
                    };
                    ScoringMethod::Evm(&evm_fit, fusion)
                }
            };
            let scores = score_all(&scoring, &gallery, &probes).stage("score")?;
            formats::write_score_matrix(&out, &scores)?;
        }
        Command::EvalCmc { eval, out } => {
            let (scores, partition, set) = eval_inputs(&r, eval)?;
            let split = ProbeSplit::from_partition(&scores, &partition, set).stage("eval-cmc")?;
            let cmc = evaluation::cmc_curve(&scores, &split).stage("eval-cmc")?;
            formats::write_cmc_csv(&out, &cmc)?;
            println!("rank-1 {}", cmc[0].y);
        }
        Command::EvalRoc { eval, out } => {
            let (scores, partition, set) = eval_inputs(&r, eval)?;
            let split = ProbeSplit::from_partition(&scores, &partition, set).stage("eval-roc")?;
            let roc = evaluation::roc_curve(&scores, &split).stage("eval-roc")?;
            formats::write_roc_csv(&out, &roc)?;
        }
        Command::EvalDir { eval, open, out } => {
            let cfg = r.eval(open)?;
            let (scores, partition, set) = eval_inputs(&r, eval)?;
            if !set.is_open() {
                return Err(Error::Usage(format!(
                    "probe set {set} has no unknown probes; use O1, O2 or O3"
                )));
            }
            let report = evaluate_set(&scores, &partition, set, &cfg).stage("eval-dir")?;
            formats::write_dir_csv(&out, report.dir_curve().unwrap_or_default())?;
            print_json(&report)?;
        }
        Command::Run {
            features,
            synth,
            methods,
            fusions,
            probe_sets,
            pca_retention,
            evm: e,
            open,
            write_scores,
            out,
        } => {
            let defaults = RunConfig::default();
            let evm_cfg = r.evm(&e, Fusion::Max)?;
            let eval = r.eval(open)?;
            let cfg = RunConfig {
                methods: r.pick_list(methods, "methods", defaults.methods)?,
                fusions: r.pick_list(fusions, "fusions", defaults.fusions)?,
                probe_sets: r.pick_list(probe_sets, "probe-sets", defaults.probe_sets)?,
                alpha: evm_cfg.alpha,
                tail: evm_cfg.tail_size,
                pca_retention: r.pick(pca_retention, "pca-retention", defaults.pca_retention)?,
                rank: eval.rank,
                far_targets: eval.far_targets,
                threshold_policy: eval.threshold_policy,
                scale_query_distance: evm_cfg.scale_query_distance,
                write_scores: r.flag(write_scores, "write-scores")?,
            };
            let features = features.or(r.0.get("features")?);
            let d = match features {
                Some(path) => load(&path)?,
                None => generate_synthetic(&r.synth(synth)?).stage("synth")?,
            };
            let exp = run_experiment(&d, &cfg)?;
            write_experiment(&exp, &out)?;
            for cell in &exp.cells {
                for s in &cell.sets {
                    print!("{}/{} {}: rank-1 {:.4}", cell.method, cell.fusion, s.probe_set, s.rank1);
                    for op in &s.far_operating_points {
                        match op.dir {
                            Some(v) => print!("  DIR@{} {:.4}", op.target, v),
                            None => print!("  DIR@{} absent", op.target),
                        }
                    }
                    println!();
                }
            }
        }
    }
    Ok(())
}

fn load_model<T: serde::de::DeserializeOwned>(
    path: &Path,
    check: impl Fn(&T) -> openset_core::Result<()>,
) -> Result<T> {
    let m: T = formats::read_json(path)?;
    check(&m).stage("load model")?;
    Ok(m)
}

fn fit_subspace_for(d: &Dataset, p: &ProtocolPartition, retention: f64) -> Result<SubspaceModel> {
    let (labels, features) = p.training_classes(d).stage("fit-subspace")?;
    fit_subspace(&labels, &features, retention).stage("fit-subspace")
}

fn fit_evm_for(d: &Dataset, p: &ProtocolPartition, cfg: &EvmConfig) -> Result<EvmGalleryModel> {
    let gallery = p.gallery_templates(d).stage("fit-evm")?;
    let training = p.training_records(d).stage("fit-evm")?;
    evm::train(&gallery, &training, cfg).stage("fit-evm")
}

fn eval_inputs(r: &Resolver, a: EvalInputs) -> Result<(openset_core::ScoreMatrix, ProtocolPartition, ProbeSetId)> {
    let scores = formats::read_score_matrix(&a.scores)?;
    let partition: ProtocolPartition = formats::read_json(&a.partition)?;
    let set = r.pick(a.probe_set, "probe-set", ProbeSetId::C)?;
    Ok((scores, partition, set))
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lsed::config::{CorpusSource, RunConfig, SYNTHETIC_TEST_OFFSET};
use lsed::descriptors::{harvest_patch_features, FaceDescriptor, LsedPipeline};
use lsed::encoding::Encoder;
use lsed::evaluation::{
    cohort_images, generate_trials, robustness_csv, run_identification, run_robustness_grid,
    run_synthetic_class_experiment, run_timing_bench, verify_images, Identifier, ImageCorpus,
    LsedVerifier, PcaSrVerifier, TimingConfig, VerificationPipeline, VerificationReport,
};
use lsed::learning::{em_train_detailed, ksvd_train_detailed, sann_train_detailed, Model, ModelKind};
use lsed::matching::{normalize_with_sums, raw_distance, CohortSet};
use lsed::par;

/// Locally sparse encoded descriptors: training, encoding, matching and experiments.
#[derive(Parser, Debug)]
#[command(name = "lsed", version)]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for patch encoding; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the configured encoder to patches of the training corpus.
    Train {
        /// Image directory, overriding the configured corpus.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Write one descriptor file per input image.
    Encode {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Score two descriptor files, or run cross-validated verification on
    /// the held-out corpus when none are given.
    Verify(VerifyArgs),
    /// Closed-set identification; the last image of every identity is the probe.
    Identify {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::LsedNn)]
        method: Method,
        /// Gallery image directory; the probes are taken from `--probes`.
        #[arg(long, requires = "probes")]
        gallery: Option<PathBuf>,
        #[arg(long, requires = "gallery")]
        probes: Option<PathBuf>,
        /// Side of the downsampled images used by src and raw_l2.
        #[arg(long, default_value_t = 16)]
        side: usize,
    },
    /// Encoding and query timings for one or more models.
    Bench {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long, default_value_t = 20)]
        repetitions: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40])]
        gallery_sizes: Vec<usize>,
    },
    /// Experiment harnesses writing CSV reports.
    Experiment {
        #[arg(value_enum)]
        which: Experiment,
        /// Model for the robustness grid.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Two descriptor files.
    descriptors: Vec<PathBuf>,
    /// Model whose descriptors are expected, or the model to verify with.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Cohort descriptor files for score normalisation.
    #[arg(long = "cohort")]
    cohort: Vec<PathBuf>,
    /// Pairs scoring at or below this are the same identity.
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Method {
    LsedNn,
    Src,
    RawL2,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Experiment {
    SyntheticClass,
    Robustness,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LSED_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let out = cli.out.clone();
    par::with_threads(cli.threads, move || match cli.command {
        Command::Train { corpus } => {
            if let Some(dir) = corpus {
                cfg.corpus = CorpusSource::Directory(dir);
            }
            train(&cfg, &out)
        }
        Command::Encode { model, images } => encode(&cfg, &out, &model, &images),
        Command::Verify(args) => verify(&cfg, &out, &args),
        Command::Identify {
            model,
            method,
            gallery,
            probes,
            side,
        } => identify(&cfg, &out, model.as_deref(), method, gallery.zip(probes), side),
        Command::Bench {
            models,
            repetitions,
            gallery_sizes,
        } => bench(&cfg, &out, &models, repetitions, gallery_sizes, cli.threads),
        Command::Experiment { which, model } => experiment(&cfg, &out, which, model.as_deref()),
    })
}

fn training_corpus(cfg: &RunConfig) -> Result<ImageCorpus> {
    Ok(match &cfg.corpus {
        CorpusSource::Directory(dir) => {
            ImageCorpus::from_dir(dir).with_context(|| format!("loading corpus {}", dir.display()))?
        }
        CorpusSource::Synthetic => {
            let s = &cfg.synthetic;
            ImageCorpus::synthetic(0, s.train_identities, s.per_identity, &s.params, cfg.seed.unwrap_or(0))?
        }
    })
}

fn test_corpus(cfg: &RunConfig) -> Result<ImageCorpus> {
    match &cfg.corpus {
        CorpusSource::Directory(_) => {
            bail!("held-out images come only from the synthetic corpus; pass image directories explicitly")
        }
        CorpusSource::Synthetic => {
            let s = &cfg.synthetic;
            Ok(ImageCorpus::synthetic(
                SYNTHETIC_TEST_OFFSET,
                s.test_identities,
                s.per_identity,
                &s.params,
                cfg.seed.unwrap_or(0),
            )?)
        }
    }
}

fn load_model(path: &Path) -> Result<Model> {
    Model::read(path).with_context(|| format!("reading model {}", path.display()))
}

fn pipeline(cfg: &RunConfig, model: Model) -> Result<LsedPipeline<Encoder>> {
    let encoder = Encoder::from_model(model, cfg.l1)?;
    Ok(LsedPipeline::with_features(encoder, cfg.grid, cfg.features)?)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let cfg = cfg.seeded()?;
    cfg.validate()?;
    let corpus = training_corpus(&cfg)?;
    let per_image = (cfg.patches_per_image > 0).then_some(cfg.patches_per_image);
    let feats = harvest_patch_features(&corpus.images, &cfg.grid, cfg.features, per_image, cfg.seed.unwrap_or(0))?;
    println!("{} images, {} patch features", corpus.len(), feats.len());
    let model: Model = match cfg.encoder {
        ModelKind::Dictionary => {
            let o = ksvd_train_detailed(&feats, &cfg.ksvd)?;
            for (i, v) in o.objective_trace.iter().enumerate() {
                println!("iteration {i} objective {v:.6e}");
            }
            o.dictionary.into()
        }
        ModelKind::Autoencoder => {
            let o = sann_train_detailed(&feats, &cfg.sann)?;
            for (i, v) in o.loss_trace.iter().enumerate() {
                println!("epoch {i} cost {v:.6e}");
            }
            o.model.into()
        }
        ModelKind::Mixture => {
            let o = em_train_detailed(&feats, &cfg.em)?;
            for (i, v) in o.log_likelihood_trace.iter().enumerate() {
                println!("iteration {i} log-likelihood {v:.6}");
            }
            o.model.into()
        }
    };
    let path = out.join("model.lskm");
    model.write(&path).with_context(|| format!("writing {}", path.display()))?;
    write(&out.join("run.cfg"), &cfg.to_text())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn encode(cfg: &RunConfig, out: &Path, model: &Path, images: &[PathBuf]) -> Result<()> {
    let p = pipeline(cfg, load_model(model)?)?;
    for path in images {
        let image = lsed::imaging::io::read_image(path).with_context(|| format!("reading image {}", path.display()))?;
        let d = p.describe(&image)?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let dest = out.join(format!("{stem}.lskd"));
        d.write(&dest).with_context(|| format!("writing {}", dest.display()))?;
        println!("{}", dest.display());
    }
    Ok(())
}

fn read_descriptor(path: &Path) -> Result<FaceDescriptor> {
    FaceDescriptor::read(path).with_context(|| format!("reading descriptor {}", path.display()))
}

fn verify(cfg: &RunConfig, out: &Path, args: &VerifyArgs) -> Result<()> {
    match args.descriptors.len() {
        2 => verify_pair(cfg, args),
        0 => {
            let Some(model) = &args.model else {
                bail!("cross-validated verification needs --model");
            };
            verify_corpus(cfg, out, model)
        }
        n => bail!("verify takes two descriptor files, got {n}"),
    }
}

fn verify_pair(cfg: &RunConfig, args: &VerifyArgs) -> Result<()> {
    let a = read_descriptor(&args.descriptors[0])?;
    let b = read_descriptor(&args.descriptors[1])?;
    if let Some(m) = &args.model {
        let expected = pipeline(cfg, load_model(m)?)?.config_hash();
        for (d, path) in [(&a, &args.descriptors[0]), (&b, &args.descriptors[1])] {
            if d.config_hash() != expected {
                bail!(lsed::LsedError::Incompatible(format!(
                    "{} was not produced by {} with this configuration",
                    path.display(),
                    m.display()
                )));
            }
        }
    }
    let raw = raw_distance(&a, &b)?;
    let score = if args.cohort.is_empty() {
        raw
    } else {
        let cohorts = CohortSet::new(args.cohort.iter().map(|p| read_descriptor(p)).collect::<Result<_>>()?)?;
        normalize_with_sums(raw, cohorts.raw_sum(&a)?, cohorts.raw_sum(&b)?)?
    };
    let decision = if score <= args.threshold { "same" } else { "different" };
    println!("score,decision");
    println!("{score},{decision}");
    Ok(())
}

fn report_csv(name: &str, r: &VerificationReport) -> String {
    let mut s = String::from("pipeline,fold,threshold,far,frr,accuracy\n");
    for f in &r.folds {
        s.push_str(&format!(
            "{name},{},{},{},{},{}\n",
            f.fold, f.threshold.tau, f.rates.far, f.rates.frr, f.accuracy
        ));
    }
    s.push_str(&format!("{name},mean,,,,{}\n", r.mean_accuracy));
    s
}

fn verifier(cfg: &RunConfig, model: &Path) -> Result<LsedVerifier<Encoder>> {
    let p = pipeline(cfg, load_model(model)?)?;
    if cfg.cohort_size == 0 {
        return Ok(LsedVerifier::new(p, None));
    }
    let train = training_corpus(cfg)?;
    Ok(LsedVerifier::with_cohort_images(p, &cohort_images(&train, cfg.cohort_size)?)?)
}

fn verify_corpus(cfg: &RunConfig, out: &Path, model: &Path) -> Result<()> {
    let v = verifier(cfg, model)?;
    let test = test_corpus(cfg)?;
    let trials = generate_trials(&test.labels, cfg.folds, cfg.pairs_per_fold, cfg.seed.unwrap_or(0))?;
    let report = verify_images(&test, &trials, &v, None)?;
    let csv = report_csv(&v.name(), &report);
    write(&out.join("verify.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn split_last_per_identity(c: &ImageCorpus) -> Result<(ImageCorpus, ImageCorpus)> {
    let mut last = std::collections::HashMap::new();
    for (i, &l) in c.labels.iter().enumerate() {
        last.insert(l, i);
    }
    let (mut g, mut p) = ((vec![], vec![]), (vec![], vec![]));
    for (i, (im, &l)) in c.images.iter().zip(&c.labels).enumerate() {
        let side = if last[&l] == i { &mut p } else { &mut g };
        side.0.push(im.clone());
        side.1.push(l);
    }
    Ok((ImageCorpus::new(g.0, g.1)?, ImageCorpus::new(p.0, p.1)?))
}

fn identify(
    cfg: &RunConfig,
    out: &Path,
    model: Option<&Path>,
    method: Method,
    dirs: Option<(PathBuf, PathBuf)>,
    side: usize,
) -> Result<()> {
    let (gallery, probes) = match dirs {
        Some((g, p)) => (
            ImageCorpus::from_dir(&g).with_context(|| format!("loading gallery {}", g.display()))?,
            ImageCorpus::from_dir(&p).with_context(|| format!("loading probes {}", p.display()))?,
        ),
        None => split_last_per_identity(&test_corpus(cfg)?)?,
    };
    let lsed = match (method, model) {
        (Method::LsedNn, Some(m)) => Some(pipeline(cfg, load_model(m)?)?),
        (Method::LsedNn, None) => bail!("lsed_nn identification needs --model"),
        _ => None,
    };
    let id: Identifier<'_, Encoder> = match method {
        Method::LsedNn => Identifier::LsedNn(lsed.as_ref().expect("built above")),
        Method::Src => Identifier::Src { side, l1: cfg.l1 },
        Method::RawL2 => Identifier::RawL2 { side },
    };
    let r = run_identification(&gallery, &probes, &id)?;
    let mut csv = String::from("probe,label,predicted\n");
    for (i, (p, l)) in r.predictions.iter().zip(&probes.labels).enumerate() {
        let p = p.map(|p| p.to_string()).unwrap_or_else(|| "reject".into());
        csv.push_str(&format!("{i},{l},{p}\n"));
    }
    write(&out.join("identify.csv"), &csv)?;
    println!("{} rank-1 {:.4} over {} probes", id.name(), r.rank1, probes.len());
    Ok(())
}

fn bench(
    cfg: &RunConfig,
    out: &Path,
    models: &[PathBuf],
    repetitions: usize,
    gallery_sizes: Vec<usize>,
    threads: usize,
) -> Result<()> {
    let pipelines = models
        .iter()
        .map(|m| pipeline(cfg, load_model(m)?))
        .collect::<Result<Vec<_>>>()?;
    let images = test_corpus(cfg)?;
    let tc = TimingConfig {
        repetitions,
        threads,
        gallery_sizes,
        l1: cfg.l1,
        ..TimingConfig::default()
    };
    let r = run_timing_bench(&pipelines, &images, &tc)?;
    write(&out.join("timing.csv"), &r.to_csv())?;
    print!("{}", r.summary());
    Ok(())
}

fn experiment(cfg: &RunConfig, out: &Path, which: Experiment, model: Option<&Path>) -> Result<()> {
    match which {
        Experiment::SyntheticClass => {
            let r = run_synthetic_class_experiment(&cfg.synthetic_class_config())?;
            let csv = r.to_csv();
            write(&out.join("synthetic_class.csv"), &csv)?;
            print!("{csv}");
        }
        Experiment::Robustness => {
            let Some(model) = model else {
                bail!("the robustness grid needs --model");
            };
            let v = verifier(cfg, model)?;
            let train = training_corpus(cfg)?;
            let baseline = PcaSrVerifier::train(&train, cfg.l1, cfg.code_distance)?;
            let test = test_corpus(cfg)?;
            let trials = generate_trials(&test.labels, cfg.folds, cfg.pairs_per_fold, cfg.seed.unwrap_or(0))?;
            let mut csv = robustness_csv(&v.name(), &run_robustness_grid(&test, &trials, &v, &cfg.perturbations)?);
            let base = robustness_csv(
                &baseline.name(),
                &run_robustness_grid(&test, &trials, &baseline, &cfg.perturbations)?,
            );
            csv.push_str(base.split_once('\n').map(|(_, rows)| rows).unwrap_or(""));
            write(&out.join("robustness.csv"), &csv)?;
            print!("{csv}");
        }
    }
    Ok(())
}

//! Run configuration: a plain `key = value` text file.
//!
//! Blank lines and text after `#` are ignored. Unknown or repeated keys are
//! errors. Every key has a default; [`RunConfig::to_text`] writes all of them
//! so a run can be reproduced from its saved configuration.
//!
//! ```text
//! corpus = synthetic          # or a directory of .pgm images
//! encoder = gmm               # gmm | sann | l1
//! seed = 7
//! gmm.components = 64
//! grid.regions_x = 3
//! perturbations = shift_x:2, shift_y:-2
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::encoding::L1EncoderConfig;
use crate::evaluation::SyntheticClassConfig;
use crate::error::{LsedError, Result};
use crate::imaging::{robustness_grid, PatchGridConfig, Perturbation, SynthParams, DEFAULT_DCT_FEATURES};
use crate::learning::{EmConfig, KsvdConfig, ModelKind, SannConfig};
use crate::matching::SrDistance;
use crate::util::derive_seed;

pub const DEFAULT_COHORT_SIZE: usize = 32;

/// Where training and evaluation images come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    /// Directory of PGM images named `<identity>_<anything>.pgm`.
    Directory(PathBuf),
    Synthetic,
}

/// Generator settings for the synthetic identity corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpusConfig {
    pub train_identities: usize,
    pub test_identities: usize,
    pub per_identity: usize,
    pub params: SynthParams,
}

impl Default for SyntheticCorpusConfig {
    fn default() -> Self {
        SyntheticCorpusConfig {
            train_identities: 40,
            test_identities: 60,
            per_identity: 4,
            params: SynthParams::default(),
        }
    }
}

/// Identity numbers of held-out synthetic identities start here.
pub const SYNTHETIC_TEST_OFFSET: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: CorpusSource,
    pub synthetic: SyntheticCorpusConfig,
    pub encoder: ModelKind,
    pub grid: PatchGridConfig,
    pub features: usize,
    /// Patches sampled per training image; 0 takes them all.
    pub patches_per_image: usize,
    pub ksvd: KsvdConfig,
    pub sann: SannConfig,
    pub em: EmConfig,
    pub l1: L1EncoderConfig,
    pub seed: Option<u64>,
    pub folds: usize,
    pub pairs_per_fold: usize,
    pub cohort_size: usize,
    pub code_distance: SrDistance,
    pub perturbations: Vec<Perturbation>,
    /// Class-level experiment; `folds`, `l1`, `code_distance` and the seed
    /// are taken from the run settings by [`RunConfig::synthetic_class_config`].
    pub synthetic_class: SyntheticClassConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: CorpusSource::Synthetic,
            synthetic: SyntheticCorpusConfig::default(),
            encoder: ModelKind::Mixture,
            grid: PatchGridConfig::default(),
            features: DEFAULT_DCT_FEATURES,
            patches_per_image: 100,
            ksvd: KsvdConfig {
                num_atoms: 256,
                max_iters: 10,
                ..KsvdConfig::default()
            },
            sann: SannConfig {
                hidden_units: 256,
                max_epochs: 100,
                ..SannConfig::default()
            },
            em: EmConfig {
                components: 64,
                max_iters: 30,
                ..EmConfig::default()
            },
            l1: L1EncoderConfig::default(),
            seed: None,
            folds: 5,
            pairs_per_fold: 80,
            cohort_size: DEFAULT_COHORT_SIZE,
            code_distance: SrDistance::Hamming,
            perturbations: robustness_grid(),
            synthetic_class: SyntheticClassConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| LsedError::config(format!("cannot parse '{value}' for key '{key}'")))
}

fn kind_from_str(s: &str) -> Result<ModelKind> {
    match s {
        "gmm" | "mixture" => Ok(ModelKind::Mixture),
        "sann" | "autoencoder" => Ok(ModelKind::Autoencoder),
        "l1" | "dictionary" | "ksvd" => Ok(ModelKind::Dictionary),
        other => Err(LsedError::config(format!("unknown encoder '{other}'"))),
    }
}

fn kind_name(k: ModelKind) -> &'static str {
    match k {
        ModelKind::Mixture => "gmm",
        ModelKind::Autoencoder => "sann",
        ModelKind::Dictionary => "l1",
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            LsedError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        text.parse()
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "corpus" => {
                self.corpus = match v {
                    "synthetic" => CorpusSource::Synthetic,
                    dir => CorpusSource::Directory(PathBuf::from(dir)),
                }
            }
            "synthetic.train_identities" => self.synthetic.train_identities = parse(key, v)?,
            "synthetic.test_identities" => self.synthetic.test_identities = parse(key, v)?,
            "synthetic.per_identity" => self.synthetic.per_identity = parse(key, v)?,
            "synthetic.size" => self.synthetic.params.size = parse(key, v)?,
            "synthetic.blobs" => self.synthetic.params.blobs = parse(key, v)?,
            "synthetic.noise_std" => self.synthetic.params.noise_std = parse(key, v)?,
            "synthetic.max_shift" => self.synthetic.params.max_shift = parse(key, v)?,
            "synthetic.contrast_jitter" => self.synthetic.params.contrast_jitter = parse(key, v)?,
            "synthetic.brightness_jitter" => self.synthetic.params.brightness_jitter = parse(key, v)?,
            "encoder" => self.encoder = kind_from_str(v)?,
            "grid.regions_x" => self.grid.regions_x = parse(key, v)?,
            "grid.regions_y" => self.grid.regions_y = parse(key, v)?,
            "grid.patch_size" => self.grid.patch_size = parse(key, v)?,
            "grid.overlap" => self.grid.overlap_fraction = parse(key, v)?,
            "features" => self.features = parse(key, v)?,
            "patches_per_image" => self.patches_per_image = parse(key, v)?,
            "ksvd.atoms" => self.ksvd.num_atoms = parse(key, v)?,
            "ksvd.sparsity" => self.ksvd.sparsity = parse(key, v)?,
            "ksvd.iters" => self.ksvd.max_iters = parse(key, v)?,
            "ksvd.tol" => self.ksvd.tol = parse(key, v)?,
            "sann.hidden" => self.sann.hidden_units = parse(key, v)?,
            "sann.sparsity_target" => self.sann.sparsity_target = parse(key, v)?,
            "sann.sparsity_weight" => self.sann.sparsity_weight = parse(key, v)?,
            "sann.weight_decay" => self.sann.weight_decay = parse(key, v)?,
            "sann.learning_rate" => self.sann.learning_rate = parse(key, v)?,
            "sann.epochs" => self.sann.max_epochs = parse(key, v)?,
            "sann.tol" => self.sann.tol = parse(key, v)?,
            "gmm.components" => self.em.components = parse(key, v)?,
            "gmm.iters" => self.em.max_iters = parse(key, v)?,
            "gmm.tol" => self.em.tol = parse(key, v)?,
            "gmm.kmeans_iters" => self.em.kmeans_iters = parse(key, v)?,
            "l1.epsilon" => self.l1.epsilon = parse(key, v)?,
            "l1.max_steps" => self.l1.max_steps = parse(key, v)?,
            "seed" => self.seed = Some(parse(key, v)?),
            "folds" => self.folds = parse(key, v)?,
            "pairs_per_fold" => self.pairs_per_fold = parse(key, v)?,
            "cohort_size" => self.cohort_size = parse(key, v)?,
            "code_distance" => self.code_distance = v.parse()?,
            "perturbations" => {
                self.perturbations = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "synthetic_class.num_classes" => self.synthetic_class.num_classes = parse(key, v)?,
            "synthetic_class.dim" => self.synthetic_class.dim = parse(key, v)?,
            "synthetic_class.samples_per_class" => self.synthetic_class.samples_per_class = parse(key, v)?,
            "synthetic_class.train_classes" => self.synthetic_class.train_classes = parse(key, v)?,
            "synthetic_class.mean_radius" => self.synthetic_class.mean_radius = parse(key, v)?,
            "synthetic_class.pairs_per_fold" => self.synthetic_class.pairs_per_fold = parse(key, v)?,
            "synthetic_class.sigma_multipliers" => {
                self.synthetic_class.sigma_multipliers = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            other => return Err(LsedError::config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.sann.validate()?;
        self.l1.validate()?;
        if self.features == 0 || self.features > self.grid.patch_size * self.grid.patch_size {
            return Err(LsedError::config(format!(
                "features must lie in 1..={}",
                self.grid.patch_size * self.grid.patch_size
            )));
        }
        if self.folds < 2 || self.pairs_per_fold < 2 {
            return Err(LsedError::config("need at least 2 folds of at least 2 pairs"));
        }
        self.synthetic_class_config().validate()?;
        if self.synthetic.per_identity < 2 {
            return Err(LsedError::config("synthetic identities need at least 2 images"));
        }
        Ok(())
    }

    /// The seed, which training commands must be given.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| LsedError::config("a seed is required: set 'seed' or pass --seed"))
    }

    /// Training configurations with seeds derived from the run seed.
    pub fn seeded(&self) -> Result<RunConfig> {
        let seed = self.require_seed()?;
        let mut c = self.clone();
        c.ksvd.seed = derive_seed(seed, 1);
        c.sann.seed = derive_seed(seed, 2);
        c.em.seed = derive_seed(seed, 3);
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv(
            "corpus",
            match &self.corpus {
                CorpusSource::Synthetic => "synthetic".into(),
                CorpusSource::Directory(p) => p.display().to_string(),
            },
        );
        let sy = &self.synthetic;
        kv("synthetic.train_identities", sy.train_identities.to_string());
        kv("synthetic.test_identities", sy.test_identities.to_string());
        kv("synthetic.per_identity", sy.per_identity.to_string());
        kv("synthetic.size", sy.params.size.to_string());
        kv("synthetic.blobs", sy.params.blobs.to_string());
        kv("synthetic.noise_std", format!("{:?}", sy.params.noise_std));
        kv("synthetic.max_shift", format!("{:?}", sy.params.max_shift));
        kv("synthetic.contrast_jitter", format!("{:?}", sy.params.contrast_jitter));
        kv("synthetic.brightness_jitter", format!("{:?}", sy.params.brightness_jitter));
        kv("encoder", kind_name(self.encoder).into());
        kv("grid.regions_x", self.grid.regions_x.to_string());
        kv("grid.regions_y", self.grid.regions_y.to_string());
        kv("grid.patch_size", self.grid.patch_size.to_string());
        kv("grid.overlap", format!("{:?}", self.grid.overlap_fraction));
        kv("features", self.features.to_string());
        kv("patches_per_image", self.patches_per_image.to_string());
        kv("ksvd.atoms", self.ksvd.num_atoms.to_string());
        kv("ksvd.sparsity", self.ksvd.sparsity.to_string());
        kv("ksvd.iters", self.ksvd.max_iters.to_string());
        kv("ksvd.tol", format!("{:?}", self.ksvd.tol));
        kv("sann.hidden", self.sann.hidden_units.to_string());
        kv("sann.sparsity_target", format!("{:?}", self.sann.sparsity_target));
        kv("sann.sparsity_weight", format!("{:?}", self.sann.sparsity_weight));
        kv("sann.weight_decay", format!("{:?}", self.sann.weight_decay));
        kv("sann.learning_rate", format!("{:?}", self.sann.learning_rate));
        kv("sann.epochs", self.sann.max_epochs.to_string());
        kv("sann.tol", format!("{:?}", self.sann.tol));
        kv("gmm.components", self.em.components.to_string());
        kv("gmm.iters", self.em.max_iters.to_string());
        kv("gmm.tol", format!("{:?}", self.em.tol));
        kv("gmm.kmeans_iters", self.em.kmeans_iters.to_string());
        kv("l1.epsilon", format!("{:?}", self.l1.epsilon));
        kv("l1.max_steps", self.l1.max_steps.to_string());
        if let Some(seed) = self.seed {
            kv("seed", seed.to_string());
        }
        kv("folds", self.folds.to_string());
        kv("pairs_per_fold", self.pairs_per_fold.to_string());
        kv("cohort_size", self.cohort_size.to_string());
        kv("code_distance", format!("{:?}", self.code_distance).to_lowercase());
        kv(
            "perturbations",
            self.perturbations.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "),
        );
        let sc = &self.synthetic_class;
        kv("synthetic_class.num_classes", sc.num_classes.to_string());
        kv("synthetic_class.dim", sc.dim.to_string());
        kv("synthetic_class.samples_per_class", sc.samples_per_class.to_string());
        kv("synthetic_class.train_classes", sc.train_classes.to_string());
        kv("synthetic_class.mean_radius", format!("{:?}", sc.mean_radius));
        kv("synthetic_class.pairs_per_fold", sc.pairs_per_fold.to_string());
        kv(
            "synthetic_class.sigma_multipliers",
            sc.sigma_multipliers.iter().map(|m| format!("{m:?}")).collect::<Vec<_>>().join(", "),
        );
        s
    }

    /// The class-level experiment with the shared run settings applied;
    /// the seed defaults to 0.
    pub fn synthetic_class_config(&self) -> SyntheticClassConfig {
        SyntheticClassConfig {
            folds: self.folds,
            l1: self.l1,
            code_distance: self.code_distance,
            seed: self.seed.unwrap_or(0),
            ..self.synthetic_class.clone()
        }
    }
}

impl FromStr for RunConfig {
    type Err = LsedError;

    fn from_str(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| LsedError::config(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(LsedError::config(format!("line {}: key '{k}' repeated", n + 1)));
            }
            cfg.set(k, v.trim())
                .map_err(|e| LsedError::config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use super::protocol::{verify_scored, TrialList, VerificationReport};
use crate::descriptors::{
    harvest_patch_features, pca_train_images, FaceDescriptor, LsedPipeline, PcaModel,
    DEFAULT_PCA_ENERGY,
};
use crate::encoding::{solve_l1, GmmEncoder, L1EncoderConfig, SparseEncoder};
use crate::error::{LsedError, Result};
use crate::imaging::io::read_image;
use crate::imaging::{perturb, synth_identity_image, Image, PatchGridConfig, Perturbation, SynthParams, DEFAULT_DCT_FEATURES};
use crate::learning::{em_train_detailed, AtomDictionary, EmConfig};
use crate::matching::{normalize_with_sums, raw_distance, sr_distance, CohortSet, SrDistance};
use crate::par;
use crate::util::derive_seed;

/// Labelled images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCorpus {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
}

impl ImageCorpus {
    pub fn new(images: Vec<Image>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(LsedError::dims(images.len(), labels.len()));
        }
        Ok(ImageCorpus { images, labels })
    }

    /// `per_identity` variations of identities `first..first + count`;
    /// labels are the identity numbers.
    pub fn synthetic(
        first: usize,
        count: usize,
        per_identity: usize,
        params: &SynthParams,
        seed: u64,
    ) -> Result<Self> {
        let jobs: Vec<(usize, usize)> = (first..first + count)
            .flat_map(|id| (0..per_identity).map(move |v| (id, v)))
            .collect();
        let images = par::try_map_range(jobs.len(), |k| {
            let (id, v) = jobs[k];
            synth_identity_image(derive_seed(seed, id as u64), v as u64, params)
        })?;
        let labels = jobs.iter().map(|&(id, _)| id).collect();
        Ok(ImageCorpus { images, labels })
    }

    /// Every `.pgm`/`.lsk1` file of `dir` in name order. The identity is the
    /// file name up to its first `_`; identities are numbered in sorted order.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| {
            LsedError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display())))
        })?;
        let mut files = Vec::new();
        for e in entries {
            let path = e?.path();
            let ext = path.extension().and_then(|x| x.to_str()).unwrap_or("");
            if path.is_file() && (ext.eq_ignore_ascii_case("pgm") || ext.eq_ignore_ascii_case("lsk1")) {
                files.push(path);
            }
        }
        files.sort();
        if files.is_empty() {
            return Err(LsedError::Empty("image directory"));
        }
        let ids: Vec<String> = files
            .iter()
            .map(|p| {
                let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("");
                stem.split('_').next().unwrap_or(stem).to_string()
            })
            .collect();
        let numbering: BTreeMap<&str, usize> = ids
            .iter()
            .map(String::as_str)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i))
            .collect();
        let labels = ids.iter().map(|s| numbering[s.as_str()]).collect();
        let images = par::try_map_slice(&files, |p| {
            read_image(p).map_err(|e| match e {
                LsedError::Io(io) => LsedError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", p.display()))),
                other => other,
            })
        })?;
        Ok(ImageCorpus { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Turns images into a comparable representation and scores pairs of them.
pub trait VerificationPipeline: Sync {
    type Repr: Send + Sync;

    fn name(&self) -> String;

    fn represent(&self, image: &Image) -> Result<Self::Repr>;

    /// Distance between two representations.
    fn score(&self, a: &Self::Repr, b: &Self::Repr) -> Result<f64>;
}

/// LSED descriptors compared by the region L1 distance, cohort-normalised
/// when a cohort set is given.
#[derive(Debug, Clone)]
pub struct LsedVerifier<E> {
    pub pipeline: LsedPipeline<E>,
    pub cohorts: Option<CohortSet>,
}

impl<E: SparseEncoder> LsedVerifier<E> {
    pub fn new(pipeline: LsedPipeline<E>, cohorts: Option<CohortSet>) -> Self {
        LsedVerifier { pipeline, cohorts }
    }

    /// Describes `images` and uses them as the cohort set.
    pub fn with_cohort_images(pipeline: LsedPipeline<E>, images: &[Image]) -> Result<Self> {
        let descriptors = par::try_map_range(images.len(), |i| pipeline.describe(&images[i]))?;
        Ok(LsedVerifier {
            pipeline,
            cohorts: Some(CohortSet::new(descriptors)?),
        })
    }
}

impl LsedVerifier<GmmEncoder> {
    /// Fits a mixture to patch features of `train` and takes the first
    /// image of up to `cohort_size` training identities as cohorts.
    pub fn train_gmm(
        train: &ImageCorpus,
        grid: PatchGridConfig,
        em: &EmConfig,
        patches_per_image: usize,
        cohort_size: usize,
    ) -> Result<Self> {
        let feats = harvest_patch_features(&train.images, &grid, DEFAULT_DCT_FEATURES, Some(patches_per_image), em.seed)?;
        let out = em_train_detailed(&feats, em)?;
        log::info!(
            "mixture of {} components fitted on {} patches, log-likelihood {:.4}",
            em.components,
            feats.len(),
            out.log_likelihood_trace.last().copied().unwrap_or(f64::NAN)
        );
        let pipeline = LsedPipeline::new(GmmEncoder::new(out.model), grid)?;
        if cohort_size == 0 {
            return Ok(Self::new(pipeline, None));
        }
        Self::with_cohort_images(pipeline, &cohort_images(train, cohort_size)?)
    }
}

/// The first image of each of the first `count` identities of `train`.
pub fn cohort_images(train: &ImageCorpus, count: usize) -> Result<Vec<Image>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (img, &l) in train.images.iter().zip(&train.labels) {
        if out.len() < count && seen.insert(l) {
            out.push(img.clone());
        }
    }
    if out.len() < count {
        return Err(LsedError::Protocol(format!(
            "cohort set of {count} needs as many training identities, found {}",
            out.len()
        )));
    }
    Ok(out)
}

impl<E: SparseEncoder> VerificationPipeline for LsedVerifier<E> {
    /// Descriptor plus its summed distance to the cohort set.
    type Repr = (FaceDescriptor, f64);

    fn name(&self) -> String {
        let enc = self.pipeline.encoder().kind().name();
        match &self.cohorts {
            Some(c) => format!("lsed-{enc}+cohort{}", c.len()),
            None => format!("lsed-{enc}"),
        }
    }

    fn represent(&self, image: &Image) -> Result<Self::Repr> {
        let d = self.pipeline.describe(image)?;
        let s = match &self.cohorts {
            Some(c) => c.raw_sum(&d)?,
            None => 0.0,
        };
        Ok((d, s))
    }

    fn score(&self, a: &Self::Repr, b: &Self::Repr) -> Result<f64> {
        let raw = raw_distance(&a.0, &b.0)?;
        match self.cohorts {
            Some(_) => normalize_with_sums(raw, a.1, b.1),
            None => Ok(raw),
        }
    }
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Holistic sparse-code descriptor: PCA projection, normalised to unit
/// length and coded over the normalised projections of training images.
#[derive(Debug, Clone)]
pub struct PcaSrVerifier {
    pub pca: PcaModel,
    pub dict: AtomDictionary,
    pub l1: L1EncoderConfig,
    pub distance: SrDistance,
}

impl PcaSrVerifier {
    pub fn train(train: &ImageCorpus, l1: L1EncoderConfig, distance: SrDistance) -> Result<Self> {
        let pca = pca_train_images(&train.images, DEFAULT_PCA_ENERGY)?;
        let cols = train
            .images
            .iter()
            .map(|im| pca.project_image(im))
            .collect::<Result<Vec<_>>>()?;
        let dict = AtomDictionary::from_columns_normalized(&cols)?;
        Ok(PcaSrVerifier { pca, dict, l1, distance })
    }
}

impl VerificationPipeline for PcaSrVerifier {
    type Repr = Vec<f64>;

    fn name(&self) -> String {
        format!("pca+sr-{:?}", self.distance).to_lowercase()
    }

    fn represent(&self, image: &Image) -> Result<Self::Repr> {
        let x = unit(self.pca.project_image(image)?);
        Ok(solve_l1(&self.dict, &x, &self.l1)?.coefficients)
    }

    fn score(&self, a: &Self::Repr, b: &Self::Repr) -> Result<f64> {
        sr_distance(a, b, self.distance)
    }
}

/// Euclidean distance between PCA projections.
#[derive(Debug, Clone)]
pub struct PcaVerifier {
    pub pca: PcaModel,
}

impl PcaVerifier {
    pub fn train(train: &ImageCorpus) -> Result<Self> {
        Ok(PcaVerifier {
            pca: pca_train_images(&train.images, DEFAULT_PCA_ENERGY)?,
        })
    }
}

impl VerificationPipeline for PcaVerifier {
    type Repr = Vec<f64>;

    fn name(&self) -> String {
        "pca".into()
    }

    fn represent(&self, image: &Image) -> Result<Self::Repr> {
        self.pca.project_image(image)
    }

    fn score(&self, a: &Self::Repr, b: &Self::Repr) -> Result<f64> {
        sr_distance(a, b, SrDistance::Euclidean)
    }
}

fn represent_samples<P: VerificationPipeline>(
    corpus: &ImageCorpus,
    samples: &[usize],
    pipeline: &P,
    perturbation: Option<&Perturbation>,
) -> Result<HashMap<usize, P::Repr>> {
    let reprs = par::try_map_range(samples.len(), |k| {
        let img = &corpus.images[samples[k]];
        match perturbation {
            Some(p) if !p.is_identity() => pipeline.represent(&perturb(img, p)?),
            _ => pipeline.represent(img),
        }
    })?;
    Ok(samples.iter().copied().zip(reprs).collect())
}

/// Cross-validated verification on an image corpus; `perturbation` is
/// applied to the second image of every trial.
pub fn verify_images<P: VerificationPipeline>(
    corpus: &ImageCorpus,
    trials: &TrialList,
    pipeline: &P,
    perturbation: Option<&Perturbation>,
) -> Result<VerificationReport> {
    let firsts = sorted_unique(trials.trials().iter().map(|t| t.a));
    let seconds = sorted_unique(trials.trials().iter().map(|t| t.b));
    let left = represent_samples(corpus, &firsts, pipeline, None)?;
    let right = represent_samples(corpus, &seconds, pipeline, perturbation)?;
    score_trials(trials, pipeline, &left, &right)
}

fn sorted_unique(it: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = it.collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn score_trials<P: VerificationPipeline>(
    trials: &TrialList,
    pipeline: &P,
    left: &HashMap<usize, P::Repr>,
    right: &HashMap<usize, P::Repr>,
) -> Result<VerificationReport> {
    let scores = par::try_map_range(trials.len(), |i| {
        let t = &trials.trials()[i];
        pipeline.score(&left[&t.a], &right[&t.b])
    })?;
    verify_scored(trials, &scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCell {
    /// `None` for the unperturbed reference.
    pub perturbation: Option<Perturbation>,
    pub report: VerificationReport,
}

/// Verification accuracy with each perturbation applied to the second image
/// of every trial, preceded by the unperturbed reference cell.
pub fn run_robustness_grid<P: VerificationPipeline>(
    corpus: &ImageCorpus,
    trials: &TrialList,
    pipeline: &P,
    grid: &[Perturbation],
) -> Result<Vec<RobustnessCell>> {
    let firsts = sorted_unique(trials.trials().iter().map(|t| t.a));
    let seconds = sorted_unique(trials.trials().iter().map(|t| t.b));
    let left = represent_samples(corpus, &firsts, pipeline, None)?;
    let aligned = represent_samples(corpus, &seconds, pipeline, None)?;
    let mut cells = vec![RobustnessCell {
        perturbation: None,
        report: score_trials(trials, pipeline, &left, &aligned)?,
    }];
    for p in grid {
        let report = if p.is_identity() {
            score_trials(trials, pipeline, &left, &aligned)?
        } else {
            let right = represent_samples(corpus, &seconds, pipeline, Some(p))?;
            score_trials(trials, pipeline, &left, &right)?
        };
        cells.push(RobustnessCell {
            perturbation: Some(*p),
            report,
        });
    }
    Ok(cells)
}

/// `kind,magnitude,fold,accuracy` rows plus a `mean` row per cell.
pub fn robustness_csv(pipeline: &str, cells: &[RobustnessCell]) -> String {
    let mut s = String::from("pipeline,kind,magnitude,fold,accuracy\n");
    for c in cells {
        let (kind, mag) = match &c.perturbation {
            Some(p) => (p.kind().to_string(), p.magnitude()),
            None => ("none".to_string(), 0.0),
        };
        for f in &c.report.folds {
            s.push_str(&format!("{pipeline},{kind},{mag},{},{}\n", f.fold, f.accuracy));
        }
        s.push_str(&format!("{pipeline},{kind},{mag},mean,{}\n", c.report.mean_accuracy));
    }
    s
}

use std::time::Instant;

use super::identify::{holistic_features, nearest_neighbour};
use super::images::ImageCorpus;
use crate::descriptors::{FaceDescriptor, LsedPipeline};
use crate::encoding::{L1EncoderConfig, SparseEncoder};
use crate::error::{LsedError, Result};
use crate::matching::{hausdorff_distance, mean_set_distance, raw_distance, src_classify, CountingDistance, LabeledDictionary};
use crate::par;

pub const MIN_TIMING_REPETITIONS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingConfig {
    pub repetitions: usize,
    /// Worker cap while timing; 0 uses the global pool.
    pub threads: usize,
    pub gallery_sizes: Vec<usize>,
    /// Side of the downsampled images used by SRC.
    pub src_side: usize,
    pub l1: L1EncoderConfig,
    /// Size of each of the two sets in the set-matching count.
    pub set_size: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            repetitions: MIN_TIMING_REPETITIONS,
            threads: 1,
            gallery_sizes: vec![10, 20, 40, 80],
            src_side: 16,
            l1: L1EncoderConfig::default(),
            set_size: 4,
        }
    }
}

impl TimingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < MIN_TIMING_REPETITIONS {
            return Err(LsedError::config(format!(
                "at least {MIN_TIMING_REPETITIONS} repetitions are required, got {}",
                self.repetitions
            )));
        }
        if self.gallery_sizes.is_empty() || self.gallery_sizes.contains(&0) {
            return Err(LsedError::config("gallery sizes must be non-empty and positive"));
        }
        if self.src_side == 0 || self.set_size == 0 {
            return Err(LsedError::config("src_side and set_size must be positive"));
        }
        self.l1.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTiming {
    pub encoder: String,
    /// Median seconds to describe one image.
    pub median_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryTiming {
    pub method: String,
    pub gallery_size: usize,
    /// Median seconds per probe, descriptor generation included.
    pub median_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetMatchingCount {
    pub set_a: usize,
    pub set_b: usize,
    pub mean_descriptor_calls: usize,
    pub hausdorff_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub repetitions: usize,
    pub threads: usize,
    pub encoders: Vec<EncoderTiming>,
    pub queries: Vec<QueryTiming>,
    pub set_matching: SetMatchingCount,
}

impl TimingReport {
    pub fn encoder_time(&self, encoder: &str) -> Option<f64> {
        self.encoders.iter().find(|e| e.encoder == encoder).map(|e| e.median_secs)
    }

    /// `time(slow) / time(fast)`.
    pub fn speedup(&self, fast: &str, slow: &str) -> Option<f64> {
        Some(self.encoder_time(slow)? / self.encoder_time(fast)?)
    }

    /// Least-squares slope of log time against log gallery size.
    pub fn growth_exponent(&self, method: &str) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .queries
            .iter()
            .filter(|q| q.method == method && q.median_secs > 0.0)
            .map(|q| ((q.gallery_size as f64).ln(), q.median_secs.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,name,gallery_size,median_secs\n");
        for e in &self.encoders {
            s.push_str(&format!("encode,{},,{:e}\n", e.encoder, e.median_secs));
        }
        for q in &self.queries {
            s.push_str(&format!("query,{},{},{:e}\n", q.method, q.gallery_size, q.median_secs));
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("timing medians over {} repetitions, {} thread(s)\n", self.repetitions, self.threads);
        for e in &self.encoders {
            s.push_str(&format!("  encode {:<12} {:>10.3} ms/image\n", e.encoder, e.median_secs * 1e3));
        }
        if let Some(r) = self.speedup("autoencoder", "dictionary") {
            s.push_str(&format!("  autoencoder speed-up over l1: {r:.1}x\n"));
        }
        for q in &self.queries {
            s.push_str(&format!(
                "  query {:<8} gallery {:>5} {:>10.3} ms/probe\n",
                q.method,
                q.gallery_size,
                q.median_secs * 1e3
            ));
        }
        for m in ["lsed_nn", "src"] {
            if let Some(g) = self.growth_exponent(m) {
                s.push_str(&format!("  {m} time ~ gallery^{g:.2}\n"));
            }
        }
        let c = &self.set_matching;
        s.push_str(&format!(
            "  set matching {}x{}: mean descriptor {} call(s), hausdorff {} calls\n",
            c.set_a, c.set_b, c.mean_descriptor_calls, c.hausdorff_calls
        ));
        s
    }
}

/// Median wall-clock seconds of `reps` calls to `f(rep)`.
pub fn median_secs<F: FnMut(usize) -> Result<()>>(reps: usize, mut f: F) -> Result<f64> {
    if reps == 0 {
        return Err(LsedError::config("no repetitions"));
    }
    let mut t = Vec::with_capacity(reps);
    for r in 0..reps {
        let start = Instant::now();
        f(r)?;
        t.push(start.elapsed().as_secs_f64());
    }
    t.sort_by(f64::total_cmp);
    Ok(if reps % 2 == 1 {
        t[reps / 2]
    } else {
        0.5 * (t[reps / 2 - 1] + t[reps / 2])
    })
}

/// Descriptor generation per encoder, per-probe identification time against
/// growing galleries, and the distance-call count of both set-matching rules.
///
/// The first pipeline drives the nearest-neighbour queries and the set count.
/// Encoder names are the model kind names, so two pipelines of one kind get
/// a numeric suffix.
pub fn run_timing_bench<E: SparseEncoder>(
    pipelines: &[LsedPipeline<E>],
    images: &ImageCorpus,
    cfg: &TimingConfig,
) -> Result<TimingReport> {
    cfg.validate()?;
    let Some(nn) = pipelines.first() else {
        return Err(LsedError::Empty("pipelines"));
    };
    let largest = cfg.gallery_sizes.iter().copied().max().unwrap_or(0);
    let n = images.len();
    if n < largest.max(2 * cfg.set_size) + 1 {
        return Err(LsedError::config(format!(
            "timing needs more than {} images, got {n}",
            largest.max(2 * cfg.set_size)
        )));
    }
    par::with_threads(cfg.threads, || {
        let mut encoders = Vec::new();
        for p in pipelines {
            let base = p.encoder().kind().name();
            let k = encoders.iter().filter(|e: &&EncoderTiming| e.encoder.starts_with(base)).count();
            let name = if k == 0 { base.to_string() } else { format!("{base}{}", k + 1) };
            let secs = median_secs(cfg.repetitions, |r| p.describe(&images.images[r % n]).map(drop))?;
            log::info!("encode {name}: {:.3} ms", secs * 1e3);
            encoders.push(EncoderTiming { encoder: name, median_secs: secs });
        }

        let all: Vec<FaceDescriptor> = images.images[..largest].iter().map(|im| nn.describe(im)).collect::<Result<_>>()?;
        let holistic: Vec<Vec<f64>> = images.images[..largest]
            .iter()
            .map(|im| holistic_features(im, cfg.src_side))
            .collect::<Result<_>>()?;
        let probe = |r: usize| &images.images[largest + r % (n - largest)];
        let mut queries = Vec::new();
        for &g in &cfg.gallery_sizes {
            let gallery = &all[..g];
            let secs = median_secs(cfg.repetitions, |r| {
                let d = nn.describe(probe(r))?;
                nearest_neighbour(gallery, &d).map(drop)
            })?;
            queries.push(QueryTiming { method: "lsed_nn".into(), gallery_size: g, median_secs: secs });

            let dict = LabeledDictionary::from_samples(&holistic[..g], images.labels[..g].to_vec())?;
            let secs = median_secs(cfg.repetitions, |r| {
                let x = holistic_features(probe(r), cfg.src_side)?;
                src_classify(&dict, &x, &cfg.l1, None).map(drop)
            })?;
            queries.push(QueryTiming { method: "src".into(), gallery_size: g, median_secs: secs });
        }

        let set_a = &all[..cfg.set_size.min(largest)];
        let set_b: Vec<FaceDescriptor> = images.images[largest..largest + cfg.set_size.min(n - largest)]
            .iter()
            .map(|im| nn.describe(im))
            .collect::<Result<_>>()?;
        let set_matching = count_set_matching(set_a, &set_b)?;

        Ok(TimingReport {
            repetitions: cfg.repetitions,
            threads: cfg.threads,
            encoders,
            queries,
            set_matching,
        })
    })
}

/// Counts raw descriptor distance evaluations of both set rules.
pub fn count_set_matching(a: &[FaceDescriptor], b: &[FaceDescriptor]) -> Result<SetMatchingCount> {
    let counter = CountingDistance::new(raw_distance);
    mean_set_distance(a, b, |x, y| counter.call(x, y))?;
    let mean_descriptor_calls = counter.calls();
    counter.reset();
    hausdorff_distance(a, b, |x, y| counter.call(x, y))?;
    Ok(SetMatchingCount {
        set_a: a.len(),
        set_b: b.len(),
        mean_descriptor_calls,
        hausdorff_calls: counter.calls(),
    })
}

//! Generation, preparation and training drivers shared by the CLI and tests.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use curvex_core::dataset::{
    balance_histogram, circle_batch, merge_batches, sine_batch, stratified_split, CirclePlan,
    Dataset, GenConfig, GenStats, SinePlan, Split,
};
use curvex_core::metrics::ErrorStats;
use curvex_core::neural::{
    train, Control, Corrector, EpochRecord, ErrorNet, Samples, TrainConfig, Trained, HIDDEN_LAYERS,
};
use curvex_core::packet::DataPacket;
use curvex_core::preprocess::PreprocessorState;
use curvex_core::rng::{stream, sub_seed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{dataset_digest, write_dataset_csv, write_json};
use crate::model::save_preprocessor;
use crate::parallel::{map_indexed, worker_count};

/// Bins of the target histograms used for balancing and reporting.
pub const HISTOGRAM_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Circle,
    Sine,
}

impl FromStr for Kind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(Kind::Circle),
            "sine" => Ok(Kind::Sine),
            other => Err(Error::Usage(format!(
                "unknown kind `{other}` (circle|sine)"
            ))),
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Circle => "circle",
            Kind::Sine => "sine",
        })
    }
}

/// Generator parameters under their configuration-file names.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfigEcho {
    pub eta: u32,
    pub hk_min_star: f64,
    pub hk_max_star: f64,
    pub cph: u32,
    pub sph2: f64,
    pub keep_every_x: u32,
    pub nu: u32,
    pub na: u32,
    pub nt: u32,
    pub ease_mid_max_pr: f64,
    pub rng_seed: u64,
}

impl From<&GenConfig> for GenConfigEcho {
    fn from(c: &GenConfig) -> Self {
        Self {
            eta: c.eta,
            hk_min_star: c.hk_min,
            hk_max_star: c.hk_max,
            cph: c.cph,
            sph2: c.sph2,
            keep_every_x: c.keep_every_x,
            nu: c.nu,
            na: c.na,
            nt: c.nt,
            ease_mid_max_pr: c.ease_mid_max_pr,
            rng_seed: c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleSummary {
    pub nc: usize,
    pub avg_spr: f64,
    pub spr_first: f64,
    pub spr_last: f64,
    pub quota_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineSummary {
    pub amplitudes: usize,
    pub frequencies: usize,
    pub tilts: usize,
    pub sampling_radius: f64,
    pub hk_mid_max: f64,
}

/// Provenance record written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub kind: Kind,
    pub scale: f64,
    pub h: f64,
    pub config: GenConfigEcho,
    pub circle: Option<CircleSummary>,
    pub sine: Option<SineSummary>,
    pub samples: usize,
    pub interfaces: usize,
    pub short_quotas: usize,
    pub collect_failures: usize,
    /// Sub-seed of every work item, in merge order.
    pub item_seeds: Vec<u64>,
    /// Sample counts in equal-width target bins over `[-hk_max, -hk_min]`.
    pub class_counts: Vec<usize>,
    pub digest: String,
}

/// Histogram of targets over `[-hk_max, -hk_min]`.
pub fn class_counts(ds: &Dataset, hk_min: f64, hk_max: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for s in &ds.samples {
        let q = (s.target + hk_max) / (hk_max - hk_min);
        counts[((q * bins as f64).max(0.0) as usize).min(bins - 1)] += 1;
    }
    counts
}

/// Runs one generator over all work items on `workers` threads. Output is
/// identical for any worker count.
pub fn generate(
    kind: Kind,
    cfg: &GenConfig,
    scale: f64,
    workers: usize,
) -> Result<(Dataset, GenerationManifest)> {
    cfg.validate()?;
    let (ds, stats, circle, sine, item_seeds): (Dataset, GenStats, _, _, Vec<u64>) = match kind {
        Kind::Circle => {
            let plan = CirclePlan::new(cfg);
            let batches = map_indexed(plan.len(), workers, |c| circle_batch(cfg, &plan, c));
            let (ds, stats) = merge_batches(cfg.eta, batches)?;
            let summary = CircleSummary {
                nc: plan.len(),
                avg_spr: plan.avg_spr,
                spr_first: plan.samples_per_radius[0],
                spr_last: *plan.samples_per_radius.last().unwrap_or(&0.0),
                quota_total: (0..plan.len()).map(|c| plan.quota(c)).sum(),
            };
            let seeds = (0..plan.len() as u64)
                .map(|c| sub_seed(cfg.seed, stream::CIRCLE, c))
                .collect();
            (ds, stats, Some(summary), None, seeds)
        }
        Kind::Sine => {
            let plan = SinePlan::new(cfg);
            let jobs = plan.jobs();
            let batches = map_indexed(jobs.len(), workers, |k| {
                sine_batch(cfg, &plan, jobs[k].0, jobs[k].1)
            });
            let (ds, stats) = merge_batches(cfg.eta, batches)?;
            let summary = SineSummary {
                amplitudes: plan.amplitudes.len(),
                frequencies: jobs.len(),
                tilts: plan.tilts.len(),
                sampling_radius: plan.sampling_radius,
                hk_mid_max: plan.hk_mid_max,
            };
            let seeds = jobs
                .iter()
                .map(|&(a, f)| sub_seed(cfg.seed, stream::SINE, ((a as u64) << 32) | f as u64))
                .collect();
            (ds, stats, None, Some(summary), seeds)
        }
    };
    let manifest = GenerationManifest {
        kind,
        scale,
        h: cfg.h(),
        config: cfg.into(),
        circle,
        sine,
        samples: ds.len(),
        interfaces: stats.interfaces,
        short_quotas: stats.short_quotas,
        collect_failures: stats.collect_failures,
        item_seeds,
        class_counts: class_counts(&ds, cfg.hk_min, cfg.hk_max, HISTOGRAM_BINS),
        digest: dataset_digest(&ds),
    };
    Ok((ds, manifest))
}

/// Training set (circles plus balanced sines), its split and the preprocessor
/// fitted on the training part.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: Split,
    pub state: PreprocessorState,
    pub eigenvalues: Vec<f64>,
    pub circles: usize,
    /// Sine samples before balancing.
    pub sines: Dataset,
    pub balanced_sines: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareManifest {
    pub eta: u32,
    pub m_iota: usize,
    pub seed: u64,
    pub circles: usize,
    pub sines: usize,
    pub balanced_sines: usize,
    pub dataset: usize,
    pub train: usize,
    pub test: usize,
    pub valid: usize,
    pub sine_bins: Vec<usize>,
    pub balanced_sine_bins: Vec<usize>,
    pub eigenvalues: Vec<f64>,
    pub digests: SplitDigests,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDigests {
    pub dataset: String,
    pub train: String,
    pub test: String,
    pub valid: String,
}

/// Equal-width histogram over the dataset's own target range.
pub fn target_histogram(ds: &Dataset, bins: usize) -> Vec<usize> {
    let t = ds.targets();
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0; bins];
    for v in t {
        let k = if hi > lo {
            ((v - lo) / (hi - lo) * bins as f64) as usize
        } else {
            0
        };
        counts[k.min(bins - 1)] += 1;
    }
    counts
}

fn concat(eta: u32, sets: Vec<Dataset>) -> Dataset {
    let mut out = Dataset::new(eta);
    for mut d in sets {
        out.append(&mut d);
    }
    out
}

/// Manifest path written next to a generated dataset.
pub fn manifest_path(dataset: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", dataset.display()))
}

/// Generator kind recorded in the manifest next to `dataset`.
pub fn dataset_kind(dataset: &Path) -> Result<Kind> {
    #[derive(Deserialize)]
    struct KindOnly {
        kind: Kind,
    }
    let path = manifest_path(dataset);
    if !path.exists() {
        return Err(Error::Json {
            path,
            message: "missing generation manifest; it tells circle from sine data".into(),
        });
    }
    Ok(crate::io::read_json::<KindOnly>(&path)?.kind)
}

/// Balances the sine samples, appends them to the circle samples, splits the
/// result and fits the preprocessor on the training part.
pub fn prepare(
    circles: Vec<Dataset>,
    sines: Vec<Dataset>,
    eta: u32,
    m_iota: usize,
    seed: u64,
) -> Result<Prepared> {
    let mut dataset = concat(eta, circles);
    let circles = dataset.len();
    let sines = concat(eta, sines);
    let mut balanced = balance_histogram(&sines, HISTOGRAM_BINS, seed);
    let balanced_sines = balanced.len();
    dataset.append(&mut balanced);
    let split = stratified_split(&dataset, seed)?;
    let packets: Vec<DataPacket> = split.train.samples.iter().map(|s| s.packet).collect();
    let h = 1.0 / (1u64 << eta) as f64;
    let (state, eigenvalues) = PreprocessorState::fit(&packets, h, m_iota)?;
    Ok(Prepared {
        dataset,
        split,
        state,
        eigenvalues,
        circles,
        sines,
        balanced_sines,
    })
}

/// Sine samples kept by the balancer, binned like the input sines.
pub fn balanced_sine_bins(p: &Prepared) -> Vec<usize> {
    let t = p.sines.targets();
    let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut counts = vec![0; HISTOGRAM_BINS];
    for s in &p.dataset.samples[p.circles..] {
        let k = if hi > lo {
            ((s.target - lo) / (hi - lo) * HISTOGRAM_BINS as f64) as usize
        } else {
            0
        };
        counts[k.min(HISTOGRAM_BINS - 1)] += 1;
    }
    counts
}

/// Writes `dataset.csv`, `train.csv`, `test.csv`, `valid.csv`,
/// `preprocessor.json` and `prepare.json` into `dir`.
pub fn write_prepared(p: &Prepared, seed: u64, dir: &Path) -> Result<PrepareManifest> {
    write_dataset_csv(&p.dataset, &dir.join("dataset.csv"))?;
    write_dataset_csv(&p.split.train, &dir.join("train.csv"))?;
    write_dataset_csv(&p.split.test, &dir.join("test.csv"))?;
    write_dataset_csv(&p.split.valid, &dir.join("valid.csv"))?;
    save_preprocessor(&p.state, &dir.join("preprocessor.json"))?;
    let manifest = PrepareManifest {
        eta: p.dataset.eta,
        m_iota: p.state.m_iota(),
        seed,
        circles: p.circles,
        sines: p.sines.len(),
        balanced_sines: p.balanced_sines,
        dataset: p.dataset.len(),
        train: p.split.train.len(),
        test: p.split.test.len(),
        valid: p.split.valid.len(),
        sine_bins: target_histogram(&p.sines, HISTOGRAM_BINS),
        balanced_sine_bins: balanced_sine_bins(p),
        eigenvalues: p.eigenvalues.clone(),
        digests: SplitDigests {
            dataset: dataset_digest(&p.dataset),
            train: dataset_digest(&p.split.train),
            test: dataset_digest(&p.split.test),
            valid: dataset_digest(&p.split.valid),
        },
    };
    write_json(&manifest, &dir.join("prepare.json"))?;
    Ok(manifest)
}

/// Preprocessed features, numerical `hk` and targets of a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    pub features: Vec<f64>,
    pub hk: Vec<f64>,
    pub target: Vec<f64>,
}

impl Matrix {
    pub fn from_dataset(ds: &Dataset, state: &PreprocessorState) -> Self {
        let packets: Vec<DataPacket> = ds.samples.iter().map(|s| s.packet).collect();
        Self {
            features: state.transform_all(&packets),
            hk: packets.iter().map(|p| p.hk).collect(),
            target: ds.targets(),
        }
    }

    pub fn samples(&self) -> Samples<'_> {
        Samples {
            features: &self.features,
            hk: &self.hk,
            target: &self.target,
        }
    }

    pub fn len(&self) -> usize {
        self.hk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hk.is_empty()
    }
}

/// Numerical and network errors over a set of standard-form samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub baseline: ErrorStats,
    pub network: ErrorStats,
}

pub fn compare<C: Corrector>(net: &C, data: &Matrix) -> Result<Comparison> {
    let pred = net.predict(&data.features, &data.hk)?;
    Ok(Comparison {
        baseline: ErrorStats::new(&data.hk, &data.target),
        network: ErrorStats::new(&pred, &data.target),
    })
}

/// Trains a fresh network on preprocessed train/valid matrices, stopping
/// after `time_limit` if one is given.
pub fn train_network(
    state: &PreprocessorState,
    eta: u32,
    widths: [usize; HIDDEN_LAYERS],
    cfg: &TrainConfig,
    train_set: &Matrix,
    valid_set: &Matrix,
    time_limit: Option<Duration>,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<Trained> {
    let init = ErrorNet::new(state.m_iota(), widths, eta, cfg.seed);
    state.check_resolution(init.h)?;
    let start = Instant::now();
    let trained = train(init, &train_set.samples(), &valid_set.samples(), cfg, |r| {
        progress(r);
        match time_limit {
            Some(limit) if start.elapsed() >= limit => Control::Stop,
            _ => Control::Continue,
        }
    })?;
    Ok(trained)
}

/// Worker count for commands: `CURVEX_THREADS` or the machine's parallelism.
pub fn default_workers() -> usize {
    worker_count()
}

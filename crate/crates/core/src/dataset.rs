//! Training-set generation from circles and sine waves, histogram balancing
//! and the stratified train/test/validation split.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::index;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::field::{
    curvature, evaluate, interface_nodes, normals, reinitialize, FieldError, Grid, LevelSet, Point,
    Region, ScalarField, DEFAULT_BAND_CELLS,
};
use crate::geometry::{CircleShape, SineShape};
use crate::packet::{collect, Sample};
use crate::rng::{stream, stream_rng};

/// Grid draws per radius before giving up on a quota.
pub const MAX_DRAWS: usize = 50;
/// Probability of keeping a sine sample at the minimum target curvature.
pub const EASE_OFF_MIN_PR: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DatasetError {
    #[error("invalid generator configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("dataset has {0} samples; at least {1} are required")]
    TooFewSamples(usize, usize),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Parameters of the circle and sine generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub eta: u32,
    pub hk_min: f64,
    pub hk_max: f64,
    pub cph: u32,
    pub sph2: f64,
    pub keep_every_x: u32,
    pub nu: u32,
    pub na: u32,
    pub nt: u32,
    pub ease_mid_max_pr: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(eta: u32, seed: u64) -> Self {
        Self {
            eta,
            hk_min: 0.004,
            hk_max: 2.0 / 3.0,
            cph: 2,
            sph2: 5.0,
            keep_every_x: 4,
            nu: 10,
            na: 34,
            nt: 38,
            ease_mid_max_pr: 0.4,
            seed,
        }
    }

    /// Shrinks the sample density and the amplitude/tilt counts by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        let scale = |n: u32| ((n as f64 * factor).round() as u32).max(2);
        self.sph2 *= factor;
        self.na = scale(self.na);
        self.nt = scale(self.nt);
        self
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        Grid::new(self.eta)?;
        if !(0.0 < self.hk_min && self.hk_min < self.hk_max && self.hk_max <= 2.0 / 3.0) {
            return Err(DatasetError::InvalidConfig(
                "need 0 < hk_min < hk_max <= 2/3",
            ));
        }
        if self.cph == 0 || self.keep_every_x == 0 || !(self.sph2 > 0.0) {
            return Err(DatasetError::InvalidConfig(
                "cph, sph2 and keep_every_x must be positive",
            ));
        }
        if self.na < 2 || self.nt < 1 {
            return Err(DatasetError::InvalidConfig("need na >= 2 and nt >= 1"));
        }
        if !(EASE_OFF_MIN_PR..=1.0).contains(&self.ease_mid_max_pr) {
            return Err(DatasetError::InvalidConfig(
                "ease_mid_max_pr must lie in [0.01, 1]",
            ));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        1.0 / (1u64 << self.eta) as f64
    }
}

/// `n` evenly spaced values from `a` to `b`, both included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![a],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    b
                } else {
                    a + (b - a) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Keep probability rising smoothly from `lo` at `q = 0` to `hi` at `q = 1`.
pub fn ease_off(lo: f64, hi: f64, q: f64) -> f64 {
    let q = q.clamp(0.0, 1.0);
    lo + (hi - lo) * q * q * (3.0 - 2.0 * q)
}

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    Circle {
        radius: f64,
        center: Point,
        seed: u64,
    },
    Sine {
        amplitude: f64,
        frequency: f64,
        tilt: f64,
        shift: Point,
        seed: u64,
    },
    External,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub eta: u32,
    pub samples: Vec<Sample>,
    pub tags: Vec<Provenance>,
}

impl Dataset {
    pub fn new(eta: u32) -> Self {
        Self {
            eta,
            ..Self::default()
        }
    }

    pub fn from_samples(eta: u32, samples: Vec<Sample>) -> Self {
        let tags = alloc::vec![Provenance::External; samples.len()];
        Self { eta, samples, tags }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, sample: Sample, tag: Provenance) {
        self.samples.push(sample);
        self.tags.push(tag);
    }

    pub fn append(&mut self, other: &mut Dataset) {
        self.samples.append(&mut other.samples);
        self.tags.append(&mut other.tags);
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            eta: self.eta,
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
            tags: indices.iter().map(|&i| self.tags[i]).collect(),
        }
    }
}

/// Counters reported by a generator run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GenStats {
    pub interfaces: usize,
    pub short_quotas: usize,
    pub collect_failures: usize,
}

impl GenStats {
    pub fn merge(&mut self, other: &GenStats) {
        self.interfaces += other.interfaces;
        self.short_quotas += other.short_quotas;
        self.collect_failures += other.collect_failures;
    }
}

/// Output of one independent work item.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub samples: Vec<Sample>,
    pub tags: Vec<Provenance>,
    pub stats: GenStats,
}

/// Radii, target curvatures and per-radius quotas of the circle generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CirclePlan {
    pub curvatures: Vec<f64>,
    pub samples_per_radius: Vec<f64>,
    pub avg_spr: f64,
}

impl CirclePlan {
    pub fn new(cfg: &GenConfig) -> Self {
        let h = cfg.h();
        let (k_min, k_max) = (cfg.hk_min / h, cfg.hk_max / h);
        let (r_min, r_max) = (1.0 / k_max, 1.0 / k_min);
        let nc = ceil_guarded(cfg.cph as f64 * ((r_max - r_min) / h + 1.0)) as usize;
        let r_bar = 0.5 * (r_min + r_max);
        let ring = cfg.sph2 * PI / (h * h) * (r_bar * r_bar - (r_bar - h) * (r_bar - h));
        let avg_spr = ceil_guarded(ring) / cfg.keep_every_x as f64;
        Self {
            curvatures: linspace(k_max, k_min, nc),
            samples_per_radius: linspace(0.75 * avg_spr, 1.25 * avg_spr, nc),
            avg_spr,
        }
    }

    pub fn len(&self) -> usize {
        self.curvatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curvatures.is_empty()
    }

    /// Samples kept for radius `c`, twin reflections included.
    pub fn quota(&self, c: usize) -> usize {
        (2.0 * self.samples_per_radius[c]).round() as usize
    }
}

/// Ceiling that ignores round-off just above an integer.
fn ceil_guarded(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Field pipeline shared by both generators.
struct Discretized {
    phi: ScalarField,
    normals: crate::field::VectorField,
    curvature: ScalarField,
}

fn discretize<L: LevelSet>(
    cfg: &GenConfig,
    shape: &L,
    region: &Region,
) -> Result<Discretized, FieldError> {
    let grid = Grid::new(cfg.eta)?.with_band(DEFAULT_BAND_CELLS)?;
    let phi = reinitialize(&evaluate(&grid, shape, region)?, cfg.nu);
    Ok(Discretized {
        normals: normals(&phi),
        curvature: curvature(&phi),
        phi,
    })
}

/// Uniform subsample of `batch` down to `quota`, preserving order.
fn subsample(batch: &mut Batch, quota: usize, rng: &mut impl Rng) {
    if batch.samples.len() <= quota {
        return;
    }
    let mut keep = index::sample(rng, batch.samples.len(), quota).into_vec();
    keep.sort_unstable();
    batch.samples = keep.iter().map(|&i| batch.samples[i]).collect();
    batch.tags = keep.iter().map(|&i| batch.tags[i]).collect();
}

/// Samples for radius index `c` of `plan`.
pub fn circle_batch(cfg: &GenConfig, plan: &CirclePlan, c: usize) -> Result<Batch, DatasetError> {
    let h = cfg.h();
    let seed = crate::rng::sub_seed(cfg.seed, stream::CIRCLE, c as u64);
    let mut rng = stream_rng(cfg.seed, stream::CIRCLE, c as u64);
    let kappa = plan.curvatures[c];
    let radius = 1.0 / kappa;
    let target = h * kappa;
    let quota = plan.quota(c);
    let keep_pr = 1.0 / cfg.keep_every_x as f64;
    let mut out = Batch::default();
    let mut draws = 0;
    while out.samples.len() < quota && draws < MAX_DRAWS {
        draws += 1;
        let center = [
            rng.gen_range(-h / 2.0..h / 2.0),
            rng.gen_range(-h / 2.0..h / 2.0),
        ];
        let shape = CircleShape { center, radius };
        let half = radius + (DEFAULT_BAND_CELLS + 2.0) * h;
        let d = discretize(cfg, &shape, &Region::centered(center, half))?;
        out.stats.interfaces += 1;
        let tag = Provenance::Circle {
            radius,
            center,
            seed,
        };
        for node in interface_nodes(&d.phi) {
            if rng.gen::<f64>() >= keep_pr {
                continue;
            }
            match collect(&d.phi, &d.normals, &d.curvature, node) {
                Ok(packet) => {
                    let s = Sample::standardize(packet, target);
                    out.samples.extend([s, s.reflected()]);
                    out.tags.extend([tag, tag]);
                }
                Err(_) => out.stats.collect_failures += 1,
            }
        }
    }
    if out.samples.len() < quota {
        out.stats.short_quotas += 1;
    }
    subsample(&mut out, quota, &mut rng);
    Ok(out)
}

pub fn generate_circles(cfg: &GenConfig) -> Result<(Dataset, GenStats), DatasetError> {
    cfg.validate()?;
    let plan = CirclePlan::new(cfg);
    let batches = (0..plan.len()).map(|c| circle_batch(cfg, &plan, c));
    merge_batches(cfg.eta, batches)
}

pub fn merge_batches<I>(eta: u32, batches: I) -> Result<(Dataset, GenStats), DatasetError>
where
    I: IntoIterator<Item = Result<Batch, DatasetError>>,
{
    let mut ds = Dataset::new(eta);
    let mut stats = GenStats::default();
    for batch in batches {
        let mut b = batch?;
        stats.merge(&b.stats);
        ds.samples.append(&mut b.samples);
        ds.tags.append(&mut b.tags);
    }
    Ok((ds, stats))
}

/// Amplitudes, frequencies and tilts of the sine generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SinePlan {
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<Vec<f64>>,
    pub tilts: Vec<f64>,
    pub sampling_radius: f64,
    pub hk_mid_max: f64,
}

impl SinePlan {
    pub fn new(cfg: &GenConfig) -> Self {
        let h = cfg.h();
        let (k_min, k_max) = (cfg.hk_min / h, cfg.hk_max / h);
        let (a_min, a_max) = (4.0 / k_max, 1.0 / k_min);
        let (hk_low, hk_up) = (cfg.hk_max / 2.0, cfg.hk_max);
        let amplitudes = linspace(a_min, a_max, cfg.na as usize);
        let frequencies = amplitudes
            .iter()
            .map(|&a| {
                let w_min = (hk_low / (h * a)).sqrt();
                let w_max = (hk_up / (h * a)).sqrt();
                let w_d = FRAC_PI_2 * (1.0 / w_min - 1.0 / w_max);
                let nf = ceil_guarded(w_d / h) as usize + 1;
                linspace(w_min, w_max, nf)
            })
            .collect();
        let nt = cfg.nt as usize;
        let tilts = (0..nt)
            .map(|k| -FRAC_PI_2 + PI * k as f64 / nt as f64)
            .collect();
        Self {
            amplitudes,
            frequencies,
            tilts,
            sampling_radius: 2.0 * a_max,
            hk_mid_max: 0.5 * (hk_low + hk_up),
        }
    }

    /// `(amplitude index, frequency index)` of every work item.
    pub fn jobs(&self) -> Vec<(usize, usize)> {
        self.frequencies
            .iter()
            .enumerate()
            .flat_map(|(a, fs)| (0..fs.len()).map(move |f| (a, f)))
            .collect()
    }
}

/// Samples from every tilt of one amplitude/frequency pair.
pub fn sine_batch(
    cfg: &GenConfig,
    plan: &SinePlan,
    a: usize,
    f: usize,
) -> Result<Batch, DatasetError> {
    let h = cfg.h();
    let item = ((a as u64) << 32) | f as u64;
    let seed = crate::rng::sub_seed(cfg.seed, stream::SINE, item);
    let mut rng = stream_rng(cfg.seed, stream::SINE, item);
    let amplitude = plan.amplitudes[a];
    let frequency = plan.frequencies[a][f];
    let r_sam = plan.sampling_radius;
    let mut out = Batch::default();
    for &tilt in &plan.tilts {
        let shift = [
            rng.gen_range(-h / 2.0..h / 2.0),
            rng.gen_range(-h / 2.0..h / 2.0),
        ];
        let shape = SineShape {
            amplitude,
            frequency,
            shift,
            tilt,
        };
        let d = discretize(cfg, &shape, &Region::centered(shift, r_sam + 4.0 * h))?;
        out.stats.interfaces += 1;
        let tag = Provenance::Sine {
            amplitude,
            frequency,
            tilt,
            shift,
            seed,
        };
        for node in interface_nodes(&d.phi) {
            let x = d.phi.position(node);
            let (dx, dy) = (x[0] - shift[0], x[1] - shift[1]);
            if dx * dx + dy * dy > r_sam * r_sam {
                continue;
            }
            let target = h * shape.target_curvature(x);
            if target.abs() < cfg.hk_min {
                continue;
            }
            let q = ((target.abs() - cfg.hk_min) / (plan.hk_mid_max - cfg.hk_min)).min(1.0);
            if rng.gen::<f64>() > ease_off(EASE_OFF_MIN_PR, cfg.ease_mid_max_pr, q) {
                continue;
            }
            match collect(&d.phi, &d.normals, &d.curvature, node) {
                Ok(packet) => {
                    let s = Sample::standardize(packet, target);
                    out.samples.extend([s, s.reflected()]);
                    out.tags.extend([tag, tag]);
                }
                Err(_) => out.stats.collect_failures += 1,
            }
        }
    }
    Ok(out)
}

pub fn generate_sines(cfg: &GenConfig) -> Result<(Dataset, GenStats), DatasetError> {
    cfg.validate()?;
    let plan = SinePlan::new(cfg);
    let batches = plan
        .jobs()
        .into_iter()
        .map(|(a, f)| sine_batch(cfg, &plan, a, f));
    merge_batches(cfg.eta, batches)
}

/// Equal-width bin of `t` over `[lo, hi]`.
fn bin_of(t: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    (((t - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
}

fn target_range(ds: &Dataset) -> (f64, f64) {
    ds.samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.target), hi.max(s.target))
        })
}

/// Caps every target-histogram bin at two thirds of the median occupancy of
/// the nonempty bins, subsampling overfull bins uniformly.
pub fn balance_histogram(ds: &Dataset, bins: usize, seed: u64) -> Dataset {
    if ds.is_empty() || bins == 0 {
        return ds.clone();
    }
    let (lo, hi) = target_range(ds);
    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); bins];
    for (i, s) in ds.samples.iter().enumerate() {
        members[bin_of(s.target, lo, hi, bins)].push(i);
    }
    let mut sizes: Vec<usize> = members.iter().map(Vec::len).filter(|&n| n > 0).collect();
    sizes.sort_unstable();
    let m = sizes.len();
    let median = if m % 2 == 1 {
        sizes[m / 2] as f64
    } else {
        0.5 * (sizes[m / 2 - 1] + sizes[m / 2]) as f64
    };
    let cap = ((2.0 * median / 3.0).floor() as usize).max(1);
    let mut rng = stream_rng(seed, stream::BALANCE, 0);
    let mut keep = Vec::with_capacity(ds.len());
    for bin in &members {
        if bin.len() <= cap {
            keep.extend_from_slice(bin);
        } else {
            keep.extend(
                index::sample(&mut rng, bin.len(), cap)
                    .into_iter()
                    .map(|k| bin[k]),
            );
        }
    }
    keep.sort_unstable();
    ds.select(&keep)
}

/// Minimum dataset size accepted by [`stratified_split`].
pub const MIN_SPLIT_SAMPLES: usize = 1000;
/// Classes smaller than this are merged into a neighbour.
pub const MIN_CLASS_SIZE: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub valid: Dataset,
}

/// Groups targets into `classes` equal-width bins, merging small bins upward
/// (the last one downward) until each holds at least [`MIN_CLASS_SIZE`].
pub fn stratify(ds: &Dataset, classes: usize) -> Vec<Vec<usize>> {
    let (lo, hi) = target_range(ds);
    let classes = classes.max(1);
    let mut bins: Vec<Vec<usize>> = alloc::vec![Vec::new(); classes];
    for (i, s) in ds.samples.iter().enumerate() {
        bins[bin_of(s.target, lo, hi, classes)].push(i);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    for bin in bins {
        pending.extend(bin);
        if pending.len() >= MIN_CLASS_SIZE {
            groups.push(core::mem::take(&mut pending));
        }
    }
    if !pending.is_empty() {
        match groups.last_mut() {
            Some(last) => last.extend(pending),
            None => groups.push(pending),
        }
    }
    groups
}

/// Ten-fold stratified assignment: seven folds train, one tests, one
/// validates and one is dropped.
pub fn stratified_split(ds: &Dataset, seed: u64) -> Result<Split, DatasetError> {
    if ds.len() < MIN_SPLIT_SAMPLES {
        return Err(DatasetError::TooFewSamples(ds.len(), MIN_SPLIT_SAMPLES));
    }
    let mut rng = stream_rng(seed, stream::SPLIT, 0);
    let (mut train, mut test, mut valid) = (Vec::new(), Vec::new(), Vec::new());
    let mut fold = 0usize;
    for mut class in stratify(ds, 100) {
        class.shuffle(&mut rng);
        for i in class {
            match fold {
                0..=6 => train.push(i),
                7 => test.push(i),
                8 => valid.push(i),
                _ => {}
            }
            fold = (fold + 1) % 10;
        }
    }
    for part in [&mut train, &mut test, &mut valid] {
        part.sort_unstable();
    }
    Ok(Split {
        train: ds.select(&train),
        test: ds.select(&test),
        valid: ds.select(&valid),
    })
}

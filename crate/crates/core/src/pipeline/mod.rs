//! Labeled dataset construction: single-variable series with classical
//! Lyapunov spectra as targets.

mod format;

pub use format::{
    decode_dataset, encode_dataset, load_splits, read_dataset, save_splits, write_dataset, DatasetFile, Manifest,
    DATASET_MAGIC, DATASET_VERSION, MANIFEST_NAME,
};

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dynsys::{SystemKind, SystemParams, SystemSpec};
use crate::error::{Error, Result};
use crate::integrate::integrate_field_observed;
use crate::lyapunov::{benettin_observed, LeConfig, LeVector, Profile};
use crate::rng::{stream_rng, Stream};

/// Every series fed to the network has this many points.
pub const SERIES_LEN: usize = 1000;
/// Time between consecutive series points.
pub const SERIES_SPACING: f64 = 0.1;
/// Two normalized series closer than this in the sup norm are duplicates.
pub const DEDUP_TOL: f64 = 1e-4;
/// Ranges below this are treated as constant by [`normalize`].
pub const CONSTANT_RANGE: f64 = 1e-12;

/// Short inference-time pipeline: transient, kept window and step (time units).
pub const PREDICTION_TRANSIENT: f64 = 1000.0;
pub const PREDICTION_WINDOW: f64 = 100.0;
pub const PREDICTION_STEP: f64 = 0.01;

/// Rayleigh-number range shared by both regimes.
pub const R_MAX: f64 = 300.0;
/// `b` values of the four parametric lines: train, validation, train, test.
pub const LINE_B_TRAIN: [f64; 2] = [2.0, 8.0 / 3.0];
pub const LINE_B_VAL: f64 = 2.4;
pub const LINE_B_TEST: f64 = 2.8;
pub const RANDOM_B_RANGE: (f64, f64) = (2.0, 3.0);
pub const SIGMA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub params: SystemParams,
    pub series: Vec<f64>,
    pub le_truth: LeVector,
}

/// A sample whose series has been mapped onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub params: SystemParams,
    pub series: Vec<f64>,
    pub le_truth: LeVector,
}

impl LabeledSample {
    pub fn from_raw<R: Rng>(raw: RawSample, rng: &mut R) -> Result<Self> {
        Ok(LabeledSample {
            series: normalize(&raw.series, rng)?,
            params: raw.params,
            le_truth: raw.le_truth,
        })
    }
}

pub trait HasSeries {
    fn series(&self) -> &[f64];
}

impl HasSeries for RawSample {
    fn series(&self) -> &[f64] {
        &self.series
    }
}

impl HasSeries for LabeledSample {
    fn series(&self) -> &[f64] {
        &self.series
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub system: SystemKind,
    pub profile: Profile,
    pub seed: u64,
    pub train: Vec<LabeledSample>,
    pub val: Vec<LabeledSample>,
    pub test: Vec<LabeledSample>,
    pub batch_train: usize,
    pub batch_eval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    NonRandom,
    Random,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::NonRandom => "nonrandom",
            Regime::Random => "random",
        })
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nonrandom" | "non-random" => Ok(Regime::NonRandom),
            "random" => Ok(Regime::Random),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

/// Sizes and generation settings for a dataset build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub profile: Profile,
    pub le: LeConfig,
    /// Random regime: number of (r, b) draws. Non-random regime: points per line.
    pub pool_size: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub batch_train: usize,
    pub batch_eval: usize,
}

impl DatasetConfig {
    /// Full-size configuration for a regime.
    pub fn paper(regime: Regime) -> Self {
        DatasetConfig {
            profile: Profile::Paper,
            le: LeConfig::paper(),
            pool_size: match regime {
                Regime::Random => 24_000,
                Regime::NonRandom => 6_000,
            },
            n_train: 8000,
            n_val: 2000,
            n_test: 2000,
            batch_train: 128,
            batch_eval: 100,
        }
    }

    /// Reduced configuration: desk LE profile, 2000/500/500 splits.
    pub fn desk(regime: Regime) -> Self {
        DatasetConfig {
            profile: Profile::Desk,
            le: LeConfig::desk(),
            pool_size: match regime {
                Regime::Random => 3200,
                Regime::NonRandom => 1500,
            },
            n_train: 2000,
            n_val: 500,
            n_test: 500,
            ..DatasetConfig::paper(regime)
        }
    }

    pub fn for_profile(profile: Profile, regime: Regime) -> Self {
        match profile {
            Profile::Paper => Self::paper(regime),
            Profile::Desk => Self::desk(regime),
        }
    }
}

/// Maps a series linearly onto `[0, 1]`; a constant series becomes one random value.
pub fn normalize<R: Rng>(series: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("cannot normalize a non-finite series"));
    }
    let (lo, hi) = series.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    if range > CONSTANT_RANGE {
        Ok(series.iter().map(|v| (v - lo) / range).collect())
    } else {
        let c: f64 = rng.random();
        Ok(vec![c; series.len()])
    }
}

fn sup_distance_at_least(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter().zip(b).any(|(x, y)| (x - y).abs() >= tol)
}

/// Greedy filter in input order: keeps a sample iff it is at least `tol`
/// (sup norm) from every sample kept so far.
pub fn dedup<S: HasSeries>(samples: Vec<S>, tol: f64) -> Vec<S> {
    let mut kept: Vec<S> = Vec::with_capacity(samples.len());
    for s in samples {
        if kept.iter().all(|k| sup_distance_at_least(k.series(), s.series(), tol)) {
            kept.push(s);
        }
    }
    kept
}

/// Stride between kept points when the integration step is `step`.
fn subsample_stride(step: f64) -> Result<usize> {
    let ratio = SERIES_SPACING / step;
    let stride = ratio.round();
    if stride < 1.0 || (ratio - stride).abs() > 1e-9 * ratio {
        return Err(Error::contract(format!(
            "step {step} does not divide the series spacing {SERIES_SPACING}"
        )));
    }
    Ok(stride as usize)
}

/// Collects the observed variable at `i = n - stride * (SERIES_LEN - 1 - k)`.
struct TailSampler {
    first: usize,
    stride: usize,
    series: Vec<f64>,
}

impl TailSampler {
    fn new(n_steps: usize, stride: usize) -> Result<Self> {
        let span = stride * (SERIES_LEN - 1);
        if n_steps < span + 1 {
            return Err(Error::contract(format!(
                "{n_steps} steps cannot hold {SERIES_LEN} points at stride {stride}"
            )));
        }
        Ok(TailSampler {
            first: n_steps - span,
            stride,
            series: Vec::with_capacity(SERIES_LEN),
        })
    }

    #[inline]
    fn observe(&mut self, i: usize, x: f64) {
        if i >= self.first && (i - self.first) % self.stride == 0 {
            self.series.push(x);
        }
    }
}

/// Classical spectrum plus the observed-variable series of the final
/// `SERIES_LEN * SERIES_SPACING` time units of the measure run.
pub fn generate_labeled_sample(spec: &SystemSpec, cfg: &LeConfig) -> Result<RawSample> {
    cfg.validate()?;
    let stride = subsample_stride(cfg.measure_step)?;
    let mut tail = TailSampler::new(cfg.measure_steps()?, stride)?;
    let (le_truth, _) = benettin_observed(spec, &spec.kind.default_initial_state(), cfg, |i, s| {
        tail.observe(i, s[0])
    })?;
    debug_assert_eq!(tail.series.len(), SERIES_LEN);
    Ok(RawSample {
        params: spec.params,
        series: tail.series,
        le_truth,
    })
}

/// Un-normalized inference series: 1000 transient units, then the last 100
/// units at step 0.01 keeping one point in ten.
pub fn prediction_series_raw(spec: &SystemSpec) -> Result<Vec<f64>> {
    let n_transient = (PREDICTION_TRANSIENT / PREDICTION_STEP).round() as usize;
    let n_window = (PREDICTION_WINDOW / PREDICTION_STEP).round() as usize;
    let stride = subsample_stride(PREDICTION_STEP)?;
    let n = n_transient + n_window;
    let mut tail = TailSampler::new(n, stride)?;
    let s0 = spec.kind.default_initial_state();
    crate::dynsys::with_field!(spec, field => {
        integrate_field_observed(&field, s0.to_array()?, PREDICTION_STEP, n, |i, s| tail.observe(i, s[0]))
            .map_err(|e| {
                warn!("prediction series failed at {:?}: {e}", spec.params);
                e
            })?;
    });
    Ok(tail.series)
}

/// Normalized inference series for one parameter point.
pub fn generate_prediction_series<R: Rng>(spec: &SystemSpec, rng: &mut R) -> Result<Vec<f64>> {
    normalize(&prediction_series_raw(spec)?, rng)
}

/// Generates samples in parallel; failures are logged and dropped. Output keeps input order.
fn generate_pool(kind: SystemKind, points: &[SystemParams], cfg: &LeConfig) -> Vec<RawSample> {
    let results: Vec<Result<RawSample>> = points
        .par_iter()
        .map(|p| {
            let spec = SystemSpec::new(kind, *p)?;
            generate_labeled_sample(&spec, cfg)
        })
        .collect();
    let mut out = Vec::with_capacity(points.len());
    for (p, r) in points.iter().zip(results) {
        match r {
            Ok(s) => {
                let expected = -(p.sigma + 1.0 + p.b) * (kind.dim() / 3) as f64;
                if (s.le_truth.sum() - expected).abs() > 0.05 * (kind.dim() / 3) as f64 {
                    warn!("label sum {} far from divergence {expected} at {p:?}", s.le_truth.sum());
                }
                out.push(s)
            }
            Err(e) => warn!("dropping sample at r = {}, b = {}: {e}", p.r, p.b),
        }
    }
    out
}

fn normalize_all(raw: Vec<RawSample>, rng: &mut ChaCha8Rng) -> Result<Vec<LabeledSample>> {
    raw.into_iter().map(|s| LabeledSample::from_raw(s, rng)).collect()
}

fn take_random(
    mut pool: Vec<LabeledSample>,
    n: usize,
    split: &'static str,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<LabeledSample>> {
    if pool.len() < n {
        return Err(Error::Shortage {
            split,
            requested: n,
            available: pool.len(),
        });
    }
    pool.shuffle(rng);
    pool.truncate(n);
    Ok(pool)
}

/// `count` equidistant values in `(0, hi]`.
pub fn open_closed_grid(hi: f64, count: usize) -> Vec<f64> {
    (1..=count).map(|k| hi * k as f64 / count as f64).collect()
}

/// Four r-lines; train from b = 2 and 8/3, validation from b = 2.4, test from b = 2.8.
pub fn build_nonrandom_dataset(kind: SystemKind, cfg: &DatasetConfig, seed: u64) -> Result<DatasetSplits> {
    let mut fill_rng = stream_rng(seed, Stream::ConstantFill);
    let mut split_rng = stream_rng(seed, Stream::Splits);
    let rs = open_closed_grid(R_MAX, cfg.pool_size);
    let mut pool_for = |b: f64| -> Result<Vec<LabeledSample>> {
        let points: Vec<SystemParams> = rs.iter().map(|&r| SystemParams::new(SIGMA, r, b)).collect();
        let raw = generate_pool(kind, &points, &cfg.le);
        let labeled = normalize_all(raw, &mut fill_rng)?;
        let before = labeled.len();
        let kept = dedup(labeled, DEDUP_TOL);
        info!("line b = {b}: {} generated, {} after dedup", before, kept.len());
        Ok(kept)
    };
    let mut train_pool = pool_for(LINE_B_TRAIN[0])?;
    let val_pool = pool_for(LINE_B_VAL)?;
    train_pool.extend(pool_for(LINE_B_TRAIN[1])?);
    let test_pool = pool_for(LINE_B_TEST)?;

    Ok(DatasetSplits {
        system: kind,
        profile: cfg.profile,
        seed,
        train: take_random(train_pool, cfg.n_train, "train", &mut split_rng)?,
        val: take_random(val_pool, cfg.n_val, "val", &mut split_rng)?,
        test: take_random(test_pool, cfg.n_test, "test", &mut split_rng)?,
        batch_train: cfg.batch_train,
        batch_eval: cfg.batch_eval,
    })
}

/// Uniform draws of `(r, b)` in `[0, 300] x [2, 3]`, split at random.
pub fn build_random_dataset(kind: SystemKind, cfg: &DatasetConfig, seed: u64) -> Result<DatasetSplits> {
    let mut param_rng = stream_rng(seed, Stream::Parameters);
    let mut fill_rng = stream_rng(seed, Stream::ConstantFill);
    let mut split_rng = stream_rng(seed, Stream::Splits);
    let points: Vec<SystemParams> = (0..cfg.pool_size)
        .map(|_| {
            let r = param_rng.random_range(0.0..=R_MAX);
            let b = param_rng.random_range(RANDOM_B_RANGE.0..=RANDOM_B_RANGE.1);
            SystemParams::new(SIGMA, r, b)
        })
        .collect();
    let raw = generate_pool(kind, &points, &cfg.le);
    let labeled = normalize_all(raw, &mut fill_rng)?;
    let before = labeled.len();
    let mut pool = dedup(labeled, DEDUP_TOL);
    info!("random pool: {before} generated, {} after dedup", pool.len());

    let needed = cfg.n_train + cfg.n_val + cfg.n_test;
    if pool.len() < needed {
        return Err(Error::Shortage {
            split: "train+val+test",
            requested: needed,
            available: pool.len(),
        });
    }
    pool.shuffle(&mut split_rng);
    pool.truncate(needed);
    let test = pool.split_off(cfg.n_train + cfg.n_val);
    let val = pool.split_off(cfg.n_train);
    Ok(DatasetSplits {
        system: kind,
        profile: cfg.profile,
        seed,
        train: pool,
        val,
        test,
        batch_train: cfg.batch_train,
        batch_eval: cfg.batch_eval,
    })
}

pub fn build_dataset(kind: SystemKind, regime: Regime, cfg: &DatasetConfig, seed: u64) -> Result<DatasetSplits> {
    match regime {
        Regime::NonRandom => build_nonrandom_dataset(kind, cfg, seed),
        Regime::Random => build_random_dataset(kind, cfg, seed),
    }
}

//! Ensemble inference over parameter lines and planes, with optional classical truth.

mod csv;
mod histogram;

use log::warn;
use rayon::prelude::*;

use crate::cnn::{predict_batch, ModelParams};
use crate::dynsys::{SystemKind, SystemParams, SystemSpec};
use crate::error::{Error, Result};
use crate::lyapunov::{benettin_spectrum, LeConfig};
use crate::pipeline::{generate_prediction_series, SIGMA};
use crate::rng::{indexed_rng, Stream};

pub use csv::{read_sweep_csv, render_sweep_csv, write_sweep_csv};
pub use histogram::{
    error_histogram, render_histogram_csv, ErrorHistogram, HistogramRow, DEFAULT_TRUTH_EDGES, ERROR_BIN_EDGES,
    ERROR_BIN_LABELS,
};

/// Exponents above this count as positive.
pub const POSITIVE_THRESHOLD: f64 = 0.01;

/// Cells are processed in blocks of this many so full-size planes never hold every series at once.
const BLOCK: usize = 4096;

/// `count` equidistant values from `lo` to `hi`, both included exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let a = Axis { lo, hi, count };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.count < 2 || !(self.lo.is_finite() && self.hi.is_finite()) || self.lo >= self.hi {
            return Err(Error::Config(format!(
                "axis needs lo < hi and at least 2 points, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.count {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * k as f64 / (self.count - 1) as f64
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.value(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    Line {
        r: Axis,
        b: f64,
        sigma: f64,
    },
    /// Row-major with `b` as the outer (slow) index and `r` as the inner one.
    Plane {
        r: Axis,
        b: Axis,
        sigma: f64,
    },
}

impl GridSpec {
    /// 6000 points for r in [0, 300] at fixed b.
    pub fn paper_line(b: f64) -> Self {
        GridSpec::Line {
            r: Axis {
                lo: 0.0,
                hi: 300.0,
                count: 6000,
            },
            b,
            sigma: SIGMA,
        }
    }

    /// 1000 x 1000 points over r in [0, 300] and b in [2, 3].
    pub fn paper_plane() -> Self {
        GridSpec::Plane {
            r: Axis {
                lo: 0.0,
                hi: 300.0,
                count: 1000,
            },
            b: Axis {
                lo: 2.0,
                hi: 3.0,
                count: 1000,
            },
            sigma: SIGMA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GridSpec::Line { r, b, sigma } => {
                r.validate()?;
                if !(b.is_finite() && sigma.is_finite()) {
                    return Err(Error::Config("line b and sigma must be finite".into()));
                }
            }
            GridSpec::Plane { r, b, sigma } => {
                r.validate()?;
                b.validate()?;
                if !sigma.is_finite() {
                    return Err(Error::Config("sigma must be finite".into()));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match self {
            GridSpec::Line { r, .. } => r.count,
            GridSpec::Plane { r, b, .. } => r.count * b.count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_plane(&self) -> bool {
        matches!(self, GridSpec::Plane { .. })
    }

    pub fn point(&self, idx: usize) -> SystemParams {
        match *self {
            GridSpec::Line { r, b, sigma } => SystemParams::new(sigma, r.value(idx), b),
            GridSpec::Plane { r, b, sigma } => SystemParams::new(sigma, r.value(idx % r.count), b.value(idx / r.count)),
        }
    }

    pub fn points(&self) -> Vec<SystemParams> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Ensemble mean and population standard deviation of `members` (one row per model).
pub fn mean_std(members: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_out = members
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::contract("empty ensemble"))?;
    if members.iter().any(|m| m.len() != n_out) {
        return Err(Error::contract("ensemble members disagree on output count"));
    }
    let n = members.len() as f64;
    // Clamped so rounding can never push the mean outside the members' range.
    let mean: Vec<f64> = (0..n_out)
        .map(|o| {
            let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
                (lo.min(m[o]), hi.max(m[o]))
            });
            (members.iter().map(|m| m[o]).sum::<f64>() / n).clamp(lo, hi)
        })
        .collect();
    let std = (0..n_out)
        .map(|o| (members.iter().map(|m| (m[o] - mean[o]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok((mean, std))
}

fn check_ensemble(models: &[ModelParams]) -> Result<usize> {
    let first = models
        .first()
        .ok_or_else(|| Error::contract("ensemble needs at least one model"))?;
    if models.iter().any(|m| m.arch != first.arch) {
        return Err(Error::contract("ensemble members have different architectures"));
    }
    Ok(first.arch.n_outputs)
}

/// Mean and population standard deviation of the members' predictions for one series.
pub fn predict_ensemble(models: &[ModelParams], series: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_ensemble(models)?;
    let members = models
        .iter()
        .map(|m| Ok(predict_batch(m, &[series])?.pop().unwrap()))
        .collect::<Result<Vec<_>>>()?;
    mean_std(&members)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub params: SystemParams,
    /// Empty when the sweep ran without models; NaN for a failed cell.
    pub pred_mean: Vec<f64>,
    pub pred_std: Vec<f64>,
    /// Classical spectrum, descending; NaN for a failed cell.
    pub truth: Option<Vec<f64>>,
}

impl SweepCell {
    pub fn is_gap(&self) -> bool {
        self.pred_mean
            .iter()
            .chain(self.truth.iter().flatten())
            .any(|v| v.is_nan())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub system: SystemKind,
    pub grid: GridSpec,
    pub cells: Vec<SweepCell>,
    /// Huber loss of each member against the classical truth over all complete cells.
    pub member_huber: Vec<f64>,
}

impl SweepResult {
    /// Mean and population standard deviation of `member_huber`.
    pub fn ensemble_huber(&self) -> Option<(f64, f64)> {
        if self.member_huber.is_empty() {
            return None;
        }
        let rows: Vec<Vec<f64>> = self.member_huber.iter().map(|h| vec![*h]).collect();
        let (m, s) = mean_std(&rows).ok()?;
        Some((m[0], s[0]))
    }

    pub fn n_gaps(&self) -> usize {
        self.cells.iter().filter(|c| c.is_gap()).count()
    }
}

pub fn count_positive(les: &[f64]) -> usize {
    les.iter().filter(|v| **v > POSITIVE_THRESHOLD).count()
}

pub fn is_chaotic(les: &[f64]) -> bool {
    count_positive(les) >= 1
}

pub fn is_hyperchaotic(les: &[f64]) -> bool {
    count_positive(les) >= 2
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepOptions {
    /// Seeds the constant-series fill of each cell.
    pub seed: u64,
    /// Run the classical estimator at every cell with this profile.
    pub classical: Option<LeConfig>,
}

struct CellWork {
    series: Option<Vec<f64>>,
    truth: Option<Vec<f64>>,
}

fn cell_work(kind: SystemKind, grid: &GridSpec, idx: usize, want_series: bool, opts: &SweepOptions) -> CellWork {
    let params = grid.point(idx);
    let spec = match SystemSpec::new(kind, params) {
        Ok(s) => s,
        Err(e) => {
            warn!("cell {idx} (r = {}, b = {}): {e}", params.r, params.b);
            return CellWork {
                series: None,
                truth: opts.classical.as_ref().map(|_| vec![f64::NAN; kind.dim()]),
            };
        }
    };
    let series = want_series.then(|| {
        let mut rng = indexed_rng(opts.seed, Stream::Sweep, idx as u64);
        generate_prediction_series(&spec, &mut rng)
            .map_err(|e| {
                warn!(
                    "cell {idx} (r = {}, b = {}): prediction series failed: {e}",
                    params.r, params.b
                )
            })
            .ok()
    });
    let truth = opts.classical.as_ref().map(
        |cfg| match benettin_spectrum(&spec, &kind.default_initial_state(), cfg) {
            Ok((le, _)) => le.into_vec(),
            Err(e) => {
                warn!(
                    "cell {idx} (r = {}, b = {}): classical spectrum failed: {e}",
                    params.r, params.b
                );
                vec![f64::NAN; kind.dim()]
            }
        },
    );
    CellWork {
        series: series.flatten(),
        truth,
    }
}

/// Predicts (and optionally computes classical truth) at every grid cell.
///
/// With no models only the classical truth is computed. Failed cells become
/// NaN gap rows. Output is independent of the number of worker threads.
pub fn sweep(models: &[ModelParams], kind: SystemKind, grid: &GridSpec, opts: &SweepOptions) -> Result<SweepResult> {
    grid.validate()?;
    if let Some(cfg) = &opts.classical {
        cfg.validate()?;
    }
    let n_out = if models.is_empty() {
        if opts.classical.is_none() {
            return Err(Error::contract("a sweep needs models, classical truth, or both"));
        }
        kind.dim()
    } else {
        check_ensemble(models)?
    };
    if n_out != kind.dim() {
        return Err(Error::contract(format!(
            "models predict {n_out} exponents, the {kind} system has {}",
            kind.dim()
        )));
    }
    let want_series = !models.is_empty();
    let mut cells = Vec::with_capacity(grid.len());
    let mut huber_sums = vec![0.0; models.len()];
    let mut huber_count = 0usize;

    for start in (0..grid.len()).step_by(BLOCK) {
        let end = (start + BLOCK).min(grid.len());
        let work: Vec<CellWork> = (start..end)
            .into_par_iter()
            .map(|idx| cell_work(kind, grid, idx, want_series, opts))
            .collect();
        let ok: Vec<usize> = (0..work.len()).filter(|&i| work[i].series.is_some()).collect();
        let inputs: Vec<&[f64]> = ok.iter().map(|&i| work[i].series.as_deref().unwrap()).collect();
        let mut member_preds: Vec<Vec<Vec<f64>>> = Vec::with_capacity(models.len());
        for m in models {
            member_preds.push(predict_batch(m, &inputs)?);
        }
        let mut next_ok = 0;
        for (i, w) in work.into_iter().enumerate() {
            let params = grid.point(start + i);
            let (pred_mean, pred_std) = if !want_series {
                (Vec::new(), Vec::new())
            } else if next_ok < ok.len() && ok[next_ok] == i {
                let members: Vec<Vec<f64>> = member_preds.iter().map(|p| p[next_ok].clone()).collect();
                next_ok += 1;
                if let Some(t) = w.truth.as_ref().filter(|t| t.iter().all(|v| v.is_finite())) {
                    for (sum, m) in huber_sums.iter_mut().zip(&members) {
                        *sum += crate::cnn::huber_loss(m, t, crate::cnn::HUBER_DELTA)?;
                    }
                    huber_count += 1;
                }
                mean_std(&members)?
            } else {
                (vec![f64::NAN; n_out], vec![f64::NAN; n_out])
            };
            cells.push(SweepCell {
                params,
                pred_mean,
                pred_std,
                truth: w.truth,
            });
        }
    }
    let member_huber = if huber_count > 0 {
        huber_sums.iter().map(|s| s / huber_count as f64).collect()
    } else {
        Vec::new()
    };
    Ok(SweepResult {
        system: kind,
        grid: *grid,
        cells,
        member_huber,
    })
}

pub fn sweep_line(
    models: &[ModelParams],
    kind: SystemKind,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if grid.is_plane() {
        return Err(Error::contract("sweep_line needs a line grid"));
    }
    sweep(models, kind, grid, opts)
}

pub fn sweep_plane(
    models: &[ModelParams],
    kind: SystemKind,
    grid: &GridSpec,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if !grid.is_plane() {
        return Err(Error::contract("sweep_plane needs a plane grid"));
    }
    sweep(models, kind, grid, opts)
}

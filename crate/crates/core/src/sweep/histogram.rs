use std::fmt::Write as _;

use super::SweepResult;
use crate::error::{Error, Result};

/// Truth-bin edges applied to every exponent.
pub const DEFAULT_TRUTH_EDGES: [f64; 6] = [f64::NEG_INFINITY, -0.4, -0.05, 0.05, 0.5, f64::INFINITY];

/// Upper edges of the first three absolute-error bins; the fourth is unbounded.
pub const ERROR_BIN_EDGES: [f64; 3] = [0.05, 0.1, 0.5];
pub const ERROR_BIN_LABELS: [&str; 4] = ["[0,0.05]", "(0.05,0.1]", "(0.1,0.5]", "(0.5,inf)"];

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    /// 1-based exponent index.
    pub le_index: usize,
    pub truth_lo: f64,
    pub truth_hi: f64,
    pub counts: [usize; 4],
}

impl HistogramRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Share of the row's points in error bin `k`, in percent; 0 for an empty row.
    pub fn percent(&self, k: usize) -> f64 {
        match self.total() {
            0 => 0.0,
            n => 100.0 * self.counts[k] as f64 / n as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorHistogram {
    pub rows: Vec<HistogramRow>,
}

fn error_bin(e: f64) -> usize {
    ERROR_BIN_EDGES.iter().position(|&hi| e <= hi).unwrap_or(3)
}

/// Bins `|mean prediction - truth|` by the truth value, per exponent.
///
/// A truth value `t` falls in `[lo, hi)`. Gap cells and cells without truth are skipped.
pub fn error_histogram(result: &SweepResult, truth_edges: &[f64]) -> Result<ErrorHistogram> {
    if truth_edges.len() < 2 || truth_edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config(
            "truth-bin edges must be strictly increasing, at least two".into(),
        ));
    }
    let n_out = result.system.dim();
    let n_bins = truth_edges.len() - 1;
    let mut rows: Vec<HistogramRow> = (0..n_out)
        .flat_map(|k| {
            truth_edges.windows(2).map(move |w| HistogramRow {
                le_index: k + 1,
                truth_lo: w[0],
                truth_hi: w[1],
                counts: [0; 4],
            })
        })
        .collect();
    let mut used = 0usize;
    for cell in &result.cells {
        let Some(truth) = &cell.truth else { continue };
        if cell.is_gap() || cell.pred_mean.len() != n_out {
            continue;
        }
        used += 1;
        for (k, (p, t)) in cell.pred_mean.iter().zip(truth).enumerate() {
            let Some(bin) = truth_edges.windows(2).position(|w| w[0] <= *t && *t < w[1]) else {
                continue;
            };
            rows[k * n_bins + bin].counts[error_bin((p - t).abs())] += 1;
        }
    }
    if used == 0 {
        return Err(Error::contract(
            "error histogram needs cells with both predictions and classical truth",
        ));
    }
    Ok(ErrorHistogram { rows })
}

/// Long form: one line per (exponent, truth bin, error bin).
pub fn render_histogram_csv(h: &ErrorHistogram) -> String {
    let mut out = String::from("le_index,truth_bin_lo,truth_bin_hi,error_bin,percent,count\n");
    for row in &h.rows {
        for (k, label) in ERROR_BIN_LABELS.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                row.le_index,
                row.truth_lo,
                row.truth_hi,
                label,
                row.percent(k),
                row.counts[k]
            );
        }
    }
    out
}

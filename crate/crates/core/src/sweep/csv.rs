//! Sweep CSV files: `#`-prefixed `key = value` header lines, then one row per grid cell.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Axis, GridSpec, SweepCell, SweepResult};
use crate::dynsys::{SystemKind, SystemParams};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn render_sweep_csv(res: &SweepResult) -> String {
    let n = res.system.dim();
    let mut out = String::new();
    let _ = writeln!(out, "# system = {}", res.system);
    match res.grid {
        GridSpec::Line { r, b, sigma } => {
            let _ = writeln!(out, "# grid = line");
            let _ = writeln!(out, "# r = {},{},{}", r.lo, r.hi, r.count);
            let _ = writeln!(out, "# b = {b}");
            let _ = writeln!(out, "# sigma = {sigma}");
        }
        GridSpec::Plane { r, b, sigma } => {
            let _ = writeln!(out, "# grid = plane");
            let _ = writeln!(out, "# r = {},{},{}", r.lo, r.hi, r.count);
            let _ = writeln!(out, "# b = {},{},{}", b.lo, b.hi, b.count);
            let _ = writeln!(out, "# sigma = {sigma}");
            let _ = writeln!(out, "# order = row-major, b outer, r inner");
        }
    }
    if !res.member_huber.is_empty() {
        let h: Vec<String> = res.member_huber.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "# member_huber = {}", h.join(";"));
    }
    let has_pred = res.cells.first().is_some_and(|c| !c.pred_mean.is_empty());
    let has_truth = res.cells.first().is_some_and(|c| c.truth.is_some());
    let mut header = vec!["r".to_string(), "b".into(), "sigma".into()];
    if has_pred {
        header.extend((1..=n).map(|k| format!("le_pred_mean_{k}")));
        header.extend((1..=n).map(|k| format!("le_pred_std_{k}")));
    }
    if has_truth {
        header.extend((1..=n).map(|k| format!("le_true_{k}")));
    }
    let _ = writeln!(out, "{}", header.join(","));
    for c in &res.cells {
        let _ = write!(out, "{},{},{}", c.params.r, c.params.b, c.params.sigma);
        if has_pred {
            let _ = write!(out, ",{},{}", join(&c.pred_mean), join(&c.pred_std));
        }
        if let Some(t) = c.truth.as_ref().filter(|_| has_truth) {
            let _ = write!(out, ",{}", join(t));
        }
        out.push('\n');
    }
    out
}

pub fn write_sweep_csv(path: &Path, res: &SweepResult) -> Result<()> {
    write_atomic(path, render_sweep_csv(res).as_bytes())
}

fn parse_axis(text: &str) -> Option<Axis> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts[..] {
        [lo, hi, n] => Axis::new(lo.parse().ok()?, hi.parse().ok()?, n.parse().ok()?).ok(),
        _ => None,
    }
}

/// Reads a file written by `write_sweep_csv`.
pub fn read_sweep_csv(path: &Path) -> Result<SweepResult> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let mut meta = BTreeMap::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((_, l)) = lines.peek() {
        let Some(rest) = l.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = rest.split_once('=') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
        lines.next();
    }
    let get = |k: &str| meta.get(k).ok_or_else(|| bad(format!("missing '# {k} = ...' header")));
    let system: SystemKind = get("system")?.parse().map_err(|e: Error| bad(e.to_string()))?;
    let r = parse_axis(get("r")?).ok_or_else(|| bad("malformed r axis".into()))?;
    let sigma: f64 = get("sigma")?.parse().map_err(|_| bad("malformed sigma".into()))?;
    let grid = match get("grid")?.as_str() {
        "line" => GridSpec::Line {
            r,
            b: get("b")?.parse().map_err(|_| bad("malformed b".into()))?,
            sigma,
        },
        "plane" => GridSpec::Plane {
            r,
            b: parse_axis(get("b")?).ok_or_else(|| bad("malformed b axis".into()))?,
            sigma,
        },
        other => return Err(bad(format!("unknown grid kind '{other}'"))),
    };
    let member_huber = match meta.get("member_huber") {
        Some(v) => v
            .split(';')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("malformed member_huber".into()))?,
        None => Vec::new(),
    };

    let n = system.dim();
    let (_, header) = lines.next().ok_or_else(|| bad("missing column header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let has_pred = cols.contains(&"le_pred_mean_1");
    let has_truth = cols.contains(&"le_true_1");
    let width = 3 + if has_pred { 2 * n } else { 0 } + if has_truth { n } else { 0 };
    if cols.len() != width || cols[..3] != ["r", "b", "sigma"] {
        return Err(bad(format!("unexpected columns for a {n}-exponent sweep: {header}")));
    }
    let mut cells = Vec::new();
    for (lineno, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let vals = l
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(format!("line {}: not a number", lineno + 1)))?;
        if vals.len() != width {
            return Err(bad(format!(
                "line {}: {} fields, expected {width}",
                lineno + 1,
                vals.len()
            )));
        }
        let params = SystemParams::new(vals[2], vals[0], vals[1]);
        let mut off = 3;
        let (pred_mean, pred_std) = if has_pred {
            off += 2 * n;
            (vals[3..3 + n].to_vec(), vals[3 + n..3 + 2 * n].to_vec())
        } else {
            (Vec::new(), Vec::new())
        };
        let truth = has_truth.then(|| vals[off..off + n].to_vec());
        cells.push(SweepCell {
            params,
            pred_mean,
            pred_std,
            truth,
        });
    }
    if cells.len() != grid.len() {
        return Err(bad(format!("{} rows for a grid of {}", cells.len(), grid.len())));
    }
    Ok(SweepResult {
        system,
        grid,
        cells,
        member_huber,
    })
}

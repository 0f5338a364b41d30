//! The `lyapnet` command-line front end.

mod config;
mod lock;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;

pub use config::{default_model_seeds, RunConfig, Settings, DEFAULT_N_MODELS, DEFAULT_OUT_ROOT, OUT_ENV};
pub use lock::{DirLock, Outputs, LOCK_NAME};

use crate::cnn::{
    evaluate_loss, load_model, save_model, train_data, Architecture, ModelParams, TrainConfig, TrainData, HUBER_DELTA,
};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::pipeline::{build_dataset, load_splits, Manifest, MANIFEST_NAME};
use crate::sweep::{
    count_positive, error_histogram, mean_std, read_sweep_csv, render_histogram_csv, sweep, write_sweep_csv, Axis,
    GridSpec, SweepOptions, SweepResult, DEFAULT_TRUTH_EDGES,
};

pub const MODELS_MANIFEST: &str = "models.manifest";
pub const HISTORY_NAME: &str = "history.csv";
pub const REPORT_NAME: &str = "report.txt";

#[derive(Debug, Parser)]
#[command(
    name = "lyapnet",
    version,
    about = "Lyapunov spectra: classical estimation and CNN prediction"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Settings shared by every command. Flags win over the config file.
#[derive(Debug, Args)]
pub struct CommonArgs {
    /// `key = value` config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// lorenz or coupled.
    #[arg(long, global = true)]
    pub system: Option<String>,
    /// paper or desk.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// random or nonrandom.
    #[arg(long, global = true)]
    pub regime: Option<String>,
    /// Dataset seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root; defaults to $LYAPNET_OUT, then ./lyapnet-out.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub models_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for generation, training and sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled dataset (train/val/test splits and a manifest).
    GenData(GenDataArgs),
    /// Train the model ensemble on a generated dataset.
    Train(TrainArgs),
    /// Classical spectra over a parameter line or plane.
    ClassicalSweep(GridArgs),
    /// Ensemble predictions over a parameter line or plane.
    PredictSweep(PredictArgs),
    /// Error histogram of a prediction sweep against classical truth.
    ErrorAnalysis(ErrorArgs),
    /// Huber statistics (mean ± std over the ensemble) of the models and sweeps.
    Report,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub pool_size: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Override the LE measure time of the profile.
    #[arg(long)]
    pub measure_time: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Ensemble size.
    #[arg(long)]
    pub models: Option<usize>,
    /// Comma-separated model seeds.
    #[arg(long)]
    pub model_seeds: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Line of r values at this b.
    #[arg(long, conflicts_with = "plane", required_unless_present = "plane")]
    pub line: Option<f64>,
    /// Plane with R x B points, e.g. 50x50.
    #[arg(long)]
    pub plane: Option<String>,
    /// Points on a line.
    #[arg(long, default_value_t = 6000)]
    pub points: usize,
    #[arg(long, default_value = "0:300")]
    pub r_range: String,
    #[arg(long, default_value = "2:3")]
    pub b_range: String,
    #[arg(long, default_value_t = crate::pipeline::SIGMA)]
    pub sigma: f64,
    /// Output CSV; defaults to a name derived from the grid inside the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Also compute classical truth at every cell.
    #[arg(long)]
    pub with_truth: bool,
}

#[derive(Debug, Args)]
pub struct ErrorArgs {
    /// Prediction sweep CSV.
    #[arg(long)]
    pub pred: PathBuf,
    /// Classical sweep CSV over the same grid, if the prediction file has no truth columns.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Comma-separated truth-bin edges, e.g. -0.4,-0.05,0.05,0.5 (outer bins are unbounded).
    #[arg(long)]
    pub truth_edges: Option<String>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Merges the config file and flags into a resolved configuration.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let c = &cli.common;
    let mut s = match &c.config {
        Some(p) => Settings::from_file(p)?,
        None => Settings::default(),
    };
    let mut set = |k: &str, v: Option<String>| -> Result<()> {
        match v {
            Some(v) => s.set(k, v),
            None => Ok(()),
        }
    };
    let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
    set("system", c.system.clone())?;
    set("profile", c.profile.clone())?;
    set("regime", c.regime.clone())?;
    set("seed", c.seed.map(|v| v.to_string()))?;
    set("out_root", path(&c.out))?;
    set("data_dir", path(&c.data_dir))?;
    set("models_dir", path(&c.models_dir))?;
    set("out_dir", path(&c.out_dir))?;
    set("jobs", c.jobs.map(|v| v.to_string()))?;
    match &cli.command {
        Command::GenData(a) => {
            set("pool_size", a.pool_size.map(|v| v.to_string()))?;
            set("n_train", a.n_train.map(|v| v.to_string()))?;
            set("n_val", a.n_val.map(|v| v.to_string()))?;
            set("n_test", a.n_test.map(|v| v.to_string()))?;
            set("measure_time", a.measure_time.map(|v| v.to_string()))?;
        }
        Command::Train(a) => {
            set("epochs", a.epochs.map(|v| v.to_string()))?;
            set("lr", a.lr.map(|v| v.to_string()))?;
            set("weight_decay", a.weight_decay.map(|v| v.to_string()))?;
            set("n_models", a.models.map(|v| v.to_string()))?;
            set("model_seeds", a.model_seeds.clone())?;
        }
        _ => {}
    }
    let env_root = std::env::var(OUT_ENV).ok();
    s.resolve(env_root.as_deref())
}

/// Runs one parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenData(_) => gen_data(&cfg),
        Command::Train(_) => train_ensemble_cmd(&cfg),
        Command::ClassicalSweep(g) => sweep_cmd(&cfg, g, false, true),
        Command::PredictSweep(p) => sweep_cmd(&cfg, &p.grid, true, p.with_truth),
        Command::ErrorAnalysis(a) => error_analysis(&cfg, a),
        Command::Report => report(&cfg),
    })
}

fn with_command(cfg: &RunConfig, command: &str) -> Manifest {
    let mut m = cfg.to_manifest();
    m.set("command", command);
    m.set("lyapnet_version", env!("CARGO_PKG_VERSION"));
    m
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let _lock = DirLock::acquire(&cfg.data_dir)?;
    let mut outputs = Outputs::new();
    for name in ["train.lyds", "val.lyds", "test.lyds", MANIFEST_NAME] {
        outputs.track(cfg.data_dir.join(name));
    }
    info!(
        "generating {} {} dataset ({} profile, seed {}, pool {})",
        cfg.regime, cfg.system, cfg.profile, cfg.seed, cfg.dataset.pool_size
    );
    let splits = build_dataset(cfg.system, cfg.regime, &cfg.dataset, cfg.seed)?;
    crate::pipeline::save_splits(&cfg.data_dir, &splits, &with_command(cfg, "gen-data"))?;
    outputs.commit();
    info!(
        "wrote {} train / {} val / {} test samples to {}",
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        cfg.data_dir.display()
    );
    Ok(())
}

fn model_file(i: usize) -> String {
    format!("model_{:02}.lynn", i + 1)
}

/// Writes every member, `history.csv` and `models.manifest` into the models directory.
fn train_ensemble_cmd(cfg: &RunConfig) -> Result<()> {
    let splits = load_splits(&cfg.data_dir)?;
    if splits.system != cfg.system {
        return Err(Error::Config(format!(
            "the dataset in {} is for the {} system but the config selects {}; pass --system {}",
            cfg.data_dir.display(),
            splits.system,
            cfg.system,
            splits.system
        )));
    }
    let _lock = DirLock::acquire(&cfg.models_dir)?;
    let mut outputs = Outputs::new();
    let arch = Architecture::paper(splits.system.dim());
    let train_set = TrainData::from_samples(&splits.train);
    let val_set = TrainData::from_samples(&splits.val);
    let test_set = TrainData::from_samples(&splits.test);
    let mut history = String::from("model,epoch,train_loss,val_loss\n");
    let mut manifest = with_command(cfg, "train");
    manifest.set("dataset_seed", splits.seed);
    let (mut vals, mut tests) = (Vec::new(), Vec::new());
    let mut files = Vec::new();

    for (i, &seed) in cfg.model_seeds.iter().enumerate() {
        let tc = TrainConfig {
            epochs: cfg.epochs,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            batch_train: splits.batch_train,
            batch_eval: splits.batch_eval,
            seed,
            ..TrainConfig::default()
        };
        info!(
            "model {}/{} (seed {seed}): {} epochs",
            i + 1,
            cfg.model_seeds.len(),
            tc.epochs
        );
        let report = train_data(arch, &train_set, &val_set, &tc, |r| {
            if r.epoch % 50 == 0 {
                info!("  epoch {}: train {:.5} val {:.5}", r.epoch, r.train_loss, r.val_loss);
            }
        })
        .map_err(|e| Error::Numeric(format!("model {} (seed {seed}): {e}", i + 1)))?;
        let test = evaluate_loss(&report.best_params, &test_set, splits.batch_eval, HUBER_DELTA)?;
        info!(
            "model {}: best epoch {}, val {:.5}, test {:.5}",
            i + 1,
            report.best_epoch,
            report.best_val_loss(),
            test
        );
        let file = model_file(i);
        save_model(&outputs.track(cfg.models_dir.join(&file)), &report.best_params)?;
        for r in &report.history {
            let _ = writeln!(history, "{},{},{:?},{:?}", i + 1, r.epoch, r.train_loss, r.val_loss);
        }
        manifest.set(&format!("model_{:02}_seed", i + 1), seed);
        manifest.set(&format!("model_{:02}_best_epoch", i + 1), report.best_epoch);
        manifest.set(&format!("model_{:02}_val_huber", i + 1), report.best_val_loss());
        manifest.set(&format!("model_{:02}_test_huber", i + 1), test);
        vals.push(vec![report.best_val_loss()]);
        tests.push(vec![test]);
        files.push(file);
    }
    let (vm, vs) = mean_std(&vals)?;
    let (tm, ts) = mean_std(&tests)?;
    manifest.set("model_files", files.join(","));
    manifest.set("val_huber_mean", vm[0]);
    manifest.set("val_huber_std", vs[0]);
    manifest.set("test_huber_mean", tm[0]);
    manifest.set("test_huber_std", ts[0]);
    write_atomic(&outputs.track(cfg.models_dir.join(HISTORY_NAME)), history.as_bytes())?;
    write_atomic(
        &outputs.track(cfg.models_dir.join(MODELS_MANIFEST)),
        manifest.render().as_bytes(),
    )?;
    outputs.commit();
    info!("test Huber {:.5} ± {:.5} over {} models", tm[0], ts[0], files.len());
    Ok(())
}

fn read_manifest(path: &Path, producer: &str) -> Result<Manifest> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::io(
            format!("reading {} (run `lyapnet {producer}` first)", path.display()),
            e,
        )
    })?;
    Ok(Manifest::parse(&text))
}

/// Loads the ensemble listed in `models.manifest`.
pub fn load_ensemble(dir: &Path) -> Result<(Manifest, Vec<ModelParams>)> {
    let m = read_manifest(&dir.join(MODELS_MANIFEST), "train")?;
    let files: String = m.require("model_files")?;
    let n_out: usize = m.require::<crate::dynsys::SystemKind>("system")?.dim();
    let models = files
        .split(',')
        .map(|f| load_model(&dir.join(f.trim()), Some(n_out)))
        .collect::<Result<Vec<_>>>()?;
    Ok((m, models))
}

fn parse_range(text: &str, what: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("{what} must look like LO:HI, got '{text}'"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

/// Grid described by the flags.
pub fn grid_from_args(g: &GridArgs) -> Result<GridSpec> {
    let (r_lo, r_hi) = parse_range(&g.r_range, "--r-range")?;
    let grid = match (&g.plane, g.line) {
        (Some(p), _) => {
            let bad = || Error::Config(format!("--plane must look like RxB, e.g. 50x50, got '{p}'"));
            let (rc, bc) = p
                .to_ascii_lowercase()
                .split_once('x')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(bad)?;
            let (b_lo, b_hi) = parse_range(&g.b_range, "--b-range")?;
            GridSpec::Plane {
                r: Axis::new(r_lo, r_hi, rc.trim().parse().map_err(|_| bad())?)?,
                b: Axis::new(b_lo, b_hi, bc.trim().parse().map_err(|_| bad())?)?,
                sigma: g.sigma,
            }
        }
        (None, Some(b)) => GridSpec::Line {
            r: Axis::new(r_lo, r_hi, g.points)?,
            b,
            sigma: g.sigma,
        },
        (None, None) => return Err(Error::Config("pass --line B or --plane RxB".into())),
    };
    grid.validate()?;
    Ok(grid)
}

fn grid_tag(grid: &GridSpec) -> String {
    match grid {
        GridSpec::Line { r, b, .. } => format!("line-b{b}-n{}", r.count),
        GridSpec::Plane { r, b, .. } => format!("plane-{}x{}", r.count, b.count),
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest");
    path.with_file_name(name)
}

fn sweep_cmd(cfg: &RunConfig, g: &GridArgs, predict: bool, truth: bool) -> Result<()> {
    let grid = grid_from_args(g)?;
    let (model_manifest, models) = if predict {
        let (m, models) = load_ensemble(&cfg.models_dir)?;
        if m.require::<crate::dynsys::SystemKind>("system")? != cfg.system {
            return Err(Error::Config(format!(
                "the models in {} were trained on another system than {}; pass the matching --system",
                cfg.models_dir.display(),
                cfg.system
            )));
        }
        (Some(m), models)
    } else {
        (None, Vec::new())
    };
    let command = if predict { "predict-sweep" } else { "classical-sweep" };
    let path = g.output.clone().unwrap_or_else(|| {
        let prefix = if predict { "predict" } else { "classical" };
        cfg.out_dir
            .join(format!("{prefix}_{}_{}.csv", cfg.system, grid_tag(&grid)))
    });
    let out_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let _lock = DirLock::acquire(out_dir)?;
    let mut outputs = Outputs::new();
    let opts = SweepOptions {
        seed: cfg.sweep_seed,
        classical: truth.then(|| cfg.le_config()),
    };
    info!("{command}: {} cells of the {} system", grid.len(), cfg.system);
    let res = sweep(&models, cfg.system, &grid, &opts)?;
    write_sweep_csv(&outputs.track(path.clone()), &res)?;
    let mut m = with_command(cfg, command);
    m.set("grid", grid_tag(&grid));
    m.set("cells", res.cells.len());
    m.set("gaps", res.n_gaps());
    if let Some(mm) = &model_manifest {
        for key in ["model_files", "model_seeds", "dataset_seed"] {
            if let Some(v) = mm.get(key) {
                m.set(&format!("ensemble_{key}"), v);
            }
        }
    }
    if let Some((mean, std)) = res.ensemble_huber() {
        m.set("huber_mean", mean);
        m.set("huber_std", std);
    }
    write_atomic(&outputs.track(sidecar(&path)), m.render().as_bytes())?;
    outputs.commit();
    if res.n_gaps() > 0 {
        log::warn!(
            "{} of {} cells failed and were written as NaN rows",
            res.n_gaps(),
            res.cells.len()
        );
    }
    info!("wrote {}", path.display());
    Ok(())
}

fn merge_truth(pred: &mut SweepResult, truth: &SweepResult, truth_path: &Path) -> Result<()> {
    if pred.system != truth.system || pred.grid != truth.grid {
        return Err(Error::Config(format!(
            "{} covers a different system or grid than the predictions",
            truth_path.display()
        )));
    }
    for (c, t) in pred.cells.iter_mut().zip(&truth.cells) {
        c.truth = t.truth.clone();
    }
    Ok(())
}

fn parse_edges(text: &str) -> Result<Vec<f64>> {
    let inner = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("malformed --truth-edges '{text}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend(inner);
    edges.push(f64::INFINITY);
    Ok(edges)
}

fn error_analysis(cfg: &RunConfig, a: &ErrorArgs) -> Result<()> {
    let mut res =
        read_sweep_csv(&a.pred).map_err(|e| Error::Config(format!("{e} (produce it with `lyapnet predict-sweep`)")))?;
    if res.cells.first().is_none_or(|c| c.pred_mean.is_empty()) {
        return Err(Error::Config(format!(
            "{} has no predictions; produce it with `lyapnet predict-sweep`",
            a.pred.display()
        )));
    }
    if let Some(tp) = &a.truth {
        let truth = read_sweep_csv(tp)
            .map_err(|e| Error::Config(format!("{e} (produce it with `lyapnet classical-sweep`)")))?;
        merge_truth(&mut res, &truth, tp)?;
    }
    if res.cells.iter().all(|c| c.truth.is_none()) {
        return Err(Error::Config(format!(
            "{} has no classical truth; pass --truth from `lyapnet classical-sweep` or rerun `lyapnet predict-sweep --with-truth`",
            a.pred.display()
        )));
    }
    let edges = match &a.truth_edges {
        Some(t) => parse_edges(t)?,
        None => DEFAULT_TRUTH_EDGES.to_vec(),
    };
    let hist = error_histogram(&res, &edges)?;
    let path = a.output.clone().unwrap_or_else(|| {
        let stem = a
            .pred
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        cfg.out_dir.join(format!("{stem}_errors.csv"))
    });
    let out_dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let _lock = DirLock::acquire(out_dir)?;
    let mut outputs = Outputs::new();
    write_atomic(&outputs.track(path.clone()), render_histogram_csv(&hist).as_bytes())?;
    outputs.commit();
    for row in hist.rows.iter().filter(|r| r.total() > 0) {
        info!(
            "LE{} in [{}, {}): {} points, {:.1}% within 0.05",
            row.le_index,
            row.truth_lo,
            row.truth_hi,
            row.total(),
            row.percent(0)
        );
    }
    info!("wrote {}", path.display());
    Ok(())
}

fn pct(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * k as f64 / n as f64
    }
}

/// One paragraph per sweep file in `dir` that carries predictions.
fn sweep_reports(dir: &Path) -> Result<Vec<String>> {
    let mut paths: Vec<PathBuf> = match std::fs::read_dir(dir) {
        Ok(rd) => rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect(),
        Err(_) => return Ok(Vec::new()),
    };
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let Ok(res) = read_sweep_csv(&p) else {
            continue;
        };
        let name = p.file_name().unwrap_or_default().to_string_lossy();
        let n = res.cells.len();
        let mut s = format!("sweep {name}: {} system, {n} cells, {} gaps", res.system, res.n_gaps());
        if let Some((mean, std)) = res.ensemble_huber() {
            let _ = write!(s, "; Huber {mean:.4} ± {std:.4} over {} models", res.member_huber.len());
        }
        let ok: Vec<_> = res.cells.iter().filter(|c| !c.is_gap()).collect();
        if ok.iter().any(|c| !c.pred_mean.is_empty()) {
            let chaotic = ok.iter().filter(|c| count_positive(&c.pred_mean) >= 1).count();
            let hyper = ok.iter().filter(|c| count_positive(&c.pred_mean) >= 2).count();
            let _ = write!(
                s,
                "; predicted chaotic {:.1}%, hyperchaotic {:.1}%",
                pct(chaotic, ok.len()),
                pct(hyper, ok.len())
            );
        }
        let truths: Vec<&Vec<f64>> = ok.iter().filter_map(|c| c.truth.as_ref()).collect();
        if !truths.is_empty() {
            let chaotic = truths.iter().filter(|t| count_positive(t) >= 1).count();
            let hyper = truths.iter().filter(|t| count_positive(t) >= 2).count();
            let _ = write!(
                s,
                "; classical chaotic {:.1}%, hyperchaotic {:.1}%",
                pct(chaotic, truths.len()),
                pct(hyper, truths.len())
            );
        }
        out.push(s);
    }
    Ok(out)
}

fn report(cfg: &RunConfig) -> Result<()> {
    let mut lines = Vec::new();
    let models_manifest = cfg.models_dir.join(MODELS_MANIFEST);
    if models_manifest.exists() {
        let m = read_manifest(&models_manifest, "train")?;
        let files: String = m.require("model_files")?;
        let n = files.split(',').count();
        lines.push(format!(
            "ensemble: {n} models of the {} system, dataset seed {}, model seeds {}",
            m.require::<String>("system")?,
            m.require::<u64>("dataset_seed")?,
            m.require::<String>("model_seeds")?
        ));
        for split in ["val", "test"] {
            lines.push(format!(
                "{split} Huber: {:.4} ± {:.4} (mean ± std over {n} models)",
                m.require::<f64>(&format!("{split}_huber_mean"))?,
                m.require::<f64>(&format!("{split}_huber_std"))?
            ));
        }
    }
    lines.extend(sweep_reports(&cfg.out_dir)?);
    if lines.is_empty() {
        return Err(Error::Config(format!(
            "nothing to report: no {} in {} (run `lyapnet train`) and no sweep CSVs in {} (run `lyapnet predict-sweep`)",
            MODELS_MANIFEST,
            cfg.models_dir.display(),
            cfg.out_dir.display()
        )));
    }
    let text = lines.join("\n") + "\n";
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    write_atomic(&cfg.out_dir.join(REPORT_NAME), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("lyapnet").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let conf = dir.path().join("run.conf");
        std::fs::write(&conf, "system = coupled\nseed = 3\nepochs = 9\n").unwrap();
        let c = conf.display().to_string();
        let cfg = resolve_config(&parse(&["train", "--config", &c, "--seed", "5", "--models", "4"])).unwrap();
        assert_eq!(cfg.system, crate::dynsys::SystemKind::CoupledLorenz);
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.epochs, 9);
        assert_eq!(cfg.model_seeds, default_model_seeds(5, 4));
    }

    #[test]
    fn grids_from_flags() {
        let Command::PredictSweep(p) = parse(&["predict-sweep", "--plane", "50x50"]).command else {
            panic!()
        };
        let g = grid_from_args(&p.grid).unwrap();
        assert_eq!(g.len(), 2500);
        assert_eq!(grid_tag(&g), "plane-50x50");
        let Command::ClassicalSweep(a) = parse(&["classical-sweep", "--line", "2.2", "--points", "200"]).command else {
            panic!()
        };
        assert_eq!(grid_from_args(&a).unwrap().len(), 200);
        assert!(Cli::try_parse_from(["lyapnet", "classical-sweep"]).is_err());
        assert!(Cli::try_parse_from(["lyapnet", "classical-sweep", "--line", "2", "--plane", "3x3"]).is_err());
        let Command::ClassicalSweep(bad) = parse(&["classical-sweep", "--plane", "50by50"]).command else {
            panic!()
        };
        assert!(grid_from_args(&bad).is_err());
    }

    #[test]
    fn truth_edges_get_unbounded_ends() {
        assert_eq!(
            parse_edges("-1,1").unwrap(),
            vec![f64::NEG_INFINITY, -1.0, 1.0, f64::INFINITY]
        );
        assert!(parse_edges("a").is_err());
    }
}

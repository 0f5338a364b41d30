use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::loss::{huber_value, HUBER_DELTA};
use super::net::{loss_and_grad_with, Workspace, CHUNK};
use super::params::{init_params, Architecture, ModelParams};
use crate::error::{Error, Result};
use crate::pipeline::{DatasetSplits, LabeledSample};
use crate::rng::{indexed_rng, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub delta: f64,
    pub batch_train: usize,
    pub batch_eval: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            lr: 0.008,
            weight_decay: 1e-5,
            delta: HUBER_DELTA,
            batch_train: 128,
            batch_eval: 100,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let reals = [self.lr, self.delta, self.beta1, self.beta2, self.eps_adam];
        if self.epochs == 0 || self.batch_train == 0 || self.batch_eval == 0 {
            return Err(Error::Config("epochs and batch sizes must be positive".into()));
        }
        if reals.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("invalid training hyperparameters: {self:?}")));
        }
        if self.beta1 >= 1.0 || self.beta2 >= 1.0 {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
}

impl AdamState {
    pub fn new(arch: Architecture) -> Self {
        AdamState {
            m: ModelParams::zeros(arch),
            v: ModelParams::zeros(arch),
        }
    }
}

fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, cfg: &TrainConfig) {
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    let step = cfg.lr / bc1;
    let bc2_sqrt = bc2.sqrt();
    for i in 0..p.len() {
        let gi = g[i] + cfg.weight_decay * p[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        p[i] -= step * m[i] / (v[i].sqrt() / bc2_sqrt + cfg.eps_adam);
    }
}

/// One Adam update with coupled L2 decay; `t` is the 1-based step count.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
    t: u64,
    cfg: &TrainConfig,
) -> Result<()> {
    if t == 0 {
        return Err(Error::contract("Adam step index starts at 1"));
    }
    if params.arch != grads.arch || params.arch != state.m.arch {
        return Err(Error::contract("Adam: parameter, gradient and state shapes differ"));
    }
    let AdamState { m, v } = state;
    for (((p, g), m), v) in params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(m.blocks_mut())
        .zip(v.blocks_mut())
    {
        adam_update(p, g, m, v, t, cfg);
    }
    Ok(())
}

/// Borrowed inputs and targets for training or evaluation.
#[derive(Debug, Clone, Default)]
pub struct TrainData<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub targets: Vec<&'a [f64]>,
}

impl<'a> TrainData<'a> {
    pub fn from_samples(samples: &'a [LabeledSample]) -> Self {
        TrainData {
            inputs: samples.iter().map(|s| s.series.as_slice()).collect(),
            targets: samples.iter().map(|s| s.le_truth.as_slice()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub best_params: ModelParams,
    /// 1-based epoch whose parameters are in `best_params`.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> f64 {
        self.history[self.best_epoch - 1].val_loss
    }
}

/// `epoch,train_loss,val_loss` with shortest round-trip float formatting.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        let _ = writeln!(out, "{},{:?},{:?}", r.epoch, r.train_loss, r.val_loss);
    }
    out
}

/// Mean Huber loss over `data`, accumulated batch by batch.
pub fn evaluate_loss(p: &ModelParams, data: &TrainData, batch: usize, delta: f64) -> Result<f64> {
    let mut pool = Vec::new();
    evaluate_with(p, data, batch, delta, &mut pool)
}

fn evaluate_with(
    p: &ModelParams,
    data: &TrainData,
    batch: usize,
    delta: f64,
    pool: &mut Vec<Workspace>,
) -> Result<f64> {
    if data.is_empty() || batch == 0 {
        return Err(Error::contract("evaluation needs data and a positive batch size"));
    }
    let n_out = p.arch.n_outputs;
    if data.inputs.iter().any(|x| x.len() != p.arch.in_len) || data.targets.iter().any(|t| t.len() != n_out) {
        return Err(Error::contract("evaluation data does not match the architecture"));
    }
    let per_batch = batch.div_ceil(CHUNK);
    while pool.len() < per_batch {
        pool.push(Workspace::new(p.arch));
    }
    let mut total = 0.0;
    for (xs, ts) in data.inputs.chunks(batch).zip(data.targets.chunks(batch)) {
        let n_chunks = xs.len().div_ceil(CHUNK);
        pool[..n_chunks]
            .par_iter_mut()
            .zip(xs.par_chunks(CHUNK).zip(ts.par_chunks(CHUNK)))
            .for_each(|(ws, (xc, tc))| {
                let mut loss = 0.0;
                for (x, t) in xc.iter().zip(tc) {
                    ws.forward(p, x);
                    loss += ws
                        .out
                        .iter()
                        .zip(t.iter())
                        .map(|(y, t)| huber_value(y - t, delta))
                        .sum::<f64>();
                }
                ws.loss_sum = loss;
            });
        let sum: f64 = pool[..n_chunks].iter().map(|ws| ws.loss_sum).sum();
        let batch_mean = sum / (xs.len() * n_out) as f64;
        total += batch_mean * xs.len() as f64;
    }
    let loss = total / data.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite evaluation loss".into()));
    }
    Ok(loss)
}

/// Trains from `init_params(arch, cfg.seed)` and returns the parameters with the lowest validation loss.
pub fn train_data(
    arch: Architecture,
    train: &TrainData,
    val: &TrainData,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    arch.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::contract("training needs non-empty train and validation sets"));
    }
    if train.inputs.len() != train.targets.len() || val.inputs.len() != val.targets.len() {
        return Err(Error::contract("inputs and targets differ in count"));
    }
    let mut params = init_params(arch, cfg.seed);
    let mut adam = AdamState::new(arch);
    let mut pool = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut t = 0u64;
    let mut xs = Vec::with_capacity(cfg.batch_train);
    let mut ts = Vec::with_capacity(cfg.batch_train);

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut indexed_rng(cfg.seed, Stream::Shuffle, epoch as u64));
        let mut train_sum = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_train).enumerate() {
            xs.clear();
            ts.clear();
            xs.extend(idx.iter().map(|&i| train.inputs[i]));
            ts.extend(idx.iter().map(|&i| train.targets[i]));
            let (loss, grads) = loss_and_grad_with(&params, &xs, &ts, cfg.delta, &mut pool)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}, batch {bi}: {e}")))?;
            t += 1;
            adam_step(&mut params, &grads, &mut adam, t, cfg)?;
            if !params.all_finite() {
                return Err(Error::Numeric(format!(
                    "epoch {epoch}, batch {bi}: parameters became non-finite"
                )));
            }
            train_sum += loss * idx.len() as f64;
        }
        let val_loss = evaluate_with(&params, val, cfg.batch_eval, cfg.delta, &mut pool)
            .map_err(|e| Error::Numeric(format!("epoch {epoch}, validation: {e}")))?;
        let rec = EpochRecord {
            epoch,
            train_loss: train_sum / train.len() as f64,
            val_loss,
        };
        if best.as_ref().is_none_or(|(_, v, _)| val_loss < *v) {
            best = Some((epoch, val_loss, params.clone()));
        }
        log::debug!("epoch {epoch}: train {:.6} val {:.6}", rec.train_loss, rec.val_loss);
        on_epoch(&rec);
        history.push(rec);
    }
    let (best_epoch, _, best_params) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        best_params,
        best_epoch,
        history,
    })
}

/// Trains on the train split and selects on the validation split.
pub fn train(arch: Architecture, splits: &DatasetSplits, cfg: &TrainConfig) -> Result<TrainReport> {
    if arch.n_outputs != splits.system.dim() {
        return Err(Error::contract(format!(
            "{} outputs for a {}-dimensional system",
            arch.n_outputs,
            splits.system.dim()
        )));
    }
    let tr = TrainData::from_samples(&splits.train);
    let va = TrainData::from_samples(&splits.val);
    train_data(arch, &tr, &va, cfg, |_| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::params::ConvSpec;

    fn scalar_cfg(wd: f64) -> TrainConfig {
        TrainConfig {
            weight_decay: wd,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn adam_zero_grad_no_decay_is_identity() {
        let mut p = [0.7, -2.0];
        let (mut m, mut v) = ([0.0; 2], [0.0; 2]);
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, &scalar_cfg(0.0));
        assert_eq!(p, [0.7, -2.0]);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = [0.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut p, &[1.0], &mut m, &mut v, 1, &scalar_cfg(0.0));
        assert_close!(p[0], -0.008 / (1.0 + 1e-8), 1e-15);
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut w = [1.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        let mut prev = 1.0;
        for t in 1..=2 {
            let g = [w[0]];
            adam_update(&mut w, &g, &mut m, &mut v, t, &scalar_cfg(0.0));
            assert!(w[0].abs() < prev);
            prev = w[0].abs();
        }
    }

    #[test]
    fn weight_decay_is_added_to_gradient() {
        // Zero loss gradient with decay behaves like a gradient of wd * p.
        let mut a = [2.0];
        let (mut m, mut v) = ([0.0], [0.0]);
        adam_update(&mut a, &[0.0], &mut m, &mut v, 1, &scalar_cfg(0.5));
        let mut b = [2.0];
        let (mut m2, mut v2) = ([0.0], [0.0]);
        adam_update(&mut b, &[1.0], &mut m2, &mut v2, 1, &scalar_cfg(0.0));
        assert_eq!(a, b);
    }

    #[test]
    fn adam_step_rejects_t_zero() {
        let arch = Architecture::paper(3);
        let mut p = ModelParams::zeros(arch);
        let g = p.clone();
        let mut s = AdamState::new(arch);
        assert!(adam_step(&mut p, &g, &mut s, 0, &TrainConfig::default()).is_err());
    }

    fn tiny_arch() -> Architecture {
        Architecture {
            in_len: 32,
            conv1: ConvSpec {
                out_channels: 4,
                kernel: 3,
                dilation: 2,
            },
            conv2: ConvSpec {
                out_channels: 6,
                kernel: 3,
                dilation: 2,
            },
            n_outputs: 3,
        }
    }

    fn toy_data(n: usize, shift: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs = (0..n)
            .map(|k| {
                (0..32)
                    .map(|i| ((i as f64 * 0.3 + k as f64 + shift).sin() + 1.0) / 2.0)
                    .collect()
            })
            .collect();
        let ts = (0..n)
            .map(|k| {
                let a = (k as f64 + shift).sin();
                vec![a, 0.0, -1.0 - a]
            })
            .collect();
        (xs, ts)
    }

    fn borrow<'a>(xs: &'a [Vec<f64>], ts: &'a [Vec<f64>]) -> TrainData<'a> {
        TrainData {
            inputs: xs.iter().map(Vec::as_slice).collect(),
            targets: ts.iter().map(Vec::as_slice).collect(),
        }
    }

    #[test]
    fn constant_target_is_learned() {
        let (xs, _) = toy_data(50, 0.0);
        let ts = vec![vec![0.9, -0.3, -4.0]; 50];
        let data = borrow(&xs, &ts);
        let cfg = TrainConfig {
            epochs: 200,
            batch_train: 16,
            seed: 3,
            ..TrainConfig::default()
        };
        let rep = train_data(tiny_arch(), &data, &data, &cfg, |_| {}).unwrap();
        assert!(
            rep.history.last().unwrap().train_loss < 1e-3,
            "{:?}",
            rep.history.last()
        );
    }

    #[test]
    fn history_is_deterministic_and_snapshot_is_best() {
        let (xs, ts) = toy_data(40, 0.0);
        let (vx, vt) = toy_data(13, 0.5);
        let tr = borrow(&xs, &ts);
        let va = borrow(&vx, &vt);
        let cfg = TrainConfig {
            epochs: 25,
            batch_train: 7,
            batch_eval: 5,
            seed: 8,
            ..TrainConfig::default()
        };
        let a = train_data(tiny_arch(), &tr, &va, &cfg, |_| {}).unwrap();
        let b = train_data(tiny_arch(), &tr, &va, &cfg, |_| {}).unwrap();
        assert_eq!(history_csv(&a.history), history_csv(&b.history));
        let min = a.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_val_loss(), min);
        let again = evaluate_loss(&a.best_params, &va, cfg.batch_eval, cfg.delta).unwrap();
        assert!((again - min).abs() < 1e-12);
        let c = train_data(tiny_arch(), &tr, &va, &TrainConfig { seed: 9, ..cfg }, |_| {}).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn rejects_empty_and_bad_config() {
        let (xs, ts) = toy_data(4, 0.0);
        let d = borrow(&xs, &ts);
        let empty = TrainData::default();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        assert!(train_data(tiny_arch(), &empty, &d, &cfg, |_| {}).is_err());
        let bad = TrainConfig { lr: -1.0, ..cfg };
        assert!(train_data(tiny_arch(), &d, &d, &bad, |_| {}).is_err());
    }

    #[test]
    fn csv_round_trips_floats() {
        let h = [EpochRecord {
            epoch: 1,
            train_loss: 0.1 + 0.2,
            val_loss: 1e-300,
        }];
        let text = history_csv(&h);
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[1].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(row[2].parse::<f64>().unwrap(), 1e-300);
    }
}

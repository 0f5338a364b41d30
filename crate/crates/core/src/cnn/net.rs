//! Forward and backward passes.
//!
//! Samples are processed in fixed-size chunks. Within a chunk the second
//! convolution runs as one matrix product over the concatenated im2col
//! columns of every sample. Chunk results are reduced in chunk order, so
//! gradients do not depend on how many threads run the chunks.

use rayon::prelude::*;

use super::loss::{huber_grad, huber_value};
use super::params::{Architecture, ModelParams};
use crate::error::{Error, Result};

pub const CHUNK: usize = 8;

/// Left and right zero padding for a stride-1 "same" convolution.
pub fn same_padding(kernel: usize, dilation: usize) -> (usize, usize) {
    let total = (kernel - 1) * dilation;
    (total / 2, total - total / 2)
}

/// Plain dilated 1-D convolution with "same" zero padding.
///
/// `input` is `[c_in][len]`, `weights` is `[c_out][c_in][kernel]`, output is `[c_out][len]`.
pub fn conv1d(
    input: &[f64],
    c_in: usize,
    weights: &[f64],
    bias: &[f64],
    kernel: usize,
    dilation: usize,
) -> Result<Vec<f64>> {
    if c_in == 0 || kernel == 0 || dilation == 0 || input.len() % c_in != 0 {
        return Err(Error::contract("conv1d: bad channel, kernel or dilation"));
    }
    let c_out = bias.len();
    if weights.len() != c_out * c_in * kernel {
        return Err(Error::contract(format!(
            "conv1d: {} weights for {c_out}x{c_in}x{kernel}",
            weights.len()
        )));
    }
    let len = input.len() / c_in;
    let (left, _) = same_padding(kernel, dilation);
    let mut out = vec![0.0; c_out * len];
    for c in 0..c_out {
        let row = &mut out[c * len..(c + 1) * len];
        row.iter_mut().for_each(|v| *v = bias[c]);
        for j in 0..c_in {
            let x = &input[j * len..(j + 1) * len];
            for m in 0..kernel {
                let w = weights[(c * c_in + j) * kernel + m];
                let shift = (m * dilation) as isize - left as isize;
                let lo = (-shift).max(0) as usize;
                let hi = (len as isize - shift).clamp(0, len as isize) as usize;
                for i in lo..hi {
                    row[i] += w * x[(i as isize + shift) as usize];
                }
            }
        }
    }
    Ok(out)
}

type View<'a> = (&'a [f64], isize, isize);

fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
    }
}

/// `C = A B + beta C` on strided views; strides are (row, column) in elements.
fn gemm(m: usize, k: usize, n: usize, a: View, b: View, beta: f64, c: (&mut [f64], isize, isize)) {
    assert!(a.1 > 0 && a.2 > 0 && b.1 > 0 && b.2 > 0 && c.1 > 0 && c.2 > 0);
    assert!(a.0.len() >= span(m, k, a.1, a.2));
    assert!(b.0.len() >= span(k, n, b.1, b.2));
    assert!(c.0.len() >= span(m, n, c.1, c.2));
    // SAFETY: strides are positive and the asserts above bound every index dgemm touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.0.as_mut_ptr(),
            c.1,
            c.2,
        );
    }
}

#[derive(Clone, Copy)]
struct Dims {
    l: usize,
    c1: usize,
    k1: usize,
    d1: usize,
    c2: usize,
    k2: usize,
    d2: usize,
    kk: usize,
    lp1: usize,
    lp2: usize,
    left1: usize,
    left2: usize,
    n_out: usize,
}

impl Dims {
    fn of(a: &Architecture) -> Self {
        let (c1, k1, d1) = (a.conv1.out_channels, a.conv1.kernel, a.conv1.dilation);
        let (c2, k2, d2) = (a.conv2.out_channels, a.conv2.kernel, a.conv2.dilation);
        Dims {
            l: a.in_len,
            c1,
            k1,
            d1,
            c2,
            k2,
            d2,
            kk: c1 * k2,
            lp1: a.in_len + a.conv1.total_padding(),
            lp2: a.in_len + a.conv2.total_padding(),
            left1: same_padding(k1, d1).0,
            left2: same_padding(k2, d2).0,
            n_out: a.n_outputs,
        }
    }
}

/// Scratch buffers for one sample at a time, reused across a chunk.
///
/// The first convolution is one matrix product on a strided view of the padded
/// input. The second goes through an im2col buffer that the backward pass
/// reuses for the weight gradient and then for the input gradient.
pub(crate) struct Workspace {
    arch: Architecture,
    xp: Vec<f64>,
    h1p: Vec<f64>,
    dh1p: Vec<f64>,
    col: Vec<f64>,
    z2: Vec<f64>,
    pooled: Vec<f64>,
    pub(crate) out: Vec<f64>,
    pub(crate) grads: ModelParams,
    pub(crate) loss_sum: f64,
}

impl Workspace {
    pub(crate) fn new(arch: Architecture) -> Self {
        let d = Dims::of(&arch);
        Workspace {
            arch,
            xp: vec![0.0; d.lp1],
            h1p: vec![0.0; d.c1 * d.lp2],
            dh1p: vec![0.0; d.c1 * d.lp2],
            col: vec![0.0; d.kk * d.l],
            z2: vec![0.0; d.c2 * d.l],
            pooled: vec![0.0; d.c2],
            out: vec![0.0; d.n_out],
            grads: ModelParams::zeros(arch),
            loss_sum: 0.0,
        }
    }

    /// Forward pass for one sample; the output lands in `self.out`.
    pub(crate) fn forward(&mut self, p: &ModelParams, x: &[f64]) {
        let d = Dims::of(&self.arch);
        let l = d.l;
        let inv_l = 1.0 / l as f64;
        {
            let xp = &mut self.xp[..];
            xp.iter_mut().for_each(|v| *v = 0.0);
            xp[d.left1..d.left1 + l].copy_from_slice(x);
            let xp = &*xp;

            let h1p = &mut self.h1p[..];
            h1p.iter_mut().for_each(|v| *v = 0.0);
            gemm(
                d.c1,
                d.k1,
                l,
                (&p.conv1_w, d.k1 as isize, 1),
                (xp, d.d1 as isize, 1),
                0.0,
                (&mut h1p[d.left2..], d.lp2 as isize, 1),
            );
            for c in 0..d.c1 {
                for v in &mut h1p[c * d.lp2 + d.left2..][..l] {
                    *v = (*v + p.conv1_b[c]).max(0.0);
                }
            }

            // Row ci * k2 + m of col is channel ci shifted by tap m, matching the weight layout.
            let col = &mut self.col[..];
            for (row, dst) in col.chunks_exact_mut(l).enumerate() {
                let (ci, m) = (row / d.k2, row % d.k2);
                dst.copy_from_slice(&h1p[ci * d.lp2 + m * d.d2..][..l]);
            }
            let z2 = &mut self.z2[..];
            gemm(
                d.c2,
                d.kk,
                l,
                (&p.conv2_w, d.kk as isize, 1),
                (col, l as isize, 1),
                0.0,
                (z2, l as isize, 1),
            );

            let mut acc = [0.0; 4];
            for c in 0..d.c2 {
                let row = &mut z2[c * l..(c + 1) * l];
                acc.iter_mut().for_each(|a| *a = 0.0);
                for (i, v) in row.iter_mut().enumerate() {
                    *v += p.conv2_b[c];
                    acc[i % 4] += v.max(0.0);
                }
                self.pooled[c] = ((acc[0] + acc[1]) + (acc[2] + acc[3])) * inv_l;
            }

            let pooled = &self.pooled;
            for o in 0..d.n_out {
                let w = &p.out_w[o * d.c2..(o + 1) * d.c2];
                self.out[o] = p.out_b[o] + w.iter().zip(pooled).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }

    /// Backward pass right after `forward` on the same sample; `g_out` is dL/dy.
    /// Gradients are accumulated into `self.grads`.
    pub(crate) fn backward(&mut self, p: &ModelParams, g_out: &[f64]) {
        let d = Dims::of(&self.arch);
        let l = d.l;
        let inv_l = 1.0 / l as f64;
        let g = &mut self.grads;
        let mut g_pool = vec![0.0; d.c2];
        {
            // Readout, then pooling: dL/dZ2[c, i] is g_pool[c] / L wherever Z2 > 0.
            g_pool.iter_mut().for_each(|v| *v = 0.0);
            for (o, &go) in g_out.iter().enumerate() {
                g.out_b[o] += go;
                let w = &p.out_w[o * d.c2..(o + 1) * d.c2];
                let gw = &mut g.out_w[o * d.c2..(o + 1) * d.c2];
                for (((gw, gp), &w), &pooled) in gw.iter_mut().zip(&mut g_pool).zip(w).zip(&self.pooled) {
                    *gw += go * pooled;
                    *gp += go * w;
                }
            }
            let z2 = &mut self.z2[..];
            for c in 0..d.c2 {
                let gz = g_pool[c] * inv_l;
                let mut active = 0usize;
                for v in &mut z2[c * l..(c + 1) * l] {
                    let on = *v > 0.0;
                    active += on as usize;
                    *v = if on { gz } else { 0.0 };
                }
                g.conv2_b[c] += gz * active as f64;
            }
            let dz2 = &*z2;

            let h1p = &self.h1p[..];
            let col = &mut self.col[..];
            gemm(
                d.c2,
                l,
                d.kk,
                (dz2, l as isize, 1),
                (col, 1, l as isize),
                1.0,
                (&mut g.conv2_w, d.kk as isize, 1),
            );
            gemm(
                d.kk,
                d.c2,
                l,
                (&p.conv2_w, 1, d.kk as isize),
                (dz2, l as isize, 1),
                0.0,
                (col, l as isize, 1),
            );
            let dh1p = &mut self.dh1p;
            dh1p.iter_mut().for_each(|v| *v = 0.0);
            for (row, src) in col.chunks_exact(l).enumerate() {
                let (ci, m) = (row / d.k2, row % d.k2);
                for (dv, sv) in dh1p[ci * d.lp2 + m * d.d2..][..l].iter_mut().zip(src) {
                    *dv += sv;
                }
            }

            // Layer-1 ReLU mask: relu(z) > 0 exactly where z > 0.
            for c in 0..d.c1 {
                let h = &h1p[c * d.lp2 + d.left2..][..l];
                let dh = &mut dh1p[c * d.lp2 + d.left2..][..l];
                let mut acc = [0.0; 4];
                for (i, (dv, hv)) in dh.iter_mut().zip(h).enumerate() {
                    if *hv <= 0.0 {
                        *dv = 0.0;
                    }
                    acc[i % 4] += *dv;
                }
                g.conv1_b[c] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
            }
            let xp = &self.xp[..];
            gemm(
                d.c1,
                l,
                d.k1,
                (&dh1p[d.left2..], d.lp2 as isize, 1),
                (xp, 1, d.d1 as isize),
                1.0,
                (&mut g.conv1_w, d.k1 as isize, 1),
            );
        }
    }
}

fn check_inputs(arch: &Architecture, inputs: &[&[f64]]) -> Result<()> {
    for (i, x) in inputs.iter().enumerate() {
        if x.len() != arch.in_len {
            return Err(Error::contract(format!(
                "input {i} has {} points, model expects {}",
                x.len(),
                arch.in_len
            )));
        }
    }
    Ok(())
}

fn check_params(p: &ModelParams) -> Result<()> {
    p.arch.validate()?;
    if !p.shapes_match() {
        return Err(Error::contract("parameter shapes do not match the architecture"));
    }
    Ok(())
}

/// Predictions for a batch of series, `[n][n_outputs]`.
pub fn predict_batch(p: &ModelParams, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
    check_params(p)?;
    check_inputs(&p.arch, inputs)?;
    let n_out = p.arch.n_outputs;
    let chunks: Vec<Vec<f64>> = inputs
        .par_chunks(CHUNK)
        .map_init(
            || Workspace::new(p.arch),
            |ws, chunk| {
                let mut out = Vec::with_capacity(chunk.len() * n_out);
                for x in chunk {
                    ws.forward(p, x);
                    out.extend_from_slice(&ws.out);
                }
                out
            },
        )
        .collect();
    let out: Vec<Vec<f64>> = chunks
        .iter()
        .flat_map(|c| c.chunks(n_out).map(<[f64]>::to_vec))
        .collect();
    if out.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite model output".into()));
    }
    Ok(out)
}

/// Prediction for one series.
pub fn forward(p: &ModelParams, series: &[f64]) -> Result<Vec<f64>> {
    Ok(predict_batch(p, &[series])?.pop().unwrap())
}

/// Mean Huber loss over a batch and its gradient with respect to every parameter.
pub fn loss_and_grad(p: &ModelParams, inputs: &[&[f64]], targets: &[&[f64]], delta: f64) -> Result<(f64, ModelParams)> {
    let mut pool = Vec::new();
    loss_and_grad_with(p, inputs, targets, delta, &mut pool)
}

/// Same as `loss_and_grad`, reusing the caller's scratch buffers across calls.
pub(crate) fn loss_and_grad_with(
    p: &ModelParams,
    inputs: &[&[f64]],
    targets: &[&[f64]],
    delta: f64,
    pool: &mut Vec<Workspace>,
) -> Result<(f64, ModelParams)> {
    check_params(p)?;
    check_inputs(&p.arch, inputs)?;
    let n_out = p.arch.n_outputs;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::contract(
            "loss_and_grad needs a non-empty batch with one target per input",
        ));
    }
    if targets.iter().any(|t| t.len() != n_out) {
        return Err(Error::contract(format!("every target must have {n_out} entries")));
    }
    let n_chunks = inputs.len().div_ceil(CHUNK);
    while pool.len() < n_chunks {
        pool.push(Workspace::new(p.arch));
    }
    let scale = 1.0 / (inputs.len() * n_out) as f64;
    pool[..n_chunks]
        .par_iter_mut()
        .zip(inputs.par_chunks(CHUNK).zip(targets.par_chunks(CHUNK)))
        .for_each(|(ws, (xs, ts))| {
            ws.grads.fill_zero();
            let mut g_out = vec![0.0; n_out];
            let mut loss = 0.0;
            for (x, t) in xs.iter().zip(ts) {
                ws.forward(p, x);
                for o in 0..n_out {
                    let e = ws.out[o] - t[o];
                    loss += huber_value(e, delta);
                    g_out[o] = huber_grad(e, delta) * scale;
                }
                ws.backward(p, &g_out);
            }
            ws.loss_sum = loss;
        });
    let mut grads = ModelParams::zeros(p.arch);
    let mut loss = 0.0;
    for ws in &pool[..n_chunks] {
        grads.add_assign(&ws.grads);
        loss += ws.loss_sum;
    }
    let loss = loss * scale;
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok((loss, grads))
}

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
}

impl ConvSpec {
    /// Total zero padding that keeps the length unchanged at stride 1.
    pub fn total_padding(&self) -> usize {
        (self.kernel - 1) * self.dilation
    }
}

/// Two stride-1 dilated convolutions, global average pooling and an affine readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub in_len: usize,
    pub conv1: ConvSpec,
    pub conv2: ConvSpec,
    pub n_outputs: usize,
}

impl Architecture {
    /// 15 channels (kernel 10, dilation 2), then 30 channels (kernel 5, dilation 4), on 1000 points.
    pub fn paper(n_outputs: usize) -> Self {
        Architecture {
            in_len: 1000,
            conv1: ConvSpec {
                out_channels: 15,
                kernel: 10,
                dilation: 2,
            },
            conv2: ConvSpec {
                out_channels: 30,
                kernel: 5,
                dilation: 4,
            },
            n_outputs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.in_len,
            self.conv1.out_channels,
            self.conv1.kernel,
            self.conv1.dilation,
            self.conv2.out_channels,
            self.conv2.kernel,
            self.conv2.dilation,
            self.n_outputs,
        ];
        if dims.contains(&0) {
            return Err(Error::contract(format!("architecture has a zero dimension: {self:?}")));
        }
        Ok(())
    }

    pub fn conv1_w_len(&self) -> usize {
        self.conv1.out_channels * self.conv1.kernel
    }

    pub fn conv2_w_len(&self) -> usize {
        self.conv2.out_channels * self.conv1.out_channels * self.conv2.kernel
    }

    pub fn out_w_len(&self) -> usize {
        self.n_outputs * self.conv2.out_channels
    }

    pub fn n_params(&self) -> usize {
        self.conv1_w_len()
            + self.conv1.out_channels
            + self.conv2_w_len()
            + self.conv2.out_channels
            + self.out_w_len()
            + self.n_outputs
    }
}

/// All trainable tensors, flat and row-major.
///
/// `conv1_w[c][m]` (one input channel), `conv2_w[c][j][m]`, `out_w[o][c]`.
/// The same type carries gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub conv1_w: Vec<f64>,
    pub conv1_b: Vec<f64>,
    pub conv2_w: Vec<f64>,
    pub conv2_b: Vec<f64>,
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture) -> Self {
        ModelParams {
            arch,
            conv1_w: vec![0.0; arch.conv1_w_len()],
            conv1_b: vec![0.0; arch.conv1.out_channels],
            conv2_w: vec![0.0; arch.conv2_w_len()],
            conv2_b: vec![0.0; arch.conv2.out_channels],
            out_w: vec![0.0; arch.out_w_len()],
            out_b: vec![0.0; arch.n_outputs],
        }
    }

    /// Parameter blocks in declaration (and file) order.
    pub fn blocks(&self) -> [&[f64]; 6] {
        [
            &self.conv1_w,
            &self.conv1_b,
            &self.conv2_w,
            &self.conv2_b,
            &self.out_w,
            &self.out_b,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.out_w,
            &mut self.out_b,
        ]
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.blocks().into_iter().flat_map(|b| b.iter())
    }

    pub fn len(&self) -> usize {
        self.arch.n_params()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view helper: the `idx`-th parameter in declaration order.
    pub fn get_mut(&mut self, mut idx: usize) -> &mut f64 {
        for block in self.blocks_mut() {
            if idx < block.len() {
                return &mut block[idx];
            }
            idx -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn shapes_match(&self) -> bool {
        let a = self.arch;
        self.conv1_w.len() == a.conv1_w_len()
            && self.conv1_b.len() == a.conv1.out_channels
            && self.conv2_w.len() == a.conv2_w_len()
            && self.conv2_b.len() == a.conv2.out_channels
            && self.out_w.len() == a.out_w_len()
            && self.out_b.len() == a.n_outputs
    }

    pub fn all_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    pub(crate) fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub(crate) fn fill_zero(&mut self) {
        for b in self.blocks_mut() {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Uniform in `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases of each layer.
pub fn init_params(arch: Architecture, seed: u64) -> ModelParams {
    let mut rng = stream_rng(seed, Stream::Init);
    let mut p = ModelParams::zeros(arch);
    let fan_ins = [
        arch.conv1.kernel,
        arch.conv1.out_channels * arch.conv2.kernel,
        arch.conv2.out_channels,
    ];
    let bounds = fan_ins.map(|f| 1.0 / (f as f64).sqrt());
    let layer_of_block = [0, 0, 1, 1, 2, 2];
    for (block, layer) in p.blocks_mut().into_iter().zip(layer_of_block) {
        let bound = bounds[layer];
        for v in block.iter_mut() {
            *v = rng.random_range(-bound..bound);
        }
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_shapes() {
        let a = Architecture::paper(3);
        assert_eq!(a.conv1.total_padding(), 18);
        assert_eq!(a.conv2.total_padding(), 16);
        assert_eq!(a.n_params(), 150 + 15 + 2250 + 30 + 90 + 3);
        assert!(ModelParams::zeros(a).shapes_match());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Architecture::paper(6);
        let p = init_params(a, 1);
        assert_eq!(p, init_params(a, 1));
        assert_ne!(p, init_params(a, 2));
        let b1 = 1.0 / 10f64.sqrt();
        let b2 = 1.0 / 75f64.sqrt();
        let b3 = 1.0 / 30f64.sqrt();
        assert!(p.conv1_w.iter().chain(&p.conv1_b).all(|v| v.abs() < b1));
        assert!(p.conv2_w.iter().chain(&p.conv2_b).all(|v| v.abs() < b2));
        assert!(p.out_w.iter().chain(&p.out_b).all(|v| v.abs() < b3));
        assert!(p.all_finite());
    }

    #[test]
    fn flat_indexing_covers_every_block() {
        let mut p = ModelParams::zeros(Architecture::paper(3));
        let n = p.len();
        for i in 0..n {
            *p.get_mut(i) = i as f64;
        }
        assert_eq!(
            p.iter().copied().collect::<Vec<_>>(),
            (0..n).map(|i| i as f64).collect::<Vec<_>>()
        );
    }
}

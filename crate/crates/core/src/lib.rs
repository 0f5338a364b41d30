//! Lyapunov spectra of the Lorenz and coupled Lorenz systems.

// Guards written as !(x > 0.0) also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {})", $tol);
    }};
}

pub mod cli;
pub mod cnn;
pub mod dynsys;
pub mod error;
pub mod fsutil;
pub mod integrate;
pub mod lyapunov;
pub mod pipeline;
pub mod rng;
pub mod sweep;

pub use error::{Error, Result};

use crate::error::{Error, Result};

pub const HUBER_DELTA: f64 = 0.6;

pub(crate) fn huber_value(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a <= delta {
        0.5 * e * e
    } else {
        delta * (a - 0.5 * delta)
    }
}

pub(crate) fn huber_grad(e: f64, delta: f64) -> f64 {
    e.clamp(-delta, delta)
}

/// Mean Huber loss over every element of `pred - target`.
pub fn huber_loss(pred: &[f64], target: &[f64], delta: f64) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::contract(format!(
            "huber_loss: {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::contract("huber_loss: delta must be positive"));
    }
    let sum: f64 = pred.iter().zip(target).map(|(p, t)| huber_value(p - t, delta)).sum();
    Ok(sum / pred.len() as f64)
}

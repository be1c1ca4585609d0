//! Parameter distributions and the Kullback-Leibler divergence between them.
//!
//! A parameter block is turned into a probability vector by smoothing the
//! absolute values: `q_i = (|x_i| + eps) / sum_j (|x_j| + eps)`.

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;

/// Smoothing added to every absolute parameter value.
pub const DISTRIBUTION_EPS: f64 = 1e-8;

const SUM_TOLERANCE: f64 = 1e-9;

pub fn param_distribution(block: &[f64]) -> Result<Vec<f64>> {
    if block.is_empty() {
        return Err(Error::invalid("cannot build a distribution from an empty block"));
    }
    if let Some(bad) = block.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite parameter {bad}")));
    }
    let total: f64 = block.iter().map(|x| x.abs() + DISTRIBUTION_EPS).sum();
    Ok(block.iter().map(|x| (x.abs() + DISTRIBUTION_EPS) / total).collect())
}

/// `sum_i P_i ln(P_i / Q_i)`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(format!("distributions differ in length: {} vs {}", p.len(), q.len())));
    }
    if p.is_empty() {
        return Err(Error::invalid("empty distributions"));
    }
    for (name, d) in [("P", p), ("Q", q)] {
        if let Some(v) = d.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(format!("{name} has a non-positive entry {v}")));
        }
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(format!("{name} sums to {s}, not 1")));
        }
    }
    Ok(kl_unchecked(p, q))
}

pub(crate) fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(p, q)| p * (p / q).ln()).sum()
}

/// KL divergence between the distributions of two whole models (all parameters flattened).
pub fn model_divergence(p_model: &ParamSet, q_model: &ParamSet) -> Result<f64> {
    p_model.check_same_dims(q_model.dims(), "model divergence")?;
    let p = param_distribution(&p_model.flat())?;
    let q = param_distribution(&q_model.flat())?;
    Ok(kl_unchecked(&p, &q))
}

/// KL divergence between the FC-head distributions of two models.
pub fn head_divergence(p_model: &ParamSet, q_model: &ParamSet) -> Result<f64> {
    p_model.check_same_dims(q_model.dims(), "head divergence")?;
    let p = param_distribution(p_model.fc_block())?;
    let q = param_distribution(q_model.fc_block())?;
    Ok(kl_unchecked(&p, &q))
}

/// Gradient of `KL(dist(x) || q)` with respect to the raw block `x`, where `q`
/// is held fixed. With `S = sum_j (|x_j| + eps)` and `p = dist(x)`:
///
/// `d/dx_k = sign(x_k) / S * (ln(p_k / q_k) - KL)`
///
/// The absolute value is not differentiable at zero; exactly-zero entries get
/// a zero subgradient. Returns the divergence alongside the gradient.
pub(crate) fn kl_gradient(block: &[f64], q: &[f64]) -> (f64, Vec<f64>) {
    let total: f64 = block.iter().map(|x| x.abs() + DISTRIBUTION_EPS).sum();
    let p: Vec<f64> = block.iter().map(|x| (x.abs() + DISTRIBUTION_EPS) / total).collect();
    let log_ratio: Vec<f64> = p.iter().zip(q).map(|(p, q)| (p / q).ln()).collect();
    let kl: f64 = p.iter().zip(&log_ratio).map(|(p, l)| p * l).sum();
    let grad = block
        .iter()
        .zip(&log_ratio)
        .map(|(x, l)| {
            let sign = if *x > 0.0 {
                1.0
            } else if *x < 0.0 {
                -1.0
            } else {
                0.0
            };
            sign / total * (l - kl)
        })
        .collect();
    (kl, grad)
}

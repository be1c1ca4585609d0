//! Central finite-difference check of [`backward`](crate::nn::backward).

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::nn::lstm::{backward, objective, TrainBatch};
use crate::nn::params::{Dims, ParamSet};
use crate::rng::{stream_rng, Stream};

/// Denominator floor for the relative error, so that parameters whose true
/// derivative is ~0 are judged on absolute error instead.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

/// Parameters of the FC head closer than this to zero are moved away from the
/// kink of `|x|` before checking; the objective is not differentiable there.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckSpec {
    pub dims: Dims,
    pub seq_len: usize,
    pub batch: usize,
    pub eps: f64,
    pub with_bias_target: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub instances: usize,
    pub parameters_checked: usize,
    pub max_relative_error: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Maximum relative error between the analytic gradient and central differences
/// over every parameter of one `(model, batch, bias_target)` instance.
pub fn check_instance(model: &ParamSet, batch: &TrainBatch, bias_target: Option<&ParamSet>, eps: f64) -> Result<f64> {
    let analytic = backward(model, batch, bias_target)?.flat();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let original = model.flat_get(i);
        *probe.get_mut(i).expect("index in range") = original + eps;
        let up = objective(&probe, batch, bias_target)?;
        *probe.get_mut(i).expect("index in range") = original - eps;
        let down = objective(&probe, batch, bias_target)?;
        *probe.get_mut(i).expect("index in range") = original;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(*a, numeric));
    }
    Ok(worst)
}

fn away_from_kink(mut model: ParamSet) -> ParamSet {
    for v in model.fc_mut() {
        if v.abs() < KINK_MARGIN {
            *v = if *v < 0.0 { -KINK_MARGIN } else { KINK_MARGIN };
        }
    }
    model
}

/// Checks `instances` random instances drawn from `seed`.
pub fn run(spec: GradCheckSpec, instances: usize, seed: u64) -> Result<GradCheckReport> {
    let mut rng = stream_rng(seed, Stream::Synth);
    let mut worst: f64 = 0.0;
    let dims = spec.dims;
    for _ in 0..instances {
        let model = away_from_kink(ParamSet::random_uniform(dims, 0.5, &mut rng));
        let target = away_from_kink(ParamSet::random_uniform(dims, 0.5, &mut rng));
        let inputs = (0..spec.batch * spec.seq_len * dims.input).map(|_| rng.random_range(0.0..1.0)).collect();
        let targets = (0..spec.batch * dims.output).map(|_| rng.random_range(0.0..1.0)).collect();
        let batch = TrainBatch::new(spec.seq_len, dims.input, dims.output, inputs, targets)?;
        let bias = spec.with_bias_target.then_some(&target);
        worst = worst.max(check_instance(&model, &batch, bias, spec.eps)?);
    }
    Ok(GradCheckReport { instances, parameters_checked: instances * dims.total_len(), max_relative_error: worst })
}

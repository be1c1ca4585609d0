//! Minibatch SGD over trajectory windows.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Window;
use crate::error::{Error, Result};
use crate::nn::{forward, loss_and_gradient, mse_loss, ParamSet, TrainBatch};

/// Coordinates per point, both as model input and as prediction target.
pub const POINT_DIM: usize = 2;

/// Extra terms of the local objective.
#[derive(Clone, Copy, Debug, Default)]
pub struct Objective<'a> {
    /// Proximal weight and anchor.
    pub proximal: Option<(f64, &'a ParamSet)>,
    /// Model whose head the local head is pulled toward through the KL term.
    pub bias_target: Option<&'a ParamSet>,
}

pub fn batch_from_windows<'a, I>(windows: I) -> Result<TrainBatch>
where
    I: IntoIterator<Item = &'a Window>,
{
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut seq_len = 0;
    for w in windows {
        if seq_len == 0 {
            seq_len = w.input.len();
        } else if w.input.len() != seq_len {
            return Err(Error::dim("windows in one batch must share a length"));
        }
        inputs.extend(w.input.iter().flatten());
        targets.extend(w.target);
    }
    if targets.is_empty() {
        return Err(Error::invalid("cannot build a batch from zero windows"));
    }
    TrainBatch::new(seq_len, POINT_DIM, POINT_DIM, inputs, targets)
}

/// Runs `epochs` passes over `windows` in shuffled minibatches of
/// `batch_size` (the last one may be smaller). Returns the trained model.
pub fn train_epochs<R: Rng + ?Sized>(
    init: &ParamSet,
    windows: &[Window],
    epochs: usize,
    eta: f64,
    batch_size: usize,
    objective: Objective<'_>,
    rng: &mut R,
) -> Result<ParamSet> {
    if windows.is_empty() {
        return Err(Error::InsufficientData("no usable windows to train on".into()));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    let mut model = init.clone();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    for _ in 0..epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch_size) {
            let batch = batch_from_windows(chunk.iter().map(|&i| &windows[i]))?;
            let (_, grads) = loss_and_gradient(&model, &batch, objective.bias_target)?;
            model = match objective.proximal {
                Some((mu, anchor)) => model.proximal_step(&grads, eta, mu, anchor)?,
                None => model.sgd_step(&grads, eta)?,
            };
            if !model.is_finite() {
                return Err(Error::Numeric { round: None, detail: "parameters became non-finite".into() });
            }
        }
    }
    Ok(model)
}

/// Mean squared error over all windows, evaluated in chunks.
pub fn evaluate_mse(model: &ParamSet, windows: &[Window]) -> Result<f64> {
    let (sum, count) = squared_error(model, windows, [1.0, 1.0])?;
    Ok(sum / count as f64)
}

/// Sum of squared errors after scaling each coordinate, and the number of scalar terms.
pub fn squared_error(model: &ParamSet, windows: &[Window], scale: [f64; 2]) -> Result<(f64, usize)> {
    const CHUNK: usize = 256;
    if windows.is_empty() {
        return Err(Error::InsufficientData("no windows to evaluate".into()));
    }
    let mut sum = 0.0;
    for chunk in windows.chunks(CHUNK) {
        let batch = batch_from_windows(chunk)?;
        let out = forward(model, &batch)?;
        for (i, (p, y)) in out.predictions.iter().zip(batch.targets()).enumerate() {
            let d = (p - y) * scale[i % POINT_DIM];
            sum += d * d;
        }
    }
    Ok((sum, windows.len() * POINT_DIM))
}

/// MSE of one explicit batch.
pub fn batch_mse(model: &ParamSet, batch: &TrainBatch) -> Result<f64> {
    mse_loss(&forward(model, batch)?.predictions, batch.targets())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_windows;
    use crate::nn::Dims;
    use crate::rng::{stream_rng, Stream};

    fn windows() -> Vec<Window> {
        let pts: Vec<[f64; 2]> =
            (0..60).map(|i| [(i as f64 * 0.3).sin() * 0.5, (i as f64 * 0.3).cos() * 0.5]).collect();
        make_windows(&pts, 4)
    }

    fn model() -> ParamSet {
        ParamSet::random_uniform(Dims::new(2, 6, 2).unwrap(), 0.3, &mut stream_rng(3, Stream::GlobalInit))
    }

    #[test]
    fn training_reduces_loss() {
        let w = windows();
        let m0 = model();
        let before = evaluate_mse(&m0, &w).unwrap();
        let m1 = train_epochs(&m0, &w, 30, 0.1, 8, Objective::default(), &mut stream_rng(1, Stream::Train(0))).unwrap();
        assert!(evaluate_mse(&m1, &w).unwrap() < 0.5 * before);
    }

    #[test]
    fn huge_proximal_weight_pins_to_anchor() {
        let w = windows();
        let m0 = model();
        let obj = Objective { proximal: Some((1e12, &m0)), bias_target: None };
        let m1 = train_epochs(&m0, &w, 2, 0.1, 8, obj, &mut stream_rng(1, Stream::Train(0))).unwrap();
        assert!(m1.max_abs_diff(&m0) < 1e-9);
    }

    #[test]
    fn zero_proximal_weight_matches_plain_sgd() {
        let w = windows();
        let m0 = model();
        let plain =
            train_epochs(&m0, &w, 1, 0.05, 5, Objective::default(), &mut stream_rng(2, Stream::Train(1))).unwrap();
        let obj = Objective { proximal: Some((0.0, &m0)), bias_target: None };
        let prox = train_epochs(&m0, &w, 1, 0.05, 5, obj, &mut stream_rng(2, Stream::Train(1))).unwrap();
        assert_eq!(plain, prox);
    }

    #[test]
    fn partial_last_batch_and_empty_input() {
        let w = windows();
        assert_ne!(w.len() % 5, 0);
        train_epochs(&model(), &w, 1, 0.01, 5, Objective::default(), &mut stream_rng(0, Stream::Train(0))).unwrap();
        assert!(train_epochs(&model(), &[], 1, 0.01, 8, Objective::default(), &mut stream_rng(0, Stream::Train(0)))
            .is_err());
    }

    #[test]
    fn chunked_mse_matches_single_batch() {
        let w = windows();
        let m = model();
        let direct = batch_mse(&m, &batch_from_windows(&w).unwrap()).unwrap();
        assert!((evaluate_mse(&m, &w).unwrap() - direct).abs() < 1e-14);
    }
}

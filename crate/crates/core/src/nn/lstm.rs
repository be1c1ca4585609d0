//! Single-layer LSTM with a fully connected head.
//!
//! For every step `t` with `z = [x_t; h_{t-1}]`:
//!
//! ```text
//! i = sigmoid(W_i z + b_i)    f = sigmoid(W_f z + b_f)
//! g = tanh(W_g z + b_g)       o = sigmoid(W_o z + b_o)
//! c_t = f * c_{t-1} + i * g   h_t = o * tanh(c_t)
//! ```
//!
//! The prediction is `h_S W_fc + b_fc` on the last hidden state, which is
//! also returned as the sequence embedding.

use crate::error::{Error, Result};
use crate::nn::kl::{kl_gradient, param_distribution};
use crate::nn::params::{Dims, GradientSet, ParamSet, GATES, GATE_CELL, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};

/// A minibatch of fixed-length sequences with one target vector per sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainBatch {
    batch: usize,
    seq_len: usize,
    input_dim: usize,
    output_dim: usize,
    /// `batch x seq_len x input_dim`, row-major.
    inputs: Vec<f64>,
    /// `batch x output_dim`, row-major.
    targets: Vec<f64>,
}

impl TrainBatch {
    pub fn new(
        seq_len: usize,
        input_dim: usize,
        output_dim: usize,
        inputs: Vec<f64>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        if seq_len == 0 || input_dim == 0 || output_dim == 0 {
            return Err(Error::dim("batch dimensions must be positive"));
        }
        if targets.is_empty() || !targets.len().is_multiple_of(output_dim) {
            return Err(Error::dim(format!("{} target values do not form rows of {output_dim}", targets.len())));
        }
        let batch = targets.len() / output_dim;
        if inputs.len() != batch * seq_len * input_dim {
            return Err(Error::dim(format!(
                "expected {} input values for {batch} sequences of {seq_len} x {input_dim}, got {}",
                batch * seq_len * input_dim,
                inputs.len()
            )));
        }
        Ok(TrainBatch { batch, seq_len, input_dim, output_dim, inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.batch
    }

    pub fn is_empty(&self) -> bool {
        self.batch == 0
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    fn sequence(&self, b: usize) -> &[f64] {
        let n = self.seq_len * self.input_dim;
        &self.inputs[b * n..(b + 1) * n]
    }

    fn check(&self, dims: Dims) -> Result<()> {
        if self.input_dim != dims.input || self.output_dim != dims.output {
            return Err(Error::dim(format!(
                "batch has {} inputs / {} outputs, model expects {} / {}",
                self.input_dim, self.output_dim, dims.input, dims.output
            )));
        }
        Ok(())
    }
}

/// Output of [`forward`]: `B x O` predictions and the `B x H` final hidden states.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub predictions: Vec<f64>,
    pub hidden: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations of one sequence, kept for backpropagation.
struct Trace {
    dims: Dims,
    steps: usize,
    /// `steps x concat`
    z: Vec<f64>,
    /// `steps x 4H`, post-activation gate values.
    gates: Vec<f64>,
    /// `(steps + 1) x H`, with `c[0] = 0`.
    cell: Vec<f64>,
    /// `steps x H`, `tanh(c_t)`.
    cell_tanh: Vec<f64>,
    /// `H`, final hidden state.
    last_hidden: Vec<f64>,
}

impl Trace {
    fn new(dims: Dims, steps: usize) -> Self {
        let h = dims.hidden;
        Trace {
            dims,
            steps,
            z: vec![0.0; steps * dims.concat()],
            gates: vec![0.0; steps * GATES * h],
            cell: vec![0.0; (steps + 1) * h],
            cell_tanh: vec![0.0; steps * h],
            last_hidden: vec![0.0; h],
        }
    }

    /// Runs the recurrence over `seq` (`steps x input`) and fills the trace.
    fn run(&mut self, lstm: &[f64], seq: &[f64]) {
        let d = self.dims;
        let (ni, nh, nc) = (d.input, d.hidden, d.concat());
        let mut h_prev = vec![0.0; nh];
        for t in 0..self.steps {
            let z = &mut self.z[t * nc..(t + 1) * nc];
            z[..ni].copy_from_slice(&seq[t * ni..(t + 1) * ni]);
            z[ni..].copy_from_slice(&h_prev);
            let gates = &mut self.gates[t * GATES * nh..(t + 1) * GATES * nh];
            for g in 0..GATES {
                for r in 0..nh {
                    let w = &lstm[d.gate_weight(g, r)..d.gate_weight(g, r) + nc];
                    let a = lstm[d.gate_bias(g, r)] + dot(w, z);
                    gates[g * nh + r] = if g == GATE_CELL { a.tanh() } else { sigmoid(a) };
                }
            }
            let (c_prev, c_next) = self.cell.split_at_mut((t + 1) * nh);
            let c_prev = &c_prev[t * nh..];
            let c_next = &mut c_next[..nh];
            let tc = &mut self.cell_tanh[t * nh..(t + 1) * nh];
            for r in 0..nh {
                let i = gates[GATE_INPUT * nh + r];
                let f = gates[GATE_FORGET * nh + r];
                let gg = gates[GATE_CELL * nh + r];
                let o = gates[GATE_OUTPUT * nh + r];
                c_next[r] = f * c_prev[r] + i * gg;
                tc[r] = c_next[r].tanh();
                h_prev[r] = o * tc[r];
            }
        }
        self.last_hidden.copy_from_slice(&h_prev);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies an FC head to `B x H` embeddings, returning `B x O` predictions.
pub fn apply_head(dims: Dims, fc: &[f64], hidden: &[f64]) -> Result<Vec<f64>> {
    if fc.len() != dims.fc_len() {
        return Err(Error::dim(format!("fc head has {} values, expected {}", fc.len(), dims.fc_len())));
    }
    if !hidden.len().is_multiple_of(dims.hidden) {
        return Err(Error::dim("embedding rows do not match hidden size"));
    }
    let rows = hidden.len() / dims.hidden;
    let mut out = vec![0.0; rows * dims.output];
    for b in 0..rows {
        let h = &hidden[b * dims.hidden..(b + 1) * dims.hidden];
        for o in 0..dims.output {
            let mut acc = fc[dims.fc_bias(o)];
            for (k, hv) in h.iter().enumerate() {
                acc += hv * fc[dims.fc_weight(k, o)];
            }
            out[b * dims.output + o] = acc;
        }
    }
    Ok(out)
}

/// Final hidden state of every sequence in the batch (`B x H`).
pub fn embed(model: &ParamSet, batch: &TrainBatch) -> Result<Vec<f64>> {
    let dims = model.dims();
    batch.check(dims)?;
    let mut trace = Trace::new(dims, batch.seq_len);
    let mut hidden = Vec::with_capacity(batch.batch * dims.hidden);
    for b in 0..batch.batch {
        trace.run(model.lstm_block(), batch.sequence(b));
        hidden.extend_from_slice(&trace.last_hidden);
    }
    Ok(hidden)
}

pub fn forward(model: &ParamSet, batch: &TrainBatch) -> Result<ForwardOutput> {
    let hidden = embed(model, batch)?;
    let predictions = apply_head(model.dims(), model.fc_block(), &hidden)?;
    Ok(ForwardOutput { predictions, hidden })
}

/// Mean of the squared errors over all `B * O` components.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::dim(format!("{} predictions vs {} targets", predictions.len(), targets.len())));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("mse of an empty batch"));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok(sse / predictions.len() as f64)
}

/// Objective value and gradient: MSE on the batch, plus `KL(dist(fc) || dist(target fc))`
/// when a bias target is given.
pub fn loss_and_gradient(
    model: &ParamSet,
    batch: &TrainBatch,
    bias_target: Option<&ParamSet>,
) -> Result<(f64, GradientSet)> {
    let dims = model.dims();
    batch.check(dims)?;
    if let Some(target) = bias_target {
        model.check_same_dims(target.dims(), "bias target")?;
    }
    let (nh, nc, no) = (dims.hidden, dims.concat(), dims.output);
    let lstm = model.lstm_block();
    let fc = model.fc_block();
    let mut grads = GradientSet::zeros(dims);
    let scale = 2.0 / (batch.batch * no) as f64;
    let mut sse = 0.0;

    let mut trace = Trace::new(dims, batch.seq_len);
    let mut dh = vec![0.0; nh];
    let mut dc = vec![0.0; nh];
    let mut da = vec![0.0; GATES * nh];
    let mut dz = vec![0.0; nc];
    let mut dpred = vec![0.0; no];

    for b in 0..batch.batch {
        trace.run(lstm, batch.sequence(b));
        let target = &batch.targets[b * no..(b + 1) * no];
        for o in 0..no {
            let mut pred = fc[dims.fc_bias(o)];
            for k in 0..nh {
                pred += trace.last_hidden[k] * fc[dims.fc_weight(k, o)];
            }
            let err = pred - target[o];
            sse += err * err;
            dpred[o] = scale * err;
        }
        // Head.
        for o in 0..no {
            grads.fc[dims.fc_bias(o)] += dpred[o];
        }
        for k in 0..nh {
            let mut acc = 0.0;
            for o in 0..no {
                grads.fc[dims.fc_weight(k, o)] += trace.last_hidden[k] * dpred[o];
                acc += fc[dims.fc_weight(k, o)] * dpred[o];
            }
            dh[k] = acc;
        }
        dc.iter_mut().for_each(|v| *v = 0.0);

        // Through time.
        for t in (0..batch.seq_len).rev() {
            let gates = &trace.gates[t * GATES * nh..(t + 1) * GATES * nh];
            let c_prev = &trace.cell[t * nh..(t + 1) * nh];
            let tc = &trace.cell_tanh[t * nh..(t + 1) * nh];
            for r in 0..nh {
                let i = gates[GATE_INPUT * nh + r];
                let f = gates[GATE_FORGET * nh + r];
                let g = gates[GATE_CELL * nh + r];
                let o = gates[GATE_OUTPUT * nh + r];
                let d_o = dh[r] * tc[r];
                let dcr = dc[r] + dh[r] * o * (1.0 - tc[r] * tc[r]);
                let d_i = dcr * g;
                let d_g = dcr * i;
                let d_f = dcr * c_prev[r];
                da[GATE_INPUT * nh + r] = d_i * i * (1.0 - i);
                da[GATE_FORGET * nh + r] = d_f * f * (1.0 - f);
                da[GATE_CELL * nh + r] = d_g * (1.0 - g * g);
                da[GATE_OUTPUT * nh + r] = d_o * o * (1.0 - o);
                dc[r] = dcr * f;
            }
            let z = &trace.z[t * nc..(t + 1) * nc];
            dz.iter_mut().for_each(|v| *v = 0.0);
            for g in 0..GATES {
                for r in 0..nh {
                    let a = da[g * nh + r];
                    if a == 0.0 {
                        continue;
                    }
                    let w0 = dims.gate_weight(g, r);
                    grads.lstm[dims.gate_bias(g, r)] += a;
                    let gw = &mut grads.lstm[w0..w0 + nc];
                    for (gw, zv) in gw.iter_mut().zip(z) {
                        *gw += a * zv;
                    }
                    let w = &lstm[w0..w0 + nc];
                    for (dzv, wv) in dz.iter_mut().zip(w) {
                        *dzv += a * wv;
                    }
                }
            }
            dh.copy_from_slice(&dz[dims.input..]);
        }
    }

    let mut loss = sse / (batch.batch * no) as f64;
    if let Some(target) = bias_target {
        let q = param_distribution(target.fc_block())?;
        let (kl, g) = kl_gradient(fc, &q);
        loss += kl;
        for (acc, v) in grads.fc.iter_mut().zip(g) {
            *acc += v;
        }
    }
    if !loss.is_finite() || !grads.is_finite() {
        return Err(Error::Numeric {
            round: None,
            detail: "non-finite loss or gradient during backpropagation".into(),
        });
    }
    Ok((loss, grads))
}

/// Gradient of the training objective with respect to every parameter.
pub fn backward(model: &ParamSet, batch: &TrainBatch, bias_target: Option<&ParamSet>) -> Result<GradientSet> {
    loss_and_gradient(model, batch, bias_target).map(|(_, g)| g)
}

/// Objective value only (MSE plus optional FC-head KL term).
pub fn objective(model: &ParamSet, batch: &TrainBatch, bias_target: Option<&ParamSet>) -> Result<f64> {
    let out = forward(model, batch)?;
    let mut loss = mse_loss(&out.predictions, &batch.targets)?;
    if let Some(target) = bias_target {
        loss += crate::nn::kl::head_divergence(model, target)?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use rand::Rng;

    fn random_batch(dims: Dims, b: usize, s: usize, seed: u64) -> TrainBatch {
        let mut rng = stream_rng(seed, Stream::Synth);
        let inputs = (0..b * s * dims.input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let targets = (0..b * dims.output).map(|_| rng.random_range(-1.0..1.0)).collect();
        TrainBatch::new(s, dims.input, dims.output, inputs, targets).unwrap()
    }

    #[test]
    fn zero_model_predicts_zero() {
        let dims = Dims::new(2, 4, 2).unwrap();
        let out = forward(&ParamSet::zeros(dims), &random_batch(dims, 3, 5, 1)).unwrap();
        assert!(out.predictions.iter().all(|v| *v == 0.0));
        assert!(out.hidden.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_sequences_give_identical_rows() {
        let dims = Dims::new(2, 5, 2).unwrap();
        let model = ParamSet::random_uniform(dims, 0.5, &mut stream_rng(3, Stream::GlobalInit));
        let seq: Vec<f64> = (0..12).map(|i| i as f64 * 0.1).collect();
        let inputs = [seq.clone(), seq].concat();
        let batch = TrainBatch::new(6, 2, 2, inputs, vec![0.0; 4]).unwrap();
        let out = forward(&model, &batch).unwrap();
        assert_eq!(out.predictions[0..2], out.predictions[2..4]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let dims = Dims::new(2, 4, 2).unwrap();
        let other = Dims::new(3, 4, 2).unwrap();
        assert!(matches!(forward(&ParamSet::zeros(dims), &random_batch(other, 2, 3, 1)), Err(Error::Dimension(_))));
        assert!(TrainBatch::new(3, 2, 2, vec![0.0; 5], vec![0.0; 2]).is_err());
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mse_loss(&[1.0, 1.0, 3.0, 1.0], &[0.0; 4]).unwrap(), 3.0);
        assert!(mse_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_error_batch_has_zero_data_gradient() {
        let dims = Dims::new(2, 4, 2).unwrap();
        let model = ParamSet::random_uniform(dims, 0.3, &mut stream_rng(5, Stream::GlobalInit));
        let batch = random_batch(dims, 3, 4, 2);
        let preds = forward(&model, &batch).unwrap().predictions;
        let exact = TrainBatch::new(4, 2, 2, batch.inputs().to_vec(), preds).unwrap();
        let g = backward(&model, &exact, None).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn self_bias_target_adds_nothing() {
        let dims = Dims::new(2, 4, 2).unwrap();
        let model = ParamSet::random_uniform(dims, 0.3, &mut stream_rng(6, Stream::GlobalInit));
        let batch = random_batch(dims, 3, 4, 3);
        let plain = backward(&model, &batch, None).unwrap();
        let biased = backward(&model, &batch, Some(&model)).unwrap();
        let diff = plain.iter().zip(biased.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn objective_matches_loss_and_gradient() {
        let dims = Dims::new(2, 3, 2).unwrap();
        let mut rng = stream_rng(9, Stream::GlobalInit);
        let model = ParamSet::random_uniform(dims, 0.3, &mut rng);
        let target = ParamSet::random_uniform(dims, 0.3, &mut rng);
        let batch = random_batch(dims, 2, 3, 4);
        let (l, _) = loss_and_gradient(&model, &batch, Some(&target)).unwrap();
        let o = objective(&model, &batch, Some(&target)).unwrap();
        assert!((l - o).abs() < 1e-14);
    }
}

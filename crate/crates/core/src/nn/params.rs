use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the sequence model: input features, hidden units, outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

/// Gate order inside the LSTM block.
pub(crate) const GATES: usize = 4;
pub(crate) const GATE_INPUT: usize = 0;
pub(crate) const GATE_FORGET: usize = 1;
pub(crate) const GATE_CELL: usize = 2;
pub(crate) const GATE_OUTPUT: usize = 3;

impl Dims {
    pub fn new(input: usize, hidden: usize, output: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::dim(format!(
                "all model dimensions must be positive, got ({input}, {hidden}, {output})"
            )));
        }
        Ok(Dims { input, hidden, output })
    }

    /// Width of the concatenated `[x_t; h_{t-1}]` vector.
    pub fn concat(&self) -> usize {
        self.input + self.hidden
    }

    /// Parameters of a single gate: `hidden x (input + hidden)` weights plus `hidden` biases.
    pub fn gate_len(&self) -> usize {
        self.concat() * self.hidden + self.hidden
    }

    pub fn lstm_len(&self) -> usize {
        GATES * self.gate_len()
    }

    pub fn fc_len(&self) -> usize {
        self.hidden * self.output + self.output
    }

    pub fn total_len(&self) -> usize {
        self.lstm_len() + self.fc_len()
    }

    // Offsets into the LSTM block.
    #[inline]
    pub(crate) fn gate_weight(&self, gate: usize, row: usize) -> usize {
        gate * self.gate_len() + row * self.concat()
    }

    #[inline]
    pub(crate) fn gate_bias(&self, gate: usize, row: usize) -> usize {
        gate * self.gate_len() + self.hidden * self.concat() + row
    }

    // Offsets into the FC block: weights stored hidden-major (`H x O`), bias last.
    #[inline]
    pub(crate) fn fc_weight(&self, h: usize, o: usize) -> usize {
        h * self.output + o
    }

    #[inline]
    pub(crate) fn fc_bias(&self, o: usize) -> usize {
        self.hidden * self.output + o
    }
}

/// All parameters of one model, split into the recurrent block and the FC head.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    dims: Dims,
    lstm: Vec<f64>,
    fc: Vec<f64>,
}

/// One partial derivative per parameter of a [`ParamSet`] with the same dims.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    dims: Dims,
    pub(crate) lstm: Vec<f64>,
    pub(crate) fc: Vec<f64>,
}

impl ParamSet {
    pub fn zeros(dims: Dims) -> Self {
        ParamSet { dims, lstm: vec![0.0; dims.lstm_len()], fc: vec![0.0; dims.fc_len()] }
    }

    /// Every parameter drawn independently from `uniform(-scale, scale)`.
    pub fn random_uniform<R: Rng + ?Sized>(dims: Dims, scale: f64, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-scale..=scale)).collect() };
        let lstm = draw(dims.lstm_len());
        let fc = draw(dims.fc_len());
        ParamSet { dims, lstm, fc }
    }

    pub fn from_blocks(dims: Dims, lstm: Vec<f64>, fc: Vec<f64>) -> Result<Self> {
        if lstm.len() != dims.lstm_len() {
            return Err(Error::dim(format!("lstm block has {} values, dims require {}", lstm.len(), dims.lstm_len())));
        }
        if fc.len() != dims.fc_len() {
            return Err(Error::dim(format!("fc block has {} values, dims require {}", fc.len(), dims.fc_len())));
        }
        Ok(ParamSet { dims, lstm, fc })
    }

    /// Rebuilds a model from its flattened form (LSTM block followed by FC block).
    pub fn from_flat(dims: Dims, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.total_len() {
            return Err(Error::dim(format!(
                "flat vector has {} values, dims require {}",
                flat.len(),
                dims.total_len()
            )));
        }
        let (lstm, fc) = flat.split_at(dims.lstm_len());
        Ok(ParamSet { dims, lstm: lstm.to_vec(), fc: fc.to_vec() })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn lstm_block(&self) -> &[f64] {
        &self.lstm
    }

    pub fn fc_block(&self) -> &[f64] {
        &self.fc
    }

    pub fn len(&self) -> usize {
        self.lstm.len() + self.fc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iterates over all parameters, LSTM block first.
    pub fn iter(&self) -> impl Iterator<Item = &f64> + '_ {
        self.lstm.iter().chain(self.fc.iter())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Copy of the FC head.
    pub fn fc_extract(&self) -> Vec<f64> {
        self.fc.clone()
    }

    /// Same model with its FC head replaced by `fc`; the LSTM block is untouched.
    pub fn fc_inject(&self, fc: &[f64]) -> Result<ParamSet> {
        if fc.len() != self.dims.fc_len() {
            return Err(Error::dim(format!("fc head has {} values, model expects {}", fc.len(), self.dims.fc_len())));
        }
        Ok(ParamSet { dims: self.dims, lstm: self.lstm.clone(), fc: fc.to_vec() })
    }

    pub(crate) fn check_same_dims(&self, other_dims: Dims, what: &str) -> Result<()> {
        if self.dims != other_dims {
            return Err(Error::dim(format!("{what}: dims {:?} do not match model dims {:?}", other_dims, self.dims)));
        }
        Ok(())
    }

    /// Plain gradient step: every parameter decremented by `eta * grad`.
    pub fn sgd_step(&self, grads: &GradientSet, eta: f64) -> Result<ParamSet> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {eta}")));
        }
        self.check_same_dims(grads.dims, "gradient")?;
        let step = |p: &[f64], g: &[f64]| -> Vec<f64> { p.iter().zip(g).map(|(p, g)| p - eta * g).collect() };
        Ok(ParamSet { dims: self.dims, lstm: step(&self.lstm, &grads.lstm), fc: step(&self.fc, &grads.fc) })
    }

    /// Gradient step with an implicit proximal pull toward `anchor`:
    /// minimizes the linearized loss plus `(mu/2)|w - anchor|^2` exactly, which
    /// stays stable for any `mu`.
    pub fn proximal_step(&self, grads: &GradientSet, eta: f64, mu: f64, anchor: &ParamSet) -> Result<ParamSet> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::invalid(format!("learning rate must be positive, got {eta}")));
        }
        if !(mu >= 0.0) {
            return Err(Error::invalid(format!("proximal weight must be non-negative, got {mu}")));
        }
        self.check_same_dims(grads.dims, "gradient")?;
        self.check_same_dims(anchor.dims, "proximal anchor")?;
        let denom = 1.0 + eta * mu;
        let step = |p: &[f64], g: &[f64], a: &[f64]| -> Vec<f64> {
            p.iter().zip(g).zip(a).map(|((p, g), a)| (p - eta * g + eta * mu * a) / denom).collect()
        };
        Ok(ParamSet {
            dims: self.dims,
            lstm: step(&self.lstm, &grads.lstm, &anchor.lstm),
            fc: step(&self.fc, &grads.fc, &anchor.fc),
        })
    }

    /// Unweighted element-wise mean. Models are summed in the given order.
    pub fn mean<'a, I>(models: I) -> Result<ParamSet>
    where
        I: IntoIterator<Item = &'a ParamSet>,
    {
        Self::weighted_mean(models.into_iter().map(|m| (m, 1.0)))
    }

    /// Element-wise mean with non-negative weights.
    pub fn weighted_mean<'a, I>(models: I) -> Result<ParamSet>
    where
        I: IntoIterator<Item = (&'a ParamSet, f64)>,
    {
        let mut iter = models.into_iter();
        let (first, w0) = iter.next().ok_or_else(|| Error::invalid("cannot average an empty set of models"))?;
        let dims = first.dims;
        let mut lstm: Vec<f64> = first.lstm.iter().map(|v| v * w0).collect();
        let mut fc: Vec<f64> = first.fc.iter().map(|v| v * w0).collect();
        let mut total = w0;
        for (m, w) in iter {
            m.check_same_dims(dims, "aggregation")?;
            for (acc, v) in lstm.iter_mut().zip(&m.lstm) {
                *acc += w * v;
            }
            for (acc, v) in fc.iter_mut().zip(&m.fc) {
                *acc += w * v;
            }
            total += w;
        }
        if !(total > 0.0) {
            return Err(Error::invalid("aggregation weights sum to zero"));
        }
        lstm.iter_mut().for_each(|v| *v /= total);
        fc.iter_mut().for_each(|v| *v /= total);
        Ok(ParamSet { dims, lstm, fc })
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.iter().zip(other.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub(crate) fn fc_mut(&mut self) -> &mut [f64] {
        &mut self.fc
    }

    /// Parameter at flat index `i` (LSTM block first). Panics when out of range.
    pub fn flat_get(&self, i: usize) -> f64 {
        let n = self.lstm.len();
        if i < n {
            self.lstm[i]
        } else {
            self.fc[i - n]
        }
    }

    /// Mutable access to the parameter at flat index `i`.
    pub fn get_mut(&mut self, i: usize) -> Option<&mut f64> {
        let n = self.lstm.len();
        if i < n {
            self.lstm.get_mut(i)
        } else {
            self.fc.get_mut(i - n)
        }
    }
}

impl GradientSet {
    pub fn zeros(dims: Dims) -> Self {
        GradientSet { dims, lstm: vec![0.0; dims.lstm_len()], fc: vec![0.0; dims.fc_len()] }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn lstm_block(&self) -> &[f64] {
        &self.lstm
    }

    pub fn fc_block(&self) -> &[f64] {
        &self.fc
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> + '_ {
        self.lstm.iter().chain(self.fc.iter())
    }

    pub fn flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Builds a gradient from raw blocks; used by tests and foreign callers.
    pub fn from_blocks(dims: Dims, lstm: Vec<f64>, fc: Vec<f64>) -> Result<Self> {
        let p = ParamSet::from_blocks(dims, lstm, fc)?;
        Ok(GradientSet { dims, lstm: p.lstm, fc: p.fc })
    }
}

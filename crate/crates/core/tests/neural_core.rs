#![allow(clippy::needless_range_loop)]

use fedsim::nn::gradcheck::{self, GradCheckSpec};
use fedsim::nn::{forward, kl_divergence, param_distribution, Dims, ParamSet, TrainBatch};
use fedsim::rng::{stream_rng, Stream};
use proptest::prelude::*;
use rand::Rng;

/// Step-by-step scalar LSTM written directly from the cell equations, reading
/// parameters by their documented layout: gates (input, forget, cell, output),
/// each `H` rows of `I + H` weights followed by `H` biases; then the head as
/// `H x O` weights (hidden-major) followed by `O` biases.
fn scalar_reference(model: &ParamSet, seq: &[Vec<f64>]) -> Vec<f64> {
    let d = model.dims();
    let (ni, nh, no) = (d.input, d.hidden, d.output);
    let p = model.lstm_block();
    let fc = model.fc_block();
    let gate_size = (ni + nh) * nh + nh;
    let w = |gate: usize, row: usize, col: usize| p[gate * gate_size + row * (ni + nh) + col];
    let b = |gate: usize, row: usize| p[gate * gate_size + (ni + nh) * nh + row];
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());

    let mut h = vec![0.0; nh];
    let mut c = vec![0.0; nh];
    for x in seq {
        let mut h_new = vec![0.0; nh];
        let mut c_new = vec![0.0; nh];
        for r in 0..nh {
            let pre = |gate: usize| {
                let mut a = b(gate, r);
                for k in 0..ni {
                    a += w(gate, r, k) * x[k];
                }
                for k in 0..nh {
                    a += w(gate, r, ni + k) * h[k];
                }
                a
            };
            let i = sig(pre(0));
            let f = sig(pre(1));
            let g = pre(2).tanh();
            let o = sig(pre(3));
            c_new[r] = f * c[r] + i * g;
            h_new[r] = o * c_new[r].tanh();
        }
        h = h_new;
        c = c_new;
    }
    (0..no)
        .map(|o| {
            let mut y = fc[nh * no + o];
            for k in 0..nh {
                y += h[k] * fc[k * no + o];
            }
            y
        })
        .collect()
}

#[test]
fn forward_matches_scalar_reference() {
    let mut rng = stream_rng(11, Stream::Synth);
    for (ni, nh, no, s, b) in [(2, 5, 2, 6, 3), (3, 8, 1, 4, 2), (1, 3, 4, 7, 1)] {
        let dims = Dims::new(ni, nh, no).unwrap();
        let model = ParamSet::random_uniform(dims, 0.6, &mut rng);
        let seqs: Vec<Vec<Vec<f64>>> =
            (0..b).map(|_| (0..s).map(|_| (0..ni).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()).collect();
        let inputs: Vec<f64> = seqs.iter().flatten().flatten().copied().collect();
        let batch = TrainBatch::new(s, ni, no, inputs, vec![0.0; b * no]).unwrap();
        let out = forward(&model, &batch).unwrap();
        for (row, seq) in seqs.iter().enumerate() {
            let expected = scalar_reference(&model, seq);
            for o in 0..no {
                let got = out.predictions[row * no + o];
                assert!((got - expected[o]).abs() < 1e-10, "row {row} out {o}: {got} vs {}", expected[o]);
            }
        }
    }
}

#[test]
fn forward_is_bit_identical_across_calls() {
    let dims = Dims::new(2, 6, 2).unwrap();
    let mut rng = stream_rng(4, Stream::Synth);
    let model = ParamSet::random_uniform(dims, 0.08, &mut rng);
    let inputs = (0..2 * 6 * 2).map(|_| rng.random_range(0.0..1.0)).collect();
    let batch = TrainBatch::new(6, 2, 2, inputs, vec![0.0; 4]).unwrap();
    assert_eq!(forward(&model, &batch).unwrap(), forward(&model, &batch).unwrap());
}

#[test]
fn gradients_match_finite_differences() {
    for (h, s) in [(3, 2), (5, 3), (8, 4)] {
        let spec = GradCheckSpec {
            dims: Dims::new(2, h, 2).unwrap(),
            seq_len: s,
            batch: 3,
            eps: 1e-5,
            with_bias_target: true,
        };
        let report = gradcheck::run(spec, 7, 100 + h as u64).unwrap();
        assert!(report.max_relative_error < 1e-4, "H={h} S={s}: {}", report.max_relative_error);
        let plain = gradcheck::run(GradCheckSpec { with_bias_target: false, ..spec }, 7, 200 + h as u64).unwrap();
        assert!(plain.max_relative_error < 1e-4);
    }
}

#[test]
fn head_injection_zeroes_predictions() {
    let dims = Dims::new(2, 4, 2).unwrap();
    let mut rng = stream_rng(8, Stream::Synth);
    let model = ParamSet::random_uniform(dims, 0.5, &mut rng);
    let zeroed = model.fc_inject(&vec![0.0; dims.fc_len()]).unwrap();
    let inputs = (0..3 * 5 * 2).map(|_| rng.random_range(0.0..1.0)).collect();
    let batch = TrainBatch::new(5, 2, 2, inputs, vec![0.0; 6]).unwrap();
    assert!(forward(&zeroed, &batch).unwrap().predictions.iter().all(|v| *v == 0.0));
}

fn finite_block() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..64)
}

proptest! {
    #[test]
    fn distribution_is_normalized(block in finite_block()) {
        let d = param_distribution(&block).unwrap();
        let s: f64 = d.iter().sum();
        prop_assert!((s - 1.0).abs() <= 1e-12);
        prop_assert!(d.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn gibbs_inequality(a in finite_block(), seed in any::<u64>()) {
        let mut rng = stream_rng(seed, Stream::Synth);
        let b: Vec<f64> = a.iter().map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = param_distribution(&a).unwrap();
        let q = param_distribution(&b).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-15);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn inject_extract_is_identity(seed in any::<u64>(), h in 1usize..6, o in 1usize..4) {
        let dims = Dims::new(2, h, o).unwrap();
        let mut rng = stream_rng(seed, Stream::Synth);
        let m = ParamSet::random_uniform(dims, 0.08, &mut rng);
        let other = ParamSet::random_uniform(dims, 0.08, &mut rng);
        let moved = m.fc_inject(&other.fc_extract()).unwrap();
        prop_assert_eq!(moved.lstm_block(), m.lstm_block());
        prop_assert_eq!(moved.fc_block(), other.fc_block());
        prop_assert_eq!(m.fc_inject(&m.fc_extract()).unwrap(), m);
    }
}

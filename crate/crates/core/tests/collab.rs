use fedsim::collab::{decentralized_round, evaluate_candidates, sample_eval_batch, CollabStatus};
use fedsim::connectivity::build_neighbor_graph;
use fedsim::data::SynthKind;
use fedsim::nn::{head_divergence, ParamSet};
use fedsim::rng::{stream_rng, Stream};
use fedsim::sim::{prepare_population, DataSource, ExperimentConfig, Population};
use fedsim::train::batch_mse;
use proptest::prelude::*;

fn config() -> ExperimentConfig {
    ExperimentConfig {
        dataset: DataSource::Synthetic { kind: SynthKind::RandomWalk, n_vehicles: None, points_each: 120 },
        clients: 6,
        hidden: 6,
        seq_len: 4,
        batch_size: 8,
        ..ExperimentConfig::default()
    }
}

fn population(seed: u64) -> Population {
    let cfg = ExperimentConfig { seed, ..config() };
    let dims = fedsim::sim::engine::model_dims(&cfg).unwrap();
    prepare_population(&cfg, |id| {
        ParamSet::random_uniform(dims, 0.3, &mut stream_rng(seed + id as u64, Stream::GlobalInit))
    })
    .unwrap()
}

#[test]
fn only_offline_clients_change() {
    let mut pop = population(1);
    let before: Vec<ParamSet> = pop.clients.iter().map(|c| c.model.clone()).collect();
    let positions: Vec<[f64; 2]> = pop.clients.iter().map(|c| c.link.last_position).collect();
    let graph = build_neighbor_graph(&positions, 3).unwrap();
    let offline = [1, 4];
    let records = decentralized_round(&mut pop.clients, &offline, &graph, 1, 0.2, 8).unwrap();
    assert_eq!(records.iter().map(|r| r.client).collect::<Vec<_>>(), offline);
    let fc_len = before[0].dims().fc_len();
    for r in &records {
        assert_eq!(r.status, CollabStatus::Refreshed);
        assert_eq!(r.payload, 3 * fc_len);
        let src = r.source.unwrap();
        assert!(src == r.client || graph.of(r.client).iter().any(|n| n.0 == src));
        let cache = pop.clients[r.client].cache.as_ref().unwrap();
        assert_eq!(cache.source_id, src);
        // The cached model keeps the client's own LSTM block.
        assert_eq!(cache.model.lstm_block(), pop.clients[r.client].model.lstm_block());
    }
    for (i, c) in pop.clients.iter().enumerate() {
        if offline.contains(&i) {
            assert_ne!(c.model, before[i]);
        } else {
            assert_eq!(c.model, before[i]);
            assert!(c.cache.is_none());
        }
    }
}

#[test]
fn round_is_reproducible() {
    let run = || {
        let mut pop = population(2);
        let positions: Vec<[f64; 2]> = pop.clients.iter().map(|c| c.link.last_position).collect();
        let graph = build_neighbor_graph(&positions, 2).unwrap();
        let rec = decentralized_round(&mut pop.clients, &[0, 2, 3, 5], &graph, 2, 0.3, 8).unwrap();
        (rec, pop.clients.into_iter().map(|c| c.model).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn unknown_offline_client_is_an_error() {
    let mut pop = population(3);
    let positions: Vec<[f64; 2]> = pop.clients.iter().map(|c| c.link.last_position).collect();
    let graph = build_neighbor_graph(&positions, 2).unwrap();
    assert!(decentralized_round(&mut pop.clients, &[99], &graph, 1, 0.1, 8).is_err());
    assert!(decentralized_round(&mut pop.clients, &[], &graph, 1, 0.1, 8).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chosen_head_minimizes_batch_loss(seed in 0u64..1000, n_neighbors in 0usize..5) {
        let pop = population(seed % 7);
        let own = &pop.clients[0];
        let heads: Vec<Vec<f64>> = (0..n_neighbors)
            .map(|i| ParamSet::random_uniform(own.model.dims(), 0.5, &mut stream_rng(seed, Stream::Eval(i))).fc_extract())
            .collect();
        let neighbor_heads: Vec<(usize, &[f64])> = heads.iter().enumerate().map(|(i, h)| (i + 1, h.as_slice())).collect();
        let batch = sample_eval_batch(own.windows(), 8, &mut stream_rng(seed, Stream::Eval(0))).unwrap().unwrap();
        let eval = evaluate_candidates(&own.model, 0, &neighbor_heads, &batch).unwrap();
        // Oracle: full forward pass with each head swapped in.
        let mut best = (0, batch_mse(&own.model, &batch).unwrap());
        for &(id, h) in &neighbor_heads {
            let loss = batch_mse(&own.model.fc_inject(h).unwrap(), &batch).unwrap();
            if loss < best.1 {
                best = (id, loss);
            }
        }
        prop_assert_eq!(eval.cache.source_id, best.0);
        prop_assert!((eval.cache.chosen_loss - best.1).abs() < 1e-12);
        if best.0 == 0 {
            prop_assert_eq!(head_divergence(&eval.cache.model, &own.model).unwrap(), 0.0);
        }
    }
}

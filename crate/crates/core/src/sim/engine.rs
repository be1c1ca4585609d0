//! The round loop.

use rayon::prelude::*;

use crate::collab::{decentralized_round, recovered_update, CollabStatus};
use crate::connectivity::{
    build_neighbor_graph, charge_upload, participation, start_round, step_connectivity, LinkState,
};
use crate::data::Window;
use crate::error::{Error, Result};
use crate::nn::{model_divergence, Dims, ParamSet};
use crate::ranking::{
    decay_compensators, rank_round, select_top_k, select_uniform, select_weighted, CompensatorState, RankInput,
};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::sim::client::{prepare_population, ClientState, Population, Provenance};
use crate::sim::config::{ExperimentConfig, RmseUnits, Selection, Variant};
use crate::sim::log::{Event, RoundLog};
use crate::train::{squared_error, train_epochs, Objective, POINT_DIM};

/// Result of one simulated run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub variant: String,
    pub logs: Vec<RoundLog>,
    pub global: ParamSet,
    /// Uploads per client over the run.
    pub uploads: Vec<u32>,
    /// Set when the run stopped early on a numeric failure.
    pub aborted: Option<String>,
}

impl RunOutcome {
    pub fn final_rmse(&self) -> Option<f64> {
        self.logs.last().map(|l| l.global_rmse)
    }

    /// Mean per-client test RMSE of the last evaluated round.
    pub fn final_client_rmse(&self) -> Option<f64> {
        self.logs.iter().rev().find_map(RoundLog::mean_client_rmse)
    }
}

pub fn model_dims(config: &ExperimentConfig) -> Result<Dims> {
    Dims::new(POINT_DIM, config.hidden, POINT_DIM)
}

pub fn initial_model(config: &ExperimentConfig) -> Result<ParamSet> {
    let mut rng = stream_rng(config.seed, Stream::GlobalInit);
    Ok(ParamSet::random_uniform(model_dims(config)?, config.init_scale, &mut rng))
}

/// `sqrt(sum of squared component errors / number of components)`.
pub fn evaluate_rmse(model: &ParamSet, windows: &[Window], scale: [f64; 2]) -> Result<f64> {
    let (sum, n) = squared_error(model, windows, scale)?;
    Ok((sum / n as f64).sqrt())
}

/// Mean of the given models; weights are used only when `by_weight` is set.
/// Models are summed in ascending client order.
pub fn aggregate(models: &[(usize, &ParamSet, f64)], by_weight: bool) -> Result<ParamSet> {
    let mut sorted: Vec<&(usize, &ParamSet, f64)> = models.iter().collect();
    sorted.sort_by_key(|m| m.0);
    ParamSet::weighted_mean(sorted.into_iter().map(|&(_, m, w)| (m, if by_weight { w } else { 1.0 })))
}

enum LocalResult {
    Trained { kl: f64 },
    Skipped,
    Diverged,
}

/// Plain or proximal local training from `init`; returns the trained model
/// and its divergence from `reference`.
pub fn local_update(
    client: &mut ClientState,
    init: &ParamSet,
    reference: &ParamSet,
    epochs: usize,
    eta: f64,
    batch_size: usize,
    variant: Variant,
) -> Result<(ParamSet, f64)> {
    let objective = Objective { proximal: variant.proximal_mu().map(|mu| (mu, init)), bias_target: None };
    let model = train_epochs(init, &client.windows, epochs, eta, batch_size, objective, &mut client.train_rng)?;
    let kl = model_divergence(&model, reference)?;
    Ok((model, kl))
}

fn rmse_scale(config: &ExperimentConfig, pop: &Population) -> [f64; 2] {
    match config.rmse_units {
        RmseUnits::Normalized => [1.0, 1.0],
        RmseUnits::Degrees => pop.normalizer.scale(),
    }
}

fn evaluates_clients(config: &ExperimentConfig, round: usize) -> bool {
    round == config.rounds || (config.client_eval_interval > 0 && round.is_multiple_of(config.client_eval_interval))
}

fn client_rmse(clients: &[ClientState], scale: [f64; 2]) -> Result<Vec<(usize, f64)>> {
    clients
        .par_iter()
        .filter(|c| !c.holdout.is_empty())
        .map(|c| Ok((c.id, evaluate_rmse(&c.model, &c.holdout, scale)?)))
        .collect()
}

fn non_finite(round: usize, what: &str) -> Error {
    Error::Numeric { round: Some(round), detail: format!("{what} is not finite") }
}

/// Runs every round of the configured variant.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    if config.variant == Variant::LocalOnly {
        return run_local_only(config);
    }
    let variant = config.variant;
    let label = variant.label();
    let mut global = initial_model(config)?;
    let mut pop = prepare_population(config, |_| global.clone())?;
    let test = pop.test_windows();
    if test.is_empty() {
        return Err(Error::InsufficientData("no client has enough holdout points for a test window".into()));
    }
    let scale = rmse_scale(config, &pop);
    let n = pop.clients.len();
    let k = config.k();
    let mut link_rngs: Vec<SimRng> = (0..n).map(|i| stream_rng(config.seed, Stream::Link(i))).collect();
    let mut server_rng = stream_rng(config.seed, Stream::Server);
    let mut comp = if variant.ranked() {
        CompensatorState::new(n, config.alpha0, config.delta_alpha(), config.beta0, config.delta_beta, config.gamma)
    } else {
        CompensatorState::neutral(n)
    };

    let mut logs = Vec::with_capacity(config.rounds);
    let mut aborted = None;
    for t in 1..=config.rounds {
        let mut log = RoundLog::new(&label, t);
        log.alpha = comp.alpha;
        let eta = config.learning_rate_at(t);
        let clients = &mut pop.clients;
        if t > 1 {
            clients.iter_mut().for_each(|c| {
                c.reveal_next(config.seq_len);
            });
        }

        let mut links: Vec<LinkState> = clients.iter().map(|c| c.link.clone()).collect();
        let conn = if t == 1 {
            start_round(&mut links)
        } else {
            step_connectivity(&mut links, config.p_offline, config.p_recover, &mut link_rngs)?
        };
        for (c, l) in clients.iter_mut().zip(links) {
            c.link = l;
        }
        let mut is_online = vec![false; n];
        let mut is_recovered = vec![false; n];
        conn.online.iter().for_each(|&i| is_online[i] = true);
        conn.recovered.iter().for_each(|&i| is_recovered[i] = true);

        let global_ref = &global;
        let results: Vec<(usize, Provenance, LocalResult)> = clients
            .par_iter_mut()
            .filter(|c| is_online[c.id])
            .map(|c| {
                let resume = variant.resumes_recovered_locally() && is_recovered[c.id];
                let provenance = match (resume, c.cache.is_some()) {
                    (false, _) => Provenance::Global,
                    (true, false) => Provenance::Local,
                    (true, true) => Provenance::Collaborative,
                };
                if !resume {
                    c.model = global_ref.clone();
                }
                if c.windows().is_empty() {
                    return (c.id, provenance, LocalResult::Skipped);
                }
                let trained = if resume {
                    let cache = c.cache.clone();
                    recovered_update(
                        &c.model,
                        &c.windows,
                        cache.as_ref(),
                        config.local_epochs,
                        eta,
                        config.batch_size,
                        &mut c.train_rng,
                    )
                    .and_then(|m| model_divergence(&m, global_ref).map(|kl| (m, kl)))
                } else {
                    local_update(c, global_ref, global_ref, config.local_epochs, eta, config.batch_size, variant)
                };
                match trained {
                    Ok((m, kl)) if kl.is_finite() => {
                        c.model = m;
                        (c.id, provenance, LocalResult::Trained { kl })
                    }
                    _ => (c.id, provenance, LocalResult::Diverged),
                }
            })
            .collect();

        let mut inputs = Vec::new();
        for (id, provenance, result) in results {
            match result {
                LocalResult::Trained { kl } => {
                    log.trained.push((id, provenance));
                    let link = &clients[id].link;
                    if link.has_budget() {
                        inputs.push(RankInput {
                            client_id: id,
                            kl,
                            participation: participation(link.n_uploads, t)?,
                            n_updates: link.n_uploads,
                        });
                    }
                }
                LocalResult::Skipped => log.events.push(Event::Skipped(id)),
                LocalResult::Diverged => log.events.push(Event::Diverged(id)),
            }
        }

        log.ranking = rank_round(&inputs, &comp)?;
        let ids: Vec<usize> = inputs.iter().map(|i| i.client_id).collect();
        let mut selected = match (variant.ranked(), config.selection) {
            (true, Selection::TopK) => select_top_k(&log.ranking, k),
            (true, Selection::Weighted) => select_weighted(&log.ranking, k, &mut server_rng),
            _ => select_uniform(&ids, k, &mut server_rng),
        };
        selected.sort_unstable();

        if selected.is_empty() {
            log.events.push(Event::EmptySelection);
        } else {
            for &id in &selected {
                charge_upload(&mut clients[id].link)?;
                if !clients[id].link.has_budget() {
                    log.events.push(Event::BudgetExhausted(id));
                }
            }
            let models: Vec<(usize, &ParamSet, f64)> = selected
                .iter()
                .map(|&id| (id, &clients[id].model, clients[id].reveal_state().available().len() as f64))
                .collect();
            global = aggregate(&models, config.aggregate_by_datasize)?;
        }
        decay_compensators(&mut comp, &ids);

        if config.is_decentralized_round(t) && !conn.offline.is_empty() {
            let positions: Vec<[f64; 2]> = clients.iter().map(|c| c.link.last_position).collect();
            let graph = build_neighbor_graph(&positions, config.neighbors)?;
            log.collab =
                decentralized_round(clients, &conn.offline, &graph, config.local_epochs, eta, config.batch_size)?;
            for rec in log.collab.iter().filter(|r| r.status == CollabStatus::Diverged) {
                log.events.push(Event::Diverged(rec.client));
            }
        } else if config.offline_train_every_round {
            let failed: Vec<usize> = clients
                .par_iter_mut()
                .filter(|c| !is_online[c.id] && !c.windows().is_empty())
                .filter_map(|c| {
                    let obj = Objective::default();
                    let res = train_epochs(
                        &c.model,
                        &c.windows,
                        config.local_epochs,
                        eta,
                        config.batch_size,
                        obj,
                        &mut c.train_rng,
                    );
                    match res {
                        Ok(m) => {
                            c.model = m;
                            None
                        }
                        Err(_) => Some(c.id),
                    }
                })
                .collect();
            log.events.extend(failed.into_iter().map(Event::Diverged));
        }

        log.online = conn.online;
        log.recovered = conn.recovered;
        log.offline = conn.offline;
        log.selected = selected;

        let evaluated = if global.is_finite() {
            evaluate_rmse(&global, &test, scale)
                .and_then(|r| r.is_finite().then_some(r).ok_or(non_finite(t, "test RMSE")))
        } else {
            Err(non_finite(t, "global model"))
        };
        match evaluated {
            Ok(r) => log.global_rmse = r,
            Err(e) => {
                log.global_rmse = f64::NAN;
                log.events.push(Event::Aborted);
                logs.push(log);
                aborted = Some(e.to_string());
                break;
            }
        }
        if evaluates_clients(config, t) {
            log.client_rmse = client_rmse(clients, scale)?;
        }
        logs.push(log);
    }

    Ok(RunOutcome {
        variant: label,
        logs,
        global,
        uploads: pop.clients.iter().map(|c| c.link.n_uploads).collect(),
        aborted,
    })
}

/// Every client trains alone on its own data, with the same reveal schedule,
/// epochs per round and starting model as the federated runs.
pub fn run_local_only(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let label = Variant::LocalOnly.label();
    let init = initial_model(config)?;
    let mut pop = prepare_population(config, |_| init.clone())?;
    let scale = rmse_scale(config, &pop);
    if pop.clients.iter().all(|c| c.holdout.is_empty()) {
        return Err(Error::InsufficientData("no client has enough holdout points for a test window".into()));
    }
    let all: Vec<usize> = (0..pop.clients.len()).collect();
    let mut logs = Vec::with_capacity(config.rounds);
    let mut aborted = None;
    for t in 1..=config.rounds {
        let mut log = RoundLog::new(&label, t);
        let eta = config.learning_rate_at(t);
        if t > 1 {
            pop.clients.iter_mut().for_each(|c| {
                c.reveal_next(config.seq_len);
            });
        }
        let results: Vec<(usize, Option<bool>)> = pop
            .clients
            .par_iter_mut()
            .map(|c| {
                if c.windows().is_empty() {
                    return (c.id, None);
                }
                let res = train_epochs(
                    &c.model,
                    &c.windows,
                    config.local_epochs,
                    eta,
                    config.batch_size,
                    Objective::default(),
                    &mut c.train_rng,
                );
                match res {
                    Ok(m) => {
                        c.model = m;
                        (c.id, Some(true))
                    }
                    Err(_) => (c.id, Some(false)),
                }
            })
            .collect();
        for (id, r) in results {
            match r {
                Some(true) => log.trained.push((id, Provenance::Local)),
                Some(false) => log.events.push(Event::Diverged(id)),
                None => log.events.push(Event::Skipped(id)),
            }
        }
        log.online = all.clone();

        // Pooled error of every client's own model on its own holdout.
        let pooled: Result<(f64, usize)> = pop
            .clients
            .iter()
            .filter(|c| !c.holdout.is_empty())
            .map(|c| squared_error(&c.model, &c.holdout, scale))
            .try_fold((0.0, 0), |acc, r| r.map(|(s, n)| (acc.0 + s, acc.1 + n)));
        match pooled.map(|(s, n)| (s / n as f64).sqrt()) {
            Ok(r) if r.is_finite() => log.global_rmse = r,
            _ => {
                log.global_rmse = f64::NAN;
                log.events.push(Event::Aborted);
                logs.push(log);
                aborted = Some(non_finite(t, "local test RMSE").to_string());
                break;
            }
        }
        if evaluates_clients(config, t) {
            log.client_rmse = client_rmse(&pop.clients, scale)?;
        }
        logs.push(log);
    }
    Ok(RunOutcome { variant: label, logs, global: init, uploads: vec![0; pop.clients.len()], aborted })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_of_fixed_errors() {
        // A zero model predicts the origin, so the error equals the target.
        let m = ParamSet::zeros(Dims::new(2, 3, 2).unwrap());
        let w = vec![Window { input: vec![[0.0, 0.0]; 2], target: [3.0, 4.0], start: 0 }];
        assert!((evaluate_rmse(&m, &w, [1.0, 1.0]).unwrap() - (12.5f64).sqrt()).abs() < 1e-12);
        let ones = vec![Window { input: vec![[0.0, 0.0]; 2], target: [1.0, -1.0], start: 0 }; 3];
        assert!((evaluate_rmse(&m, &ones, [1.0, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(evaluate_rmse(&m, &[], [1.0, 1.0]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let d = Dims::new(2, 2, 2).unwrap();
        let w = ParamSet::random_uniform(d, 1.0, &mut stream_rng(1, Stream::GlobalInit));
        let neg = ParamSet::from_flat(d, &w.flat().iter().map(|v| -v).collect::<Vec<_>>()).unwrap();
        assert_eq!(aggregate(&[(0, &w, 1.0)], false).unwrap(), w);
        assert!(aggregate(&[(0, &w, 1.0), (1, &neg, 1.0)], false).unwrap().iter().all(|v| *v == 0.0));
        let three = aggregate(&[(2, &w, 1.0), (0, &w, 1.0), (1, &w, 1.0)], false).unwrap();
        assert!(three.max_abs_diff(&w) < 1e-15);
        assert!(aggregate(&[], false).is_err());
    }
}

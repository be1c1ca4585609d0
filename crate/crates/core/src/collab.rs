//! Offline clients cooperating without the server: they swap FC heads with
//! nearby peers, keep the head that best fits their own data, and use it as
//! a KL anchor in their next local updates.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::connectivity::NeighborGraph;
use crate::data::Window;
use crate::error::{Error, Result};
use crate::nn::{apply_head, embed, mse_loss, ParamSet, TrainBatch};
use crate::sim::client::ClientState;
use crate::train::{batch_from_windows, train_epochs, Objective};

/// Best collaborative model found in the last decentralized round.
#[derive(Clone, Debug, PartialEq)]
pub struct CollabCache {
    /// Own LSTM block with the chosen head.
    pub model: ParamSet,
    /// Client whose head was chosen; may be the owner.
    pub source_id: usize,
    pub chosen_loss: f64,
}

/// Loss of every candidate head on one batch, own head first.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateEvaluation {
    pub cache: CollabCache,
    pub losses: Vec<(usize, f64)>,
}

/// Runs the LSTM once on `batch` and scores the own head and every neighbor
/// head on that embedding. Ties prefer the own head, then the lower id.
pub fn evaluate_candidates(
    own: &ParamSet,
    own_id: usize,
    neighbor_heads: &[(usize, &[f64])],
    batch: &TrainBatch,
) -> Result<CandidateEvaluation> {
    let dims = own.dims();
    let hidden = embed(own, batch)?;
    let own_loss = mse_loss(&apply_head(dims, own.fc_block(), &hidden)?, batch.targets())?;
    let mut losses = vec![(own_id, own_loss)];
    let mut sorted: Vec<&(usize, &[f64])> = neighbor_heads.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    let (mut best_id, mut best_loss, mut best_head) = (own_id, own_loss, own.fc_block());
    for &&(id, head) in &sorted {
        if head.len() != dims.fc_len() {
            return Err(Error::dim(format!(
                "head from client {id} has {} values, expected {}",
                head.len(),
                dims.fc_len()
            )));
        }
        let loss = mse_loss(&apply_head(dims, head, &hidden)?, batch.targets())?;
        losses.push((id, loss));
        if loss < best_loss {
            (best_id, best_loss, best_head) = (id, loss, head);
        }
    }
    let model = own.fc_inject(best_head)?;
    Ok(CandidateEvaluation { cache: CollabCache { model, source_id: best_id, chosen_loss: best_loss }, losses })
}

/// Up to `batch_size` distinct windows drawn uniformly.
pub fn sample_eval_batch<R: Rng + ?Sized>(
    windows: &[Window],
    batch_size: usize,
    rng: &mut R,
) -> Result<Option<TrainBatch>> {
    if windows.is_empty() {
        return Ok(None);
    }
    let picked = sample(rng, windows.len(), batch_size.min(windows.len()));
    let mut idx = picked.into_vec();
    idx.sort_unstable();
    batch_from_windows(idx.iter().map(|&i| &windows[i])).map(Some)
}

/// Local epochs with the KL pull toward the cached model, or plain SGD when
/// there is no cache.
pub fn collaborative_local_update<R: Rng + ?Sized>(
    model: &ParamSet,
    windows: &[Window],
    cache: Option<&CollabCache>,
    epochs: usize,
    eta: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<ParamSet> {
    let objective = Objective { proximal: None, bias_target: cache.map(|c| &c.model) };
    train_epochs(model, windows, epochs, eta, batch_size, objective, rng)
}

/// Update of a client that just reconnected: starts from its own model.
pub fn recovered_update<R: Rng + ?Sized>(
    client_model: &ParamSet,
    windows: &[Window],
    cache: Option<&CollabCache>,
    epochs: usize,
    eta: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<ParamSet> {
    collaborative_local_update(client_model, windows, cache, epochs, eta, batch_size, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollabStatus {
    Refreshed,
    NoWindows,
    Diverged,
}

/// What one offline client did in a decentralized round.
#[derive(Clone, Debug, PartialEq)]
pub struct CollabRecord {
    pub client: usize,
    pub status: CollabStatus,
    /// Head values received from neighbors.
    pub payload: usize,
    pub source: Option<usize>,
    pub loss: Option<f64>,
}

fn collab_step(
    client: &mut ClientState,
    graph: &NeighborGraph,
    heads: &[Vec<f64>],
    epochs: usize,
    eta: f64,
    batch_size: usize,
) -> CollabRecord {
    let mut record =
        CollabRecord { client: client.id, status: CollabStatus::NoWindows, payload: 0, source: None, loss: None };
    if client.windows().is_empty() {
        return record;
    }
    let updated = collaborative_local_update(
        &client.model,
        &client.windows,
        client.cache.as_ref(),
        epochs,
        eta,
        batch_size,
        &mut client.train_rng,
    );
    match updated {
        Ok(m) => client.model = m,
        Err(_) => {
            record.status = CollabStatus::Diverged;
            return record;
        }
    }
    let neighbor_heads: Vec<(usize, &[f64])> =
        graph.of(client.id).iter().map(|&(j, _)| (j, heads[j].as_slice())).collect();
    record.payload = neighbor_heads.iter().map(|(_, h)| h.len()).sum();
    let batch = match sample_eval_batch(&client.windows, batch_size, &mut client.eval_rng) {
        Ok(Some(b)) => b,
        _ => return record,
    };
    match evaluate_candidates(&client.model, client.id, &neighbor_heads, &batch) {
        Ok(eval) => {
            record.status = CollabStatus::Refreshed;
            record.source = Some(eval.cache.source_id);
            record.loss = Some(eval.cache.chosen_loss);
            client.cache = Some(eval.cache);
        }
        Err(_) => record.status = CollabStatus::Diverged,
    }
    record
}

/// One decentralized round over the offline clients. Neighbor heads are read
/// from a snapshot taken before any client updates. `clients[i].id` must be `i`.
pub fn decentralized_round(
    clients: &mut [ClientState],
    offline: &[usize],
    graph: &NeighborGraph,
    epochs: usize,
    eta: f64,
    batch_size: usize,
) -> Result<Vec<CollabRecord>> {
    if offline.is_empty() {
        return Ok(Vec::new());
    }
    if graph.neighbors.len() != clients.len() || clients.iter().enumerate().any(|(i, c)| c.id != i) {
        return Err(Error::dim("neighbor graph and client list disagree"));
    }
    let heads: Vec<Vec<f64>> = clients.iter().map(|c| c.model.fc_extract()).collect();
    let mut is_offline = vec![false; clients.len()];
    for &u in offline {
        *is_offline.get_mut(u).ok_or_else(|| Error::invalid(format!("unknown client {u}")))? = true;
    }
    let records = clients
        .par_iter_mut()
        .filter(|c| is_offline[c.id])
        .map(|c| collab_step(c, graph, &heads, epochs, eta, batch_size))
        .collect();
    Ok(records)
}

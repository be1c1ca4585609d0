//! Server-side ranking of online clients and top-K selection.
//!
//! Each round the `m_t` participants are ranked twice, by the KL divergence
//! of their update from the global model and by their participation, both
//! sorted from high to low. While the KL compensator `alpha` is above 1 the
//! KL position is weighted by a parabola through `(0, alpha)`, `(m_t, 1)`,
//! `(2 m_t, alpha)`, which favors clients that moved far from the global
//! model; afterwards the weight grows linearly with position, favoring
//! clients close to it. Late joiners (`beta`) and stragglers (`gamma`) get
//! multiplicative boosts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients `(b0, b1, b2)` of `G(P) = b0 P^2 + b1 P + b2`.
pub fn solve_quadratic(alpha: f64, m_t: usize) -> Result<(f64, f64, f64)> {
    if m_t == 0 {
        return Err(Error::invalid("cannot fit the weight curve with no participants"));
    }
    let m = m_t as f64;
    let b0 = (alpha - 1.0) / (m * m);
    let b1 = -2.0 * m * (alpha - 1.0) / (m * m);
    Ok((b0, b1, alpha))
}

pub fn weight_early(position: f64, b0: f64, b1: f64, b2: f64) -> f64 {
    b0 * position * position + b1 * position + b2
}

pub fn weight_late(position: f64, m_t: usize) -> Result<f64> {
    if m_t == 0 {
        return Err(Error::invalid("cannot weight positions with no participants"));
    }
    Ok(position / m_t as f64)
}

/// 1-based positions of `values` sorted from high to low, aligned with the
/// input order. Equal values are ordered by ascending client id.
pub fn rank_positions(values: &[(usize, f64)]) -> Result<Vec<usize>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot rank an empty set"));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].1.total_cmp(&values[a].1).then(values[a].0.cmp(&values[b].0)));
    let mut positions = vec![0; values.len()];
    for (rank, idx) in order.into_iter().enumerate() {
        positions[idx] = rank + 1;
    }
    Ok(positions)
}

/// Decaying compensators. `beta` and `delta_beta` are indexed by client id.
#[derive(Clone, Debug, PartialEq)]
pub struct CompensatorState {
    pub alpha: f64,
    pub delta_alpha: f64,
    pub beta: Vec<f64>,
    pub delta_beta: Vec<f64>,
    pub gamma: f64,
}

impl CompensatorState {
    pub fn new(n_clients: usize, alpha: f64, delta_alpha: f64, beta: f64, delta_beta: f64, gamma: f64) -> Self {
        CompensatorState {
            alpha,
            delta_alpha,
            beta: vec![beta; n_clients],
            delta_beta: vec![delta_beta; n_clients],
            gamma,
        }
    }

    /// `alpha = 1`, `beta = 1`, `gamma = 1`, no decay.
    pub fn neutral(n_clients: usize) -> Self {
        Self::new(n_clients, 1.0, 0.0, 1.0, 0.0, 1.0)
    }
}

/// What a participant reports to the server.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankInput {
    pub client_id: usize,
    /// `L^k`: divergence of the local update from the global model.
    pub kl: f64,
    /// `A^k`.
    pub participation: f64,
    /// `n^k`: uploads so far.
    pub n_updates: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub client_id: usize,
    pub kl: f64,
    pub participation: f64,
    pub n_updates: u32,
    pub pos_kl: usize,
    pub pos_participation: usize,
    /// `R^k_t`.
    pub weight: f64,
}

/// `R = G(P_L) P_A / m_t * beta` while `alpha > 1`, else `P_L P_A / m_t^2 * beta`.
pub fn combined_weight(pos_kl: usize, pos_participation: usize, alpha: f64, beta: f64, m_t: usize) -> Result<f64> {
    let m = m_t as f64;
    if alpha > 1.0 {
        let (b0, b1, b2) = solve_quadratic(alpha, m_t)?;
        Ok(weight_early(pos_kl as f64, b0, b1, b2) * pos_participation as f64 / m * beta)
    } else {
        // Integer product first, so the weight is exactly linear in each position.
        Ok((pos_kl * pos_participation) as f64 / (m * m) * beta)
    }
}

/// Multiplies by `gamma` the weight of every entry with fewer updates than
/// the participants' mean.
pub fn straggler_boost(entries: &mut [RankEntry], gamma: f64) {
    if entries.is_empty() {
        return;
    }
    let total: u64 = entries.iter().map(|e| e.n_updates as u64).sum();
    let m = entries.len() as u64;
    for e in entries.iter_mut() {
        // n < total / m, compared exactly in integers
        if (e.n_updates as u64) * m < total {
            e.weight *= gamma;
        }
    }
}

/// Ranks one round of participants with the current compensators.
pub fn rank_round(inputs: &[RankInput], state: &CompensatorState) -> Result<Vec<RankEntry>> {
    if inputs.is_empty() {
        return Ok(Vec::new());
    }
    let m_t = inputs.len();
    let pos_kl = rank_positions(&inputs.iter().map(|i| (i.client_id, i.kl)).collect::<Vec<_>>())?;
    let pos_part = rank_positions(&inputs.iter().map(|i| (i.client_id, i.participation)).collect::<Vec<_>>())?;
    let mut entries = inputs
        .iter()
        .zip(pos_kl.iter().zip(&pos_part))
        .map(|(inp, (&pl, &pa))| {
            let beta = *state
                .beta
                .get(inp.client_id)
                .ok_or_else(|| Error::invalid(format!("no compensator for client {}", inp.client_id)))?;
            Ok(RankEntry {
                client_id: inp.client_id,
                kl: inp.kl,
                participation: inp.participation,
                n_updates: inp.n_updates,
                pos_kl: pl,
                pos_participation: pa,
                weight: combined_weight(pl, pa, state.alpha, beta, m_t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    straggler_boost(&mut entries, state.gamma);
    Ok(entries)
}

/// End-of-round decay: `beta <- max(beta - delta_beta, 1)` for the ranked
/// clients and `alpha <- alpha - delta_alpha` once.
pub fn decay_compensators(state: &mut CompensatorState, ranked: &[usize]) {
    for &id in ranked {
        if let (Some(b), Some(d)) = (state.beta.get(id).copied(), state.delta_beta.get(id).copied()) {
            state.beta[id] = (b - d).max(1.0);
        }
    }
    state.alpha -= state.delta_alpha;
}

/// The `min(k, m_t)` clients with the largest weights, ties to the lower id.
pub fn select_top_k(entries: &[RankEntry], k: usize) -> Vec<usize> {
    let mut order: Vec<&RankEntry> = entries.iter().collect();
    order.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.client_id.cmp(&b.client_id)));
    order.into_iter().take(k).map(|e| e.client_id).collect()
}

/// Weight-proportional sampling without replacement.
pub fn select_weighted<R: Rng + ?Sized>(entries: &[RankEntry], k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<(usize, f64)> = entries.iter().map(|e| (e.client_id, e.weight.max(0.0))).collect();
    pool.sort_by_key(|p| p.0);
    let mut picked = Vec::with_capacity(k.min(pool.len()));
    while picked.len() < k && !pool.is_empty() {
        let total: f64 = pool.iter().map(|p| p.1).sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            pool.iter()
                .position(|p| {
                    u -= p.1;
                    u < 0.0
                })
                .unwrap_or(pool.len() - 1)
        } else {
            rng.random_range(0..pool.len())
        };
        picked.push(pool.remove(idx).0);
    }
    picked
}

/// Uniform sampling of `min(k, n)` ids without replacement.
pub fn select_uniform<R: Rng + ?Sized>(ids: &[usize], k: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = ids.to_vec();
    pool.sort_unstable();
    let take = k.min(pool.len());
    for i in 0..take {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    pool.truncate(take);
    pool
}

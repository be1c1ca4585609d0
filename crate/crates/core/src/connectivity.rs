//! Client link dynamics, upload budgets and the neighbor graph.

use rand::Rng;

use crate::error::{Error, Result};

/// Server link of one client.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkState {
    pub online: bool,
    /// One flag per elapsed round: was the client reachable by the server.
    pub history: Vec<bool>,
    pub n_uploads: u32,
    pub budget_remaining: u32,
    /// Most recent revealed coordinate, normalized.
    pub last_position: [f64; 2],
}

impl LinkState {
    pub fn new(budget: u32, position: [f64; 2]) -> Self {
        LinkState { online: true, history: Vec::new(), n_uploads: 0, budget_remaining: budget, last_position: position }
    }

    pub fn initial_budget(&self) -> u32 {
        self.n_uploads + self.budget_remaining
    }

    pub fn has_budget(&self) -> bool {
        self.budget_remaining > 0
    }

    pub fn online_rounds(&self) -> usize {
        self.history.iter().filter(|f| **f).count()
    }
}

/// Partition of the clients for one round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundConnectivity {
    /// `C_t`: reachable by the server.
    pub online: Vec<usize>,
    /// `R_t`: offline last round, online now.
    pub recovered: Vec<usize>,
    /// `Omega_t`: unreachable.
    pub offline: Vec<usize>,
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be in [0, 1], got {p}")))
    }
}

fn collect(states: &[LinkState], was_online: &[bool]) -> RoundConnectivity {
    let mut out = RoundConnectivity::default();
    for (id, (s, was)) in states.iter().zip(was_online).enumerate() {
        if s.online {
            out.online.push(id);
            if !was {
                out.recovered.push(id);
            }
        } else {
            out.offline.push(id);
        }
    }
    out
}

/// First round: every client is online and nobody is recovered.
pub fn start_round(states: &mut [LinkState]) -> RoundConnectivity {
    for s in states.iter_mut() {
        s.online = true;
        s.history.push(true);
    }
    collect(states, &vec![true; states.len()])
}

/// One independent Markov transition per client: online clients drop with
/// `p_offline`, offline clients return with `p_recover`. `rngs[i]` is client
/// `i`'s private stream and is drawn from exactly once.
pub fn step_connectivity<R: Rng>(
    states: &mut [LinkState],
    p_offline: f64,
    p_recover: f64,
    rngs: &mut [R],
) -> Result<RoundConnectivity> {
    check_prob("p_offline", p_offline)?;
    check_prob("p_recover", p_recover)?;
    if rngs.len() != states.len() {
        return Err(Error::dim("one link stream per client is required"));
    }
    let was_online: Vec<bool> = states.iter().map(|s| s.online).collect();
    for (s, rng) in states.iter_mut().zip(rngs.iter_mut()) {
        let u: f64 = rng.random();
        s.online = if s.online { u >= p_offline } else { u < p_recover };
        s.history.push(s.online);
    }
    Ok(collect(states, &was_online))
}

/// `A = n_uploads / t`.
pub fn participation(n_uploads: u32, round: usize) -> Result<f64> {
    if round == 0 {
        return Err(Error::invalid("participation is undefined before round 1"));
    }
    if n_uploads as usize > round {
        return Err(Error::invalid(format!("{n_uploads} uploads cannot happen in {round} rounds")));
    }
    Ok(n_uploads as f64 / round as f64)
}

/// Records one upload against the client's budget.
pub fn charge_upload(state: &mut LinkState) -> Result<()> {
    if state.budget_remaining == 0 {
        return Err(Error::Contract("upload charged to a client with no budget left".into()));
    }
    state.budget_remaining -= 1;
    state.n_uploads += 1;
    Ok(())
}

/// For each client, up to `chi` nearest other clients with distances.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    pub fn of(&self, client: usize) -> &[(usize, f64)] {
        &self.neighbors[client]
    }
}

/// Nearest `chi` neighbors by Euclidean distance; ties go to the lower id.
pub fn build_neighbor_graph(positions: &[[f64; 2]], chi: usize) -> Result<NeighborGraph> {
    if chi == 0 {
        return Err(Error::invalid("neighbor count must be at least 1"));
    }
    if positions.len() < 2 {
        return Err(Error::invalid("a neighbor graph needs at least two clients"));
    }
    let neighbors = positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut others: Vec<(usize, f64)> = positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, q)| (j, ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()))
                .collect();
            others.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            others.truncate(chi);
            others
        })
        .collect();
    Ok(NeighborGraph { neighbors })
}

//! Per-client simulation state and dataset preparation.

use std::ops::Range;

use crate::availability::{build_plans, AvailabilityPlan, RevealState};
use crate::collab::CollabCache;
use crate::connectivity::LinkState;
use crate::data::{
    make_windows, normalize, parse_csv, partition_by_vehicle, partition_equal, synth_trajectories, BBox, ClientDataset,
    CsvLayout, Normalizer, Segment, Trajectory, Window,
};
use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::rng::{stream_rng, SimRng, Stream};
use crate::sim::config::{DataSource, ExperimentConfig, PartitionMode};

/// Where a client's starting model came from in a round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Pushed global model.
    Global,
    /// Own local model, plain objective.
    Local,
    /// Own local model, pulled toward the cached collaborative model.
    Collaborative,
}

impl Provenance {
    pub fn code(self) -> char {
        match self {
            Provenance::Global => 'g',
            Provenance::Local => 'l',
            Provenance::Collaborative => 'c',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'g' => Some(Provenance::Global),
            'l' => Some(Provenance::Local),
            'c' => Some(Provenance::Collaborative),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: usize,
    /// Normalized training stream, segments concatenated.
    points: Vec<[f64; 2]>,
    segments: Vec<Range<usize>>,
    plan: AvailabilityPlan,
    reveal: RevealState,
    pub(crate) windows: Vec<Window>,
    pub holdout: Vec<Window>,
    pub model: ParamSet,
    pub link: LinkState,
    pub cache: Option<CollabCache>,
    pub reveal_rng: SimRng,
    pub train_rng: SimRng,
    pub eval_rng: SimRng,
}

impl ClientState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: usize,
        segments: &[Vec<[f64; 2]>],
        plan: AvailabilityPlan,
        holdout: Vec<Window>,
        model: ParamSet,
        budget: u32,
        slice_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut points = Vec::new();
        let mut ranges = Vec::new();
        for s in segments {
            ranges.push(points.len()..points.len() + s.len());
            points.extend_from_slice(s);
        }
        if plan.len() != points.len() {
            return Err(Error::dim(format!(
                "client {id}: plan covers {} points, stream has {}",
                plan.len(),
                points.len()
            )));
        }
        let reveal = RevealState::new(points.len(), slice_size)?;
        let centroid = centroid(&points);
        Ok(ClientState {
            id,
            points,
            segments: ranges,
            plan,
            reveal,
            windows: Vec::new(),
            holdout,
            model,
            link: LinkState::new(budget, centroid),
            cache: None,
            reveal_rng: stream_rng(seed, Stream::Reveal(id)),
            train_rng: stream_rng(seed, Stream::Train(id)),
            eval_rng: stream_rng(seed, Stream::Eval(id)),
        })
    }

    /// Reveals the next slice and rebuilds the usable windows. Returns the
    /// number of newly available points.
    pub fn reveal_next(&mut self, seq_len: usize) -> usize {
        let fresh = self.reveal.reveal_round(&self.plan, &mut self.reveal_rng);
        if let Some(&last) = fresh.last() {
            self.link.last_position = self.points[last];
            self.rebuild_windows(seq_len);
        }
        fresh.len()
    }

    /// Sliding windows over the revealed points of each segment, in stream order.
    fn rebuild_windows(&mut self, seq_len: usize) {
        let available = self.reveal.available();
        let mut windows = Vec::new();
        let mut i = 0;
        for seg in &self.segments {
            let mut pts = Vec::new();
            while i < available.len() && available[i] < seg.end {
                pts.push(self.points[available[i]]);
                i += 1;
            }
            windows.extend(make_windows(&pts, seq_len));
        }
        self.windows = windows;
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn reveal_state(&self) -> &RevealState {
        &self.reveal
    }

    pub fn plan(&self) -> &AvailabilityPlan {
        &self.plan
    }

    pub fn train_points(&self) -> usize {
        self.points.len()
    }
}

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    if points.is_empty() {
        return [0.5, 0.5];
    }
    let n = points.len() as f64;
    let s = points.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
    [s[0] / n, s[1] / n]
}

/// Clients ready for a run plus the coordinate map.
#[derive(Clone, Debug)]
pub struct Population {
    pub clients: Vec<ClientState>,
    pub normalizer: Normalizer,
}

impl Population {
    /// Pooled holdout windows of every client.
    pub fn test_windows(&self) -> Vec<Window> {
        self.clients.iter().flat_map(|c| c.holdout.iter().cloned()).collect()
    }
}

pub fn load_trajectories(config: &ExperimentConfig) -> Result<Vec<Trajectory>> {
    match &config.dataset {
        DataSource::Synthetic { kind, n_vehicles, points_each } => {
            let n = n_vehicles.unwrap_or(match config.partition {
                PartitionMode::ByVehicle { vehicles_per_client } => config.clients * vehicles_per_client,
                PartitionMode::Equal { points_per_client } => {
                    (config.clients * points_per_client).div_ceil(*points_each)
                }
            });
            Ok(synth_trajectories(config.seed, n, *points_each, *kind))
        }
        DataSource::Csv { path } => Ok(parse_csv(path, CsvLayout::Standard)?.trajectories),
        DataSource::Tdrive { path } => Ok(parse_csv(path, CsvLayout::Tdrive)?.trajectories),
    }
}

/// Splits a client's stream into a training head and a holdout tail.
fn split_tail(dataset: &ClientDataset, holdout_fraction: f64) -> (ClientDataset, Vec<Segment>) {
    let total = dataset.point_count();
    let holdout = ((total as f64) * holdout_fraction).round() as usize;
    let mut train_left = total - holdout.min(total);
    let mut train = ClientDataset { client_id: dataset.client_id, segments: Vec::new() };
    let mut tail = Vec::new();
    for seg in &dataset.segments {
        let keep = train_left.min(seg.points.len());
        train_left -= keep;
        if keep > 0 {
            train.segments.push(Segment { points: seg.points[..keep].to_vec(), ..seg.clone() });
        }
        if keep < seg.points.len() {
            tail.push(Segment {
                vehicle_id: seg.vehicle_id.clone(),
                source_start: seg.source_start + keep,
                points: seg.points[keep..].to_vec(),
            });
        }
    }
    (train, tail)
}

/// Loads, partitions, normalizes and splits the data, builds availability
/// plans, and reveals the bootstrap slice of every client. Each client starts
/// from `init(client_id)`.
pub fn prepare_population<F>(config: &ExperimentConfig, mut init: F) -> Result<Population>
where
    F: FnMut(usize) -> ParamSet,
{
    config.validate()?;
    let trajectories = load_trajectories(config)?;
    let mut datasets = match config.partition {
        PartitionMode::Equal { points_per_client } => {
            partition_equal(&trajectories, config.clients, points_per_client)?
        }
        PartitionMode::ByVehicle { vehicles_per_client } => partition_by_vehicle(&trajectories, vehicles_per_client)?,
    };
    if datasets.len() < config.clients {
        return Err(Error::InsufficientData(format!(
            "partition produced {} clients, {} requested",
            datasets.len(),
            config.clients
        )));
    }
    datasets.truncate(config.clients);

    let bbox = BBox::around(datasets.iter().flat_map(|d| d.points()))?;
    let normalizer = Normalizer::new(bbox)?;
    let (train, tails): (Vec<ClientDataset>, Vec<Vec<Segment>>) =
        datasets.iter().map(|d| split_tail(d, config.holdout_fraction)).unzip();
    let plans = build_plans(&config.scenario, &train, &bbox, config.seed)?;

    let slice = config.batch_size * config.seq_len;
    let budget = config.budget.unwrap_or(u32::MAX);
    let mut clients = Vec::with_capacity(train.len());
    for ((dataset, tail), plan) in train.iter().zip(&tails).zip(plans) {
        let segments: Vec<Vec<[f64; 2]>> = dataset.segments.iter().map(|s| normalize(&s.points, &normalizer)).collect();
        let holdout: Vec<Window> =
            tail.iter().flat_map(|s| make_windows(&normalize(&s.points, &normalizer), config.seq_len)).collect();
        let id = dataset.client_id;
        let mut client = ClientState::new(id, &segments, plan, holdout, init(id), budget, slice, config.seed)?;
        client.reveal_next(config.seq_len);
        clients.push(client);
    }
    Ok(Population { clients, normalizer })
}

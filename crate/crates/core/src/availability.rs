//! Per-point availability and the streaming reveal of training data.
//!
//! Every training point of a client gets a probability of joining the usable
//! training set. Points arrive in slices of `batch_size * seq_len`; each point
//! of a slice is either kept for good or lost for good.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::normalize::BBox;
use crate::data::partition::ClientDataset;
use crate::data::trajectory::TrajectoryPoint;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// A rectangular region with degraded positioning signal.
pub type WeakArea = BBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioTag {
    Full,
    Random,
    Regional,
    DataSize,
}

/// Availability scenario as configured for an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    /// Every point is available.
    Full,
    /// Per-point probabilities from a symmetric Dirichlet over each trajectory.
    Random { alpha_dir: f64 },
    /// Lower availability inside weak-signal boxes. When `weak_areas` is
    /// omitted a centered box covering 30% of the data extent is used.
    Regional {
        #[serde(default)]
        weak_areas: Option<Vec<WeakArea>>,
        #[serde(default = "default_p_low")]
        p_low: f64,
        #[serde(default = "default_p_high")]
        p_high: f64,
    },
    /// Clients holding many points ("company" devices) get higher availability.
    /// The size threshold is either given or chosen so that `company_fraction`
    /// of the clients are companies.
    DataSize {
        #[serde(default)]
        threshold: Option<usize>,
        #[serde(default = "default_company_fraction")]
        company_fraction: f64,
        p_company: f64,
        p_private: f64,
    },
}

fn default_p_low() -> f64 {
    0.2
}

fn default_p_high() -> f64 {
    0.9
}

fn default_company_fraction() -> f64 {
    0.1
}

impl Scenario {
    pub fn tag(&self) -> ScenarioTag {
        match self {
            Scenario::Full => ScenarioTag::Full,
            Scenario::Random { .. } => ScenarioTag::Random,
            Scenario::Regional { .. } => ScenarioTag::Regional,
            Scenario::DataSize { .. } => ScenarioTag::DataSize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| -> Result<()> {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be in [0, 1], got {p}")))
            }
        };
        match *self {
            Scenario::Full => Ok(()),
            Scenario::Random { alpha_dir } => {
                if alpha_dir > 0.0 && alpha_dir.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(format!("alpha_dir must be positive, got {alpha_dir}")))
                }
            }
            Scenario::Regional { ref weak_areas, p_low, p_high } => {
                prob("p_low", p_low)?;
                prob("p_high", p_high)?;
                if p_low > p_high {
                    return Err(Error::config("p_low must not exceed p_high"));
                }
                for area in weak_areas.iter().flatten() {
                    area.validate()?;
                }
                Ok(())
            }
            Scenario::DataSize { threshold, company_fraction, p_company, p_private } => {
                prob("p_company", p_company)?;
                prob("p_private", p_private)?;
                if threshold == Some(0) {
                    return Err(Error::config("data-size threshold must be positive"));
                }
                if !(company_fraction > 0.0 && company_fraction <= 1.0) {
                    return Err(Error::config("company_fraction must be in (0, 1]"));
                }
                Ok(())
            }
        }
    }
}

/// Probability of each training point of one client joining its training set.
#[derive(Clone, Debug, PartialEq)]
pub struct AvailabilityPlan {
    pub probs: Vec<f64>,
    pub scenario: ScenarioTag,
}

impl AvailabilityPlan {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Draws `x ~ Dirichlet(alpha_dir)` of length `n` and returns `min(1, n * x_j)`.
pub fn assign_random<R: Rng + ?Sized>(n: usize, alpha_dir: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(alpha_dir > 0.0) || !alpha_dir.is_finite() {
        return Err(Error::invalid(format!("alpha_dir must be positive, got {alpha_dir}")));
    }
    if n == 0 {
        return Err(Error::invalid("trajectory has no points"));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let gamma = Gamma::new(alpha_dir, 1.0).map_err(|e| Error::invalid(e.to_string()))?;
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        // Every draw underflowed: the limit of a vanishing concentration is a
        // point mass on one coordinate.
        let hit = rng.random_range(0..n);
        return Ok((0..n).map(|j| if j == hit { 1.0 } else { 0.0 }).collect());
    }
    let scale = n as f64 / total;
    Ok(draws.iter().map(|x| (x * scale).min(1.0)).collect())
}

/// `p_low` for points inside any weak area, `p_high` elsewhere.
pub fn assign_regional(
    points: &[TrajectoryPoint],
    weak_areas: &[WeakArea],
    p_low: f64,
    p_high: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p_low) || !(0.0..=1.0).contains(&p_high) || p_low > p_high {
        return Err(Error::invalid(format!("need 0 <= p_low <= p_high <= 1, got p_low={p_low}, p_high={p_high}")));
    }
    Ok(points
        .iter()
        .map(|p| if weak_areas.iter().any(|a| a.contains(p.lat, p.lon)) { p_low } else { p_high })
        .collect())
}

/// Per-client probability: `p_company` for clients with at least `threshold`
/// points, `p_private` for the rest.
pub fn assign_by_datasize(counts: &[usize], threshold: usize, p_company: f64, p_private: f64) -> Vec<f64> {
    counts.iter().map(|&c| if c >= threshold { p_company } else { p_private }).collect()
}

/// Smallest count among the top `ceil(fraction * N)` clients.
pub fn company_threshold(counts: &[usize], fraction: f64) -> usize {
    if counts.is_empty() {
        return 1;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let k = ((fraction * counts.len() as f64).ceil() as usize).clamp(1, counts.len());
    sorted[k - 1].max(1)
}

/// Centered box covering 30% of `bbox`'s area.
pub fn default_weak_areas(bbox: &BBox) -> Vec<WeakArea> {
    let side = 0.3f64.sqrt();
    let (lat_c, lon_c) = ((bbox.lat_min + bbox.lat_max) / 2.0, (bbox.lon_min + bbox.lon_max) / 2.0);
    let (half_lat, half_lon) = (side * bbox.lat_extent() / 2.0, side * bbox.lon_extent() / 2.0);
    vec![BBox {
        lat_min: lat_c - half_lat,
        lat_max: lat_c + half_lat,
        lon_min: lon_c - half_lon,
        lon_max: lon_c + half_lon,
    }]
}

/// Builds one plan per client. `data_bbox` is used for the default weak areas.
pub fn build_plans(
    scenario: &Scenario,
    clients: &[ClientDataset],
    data_bbox: &BBox,
    seed: u64,
) -> Result<Vec<AvailabilityPlan>> {
    scenario.validate()?;
    let tag = scenario.tag();
    let plans = match scenario {
        Scenario::Full => clients.iter().map(|c| vec![1.0; c.point_count()]).collect(),
        Scenario::Random { alpha_dir } => clients
            .iter()
            .map(|c| {
                let mut rng = stream_rng(seed, Stream::Plan(c.client_id));
                let mut probs = Vec::with_capacity(c.point_count());
                for seg in c.segments.iter().filter(|s| !s.points.is_empty()) {
                    probs.extend(assign_random(seg.points.len(), *alpha_dir, &mut rng)?);
                }
                Ok(probs)
            })
            .collect::<Result<Vec<_>>>()?,
        Scenario::Regional { weak_areas, p_low, p_high } => {
            let areas = weak_areas.clone().unwrap_or_else(|| default_weak_areas(data_bbox));
            clients
                .iter()
                .map(|c| {
                    let pts: Vec<TrajectoryPoint> = c.points().cloned().collect();
                    assign_regional(&pts, &areas, *p_low, *p_high)
                })
                .collect::<Result<Vec<_>>>()?
        }
        Scenario::DataSize { threshold, company_fraction, p_company, p_private } => {
            let counts: Vec<usize> = clients.iter().map(ClientDataset::point_count).collect();
            let threshold = threshold.unwrap_or_else(|| company_threshold(&counts, *company_fraction));
            let per_client = assign_by_datasize(&counts, threshold, *p_company, *p_private);
            counts.iter().zip(per_client).map(|(&n, p)| vec![p; n]).collect()
        }
    };
    Ok(plans.into_iter().map(|probs| AvailabilityPlan { probs, scenario: tag }).collect())
}

/// Streaming reveal of one client's training points.
#[derive(Clone, Debug, PartialEq)]
pub struct RevealState {
    slice_size: usize,
    cursor: usize,
    total: usize,
    available: Vec<usize>,
    lost: Vec<usize>,
}

impl RevealState {
    pub fn new(total: usize, slice_size: usize) -> Result<Self> {
        if slice_size == 0 {
            return Err(Error::invalid("reveal slice size must be positive"));
        }
        Ok(RevealState { slice_size, cursor: 0, total, available: Vec::new(), lost: Vec::new() })
    }

    pub fn slice_size(&self) -> usize {
        self.slice_size
    }

    /// Next unprocessed point index.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Revealed point indices, ascending.
    pub fn available(&self) -> &[usize] {
        &self.available
    }

    /// Permanently lost point indices, ascending.
    pub fn lost(&self) -> &[usize] {
        &self.lost
    }

    pub fn exhausted(&self) -> bool {
        self.cursor >= self.total
    }

    /// Processes the next slice: each point is kept with its plan probability,
    /// otherwise lost. Returns the newly available indices.
    pub fn reveal_round<R: Rng + ?Sized>(&mut self, plan: &AvailabilityPlan, rng: &mut R) -> Vec<usize> {
        debug_assert_eq!(plan.len(), self.total, "plan must cover every point");
        let end = (self.cursor + self.slice_size).min(self.total);
        let mut fresh = Vec::new();
        for j in self.cursor..end {
            let p = plan.probs[j];
            // Always draw, so the stream position does not depend on p.
            let u: f64 = rng.random();
            if u < p {
                fresh.push(j);
            } else {
                self.lost.push(j);
            }
        }
        self.cursor = end;
        self.available.extend_from_slice(&fresh);
        fresh
    }
}

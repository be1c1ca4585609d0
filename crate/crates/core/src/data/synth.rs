//! Seeded synthetic trajectories.
//!
//! Each vehicle gets its own origin, heading and phase, so client datasets
//! built from different vehicles are not identically distributed while
//! sharing the same kind of motion.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::trajectory::{Trajectory, TrajectoryPoint};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    RandomWalk,
    Sinusoid,
    Circle,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-walk" | "random_walk" => Ok(SynthKind::RandomWalk),
            "sinusoid" => Ok(SynthKind::Sinusoid),
            "circle" => Ok(SynthKind::Circle),
            other => Err(Error::invalid(format!(
                "unknown trajectory kind {other:?} (expected random-walk, sinusoid or circle)"
            ))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::RandomWalk => "random-walk",
            SynthKind::Sinusoid => "sinusoid",
            SynthKind::Circle => "circle",
        })
    }
}

/// Generation parameters of one vehicle, in degrees and radians.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleParams {
    pub vehicle_id: String,
    /// Start point, or circle center.
    pub origin: (f64, f64),
    pub heading: f64,
    /// Degrees travelled per step (walk, sinusoid) or radians per step (circle).
    pub speed: f64,
    pub phase: f64,
    /// Lateral amplitude (sinusoid) or radius (circle).
    pub amplitude: f64,
    /// Angular frequency of the lateral oscillation.
    pub frequency: f64,
}

const BASE_TIMESTAMP: i64 = 1_201_930_000;
const SAMPLE_INTERVAL: i64 = 30;
const LAT_RANGE: (f64, f64) = (39.6, 40.4);
const LON_RANGE: (f64, f64) = (116.0, 116.8);

/// Relative jitter applied to every generated coordinate.
pub const JITTER: f64 = 0.01;

pub fn synth_trajectories(seed: u64, n_vehicles: usize, points_each: usize, kind: SynthKind) -> Vec<Trajectory> {
    synth_with_params(seed, n_vehicles, points_each, kind).0
}

pub fn synth_with_params(
    seed: u64,
    n_vehicles: usize,
    points_each: usize,
    kind: SynthKind,
) -> (Vec<Trajectory>, Vec<VehicleParams>) {
    let mut rng = stream_rng(seed, Stream::Synth);
    let width = n_vehicles.max(1).to_string().len();
    let mut trajectories = Vec::with_capacity(n_vehicles);
    let mut params = Vec::with_capacity(n_vehicles);
    for v in 0..n_vehicles {
        let vehicle_id = format!("v{v:0width$}");
        let p = VehicleParams {
            vehicle_id: vehicle_id.clone(),
            origin: (rng.random_range(LAT_RANGE.0..LAT_RANGE.1), rng.random_range(LON_RANGE.0..LON_RANGE.1)),
            heading: rng.random_range(0.0..TAU),
            speed: match kind {
                SynthKind::Circle => rng.random_range(0.04..0.09) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                _ => rng.random_range(0.0015..0.004),
            },
            phase: rng.random_range(0.0..TAU),
            amplitude: match kind {
                SynthKind::Circle => rng.random_range(0.03..0.08),
                _ => rng.random_range(0.01..0.03),
            },
            frequency: rng.random_range(0.08..0.25),
        };
        let start_time = BASE_TIMESTAMP + rng.random_range(0..3600);
        let mut heading = p.heading;
        let mut pos = p.origin;
        let mut points = Vec::with_capacity(points_each);
        for k in 0..points_each {
            let kf = k as f64;
            let (lat, lon) = match kind {
                SynthKind::Circle => {
                    let angle = p.phase + p.speed * kf;
                    (p.origin.0 + p.amplitude * angle.cos(), p.origin.1 + p.amplitude * angle.sin())
                }
                SynthKind::Sinusoid => {
                    let along = p.speed * kf;
                    let lateral = p.amplitude * (p.frequency * kf + p.phase).sin();
                    (
                        p.origin.0 + along * heading.cos() - lateral * heading.sin(),
                        p.origin.1 + along * heading.sin() + lateral * heading.cos(),
                    )
                }
                SynthKind::RandomWalk => {
                    if k > 0 {
                        heading += rng.random_range(-0.3..0.3);
                        pos = (pos.0 + p.speed * heading.cos(), pos.1 + p.speed * heading.sin());
                    }
                    pos
                }
            };
            let jitter = JITTER * p.speed.abs().min(p.amplitude);
            points.push(TrajectoryPoint {
                vehicle_id: vehicle_id.clone(),
                timestamp: start_time + SAMPLE_INTERVAL * k as i64,
                lat: (lat + rng.random_range(-jitter..=jitter)).clamp(-90.0, 90.0),
                lon: (lon + rng.random_range(-jitter..=jitter)).clamp(-180.0, 180.0),
            });
        }
        trajectories.push(Trajectory { id: vehicle_id, points });
        params.push(p);
    }
    (trajectories, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        for kind in [SynthKind::RandomWalk, SynthKind::Sinusoid, SynthKind::Circle] {
            assert_eq!(synth_trajectories(5, 3, 50, kind), synth_trajectories(5, 3, 50, kind));
        }
        assert_ne!(synth_trajectories(5, 3, 50, SynthKind::Circle), synth_trajectories(6, 3, 50, SynthKind::Circle));
    }

    #[test]
    fn circle_stays_near_its_center() {
        let (trajs, params) = synth_with_params(9, 4, 200, SynthKind::Circle);
        for (t, p) in trajs.iter().zip(&params) {
            let bound = p.amplitude * (1.0 + 2.0 * JITTER) + 1e-12;
            for pt in &t.points {
                let d = ((pt.lat - p.origin.0).powi(2) + (pt.lon - p.origin.1).powi(2)).sqrt();
                assert!(d <= bound, "{d} > {bound}");
            }
        }
    }

    #[test]
    fn sinusoid_phases_differ() {
        let (trajs, params) = synth_with_params(1, 2, 30, SynthKind::Sinusoid);
        assert_ne!(params[0].phase, params[1].phase);
        assert_ne!(trajs[0].points[0].lat, trajs[1].points[0].lat);
    }

    #[test]
    fn unknown_kind_rejected() {
        assert!("spiral".parse::<SynthKind>().is_err());
        assert_eq!("random-walk".parse::<SynthKind>().unwrap(), SynthKind::RandomWalk);
    }

    #[test]
    fn timestamps_strictly_increase() {
        let trajs = synth_trajectories(2, 2, 20, SynthKind::RandomWalk);
        for t in &trajs {
            assert!(t.points.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        }
    }
}

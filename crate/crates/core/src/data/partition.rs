//! Splitting trajectories into per-client datasets.

use std::collections::BTreeMap;

use crate::data::trajectory::{Trajectory, TrajectoryPoint};
use crate::error::{Error, Result};

/// A run of consecutive points from one source trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub vehicle_id: String,
    /// Index of the first point within its source trajectory.
    pub source_start: usize,
    pub points: Vec<TrajectoryPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientDataset {
    pub client_id: usize,
    pub segments: Vec<Segment>,
}

impl ClientDataset {
    pub fn point_count(&self) -> usize {
        self.segments.iter().map(|s| s.points.len()).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = &TrajectoryPoint> + '_ {
        self.segments.iter().flat_map(|s| s.points.iter())
    }
}

/// Gives each of `n_clients` exactly `points_per_client` consecutive points,
/// walking trajectories in order. A trajectory may be split across two clients.
pub fn partition_equal(
    trajectories: &[Trajectory],
    n_clients: usize,
    points_per_client: usize,
) -> Result<Vec<ClientDataset>> {
    if n_clients == 0 || points_per_client == 0 {
        return Err(Error::invalid("client count and points per client must be positive"));
    }
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let needed = n_clients * points_per_client;
    if total < needed {
        return Err(Error::InsufficientData(format!(
            "{n_clients} clients x {points_per_client} points needs {needed}, dataset has {total}"
        )));
    }

    let mut clients: Vec<ClientDataset> =
        (0..n_clients).map(|client_id| ClientDataset { client_id, segments: Vec::new() }).collect();
    let mut client = 0;
    let mut filled = 0;
    'outer: for traj in trajectories {
        let mut start = 0;
        while start < traj.len() {
            let take = (points_per_client - filled).min(traj.len() - start);
            clients[client].segments.push(Segment {
                vehicle_id: traj.id.clone(),
                source_start: start,
                points: traj.points[start..start + take].to_vec(),
            });
            start += take;
            filled += take;
            if filled == points_per_client {
                client += 1;
                filled = 0;
                if client == n_clients {
                    break 'outer;
                }
            }
        }
    }
    Ok(clients)
}

/// Assigns whole vehicles to clients in sorted-id chunks of `vehicles_per_client`.
/// Vehicles left over after the last full chunk go to the last client.
pub fn partition_by_vehicle(trajectories: &[Trajectory], vehicles_per_client: usize) -> Result<Vec<ClientDataset>> {
    if vehicles_per_client == 0 {
        return Err(Error::invalid("vehicles per client must be positive"));
    }
    let mut by_vehicle: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
    for t in trajectories.iter().filter(|t| !t.is_empty()) {
        by_vehicle.entry(t.id.as_str()).or_default().push(t);
    }
    if by_vehicle.is_empty() {
        return Err(Error::InsufficientData("no vehicles to partition".into()));
    }
    if by_vehicle.len() < vehicles_per_client {
        return Err(Error::InsufficientData(format!(
            "{} vehicles cannot fill a client of {vehicles_per_client}",
            by_vehicle.len()
        )));
    }
    let n_clients = by_vehicle.len() / vehicles_per_client;
    let mut clients: Vec<ClientDataset> =
        (0..n_clients).map(|client_id| ClientDataset { client_id, segments: Vec::new() }).collect();
    for (i, (_, trajs)) in by_vehicle.into_iter().enumerate() {
        let client = (i / vehicles_per_client).min(n_clients - 1);
        for t in trajs {
            clients[client].segments.push(Segment {
                vehicle_id: t.id.clone(),
                source_start: 0,
                points: t.points.clone(),
            });
        }
    }
    Ok(clients)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(id: &str, n: usize) -> Trajectory {
        Trajectory {
            id: id.into(),
            points: (0..n)
                .map(|i| TrajectoryPoint { vehicle_id: id.into(), timestamp: i as i64, lat: 0.0, lon: i as f64 })
                .collect(),
        }
    }

    #[test]
    fn equal_ranges_are_disjoint_and_consecutive() {
        let trajs = vec![traj("a", 30), traj("b", 50), traj("c", 40)];
        let clients = partition_equal(&trajs, 4, 25).unwrap();
        assert_eq!(clients.len(), 4);
        let flat: Vec<(String, i64)> =
            trajs.iter().flat_map(|t| t.points.iter().map(|p| (p.vehicle_id.clone(), p.timestamp))).collect();
        let mut cursor = 0;
        for c in &clients {
            assert_eq!(c.point_count(), 25);
            for p in c.points() {
                assert_eq!((p.vehicle_id.clone(), p.timestamp), flat[cursor]);
                cursor += 1;
            }
        }
        assert_eq!(cursor, 100);
        // client 1 straddles trajectories a and b
        assert_eq!(clients[1].segments.len(), 2);
        assert_eq!(clients[1].segments[1].source_start, 0);
    }

    #[test]
    fn equal_needs_enough_points() {
        assert!(matches!(partition_equal(&[traj("a", 10)], 2, 6), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn vehicles_chunked_with_leftover() {
        let trajs: Vec<Trajectory> = ["h", "b", "a", "g", "c", "e", "d", "f"].iter().map(|v| traj(v, 3)).collect();
        let clients = partition_by_vehicle(&trajs, 4).unwrap();
        assert_eq!(clients.len(), 2);
        let ids: Vec<&str> = clients[0].segments.iter().map(|s| s.vehicle_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);

        let mut more = trajs.clone();
        more.push(traj("i", 3));
        more.push(traj("j", 3));
        let clients = partition_by_vehicle(&more, 4).unwrap();
        assert_eq!(clients.len(), 2);
        let last: Vec<&str> = clients[1].segments.iter().map(|s| s.vehicle_id.as_str()).collect();
        assert_eq!(last, ["e", "f", "g", "h", "i", "j"]);
    }

    #[test]
    fn no_vehicles_is_an_error() {
        assert!(partition_by_vehicle(&[], 1).is_err());
    }
}

//! Trajectory records and their CSV forms.
//!
//! Two layouts are accepted:
//!
//! * standard: header `vehicle_id,timestamp,lat,lon`, timestamps as integer
//!   seconds since the epoch or ISO-8601;
//! * T-Drive style: headerless `id,datetime,longitude,latitude` rows.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub vehicle_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsvLayout {
    #[default]
    Standard,
    Tdrive,
}

/// Result of parsing: grouped trajectories plus counts of dropped rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedTrajectories {
    pub trajectories: Vec<Trajectory>,
    /// Rows whose coordinates were out of bounds.
    pub rejected: usize,
    /// Rows repeating an earlier timestamp of the same vehicle.
    pub duplicates: usize,
}

pub fn in_bounds(lat: f64, lon: f64) -> bool {
    (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

/// Integer seconds, RFC 3339, or a naive `YYYY-MM-DD[ T]HH:MM:SS` taken as UTC.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

pub fn parse_csv(path: impl AsRef<Path>, layout: CsvLayout) -> Result<ParsedTrajectories> {
    let file = File::open(path)?;
    parse_reader(file, layout)
}

pub fn parse_reader<R: Read>(reader: R, layout: CsvLayout) -> Result<ParsedTrajectories> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut by_vehicle: BTreeMap<String, Vec<TrajectoryPoint>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut rejected = 0;

    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 1;
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if line == 1 && layout == CsvLayout::Standard {
            let header: Vec<&str> = record.iter().collect();
            if header == ["vehicle_id", "timestamp", "lat", "lon"] {
                continue;
            }
            return Err(Error::Parse {
                line,
                msg: format!("expected header vehicle_id,timestamp,lat,lon, got {}", header.join(",")),
            });
        }
        if record.len() != 4 {
            return Err(Error::Parse { line, msg: format!("expected 4 fields, got {}", record.len()) });
        }
        let (lat_field, lon_field) = match layout {
            CsvLayout::Standard => (2, 3),
            CsvLayout::Tdrive => (3, 2),
        };
        let vehicle_id = record[0].to_string();
        if vehicle_id.is_empty() {
            return Err(Error::Parse { line, msg: "empty vehicle id".into() });
        }
        let timestamp = parse_timestamp(&record[1])
            .ok_or_else(|| Error::Parse { line, msg: format!("bad timestamp {:?}", &record[1]) })?;
        let coord = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, msg: format!("bad coordinate {:?}", &record[i]) })
        };
        let (lat, lon) = (coord(lat_field)?, coord(lon_field)?);
        if !in_bounds(lat, lon) {
            rejected += 1;
            continue;
        }
        let entry = by_vehicle.entry(vehicle_id.clone()).or_insert_with(|| {
            order.push(vehicle_id.clone());
            Vec::new()
        });
        entry.push(TrajectoryPoint { vehicle_id, timestamp, lat, lon });
    }

    let mut duplicates = 0;
    let trajectories = order
        .into_iter()
        .map(|id| {
            let mut points = by_vehicle.remove(&id).unwrap_or_default();
            points.sort_by_key(|p| p.timestamp);
            let before = points.len();
            points.dedup_by_key(|p| p.timestamp);
            duplicates += before - points.len();
            Trajectory { id, points }
        })
        .collect();
    Ok(ParsedTrajectories { trajectories, rejected, duplicates })
}

/// Writes trajectories in the standard layout with integer timestamps and
/// shortest round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let file = File::create(path)?;
    write_writer(file, trajectories)
}

pub fn write_writer<W: Write>(writer: W, trajectories: &[Trajectory]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["vehicle_id", "timestamp", "lat", "lon"])?;
    for t in trajectories {
        for p in &t.points {
            wtr.write_record([p.vehicle_id.clone(), p.timestamp.to_string(), p.lat.to_string(), p.lon.to_string()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

//! Per-round records and their CSV form.
//!
//! Lists inside a cell are `;`-separated; fields of one list item are
//! `:`-separated. Floats use the shortest representation that parses back
//! to the same value, so a written log re-parses exactly.

use std::fmt::{self, Display};
use std::io::{Read, Write};
use std::str::FromStr;

use crate::collab::{CollabRecord, CollabStatus};
use crate::error::{Error, Result};
use crate::ranking::RankEntry;
use crate::sim::client::Provenance;

/// Column order of `rounds.csv`.
pub const CSV_COLUMNS: [&str; 13] = [
    "variant",
    "round",
    "alpha",
    "global_rmse",
    "online",
    "recovered",
    "offline",
    "selected",
    "ranking",
    "trained",
    "client_rmse",
    "collab",
    "events",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Event {
    /// Online client with no usable window; did not train or report.
    Skipped(usize),
    /// No eligible participant; global model unchanged.
    EmptySelection,
    /// Client spent its last upload this round.
    BudgetExhausted(usize),
    /// Local update produced non-finite values.
    Diverged(usize),
    /// Run stopped early.
    Aborted,
}

impl Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Skipped(k) => write!(f, "skipped:{k}"),
            Event::EmptySelection => f.write_str("empty_selection"),
            Event::BudgetExhausted(k) => write!(f, "budget_exhausted:{k}"),
            Event::Diverged(k) => write!(f, "diverged:{k}"),
            Event::Aborted => f.write_str("aborted"),
        }
    }
}

impl FromStr for Event {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        let id = || arg.parse::<usize>().map_err(|_| Error::invalid(format!("bad event {s:?}")));
        match name {
            "skipped" => Ok(Event::Skipped(id()?)),
            "empty_selection" => Ok(Event::EmptySelection),
            "budget_exhausted" => Ok(Event::BudgetExhausted(id()?)),
            "diverged" => Ok(Event::Diverged(id()?)),
            "aborted" => Ok(Event::Aborted),
            _ => Err(Error::invalid(format!("unknown event {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundLog {
    pub variant: String,
    pub round: usize,
    pub alpha: f64,
    pub global_rmse: f64,
    pub online: Vec<usize>,
    pub recovered: Vec<usize>,
    pub offline: Vec<usize>,
    pub selected: Vec<usize>,
    pub ranking: Vec<RankEntry>,
    /// Clients that ran a local update while online, with their starting point.
    pub trained: Vec<(usize, Provenance)>,
    /// Test RMSE of each client's own model on its holdout; empty on rounds without client evaluation.
    pub client_rmse: Vec<(usize, f64)>,
    pub collab: Vec<CollabRecord>,
    pub events: Vec<Event>,
}

impl RoundLog {
    pub fn new(variant: &str, round: usize) -> Self {
        RoundLog {
            variant: variant.to_string(),
            round,
            alpha: 1.0,
            global_rmse: 0.0,
            online: Vec::new(),
            recovered: Vec::new(),
            offline: Vec::new(),
            selected: Vec::new(),
            ranking: Vec::new(),
            trained: Vec::new(),
            client_rmse: Vec::new(),
            collab: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn mean_client_rmse(&self) -> Option<f64> {
        (!self.client_rmse.is_empty())
            .then(|| self.client_rmse.iter().map(|(_, l)| l).sum::<f64>() / self.client_rmse.len() as f64)
    }

    /// Largest head payload received by one client this round.
    pub fn max_collab_payload(&self) -> usize {
        self.collab.iter().map(|c| c.payload).max().unwrap_or(0)
    }

    fn to_record(&self) -> Vec<String> {
        vec![
            self.variant.clone(),
            self.round.to_string(),
            self.alpha.to_string(),
            self.global_rmse.to_string(),
            join(&self.online, |k| k.to_string()),
            join(&self.recovered, |k| k.to_string()),
            join(&self.offline, |k| k.to_string()),
            join(&self.selected, |k| k.to_string()),
            join(&self.ranking, |e| {
                format!(
                    "{}:{}:{}:{}:{}:{}:{}",
                    e.client_id, e.kl, e.participation, e.n_updates, e.pos_kl, e.pos_participation, e.weight
                )
            }),
            join(&self.trained, |(k, p)| format!("{k}:{}", p.code())),
            join(&self.client_rmse, |(k, l)| format!("{k}:{l}")),
            join(&self.collab, |c| {
                format!(
                    "{}:{}:{}:{}:{}",
                    c.client,
                    status_code(c.status),
                    c.payload,
                    c.source.map_or(String::new(), |s| s.to_string()),
                    c.loss.map_or(String::new(), |l| l.to_string())
                )
            }),
            join(&self.events, |e| e.to_string()),
        ]
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        let bad = |msg: String| Error::Parse { line, msg };
        if rec.len() != CSV_COLUMNS.len() {
            return Err(bad(format!("expected {} columns, found {}", CSV_COLUMNS.len(), rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| bad(format!("{}: not a number: {:?}", CSV_COLUMNS[i], &rec[i])))
        };
        let ids = |i: usize| split(&rec[i], line, |s| parse_field::<usize>(s, line));
        Ok(RoundLog {
            variant: rec[0].to_string(),
            round: parse_field(&rec[1], line)?,
            alpha: num(2)?,
            global_rmse: num(3)?,
            online: ids(4)?,
            recovered: ids(5)?,
            offline: ids(6)?,
            selected: ids(7)?,
            ranking: split(&rec[8], line, |s| {
                let f = fields(s, 7, line)?;
                Ok(RankEntry {
                    client_id: parse_field(f[0], line)?,
                    kl: parse_field(f[1], line)?,
                    participation: parse_field(f[2], line)?,
                    n_updates: parse_field(f[3], line)?,
                    pos_kl: parse_field(f[4], line)?,
                    pos_participation: parse_field(f[5], line)?,
                    weight: parse_field(f[6], line)?,
                })
            })?,
            trained: split(&rec[9], line, |s| {
                let f = fields(s, 2, line)?;
                let code = f[1].chars().next().and_then(Provenance::from_code);
                Ok((parse_field(f[0], line)?, code.ok_or_else(|| bad(format!("bad provenance {s:?}")))?))
            })?,
            client_rmse: split(&rec[10], line, |s| {
                let f = fields(s, 2, line)?;
                Ok((parse_field(f[0], line)?, parse_field(f[1], line)?))
            })?,
            collab: split(&rec[11], line, |s| {
                let f = fields(s, 5, line)?;
                Ok(CollabRecord {
                    client: parse_field(f[0], line)?,
                    status: status_from_code(f[1]).ok_or_else(|| bad(format!("bad collab status {s:?}")))?,
                    payload: parse_field(f[2], line)?,
                    source: optional(f[3], line)?,
                    loss: optional(f[4], line)?,
                })
            })?,
            events: split(&rec[12], line, |s| s.parse::<Event>().map_err(|e| bad(e.to_string())))?,
        })
    }
}

fn status_code(s: CollabStatus) -> &'static str {
    match s {
        CollabStatus::Refreshed => "ok",
        CollabStatus::NoWindows => "nodata",
        CollabStatus::Diverged => "diverged",
    }
}

fn status_from_code(s: &str) -> Option<CollabStatus> {
    match s {
        "ok" => Some(CollabStatus::Refreshed),
        "nodata" => Some(CollabStatus::NoWindows),
        "diverged" => Some(CollabStatus::Diverged),
        _ => None,
    }
}

fn join<T>(items: &[T], f: impl Fn(&T) -> String) -> String {
    items.iter().map(f).collect::<Vec<_>>().join(";")
}

fn split<T>(cell: &str, _line: usize, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    if cell.is_empty() {
        return Ok(Vec::new());
    }
    cell.split(';').map(f).collect()
}

fn fields(item: &str, n: usize, line: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = item.split(':').collect();
    if f.len() != n {
        return Err(Error::Parse { line, msg: format!("expected {n} fields in {item:?}") });
    }
    Ok(f)
}

fn parse_field<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse { line, msg: format!("cannot parse {s:?}") })
}

fn optional<T: FromStr>(s: &str, line: usize) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_field(s, line).map(Some)
    }
}

pub fn write_rounds_csv<W: Write>(writer: W, logs: &[RoundLog]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for log in logs {
        w.write_record(log.to_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rounds_csv<R: Read>(reader: R) -> Result<Vec<RoundLog>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(CSV_COLUMNS) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    r.records().enumerate().map(|(i, rec)| RoundLog::from_record(&rec?, i + 2)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_log() -> RoundLog {
        let mut log = RoundLog::new("FedDeCAB", 4);
        log.alpha = 1.9666666666666666;
        log.global_rmse = 0.123456789012345;
        log.online = vec![0, 2, 3];
        log.recovered = vec![3];
        log.offline = vec![1];
        log.selected = vec![2];
        log.ranking = vec![RankEntry {
            client_id: 2,
            kl: 1e-7,
            participation: 0.25,
            n_updates: 1,
            pos_kl: 1,
            pos_participation: 2,
            weight: 3.3,
        }];
        log.trained = vec![(0, Provenance::Global), (3, Provenance::Collaborative)];
        log.client_rmse = vec![(0, 0.5), (1, f64::MIN_POSITIVE)];
        log.collab = vec![
            CollabRecord { client: 1, status: CollabStatus::Refreshed, payload: 198, source: Some(0), loss: Some(0.1) },
            CollabRecord { client: 5, status: CollabStatus::NoWindows, payload: 0, source: None, loss: None },
        ];
        log.events = vec![Event::Skipped(4), Event::BudgetExhausted(2), Event::EmptySelection];
        log
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let logs = vec![sample_log(), RoundLog::new("FedAvg", 1)];
        let mut buf = Vec::new();
        write_rounds_csv(&mut buf, &logs).unwrap();
        assert_eq!(read_rounds_csv(buf.as_slice()).unwrap(), logs);
    }

    #[test]
    fn single_round_has_header_and_one_row() {
        let mut buf = Vec::new();
        write_rounds_csv(&mut buf, &[RoundLog::new("FedAvg", 1)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("variant,round,alpha,global_rmse,"));
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = format!("{}\nFedAvg,x,1,0,,,,,,,,,\n", CSV_COLUMNS.join(","));
        assert!(matches!(read_rounds_csv(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}

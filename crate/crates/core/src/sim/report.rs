//! Output files: `rounds.csv`, `summary.json`, `curves.svg`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::log::{read_rounds_csv, write_rounds_csv, RoundLog};

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.svg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: String,
    pub rounds: usize,
    pub final_rmse: f64,
    pub best_rmse: f64,
    pub best_round: usize,
    pub final_client_rmse: Option<f64>,
    pub uploads: usize,
    pub aborted: bool,
}

/// Groups logs by variant, keeping first-appearance order.
pub fn group_by_variant(logs: &[RoundLog]) -> Vec<(String, Vec<&RoundLog>)> {
    let mut groups: Vec<(String, Vec<&RoundLog>)> = Vec::new();
    for log in logs {
        match groups.iter_mut().find(|(v, _)| *v == log.variant) {
            Some((_, g)) => g.push(log),
            None => groups.push((log.variant.clone(), vec![log])),
        }
    }
    groups
}

pub fn summarize(logs: &[RoundLog]) -> Vec<VariantSummary> {
    group_by_variant(logs)
        .into_iter()
        .map(|(variant, rounds)| {
            let finite: Vec<&&RoundLog> = rounds.iter().filter(|l| l.global_rmse.is_finite()).collect();
            let best = finite.iter().min_by(|a, b| a.global_rmse.total_cmp(&b.global_rmse).then(a.round.cmp(&b.round)));
            VariantSummary {
                variant,
                rounds: rounds.len(),
                final_rmse: finite.last().map_or(f64::NAN, |l| l.global_rmse),
                best_rmse: best.map_or(f64::NAN, |l| l.global_rmse),
                best_round: best.map_or(0, |l| l.round),
                final_client_rmse: rounds.iter().rev().find_map(|l| l.mean_client_rmse()),
                uploads: rounds.iter().map(|l| l.selected.len()).sum(),
                aborted: rounds.iter().any(|l| l.events.contains(&crate::sim::log::Event::Aborted)),
            }
        })
        .collect()
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Global RMSE against round, one polyline per variant.
pub fn render_svg(logs: &[RoundLog]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 170.0;
    const TOP: f64 = 30.0;
    const BOTTOM: f64 = 50.0;
    let groups = group_by_variant(logs);
    let points = logs.iter().filter(|l| l.global_rmse.is_finite());
    let max_round = points.clone().map(|l| l.round).max().unwrap_or(1).max(1) as f64;
    let (lo, hi) =
        points.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| (lo.min(l.global_rmse), hi.max(l.global_rmse)));
    let (lo, hi) = if lo.is_finite() { (0.0f64.min(lo), if hi > lo { hi } else { lo + 1.0 }) } else { (0.0, 1.0) };
    let x = |r: f64| LEFT + (r - 1.0).max(0.0) / (max_round - 1.0).max(1.0) * (W - LEFT - RIGHT);
    let y = |v: f64| TOP + (1.0 - (v - lo) / (hi - lo)) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{x0} {y0} L{x0} {y1} L{x1} {y1}" fill="none" stroke="black"/>"#);
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.4}</text>"#, LEFT - 6.0, y(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" >1</text>"#, y1 + 18.0);
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="end">{max_round}</text>"#, y1 + 18.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#, (x0 + x1) / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">test RMSE</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, (variant, rounds)) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = rounds
            .iter()
            .filter(|l| l.global_rmse.is_finite())
            .map(|l| format!("{:.2},{:.2}", x(l.round as f64), y(l.global_rmse)))
            .collect();
        let label = escape(variant);
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"><title>{label}</title></polyline>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 15.0,
            x1 + 35.0
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}">{label}</text>"#, x1 + 40.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes all three files into `out_dir`, creating it if needed.
pub fn emit_reports(logs: &[RoundLog], out_dir: &Path) -> Result<()> {
    if logs.is_empty() {
        return Err(Error::invalid("no rounds to report"));
    }
    std::fs::create_dir_all(out_dir)?;
    write_rounds_csv(BufWriter::new(File::create(out_dir.join(ROUNDS_FILE))?), logs)?;
    write_summary_and_plot(logs, out_dir)
}

fn write_summary_and_plot(logs: &[RoundLog], out_dir: &Path) -> Result<()> {
    let summary: BTreeMap<String, VariantSummary> =
        summarize(logs).into_iter().map(|s| (s.variant.clone(), s)).collect();
    std::fs::write(out_dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
    std::fs::write(out_dir.join(CURVES_FILE), render_svg(logs))?;
    Ok(())
}

/// Re-renders the summary and chart from an existing `rounds.csv`.
pub fn plot_from_dir(dir: &Path) -> Result<Vec<RoundLog>> {
    let logs = read_rounds_csv(File::open(dir.join(ROUNDS_FILE))?)?;
    if logs.is_empty() {
        return Err(Error::invalid(format!("{} has no rows", dir.join(ROUNDS_FILE).display())));
    }
    write_summary_and_plot(&logs, dir)?;
    Ok(logs)
}

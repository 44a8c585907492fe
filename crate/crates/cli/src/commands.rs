use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use glmb::engine::{run, ScanDiagnostics};
use glmb::io;
use glmb::metrics::{ospa2_windowed, ospa_series, MetricConfig, Track, WindowSpec};
use glmb::sim::{simulate, true_cardinality};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const TRUTH_FILE: &str = "truth.tracks";
pub const SCANS_FILE: &str = "scans.jsonl";
pub const ESTIMATES_FILE: &str = "est.tracks";
pub const DIAGNOSTICS_FILE: &str = "diag.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const OSPA2_FILE: &str = "ospa2.csv";
pub const OSPA_FILE: &str = "ospa.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CARDINALITY_FILE: &str = "cardinality.csv";
pub const DENSITY_FILE: &str = "density.csv";

/// Per-scan diagnostics as written to disk. Wall time goes to its own file
/// so that reruns produce identical diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagRow {
    pub scan: u32,
    pub measurements: usize,
    pub birth_candidates: usize,
    pub groups: usize,
    pub max_group_size: usize,
    pub gate_prob_used: f64,
    pub labels: usize,
    pub components: usize,
    pub estimated_cardinality: usize,
    pub mean_cardinality: f64,
}

impl From<&ScanDiagnostics> for DiagRow {
    fn from(d: &ScanDiagnostics) -> Self {
        Self {
            scan: d.scan,
            measurements: d.measurements,
            birth_candidates: d.birth_candidates,
            groups: d.groups,
            max_group_size: d.max_group_size,
            gate_prob_used: d.gate_prob_used,
            labels: d.labels,
            components: d.components,
            estimated_cardinality: d.estimated_cardinality,
            mean_cardinality: d.mean_cardinality,
        }
    }
}

#[derive(Debug, Serialize)]
struct TimingRow {
    scan: u32,
    wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ospa2Row {
    pub scan: u32,
    pub ospa2: f64,
}

#[derive(Debug, Serialize)]
struct OspaRow {
    scan: u32,
    ospa: f64,
}

#[derive(Debug, Serialize)]
struct CardinalityRow {
    scan: u32,
    truth: usize,
    estimated: usize,
    mean_estimated: f64,
}

#[derive(Debug, Serialize)]
struct DensityRow {
    x: f64,
    y: f64,
    truth: f64,
    estimate: f64,
}

fn runtime(e: glmb::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn input(path: &Path) -> impl Fn(glmb::Error) -> CliError + '_ {
    move |e| CliError::Usage(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(std::fs::File) -> glmb::Result<()>,
{
    let file = io::create(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    f(file).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn read_tracks(path: &Path) -> Result<Vec<Track>, CliError> {
    let f = io::open(path).map_err(input(path))?;
    io::read_tracks(f).map_err(input(path))
}

pub fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let f = io::open(path).map_err(input(path))?;
    io::read_csv(f).map_err(input(path))
}

/// Writes `truth.tracks` and `scans.jsonl` into `out`.
pub fn simulate_cmd(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let scenario = simulate(&cfg.scenario).map_err(runtime)?;
    create_dir(out)?;
    write_with(&out.join(TRUTH_FILE), |f| io::write_tracks(f, &scenario.truth))?;
    write_with(&out.join(SCANS_FILE), |f| io::write_scans(f, &scenario.scans))?;
    Ok(())
}

/// Runs the tracker over `scans` and writes estimates and diagnostics.
pub fn track_cmd(cfg: &RunConfig, scans: &Path, out: &Path) -> Result<(), CliError> {
    let f = io::open(scans).map_err(input(scans))?;
    let data = io::read_scans(f).map_err(input(scans))?;
    let result = run(&data, &cfg.models(), &cfg.tracker).map_err(runtime)?;
    create_dir(out)?;
    write_with(&out.join(ESTIMATES_FILE), |f| io::write_tracks(f, &result.tracks))?;
    let diag: Vec<DiagRow> = result.diagnostics.iter().map(DiagRow::from).collect();
    write_with(&out.join(DIAGNOSTICS_FILE), |f| io::write_csv(f, &diag))?;
    let timing: Vec<TimingRow> = result
        .diagnostics
        .iter()
        .map(|d| TimingRow {
            scan: d.scan,
            wall_time_s: d.wall_time_s,
        })
        .collect();
    write_with(&out.join(TIMING_FILE), |f| io::write_csv(f, &timing))?;
    Ok(())
}

fn last_scan(tracks: &[Track]) -> u32 {
    tracks.iter().filter_map(|t| t.times().last().copied()).max().unwrap_or(0)
}

/// Writes `ospa2.csv`, plus `ospa.csv` for a window of one scan.
pub fn evaluate_cmd(
    truth: &Path,
    estimates: &Path,
    metric: &MetricConfig,
    window: &WindowSpec,
    out: &Path,
) -> Result<(), CliError> {
    let x = read_tracks(truth)?;
    let y = read_tracks(estimates)?;
    let horizon = 1..=last_scan(&x).max(last_scan(&y));
    let rows: Vec<Ospa2Row> = ospa2_windowed(&x, &y, metric, window, horizon.clone())
        .into_iter()
        .map(|(scan, ospa2)| Ospa2Row { scan, ospa2 })
        .collect();
    create_dir(out)?;
    write_with(&out.join(OSPA2_FILE), |f| io::write_csv(f, &rows))?;
    if window.length == 1 {
        let rows: Vec<OspaRow> = ospa_series(&x, &y, metric, horizon)
            .into_iter()
            .map(|(scan, ospa)| OspaRow { scan, ospa })
            .collect();
        write_with(&out.join(OSPA_FILE), |f| io::write_csv(f, &rows))?;
    }
    Ok(())
}

pub struct ReportInputs {
    pub diagnostics: PathBuf,
    pub ospa2: PathBuf,
    pub truth: PathBuf,
    pub estimates: PathBuf,
    pub cell: f64,
}

/// Builds the summary text and writes it with the cardinality and density
/// tables. Returns the summary.
pub fn report_cmd(inputs: &ReportInputs, out: &Path) -> Result<String, CliError> {
    if !(inputs.cell > 0.0) {
        return Err(CliError::Usage("grid cell size must be positive".into()));
    }
    let diag: Vec<DiagRow> = read_csv(&inputs.diagnostics)?;
    let ospa2: Vec<Ospa2Row> = read_csv(&inputs.ospa2)?;
    let truth = read_tracks(&inputs.truth)?;
    let est = read_tracks(&inputs.estimates)?;
    if diag.is_empty() {
        return Err(CliError::Usage(format!("{}: no scans", inputs.diagnostics.display())));
    }
    if truth.iter().all(|t| t.is_empty()) && est.iter().all(|t| t.is_empty()) {
        return Err(CliError::Usage("truth and estimates are both empty".into()));
    }

    let scans = diag.last().map_or(0, |d| d.scan);
    let true_card = true_cardinality(&truth, scans);
    let cardinality: Vec<CardinalityRow> = diag
        .iter()
        .map(|d| CardinalityRow {
            scan: d.scan,
            truth: true_card.get(d.scan as usize).copied().unwrap_or(0),
            estimated: d.estimated_cardinality,
            mean_estimated: d.mean_cardinality,
        })
        .collect();
    let density = density_grid(&truth, &est, inputs.cell, diag.len());

    let (peak_true_scan, peak_true) = cardinality
        .iter()
        .map(|r| (r.scan, r.truth))
        .max_by_key(|&(s, c)| (c, std::cmp::Reverse(s)))
        .unwrap_or((0, 0));
    let (peak_est_scan, peak_est) = cardinality
        .iter()
        .map(|r| (r.scan, r.estimated))
        .max_by_key(|&(s, c)| (c, std::cmp::Reverse(s)))
        .unwrap_or((0, 0));
    let mae = cardinality.iter().map(|r| (r.estimated as f64 - r.truth as f64).abs()).sum::<f64>() / cardinality.len() as f64;
    let max_group = diag.iter().map(|d| d.max_group_size).max().unwrap_or(0);
    let min_gate = diag.iter().map(|d| d.gate_prob_used).fold(f64::INFINITY, f64::min);

    let mut s = String::new();
    let _ = writeln!(s, "scans: {}", diag.len());
    let _ = writeln!(s, "true tracks: {}", truth.len());
    let _ = writeln!(s, "estimated tracks: {}", est.len());
    let _ = writeln!(s, "peak true cardinality: {peak_true} (scan {peak_true_scan})");
    let _ = writeln!(s, "peak estimated cardinality: {peak_est} (scan {peak_est_scan})");
    let _ = writeln!(s, "mean absolute cardinality error: {mae:.4}");
    let _ = writeln!(s, "max group size: {max_group}");
    let _ = writeln!(s, "smallest gate probability: {min_gate}");
    if let Some(last) = ospa2.last() {
        let mean = ospa2.iter().map(|r| r.ospa2).sum::<f64>() / ospa2.len() as f64;
        let _ = writeln!(s, "mean OSPA2: {mean:.4}");
        let _ = writeln!(s, "final OSPA2: {:.4} (scan {})", last.ospa2, last.scan);
    }

    create_dir(out)?;
    std::fs::write(out.join(SUMMARY_FILE), &s).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_with(&out.join(CARDINALITY_FILE), |f| io::write_csv(f, &cardinality))?;
    write_with(&out.join(DENSITY_FILE), |f| io::write_csv(f, &density))?;
    Ok(s)
}

/// Mean number of objects per scan in each grid cell, for truth and
/// estimates, over the cells either of them visits.
fn density_grid(truth: &[Track], est: &[Track], cell: f64, scans: usize) -> Vec<DensityRow> {
    let mut counts: BTreeMap<(i64, i64), (usize, usize)> = BTreeMap::new();
    let key = |x: f64, y: f64| ((x / cell).floor() as i64, (y / cell).floor() as i64);
    for t in truth {
        for s in t.states() {
            counts.entry(key(s[0], s[1])).or_default().0 += 1;
        }
    }
    for t in est {
        for s in t.states() {
            counts.entry(key(s[0], s[1])).or_default().1 += 1;
        }
    }
    let n = scans.max(1) as f64;
    counts
        .into_iter()
        .map(|((i, j), (a, b))| DensityRow {
            x: (i as f64 + 0.5) * cell,
            y: (j as f64 + 0.5) * cell,
            truth: a as f64 / n,
            estimate: b as f64 / n,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use glmb::linalg::State;

    use super::*;

    #[test]
    fn density_grid_bins_by_cell() {
        let t = vec![Track::from_pairs("a", [(1, State::new(5.0, 5.0, 0.0, 0.0)), (2, State::new(15.0, 5.0, 0.0, 0.0))])];
        let e = vec![Track::from_pairs("b", [(1, State::new(6.0, 4.0, 0.0, 0.0))])];
        let g = density_grid(&t, &e, 10.0, 2);
        assert_eq!(g.len(), 2);
        assert_eq!((g[0].x, g[0].y, g[0].truth, g[0].estimate), (5.0, 5.0, 0.5, 0.5));
        assert_eq!((g[1].x, g[1].y, g[1].truth, g[1].estimate), (15.0, 5.0, 0.5, 0.0));
    }
}

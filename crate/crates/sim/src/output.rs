//! CSV files written by the command-line tool.
//!
//! Every file is rendered in memory first and only then written, so a failed
//! run leaves no half-written output. Wall-clock timings never go into the
//! data files: they change from run to run and live in `*.timing.csv`
//! sidecars, which keeps the data files byte-identical for a given seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use control_tree::acc::AccPlan;
use control_tree::slalom::SlalomPlan;
use control_tree::SolveReport;
use serde::Serialize;

use crate::batch::{BatchRow, SummaryRow};
use crate::bench::ScaleRow;
use crate::episode::{CycleRecord, EpisodeMetrics};
use crate::error::{Result, SimError};

/// A file to be written: its path and full contents.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputFile {
    pub path: PathBuf,
    pub contents: String,
}

impl OutputFile {
    pub fn new(path: impl Into<PathBuf>, contents: String) -> Self {
        Self {
            path: path.into(),
            contents,
        }
    }
}

/// `dir/name` with `.timing` inserted before the extension.
pub fn sidecar(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "csv".into());
    path.with_file_name(format!("{stem}.{tag}.{ext}"))
}

/// Writes all files: each goes to a temporary name in its directory, and
/// the renames happen only once every write has succeeded.
pub fn write_all(files: &[OutputFile]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    let cleanup = |staged: &[PathBuf]| {
        for p in staged {
            let _ = fs::remove_file(p);
        }
    };
    for f in files {
        if let Some(dir) = f.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            if let Err(e) = fs::create_dir_all(dir) {
                cleanup(&staged);
                return Err(SimError::io(dir, e));
            }
        }
        let tmp = f.path.with_file_name(format!(
            ".{}.partial",
            f.path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
        ));
        if let Err(e) = fs::write(&tmp, &f.contents) {
            cleanup(&staged);
            return Err(SimError::io(&tmp, e));
        }
        staged.push(tmp);
    }
    for (f, tmp) in files.iter().zip(&staged) {
        fs::rename(tmp, &f.path).map_err(|e| SimError::io(&f.path, e))?;
    }
    Ok(())
}

fn to_csv<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Header-only output when there are no rows would be empty; keep headers.
fn to_csv_with_header<T: Serialize>(header: &[&str], rows: impl IntoIterator<Item = T>) -> Result<String> {
    let body = to_csv(rows)?;
    if body.is_empty() {
        Ok(format!("{}\n", header.join(",")))
    } else {
        Ok(body)
    }
}

#[derive(Serialize)]
struct MetricsCsvRow<'a> {
    cell: &'a str,
    seed: u64,
    controller: String,
    status: &'a str,
    cycles: Option<usize>,
    avg_cost: Option<f64>,
    realized_cost: Option<f64>,
    avg_speed_mps: Option<f64>,
    distance_m: Option<f64>,
    collisions: Option<usize>,
    violations: Option<usize>,
    nonconverged: Option<usize>,
    planner_failures: Option<usize>,
    mean_iterations: Option<f64>,
    max_branches: Option<usize>,
}

const METRICS_HEADER: &[&str] = &[
    "cell",
    "seed",
    "controller",
    "status",
    "cycles",
    "avg_cost",
    "realized_cost",
    "avg_speed_mps",
    "distance_m",
    "collisions",
    "violations",
    "nonconverged",
    "planner_failures",
    "mean_iterations",
    "max_branches",
];

fn metrics_row<'a>(cell: &'a str, seed: u64, controller: String, outcome: std::result::Result<&EpisodeMetrics, &'a str>) -> MetricsCsvRow<'a> {
    let m = outcome.ok();
    MetricsCsvRow {
        cell,
        seed,
        controller,
        status: match outcome {
            Ok(_) => "ok",
            Err(msg) => msg,
        },
        cycles: m.map(|m| m.cycles),
        avg_cost: m.map(|m| m.avg_cost),
        realized_cost: m.map(|m| m.realized_cost),
        avg_speed_mps: m.map(|m| m.avg_speed),
        distance_m: m.map(|m| m.distance),
        collisions: m.map(|m| m.collisions),
        violations: m.map(|m| m.violations),
        nonconverged: m.map(|m| m.nonconverged),
        planner_failures: m.map(|m| m.failures),
        mean_iterations: m.map(|m| m.mean_iterations),
        max_branches: m.map(|m| m.max_branches),
    }
}

#[derive(Serialize)]
struct TimingCsvRow<'a> {
    cell: &'a str,
    seed: u64,
    controller: String,
    plan_mean_ms: f64,
    plan_p95_ms: f64,
    plan_max_ms: f64,
}

/// Per-episode metrics of a batch, and the timing sidecar.
pub fn batch_files(path: &Path, rows: &[BatchRow]) -> Result<Vec<OutputFile>> {
    let data = to_csv_with_header(
        METRICS_HEADER,
        rows.iter().map(|r| {
            metrics_row(&r.cell, r.seed, r.controller.to_string(), r.outcome.as_ref().map_err(String::as_str))
        }),
    )?;
    let timing = to_csv(rows.iter().filter_map(|r| {
        r.outcome.as_ref().ok().map(|m| TimingCsvRow {
            cell: &r.cell,
            seed: r.seed,
            controller: r.controller.to_string(),
            plan_mean_ms: m.timing.mean_ms,
            plan_p95_ms: m.timing.p95_ms,
            plan_max_ms: m.timing.max_ms,
        })
    }))?;
    Ok(vec![
        OutputFile::new(path, data),
        OutputFile::new(sidecar(path, "timing"), timing),
    ])
}

#[derive(Serialize)]
struct SummaryCsvRow<'a> {
    cell: &'a str,
    scenario: String,
    controller: String,
    episodes: usize,
    failed_episodes: usize,
    avg_cost: f64,
    realized_cost: f64,
    avg_speed_mps: f64,
    collisions: usize,
    violations: usize,
    nonconverged: usize,
    planner_failures: usize,
    mean_iterations: f64,
}

/// Per-(cell, controller) means. Timing means go to the sidecar.
pub fn summary_files(path: &Path, rows: &[SummaryRow]) -> Result<Vec<OutputFile>> {
    let data = to_csv(rows.iter().map(|s| SummaryCsvRow {
        cell: &s.cell,
        scenario: s.kind.to_string(),
        controller: s.controller.to_string(),
        episodes: s.episodes,
        failed_episodes: s.failed_episodes,
        avg_cost: s.avg_cost,
        realized_cost: s.realized_cost,
        avg_speed_mps: s.avg_speed,
        collisions: s.collisions,
        violations: s.violations,
        nonconverged: s.nonconverged,
        planner_failures: s.planner_failures,
        mean_iterations: s.mean_iterations,
    }))?;
    #[derive(Serialize)]
    struct Row<'a> {
        cell: &'a str,
        controller: String,
        plan_mean_ms: f64,
    }
    let timing = to_csv(rows.iter().map(|s| Row {
        cell: &s.cell,
        controller: s.controller.to_string(),
        plan_mean_ms: s.plan_mean_ms,
    }))?;
    Ok(vec![
        OutputFile::new(path, data),
        OutputFile::new(sidecar(path, "timing"), timing),
    ])
}

/// A single episode: one metrics row, its timing sidecar and, if given, the
/// per-cycle trace.
pub fn episode_files(path: &Path, metrics: &EpisodeMetrics, trace: Option<(&Path, &[CycleRecord])>) -> Result<Vec<OutputFile>> {
    let row = BatchRow {
        cell: metrics.kind.to_string(),
        seed: metrics.seed,
        controller: metrics.controller,
        outcome: Ok(metrics.clone()),
    };
    let mut files = batch_files(path, std::slice::from_ref(&row))?;
    if let Some((trace_path, records)) = trace {
        files.push(OutputFile::new(trace_path, trace_csv(records)?));
    }
    Ok(files)
}

#[derive(Serialize)]
struct TraceCsvRow {
    t_s: f64,
    x_m: f64,
    y_m: f64,
    heading_rad: f64,
    speed_mps: f64,
    command: f64,
    yaw_rate_radps: f64,
    planned_cost: f64,
    iterations: usize,
    converged: bool,
    branches: usize,
}

pub fn trace_csv(records: &[CycleRecord]) -> Result<String> {
    to_csv(records.iter().map(|r| TraceCsvRow {
        t_s: r.t,
        x_m: r.x,
        y_m: r.y,
        heading_rad: r.heading,
        speed_mps: r.speed,
        command: r.command,
        yaw_rate_radps: r.yaw_rate,
        planned_cost: r.planned_cost,
        iterations: r.iterations,
        converged: r.converged,
        branches: r.branches,
    }))
}

#[derive(Serialize)]
struct AccTreeRow {
    branch: usize,
    p_branch: f64,
    stop_m: Option<f64>,
    step: usize,
    t_s: f64,
    x_m: f64,
    v_mps: f64,
    /// Control applied from this state; empty on the last row.
    u_mps2: Option<f64>,
}

/// Every branch of an ACC plan as rolled-out states with their controls.
pub fn acc_tree_csv(plan: &AccPlan) -> Result<String> {
    let dt = plan.tree().horizon().dt;
    let mut rows = Vec::new();
    for (s, h) in plan.hypotheses.iter().enumerate() {
        let controls = plan.tree().branch(s);
        for (k, st) in plan.branch_states(s).iter().enumerate() {
            rows.push(AccTreeRow {
                branch: s,
                p_branch: h.weight,
                stop_m: h.stop_position,
                step: k,
                t_s: k as f64 * dt,
                x_m: st.x,
                v_mps: st.v,
                u_mps2: controls.get(k).copied(),
            });
        }
    }
    to_csv(rows)
}

#[derive(Serialize)]
struct SlalomTreeRow {
    branch: usize,
    p_branch: f64,
    obstacles_present: usize,
    step: usize,
    t_s: f64,
    x_m: f64,
    y_m: f64,
    theta_rad: f64,
}

/// Every branch of a slalom plan as poses, starting at the current pose.
pub fn slalom_tree_csv(plan: &SlalomPlan) -> Result<String> {
    let dt = plan.solution.tree.horizon().dt;
    let mut rows = Vec::new();
    for (s, h) in plan.hypotheses.iter().enumerate() {
        for (k, q) in std::iter::once(plan.q0).chain(plan.branch_poses(s)).enumerate() {
            rows.push(SlalomTreeRow {
                branch: s,
                p_branch: h.weight,
                obstacles_present: h.obstacles.len(),
                step: k,
                t_s: k as f64 * dt,
                x_m: q.x,
                y_m: q.y,
                theta_rad: q.theta,
            });
        }
    }
    to_csv(rows)
}

#[derive(Serialize)]
struct ReportRow {
    iteration: usize,
    aula_primal: f64,
    aula_dual: f64,
    admm_primal: f64,
    admm_dual: f64,
    newton_steps: usize,
    evaluations: usize,
}

#[derive(Serialize)]
struct PhaseRow {
    iteration: usize,
    phase1_ms: f64,
    phase2_ms: f64,
}

/// Residual history of a solve, and the per-phase times as a sidecar.
pub fn report_files(path: &Path, report: &SolveReport) -> Result<Vec<OutputFile>> {
    let data = to_csv(report.history.iter().map(|r| ReportRow {
        iteration: r.iteration,
        aula_primal: r.residuals.aula_primal,
        aula_dual: r.residuals.aula_dual,
        admm_primal: r.residuals.admm_primal,
        admm_dual: r.residuals.admm_dual,
        newton_steps: r.newton_steps,
        evaluations: r.evaluations,
    }))?;
    let timing = to_csv(report.history.iter().map(|r| PhaseRow {
        iteration: r.iteration,
        phase1_ms: r.phase1.as_secs_f64() * 1e3,
        phase2_ms: r.phase2.as_secs_f64() * 1e3,
    }))?;
    Ok(vec![
        OutputFile::new(path, data),
        OutputFile::new(sidecar(path, "timing"), timing),
    ])
}

/// The scale benchmark. All of it is timing, so there is no sidecar.
pub fn scale_csv(rows: &[ScaleRow]) -> Result<String> {
    to_csv(rows)
}

/// A small TOML note next to a results file: when it was produced and how
/// to read the cost columns.
pub fn metadata_file(path: &Path, command: &str, seed: u64) -> OutputFile {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let text = format!(
        "command = \"{command}\"\n\
         seed = {seed}\n\
         created_unix_s = {secs}\n\
         version = \"{}\"\n\
         avg_cost = \"planned cost over the control horizon, divided by its step count, averaged over planning cycles\"\n\
         realized_cost = \"stage cost of the executed motion, averaged over executed steps\"\n",
        env!("CARGO_PKG_VERSION")
    );
    OutputFile::new(sidecar(path, "meta").with_extension("toml"), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("out/m.csv"), "timing"), PathBuf::from("out/m.timing.csv"));
        assert_eq!(sidecar(Path::new("m"), "timing"), PathBuf::from("m.timing.csv"));
        assert_eq!(metadata_file(Path::new("a/b.csv"), "x", 1).path, PathBuf::from("a/b.meta.toml"));
    }

    #[test]
    fn empty_batch_keeps_the_header() {
        let files = batch_files(Path::new("m.csv"), &[]).unwrap();
        assert!(files[0].contents.starts_with("cell,seed,controller,status"));
    }

    #[test]
    fn write_all_creates_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![
            OutputFile::new(dir.path().join("a.csv"), "x\n1\n".into()),
            OutputFile::new(dir.path().join("sub/b.csv"), "y\n2\n".into()),
        ];
        write_all(&files).unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("sub/b.csv")).unwrap(), "y\n2\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".partial"))
            .collect();
        assert!(leftovers.is_empty());
    }

    #[test]
    fn failed_write_leaves_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "").unwrap();
        let files = vec![
            OutputFile::new(dir.path().join("a.csv"), "x\n".into()),
            OutputFile::new(blocker.join("b.csv"), "y\n".into()),
        ];
        assert!(write_all(&files).is_err());
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["file".to_string()]);
    }
}

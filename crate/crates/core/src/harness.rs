//! Batch drivers behind the `ksim` binary: single runs, parameter sweeps and
//! plot-script emission.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, RunConfig, SweepConfig};
use crate::diagnostics::{verdicts, write_series_csv, BoundReport, DiagnosticsRecord, Monitor, RunContext, RECORD_COLUMNS};
use crate::integrator::{run, Observer, StepStatus};
use crate::model::SimState;

/// Exit code for configuration and I/O problems.
pub const EXIT_CONFIG: i32 = 1;
/// Exit code when a diagnostic cannot be evaluated (`v ≤ 0` under a logarithm).
pub const EXIT_DIAGNOSTICS: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: StepStatus,
    pub exit_code: i32,
    pub detail: Option<String>,
    pub steps: u64,
    pub wall_time: Duration,
    pub max_sup_u: f64,
    pub final_state: SimState,
    pub series: Vec<DiagnosticsRecord>,
    pub report: BoundReport,
}

/// Runs one configuration. When `output_dir` is given it receives
/// `series.csv`, `bounds.json`, `summary.txt` and a `checkpoint/` directory.
pub fn run_single(cfg: &RunConfig, output_dir: Option<&Path>) -> Result<RunOutcome, HarnessError> {
    run_observed(cfg, output_dir, &mut |_: &SimState| {})
}

struct Tee<'a> {
    monitor: &'a mut Monitor,
    extra: &'a mut dyn Observer,
}

impl Observer for Tee<'_> {
    fn on_step(&mut self, before: &SimState, after: &SimState) {
        self.monitor.on_step(before, after);
        self.extra.on_step(before, after);
    }

    fn on_sample(&mut self, state: &SimState) {
        self.monitor.on_sample(state);
        self.extra.on_sample(state);
    }
}

/// [`run_single`] with an additional observer that sees every state the
/// diagnostics monitor sees.
pub fn run_observed(
    cfg: &RunConfig,
    output_dir: Option<&Path>,
    extra: &mut dyn Observer,
) -> Result<RunOutcome, HarnessError> {
    let init = cfg.initial_data()?;
    let control = cfg.control.resolve(init.u0.max()).map_err(ConfigError::from)?;
    let diagnostics = cfg.diagnostics.clone().validate().map_err(ConfigError::from)?;
    let mut monitor = Monitor::new(diagnostics.clone(), cfg.params, control.t_end);
    let summary = run(
        &init,
        &cfg.params,
        &control,
        &cfg.solver,
        diagnostics.sample_interval,
        &mut Tee {
            monitor: &mut monitor,
            extra,
        },
    )
    .map_err(ConfigError::from)?;

    let tau = monitor.tau();
    let diag_error = monitor.error().cloned();
    let series = monitor.into_series();
    let ctx = RunContext {
        grid: cfg.grid,
        blowup_threshold: control.blowup_threshold,
        tau,
    };
    let report = verdicts(&series, &cfg.params, &diagnostics, &ctx).unwrap_or_default();

    let mut exit_code = summary.status().exit_code();
    let mut detail = summary.outcome.detail.clone();
    if let Some(e) = diag_error {
        if exit_code == 0 {
            exit_code = EXIT_DIAGNOSTICS;
        }
        detail.get_or_insert_with(|| e.to_string());
    }

    let outcome = RunOutcome {
        status: summary.status(),
        exit_code,
        detail,
        steps: summary.steps,
        wall_time: summary.wall_time,
        max_sup_u: summary.max_sup_u,
        final_state: summary.final_state().clone(),
        series,
        report,
    };

    if let Some(dir) = output_dir {
        fs::create_dir_all(dir)?;
        let mut csv = BufWriter::new(File::create(dir.join("series.csv"))?);
        write_series_csv(&mut csv, &outcome.series)?;
        csv.flush()?;
        let json = serde_json::to_string_pretty(&outcome.report.to_json()).map_err(io::Error::other)?;
        fs::write(dir.join("bounds.json"), json + "\n")?;
        let reference_min_v = outcome.series.first().map(|r| r.min_v).unwrap_or(init.v0.min());
        Checkpoint::new(outcome.final_state.clone(), cfg.params, control, cfg.solver, reference_min_v)
            .write(&dir.join("checkpoint"))
            .map_err(|e| HarnessError::Checkpoint(e.to_string()))?;
        fs::write(dir.join("summary.txt"), summary_text(&outcome))?;
    }
    Ok(outcome)
}

/// Human-readable run summary.
pub fn summary_text(o: &RunOutcome) -> String {
    let mut s = String::new();
    s.push_str(&format!("status      {:?}\n", o.status));
    s.push_str(&format!("exit_code   {}\n", o.exit_code));
    if let Some(d) = &o.detail {
        s.push_str(&format!("detail      {d}\n"));
    }
    s.push_str(&format!("t_final     {}\n", o.final_state.t));
    s.push_str(&format!("steps       {}\n", o.steps));
    s.push_str(&format!("wall_time_s {:.3}\n", o.wall_time.as_secs_f64()));
    s.push_str(&format!("max_sup_u   {}\n", o.max_sup_u));
    s.push_str(&format!("samples     {}\n", o.series.len()));
    s.push_str("verdicts\n");
    for v in &o.report.verdicts {
        s.push_str(&format!(
            "  {:<24} {:<4} ratio={:.4e} at t={}\n",
            v.name,
            if v.pass { "ok" } else { "FAIL" },
            v.worst_ratio,
            v.worst_time
        ));
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub dir: String,
    pub axes: Vec<(String, f64)>,
    pub status: StepStatus,
    pub exit_code: i32,
    pub detail: Option<String>,
    pub steps: u64,
    pub wall_time_s: f64,
    pub max_sup_u: f64,
    pub all_pass: bool,
    pub failed_verdicts: Vec<String>,
}

/// Runs every combination of the sweep, at most `max_parallel` at a time.
/// Results are reported in expansion order regardless of completion order.
pub fn run_sweep(sweep: &SweepConfig, output_dir: &Path) -> Result<Vec<SweepEntry>, HarnessError> {
    let combos = sweep.combinations();
    let configs = combos
        .iter()
        .map(|c| sweep.expand(c))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(output_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep.max_parallel)
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let results: Vec<Result<SweepEntry, HarnessError>> = pool.install(|| {
        configs
            .par_iter()
            .zip(combos.par_iter())
            .enumerate()
            .map(|(index, (cfg, axes))| {
                let name = format!("run_{index:04}");
                let out = run_single(cfg, Some(&output_dir.join(&name)))?;
                Ok(SweepEntry {
                    index,
                    dir: name,
                    axes: axes.clone(),
                    status: out.status,
                    exit_code: out.exit_code,
                    detail: out.detail,
                    steps: out.steps,
                    wall_time_s: out.wall_time.as_secs_f64(),
                    max_sup_u: out.max_sup_u,
                    all_pass: out.report.all_pass(),
                    failed_verdicts: out
                        .report
                        .verdicts
                        .iter()
                        .filter(|v| !v.pass)
                        .map(|v| v.name.clone())
                        .collect(),
                })
            })
            .collect()
    });
    let entries = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let json = serde_json::to_string_pretty(&entries).map_err(io::Error::other)?;
    fs::write(output_dir.join("sweep.json"), json + "\n")?;
    fs::write(output_dir.join("sweep.txt"), sweep_table(&entries))?;
    Ok(entries)
}

pub fn sweep_table(entries: &[SweepEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let axes: Vec<String> = e.axes.iter().map(|(n, v)| format!("{n}={v}")).collect();
        s.push_str(&format!(
            "{}  {:<32} {:<18} exit={} steps={} max_sup_u={:.4e} bounds={}\n",
            e.dir,
            axes.join(" "),
            format!("{:?}", e.status),
            e.exit_code,
            e.steps,
            e.max_sup_u,
            if e.all_pass {
                "ok".to_string()
            } else {
                format!("FAIL({})", e.failed_verdicts.join(","))
            }
        ));
    }
    s
}

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// Reads a series CSV and writes, for every functional, a two-column `.dat`
/// file and a gnuplot script rendering it to PNG. Returns the scripts.
pub fn emit_plots(csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let reader = BufReader::new(File::open(csv)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let names: Vec<&str> = header.trim().split(',').collect();
    let mut columns = Vec::with_capacity(RECORD_COLUMNS.len());
    for col in RECORD_COLUMNS {
        let idx = names
            .iter()
            .position(|n| *n == col)
            .ok_or_else(|| PlotError::MissingColumn(col.to_string()))?;
        columns.push(idx);
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.trim().split(',').collect();
        let mut row = Vec::with_capacity(columns.len());
        for (c, &idx) in columns.iter().enumerate() {
            let cell = cells
                .get(idx)
                .ok_or_else(|| PlotError::MissingColumn(RECORD_COLUMNS[c].to_string()))?;
            row.push(cell.parse::<f64>().map_err(|e| PlotError::Malformed {
                line: i + 2,
                message: format!("{cell}: {e}"),
            })?);
        }
        rows.push(row);
    }

    fs::create_dir_all(out_dir)?;
    let mut scripts = Vec::new();
    for (c, name) in RECORD_COLUMNS.iter().enumerate().skip(1) {
        let dat = format!("{name}.dat");
        let mut w = BufWriter::new(File::create(out_dir.join(&dat))?);
        writeln!(w, "# t {name}")?;
        for row in &rows {
            if row[c].is_finite() {
                writeln!(w, "{:?} {:?}", row[0], row[c])?;
            }
        }
        w.flush()?;
        let logscale = if *name == "sup_u" { "set logscale y\n" } else { "" };
        let script = format!(
            "set terminal pngcairo size 800,500\n\
             set output '{name}.png'\n\
             set xlabel 't'\n\
             set ylabel '{name}'\n\
             {logscale}\
             plot '{dat}' using 1:2 with lines title '{name}'\n"
        );
        let path = out_dir.join(format!("{name}.gp"));
        fs::write(&path, script)?;
        scripts.push(path);
    }
    Ok(scripts)
}

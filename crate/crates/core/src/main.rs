use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use chemotaxis::checkpoint::Checkpoint;
use chemotaxis::config::{RunConfig, SweepConfig};
use chemotaxis::diagnostics::write_series_csv;
use chemotaxis::harness::{emit_plots, run_single, run_sweep, summary_text, EXIT_CONFIG};
use chemotaxis::oracles::standard_suite;
use chemotaxis::{DiagnosticsConfig, Monitor, SolverSettings};

#[derive(Parser)]
#[command(name = "ksim", version, about = "Chemotaxis simulator with a priori bound monitoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run {
        config: PathBuf,
        /// Output directory (overrides the config file and KSIM_OUTPUT_DIR).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run the Cartesian product of a sweep document.
    Sweep {
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Continue a checkpoint to a later end time.
    Resume {
        checkpoint: PathBuf,
        #[arg(long)]
        t_end: f64,
        #[arg(long, default_value_t = 0.1)]
        sample_interval: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the convergence checks against closed-form references.
    Verify {
        /// Write the JSON report here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Turn a series.csv into gnuplot scripts.
    Plot {
        series: PathBuf,
        #[arg(short, long, default_value = "plots")]
        output: PathBuf,
    },
}

fn fail(msg: impl std::fmt::Display, code: i32) -> ExitCode {
    eprintln!("ksim: {msg}");
    ExitCode::from(code as u8)
}

fn resolve_output(file: PathBuf, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or(file)
}

fn cmd_run(config: &Path, output: Option<PathBuf>) -> ExitCode {
    let mut cfg = match RunConfig::from_path(config) {
        Ok(c) => c,
        Err(e) => return fail(e, EXIT_CONFIG),
    };
    cfg.apply_env_override();
    let dir = resolve_output(cfg.output_dir.clone(), output);
    match run_single(&cfg, Some(&dir)) {
        Ok(out) => {
            print!("{}", summary_text(&out));
            ExitCode::from(out.exit_code as u8)
        }
        Err(e) => {
            let code = e.exit_code();
            fail(e, code)
        }
    }
}

fn cmd_sweep(config: &Path, output: Option<PathBuf>) -> ExitCode {
    let mut sweep = match SweepConfig::from_path(config) {
        Ok(c) => c,
        Err(e) => return fail(e, EXIT_CONFIG),
    };
    sweep.base.apply_env_override();
    let dir = resolve_output(sweep.base.output_dir.clone(), output);
    match run_sweep(&sweep, &dir) {
        Ok(entries) => {
            print!("{}", chemotaxis::harness::sweep_table(&entries));
            let worst = entries.iter().map(|e| e.exit_code).max().unwrap_or(0);
            ExitCode::from(worst as u8)
        }
        Err(e) => {
            let code = e.exit_code();
            fail(e, code)
        }
    }
}

fn cmd_resume(dir: &Path, t_end: f64, sample_interval: f64, output: &Path) -> ExitCode {
    let ckpt = match Checkpoint::read(dir) {
        Ok(c) => c,
        Err(e) => return fail(e, EXIT_CONFIG),
    };
    let cfg = DiagnosticsConfig {
        sample_interval,
        ..DiagnosticsConfig::default()
    };
    let mut monitor = Monitor::new(cfg, ckpt.meta.params, t_end).starting_at(ckpt.state.t);
    let start = Instant::now();
    let summary = match ckpt.resume(t_end, sample_interval, &mut monitor) {
        Ok(s) => s,
        Err(e) => return fail(e, EXIT_CONFIG),
    };
    let write = || -> std::io::Result<()> {
        fs::create_dir_all(output)?;
        let mut w = BufWriter::new(File::create(output.join("series.csv"))?);
        write_series_csv(&mut w, monitor.series())?;
        w.flush()?;
        let control = chemotaxis::StepControl { t_end, ..ckpt.meta.control };
        Checkpoint::new(
            summary.final_state().clone(),
            ckpt.meta.params,
            control,
            ckpt.meta.solver,
            ckpt.meta.reference_min_v,
        )
        .write(&output.join("checkpoint"))
        .map_err(std::io::Error::other)
    };
    if let Err(e) = write() {
        return fail(e, EXIT_CONFIG);
    }
    println!(
        "status {:?} t {} steps {} wall {:.3}s",
        summary.status(),
        summary.final_state().t,
        summary.steps,
        start.elapsed().as_secs_f64()
    );
    ExitCode::from(summary.status().exit_code() as u8)
}

fn cmd_verify(output: Option<PathBuf>) -> ExitCode {
    let reports = match standard_suite(&SolverSettings::default()) {
        Ok(r) => r,
        Err(e) => return fail(e, 3),
    };
    let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
    match output {
        Some(path) => {
            if let Err(e) = fs::write(&path, json + "\n") {
                return fail(e, EXIT_CONFIG);
            }
            for r in &reports {
                println!("{:<28} order {:.3}", r.case, r.observed_order);
            }
        }
        None => println!("{json}"),
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output } => cmd_run(&config, output),
        Command::Sweep { config, output } => cmd_sweep(&config, output),
        Command::Resume {
            checkpoint,
            t_end,
            sample_interval,
            output,
        } => cmd_resume(&checkpoint, t_end, sample_interval, &output),
        Command::Verify { output } => cmd_verify(output),
        Command::Plot { series, output } => match emit_plots(&series, &output) {
            Ok(scripts) => {
                for s in scripts {
                    println!("{}", s.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e, EXIT_CONFIG),
        },
    }
}

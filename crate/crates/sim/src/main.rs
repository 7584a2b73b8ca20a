use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use physobs_sim::check::run_checks;
use physobs_sim::sweep::{self, Axis};
use physobs_sim::{plots, runner, ConfigError, Observers, RunOptions, Scenario};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "physobs", version, about = "Adaptive observer scenario runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// Scenario file (TOML); defaults are used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a value, e.g. `--set gamma=10` or `--set theta=[1,1,-1]`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_enum)]
    observers: Option<Observers>,
}

impl ConfigArgs {
    fn load(&self) -> Result<Scenario, ConfigError> {
        let mut overrides = self.set.clone();
        if let Some(s) = self.seed {
            overrides.push(format!("seed={s}"));
        }
        if let Some(t) = self.t_end {
            overrides.push(format!("t_end={t:?}"));
        }
        if let Some(o) = self.observers {
            let name = match o {
                Observers::Proposed => "proposed",
                Observers::Baseline => "baseline",
                Observers::Both => "both",
            };
            overrides.push(format!("observers=\"{name}\""));
        }
        Scenario::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one scenario and write its trace, events, report and plots.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory (overrides `output_dir`).
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_plots: bool,
        /// Write every cascade stage at the first step at or after this time.
        #[arg(long, value_name = "T")]
        dump_cascade: Option<f64>,
    },
    /// Run every combination of the given axes in parallel.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Swept key and values, e.g. `gamma=0.1,1,10` or `seed=1..=10`.
        #[arg(short, long = "axis", value_name = "KEY=V1,V2")]
        axes: Vec<String>,
        /// Shorthand for `--axis seed=1..=N`.
        #[arg(long, value_name = "N")]
        seeds: Option<u64>,
        /// Root directory; each variation gets a subdirectory.
        #[arg(short, long, default_value = "runs/sweep")]
        out: PathBuf,
        #[arg(long)]
        plots: bool,
    },
    /// Render the figures for an existing run directory.
    Plot { dir: PathBuf },
    /// Validate a scenario and check the model invariants.
    Check {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Run {
            cfg,
            out,
            no_plots,
            dump_cascade,
        } => {
            let mut scn = cfg.load()?;
            if let Some(o) = out {
                scn.output_dir = o;
            }
            let dir = scn.output_dir.clone();
            let report = runner::execute(&scn, &dir, &RunOptions { dump_cascade_at: dump_cascade })?;
            if !no_plots && !report.diverged() {
                plots::emit_plots(&dir)?;
            }
            print!("{}", report.summary());
            println!("output              {}", dir.display());
            Ok(if report.diverged() { EXIT_DIVERGED } else { 0 })
        }
        Cmd::Sweep {
            cfg,
            axes,
            seeds,
            out,
            plots,
        } => {
            let base = cfg.load()?;
            let mut parsed = axes.iter().map(|a| Axis::parse(a)).collect::<Result<Vec<_>, _>>()?;
            if let Some(n) = seeds {
                parsed.push(Axis::parse(&format!("seed=1..={n}"))?);
            }
            let entries = sweep::sweep(&base, &parsed, &out, &RunOptions::default())?;
            if plots {
                for e in entries.iter().filter(|e| e.outcome.as_ref().is_ok_and(|r| !r.diverged())) {
                    plots::emit_plots(&e.dir)?;
                }
            }
            print!("{}", sweep::table(&entries));
            println!("summary: {}", out.join(sweep::SUMMARY_FILE).display());
            let failed = entries.iter().any(|e| e.outcome.is_err());
            let diverged = entries.iter().any(|e| e.outcome.as_ref().is_ok_and(|r| r.diverged()));
            Ok(if diverged {
                EXIT_DIVERGED
            } else if failed {
                EXIT_FAILURE
            } else {
                0
            })
        }
        Cmd::Plot { dir } => {
            for p in plots::emit_plots(&dir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
        Cmd::Check { cfg } => {
            let scn = cfg.load()?;
            let results = run_checks(&scn)?;
            for r in &results {
                println!("{}  {:<44} {}", if r.ok { "ok  " } else { "FAIL" }, r.name, r.detail);
            }
            Ok(if results.iter().all(|r| r.ok) { 0 } else { EXIT_CONFIG })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}

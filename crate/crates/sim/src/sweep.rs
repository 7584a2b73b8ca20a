//! Cartesian parameter sweeps, one output directory per variation.

use std::path::{Path, PathBuf};

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use crate::report::RunReport;
use crate::runner::{self, RunOptions};
use crate::scenario::{ConfigError, Scenario};

pub const SUMMARY_FILE: &str = "summary.csv";

/// One swept key and the values it takes, e.g. `gamma=0.1,1,10`.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

impl Axis {
    /// Parses `key=v1,v2,...`. Commas inside brackets belong to the value,
    /// so `theta=[1,1,-1],[2,1,-1]` has two values. `a..=b` over integers
    /// expands to every value in between.
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        let bad = || ConfigError(vec![format!("sweep axis {spec:?} is not key=v1,v2,...")]);
        let (key, raw) = spec.split_once('=').ok_or_else(bad)?;
        let key = key.trim();
        if key.is_empty() || raw.trim().is_empty() {
            return Err(bad());
        }
        if let Some((a, b)) = raw.split_once("..=") {
            if let (Ok(a), Ok(b)) = (a.trim().parse::<i64>(), b.trim().parse::<i64>()) {
                if a > b {
                    return Err(bad());
                }
                return Ok(Axis {
                    key: key.into(),
                    values: (a..=b).map(|v| v.to_string()).collect(),
                });
            }
        }
        let mut values = Vec::new();
        let mut depth = 0i32;
        let mut cur = String::new();
        for ch in raw.chars() {
            match ch {
                '[' => depth += 1,
                ']' => depth -= 1,
                ',' if depth == 0 => {
                    values.push(std::mem::take(&mut cur).trim().to_string());
                    continue;
                }
                _ => {}
            }
            cur.push(ch);
        }
        values.push(cur.trim().to_string());
        if depth != 0 || values.iter().any(String::is_empty) {
            return Err(bad());
        }
        Ok(Axis {
            key: key.into(),
            values,
        })
    }
}

/// Every combination of axis values as override lists, first axis slowest.
pub fn combinations(axes: &[Axis]) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = vec![Vec::new()];
    for ax in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                ax.values.iter().map(move |v| {
                    let mut o = prefix.clone();
                    o.push(format!("{}={}", ax.key, v));
                    o
                })
            })
            .collect();
    }
    out
}

/// Directory name for one variation.
pub fn label(overrides: &[String]) -> String {
    if overrides.is_empty() {
        return "base".into();
    }
    overrides
        .iter()
        .map(|o| {
            o.chars()
                .map(|c| if c.is_ascii_alphanumeric() || "=.-".contains(c) { c } else { '_' })
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join("__")
}

#[derive(Debug)]
pub struct SweepEntry {
    pub label: String,
    pub overrides: Vec<String>,
    pub dir: PathBuf,
    pub outcome: Result<RunReport, String>,
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    label: &'a str,
    status: String,
    seed: Option<u64>,
    sigma: Option<f64>,
    gamma: Option<f64>,
    terminal_x_err: Option<f64>,
    terminal_kappa_err: Option<f64>,
    terminal_baseline_x_err: Option<f64>,
    t_e: Option<f64>,
    decay_rate: Option<f64>,
    decay_r2: Option<f64>,
    proposed_singularity_events: Option<u64>,
    baseline_guard_events: Option<u64>,
    jump_proposed_max: Option<f64>,
    jump_baseline_max: Option<f64>,
    wall_clock_s: Option<f64>,
}

impl SweepEntry {
    fn status(&self) -> String {
        match &self.outcome {
            Ok(r) if r.diverged() => "diverged".into(),
            Ok(r) if !r.fe_met => "fe-not-met".into(),
            Ok(_) => "ok".into(),
            Err(e) => format!("failed: {e}"),
        }
    }

    fn summary_row(&self) -> SummaryRow<'_> {
        let r = self.outcome.as_ref().ok();
        SummaryRow {
            label: &self.label,
            status: self.status(),
            seed: r.map(|r| r.seed),
            sigma: r.map(|r| r.sigma),
            gamma: r.map(|r| r.gamma),
            terminal_x_err: r.map(|r| r.terminal_x_err),
            terminal_kappa_err: r.map(|r| r.terminal_kappa_err),
            terminal_baseline_x_err: r.map(|r| r.terminal_baseline_x_err),
            t_e: r.and_then(|r| r.t_e),
            decay_rate: r.and_then(|r| r.kappa_decay.as_ref().map(|d| d.rate)),
            decay_r2: r.and_then(|r| r.kappa_decay.as_ref().map(|d| d.r2)),
            proposed_singularity_events: r.map(|r| r.proposed_singularity_events),
            baseline_guard_events: r.map(|r| r.baseline_guard_events),
            jump_proposed_max: r.map(|r| r.jump_proposed_max),
            jump_baseline_max: r.map(|r| r.jump_baseline_max),
            wall_clock_s: r.and_then(|r| r.wall_clock_s),
        }
    }
}

/// Runs every combination of `axes` on top of `base` in parallel, each into
/// `root/<label>`, and writes `root/summary.csv`. A failing variation is
/// recorded and the others carry on. With no axes this is a single run.
pub fn sweep(base: &Scenario, axes: &[Axis], root: &Path, opts: &RunOptions) -> Result<Vec<SweepEntry>> {
    std::fs::create_dir_all(root)?;
    let combos = combinations(axes);
    let entries: Vec<SweepEntry> = combos
        .into_par_iter()
        .map(|overrides| {
            let label = label(&overrides);
            let dir = root.join(&label);
            let outcome = base
                .with_overrides(&overrides)
                .map_err(|e| e.to_string())
                .and_then(|scn| {
                    let scn = Scenario {
                        output_dir: dir.clone(),
                        ..scn
                    };
                    runner::execute(&scn, &dir, opts).map_err(|e| format!("{e:#}"))
                });
            SweepEntry {
                label,
                overrides,
                dir,
                outcome,
            }
        })
        .collect();
    let mut w = csv::Writer::from_path(root.join(SUMMARY_FILE))?;
    for e in &entries {
        w.serialize(e.summary_row())?;
    }
    w.flush()?;
    Ok(entries)
}

/// Fixed-width table of the sweep results.
pub fn table(entries: &[SweepEntry]) -> String {
    let width = entries.iter().map(|e| e.label.len()).max().unwrap_or(5).max(5);
    let mut s = format!(
        "{:<width$}  {:>10}  {:>10}  {:>10}  {:>8}  {:>9}  {:>6}  {:>6}  status\n",
        "label", "|x~|", "|kappa~|", "base |x~|", "t_e", "rate", "R^2", "guard"
    );
    let num = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$e}"));
    for e in entries {
        let r = e.summary_row();
        s += &format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>8}  {:>9}  {:>6}  {:>6}  {}\n",
            e.label,
            num(r.terminal_x_err, 2),
            num(r.terminal_kappa_err, 2),
            num(r.terminal_baseline_x_err, 2),
            r.t_e.map_or("-".into(), |v| format!("{v:.2}")),
            r.decay_rate.map_or("-".into(), |v| format!("{v:.4}")),
            r.decay_r2.map_or("-".into(), |v| format!("{v:.4}")),
            r.baseline_guard_events.map_or("-".into(), |v| v.to_string()),
            r.status,
        );
    }
    s
}

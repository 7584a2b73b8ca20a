//! Run summary recomputed from the files a run leaves behind.

use std::path::Path;

use anyhow::{Context, Result};
use physobs::observer::{block_maxima, first_increase, fit_decay, noise_floor, DecayFit};
use serde::{Deserialize, Serialize};

use crate::runner::{RunStatus, SCENARIO_FILE, STATUS_FILE};
use crate::scenario::Scenario;
use crate::trace::{self, TraceRow, SCHEMA_VERSION};

pub const REPORT_FILE: &str = "report.json";

/// Length of the decay-fit window after `t_e`.
pub const FIT_WINDOW: f64 = 30.0;
/// Block length for the windowed monotonicity check of `‖x̃‖`.
pub const X_BLOCK: f64 = 5.0;
/// Multiple of the terminal level treated as the numerical floor.
pub const FLOOR_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub model: String,
    pub seed: u64,
    pub sigma: f64,
    pub gamma: f64,
    pub excitation: f64,
    pub status: RunStatus,
    pub t_last: f64,

    pub terminal_x_err: f64,
    pub terminal_kappa_err: f64,
    pub terminal_baseline_x_err: f64,
    pub kappa_err_at_t_eps: f64,

    /// First `t ≥ t_ε` with `Δ ≥ fe_delta_min`.
    pub t_e: Option<f64>,
    pub fe_met: bool,
    pub delta_min_after_te: Option<f64>,
    pub lambda_min_max: f64,
    pub lambda_min_argmax: f64,
    pub m_kappa_log10_min_after_te: Option<f64>,

    /// Level `‖κ̃‖` settles at (median of the last 10 %).
    pub kappa_floor: f64,
    pub x_floor: f64,
    /// Fit of `ln‖κ̃‖` over `[t_e, t_e + 30]`, stopped at `10×` the floor.
    pub kappa_decay: Option<DecayFit>,
    /// First time after `t_e` where `‖κ̃‖` grows by more than the floor.
    pub kappa_increase_at: Option<f64>,
    /// Same for 5 s block maxima of `‖x̃‖`.
    pub x_increase_at: Option<f64>,

    pub prop1_max: f64,
    pub equal_pairs_max: f64,
    pub decomposition_max: f64,
    pub jump_proposed_max: f64,
    pub jump_baseline_max: f64,
    pub proposed_singularity_events: u64,
    pub baseline_guard_events: u64,
    pub baseline_crossing_events: u64,

    pub wall_clock_s: Option<f64>,
}

fn nan_max(v: impl Iterator<Item = f64>) -> f64 {
    v.filter(|x| !x.is_nan()).fold(f64::NAN, |a, b| if a.is_nan() || b > a { b } else { a })
}

impl RunReport {
    /// Recomputes the report from `scenario.toml`, `status.json`, the trace
    /// and the event log in `dir`.
    pub fn from_dir(dir: &Path, wall_clock_s: Option<f64>) -> Result<Self> {
        let scn_text = std::fs::read_to_string(dir.join(SCENARIO_FILE))
            .with_context(|| format!("reading {}", dir.join(SCENARIO_FILE).display()))?;
        let scn: Scenario = toml::from_str(&scn_text)?;
        let status: RunStatus =
            serde_json::from_str(&std::fs::read_to_string(dir.join(STATUS_FILE))?)?;
        let rows = trace::read_trace(&dir.join(trace::TRACE_FILE))?;
        let events = trace::read_events(&dir.join(trace::EVENTS_FILE))?;
        Ok(Self::compute(&scn, status, &rows, &events, wall_clock_s))
    }

    pub fn compute(
        scn: &Scenario,
        status: RunStatus,
        rows: &[TraceRow],
        events: &[trace::EventRow],
        wall_clock_s: Option<f64>,
    ) -> Self {
        let p = &scn.params;
        let last = rows.last().cloned().unwrap_or_default();
        let after_eps: Vec<&TraceRow> = rows.iter().filter(|r| r.t >= p.t_eps - 1e-9).collect();
        let t_e = after_eps
            .iter()
            .find(|r| r.delta >= p.fe_delta_min)
            .map(|r| r.t);
        let after_te: Vec<&TraceRow> = match t_e {
            Some(te) => rows.iter().filter(|r| r.t >= te).collect(),
            None => Vec::new(),
        };
        let min_of = |v: &mut dyn Iterator<Item = f64>| -> Option<f64> {
            v.fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.min(b))))
        };
        let delta_min_after_te = min_of(&mut after_te.iter().map(|r| r.delta));
        let m_kappa_log10_min_after_te = min_of(&mut after_te.iter().map(|r| r.m_kappa_log10));

        let (mut lam_max, mut lam_arg) = (f64::NAN, f64::NAN);
        for r in &after_eps {
            if r.lambda_min.is_finite() && (lam_max.is_nan() || r.lambda_min > lam_max) {
                lam_max = r.lambda_min;
                lam_arg = r.t;
            }
        }

        let kappa: Vec<f64> = rows.iter().map(|r| r.kappa_err).collect();
        let xs: Vec<f64> = rows.iter().map(|r| r.x_err).collect();
        let ts: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let kappa_floor = noise_floor(&kappa, 0.1);
        let x_floor = noise_floor(&xs, 0.1);
        let (mut kappa_decay, mut kappa_increase_at, mut x_increase_at) = (None, None, None);
        if let Some(te) = t_e {
            kappa_decay = fit_decay(&ts, &kappa, te, te + FIT_WINDOW, FLOOR_FACTOR * kappa_floor).ok();
            let k_after: Vec<f64> = after_te.iter().map(|r| r.kappa_err).collect();
            kappa_increase_at = first_increase(&k_after, 1e-9, kappa_floor).map(|i| after_te[i].t);
            let spacing = scn.trace_spacing();
            let block = ((X_BLOCK / spacing).round() as usize).max(1);
            let x_after: Vec<f64> = after_te.iter().map(|r| r.x_err).collect();
            let maxima = block_maxima(&x_after, block);
            x_increase_at = first_increase(&maxima, 1e-9, x_floor)
                .map(|i| after_te[(i * block).min(after_te.len() - 1)].t);
        }

        let guard = events.iter().filter(|e| e.kind == "guard").count() as u64;
        let crossing = events.iter().filter(|e| e.kind == "crossing").count() as u64;
        RunReport {
            schema_version: SCHEMA_VERSION,
            model: scn.model.clone(),
            seed: p.seed,
            sigma: p.sigma,
            gamma: p.gamma,
            excitation: p.excitation,
            status,
            t_last: last.t,
            terminal_x_err: last.x_err,
            terminal_kappa_err: last.kappa_err,
            terminal_baseline_x_err: last.xb_err,
            kappa_err_at_t_eps: after_eps.first().map_or(f64::NAN, |r| r.kappa_err),
            t_e,
            fe_met: t_e.is_some(),
            delta_min_after_te,
            lambda_min_max: lam_max,
            lambda_min_argmax: lam_arg,
            m_kappa_log10_min_after_te,
            kappa_floor,
            x_floor,
            kappa_decay,
            kappa_increase_at,
            x_increase_at,
            prop1_max: nan_max(after_eps.iter().map(|r| r.prop1_residual_max)),
            equal_pairs_max: nan_max(rows.iter().map(|r| r.equal_pairs_residual_max)),
            decomposition_max: nan_max(rows.iter().map(|r| r.decomposition_residual_max)),
            jump_proposed_max: nan_max(rows.iter().map(|r| r.jump_proposed_max)),
            jump_baseline_max: nan_max(rows.iter().map(|r| r.jump_baseline_max)),
            proposed_singularity_events: rows.iter().map(|r| r.singular_proposed as u64).sum(),
            baseline_guard_events: guard,
            baseline_crossing_events: crossing,
            wall_clock_s,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// Human-readable summary lines.
    pub fn summary(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4e}"));
        let mut s = String::new();
        let status = match &self.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Diverged { t, reason } => format!("DIVERGED at t = {t}: {reason}"),
        };
        s += &format!("status              {status}\n");
        s += &format!("seed / sigma / gamma {} / {} / {}\n", self.seed, self.sigma, self.gamma);
        s += &format!("terminal |x~|       {:.4e}\n", self.terminal_x_err);
        s += &format!("terminal |kappa~|   {:.4e}\n", self.terminal_kappa_err);
        s += &format!("baseline |x~|       {:.4e}\n", self.terminal_baseline_x_err);
        if self.fe_met {
            s += &format!("t_e                 {}\n", opt(self.t_e));
        } else {
            s += "t_e                 FE not met\n";
        }
        s += &format!("Delta_min (t>=t_e)  {}\n", opt(self.delta_min_after_te));
        s += &format!("lambda_min max      {:.4e} at t = {:.2}\n", self.lambda_min_max, self.lambda_min_argmax);
        if let Some(d) = &self.kappa_decay {
            s += &format!("kappa decay rate    {:.4} (R^2 {:.4}, until t = {:.2})\n", d.rate, d.r2, d.t_stop);
        }
        s += &format!("|q - phi^T eta| max {:.3e}\n", self.prop1_max);
        s += &format!("equal pairs max     {:.3e}\n", self.equal_pairs_max);
        s += &format!("decomposition max   {:.3e}\n", self.decomposition_max);
        s += &format!("max jump prop/base  {:.3e} / {:.3e}\n", self.jump_proposed_max, self.jump_baseline_max);
        s += &format!(
            "singularity events  proposed {} / baseline {} guard, {} crossing\n",
            self.proposed_singularity_events, self.baseline_guard_events, self.baseline_crossing_events
        );
        if let Some(w) = self.wall_clock_s {
            s += &format!("wall clock          {w:.1} s\n");
        }
        s
    }
}

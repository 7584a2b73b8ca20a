//! Time-series and event CSV files.
//!
//! Columns suffixed `_max` hold the maximum over the steps since the
//! previous stored row, so per-step quantities survive decimation.

use std::path::Path;

use anyhow::{Context, Result};
use physobs::observer::{EventKind, SingularityEvent};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
pub const TRACE_FILE: &str = "trace.csv";
pub const EVENTS_FILE: &str = "events.csv";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
    pub x3: f64,
    pub xhat1: f64,
    pub xhat2: f64,
    pub xhat3: f64,
    pub x_err: f64,
    pub xi_hat1: f64,
    pub xi_hat2: f64,
    pub xi_hat3: f64,
    pub kappa_err: f64,
    pub psi_a_err: f64,
    pub psi_b_err: f64,
    pub o_gamma_err: f64,
    pub t_i_err: f64,
    pub xb1: f64,
    pub xb2: f64,
    pub xb3: f64,
    pub xb_err: f64,
    pub eta_err: f64,
    pub qbar: f64,
    pub phi_eta_true: f64,
    pub phi_eta_hat: f64,
    pub phibar1: f64,
    pub phibar2: f64,
    pub phibar3: f64,
    pub phibar4: f64,
    pub phibar5: f64,
    pub delta: f64,
    pub det_phi: f64,
    pub drem_residual: f64,
    pub lambda_min: f64,
    pub m_psi: f64,
    pub m_theta: f64,
    pub m_kappa_sign: f64,
    pub m_kappa_log10: f64,
    pub u: f64,
    pub y: f64,
    pub dist: f64,
    pub prop1_residual_max: f64,
    pub equal_pairs_residual_max: f64,
    pub decomposition_residual_max: f64,
    pub jump_proposed_max: f64,
    pub jump_baseline_max: f64,
    pub singular_proposed: u32,
    pub singular_baseline: u32,
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in r.deserialize().enumerate() {
        out.push(rec.with_context(|| format!("{} row {}: schema mismatch", path.display(), i + 1))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub t: f64,
    pub observer: String,
    pub name: String,
    pub value: f64,
    pub kind: String,
}

impl EventRow {
    pub fn baseline(e: &SingularityEvent) -> Self {
        Self {
            t: e.t,
            observer: "baseline".into(),
            name: e.name.clone(),
            value: e.value,
            kind: match e.kind {
                EventKind::Guard => "guard",
                EventKind::Crossing => "crossing",
            }
            .into(),
        }
    }
}

pub fn write_events(path: &Path, events: &[EventRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["t", "observer", "name", "value", "kind"])?;
    for e in events {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events(path: &Path) -> Result<Vec<EventRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|e| e.map_err(anyhow::Error::from))
        .collect()
}

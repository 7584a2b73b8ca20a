//! One scenario on one timeline: plant, filters, extension/mixing, cascade
//! and both observers, stepped together at a fixed `dt`.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use physobs::cascade::{run_cascade, CascadeOutput};
use physobs::drem::{reduce, DremState, MixedRegression};
use physobs::example::control_law;
use physobs::filters::{extended_regressor, FilterState};
use physobs::matrix::{dot, norm};
use physobs::observer::{BaselineState, ObserverState};
use physobs::plant::Rk4;
use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{self, ModelKit};
use crate::scenario::{ConfigError, Scenario};
use crate::trace::{self, EventRow, TraceRow};

pub const STATUS_FILE: &str = "status.json";
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const DUMP_FILE: &str = "cascade_dump.json";
pub const DIVERGED_MARKER: &str = "DIVERGED";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Emit the cascade stage values at the first step with `t ≥` this.
    pub dump_cascade_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Completed,
    Diverged { t: f64, reason: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct CascadeDump {
    pub t: f64,
    pub y: Vec<f64>,
    pub delta: f64,
    pub det_phi: f64,
    pub k: f64,
    pub stages: CascadeOutput,
    pub normalized_y_kappa: Vec<f64>,
    pub normalized_m_kappa: f64,
}

pub struct RunOutput {
    pub rows: Vec<TraceRow>,
    pub events: Vec<EventRow>,
    pub status: RunStatus,
    pub wall_clock_s: f64,
    pub dump: Option<CascadeDump>,
}

/// Initial estimates `κ̂₀ = 10·U(0,1)^{27}` then `η̂₀ = 10·U(0,1)^5` from one
/// ChaCha8 stream seeded with `seed`.
pub fn initial_estimates(seed: u64, n_kappa: usize, n_eta: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| 10.0 * rng.sample::<f64, _>(Open01))
            .collect()
    };
    let kappa = draw(n_kappa);
    let eta = draw(n_eta);
    (kappa, eta)
}

#[derive(Default)]
struct IntervalMax {
    prop1: f64,
    pairs: f64,
    decomposition: f64,
    jump_p: f64,
    jump_b: f64,
    events: u32,
}

fn upd(acc: &mut f64, v: f64) {
    if v > *acc || v.is_nan() {
        *acc = v;
    }
}

fn nan3() -> [f64; 3] {
    [f64::NAN; 3]
}

/// Runs the scenario in memory.
pub fn simulate(scn: &Scenario, opts: &RunOptions) -> Result<RunOutput, ConfigError> {
    scn.validate()?;
    let kit = model::build(&scn.model, &scn.params)?;
    Ok(simulate_with(scn, &kit, opts))
}

fn simulate_with(scn: &Scenario, kit: &ModelKit, opts: &RunOptions) -> RunOutput {
    let started = Instant::now();
    let p = &scn.params;
    let n = kit.plant.n;
    let nd = kit.exo.n_delta;
    let n_eta = kit.reduction.n_eta();
    let dt = p.dt;
    let steps = scn.steps();
    let k_eps = (p.t_eps / dt).round() as usize;
    let dec = scn.decimation;
    let truth = &kit.truth;

    let (kappa0, eta0) = initial_estimates(p.seed, kit.bundle.kappa_len(), n_eta);
    let mut obs = ObserverState::new(n, p.gamma, kappa0).expect("kappa length from bundle");
    let mut base = BaselineState::new(eta0, p.gamma_baseline, p.eps_div, &kit.inverse);
    let mut drem = DremState::new(n_eta, p.drem_settings());

    let fl = kit.gains.state_len();
    let mut s = vec![0.0; n + nd + fl];
    s[..n].copy_from_slice(&kit.plant.x0);
    s[n..n + nd].copy_from_slice(&kit.exo.x0);
    let mut rk = Rk4::new(s.len());

    let mut rows = Vec::with_capacity(steps / dec + 2);
    let mut events = Vec::new();
    let mut acc = IntervalMax::default();
    let mut prev_xp: Option<Vec<f64>> = None;
    let mut prev_xb: Option<Vec<f64>> = None;
    let mut dump = None;
    let mut status = RunStatus::Completed;

    for k in 0..=steps {
        let t = k as f64 * dt;
        let x = s[..n].to_vec();
        let y = kit.plant.output(&x);
        let dist = kit.exo.output(&s[n..n + nd]);
        let u = control_law(t, y, p);
        let filters = FilterState::from_packed(n, &s[n + nd..]);
        let reg = extended_regressor(&filters, &kit.gains, y);
        let (phibar, qbar) = reduce(&reg.phi_e, reg.qbar, &kit.reduction).expect("reduction dimensions");
        let phi_eta_true = dot(&phibar, &truth.eta);
        for &(i, j) in &kit.equal_pairs {
            upd(&mut acc.pairs, (reg.phi_e[i] - reg.phi_e[j]).abs());
        }
        let engaged = k >= k_eps;
        if engaged {
            upd(&mut acc.prop1, (qbar - phi_eta_true).abs());
        }
        let mixed = if engaged {
            drem.step_extension(t, &phibar, qbar).expect("monotone time");
            drem.mix()
        } else {
            MixedRegression::zero(n_eta)
        };
        let casc = run_cascade(&mixed.y, mixed.delta, &kit.bundle);
        let (yk, mk) = casc.kappa.normalized();
        if dump.is_none() && opts.dump_cascade_at.is_some_and(|td| t >= td) {
            dump = Some(CascadeDump {
                t,
                y: mixed.y.clone(),
                delta: mixed.delta,
                det_phi: mixed.det,
                k: mixed.k,
                stages: casc.clone(),
                normalized_y_kappa: yk.clone(),
                normalized_m_kappa: mk,
            });
        }

        let xi_true = truth.t.mul_vec(&x);
        let (mut xp, mut xip) = (nan3().to_vec(), nan3().to_vec());
        let mut x_err = f64::NAN;
        if scn.observers.proposed() {
            obs.reconstruct(&filters, &kit.gains);
            xp = obs.x_hat.clone();
            xip = obs.xi_hat.clone();
            x_err = dist_norm(&xp, &x);
            // x̃ = T̃_Iξ̃ + T_Iξ̃ + T̃_Iξ
            let t_tilde = &obs.t_i() - &truth.t_i;
            let xi_tilde: Vec<f64> = (0..n).map(|i| xip[i] - xi_true[i]).collect();
            let a = t_tilde.mul_vec(&xi_tilde);
            let b = truth.t_i.mul_vec(&xi_tilde);
            let c = t_tilde.mul_vec(&xi_true);
            let rhs: Vec<f64> = (0..n).map(|i| a[i] + b[i] + c[i]).collect();
            let lhs: Vec<f64> = (0..n).map(|i| xp[i] - x[i]).collect();
            upd(&mut acc.decomposition, max_abs_diff(&lhs, &rhs));
            if let Some(prev) = &prev_xp {
                upd(&mut acc.jump_p, dist_norm(prev, &xp));
            }
            prev_xp = Some(xp.clone());
        }
        let (mut xb, mut xb_err) = (nan3().to_vec(), f64::NAN);
        if scn.observers.baseline() {
            xb = base.reconstruct(&filters, &kit.gains).to_vec();
            xb_err = dist_norm(&xb, &x);
            if let Some(prev) = &prev_xb {
                upd(&mut acc.jump_b, dist_norm(prev, &xb));
            }
            prev_xb = Some(xb.clone());
        }

        if k % dec == 0 || k == steps {
            let kap = &obs.kappa;
            let tk = &truth.kappa;
            let blk = |a: usize, b: usize| dist_norm(&kap[a..b], &tk[a..b]);
            let (proposed, baseline) = (scn.observers.proposed(), scn.observers.baseline());
            let or_nan = |on: bool, v: f64| if on { v } else { f64::NAN };
            rows.push(TraceRow {
                t,
                x1: x[0],
                x2: x[1],
                x3: x[2],
                xhat1: xp[0],
                xhat2: xp[1],
                xhat3: xp[2],
                x_err,
                xi_hat1: xip[0],
                xi_hat2: xip[1],
                xi_hat3: xip[2],
                kappa_err: or_nan(proposed, dist_norm(kap, tk)),
                psi_a_err: or_nan(proposed, blk(0, n)),
                psi_b_err: or_nan(proposed, blk(n, 2 * n)),
                o_gamma_err: or_nan(proposed, blk(3 * n, 3 * n + n * n)),
                t_i_err: or_nan(proposed, blk(3 * n + n * n, kap.len())),
                xb1: xb[0],
                xb2: xb[1],
                xb3: xb[2],
                xb_err,
                eta_err: or_nan(baseline, dist_norm(&base.eta_hat, &truth.eta)),
                qbar,
                phi_eta_true,
                phi_eta_hat: or_nan(baseline, dot(&phibar, &base.eta_hat)),
                phibar1: phibar[0],
                phibar2: phibar[1],
                phibar3: phibar[2],
                phibar4: phibar[3],
                phibar5: phibar[4],
                delta: mixed.delta,
                det_phi: mixed.det,
                drem_residual: if engaged {
                    let r: Vec<f64> = (0..n_eta)
                        .map(|i| mixed.y[i] - mixed.delta * truth.eta[i])
                        .collect();
                    norm(&r)
                } else {
                    0.0
                },
                lambda_min: f64::NAN,
                m_psi: casc.psi.m_value(),
                m_theta: casc.theta.m_value(),
                m_kappa_sign: casc.kappa.sign,
                m_kappa_log10: casc.kappa.log10_abs_m(),
                u,
                y,
                dist,
                prop1_residual_max: acc.prop1,
                equal_pairs_residual_max: acc.pairs,
                decomposition_residual_max: or_nan(proposed, acc.decomposition),
                jump_proposed_max: or_nan(proposed, acc.jump_p),
                jump_baseline_max: or_nan(baseline, acc.jump_b),
                singular_proposed: 0,
                singular_baseline: acc.events,
            });
            acc = IntervalMax::default();
        }
        if k == steps {
            break;
        }

        if scn.observers.proposed() {
            if let Err(e) = obs.step_adaptive(&yk, mk, t, dt) {
                status = RunStatus::Diverged {
                    t: t + dt,
                    reason: e.to_string(),
                };
                break;
            }
        }
        if scn.observers.baseline() {
            match base.step_baseline(&mixed.y, mixed.delta, &kit.inverse, t, dt) {
                Ok(evs) => {
                    acc.events += evs.len() as u32;
                    events.extend(evs.iter().map(EventRow::baseline));
                }
                Err(e) => {
                    status = RunStatus::Diverged {
                        t: t + dt,
                        reason: e.to_string(),
                    };
                    break;
                }
            }
        }
        let (plant, exo, gains) = (&kit.plant, &kit.exo, &kit.gains);
        rk.step(
            |_, st, ds| {
                let (xs, rest) = st.split_at(n);
                let (xds, fs) = rest.split_at(nd);
                let (dx, drest) = ds.split_at_mut(n);
                let (dxd, dfs) = drest.split_at_mut(nd);
                let ys = plant.output(xs);
                plant.derivative(xs, u, exo.output(xds), dx);
                exo.derivative(xds, dxd);
                gains.derivative(fs, u, ys, dfs);
            },
            t,
            &mut s,
            dt,
        );
        if s.iter().any(|v| !v.is_finite()) {
            status = RunStatus::Diverged {
                t: t + dt,
                reason: "plant or filter state became non-finite".into(),
            };
            break;
        }
    }

    fill_lambda_min(&mut rows, scn.trace_spacing(), 1.0);
    RunOutput {
        rows,
        events,
        status,
        wall_clock_s: started.elapsed().as_secs_f64(),
        dump,
    }
}

fn dist_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

fn phibar_of(r: &TraceRow) -> Vec<f64> {
    vec![r.phibar1, r.phibar2, r.phibar3, r.phibar4, r.phibar5]
}

/// `λ_min` of the Gram integral over `[t, t + window]` from the stored
/// regressor samples; `NaN` where the window runs past the trace.
pub fn fill_lambda_min(rows: &mut [TraceRow], h: f64, window: f64) {
    let samples: Vec<Vec<f64>> = rows.iter().map(phibar_of).collect();
    let lam = physobs::drem::excitation_level(&samples, h, window).unwrap_or_default();
    for (i, r) in rows.iter_mut().enumerate() {
        r.lambda_min = lam.get(i).copied().unwrap_or(f64::NAN);
    }
}

/// Runs the scenario and writes every artefact into `dir`.
pub fn run_to_dir(scn: &Scenario, dir: &Path, opts: &RunOptions) -> Result<RunOutput> {
    let out = simulate(scn, opts)?;
    persist(scn, dir, &out)?;
    Ok(out)
}

pub fn persist(scn: &Scenario, dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join(SCENARIO_FILE), scn.to_toml())?;
    trace::write_trace(&dir.join(trace::TRACE_FILE), &out.rows)?;
    trace::write_events(&dir.join(trace::EVENTS_FILE), &out.events)?;
    std::fs::write(dir.join(STATUS_FILE), serde_json::to_string_pretty(&out.status)?)?;
    let marker = dir.join(DIVERGED_MARKER);
    match &out.status {
        RunStatus::Diverged { t, reason } => {
            std::fs::write(&marker, format!("diverged at t = {t}: {reason}\n"))?;
        }
        RunStatus::Completed => {
            if marker.exists() {
                std::fs::remove_file(&marker)?;
            }
        }
    }
    if let Some(d) = &out.dump {
        std::fs::write(dir.join(DUMP_FILE), serde_json::to_string_pretty(d)?)?;
    }
    Ok(())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Runs, persists and writes `report.json`, recomputing the report from the
/// files just written.
pub fn execute(scn: &Scenario, dir: &Path, opts: &RunOptions) -> Result<crate::report::RunReport> {
    let out = run_to_dir(scn, dir, opts)?;
    let report = crate::report::RunReport::from_dir(dir, Some(out.wall_clock_s))?;
    report.write(dir)?;
    Ok(report)
}

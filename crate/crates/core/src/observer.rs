//! The division-free adaptive observer, the certainty-equivalence baseline
//! and decay instrumentation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{FilterGains, FilterState, Layout};
use crate::matrix::{Mat, MatError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObserverError {
    #[error(
        "estimate diverged at t = {t} (gamma*M^2*dt = {stiffness:e}; \
         reduce dt or gamma, or normalize the regression)"
    )]
    Divergence { t: f64, stiffness: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("decay fit needs at least two positive samples in [{t0}, {t1}], got {got}")]
    TooFewSamples { t0: f64, t1: f64, got: usize },
    #[error(transparent)]
    Matrix(#[from] MatError),
}

/// Ratio-free exact solution of `ẋ = −γm(mx − y)` over `dt` with `(y, m)`
/// frozen: `x ← x − c·m(mx − y)`, `c = (1 − e^{−γm²dt})/m²`.
pub fn exact_gradient_step(x: &mut [f64], y: &[f64], m: f64, gamma: f64, dt: f64) {
    let a = gamma * m * m * dt;
    if a == 0.0 {
        // m² underflowed or vanished: the flow is γm·y to first order
        for (xi, yi) in x.iter_mut().zip(y) {
            *xi += gamma * dt * m * yi;
        }
        return;
    }
    let c = if a > 1e-12 {
        -(-a).exp_m1() / (m * m)
    } else {
        gamma * dt * (1.0 - 0.5 * a)
    };
    for (xi, yi) in x.iter_mut().zip(y) {
        *xi -= c * m * (m * *xi - yi);
    }
}

/// `ξ̂ = O_e^{-1}Ô_Γ(F − Nψ̂_a − Hψ̂_b) + z + Ωψ̂_a + Pψ̂_b`.
pub fn virtual_estimate(
    psi_a: &[f64],
    psi_b: &[f64],
    o_gamma: &Mat,
    filters: &FilterState,
    gains: &FilterGains,
) -> Vec<f64> {
    let n = filters.n;
    let nn = n * n;
    let l = Layout::new(n);
    let d = &filters.data;
    let blk_mul = |off: usize, v: &[f64], i: usize| -> f64 {
        (0..n).map(|j| d[off + i * n + j] * v[j]).sum::<f64>()
    };
    debug_assert_eq!(d.len(), 2 * n + 4 * nn);
    let inner: Vec<f64> = (0..n)
        .map(|i| d[l.f + i] - blk_mul(l.nmat, psi_a, i) - blk_mul(l.h, psi_b, i))
        .collect();
    let left = gains.o_e_inv.mul_vec(&o_gamma.mul_vec(&inner));
    (0..n)
        .map(|i| left[i] + d[l.z + i] + blk_mul(l.omega, psi_a, i) + blk_mul(l.p, psi_b, i))
        .collect()
}

/// Proposed observer: gradient flow on the stacked vector
/// `κ̂ = [ψ̂_a; ψ̂_b; Γ̂; vec(Ô_Γ); vec(T̂_I)]` driven by one scalar regressor.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub n: usize,
    pub gamma: f64,
    pub kappa: Vec<f64>,
    pub xi_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
}

impl ObserverState {
    pub fn new(n: usize, gamma: f64, kappa0: Vec<f64>) -> Result<Self, ObserverError> {
        if kappa0.len() != 3 * n + 2 * n * n {
            return Err(ObserverError::Dimension(format!(
                "kappa has {} entries, expected {}",
                kappa0.len(),
                3 * n + 2 * n * n
            )));
        }
        Ok(Self {
            n,
            gamma,
            kappa: kappa0,
            xi_hat: vec![0.0; n],
            x_hat: vec![0.0; n],
        })
    }

    pub fn psi(&self) -> &[f64] {
        &self.kappa[..3 * self.n]
    }

    pub fn psi_a(&self) -> &[f64] {
        &self.kappa[..self.n]
    }

    pub fn psi_b(&self) -> &[f64] {
        &self.kappa[self.n..2 * self.n]
    }

    pub fn gamma_hat(&self) -> &[f64] {
        &self.kappa[2 * self.n..3 * self.n]
    }

    pub fn o_gamma(&self) -> Mat {
        let n = self.n;
        Mat::from_col_major(n, n, &self.kappa[3 * n..3 * n + n * n])
    }

    pub fn t_i(&self) -> Mat {
        let n = self.n;
        Mat::from_col_major(n, n, &self.kappa[3 * n + n * n..])
    }

    /// Advances `κ̂` over `dt` with `(Y_κ, M_κ)` frozen.
    pub fn step_adaptive(&mut self, y_kappa: &[f64], m_kappa: f64, t: f64, dt: f64) -> Result<(), ObserverError> {
        exact_gradient_step(&mut self.kappa, y_kappa, m_kappa, self.gamma, dt);
        if self.kappa.iter().any(|v| !v.is_finite()) {
            return Err(ObserverError::Divergence {
                t: t + dt,
                stiffness: self.gamma * m_kappa * m_kappa * dt,
            });
        }
        Ok(())
    }

    /// `ξ̂` from the filters and `x̂ = T̂_Iξ̂`; no inversion of estimates.
    pub fn reconstruct(&mut self, filters: &FilterState, gains: &FilterGains) -> (&[f64], &[f64]) {
        self.xi_hat = virtual_estimate(self.psi_a(), self.psi_b(), &self.o_gamma(), filters, gains);
        self.x_hat = self.t_i().mul_vec(&self.xi_hat);
        (&self.xi_hat, &self.x_hat)
    }
}

/// A denominator that fell below the guard or changed sign.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingularityEvent {
    pub t: f64,
    pub name: String,
    pub value: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    /// `|den| < ε_div`; the estimate was held.
    Guard,
    /// The denominator changed sign between consecutive steps.
    Crossing,
}

/// Failed division in a certainty-equivalence inverse map.
#[derive(Debug, Clone, PartialEq)]
pub struct Singularity {
    pub name: &'static str,
    pub value: f64,
}

/// Everything the baseline recovers from `η̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseEstimate {
    pub psi: Vec<f64>,
    pub theta: Vec<f64>,
    pub t_i: Mat,
    pub o_gamma: Mat,
}

/// Model-specific inverse maps `η → ψ → θ → T_I(θ)` and `Γ → O_Γ(Γ)` used by
/// the certainty-equivalence observer.
pub trait CertaintyEquivalence: Send + Sync {
    fn n(&self) -> usize;

    /// Every denominator met while inverting `η` (names are stable).
    fn denominators(&self, eta: &[f64]) -> Vec<(&'static str, f64)>;

    /// The full inversion, or the first denominator below `eps_div`.
    fn invert(&self, eta: &[f64], eps_div: f64) -> Result<InverseEstimate, Singularity>;
}

/// Gradient estimator on `Y = Δη` followed by the inverse maps.
#[derive(Debug, Clone)]
pub struct BaselineState {
    pub gamma: f64,
    pub eps_div: f64,
    pub eta_hat: Vec<f64>,
    pub estimate: InverseEstimate,
    pub xi_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    last_den: Vec<(&'static str, f64)>,
}

impl BaselineState {
    /// Starts from `η̂_0`; if it is already singular the estimate starts at
    /// zero (which yields `x̂ = 0`).
    pub fn new(eta0: Vec<f64>, gamma: f64, eps_div: f64, inv: &dyn CertaintyEquivalence) -> Self {
        let n = inv.n();
        let estimate = inv.invert(&eta0, eps_div).unwrap_or_else(|_| InverseEstimate {
            psi: vec![0.0; 3 * n],
            theta: Vec::new(),
            t_i: Mat::zeros(n, n),
            o_gamma: Mat::zeros(n, n),
        });
        let last_den = inv.denominators(&eta0);
        Self {
            gamma,
            eps_div,
            eta_hat: eta0,
            estimate,
            xi_hat: vec![0.0; n],
            x_hat: vec![0.0; n],
            last_den,
        }
    }

    /// Gradient step on `η̂` over `[t, t + dt]`, then re-inversion at
    /// `t + dt`. Returns the events raised by this step.
    pub fn step_baseline(
        &mut self,
        y: &[f64],
        delta: f64,
        inv: &dyn CertaintyEquivalence,
        t: f64,
        dt: f64,
    ) -> Result<Vec<SingularityEvent>, ObserverError> {
        exact_gradient_step(&mut self.eta_hat, y, delta, self.gamma, dt);
        if self.eta_hat.iter().any(|v| !v.is_finite()) {
            return Err(ObserverError::Divergence {
                t: t + dt,
                stiffness: self.gamma * delta * delta * dt,
            });
        }
        let t1 = t + dt;
        let mut events = Vec::new();
        let den = inv.denominators(&self.eta_hat);
        for ((name, now), (_, before)) in den.iter().zip(&self.last_den) {
            if now.signum() != before.signum() && *now != 0.0 && *before != 0.0 {
                events.push(SingularityEvent {
                    t: t1,
                    name: (*name).to_string(),
                    value: *now,
                    kind: EventKind::Crossing,
                });
            }
        }
        self.last_den = den;
        match inv.invert(&self.eta_hat, self.eps_div) {
            Ok(est) => self.estimate = est,
            Err(s) => events.push(SingularityEvent {
                t: t1,
                name: s.name.to_string(),
                value: s.value,
                kind: EventKind::Guard,
            }),
        }
        Ok(events)
    }

    /// `x̂ = T_I(θ̂)ξ̂` with `ξ̂` built from `ψ̂` and `O_Γ(Γ̂)`.
    pub fn reconstruct(&mut self, filters: &FilterState, gains: &FilterGains) -> &[f64] {
        let n = filters.n;
        let psi = &self.estimate.psi;
        self.xi_hat = virtual_estimate(&psi[..n], &psi[n..2 * n], &self.estimate.o_gamma, filters, gains);
        self.x_hat = self.estimate.t_i.mul_vec(&self.xi_hat);
        &self.x_hat
    }
}

/// Least-squares fit of `ln v = a + rate·t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Coefficient of determination of the log-linear fit.
    pub r2: f64,
    /// Root-mean-square residual in `ln v`.
    pub residual: f64,
    pub samples: usize,
    /// End of the fitted prefix.
    pub t_stop: f64,
}

/// Fits the decay of a norm trace over `[t0, t1]`. The fit stops at the first
/// sample with `v ≤ floor` (pass `0.0` to stop only at exact underflow), so a
/// trace that has already reached its floor is fitted over the decaying
/// prefix.
pub fn fit_decay(t: &[f64], v: &[f64], t0: f64, t1: f64, floor: f64) -> Result<DecayFit, ObserverError> {
    if t.len() != v.len() {
        return Err(ObserverError::Dimension("time and value traces differ in length".into()));
    }
    let mut pts = Vec::new();
    for (&ti, &vi) in t.iter().zip(v) {
        if ti < t0 || ti > t1 {
            continue;
        }
        if !(vi > floor) || !(vi > 0.0) || !vi.is_finite() {
            break;
        }
        pts.push((ti, vi.ln()));
    }
    if pts.len() < 2 {
        return Err(ObserverError::TooFewSamples { t0, t1, got: pts.len() });
    }
    let m = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for (ti, li) in &pts {
        stt += (ti - mt) * (ti - mt);
        stl += (ti - mt) * (li - ml);
        sll += (li - ml) * (li - ml);
    }
    let rate = stl / stt;
    let intercept = ml - rate * mt;
    let ss_res: f64 = pts
        .iter()
        .map(|(ti, li)| (li - intercept - rate * ti).powi(2))
        .sum();
    let r2 = if sll > 0.0 { 1.0 - ss_res / sll } else { 1.0 };
    Ok(DecayFit {
        rate,
        intercept,
        r2,
        residual: (ss_res / m).sqrt(),
        samples: pts.len(),
        t_stop: pts.last().map(|p| p.0).unwrap_or(t0),
    })
}

/// Median of the last `frac` of a trace; the level a converged error trace
/// settles at.
pub fn noise_floor(v: &[f64], frac: f64) -> f64 {
    let k = ((v.len() as f64 * frac).ceil() as usize).clamp(1, v.len().max(1));
    let mut tail: Vec<f64> = v[v.len().saturating_sub(k)..]
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .collect();
    if tail.is_empty() {
        return f64::NAN;
    }
    tail.sort_by(|a, b| a.total_cmp(b));
    tail[tail.len() / 2]
}

/// Index of the first sample that exceeds its predecessor by more than
/// `rel_tol·prev + abs_tol`, if any.
pub fn first_increase(v: &[f64], rel_tol: f64, abs_tol: f64) -> Option<usize> {
    v.windows(2)
        .position(|w| w[1] > w[0] + rel_tol * w[0].abs() + abs_tol)
        .map(|i| i + 1)
}

/// Maxima over consecutive blocks of `block` samples.
pub fn block_maxima(v: &[f64], block: usize) -> Vec<f64> {
    v.chunks(block.max(1))
        .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

/// Per-sample error norms against ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorTrace {
    pub t: Vec<f64>,
    pub x_err: Vec<f64>,
    pub xi_err: Vec<f64>,
    pub kappa_err: Vec<f64>,
    pub psi_a_err: Vec<f64>,
    pub psi_b_err: Vec<f64>,
    pub o_gamma_err: Vec<f64>,
    pub t_i_err: Vec<f64>,
}

impl ErrorTrace {
    /// Records the errors of `obs` against `κ`, `x` and `ξ`.
    pub fn record(&mut self, t: f64, obs: &ObserverState, kappa: &[f64], x: &[f64], xi: &[f64]) {
        let n = obs.n;
        let diff = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
        };
        let k = &obs.kappa;
        self.t.push(t);
        self.x_err.push(diff(&obs.x_hat, x));
        self.xi_err.push(diff(&obs.xi_hat, xi));
        self.kappa_err.push(diff(k, kappa));
        self.psi_a_err.push(diff(&k[..n], &kappa[..n]));
        self.psi_b_err.push(diff(&k[n..2 * n], &kappa[n..2 * n]));
        self.o_gamma_err.push(diff(&k[3 * n..3 * n + n * n], &kappa[3 * n..3 * n + n * n]));
        self.t_i_err.push(diff(&k[3 * n + n * n..], &kappa[3 * n + n * n..]));
    }

    /// Fitted decay rate of `‖κ̃‖` over `[t0, t1]`, stopping at `floor`.
    pub fn kappa_decay(&self, t0: f64, t1: f64, floor: f64) -> Result<DecayFit, ObserverError> {
        fit_decay(&self.t, &self.kappa_err, t0, t1, floor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_stiffness_branch_matches_exact() {
        let (mut a, mut b) = (vec![3.0], vec![3.0]);
        exact_gradient_step(&mut a, &[0.0], 1e-7, 1.0, 1e-4);
        let exact = 3.0 * (-1e-14 * 1e-4_f64).exp();
        b[0] = exact;
        assert!((a[0] - b[0]).abs() < 1e-15);
    }

    #[test]
    fn block_maxima_chunks() {
        assert_eq!(block_maxima(&[1.0, 3.0, 2.0, 0.5, 4.0], 2), vec![3.0, 2.0, 4.0]);
    }
}

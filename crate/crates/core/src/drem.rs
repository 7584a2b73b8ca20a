//! Regressor reduction, dynamic regressor extension and mixing, and the
//! finite-excitation monitor.

use thiserror::Error;

use crate::matrix::{self, Mat, MatError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DremError {
    #[error("reduction dimension mismatch: {0}")]
    Dimension(String),
    #[error("extension sample at t = {t} precedes the start time {t_eps}")]
    BeforeStart { t: f64, t_eps: f64 },
    #[error("extension sample at t = {t} does not advance past {last}")]
    NotAdvancing { t: f64, last: f64 },
    #[error("window of {window} samples exceeds trace length {len}")]
    WindowTooLong { window: usize, len: usize },
    #[error(transparent)]
    Matrix(#[from] MatError),
}

/// Model-supplied reduction `φ̄ = D_ηᵀφ̄_e`, `η = L_η η_e`, and the selectors
/// that pick `ψ_ab` and `Γ` out of `ψ = [ψ_a; ψ_b; Γ]`.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub d_eta: Mat,
    pub l_eta: Mat,
    pub l_ab: Mat,
    pub l_gamma: Mat,
}

impl Reduction {
    pub fn new(d_eta: Mat, l_eta: Mat, l_ab: Mat, l_gamma: Mat) -> Result<Self, DremError> {
        let (ne, neta) = (d_eta.rows(), d_eta.cols());
        if l_eta.rows() != neta || l_eta.cols() != ne {
            return Err(DremError::Dimension(format!(
                "D_eta is {ne}x{neta} but L_eta is {}x{}",
                l_eta.rows(),
                l_eta.cols()
            )));
        }
        if neta >= ne {
            return Err(DremError::Dimension(format!(
                "reduced dimension {neta} is not below {ne}"
            )));
        }
        if l_ab.cols() != l_gamma.cols() {
            return Err(DremError::Dimension("L_ab and L_Gamma disagree on 3n".into()));
        }
        Ok(Self {
            d_eta,
            l_eta,
            l_ab,
            l_gamma,
        })
    }

    pub fn n_eta(&self) -> usize {
        self.d_eta.cols()
    }

    pub fn n_ext(&self) -> usize {
        self.d_eta.rows()
    }

    /// `η = L_η η_e`.
    pub fn eta(&self, eta_e: &[f64]) -> Vec<f64> {
        self.l_eta.mul_vec(eta_e)
    }
}

/// `φ̄ = D_ηᵀφ̄_e`; `q̄` passes through.
pub fn reduce(phi_e: &[f64], qbar: f64, red: &Reduction) -> Result<(Vec<f64>, f64), DremError> {
    if phi_e.len() != red.n_ext() {
        return Err(DremError::Dimension(format!(
            "regressor has {} entries, reduction expects {}",
            phi_e.len(),
            red.n_ext()
        )));
    }
    Ok((red.d_eta.vec_mul(phi_e), qbar))
}

/// Settings of the extension/mixing stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DremSettings {
    pub sigma: f64,
    pub t_eps: f64,
    pub eps_k: f64,
    pub k_min: f64,
    pub k_max: f64,
}

/// Weighted Gram integrals `q = ∫ e^{−σ(τ−t_ε)}φ̄q̄`, `φ = ∫ e^{−σ(τ−t_ε)}φ̄φ̄ᵀ`
/// accumulated by the trapezoidal rule.
#[derive(Debug, Clone)]
pub struct DremState {
    pub settings: DremSettings,
    pub q: Vec<f64>,
    pub phi: Mat,
    last: Option<(f64, Vec<f64>, f64)>,
}

impl DremState {
    pub fn new(n_eta: usize, settings: DremSettings) -> Self {
        Self {
            settings,
            q: vec![0.0; n_eta],
            phi: Mat::zeros(n_eta, n_eta),
            last: None,
        }
    }

    pub fn started(&self) -> bool {
        self.last.is_some()
    }

    /// Adds the sample `(φ̄(t), q̄(t))`; the first call fixes the lower
    /// integration limit and leaves the integrals at zero.
    pub fn step_extension(&mut self, t: f64, phibar: &[f64], qbar: f64) -> Result<(), DremError> {
        let s = self.settings;
        if t < s.t_eps {
            return Err(DremError::BeforeStart { t, t_eps: s.t_eps });
        }
        let n = self.q.len();
        let w = (-s.sigma * (t - s.t_eps)).exp();
        if let Some((t0, ref p0, q0)) = self.last {
            if t <= t0 {
                return Err(DremError::NotAdvancing { t, last: t0 });
            }
            let h = 0.5 * (t - t0);
            let w0 = (-s.sigma * (t0 - s.t_eps)).exp();
            for i in 0..n {
                self.q[i] += h * (w0 * p0[i] * q0 + w * phibar[i] * qbar);
                for j in i..n {
                    let v = h * (w0 * p0[i] * p0[j] + w * phibar[i] * phibar[j]);
                    self.phi[(i, j)] += v;
                    if i != j {
                        self.phi[(j, i)] += v;
                    }
                }
            }
        }
        self.last = Some((t, phibar.to_vec(), qbar));
        Ok(())
    }

    /// `Y = k·adj(φ)q`, `Δ = k·det(φ)`.
    pub fn mix(&self) -> MixedRegression {
        let det = matrix::determinant(&self.phi).expect("square");
        let adj = matrix::adjugate(&self.phi).expect("square");
        let k = amplitude_gain(det, &self.settings);
        let adj_q = adj.mul_vec(&self.q);
        MixedRegression {
            y: adj_q.iter().map(|v| k * v).collect(),
            delta: k * det,
            k,
            det,
        }
    }
}

/// `k = 1/(det + ε_k)` restricted to `[k_min, k_max]`.
pub fn amplitude_gain(det: f64, s: &DremSettings) -> f64 {
    let raw = 1.0 / (det + s.eps_k);
    if raw.is_nan() {
        s.k_max
    } else {
        raw.clamp(s.k_min, s.k_max)
    }
}

/// Scalar regressions `Y = Δ·η`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedRegression {
    pub y: Vec<f64>,
    pub delta: f64,
    pub k: f64,
    pub det: f64,
}

impl MixedRegression {
    pub fn zero(n_eta: usize) -> Self {
        Self {
            y: vec![0.0; n_eta],
            delta: 0.0,
            k: 0.0,
            det: 0.0,
        }
    }
}

/// Minimum eigenvalue of the Gram integral `∫_t^{t+T} φ̄φ̄ᵀ` over every window
/// start of a uniformly sampled trace (spacing `h`, window `T`).
pub fn excitation_level(samples: &[Vec<f64>], h: f64, window: f64) -> Result<Vec<f64>, DremError> {
    let w = (window / h).round() as usize;
    if w == 0 || w >= samples.len() {
        return Err(DremError::WindowTooLong {
            window: w,
            len: samples.len(),
        });
    }
    let n = samples[0].len();
    let mut out = Vec::with_capacity(samples.len() - w);
    for start in 0..samples.len() - w {
        let mut g = Mat::zeros(n, n);
        for (k, s) in samples[start..=start + w].iter().enumerate() {
            let c = if k == 0 || k == w { 0.5 * h } else { h };
            for i in 0..n {
                for j in i..n {
                    g[(i, j)] += c * s[i] * s[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g[(i, j)] = g[(j, i)];
            }
        }
        out.push(matrix::sym_eigenvalues(&g)?[0]);
    }
    Ok(out)
}

/// Index pairs `(i, j)` of regressor components whose maximum absolute
/// difference over a trace stays below `tol` (diagnostic for choosing a
/// reduction by hand).
pub fn equal_components(samples: &[Vec<f64>], tol: f64) -> Vec<(usize, usize, f64)> {
    let Some(first) = samples.first() else {
        return Vec::new();
    };
    let n = first.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let mut diff = 0.0_f64;
            let mut mag = 0.0_f64;
            for s in samples {
                diff = diff.max((s[i] - s[j]).abs());
                mag = mag.max(s[i].abs());
            }
            if diff < tol && mag > tol {
                out.push((i, j, diff));
            }
        }
    }
    out
}

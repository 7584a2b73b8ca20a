//! Input/output filters, the measurable signal `q̄` and the extended regressor.

use thiserror::Error;

use crate::matrix::{self, dot, kron_vec, Mat, MatError};
use crate::plant::{char_poly, Exosystem, Rk4};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("gain vectors K (len {k}) and f (len {f}) must both have length n")]
    Length { k: usize, f: usize },
    #[error("{0} is not Hurwitz")]
    NotHurwitz(&'static str),
    #[error("O_e is singular")]
    SingularOe,
    #[error("filter state diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("exosystem dimension {nd} exceeds n = {n}")]
    ExoDimension { nd: usize, n: usize },
    #[error(transparent)]
    Matrix(#[from] MatError),
}

/// Filter gains and the matrices derived from them.
#[derive(Debug, Clone)]
pub struct FilterGains {
    pub n: usize,
    pub k: Vec<f64>,
    pub f: Vec<f64>,
    pub a_k: Mat,
    pub a_f: Mat,
    pub c0: Vec<f64>,
    pub o_e: Mat,
    pub o_e_inv: Mat,
}

impl FilterGains {
    pub fn new(k: &[f64], f: &[f64]) -> Result<Self, FilterError> {
        if k.len() != f.len() || k.is_empty() {
            return Err(FilterError::Length {
                k: k.len(),
                f: f.len(),
            });
        }
        let n = k.len();
        let a_k = matrix::companion_left(k)?;
        let a_f = matrix::companion_bottom(f)?;
        if !matrix::is_hurwitz(&a_k)? {
            return Err(FilterError::NotHurwitz("A_K"));
        }
        if !matrix::is_hurwitz(&a_f)? {
            return Err(FilterError::NotHurwitz("A_f"));
        }
        let c0 = crate::plant::unit(n, 0);
        let o_e = matrix::observability(&c0, &a_k, n)?;
        let o_e_inv = matrix::inverse(&o_e)?.ok_or(FilterError::SingularOe)?;
        Ok(Self {
            n,
            k: k.to_vec(),
            f: f.to_vec(),
            a_k,
            a_f,
            c0,
            o_e,
            o_e_inv,
        })
    }

    /// Number of scalar filter states: `2n + 4n²`.
    pub fn state_len(&self) -> usize {
        2 * self.n + 4 * self.n * self.n
    }

    pub fn regressor_len(&self) -> usize {
        3 * self.n + 2 * self.n * self.n
    }

    /// Time derivative of the packed filter state for inputs `(u, y)`.
    pub fn derivative(&self, s: &[f64], u: f64, y: f64, ds: &mut [f64]) {
        let n = self.n;
        let nn = n * n;
        let l = Layout::new(n);
        // z
        for i in 0..n {
            ds[l.z + i] = dot(self.a_k.row(i), &s[l.z..l.z + n]) + self.k[i] * y;
        }
        // P, Omega: A_K X + I·input
        for (off, input) in [(l.p, u), (l.omega, y)] {
            mat_mul_into(&self.a_k, &s[off..off + nn], n, &mut ds[off..off + nn]);
            for i in 0..n {
                ds[off + i * n + i] += input;
            }
        }
        // F
        let innov = y - dot(&self.c0, &s[l.z..l.z + n]);
        for i in 0..n {
            ds[l.f + i] = dot(self.a_f.row(i), &s[l.f..l.f + n]);
        }
        ds[l.f + n - 1] += innov;
        // H, N: A_f X + e_n C_0ᵀ(P or Omega)
        for (off, src) in [(l.h, l.p), (l.nmat, l.omega)] {
            mat_mul_into(&self.a_f, &s[off..off + nn], n, &mut ds[off..off + nn]);
            for j in 0..n {
                let c0x: f64 = (0..n).map(|k| self.c0[k] * s[src + k * n + j]).sum();
                ds[off + (n - 1) * n + j] += c0x;
            }
        }
    }

    pub fn o_gamma_reference(&self, gamma: &[f64]) -> Mat {
        o_gamma_reference(gamma, &self.f)
    }
}

/// `(A·X)` for row-major `n×n` `X` stored flat.
fn mat_mul_into(a: &Mat, x: &[f64], n: usize, out: &mut [f64]) {
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += a[(i, k)] * x[k * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// Offsets of each filter inside the packed state.
#[derive(Debug, Clone, Copy)]
pub struct Layout {
    pub z: usize,
    pub p: usize,
    pub omega: usize,
    pub f: usize,
    pub h: usize,
    pub nmat: usize,
}

impl Layout {
    pub fn new(n: usize) -> Self {
        let nn = n * n;
        Self {
            z: 0,
            p: n,
            omega: n + nn,
            f: n + 2 * nn,
            h: 2 * n + 2 * nn,
            nmat: 2 * n + 3 * nn,
        }
    }
}

/// Packed state of the six filters `z, P, Ω, F, H, N`; all start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub n: usize,
    pub data: Vec<f64>,
}

impl FilterState {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; 2 * n + 4 * n * n],
        }
    }

    pub fn from_packed(n: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), 2 * n + 4 * n * n);
        Self {
            n,
            data: data.to_vec(),
        }
    }

    fn mat(&self, off: usize) -> Mat {
        let n = self.n;
        Mat::from_vec(n, n, self.data[off..off + n * n].to_vec())
    }

    pub fn z(&self) -> &[f64] {
        let l = Layout::new(self.n);
        &self.data[l.z..l.z + self.n]
    }

    pub fn f(&self) -> &[f64] {
        let l = Layout::new(self.n);
        &self.data[l.f..l.f + self.n]
    }

    pub fn p(&self) -> Mat {
        self.mat(Layout::new(self.n).p)
    }

    pub fn omega(&self) -> Mat {
        self.mat(Layout::new(self.n).omega)
    }

    pub fn h(&self) -> Mat {
        self.mat(Layout::new(self.n).h)
    }

    pub fn nmat(&self) -> Mat {
        self.mat(Layout::new(self.n).nmat)
    }
}

/// One RK4 step of all filters with `(u, y)` held over the step.
pub fn step_filters(
    state: &mut FilterState,
    gains: &FilterGains,
    u: f64,
    y: f64,
    t: f64,
    dt: f64,
) -> Result<(), FilterError> {
    let mut rk = Rk4::new(state.data.len());
    rk.step(|_, s, ds| gains.derivative(s, u, y, ds), t, &mut state.data, dt);
    if state.data.iter().any(|v| !v.is_finite()) {
        return Err(FilterError::Divergence { t: t + dt });
    }
    Ok(())
}

/// Measurable signal `q̄` and extended regressor `φ̄_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedRegressor {
    pub qbar: f64,
    pub phi_e: Vec<f64>,
}

/// `q̄ = fᵀF + y − C_0ᵀz` and
/// `φ̄_e = [ΩᵀC_0 + Nᵀf; PᵀC_0 + Hᵀf; F; vec(N); vec(H)]`.
pub fn extended_regressor(state: &FilterState, gains: &FilterGains, y: f64) -> ExtendedRegressor {
    let n = state.n;
    let l = Layout::new(n);
    let s = &state.data;
    let f = &gains.f;
    let c0 = &gains.c0;
    let qbar = dot(f, &s[l.f..l.f + n]) + y - dot(c0, &s[l.z..l.z + n]);
    let mut phi = Vec::with_capacity(3 * n + 2 * n * n);
    // Xᵀc0 + Yᵀf, column j = Σ_k X[k][j] c0[k] + Y[k][j] f[k]
    for (x, yoff) in [(l.omega, l.nmat), (l.p, l.h)] {
        for j in 0..n {
            let v: f64 = (0..n)
                .map(|k| s[x + k * n + j] * c0[k] + s[yoff + k * n + j] * f[k])
                .sum();
            phi.push(v);
        }
    }
    phi.extend_from_slice(&s[l.f..l.f + n]);
    for off in [l.nmat, l.h] {
        for j in 0..n {
            for i in 0..n {
                phi.push(s[off + i * n + j]);
            }
        }
    }
    ExtendedRegressor { qbar, phi_e: phi }
}

/// `η_e = [ψ_a; ψ_b; Γ; −ψ_a⊗Γ; −ψ_b⊗Γ]`.
pub fn true_eta_e(psi_a: &[f64], psi_b: &[f64], gamma: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * gamma.len() + 2 * gamma.len() * gamma.len());
    v.extend_from_slice(psi_a);
    v.extend_from_slice(psi_b);
    v.extend_from_slice(gamma);
    v.extend(kron_vec(psi_a, gamma).into_iter().map(|x| -x));
    v.extend(kron_vec(psi_b, gamma).into_iter().map(|x| -x));
    v
}

/// Bottom row `Γ` of the companion matrix whose spectrum is the exosystem
/// spectrum plus `n − n_δ` zeros.
pub fn gamma_spectrum_reference(exo: &Exosystem, n: usize) -> Result<Vec<f64>, FilterError> {
    if n < exo.n_delta {
        return Err(FilterError::ExoDimension {
            nd: exo.n_delta,
            n,
        });
    }
    let p = char_poly(&exo.a);
    let mut full = p.clone();
    full.resize(n + 1, 0.0);
    // full = [1, a_1, …, a_n]; coefficient of s^j is full[n − j]
    Ok((0..n).map(|j| -full[n - j]).collect())
}

/// `O_Γ(Γ)` with rows `(Γ − f)ᵀA_Γᵏ`.
pub fn o_gamma_reference(gamma: &[f64], f: &[f64]) -> Mat {
    let a_g = matrix::companion_bottom(gamma).expect("non-empty gamma");
    let v: Vec<f64> = gamma.iter().zip(f).map(|(g, f)| g - f).collect();
    matrix::observability(&v, &a_g, gamma.len()).expect("matching lengths")
}

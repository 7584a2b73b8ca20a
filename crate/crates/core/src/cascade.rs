//! Division-free regression cascade from `(Y, Δ)` to `(Y_κ, M_κ)` with
//! `κ = [ψ; vec(O_Γ); vec(T_I)]`.
//!
//! Every stage is a polynomial in its inputs and homogeneous of a known
//! degree, so a stage can be evaluated on a rescaled input and the scale
//! carried separately as a logarithm. [`run_cascade`] does exactly that,
//! which keeps the stacked regressor `M_κ = M_ψ^{3n}M_OΓ^{n²}M_TI^{n²}`
//! representable when it is far outside the double-precision range.

use serde::Serialize;
use thiserror::Error;

use crate::hetero::HeteroMapping;
use crate::matrix::{self, max_abs, Mat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CascadeError {
    #[error("stacked regressor overflows double precision (log10|M_kappa| = {log10:.1})")]
    Overflow { log10: f64 },
    #[error("bundle check failed: {0}")]
    Bundle(String),
}

/// Model-specific mapping set used by the cascade.
pub struct CascadeBundle {
    pub n: usize,
    pub n_theta: usize,
    pub g_psi: Box<dyn HeteroMapping>,
    pub s_psi: Box<dyn HeteroMapping>,
    pub g_theta: Box<dyn HeteroMapping>,
    pub s_theta: Box<dyn HeteroMapping>,
    pub p: Box<dyn HeteroMapping>,
    pub q: Box<dyn HeteroMapping>,
    /// Numerator `T_OΓ`; `pi()` gives `Π_OΓ`.
    pub o_gamma: Box<dyn HeteroMapping>,
    pub l_gamma: Mat,
    pub l_ab: Mat,
}

impl CascadeBundle {
    pub fn kappa_len(&self) -> usize {
        3 * self.n + 2 * self.n * self.n
    }

    pub fn mappings(&self) -> [&dyn HeteroMapping; 7] {
        [
            self.g_psi.as_ref(),
            self.s_psi.as_ref(),
            self.g_theta.as_ref(),
            self.s_theta.as_ref(),
            self.p.as_ref(),
            self.q.as_ref(),
            self.o_gamma.as_ref(),
        ]
    }

    /// Checks `S_ψ = G_ψψ`, `S_θ = G_θθ`, `Q = P·T_I` and non-singular
    /// denominators at a ground-truth point.
    pub fn check_truth(
        &self,
        eta: &[f64],
        psi: &[f64],
        theta: &[f64],
        t_i: &Mat,
        tol: f64,
    ) -> Result<(), CascadeError> {
        let psi_ab = self.l_ab.mul_vec(psi);
        let pairs: [(&str, Mat, Mat); 3] = [
            (
                "S_psi = G_psi psi",
                self.s_psi.reference(eta),
                &self.g_psi.reference(eta) * &Mat::col_vector(psi),
            ),
            (
                "S_theta = G_theta theta",
                self.s_theta.reference(&psi_ab),
                &self.g_theta.reference(&psi_ab) * &Mat::col_vector(theta),
            ),
            (
                "Q = P T_I",
                self.q.reference(theta),
                &self.p.reference(theta) * t_i,
            ),
        ];
        for (what, a, b) in pairs {
            let err = (&a - &b).max_abs();
            if err > tol * (1.0 + a.max_abs()) {
                return Err(CascadeError::Bundle(format!("{what} off by {err:e}")));
            }
        }
        for (what, m) in [
            ("det G_psi", self.g_psi.reference(eta)),
            ("det G_theta", self.g_theta.reference(&psi_ab)),
            ("det P", self.p.reference(theta)),
        ] {
            let d = matrix::determinant(&m).map_err(|e| CascadeError::Bundle(e.to_string()))?;
            if d == 0.0 {
                return Err(CascadeError::Bundle(format!("{what} vanishes at ground truth")));
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for CascadeBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CascadeBundle")
            .field("n", &self.n)
            .field("n_theta", &self.n_theta)
            .finish_non_exhaustive()
    }
}

fn column(m: Mat) -> Vec<f64> {
    debug_assert_eq!(m.cols(), 1);
    m.as_slice().to_vec()
}

/// `Y_ψ = adj(T_Gψ)·T_Sψ`, `M_ψ = det T_Gψ`.
pub fn stage_psi(y: &[f64], delta: f64, b: &CascadeBundle) -> (Vec<f64>, f64) {
    let g = b.g_psi.transformed(delta, y);
    let s = b.s_psi.transformed(delta, y);
    let adj = matrix::adjugate(&g).expect("square G_psi");
    (column(&adj * &s), matrix::determinant(&g).expect("square G_psi"))
}

/// `Y_OΓ = adj(Π_OΓ(M_ψ))·T_OΓ(M_ψ, L_Γ Y_ψ)`, `M_OΓ = det Π_OΓ(M_ψ)`.
pub fn stage_ogamma(y_psi: &[f64], m_psi: f64, b: &CascadeBundle) -> (Mat, f64) {
    let y_gamma = b.l_gamma.mul_vec(y_psi);
    let pi = b.o_gamma.pi(m_psi);
    let t = b.o_gamma.transformed(m_psi, &y_gamma);
    let adj = matrix::adjugate(&pi).expect("square Pi_OGamma");
    (&adj * &t, matrix::determinant(&pi).expect("square Pi_OGamma"))
}

/// `Y_θ = adj(T_Gθ)·T_Sθ` on `Y_ab = L_ab Y_ψ`, `M_θ = det T_Gθ`.
pub fn stage_theta(y_psi: &[f64], m_psi: f64, b: &CascadeBundle) -> (Vec<f64>, f64) {
    let y_ab = b.l_ab.mul_vec(y_psi);
    let g = b.g_theta.transformed(m_psi, &y_ab);
    let s = b.s_theta.transformed(m_psi, &y_ab);
    let adj = matrix::adjugate(&g).expect("square G_theta");
    (column(&adj * &s), matrix::determinant(&g).expect("square G_theta"))
}

/// `Y_TI = adj(T_P)·T_Q`, `M_TI = det T_P`.
pub fn stage_ti(y_theta: &[f64], m_theta: f64, b: &CascadeBundle) -> (Mat, f64) {
    let p = b.p.transformed(m_theta, y_theta);
    let q = b.q.transformed(m_theta, y_theta);
    let adj = matrix::adjugate(&p).expect("square P");
    (&adj * &q, matrix::determinant(&p).expect("square P"))
}

/// Plain double-precision stacking
/// `Y_κ = adj(bd(M_ψI, M_OΓI, M_TII))·[Y_ψ; vec(Y_OΓ); vec(Y_TI)]`,
/// `M_κ = M_ψ^{3n}M_OΓ^{n²}M_TI^{n²}`.
pub fn stack_kappa(
    y_psi: &[f64],
    m_psi: f64,
    y_og: &Mat,
    m_og: f64,
    y_ti: &Mat,
    m_ti: f64,
) -> Result<(Vec<f64>, f64), CascadeError> {
    let n3 = y_psi.len() as i32;
    let nn = (y_og.rows() * y_og.cols()) as i32;
    let m_kappa = m_psi.powi(n3) * m_og.powi(nn) * m_ti.powi(nn);
    if !m_kappa.is_finite() {
        let log10 = n3 as f64 * m_psi.abs().log10()
            + nn as f64 * (m_og.abs().log10() + m_ti.abs().log10());
        return Err(CascadeError::Overflow { log10 });
    }
    // adj of a diagonal matrix: product of the other diagonal entries
    let c_psi = m_psi.powi(n3 - 1) * m_og.powi(nn) * m_ti.powi(nn);
    let c_og = m_psi.powi(n3) * m_og.powi(nn - 1) * m_ti.powi(nn);
    let c_ti = m_psi.powi(n3) * m_og.powi(nn) * m_ti.powi(nn - 1);
    let mut y = Vec::with_capacity((n3 + 2 * nn) as usize);
    y.extend(y_psi.iter().map(|v| c_psi * v));
    y.extend(matrix::vec(y_og).into_iter().map(|v| c_og * v));
    y.extend(matrix::vec(y_ti).into_iter().map(|v| c_ti * v));
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CascadeError::Overflow { log10: f64::INFINITY });
    }
    Ok((y, m_kappa))
}

/// A regression `(Y, M)` stored as `e^{log_scale}·(y, m)` with
/// `max(|m|, |y|_∞) = 1`, or all zero with `log_scale = −∞`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scaled {
    pub y: Vec<f64>,
    pub m: f64,
    pub log_scale: f64,
}

impl Scaled {
    fn normalize(y: Vec<f64>, m: f64, log_in: f64, degree: u32) -> Self {
        let s = max_abs(&y).max(m.abs());
        if s == 0.0 || !s.is_finite() || log_in == f64::NEG_INFINITY {
            return Self::zero(y.len());
        }
        Self {
            y: y.iter().map(|v| v / s).collect(),
            m: m / s,
            log_scale: degree as f64 * log_in + s.ln(),
        }
    }

    fn zero(len: usize) -> Self {
        Self {
            y: vec![0.0; len],
            m: 0.0,
            log_scale: f64::NEG_INFINITY,
        }
    }

    /// Input pair for the next stage together with its scale.
    fn from_raw(y: &[f64], m: f64) -> Self {
        Self::normalize(y.to_vec(), m, 0.0, 1)
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0.0 && self.y.iter().all(|v| *v == 0.0)
    }

    /// `ln|M|`, `−∞` when `M = 0`.
    pub fn log_abs_m(&self) -> f64 {
        if self.m == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.log_scale + self.m.abs().ln()
        }
    }

    /// `M` as a double, saturating to `±∞` or `0`.
    pub fn m_value(&self) -> f64 {
        if self.m == 0.0 {
            0.0
        } else {
            self.m.signum() * self.log_abs_m().exp()
        }
    }

    /// `Y/M`, meaningful only when `M ≠ 0`.
    pub fn ratio(&self) -> Vec<f64> {
        self.y.iter().map(|v| v / self.m).collect()
    }
}

/// The stacked regression `Y_κ = M_κ·κ` in sign/log form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaRegression {
    /// Sign of `M_κ` (`0` when it vanishes).
    pub sign: f64,
    /// `ln|M_κ|`.
    pub log_abs_m: f64,
    /// `Y_κ/M_κ` (zero vector when `M_κ = 0`).
    pub ratio: Vec<f64>,
    /// Plain `Y_κ`, kept only when `|M_κ| < 1`.
    raw_y: Vec<f64>,
}

impl KappaRegression {
    /// `(Y_κ, M_κ)/max(1, |M_κ|)`.
    pub fn normalized(&self) -> (Vec<f64>, f64) {
        if self.sign == 0.0 {
            return (self.raw_y.clone(), 0.0);
        }
        if self.log_abs_m >= 0.0 {
            (
                self.ratio.iter().map(|v| self.sign * v).collect(),
                self.sign,
            )
        } else {
            (self.raw_y.clone(), self.sign * self.log_abs_m.exp())
        }
    }

    pub fn log10_abs_m(&self) -> f64 {
        self.log_abs_m / std::f64::consts::LN_10
    }
}

/// All stage outputs at one instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeOutput {
    pub psi: Scaled,
    pub o_gamma: Scaled,
    pub theta: Scaled,
    pub t_i: Scaled,
    pub kappa: KappaRegression,
}

/// Runs every stage on rescaled inputs and stacks the result in sign/log
/// form.
pub fn run_cascade(y: &[f64], delta: f64, b: &CascadeBundle) -> CascadeOutput {
    let n = b.n;
    let input = Scaled::from_raw(y, delta);
    let psi = if input.is_zero() {
        Scaled::zero(3 * n)
    } else {
        let (yp, mp) = stage_psi(&input.y, input.m, b);
        Scaled::normalize(yp, mp, input.log_scale, b.g_psi.degree())
    };
    let (og, th) = if psi.is_zero() {
        (Scaled::zero(n * n), Scaled::zero(b.n_theta))
    } else {
        let (yo, mo) = stage_ogamma(&psi.y, psi.m, b);
        let (yt, mt) = stage_theta(&psi.y, psi.m, b);
        (
            Scaled::normalize(matrix::vec(&yo), mo, psi.log_scale, b.o_gamma.degree()),
            Scaled::normalize(yt, mt, psi.log_scale, b.g_theta.degree()),
        )
    };
    let ti = if th.is_zero() {
        Scaled::zero(n * n)
    } else {
        let (yi, mi) = stage_ti(&th.y, th.m, b);
        Scaled::normalize(matrix::vec(&yi), mi, th.log_scale, b.p.degree())
    };
    let kappa = stack_scaled(&psi, &og, &ti);
    CascadeOutput {
        psi,
        o_gamma: og,
        theta: th,
        t_i: ti,
        kappa,
    }
}

/// Sign/log stacking of three scaled blocks.
fn stack_scaled(psi: &Scaled, og: &Scaled, ti: &Scaled) -> KappaRegression {
    let blocks = [psi, og, ti];
    let powers: [i32; 3] = [psi.y.len() as i32, og.y.len() as i32, ti.y.len() as i32];
    let len: usize = blocks.iter().map(|b| b.y.len()).sum();
    let sign_of = |b: &Scaled, p: i32| -> f64 {
        if p % 2 == 0 {
            1.0
        } else {
            b.m.signum()
        }
    };
    let any_zero = blocks.iter().any(|b| b.m == 0.0);
    if any_zero {
        // Y_κ block k carries every other M at full power and its own at
        // power − 1; it survives only if all the others are nonzero and its
        // own power is one.
        let mut raw_y = vec![0.0; len];
        let mut off = 0;
        for (k, b) in blocks.iter().enumerate() {
            let others_ok = blocks
                .iter()
                .enumerate()
                .all(|(j, o)| j == k || o.m != 0.0);
            if others_ok && b.m == 0.0 && powers[k] == 1 {
                let mut log_c = 0.0;
                let mut sign = 1.0;
                for (j, o) in blocks.iter().enumerate() {
                    if j != k {
                        log_c += powers[j] as f64 * o.log_abs_m();
                        sign *= sign_of(o, powers[j]);
                    }
                }
                for (i, v) in b.y.iter().enumerate() {
                    raw_y[off + i] = sign * (log_c + b.log_scale).exp() * v;
                }
            }
            off += b.y.len();
        }
        return KappaRegression {
            sign: 0.0,
            log_abs_m: f64::NEG_INFINITY,
            ratio: vec![0.0; len],
            raw_y,
        };
    }
    let mut log_abs_m = 0.0;
    let mut sign = 1.0;
    for (b, &p) in blocks.iter().zip(&powers) {
        log_abs_m += p as f64 * b.log_abs_m();
        sign *= sign_of(b, p);
    }
    let ratio: Vec<f64> = blocks.iter().flat_map(|b| b.ratio()).collect();
    let raw_y = if log_abs_m < 0.0 {
        let m = sign * log_abs_m.exp();
        ratio.iter().map(|r| m * r).collect()
    } else {
        Vec::new()
    };
    KappaRegression {
        sign,
        log_abs_m,
        ratio,
        raw_y,
    }
}

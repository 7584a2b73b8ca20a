//! The third-order worked example ("paper-example"): plant family, exosystem,
//! reduction, closed-form mappings, inverse maps and the excitation control
//! law.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::CascadeBundle;
use crate::drem::{DremSettings, Reduction};
use crate::filters::{o_gamma_reference, FilterError, FilterGains};
use crate::hetero::FnMapping;
use crate::matrix::{self, Mat};
use crate::observer::{CertaintyEquivalence, InverseEstimate, Singularity};
use crate::plant::{build_canonical, Exosystem, ModelFamily, PlantError, PlantModel};

pub const MODEL_NAME: &str = "paper-example";

const REDUCTION_DATA: &str = include_str!("../data/example_reduction.toml");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExampleError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("reduction data: {0}")]
    Reduction(String),
}

/// Experiment parameters. Field names follow the usual symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExampleConfig {
    pub theta: Vec<f64>,
    pub rho: f64,
    pub f: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<f64>,
    pub sigma: f64,
    pub t_eps: f64,
    pub gamma: f64,
    pub dt: f64,
    pub t_end: f64,
    pub x0: Vec<f64>,
    pub xd0: Vec<f64>,
    pub seed: u64,
    /// Regularizer in `k = 1/(det φ + eps_k)`.
    pub eps_k: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Guard for baseline divisions.
    pub eps_div: f64,
    /// `Δ` level that marks the end of the excitation interval.
    pub fe_delta_min: f64,
    /// Amplitude of the `sin(10t)` injection; zero disables it.
    pub excitation: f64,
    /// Baseline gradient gain.
    pub gamma_baseline: f64,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        Self {
            theta: vec![1.0, 1.0, -1.0],
            rho: -10.0,
            f: vec![-125.0, -75.0, -15.0],
            k: vec![3.0, 3.0, 1.0],
            sigma: 1.0,
            t_eps: 25.0,
            gamma: 1.0,
            dt: 1e-4,
            t_end: 100.0,
            x0: vec![1.0, -1.0, 2.0],
            xd0: vec![1.0, 0.0],
            seed: 7,
            eps_k: 1e-30,
            k_min: 1e-6,
            k_max: 1e25,
            eps_div: 1e-8,
            fe_delta_min: 0.5,
            excitation: 2.5,
            gamma_baseline: 1.0,
        }
    }
}

impl ExampleConfig {
    /// Checks every field and lists all problems at once.
    pub fn validate(&self) -> Result<(), ExampleError> {
        let mut bad = Vec::new();
        let mut need_len = |name: &str, v: &[f64], len: usize| {
            if v.len() != len {
                bad.push(format!("{name}: expected {len} entries, got {}", v.len()));
            }
        };
        need_len("theta", &self.theta, 3);
        need_len("f", &self.f, 3);
        need_len("K", &self.k, 3);
        need_len("x0", &self.x0, 3);
        need_len("xd0", &self.xd0, 2);
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        for (name, v) in [
            ("theta", &self.theta),
            ("f", &self.f),
            ("K", &self.k),
            ("x0", &self.x0),
            ("xd0", &self.xd0),
        ] {
            if !finite(v) {
                bad.push(format!("{name}: non-finite entry"));
            }
        }
        if self.theta.len() == 3 {
            if self.theta[1] == 0.0 {
                bad.push("theta: theta_2 must be nonzero".into());
            }
            if self.theta[2] == 0.0 {
                bad.push("theta: theta_3 must be nonzero".into());
            }
        }
        if !(self.rho < 0.0) {
            bad.push(format!("rho: must be negative (oscillatory exosystem), got {}", self.rho));
        }
        if !(self.sigma.is_finite() && self.sigma != 0.0) {
            bad.push(format!("sigma: must be finite and nonzero, got {}", self.sigma));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt: must be positive, got {}", self.dt));
        }
        if !(self.t_eps > 0.0) {
            bad.push(format!("t_eps: must be positive, got {}", self.t_eps));
        }
        if !(self.t_end > self.t_eps) {
            bad.push(format!("t_end: must exceed t_eps ({}), got {}", self.t_eps, self.t_end));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("gamma_baseline", self.gamma_baseline),
            ("eps_div", self.eps_div),
            ("k_min", self.k_min),
            ("fe_delta_min", self.fe_delta_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(format!("{name}: must be positive, got {v}"));
            }
        }
        if !(self.eps_k >= 0.0 && self.eps_k.is_finite()) {
            bad.push(format!("eps_k: must be non-negative, got {}", self.eps_k));
        }
        if !(self.k_max >= self.k_min && self.k_max.is_finite()) {
            bad.push(format!("k_max: must be finite and at least k_min, got {}", self.k_max));
        }
        if !self.excitation.is_finite() {
            bad.push("excitation: non-finite".into());
        }
        if self.k.len() == 3 && self.f.len() == 3 {
            if let Err(e) = FilterGains::new(&self.k, &self.f) {
                bad.push(format!("K/f: {e}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(ExampleError::Config(bad))
        }
    }

    pub fn drem_settings(&self) -> DremSettings {
        DremSettings {
            sigma: self.sigma,
            t_eps: self.t_eps,
            eps_k: self.eps_k,
            k_min: self.k_min,
            k_max: self.k_max,
        }
    }
}

/// `A(θ) = [[0, θ₁+θ₂, 0], [−θ₂, 0, θ₂], [0, −θ₃, 0]]`, `B = θ₃e₃`,
/// `D = θ₁θ₂e₁`, `C = e₃`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExampleFamily;

impl ModelFamily for ExampleFamily {
    fn name(&self) -> &str {
        MODEL_NAME
    }

    fn n(&self) -> usize {
        3
    }

    fn n_theta(&self) -> usize {
        3
    }

    fn a(&self, th: &[f64]) -> Mat {
        Mat::from_rows(&[
            &[0.0, th[0] + th[1], 0.0],
            &[-th[1], 0.0, th[1]],
            &[0.0, -th[2], 0.0],
        ])
    }

    fn b(&self, th: &[f64]) -> Vec<f64> {
        vec![0.0, 0.0, th[2]]
    }

    fn d(&self, th: &[f64]) -> Vec<f64> {
        vec![th[0] * th[1], 0.0, 0.0]
    }

    fn c(&self) -> Vec<f64> {
        vec![0.0, 0.0, 1.0]
    }

    fn check_domain(&self, th: &[f64]) -> Result<(), String> {
        if th[1] == 0.0 || th[2] == 0.0 {
            Err(format!("theta_2 and theta_3 must be nonzero, got {th:?}"))
        } else {
            Ok(())
        }
    }
}

/// Harmonic exosystem `A_δ = [[0, 1], [ρ, 0]]`, `h_δ = e₁`.
pub fn exosystem(rho: f64, xd0: &[f64]) -> Result<Exosystem, PlantError> {
    let a = Mat::from_rows(&[&[0.0, 1.0], &[rho, 0.0]]);
    Exosystem::new(&[rho], a, &[1.0, 0.0], xd0)
}

pub fn example_model(cfg: &ExampleConfig) -> Result<(PlantModel, Exosystem), ExampleError> {
    cfg.validate()?;
    let plant = PlantModel::new(&ExampleFamily, &cfg.theta, &cfg.x0)?;
    let exo = exosystem(cfg.rho, &cfg.xd0)?;
    Ok((plant, exo))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReductionFile {
    equal_pairs: Vec<[usize; 2]>,
    d_eta: Vec<Vec<f64>>,
    l_eta: Vec<Vec<f64>>,
    l_ab: Vec<Vec<f64>>,
    l_gamma: Vec<Vec<f64>>,
}

fn rows_to_mat(name: &str, rows: &[Vec<f64>]) -> Result<Mat, ExampleError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || rows.iter().any(|r| r.len() != cols) {
        return Err(ExampleError::Reduction(format!("{name} is not a rectangular matrix")));
    }
    Ok(Mat::from_vec(rows.len(), cols, rows.concat()))
}

/// The reduction and the regressor pairs it merges.
pub fn example_reduction() -> Result<(Reduction, Vec<(usize, usize)>), ExampleError> {
    let file: ReductionFile =
        toml::from_str(REDUCTION_DATA).map_err(|e| ExampleError::Reduction(e.to_string()))?;
    let red = Reduction::new(
        rows_to_mat("d_eta", &file.d_eta)?,
        rows_to_mat("l_eta", &file.l_eta)?,
        rows_to_mat("l_ab", &file.l_ab)?,
        rows_to_mat("l_gamma", &file.l_gamma)?,
    )
    .map_err(|e| ExampleError::Reduction(e.to_string()))?;
    let pairs = file.equal_pairs.iter().map(|p| (p[0], p[1])).collect();
    Ok((red, pairs))
}

/// `η = [ψ_a2 + ρ, ψ_b1, ψ_b3 − ψ_b1ρ, −ψ_a2ρ, −ψ_b3ρ]` (with `Γ₂ = ρ`).
pub fn eta_of_psi(psi: &[f64]) -> Vec<f64> {
    let (a2, b1, b3, g) = (psi[1], psi[3], psi[5], psi[7]);
    vec![a2 + g, b1, b3 - b1 * g, -a2 * g, -b3 * g]
}

fn diag9(d: [f64; 9]) -> Mat {
    Mat::diag(&d)
}

fn col(v: &[f64]) -> Mat {
    Mat::col_vector(v)
}

/// `Π_ψ(Δ) = diag(Δ, Δ³, Δ, Δ, Δ, Δ³, Δ, Δ², Δ)`.
fn pi_psi(d: f64) -> Mat {
    let (d2, d3) = (d * d, d * d * d);
    diag9([d, d3, d, d, d, d3, d, d2, d])
}

/// `O_Γ(Γ)` for `Γ = [0, Γ₂, 0]`; only `Γ₂` enters.
pub fn o_gamma_closed_form(gamma: &[f64], f: &[f64]) -> Mat {
    let g = gamma[1];
    Mat::from_rows(&[
        &[-f[0], g - f[1], -f[2]],
        &[0.0, -f[0] - f[2] * g, g - f[1]],
        &[0.0, -g * (f[1] - g), -f[0] - f[2] * g],
    ])
}

/// `T_I(θ) = [[−(θ₁+θ₂)/θ₃, 0, 1/(θ₂θ₃)], [0, −1/θ₃, 0], [1, 0, 0]]`.
pub fn t_i_closed_form(th: &[f64]) -> Mat {
    Mat::from_rows(&[
        &[-(th[0] + th[1]) / th[2], 0.0, 1.0 / (th[1] * th[2])],
        &[0.0, -1.0 / th[2], 0.0],
        &[1.0, 0.0, 0.0],
    ])
}

/// Mappings of the division-free cascade.
pub fn example_bundle(cfg: &ExampleConfig) -> Result<CascadeBundle, ExampleError> {
    let (red, _) = example_reduction()?;
    let f = cfg.f.clone();
    if f.len() != 3 {
        return Err(ExampleError::Config(vec!["f: expected 3 entries".into()]));
    }
    let g_psi = FnMapping::new(
        "G_psi",
        5,
        14,
        |e: &[f64]| {
            let den = e[4] + e[3] * e[1];
            let num = e[3] * e[2] - e[0] * e[4];
            diag9([1.0, den, 1.0, 1.0, 1.0, num, 1.0, -den, 1.0])
        },
        |d: f64, y: &[f64]| {
            diag9([
                d,
                d * d * y[4] + d * y[3] * y[1],
                d,
                d,
                d,
                d * (y[3] * y[2] - y[0] * y[4]),
                d,
                -(d * y[4] + y[3] * y[1]),
                d,
            ])
        },
        pi_psi,
    );
    let s_psi = FnMapping::new(
        "S_psi",
        5,
        14,
        |e: &[f64]| {
            let den = e[4] + e[3] * e[1];
            let num = e[3] * e[2] - e[0] * e[4];
            col(&[0.0, den * e[0] + num, 0.0, e[1], 0.0, e[4] * den, 0.0, num, 0.0])
        },
        |d: f64, y: &[f64]| {
            let num = y[3] * y[2] - y[0] * y[4];
            col(&[
                0.0,
                (y[4] * d + y[3] * y[1]) * y[0] + d * num,
                0.0,
                y[1],
                0.0,
                y[4] * (d * y[4] + y[3] * y[1]),
                0.0,
                num,
                0.0,
            ])
        },
        pi_psi,
    );
    let pi_theta = |m: f64| Mat::diag(&[m.powi(5), m * m, m * m]);
    let g_theta = FnMapping::new(
        "G_theta",
        3,
        9,
        |p: &[f64]| {
            let s = p[0] * p[1] + p[2];
            Mat::diag(&[-p[1].powi(3) * s, -p[1] * p[1], p[0]])
        },
        |m: f64, y: &[f64]| {
            let s = y[0] * y[1] + m * y[2];
            Mat::diag(&[-y[1].powi(3) * s, -y[1] * y[1], m * y[0]])
        },
        pi_theta,
    );
    let s_theta = FnMapping::new(
        "S_theta",
        3,
        9,
        |p: &[f64]| {
            let s = p[0] * p[1] + p[2];
            col(&[p[1].powi(4) * p[2] - p[1] * s * s, s, p[1] * p[0]])
        },
        |m: f64, y: &[f64]| {
            let s = y[0] * y[1] + m * y[2];
            col(&[y[1].powi(4) * y[2] - y[1] * s * s, s, y[1] * y[0]])
        },
        pi_theta,
    );
    let pi_ti = |m: f64| Mat::diag(&[m * m, m, m]);
    let p = FnMapping::new(
        "P",
        3,
        4,
        |th: &[f64]| Mat::diag(&[th[1] * th[2], th[2], 1.0]),
        |m: f64, y: &[f64]| Mat::diag(&[y[1] * y[2], y[2], m]),
        pi_ti,
    );
    let q = FnMapping::new(
        "Q",
        3,
        4,
        |th: &[f64]| {
            Mat::from_rows(&[
                &[-th[1] * (th[0] + th[1]), 0.0, 1.0],
                &[0.0, -1.0, 0.0],
                &[1.0, 0.0, 0.0],
            ])
        },
        |m: f64, y: &[f64]| {
            Mat::from_rows(&[
                &[-y[1] * (y[0] + y[1]), 0.0, m * m],
                &[0.0, -m, 0.0],
                &[m, 0.0, 0.0],
            ])
        },
        pi_ti,
    );
    let f_ref = f.clone();
    let o_gamma = FnMapping::new(
        "O_Gamma",
        3,
        4,
        move |g: &[f64]| o_gamma_closed_form(g, &f_ref),
        move |m: f64, y: &[f64]| {
            let g = y[1];
            Mat::from_rows(&[
                &[-m * f[0], g - m * f[1], -m * f[2]],
                &[0.0, -m * f[0] - f[2] * g, g - m * f[1]],
                &[0.0, -g * (m * f[1] - g), -m * m * f[0] - m * f[2] * g],
            ])
        },
        |m: f64| Mat::diag(&[m, m, m * m]),
    );
    Ok(CascadeBundle {
        n: 3,
        n_theta: 3,
        g_psi: Box::new(g_psi),
        s_psi: Box::new(s_psi),
        g_theta: Box::new(g_theta),
        s_theta: Box::new(s_theta),
        p: Box::new(p),
        q: Box::new(q),
        o_gamma: Box::new(o_gamma),
        l_gamma: red.l_gamma,
        l_ab: red.l_ab,
    })
}

/// Ground-truth quantities of a configuration.
#[derive(Debug, Clone)]
pub struct Truth {
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub gamma: Vec<f64>,
    pub eta: Vec<f64>,
    pub eta_e: Vec<f64>,
    pub o_gamma: Mat,
    pub t_i: Mat,
    pub t: Mat,
    pub kappa: Vec<f64>,
}

/// `κ = [ψ; vec(O_Γ); vec(T_I)]` and friends, computed from the plant and
/// exosystem rather than from the closed forms.
pub fn truth(cfg: &ExampleConfig) -> Result<Truth, ExampleError> {
    let (plant, exo) = example_model(cfg)?;
    let canon = build_canonical(&plant)?;
    let gamma = crate::filters::gamma_spectrum_reference(&exo, plant.n)?;
    let psi = canon.psi(&gamma);
    let eta_e = crate::filters::true_eta_e(&canon.psi_a, &canon.psi_b, &gamma);
    let (red, _) = example_reduction()?;
    let eta = red.eta(&eta_e);
    let o_gamma = o_gamma_reference(&gamma, &cfg.f);
    let mut kappa = psi.clone();
    kappa.extend(matrix::vec(&o_gamma));
    kappa.extend(matrix::vec(&canon.t_i));
    Ok(Truth {
        theta: cfg.theta.clone(),
        psi,
        gamma,
        eta,
        eta_e,
        o_gamma,
        t_i: canon.t_i,
        t: canon.t,
        kappa,
    })
}

pub fn true_kappa(cfg: &ExampleConfig) -> Result<Vec<f64>, ExampleError> {
    Ok(truth(cfg)?.kappa)
}

/// `u = −75(a·h(t − t_ε)sin(10t)e^{−(t−t_ε)} + 100 − y)` with `h(0) = 1` and
/// `a = cfg.excitation`.
pub fn control_law(t: f64, y: f64, cfg: &ExampleConfig) -> f64 {
    let inject = if t >= cfg.t_eps {
        cfg.excitation * (10.0 * t).sin() * (-(t - cfg.t_eps)).exp()
    } else {
        0.0
    };
    -75.0 * (inject + 100.0 - y)
}

fn guarded(name: &'static str, value: f64, eps: f64) -> Result<f64, Singularity> {
    if value.abs() < eps || !value.is_finite() {
        Err(Singularity { name, value })
    } else {
        Ok(value)
    }
}

/// `ψ = F_ψ(η)`: `ψ₂ = η₁ + N/D`, `ψ₄ = η₂`, `ψ₆ = η₅D/N`, `ψ₈ = −N/D` with
/// `D = η₅ + η₄η₂`, `N = η₄η₃ − η₁η₅`.
pub fn psi_from_eta(e: &[f64], eps: f64) -> Result<Vec<f64>, Singularity> {
    let den = guarded("eta5+eta4*eta2", e[4] + e[3] * e[1], eps)?;
    let num = guarded("eta4*eta3-eta1*eta5", e[3] * e[2] - e[0] * e[4], eps)?;
    Ok(vec![
        0.0,
        e[0] + num / den,
        0.0,
        e[1],
        0.0,
        e[4] * den / num,
        0.0,
        -num / den,
        0.0,
    ])
}

/// `θ = F_θ(ψ_ab)` with `s = ψ₁ψ₂ + ψ₃`.
pub fn theta_from_psi_ab(p: &[f64], eps: f64) -> Result<Vec<f64>, Singularity> {
    let s = p[0] * p[1] + p[2];
    let d1 = guarded("psi2^3*(psi1*psi2+psi3)", -p[1].powi(3) * s, eps)?;
    let d2 = guarded("psi2^2", -p[1] * p[1], eps)?;
    let d3 = guarded("psi1", p[0], eps)?;
    Ok(vec![
        (p[1].powi(4) * p[2] - p[1] * s * s) / d1,
        s / d2,
        p[1] * p[0] / d3,
    ])
}

pub fn t_i_of_theta(th: &[f64], eps: f64) -> Result<Mat, Singularity> {
    guarded("theta3", th[2], eps)?;
    guarded("theta2*theta3", th[1] * th[2], eps)?;
    Ok(t_i_closed_form(th))
}

/// Inverse maps of the example for the certainty-equivalence observer.
#[derive(Debug, Clone)]
pub struct ExampleInverse {
    pub f: Vec<f64>,
    pub l_ab: Mat,
    pub l_gamma: Mat,
}

impl ExampleInverse {
    pub fn new(cfg: &ExampleConfig) -> Result<Self, ExampleError> {
        let (red, _) = example_reduction()?;
        Ok(Self {
            f: cfg.f.clone(),
            l_ab: red.l_ab,
            l_gamma: red.l_gamma,
        })
    }
}

impl CertaintyEquivalence for ExampleInverse {
    fn n(&self) -> usize {
        3
    }

    fn denominators(&self, e: &[f64]) -> Vec<(&'static str, f64)> {
        let den = e[4] + e[3] * e[1];
        let num = e[3] * e[2] - e[0] * e[4];
        let mut out = vec![("eta5+eta4*eta2", den), ("eta4*eta3-eta1*eta5", num)];
        if den != 0.0 && num != 0.0 {
            let p = [e[0] + num / den, e[1], e[4] * den / num];
            let s = p[0] * p[1] + p[2];
            out.push(("psi2^3*(psi1*psi2+psi3)", -p[1].powi(3) * s));
            out.push(("psi1", p[0]));
        }
        out
    }

    fn invert(&self, eta: &[f64], eps: f64) -> Result<InverseEstimate, Singularity> {
        let psi = psi_from_eta(eta, eps)?;
        let theta = theta_from_psi_ab(&self.l_ab.mul_vec(&psi), eps)?;
        let t_i = t_i_of_theta(&theta, eps)?;
        let o_gamma = o_gamma_closed_form(&self.l_gamma.mul_vec(&psi), &self.f);
        Ok(InverseEstimate {
            psi,
            theta,
            t_i,
            o_gamma,
        })
    }
}

//! Ground-truth plant, disturbance exosystem and observer canonical form.

use thiserror::Error;

use crate::matrix::{self, dot, Mat, MatError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("parameter vector outside the model domain: {0}")]
    Domain(String),
    #[error("pair (C^T, A) is not observable at theta = {theta:?} (det = {det:e})")]
    NotObservable { theta: Vec<f64>, det: f64 },
    #[error("disturbance relative degree differs from n: {0}")]
    RelativeDegree(String),
    #[error("exosystem eigenvalue {re:e}{im:+e}i has a nonzero real part")]
    ExoSpectrum { re: f64, im: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("state diverged (non-finite) at t = {t}")]
    Divergence { t: f64 },
    #[error(transparent)]
    Matrix(#[from] MatError),
}

/// A parameterized single-input single-output LTI family
/// `ẋ = A(θ)x + B(θ)u + D(θ)δ`, `y = Cᵀx`.
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &str;
    fn n(&self) -> usize;
    fn n_theta(&self) -> usize;
    fn a(&self, theta: &[f64]) -> Mat;
    fn b(&self, theta: &[f64]) -> Vec<f64>;
    fn d(&self, theta: &[f64]) -> Vec<f64>;
    fn c(&self) -> Vec<f64>;

    /// Rejects parameters outside the admissible set.
    fn check_domain(&self, _theta: &[f64]) -> Result<(), String> {
        Ok(())
    }
}

/// A family member evaluated at one parameter vector.
#[derive(Debug, Clone)]
pub struct PlantModel {
    pub n: usize,
    pub n_theta: usize,
    pub theta: Vec<f64>,
    pub a: Mat,
    pub b: Vec<f64>,
    pub d: Vec<f64>,
    pub c: Vec<f64>,
    pub x0: Vec<f64>,
}

impl PlantModel {
    /// Evaluates `family` at `theta` and checks observability and the
    /// relative degree of the disturbance channel.
    pub fn new(family: &dyn ModelFamily, theta: &[f64], x0: &[f64]) -> Result<Self, PlantError> {
        let n = family.n();
        if theta.len() != family.n_theta() {
            return Err(PlantError::Dimension(format!(
                "theta has {} entries, model expects {}",
                theta.len(),
                family.n_theta()
            )));
        }
        if x0.len() != n {
            return Err(PlantError::Dimension(format!(
                "x0 has {} entries, model expects {n}",
                x0.len()
            )));
        }
        family.check_domain(theta).map_err(PlantError::Domain)?;
        let model = Self {
            n,
            n_theta: theta.len(),
            theta: theta.to_vec(),
            a: family.a(theta),
            b: family.b(theta),
            d: family.d(theta),
            c: family.c(),
            x0: x0.to_vec(),
        };
        model.check_observable()?;
        model.check_relative_degree()?;
        Ok(model)
    }

    pub fn observability_matrix(&self) -> Mat {
        matrix::observability(&self.c, &self.a, self.n).expect("dimensions checked at construction")
    }

    pub fn check_observable(&self) -> Result<(), PlantError> {
        let w = self.observability_matrix();
        let det = matrix::determinant(&w)?;
        let scale = w.max_abs().powi(self.n as i32).max(f64::MIN_POSITIVE);
        if det.abs() <= 1e-12 * scale {
            return Err(PlantError::NotObservable {
                theta: self.theta.clone(),
                det,
            });
        }
        Ok(())
    }

    /// `CᵀAᵏD = 0` for `k ≤ n−2` and `CᵀA^{n−1}D ≠ 0`.
    pub fn check_relative_degree(&self) -> Result<(), PlantError> {
        let markov = self.disturbance_markov();
        let scale = markov.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
        for (k, v) in markov.iter().enumerate().take(self.n - 1) {
            if v.abs() > 1e-12 * scale {
                return Err(PlantError::RelativeDegree(format!("C^T A^{k} D = {v:e}")));
            }
        }
        if markov[self.n - 1] == 0.0 {
            return Err(PlantError::RelativeDegree(format!(
                "C^T A^{} D vanishes",
                self.n - 1
            )));
        }
        Ok(())
    }

    /// `CᵀAᵏD` for `k = 0..n−1`.
    pub fn disturbance_markov(&self) -> Vec<f64> {
        let mut v = self.d.clone();
        let mut out = Vec::with_capacity(self.n);
        for _ in 0..self.n {
            out.push(dot(&self.c, &v));
            v = self.a.mul_vec(&v);
        }
        out
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    pub fn derivative(&self, x: &[f64], u: f64, delta: f64, out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = dot(self.a.row(i), x) + self.b[i] * u + self.d[i] * delta;
        }
    }
}

/// Autonomous disturbance generator `ẋ_δ = A_δ(ρ)x_δ`, `δ = h_δᵀx_δ`.
#[derive(Debug, Clone)]
pub struct Exosystem {
    pub n_delta: usize,
    pub rho: Vec<f64>,
    pub a: Mat,
    pub h: Vec<f64>,
    pub x0: Vec<f64>,
}

impl Exosystem {
    pub fn new(rho: &[f64], a: Mat, h: &[f64], x0: &[f64]) -> Result<Self, PlantError> {
        let nd = a.rows();
        if !a.is_square() || h.len() != nd || x0.len() != nd {
            return Err(PlantError::Dimension(format!(
                "exosystem A is {}x{}, h has {}, x0 has {}",
                a.rows(),
                a.cols(),
                h.len(),
                x0.len()
            )));
        }
        for (re, im) in matrix::eigenvalues(&a)? {
            if re.abs() >= 1e-6 {
                return Err(PlantError::ExoSpectrum { re, im });
            }
        }
        Ok(Self {
            n_delta: nd,
            rho: rho.to_vec(),
            a,
            h: h.to_vec(),
            x0: x0.to_vec(),
        })
    }

    pub fn output(&self, xd: &[f64]) -> f64 {
        dot(&self.h, xd)
    }

    pub fn derivative(&self, xd: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n_delta) {
            *o = dot(self.a.row(i), xd);
        }
    }

    /// Monic characteristic polynomial coefficients of `A_δ`, highest power
    /// first (leading 1 included).
    pub fn char_poly(&self) -> Vec<f64> {
        char_poly(&self.a)
    }
}

/// Faddeev–LeVerrier characteristic polynomial `[1, c_1, …, c_n]` of
/// `det(sI − A)`.
pub fn char_poly(a: &Mat) -> Vec<f64> {
    let n = a.rows();
    let mut coeffs = vec![1.0];
    let mut m = Mat::zeros(n, n);
    for k in 1..=n {
        let prev = *coeffs.last().unwrap();
        let mk = &(a * &m) + &Mat::identity(n).scale(prev);
        let am = a * &mk;
        let tr: f64 = (0..n).map(|i| am[(i, i)]).sum();
        coeffs.push(-tr / k as f64);
        m = mk;
    }
    coeffs
}

/// Observer canonical form data for a plant at its configured parameters.
#[derive(Debug, Clone)]
pub struct CanonicalForm {
    /// Shift matrix `[0_n | (I_{n−1}; 0)]`.
    pub a0: Mat,
    pub c0: Vec<f64>,
    pub psi_a: Vec<f64>,
    pub psi_b: Vec<f64>,
    pub psi_d: f64,
    pub t: Mat,
    pub t_i: Mat,
    /// Last column of the inverse observability matrix.
    pub o_n: Vec<f64>,
}

impl CanonicalForm {
    /// `ξ = T·x`.
    pub fn virtual_state(&self, x: &[f64]) -> Vec<f64> {
        self.t.mul_vec(x)
    }

    pub fn psi(&self, gamma: &[f64]) -> Vec<f64> {
        let mut v = self.psi_a.clone();
        v.extend_from_slice(&self.psi_b);
        v.extend_from_slice(gamma);
        v
    }
}

pub fn shift_matrix(n: usize) -> Mat {
    let mut a0 = Mat::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a0[(i, i + 1)] = 1.0;
    }
    a0
}

pub fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

pub fn build_canonical(model: &PlantModel) -> Result<CanonicalForm, PlantError> {
    let n = model.n;
    let w = model.observability_matrix();
    let det = matrix::determinant(&w)?;
    let o = match matrix::inverse(&w)? {
        Some(o) if det.abs() > 1e-12 * w.max_abs().powi(n as i32) => o,
        _ => {
            return Err(PlantError::NotObservable {
                theta: model.theta.clone(),
                det,
            })
        }
    };
    let o_n = o.col(n - 1);
    let mut t_i = Mat::zeros(n, n);
    let mut col = o_n.clone();
    for j in (0..n).rev() {
        for i in 0..n {
            t_i[(i, j)] = col[i];
        }
        col = model.a.mul_vec(&col);
    }
    let t = matrix::inverse(&t_i)?.ok_or_else(|| PlantError::NotObservable {
        theta: model.theta.clone(),
        det,
    })?;
    let c0 = unit(n, 0);
    let tat = &(&t * &model.a) * &t_i;
    let psi_a = tat.col(0);
    let psi_b = t.mul_vec(&model.b);
    let psi_d = t.mul_vec(&model.d)[n - 1];
    Ok(CanonicalForm {
        a0: shift_matrix(n),
        c0,
        psi_a,
        psi_b,
        psi_d,
        t,
        t_i,
        o_n,
    })
}

/// Reusable buffers for [`rk4_step`].
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` from `t` to `t + dt` with the classic four-stage scheme.
    pub fn step<F>(&mut self, mut f: F, t: f64, x: &mut [f64], dt: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = x.len();
        f(t, x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k1[i];
        }
        f(t + 0.5 * dt, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * dt * self.k2[i];
        }
        f(t + 0.5 * dt, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        f(t + dt, &self.tmp, &mut self.k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Plant and exosystem state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub t: f64,
    pub x: Vec<f64>,
    pub xd: Vec<f64>,
}

impl PlantState {
    pub fn initial(model: &PlantModel, exo: &Exosystem) -> Self {
        Self {
            t: 0.0,
            x: model.x0.clone(),
            xd: exo.x0.clone(),
        }
    }
}

/// Output and disturbance after a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantSample {
    pub y: f64,
    pub delta: f64,
}

/// One RK4 step of plant and exosystem with `u` held over the step.
pub fn step_plant(
    model: &PlantModel,
    exo: &Exosystem,
    state: &mut PlantState,
    u: f64,
    dt: f64,
) -> Result<PlantSample, PlantError> {
    let n = model.n;
    let nd = exo.n_delta;
    let mut joint: Vec<f64> = state.x.iter().chain(&state.xd).copied().collect();
    let mut rk = Rk4::new(n + nd);
    rk.step(
        |_, s, ds| {
            let (x, xd) = s.split_at(n);
            let delta = exo.output(xd);
            let (dx, dxd) = ds.split_at_mut(n);
            model.derivative(x, u, delta, dx);
            exo.derivative(xd, dxd);
        },
        state.t,
        &mut joint,
        dt,
    );
    state.t += dt;
    if joint.iter().any(|v| !v.is_finite()) {
        return Err(PlantError::Divergence { t: state.t });
    }
    state.x.copy_from_slice(&joint[..n]);
    state.xd.copy_from_slice(&joint[n..]);
    Ok(PlantSample {
        y: model.output(&state.x),
        delta: exo.output(&state.xd),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_poly_of_companion() {
        let a = matrix::companion_bottom(&[-6.0, -11.0, -6.0]).unwrap();
        let p = char_poly(&a);
        for (got, want) in p.iter().zip([1.0, 6.0, 11.0, 6.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_matrix_three() {
        let a0 = shift_matrix(3);
        assert_eq!(a0, Mat::from_rows(&[&[0., 1., 0.], &[0., 0., 1.], &[0., 0., 0.]]));
    }
}

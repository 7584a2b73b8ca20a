//! Heterogeneous mappings: maps `F` with a scalar multiplier `Π_F(ω)` and a
//! transformed map `T_F` such that `Π_F(ω)·F(x) = T_F(Ξ_F(ω)x)`.
//!
//! In the cascade the argument is only known in scaled form `Y = ω·x`, so a
//! mapping exposes `T_F(Ξ̄_F(ω)·Y)` directly as a function of `(ω, Y)`.

use crate::matrix::{self, Mat};

pub trait HeteroMapping: Send + Sync {
    fn name(&self) -> &str;

    /// Length of the argument `x`.
    fn arg_len(&self) -> usize;

    /// `F(x)`; a slow reference evaluation used to check the identity.
    fn reference(&self, x: &[f64]) -> Mat;

    /// `T_F(Ξ̄_F(ω)·Y)` for `Y = ω·x`.
    fn transformed(&self, omega: f64, y: &[f64]) -> Mat;

    /// `Π_F(ω)`.
    fn pi(&self, omega: f64) -> Mat;

    /// `ℓ_F`, with `det Π_F(ω) ≥ ω^{ℓ_F}`.
    fn degree(&self) -> u32;
}

type RefFn = dyn Fn(&[f64]) -> Mat + Send + Sync;
type ScaledFn = dyn Fn(f64, &[f64]) -> Mat + Send + Sync;
type PiFn = dyn Fn(f64) -> Mat + Send + Sync;

/// A mapping assembled from closures.
pub struct FnMapping {
    name: String,
    arg_len: usize,
    degree: u32,
    reference: Box<RefFn>,
    transformed: Box<ScaledFn>,
    pi: Box<PiFn>,
}

impl FnMapping {
    pub fn new(
        name: impl Into<String>,
        arg_len: usize,
        degree: u32,
        reference: impl Fn(&[f64]) -> Mat + Send + Sync + 'static,
        transformed: impl Fn(f64, &[f64]) -> Mat + Send + Sync + 'static,
        pi: impl Fn(f64) -> Mat + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            arg_len,
            degree,
            reference: Box::new(reference),
            transformed: Box::new(transformed),
            pi: Box::new(pi),
        }
    }
}

impl HeteroMapping for FnMapping {
    fn name(&self) -> &str {
        &self.name
    }

    fn arg_len(&self) -> usize {
        self.arg_len
    }

    fn reference(&self, x: &[f64]) -> Mat {
        (self.reference)(x)
    }

    fn transformed(&self, omega: f64, y: &[f64]) -> Mat {
        (self.transformed)(omega, y)
    }

    fn pi(&self, omega: f64) -> Mat {
        (self.pi)(omega)
    }

    fn degree(&self) -> u32 {
        self.degree
    }
}

impl std::fmt::Debug for FnMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnMapping")
            .field("name", &self.name)
            .field("arg_len", &self.arg_len)
            .field("degree", &self.degree)
            .finish()
    }
}

/// Relative residual of `Π_F(ω)F(x) = T_F(Ξ_F(ω)x)`, scaled by
/// `1 + max|Π_F(ω)F(x)|`.
pub fn identity_residual(map: &dyn HeteroMapping, omega: f64, x: &[f64]) -> f64 {
    let lhs = &map.pi(omega) * &map.reference(x);
    let y: Vec<f64> = x.iter().map(|v| omega * v).collect();
    let rhs = map.transformed(omega, &y);
    (&lhs - &rhs).max_abs() / (1.0 + lhs.max_abs())
}

/// `det Π_F(ω) − ω^{ℓ_F}` (non-negative for a valid mapping when `ω > 0`).
pub fn degree_margin(map: &dyn HeteroMapping, omega: f64) -> f64 {
    let det = matrix::determinant(&map.pi(omega)).expect("square multiplier");
    det - omega.powi(map.degree() as i32)
}

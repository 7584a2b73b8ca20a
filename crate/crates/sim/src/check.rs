//! Static model checks run by `physobs check`.

use physobs::example;
use physobs::hetero::{degree_margin, identity_residual};
use physobs::matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model;
use crate::scenario::{ConfigError, Scenario};

/// Random `(ω, x)` draws per mapping for the scaling identity.
pub const IDENTITY_SAMPLES: usize = 1000;
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

fn result(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.into(),
        ok,
        detail: detail.into(),
    }
}

/// Validates the scenario and evaluates the model invariants.
pub fn run_checks(scn: &Scenario) -> Result<Vec<CheckResult>, ConfigError> {
    scn.validate()?;
    let kit = model::build(&scn.model, &scn.params)?;
    let mut out = Vec::new();

    let w = kit.plant.observability_matrix();
    let det = matrix::determinant(&w).unwrap_or(f64::NAN);
    out.push(result(
        "observability of (C^T, A(theta))",
        kit.plant.check_observable().is_ok(),
        format!("det W = {det:.6e}, rank {}", matrix::rank(&w, 1e-10)),
    ));

    let markov = kit.plant.disturbance_markov();
    out.push(result(
        "disturbance relative degree n",
        kit.plant.check_relative_degree().is_ok(),
        format!("C^T A^k D = {markov:?}"),
    ));

    let eig = matrix::eigenvalues(&kit.exo.a).unwrap_or_default();
    let worst = eig.iter().fold(0.0_f64, |m, (re, _)| m.max(re.abs()));
    out.push(result(
        "exosystem spectrum on the imaginary axis",
        worst < 1e-6,
        format!("eigenvalues {eig:?}"),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(scn.params.seed);
    for map in kit.bundle.mappings() {
        let mut worst: f64 = 0.0;
        let mut margin = f64::INFINITY;
        for _ in 0..IDENTITY_SAMPLES {
            let omega = rng.gen_range(0.1..10.0);
            let x: Vec<f64> = (0..map.arg_len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            worst = worst.max(identity_residual(map, omega, &x));
            margin = margin.min(degree_margin(map, omega) / omega.powi(map.degree() as i32));
        }
        out.push(result(
            format!("scaling identity of {}", map.name()),
            worst <= IDENTITY_TOL && margin >= -1e-12,
            format!("max rel. residual {worst:.3e}, min det(Pi)/w^l - 1 {margin:.3e}"),
        ));
    }

    let t = &kit.truth;
    out.push(match kit.bundle.check_truth(&t.eta, &t.psi, &t.theta, &t.t_i, 1e-9) {
        Ok(()) => result("mapping pairs at the true parameters", true, "ok"),
        Err(e) => result("mapping pairs at the true parameters", false, e.to_string()),
    });

    let eta = example::eta_of_psi(&t.psi);
    let err = eta.iter().zip(&t.eta).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    out.push(result(
        "reduced parameters from the canonical form",
        err <= 1e-9 * (1.0 + t.eta.iter().fold(0.0_f64, |m, v| m.max(v.abs()))),
        format!("eta = {:?}", t.eta),
    ));
    Ok(out)
}

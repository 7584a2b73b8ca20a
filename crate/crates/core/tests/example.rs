use physobs::example::{
    control_law, eta_of_psi, example_model, o_gamma_closed_form, psi_from_eta, t_i_closed_form, t_i_of_theta,
    theta_from_psi_ab, true_kappa, truth, ExampleConfig, ExampleError,
};
use physobs::matrix::Mat;
use proptest::prelude::*;

const ETA: [f64; 5] = [-11.0, -1.0, -12.0, -10.0, -20.0];
const PSI: [f64; 9] = [0.0, -1.0, 0.0, -1.0, 0.0, -2.0, 0.0, -10.0, 0.0];

#[test]
fn defaults() {
    let c = ExampleConfig::default();
    assert_eq!(c.theta, vec![1.0, 1.0, -1.0]);
    assert_eq!(c.rho, -10.0);
    assert_eq!(c.f, vec![-125.0, -75.0, -15.0]);
    assert_eq!(c.k, vec![3.0, 3.0, 1.0]);
    assert_eq!((c.t_eps, c.gamma, c.dt, c.t_end), (25.0, 1.0, 1e-4, 100.0));
    c.validate().unwrap();
}

#[test]
fn validation_lists_every_problem() {
    let c = ExampleConfig {
        theta: vec![1.0, 0.0, 0.0],
        rho: 1.0,
        dt: -1.0,
        k: vec![-3.0, 3.0, 1.0],
        ..Default::default()
    };
    let ExampleError::Config(bad) = c.validate().unwrap_err() else {
        panic!("expected a config error");
    };
    let all = bad.join("\n");
    for key in ["theta_2", "theta_3", "rho", "dt", "K/f"] {
        assert!(all.contains(key), "missing {key} in\n{all}");
    }
    let short = ExampleConfig { x0: vec![1.0], ..Default::default() };
    assert!(short.validate().is_err());
    let late = ExampleConfig { t_end: 10.0, ..Default::default() };
    assert!(late.validate().is_err());
}

#[test]
fn ground_truth_values() {
    let tr = truth(&ExampleConfig::default()).unwrap();
    assert_eq!(tr.gamma, vec![0.0, -10.0, 0.0]);
    assert_eq!(tr.eta, ETA.to_vec());
    for (a, b) in tr.psi.iter().zip(&PSI) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(tr.o_gamma, o_gamma_closed_form(&tr.gamma, &[-125.0, -75.0, -15.0]));
    assert!((&tr.t_i - &t_i_closed_form(&tr.theta)).max_abs() < 1e-12);
    assert!((&(&tr.t * &tr.t_i) - &Mat::identity(3)).max_abs() < 1e-12);
    let k = true_kappa(&ExampleConfig::default()).unwrap();
    assert_eq!(k.len(), 27);
    assert_eq!(&k[18..], &[2.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0]);
}

#[test]
fn model_matrices() {
    let (p, exo) = example_model(&ExampleConfig::default()).unwrap();
    assert_eq!(p.a, Mat::from_rows(&[&[0.0, 2.0, 0.0], &[-1.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]));
    assert_eq!(p.b, vec![0.0, 0.0, -1.0]);
    assert_eq!(p.d, vec![1.0, 0.0, 0.0]);
    assert_eq!(p.c, vec![0.0, 0.0, 1.0]);
    assert_eq!(exo.x0, vec![1.0, 0.0]);
}

#[test]
fn forward_and_inverse_maps() {
    assert_eq!(eta_of_psi(&PSI), ETA.to_vec());
    let psi = psi_from_eta(&ETA, 1e-8).unwrap();
    assert_eq!(psi, PSI.to_vec());
    assert_eq!(theta_from_psi_ab(&[-1.0, -1.0, -2.0], 1e-8).unwrap(), vec![1.0, 1.0, -1.0]);
    let t_i = t_i_of_theta(&[1.0, 1.0, -1.0], 1e-8).unwrap();
    assert_eq!(t_i, Mat::from_rows(&[&[2.0, 0.0, -1.0], &[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]]));
}

#[test]
fn inverse_maps_report_singularities() {
    // eta5 + eta4 eta2 = 0
    let s = psi_from_eta(&[-11.0, -1.0, -12.0, -10.0, -10.0], 1e-8).unwrap_err();
    assert_eq!(s.name, "eta5+eta4*eta2");
    assert_eq!(s.value, 0.0);
    // eta4 eta3 - eta1 eta5 = 0
    let s = psi_from_eta(&[-1.0, -1.0, -2.0, -10.0, -20.0], 1e-8).unwrap_err();
    assert_eq!(s.name, "eta4*eta3-eta1*eta5");
    assert_eq!(theta_from_psi_ab(&[0.0, -1.0, -2.0], 1e-8).unwrap_err().name, "psi1");
    assert_eq!(theta_from_psi_ab(&[-1.0, 0.0, -2.0], 1e-8).unwrap_err().value, 0.0);
    assert_eq!(t_i_of_theta(&[1.0, 1.0, 0.0], 1e-8).unwrap_err().name, "theta3");
}

#[test]
fn control_law_values() {
    let cfg = ExampleConfig::default();
    assert_eq!(control_law(0.0, 100.0, &cfg), 0.0);
    assert_eq!(control_law(10.0, 0.0, &cfg), -7500.0);
    let t = cfg.t_eps;
    let want = -75.0 * (2.5 * (10.0 * t).sin() + 100.0);
    assert!((control_law(t, 0.0, &cfg) - want).abs() < 1e-9);
    let off = ExampleConfig { excitation: 0.0, ..Default::default() };
    assert_eq!(control_law(30.0, 1.0, &off), -75.0 * 99.0);
}

fn nz() -> impl Strategy<Value = f64> {
    prop_oneof![-3.0..-0.3_f64, 0.3..3.0_f64]
}

proptest! {
    #[test]
    fn inverse_undoes_forward(t1 in nz(), t2 in nz(), t3 in nz()) {
        let cfg = ExampleConfig { theta: vec![t1, t2, t3], ..Default::default() };
        let Ok(tr) = truth(&cfg) else { return Ok(()); };
        let Ok(psi) = psi_from_eta(&tr.eta, 1e-9) else { return Ok(()); };
        for (a, b) in psi.iter().zip(&tr.psi) {
            prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()));
        }
        let ab = [psi[1], psi[3], psi[5]];
        if let Ok(th) = theta_from_psi_ab(&ab, 1e-9) {
            for (a, b) in th.iter().zip(&cfg.theta) {
                prop_assert!((a - b).abs() <= 1e-7 * (1.0 + b.abs()));
            }
        }
    }
}

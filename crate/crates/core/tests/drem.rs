mod common;

use common::{ETA, GAMMA, PSI_A, PSI_B};
use physobs::drem::{
    amplitude_gain, equal_components, excitation_level, reduce, DremError, DremSettings, DremState, Reduction,
};
use physobs::example::{example_reduction, ExampleConfig};
use physobs::filters::true_eta_e;
use physobs::matrix::{dot, norm, Mat};
use proptest::prelude::*;

fn settings(sigma: f64) -> DremSettings {
    DremSettings {
        sigma,
        t_eps: 0.0,
        eps_k: 1e-30,
        k_min: 1e-6,
        k_max: 1e25,
    }
}

/// 27-vector satisfying the two regressor equalities of the example.
fn with_equalities(mut v: Vec<f64>) -> Vec<f64> {
    v[7] = v[1];
    v[19] = v[5];
    v
}

#[test]
fn reduction_selects_and_merges() {
    let (red, pairs) = example_reduction().unwrap();
    assert_eq!(red.n_eta(), 5);
    assert_eq!(red.n_ext(), 27);
    assert_eq!(pairs, vec![(1, 7), (5, 19)]);
    let eta = red.eta(&true_eta_e(&PSI_A, &PSI_B, &GAMMA));
    assert_eq!(eta, ETA.to_vec());
    // eta from the displayed formula: [psi_a2 + rho, psi_b1, psi_b3 - psi_b1 rho, -psi_a2 rho, -psi_b3 rho]
    let rho = -10.0;
    let by_hand = [PSI_A[1] + rho, PSI_B[0], PSI_B[2] - PSI_B[0] * rho, -PSI_A[1] * rho, -PSI_B[2] * rho];
    assert_eq!(eta, by_hand.to_vec());
    let (phi, q) = reduce(&vec![0.0; 27], 1.5, &red).unwrap();
    assert_eq!(phi, vec![0.0; 5]);
    assert_eq!(q, 1.5);
    assert!(matches!(reduce(&[0.0; 5], 0.0, &red), Err(DremError::Dimension(_))));
}

#[test]
fn reduction_rejects_inconsistent_shapes() {
    let d = Mat::zeros(27, 5);
    assert!(Reduction::new(d.clone(), Mat::zeros(4, 27), Mat::zeros(3, 9), Mat::zeros(3, 9)).is_err());
    assert!(Reduction::new(Mat::zeros(5, 5), Mat::zeros(5, 5), Mat::zeros(3, 9), Mat::zeros(3, 9)).is_err());
    assert!(Reduction::new(d, Mat::zeros(5, 27), Mat::zeros(3, 9), Mat::zeros(3, 8)).is_err());
}

#[test]
fn selection_reduction_passes_entries_through() {
    // D_eta picking the first four coordinates of a six-vector
    let mut d = Mat::zeros(6, 4);
    for i in 0..4 {
        d[(i, i)] = 1.0;
    }
    let red = Reduction::new(d.clone(), d.transpose(), Mat::zeros(1, 3), Mat::zeros(1, 3)).unwrap();
    let (phi, _) = reduce(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 0.0, &red).unwrap();
    assert_eq!(phi, vec![1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn extension_of_zero_regressor_stays_zero() {
    let mut st = DremState::new(3, settings(1.0));
    assert!(!st.started());
    for k in 0..100 {
        st.step_extension(k as f64 * 0.01, &[0.0; 3], 0.0).unwrap();
    }
    assert!(st.started());
    assert!(st.q.iter().all(|&v| v == 0.0));
    assert_eq!(st.phi, Mat::zeros(3, 3));
}

#[test]
fn extension_of_constant_regressor() {
    let mut st = DremState::new(2, settings(1.0));
    let h: f64 = 1e-4;
    let t_end: f64 = 3.0;
    let steps = (t_end / h).round() as usize;
    for k in 0..=steps {
        st.step_extension(k as f64 * h, &[1.0, 0.0], 2.0).unwrap();
    }
    let want = 1.0 - (-t_end).exp();
    assert!((st.phi[(0, 0)] - want).abs() < 1e-8);
    assert_eq!(st.phi[(0, 1)], 0.0);
    assert_eq!(st.phi[(1, 1)], 0.0);
    assert!((st.q[0] - 2.0 * want).abs() < 1e-8);
}

#[test]
fn extension_sequencing_errors() {
    let mut st = DremState::new(2, DremSettings { t_eps: 1.0, ..settings(1.0) });
    assert!(matches!(
        st.step_extension(0.5, &[1.0, 0.0], 0.0),
        Err(DremError::BeforeStart { .. })
    ));
    st.step_extension(1.0, &[1.0, 0.0], 0.0).unwrap();
    assert!(matches!(
        st.step_extension(1.0, &[1.0, 0.0], 0.0),
        Err(DremError::NotAdvancing { .. })
    ));
}

#[test]
fn mixing_identity_and_zero() {
    let mut st = DremState::new(5, settings(1.0));
    st.phi = Mat::identity(5);
    st.q = ETA.to_vec();
    let m = st.mix();
    assert_eq!(m.delta, 1.0);
    assert_eq!(m.y, ETA.to_vec());
    let zero = DremState::new(5, settings(1.0)).mix();
    assert_eq!(zero.delta, 0.0);
    assert_eq!(zero.det, 0.0);
}

#[test]
fn amplitude_gain_is_clamped() {
    let s = settings(1.0);
    assert_eq!(amplitude_gain(0.0, &s), 1e25);
    assert_eq!(amplitude_gain(1e9, &s), 1e-6);
    assert_eq!(amplitude_gain(4.0, &s), 0.25);
    assert_eq!(amplitude_gain(f64::NAN, &s), 1e25);
}

#[test]
fn ratio_is_independent_of_the_gain_schedule() {
    let mut a = DremState::new(3, settings(1.0));
    a.phi = Mat::from_rows(&[&[2.0, 0.5, 0.1], &[0.5, 1.0, 0.2], &[0.1, 0.2, 0.5]]);
    a.q = vec![1.0, -2.0, 0.5];
    let mut b = a.clone();
    b.settings.k_min = 10.0;
    b.settings.k_max = 10.0;
    let (ma, mb) = (a.mix(), b.mix());
    assert!((ma.k - mb.k).abs() > 1.0);
    for (ya, yb) in ma.y.iter().zip(&mb.y) {
        let (ra, rb) = (ya / ma.delta, yb / mb.delta);
        assert!((ra - rb).abs() <= 1e-12 * (1.0 + ra.abs()));
    }
}

#[test]
fn excitation_level_examples() {
    let zero = vec![vec![0.0, 0.0]; 200];
    assert!(excitation_level(&zero, 0.01, 1.0).unwrap().iter().all(|&v| v.abs() < 1e-300));
    let h = 1e-3;
    let two_pi = 2.0 * std::f64::consts::PI;
    let n = (2.0 * two_pi / h) as usize;
    let trace: Vec<Vec<f64>> = (0..n).map(|k| {
        let t = k as f64 * h;
        vec![t.sin(), t.cos()]
    }).collect();
    let lam = excitation_level(&trace, h, two_pi).unwrap();
    assert!((lam[0] - std::f64::consts::PI).abs() < 1e-3, "{}", lam[0]);
    assert!(matches!(
        excitation_level(&trace[..10], h, 1.0),
        Err(DremError::WindowTooLong { .. })
    ));
}

#[test]
fn mixed_regression_on_the_example_trajectory() {
    let cfg = ExampleConfig::default();
    let (red, pairs) = example_reduction().unwrap();
    let traj = common::trajectory(&cfg, 1e-4, 28.0, 10);
    let mut st = DremState::new(5, DremSettings { t_eps: 25.0, ..settings(1.0) });
    let mut phibars = Vec::new();
    for s in traj.iter().filter(|s| s.t >= 25.0 - 1e-9) {
        let (phi, q) = reduce(&s.phi_e, s.qbar, &red).unwrap();
        assert!((q - dot(&phi, &ETA)).abs() < 1e-4);
        st.step_extension(s.t, &phi, q).unwrap();
        phibars.push(s.phi_e.clone());
    }
    let m = st.mix();
    let resid: Vec<f64> = m.y.iter().zip(&ETA).map(|(y, e)| y - m.delta * e).collect();
    assert!(m.delta != 0.0);
    assert!(norm(&resid) < 1e-3 * m.delta.abs() * norm(&ETA), "{resid:?} delta {}", m.delta);

    let found: Vec<(usize, usize)> = equal_components(&phibars, 1e-6).iter().map(|&(i, j, _)| (i, j)).collect();
    for p in pairs {
        assert!(found.contains(&p), "{p:?} not in {found:?}");
    }
}

proptest! {
    #[test]
    fn reduced_regression_matches_extended(v in prop::collection::vec(-5.0..5.0_f64, 27)) {
        let (red, _) = example_reduction().unwrap();
        let phi_e = with_equalities(v);
        let eta_e = true_eta_e(&PSI_A, &PSI_B, &GAMMA);
        let (phi, _) = reduce(&phi_e, 0.0, &red).unwrap();
        let lhs = dot(&phi_e, &eta_e);
        let rhs = dot(&phi, &red.eta(&eta_e));
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn extension_keeps_phi_symmetric(
        samples in prop::collection::vec(prop::collection::vec(-3.0..3.0_f64, 4), 2..30),
        sigma in -1.0..2.0_f64,
    ) {
        let mut st = DremState::new(4, settings(sigma));
        for (k, s) in samples.iter().enumerate() {
            st.step_extension(k as f64 * 0.1, s, 1.0).unwrap();
            prop_assert_eq!(st.phi.clone(), st.phi.transpose());
        }
        if sigma > 0.0 {
            let ev = physobs::matrix::sym_eigenvalues(&st.phi).unwrap();
            prop_assert!(ev[0] >= -1e-9 * (1.0 + ev[3].abs()));
        }
    }
}

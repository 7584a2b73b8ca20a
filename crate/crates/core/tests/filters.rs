mod common;

use common::{GAMMA, PSI_A, PSI_B};
use physobs::example::{exosystem, ExampleConfig};
use physobs::filters::{
    extended_regressor, gamma_spectrum_reference, o_gamma_reference, step_filters, true_eta_e,
    FilterError, FilterGains, FilterState, Layout,
};
use physobs::matrix::{self, dot, Mat};
use physobs::plant::Exosystem;
use proptest::prelude::*;

const K: [f64; 3] = [3.0, 3.0, 1.0];
const F: [f64; 3] = [-125.0, -75.0, -15.0];

fn gains() -> FilterGains {
    FilterGains::new(&K, &F).unwrap()
}

fn run(state: &mut FilterState, g: &FilterGains, u: f64, y: f64, t_end: f64, dt: f64) {
    let steps = (t_end / dt).round() as usize;
    for k in 0..steps {
        step_filters(state, g, u, y, k as f64 * dt, dt).unwrap();
    }
}

#[test]
fn gains_are_validated() {
    assert!(matches!(FilterGains::new(&[3.0, 3.0], &F), Err(FilterError::Length { .. })));
    assert!(matches!(
        FilterGains::new(&[-3.0, 3.0, 1.0], &F),
        Err(FilterError::NotHurwitz("A_K"))
    ));
    assert!(matches!(
        FilterGains::new(&K, &[125.0, -75.0, -15.0]),
        Err(FilterError::NotHurwitz("A_f"))
    ));
    let g = gains();
    assert_eq!(g.o_e, Mat::from_rows(&[&[1.0, 0.0, 0.0], &[-3.0, 1.0, 0.0], &[6.0, -3.0, 1.0]]));
    assert!((&(&g.o_e * &g.o_e_inv) - &Mat::identity(3)).max_abs() < 1e-14);
}

#[test]
fn zero_inputs_keep_zero_state() {
    let g = gains();
    let mut s = FilterState::zeros(3);
    run(&mut s, &g, 0.0, 0.0, 1.0, 1e-3);
    assert!(s.data.iter().all(|&v| v == 0.0));
    assert_eq!(s.data.len(), 2 * 3 + 4 * 9);
}

#[test]
fn constant_output_drives_z_to_steady_state() {
    // A_K z + K = 0 solved by hand for K = [3, 3, 1]: z = [1, 0, 0]
    let g = gains();
    let mut s = FilterState::zeros(3);
    run(&mut s, &g, 0.0, 1.0, 20.0, 1e-3);
    for (got, want) in s.z().iter().zip([1.0, 0.0, 0.0]) {
        assert!((got - want).abs() < 1e-6, "z = {:?}", s.z());
    }
}

#[test]
fn constant_input_drives_p_to_steady_state() {
    let g = gains();
    let mut s = FilterState::zeros(3);
    run(&mut s, &g, 1.0, 0.0, 20.0, 1e-3);
    // steady state solves A_K P + I = 0
    let resid = &(&g.a_k * &s.p()) + &Mat::identity(3);
    assert!(resid.max_abs() < 1e-6, "{resid:?}");
}

#[test]
fn regressor_of_zero_state() {
    let g = gains();
    let s = FilterState::zeros(3);
    let r = extended_regressor(&s, &g, 0.0);
    assert_eq!(r.qbar, 0.0);
    assert_eq!(r.phi_e, vec![0.0; 27]);
    let r = extended_regressor(&s, &g, 3.0);
    assert_eq!(r.qbar, 3.0);
    assert_eq!(r.phi_e, vec![0.0; 27]);
}

#[test]
fn regressor_layout_against_direct_assembly() {
    let g = gains();
    let data: Vec<f64> = (0..42).map(|i| ((i * 7 % 13) as f64 - 6.0) / 5.0).collect();
    let s = FilterState::from_packed(3, &data);
    let r = extended_regressor(&s, &g, 0.7);
    let c0 = [1.0, 0.0, 0.0];
    let want_head: Vec<f64> = {
        let a = s.omega().transpose().mul_vec(&c0);
        let b = s.nmat().transpose().mul_vec(&F);
        let c = s.p().transpose().mul_vec(&c0);
        let d = s.h().transpose().mul_vec(&F);
        a.iter().zip(&b).map(|(x, y)| x + y).chain(c.iter().zip(&d).map(|(x, y)| x + y)).collect()
    };
    let mut want = want_head;
    want.extend_from_slice(s.f());
    want.extend(matrix::vec(&s.nmat()));
    want.extend(matrix::vec(&s.h()));
    for (a, b) in r.phi_e.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
    let q = dot(&F, s.f()) + 0.7 - s.z()[0];
    assert!((r.qbar - q).abs() < 1e-12);
    let l = Layout::new(3);
    assert_eq!(s.z(), &data[l.z..l.z + 3]);
}

#[test]
fn true_eta_e_blocks() {
    assert_eq!(true_eta_e(&[0.0; 3], &[0.0; 3], &[0.0; 3]), vec![0.0; 27]);
    let e = true_eta_e(&PSI_A, &PSI_B, &GAMMA);
    assert_eq!(e.len(), 27);
    assert_eq!(&e[..9], &[0.0, -1.0, 0.0, -1.0, 0.0, -2.0, 0.0, -10.0, 0.0]);
    // -psi_a (x) Gamma: only psi_a2 * Gamma_2 survives, at (2-1)*3 + 2 within the block
    let block = &e[9..18];
    for (i, v) in block.iter().enumerate() {
        let want = if i == 4 { -10.0 } else { 0.0 };
        assert_eq!(*v, want, "index {i}");
    }
    let e0 = true_eta_e(&PSI_A, &PSI_B, &[0.0; 3]);
    assert_eq!(&e0[..6], &[0.0, -1.0, 0.0, -1.0, 0.0, -2.0]);
    assert!(e0[6..].iter().all(|&v| v == 0.0));
}

#[test]
fn gamma_from_exosystem_spectrum() {
    let exo = exosystem(-10.0, &[1.0, 0.0]).unwrap();
    assert_eq!(gamma_spectrum_reference(&exo, 3).unwrap(), vec![0.0, -10.0, 0.0]);
    let exo = exosystem(-4.0, &[1.0, 0.0]).unwrap();
    assert_eq!(gamma_spectrum_reference(&exo, 3).unwrap(), vec![0.0, -4.0, 0.0]);
    // already companion with bottom row g
    let a = matrix::companion_bottom(&[-4.0, 0.0]).unwrap();
    let exo = Exosystem::new(&[], a, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
    assert_eq!(gamma_spectrum_reference(&exo, 2).unwrap(), vec![-4.0, 0.0]);
    assert!(matches!(
        gamma_spectrum_reference(&exo, 1),
        Err(FilterError::ExoDimension { .. })
    ));
}

#[test]
fn o_gamma_reference_values() {
    let o = o_gamma_reference(&GAMMA, &F);
    let want = Mat::from_rows(&[
        &[125.0, 65.0, 15.0],
        &[0.0, -25.0, 65.0],
        &[0.0, -650.0, -25.0],
    ]);
    assert_eq!(o, want);
}

#[test]
fn measured_signal_matches_regression_after_transient() {
    let cfg = ExampleConfig::default();
    let eta_e = true_eta_e(&PSI_A, &PSI_B, &GAMMA);
    let traj = common::trajectory(&cfg, 1e-4, 30.0, 50);
    let mut worst: f64 = 0.0;
    let mut worst_pairs: f64 = 0.0;
    for s in &traj {
        if s.t >= 25.0 {
            worst = worst.max((s.qbar - dot(&s.phi_e, &eta_e)).abs());
        }
        worst_pairs = worst_pairs
            .max((s.phi_e[1] - s.phi_e[7]).abs())
            .max((s.phi_e[5] - s.phi_e[19]).abs());
    }
    assert!(worst < 1e-4, "max |q - phi_e^T eta_e| = {worst:e}");
    assert!(worst_pairs < 1e-6, "max pair gap = {worst_pairs:e}");
}

proptest! {
    #[test]
    fn filters_are_linear(
        us in prop::collection::vec(-5.0..5.0_f64, 20),
        ys in prop::collection::vec(-5.0..5.0_f64, 20),
    ) {
        let g = gains();
        let mut a = FilterState::zeros(3);
        let mut b = FilterState::zeros(3);
        for (k, (u, y)) in us.iter().zip(&ys).enumerate() {
            step_filters(&mut a, &g, *u, *y, k as f64 * 0.01, 0.01).unwrap();
            step_filters(&mut b, &g, 2.0 * u, 2.0 * y, k as f64 * 0.01, 0.01).unwrap();
        }
        for (x, y) in a.data.iter().zip(&b.data) {
            prop_assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

//! Ground-truth trajectory of the example plant with its filters, integrated
//! on one state vector.
#![allow(dead_code)]

use physobs::example::{self, control_law, ExampleConfig};
use physobs::filters::{extended_regressor, FilterGains, FilterState};
use physobs::plant::Rk4;

pub const PSI_A: [f64; 3] = [0.0, -1.0, 0.0];
pub const PSI_B: [f64; 3] = [-1.0, 0.0, -2.0];
pub const GAMMA: [f64; 3] = [0.0, -10.0, 0.0];
pub const ETA: [f64; 5] = [-11.0, -1.0, -12.0, -10.0, -20.0];

pub struct Sample {
    pub t: f64,
    pub y: f64,
    pub qbar: f64,
    pub phi_e: Vec<f64>,
}

/// Samples every `every` steps of `dt` up to `t_end`.
pub fn trajectory(cfg: &ExampleConfig, dt: f64, t_end: f64, every: usize) -> Vec<Sample> {
    let (plant, exo) = example::example_model(cfg).unwrap();
    let gains = FilterGains::new(&cfg.k, &cfg.f).unwrap();
    let (n, nd) = (plant.n, exo.n_delta);
    let fl = gains.state_len();
    let mut s = vec![0.0; n + nd + fl];
    s[..n].copy_from_slice(&plant.x0);
    s[n..n + nd].copy_from_slice(&exo.x0);
    let mut rk = Rk4::new(s.len());
    let steps = (t_end / dt).round() as usize;
    let mut out = Vec::new();
    for k in 0..=steps {
        let t = k as f64 * dt;
        let y = plant.output(&s[..n]);
        if k % every == 0 {
            let fs = FilterState::from_packed(n, &s[n + nd..]);
            let reg = extended_regressor(&fs, &gains, y);
            out.push(Sample {
                t,
                y,
                qbar: reg.qbar,
                phi_e: reg.phi_e,
            });
        }
        if k == steps {
            break;
        }
        let u = control_law(t, y, cfg);
        rk.step(
            |_, x, dx| {
                let (xp, rest) = x.split_at(n);
                let (xd, xf) = rest.split_at(nd);
                let (dxp, drest) = dx.split_at_mut(n);
                let (dxd, dxf) = drest.split_at_mut(nd);
                let yy = plant.output(xp);
                plant.derivative(xp, u, exo.output(xd), dxp);
                exo.derivative(xd, dxd);
                gains.derivative(xf, u, yy, dxf);
            },
            t,
            &mut s,
            dt,
        );
    }
    out
}

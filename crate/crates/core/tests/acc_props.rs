mod common;

use jumpctl_core::acc::{
    idm_control, rbc_control, run_scenario, AccConfig, AccController, AccSystem, IdmParams,
    RbcParams,
};
use jumpctl_core::model::{GainSet, Generator};
use jumpctl_core::simulate::{integrate_path, JumpSystem, SimConfig};

/// Both vehicles simulated in absolute coordinates, with the controller fed
/// the same perception model as the error-state system.
struct TwoVehicles {
    inner: AccSystem,
}

impl JumpSystem for TwoVehicles {
    fn generator(&self) -> &Generator {
        self.inner.generator()
    }
    fn state_dim(&self) -> usize {
        4
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn signals(
        &self,
        t: f64,
        h: f64,
        mode: usize,
        x: &[f64],
        xi: &[f64],
        y: &mut [f64],
        u: &mut [f64],
    ) {
        let err = [x[0] - x[2] - self.inner.cfg.delta_d, x[1] - x[3]];
        self.inner.signals(t, h, mode, &err, xi, y, u);
    }
    fn advance(
        &self,
        _t: f64,
        h: f64,
        _mode: usize,
        x: &mut [f64],
        u: &[f64],
        _xi: &[f64],
        _s: &mut [f64],
    ) {
        let (pe, ve, pl, vl) = (x[0], x[1], x[2], x[3]);
        x[0] = pe + ve * h;
        x[1] = ve + u[0] * h;
        x[2] = pl + vl * h;
    }
}

fn pgc_controller() -> AccController {
    AccController::Gains {
        gains: common::acc_pgc().gains.clone(),
    }
}

#[test]
fn error_state_equals_co_simulation() {
    let cfg = AccConfig::default();
    let sim = SimConfig {
        horizon: 10.0,
        record_stride: 1,
        initial_mode: Some(1),
        ..Default::default()
    };
    let err_sys = AccSystem::new(&cfg, pgc_controller()).unwrap();
    let both = TwoVehicles {
        inner: AccSystem::new(&cfg, pgc_controller()).unwrap(),
    };
    let x0 = [cfg.ego0[0], cfg.ego0[1], cfg.lead0[0], cfg.lead0[1]];
    for path in 0..3 {
        let a = integrate_path(&err_sys, &cfg.x0(), &sim, path).unwrap();
        let b = integrate_path(&both, &x0, &sim, path).unwrap();
        assert_eq!(a.modes, b.modes);
        for (xa, xb) in a.states.iter().zip(&b.states) {
            let e = [xb[0] - xb[2] - cfg.delta_d, xb[1] - xb[3]];
            assert!(
                (xa[0] - e[0]).abs() < 1e-9 && (xa[1] - e[1]).abs() < 1e-9,
                "{xa:?} vs {e:?}"
            );
        }
    }
}

/// In the misdetection mode the first measurement channel is pure noise.
#[test]
fn misdetected_position_is_uninformative() {
    let cfg = AccConfig::default();
    let sys = AccSystem::new(&cfg, pgc_controller()).unwrap();
    let sim = SimConfig {
        horizon: 10.0,
        record_stride: 1,
        initial_mode: Some(1),
        ..Default::default()
    };
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let mut path = 0;
    while xs.len() < 100_000 {
        let s = integrate_path(&sys, &cfg.x0(), &sim, path).unwrap();
        for k in 0..s.times.len() {
            if s.modes[k] == 0 {
                xs.push(s.states[k][0]);
                ys.push(s.measurements[k][0]);
            }
        }
        path += 1;
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / n;
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n;
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n;
    let corr = cov / (vx * vy).sqrt();
    assert!(corr.abs() < 0.05, "correlation {corr} over {n} samples");
}

#[test]
fn idm_regression_point() {
    let p = IdmParams::default();
    let out = idm_control(10.0, 1.0, -4.0, &p);
    // s* = 2 + 1.5 − 4/(2√3); a = 1.5 (1 − (1/5)⁴ − (s*/10)²).
    let s_star = 2.0 + 1.5 - 4.0 / (2.0 * 3f64.sqrt());
    let want = 1.5 * (1.0 - 0.0016 - (s_star / 10.0).powi(2));
    assert!((out.accel - want).abs() < 1e-12);
    assert!((out.accel - 1.4150935565298213).abs() < 1e-12);
    assert!(!out.collision_imminent);
}

#[test]
fn idm_limits() {
    let p = IdmParams::default();
    assert!(idm_control(1e9, p.v0, 0.0, &p).accel.abs() < 1e-9);
    assert_eq!(idm_control(1e-9, 3.0, 0.0, &p).accel, -p.b_max);
    assert!(idm_control(0.0, 3.0, 0.0, &p).collision_imminent);
    assert!(idm_control(50.0, 0.0, 0.0, &p).accel <= p.a_max);
}

#[test]
fn rbc_rule_table() {
    let p = RbcParams::default();
    for ie in -40..=40 {
        let e = ie as f64 * 0.125;
        for iv in -12..=12 {
            let dv = iv as f64 * 0.5;
            let want = if e < -0.5 {
                -1.0
            } else if e > 0.5 {
                1.0
            } else {
                (-dv).clamp(-3.0, 3.0)
            };
            assert_eq!(rbc_control(e, dv, &p), want, "e {e}, dv {dv}");
        }
    }
    assert_eq!(rbc_control(-3.0, 0.0, &p), -1.0);
}

#[test]
fn scenario_one_pgc_converges_without_collision() {
    let sim = SimConfig {
        n_paths: 100,
        ..Default::default()
    };
    let res = run_scenario(1, &pgc_controller(), None, &sim).unwrap();
    assert_eq!(res.collision_fraction, 0.0);
    let k = res
        .stats
        .observable_names
        .iter()
        .position(|n| n == "delta1")
        .unwrap();
    let last = res.stats.mean_observables.last().unwrap()[k];
    assert!((last + 5.0).abs() < 0.5, "mean δ₁ at 10 s: {last}");
}

#[test]
fn scenario_three_separates_methods() {
    let sim = SimConfig {
        n_paths: 100,
        ..Default::default()
    };
    let pgc = run_scenario(3, &pgc_controller(), None, &sim).unwrap();
    assert!(pgc.collision_fraction <= 0.02);
    for c in [
        AccController::Idm {
            params: IdmParams::default(),
        },
        AccController::Rbc {
            params: RbcParams::default(),
        },
    ] {
        let r = run_scenario(3, &c, None, &sim).unwrap();
        assert!(
            r.failure_fraction > 0.5,
            "{}: {}",
            c.name(),
            r.failure_fraction
        );
    }
}

#[test]
fn zero_gains_do_not_converge() {
    let sim = SimConfig {
        n_paths: 20,
        ..Default::default()
    };
    let gains = GainSet::zeros(&common::acc_model());
    let r = run_scenario(1, &AccController::Gains { gains }, None, &sim).unwrap();
    assert!(r.failure_fraction > 0.9);
}

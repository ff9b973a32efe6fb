mod common;

use common::{random_model, rng};
use jumpctl_core::analysis::{find_certificate, lyapunov_lhs, solve_moments};
use jumpctl_core::linalg::{lambda_max, lambda_min};
use jumpctl_core::model::build_closed_loop;
use jumpctl_core::synthesis::{
    build_pgc_program, synth_pgc, synth_ssc, SynthesisOptions, SynthesisResult,
};
use rand::Rng;

fn audit(model: &jumpctl_core::model::PemAdm, res: &SynthesisResult) {
    let cl = build_closed_loop(model, &res.gains).unwrap();
    assert!(
        find_certificate(&cl, 1e-6).unwrap().is_some(),
        "re-verification failed"
    );
    let ms = solve_moments(&cl).unwrap();
    assert!(ms.stable);
    for i in 0..model.n_modes() {
        let f = &res.f_mats[i];
        let ky = &res.gains.gains[i] * res.y_mats[i].as_matrix();
        assert!((f - ky).norm() < 1e-8, "gain round trip in mode {}", i + 1);
    }
    if let Some(bound) = res.guaranteed_bound {
        assert!(ms.total_ms <= bound, "{} > {}", ms.total_ms, bound);
    }
    if let Some(bound) = res.decay_bound {
        assert!(
            ms.total_ms <= bound,
            "{} > decay bound {}",
            ms.total_ms,
            bound
        );
    }
}

/// With scalar noise gains `D(i) = σᵢI` and invertible `C(i)`, `D` commutes
/// with `Y(i)⁻¹` and `c₁ ≤ γ̄₃³γ₄` holds, so the closed-form bound is a bound.
#[test]
fn closed_form_bound_holds_for_scalar_noise() {
    let mut r = rng(77);
    let opts = SynthesisOptions::new(0.2, 0.1, 10.0).unwrap();
    let mut checked = 0;
    for k in 0..10 {
        let n = 1 + k % 3;
        let mut model = random_model(&mut r, 2, n, 1, n, -0.5);
        for mode in &mut model.modes {
            mode.d = nalgebra::DMatrix::identity(n, n) * r.random_range(0.1..1.0);
            mode.c += nalgebra::DMatrix::identity(n, n) * 2.0;
        }
        let Some(res) = synth_pgc(&model, &opts).unwrap().feasible() else {
            continue;
        };
        let cl = build_closed_loop(&model, &res.gains).unwrap();
        let g3 = opts.gamma3_bar;
        for i in 0..2 {
            let p = res.s_mats[i].inverse().unwrap();
            let chi = (cl.w[i].transpose() * p.as_matrix() * &cl.w[i]).trace();
            assert!(
                chi <= g3.powi(3) * res.gamma4.unwrap() * (1.0 + 1e-6) + 1e-12,
                "mode {i}: {chi}"
            );
        }
        let ms = solve_moments(&cl).unwrap();
        assert!(ms.total_ms <= res.guaranteed_bound.unwrap());
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} feasible designs");
}

#[test]
fn random_models_are_sound() {
    let mut r = rng(2024);
    let mut feasible = 0;
    for k in 0..12 {
        let n_modes = 2 + k % 2;
        let n = 2 + k % 3;
        let p = r.random_range(1..=n);
        let model = random_model(&mut r, n_modes, n, 1 + k % 2, p, -0.5);
        if let Some(res) = synth_ssc(&model, 1e-6).unwrap().feasible() {
            audit(&model, &res);
            feasible += 1;
        }
        let opts = SynthesisOptions::new(0.2, 0.1, 10.0).unwrap();
        if let Some(res) = synth_pgc(&model, &opts).unwrap().feasible() {
            audit(&model, &res);
            feasible += 1;
        }
    }
    assert!(feasible >= 6, "only {feasible} feasible designs");
}

#[test]
fn decay_rate_is_certified() {
    let model = common::acc_model();
    let res = common::acc_pgc();
    let cl = build_closed_loop(&model, &res.gains).unwrap();
    let p: Vec<_> = res.s_mats.iter().map(|s| s.inverse().unwrap()).collect();
    for i in 0..2 {
        let m = lyapunov_lhs(&cl, &p, i).into_matrix() + p[i].as_matrix() * 0.8;
        let scale = p[i].max_eig().unwrap().powi(2).max(1.0);
        assert!(lambda_max(&m).unwrap() <= 1e-8 * scale);
        let s = res.s_mats[i].as_matrix();
        assert!(lambda_max(s).unwrap() <= 10.0 + 1e-8 && lambda_min(s).unwrap() >= 1.0 - 1e-8);
    }
}

#[test]
fn relaxing_decay_never_increases_gamma4() {
    let model = common::acc_model();
    let strict = common::acc_pgc().gamma4.unwrap();
    let relaxed = synth_pgc(&model, &SynthesisOptions::new(0.4, 0.1, 10.0).unwrap())
        .unwrap()
        .feasible()
        .unwrap()
        .gamma4
        .unwrap();
    assert!(relaxed <= strict + 1e-4 * strict, "{relaxed} > {strict}");
}

/// At random feasible points of the performance program, each `Z(i)`
/// dominates `(BFD)(BFD)ᵀ`, so `tr Z(i) ≥ tr((BFD)ᵀ(BFD))`.
#[test]
fn trace_objective_upper_bounds_noise_gain() {
    let model = common::acc_model();
    let opts = SynthesisOptions::default();
    let (prog, vars) = build_pgc_program(&model, &opts).unwrap();
    let center = &common::acc_pgc();
    let mut base = vec![0.0; prog.n_scalars];
    for i in 0..2 {
        vars.s[i].store(center.s_mats[i].as_matrix(), &mut base);
        vars.y[i].store(center.y_mats[i].as_matrix(), &mut base);
        vars.f[i].store(&center.f_mats[i], &mut base);
    }
    let mut r = rng(77);
    let mut points = 0;
    let mut tries = 0;
    while points < 20 {
        tries += 1;
        assert!(tries < 20_000);
        let mut x = base.clone();
        // Perturb F and pick Z, γ₄ large enough to be feasible half the time.
        for i in 0..2 {
            let mut f = vars.f[i].value(&x);
            f.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
            vars.f[i].store(&f, &mut x);
            let bfd = &model.modes[i].b * &f * &model.modes[i].d;
            let g = &bfd * bfd.transpose();
            let z = g + nalgebra::DMatrix::identity(2, 2) * r.random_range(-0.05..0.5);
            vars.z[i].store(&z, &mut x);
        }
        let g4 = vars.gamma4.as_ref().unwrap();
        let tz = (0..2)
            .map(|i| vars.z[i].value(&x).trace())
            .fold(f64::MIN, f64::max);
        g4.store(&nalgebra::DMatrix::from_element(1, 1, tz + 0.1), &mut x);
        let lifts_ok = prog
            .lmis
            .iter()
            .filter(|l| l.label.starts_with("noise-lift") || l.label.starts_with("trace"))
            .all(|l| lambda_max(&l.expr.eval(&x)).unwrap() <= 0.0);
        if !lifts_ok {
            continue;
        }
        points += 1;
        for i in 0..2 {
            let f = vars.f[i].value(&x);
            let bfd = &model.modes[i].b * &f * &model.modes[i].d;
            let need = (bfd.transpose() * &bfd).trace();
            assert!(vars.z[i].value(&x).trace() >= need - 1e-12);
        }
    }
}

#[test]
fn cruise_gains_near_reference() {
    let res = common::acc_pgc();
    let k0 = &res.gains.gains[0];
    let k1 = &res.gains.gains[1];
    assert!(k0[(0, 0)].abs() <= 0.05);
    assert!((k0[(0, 1)] / -2.52 - 1.0).abs() <= 0.25);
    assert!((k1[(0, 0)] / -2.61 - 1.0).abs() <= 0.25);
    assert!((k1[(0, 1)] / -1.76 - 1.0).abs() <= 0.25);
    let bound = res.guaranteed_bound.unwrap();
    assert!((bound - 10.0 * res.gamma4.unwrap() / 0.8).abs() < 1e-9 * bound);
}

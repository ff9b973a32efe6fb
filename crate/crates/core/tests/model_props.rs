mod common;

use common::{naive_mul, random_matrix, random_model, rng};
use jumpctl_core::model::{
    build_closed_loop, stationary_distribution, validate_model, GainSet, Generator, ModeSystem,
    PemAdm,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn pi_of(rows: &[Vec<f64>]) -> Vec<f64> {
    stationary_distribution(&Generator::from_rows(rows).unwrap()).unwrap()
}

#[test]
fn stationary_distribution_hand_values() {
    let cases: [(&[Vec<f64>], [f64; 2]); 3] = [
        (&[vec![-4.0, 4.0], vec![0.5, -0.5]], [1.0 / 9.0, 8.0 / 9.0]),
        (&[vec![-1.0, 1.0], vec![1.0, -1.0]], [0.5, 0.5]),
        (&[vec![-4.0, 4.0], vec![3.0, -3.0]], [3.0 / 7.0, 4.0 / 7.0]),
    ];
    for (rows, want) in cases {
        let pi = pi_of(rows);
        assert!(
            (pi[0] - want[0]).abs() < 1e-14 && (pi[1] - want[1]).abs() < 1e-14,
            "{pi:?}"
        );
    }
}

#[test]
fn stationary_distribution_residuals() {
    let mut r = rng(9);
    for n in 2..=5 {
        let g = common::random_generator(&mut r, n, 0.1, 5.0);
        let pi = stationary_distribution(&g).unwrap();
        let sum: f64 = pi.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for j in 0..n {
            let bal: f64 = (0..n).map(|i| pi[i] * g.rate(i, j)).sum();
            assert!(bal.abs() < 1e-12, "column {j}: {bal}");
        }
    }
}

#[test]
fn closed_loop_matches_naive_products() {
    let mut r = rng(17);
    let model = random_model(&mut r, 3, 4, 2, 3, 0.0);
    let gains = GainSet::new((0..3).map(|_| random_matrix(&mut r, 2, 3, 2.0)).collect());
    let cl = build_closed_loop(&model, &gains).unwrap();
    for i in 0..3 {
        let m = &model.modes[i];
        let bk = naive_mul(&m.b, &gains.gains[i]);
        let bkc = naive_mul(&bk, &m.c);
        assert!((&cl.a_cl[i] - &m.a - bkc).amax() < 1e-12);
        assert!((&cl.w[i] - naive_mul(&bk, &m.d)).amax() < 1e-12);
    }
}

#[test]
fn cruise_mode_one_closed_loop() {
    let model = common::acc_model();
    let gains = GainSet::new(vec![
        DMatrix::from_row_slice(1, 2, &[0.0, -2.52]),
        DMatrix::from_row_slice(1, 2, &[-2.61, -1.76]),
    ]);
    let cl = build_closed_loop(&model, &gains).unwrap();
    let a1 = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.61, -1.76]);
    let w1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -0.1305, -0.88]);
    assert!((&cl.a_cl[1] - a1).amax() < 1e-12);
    assert!((&cl.w[1] - w1).amax() < 1e-12);
}

#[test]
fn zero_gains_leave_open_loop() {
    let model = random_model(&mut rng(1), 2, 3, 1, 2, 0.0);
    let cl = build_closed_loop(&model, &GainSet::zeros(&model)).unwrap();
    for (i, m) in model.modes.iter().enumerate() {
        assert_eq!(cl.a_cl[i], m.a);
        assert!(cl.w[i].iter().all(|&v| v == 0.0));
    }
}

fn arb_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (
        0usize..4,
        0usize..4,
        prop::collection::vec(prop_oneof![-1e6..1e6f64, Just(0.0)], 16),
    )
        .prop_map(|(r, c, v)| DMatrix::from_fn(r, c, |i, j| v[i * 4 + j]))
}

proptest! {
    #[test]
    fn validate_model_is_total(
        mats in prop::collection::vec((arb_matrix(), arb_matrix(), arb_matrix(), arb_matrix()), 0..4),
        rates in arb_matrix(),
        dims in (0usize..5, 0usize..5, 0usize..5),
    ) {
        let model = PemAdm {
            modes: mats.into_iter().map(|(a, b, c, d)| ModeSystem { a, b, c, d }).collect(),
            generator: Generator::unchecked(rates),
            state_dim: dims.0,
            input_dim: dims.1,
            output_dim: dims.2,
        };
        let report = validate_model(&model);
        let _ = report.to_string();
    }

    #[test]
    fn valid_random_models_pass(seed in any::<u64>(), n_modes in 1usize..4, n in 1usize..5) {
        let model = random_model(&mut rng(seed), n_modes, n, 1, n, 0.0);
        prop_assert!(validate_model(&model).is_ok());
    }
}

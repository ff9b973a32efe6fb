mod common;

use jumpctl_core::analysis::{find_certificate, solve_moments};
use jumpctl_core::model::{build_closed_loop, stationary_distribution, ClosedLoop, Generator};
use jumpctl_core::simulate::{
    estimate_generator, run_ensemble, sample_ctmc, PathStreams, SimConfig,
};
use nalgebra::DMatrix;

fn low() -> Generator {
    Generator::from_rows(&[vec![-4.0, 4.0], vec![0.5, -0.5]]).unwrap()
}

/// Empirical one-step transition frequencies over a short lag match the
/// exact two-state transition function (and hence `q_ij h` to first order).
#[test]
fn kolmogorov_short_lag_transitions() {
    let gen = low();
    let (t, h) = (5.0, 0.01);
    let n = 40_000u64;
    let mut counts = [[0usize; 2]; 2];
    for k in 0..n {
        let mut s = PathStreams::new(99, k);
        let path = sample_ctmc(&gen, (k % 2) as usize, t + h, &mut s.modes);
        counts[path.mode_at(t)][path.mode_at(t + h)] += 1;
    }
    let rate_sum: f64 = 4.5;
    let p01 = 4.0 / rate_sum * (1.0 - (-rate_sum * h).exp());
    let p10 = 0.5 / rate_sum * (1.0 - (-rate_sum * h).exp());
    for (i, want) in [(0, p01), (1, p10)] {
        let from = (counts[i][0] + counts[i][1]) as f64;
        let got = counts[i][1 - i] as f64 / from;
        let se = (want * (1.0 - want) / from).sqrt();
        assert!(
            (got - want).abs() < 4.0 * se,
            "row {i}: {got} vs {want} (se {se})"
        );
        let q = if i == 0 { 4.0 } else { 0.5 };
        assert!((want / (q * h) - 1.0).abs() < 0.03);
    }
}

#[test]
fn long_run_occupancy_matches_stationary() {
    let gen = low();
    let paths: Vec<_> = (0..50)
        .map(|k| sample_ctmc(&gen, 0, 400.0, &mut PathStreams::new(7, k).modes))
        .collect();
    let est = estimate_generator(&paths, 2);
    let total: f64 = est.occupancy.iter().sum();
    let frac = est.occupancy[1] / total;
    let pi = stationary_distribution(&gen).unwrap();
    assert!((frac - pi[1]).abs() < 0.01, "{frac} vs {}", pi[1]);
}

#[test]
fn generator_recovery_from_jumps() {
    for rows in [[[-4.0, 4.0], [0.5, -0.5]], [[-4.0, 4.0], [3.0, -3.0]]] {
        let gen = Generator::from_rows(&rows.map(|r| r.to_vec())).unwrap();
        let mut paths = Vec::new();
        let mut jumps = 0;
        let mut k = 0;
        while jumps < 10_000 {
            let p = sample_ctmc(&gen, 0, 100.0, &mut PathStreams::new(3, k).modes);
            jumps += p.n_jumps();
            paths.push(p);
            k += 1;
        }
        let est = estimate_generator(&paths, 2);
        for (i, j) in [(0, 1), (1, 0)] {
            let rel = est.rates[(i, j)] / rows[i][j] - 1.0;
            assert!(rel.abs() < 0.05, "q{i}{j}: {}", est.rates[(i, j)]);
        }
    }
}

#[test]
fn ornstein_uhlenbeck_stationary_variance() {
    let cfg = SimConfig {
        dt: 1e-3,
        horizon: 50.0,
        n_paths: 64,
        tail_window: Some([25.0, 50.0]),
        record_stride: 100,
        ..Default::default()
    };
    let ens = run_ensemble(&ClosedLoop::scalar(-1.0, 1.0), &[0.0], &cfg).unwrap();
    let tail = ens.stats.tail.unwrap();
    assert!((tail.mean - 0.5).abs() < 0.05, "{tail:?}");
}

#[test]
fn noiseless_decay_bound() {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
    let cl = ClosedLoop::new(
        vec![a.clone()],
        vec![DMatrix::zeros(2, 1)],
        Generator::trivial(),
    )
    .unwrap();
    let lam = a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::MIN, f64::max)
        .abs();
    let cfg = SimConfig {
        horizon: 5.0,
        n_paths: 1,
        ..Default::default()
    };
    let x0 = [1.0, 1.0];
    let ens = run_ensemble(&cl, &x0, &cfg).unwrap();
    let last = ens.stats.mean_sq.last().unwrap().sqrt();
    assert!(last <= 2f64.sqrt() * (-lam * 5.0 * 0.5).exp(), "{last}");
}

#[test]
fn stderr_scales_as_inverse_root_n() {
    let cl = ClosedLoop::scalar(-1.0, 1.0);
    let se = |n: usize| {
        let cfg = SimConfig {
            horizon: 3.0,
            n_paths: n,
            record_stride: 100,
            seed: 5,
            ..Default::default()
        };
        *run_ensemble(&cl, &[0.0], &cfg)
            .unwrap()
            .stats
            .stderr_mean_sq
            .last()
            .unwrap()
    };
    let (s1, s2, s4) = (se(500), se(1000), se(2000));
    assert!((s1 / s2 / 2f64.sqrt() - 1.0).abs() < 0.2, "{s1} {s2}");
    assert!((s1 / s4 / 2.0 - 1.0).abs() < 0.2, "{s1} {s4}");
}

#[test]
fn ensemble_independent_of_thread_count() {
    let res = common::acc_pgc();
    let cl = build_closed_loop(&common::acc_model(), &res.gains).unwrap();
    let cfg = SimConfig {
        horizon: 2.0,
        n_paths: 100,
        keep_paths: 2,
        tail_window: Some([1.0, 2.0]),
        ..Default::default()
    };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| run_ensemble(&cl, &[-5.0, -4.0], &cfg).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.samples, b.samples);
}

/// For the certified cruise loop the ensemble mean square stays under the
/// all-time bound at every recorded time, its tail under the steady-state
/// bound, and it agrees with the exact steady state.
#[test]
fn certified_loop_respects_bounds() {
    let res = common::acc_pgc();
    let cl = build_closed_loop(&common::acc_model(), &res.gains).unwrap();
    let cert = find_certificate(&cl, 1e-6).unwrap().unwrap();
    let x0 = [-5.0, -4.0];
    let cfg = SimConfig {
        horizon: 20.0,
        n_paths: 500,
        tail_window: Some([15.0, 20.0]),
        ..Default::default()
    };
    let ens = run_ensemble(&cl, &x0, &cfg).unwrap();
    let all = cert.alltime_bound(&x0);
    for (m, se) in ens.stats.mean_sq.iter().zip(&ens.stats.stderr_mean_sq) {
        assert!(m - 3.0 * se <= all);
    }
    let tail = ens.stats.tail.unwrap();
    assert!(tail.mean - 3.0 * tail.stderr <= cert.ss_bound);
    let exact = solve_moments(&cl).unwrap().total_ms;
    assert!(
        (tail.mean - exact).abs() <= 3.0 * tail.stderr,
        "{} ± {} vs {exact}",
        tail.mean,
        tail.stderr
    );
}

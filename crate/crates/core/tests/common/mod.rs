#![allow(dead_code)]

use std::sync::OnceLock;

use jumpctl_core::acc::{build_acc_model, AccConfig};
use jumpctl_core::model::{Generator, ModeSystem, PemAdm};
use jumpctl_core::synthesis::{synth_pgc, SynthesisOptions, SynthesisResult};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| scale * rng.random_range(-1.0..1.0))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = random_matrix(rng, n, n, 1.0);
    (&m + m.transpose()) * 0.5
}

/// Off-diagonal rates uniform in `[lo, hi]`.
pub fn random_generator(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Generator {
    let mut q = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[(i, j)] = rng.random_range(lo..hi);
            }
        }
        let s: f64 = (0..n).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -s;
    }
    Generator::new(q).expect("valid generator")
}

/// Random model whose mode drifts are shifted by `shift` (negative shifts
/// make open-loop stable modes more likely).
pub fn random_model(
    rng: &mut ChaCha8Rng,
    n_modes: usize,
    n: usize,
    m: usize,
    p: usize,
    shift: f64,
) -> PemAdm {
    let modes = (0..n_modes)
        .map(|_| ModeSystem {
            a: random_matrix(rng, n, n, 1.0) + DMatrix::identity(n, n) * shift,
            b: random_matrix(rng, n, m, 1.0),
            c: random_matrix(rng, p, n, 1.0),
            d: random_matrix(rng, p, p, 0.5),
        })
        .collect();
    PemAdm::new(modes, random_generator(rng, n_modes, 0.2, 2.0)).expect("valid model")
}

pub fn naive_mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), b.ncols());
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det_lu(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)]).collect())
        .collect();
    let mut det = 1.0;
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs()))
            .unwrap();
        if a[piv][k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            a.swap(piv, k);
            det = -det;
        }
        det *= a[k][k];
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    det
}

/// Number of eigenvalues of symmetric `m` below `x`, from the signs of the
/// LDLᵀ pivots of `m − xI` (Sylvester inertia).
pub fn count_below(m: &DMatrix<f64>, x: f64) -> usize {
    let n = m.nrows();
    let mut a = m.clone() - DMatrix::identity(n, n) * x;
    let mut neg = 0;
    for k in 0..n {
        let mut d = a[(k, k)];
        if d == 0.0 {
            d = -1e-300;
        }
        if d < 0.0 {
            neg += 1;
        }
        for i in k + 1..n {
            let f = a[(i, k)] / d;
            for j in k + 1..n {
                a[(i, j)] -= f * a[(k, j)];
            }
        }
    }
    neg
}

/// Eigenvalues by bisection on the inertia count, ascending.
pub fn eig_bisection(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let r = m.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
    (0..n)
        .map(|k| {
            let (mut lo, mut hi) = (-r, r);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if count_below(m, mid) > k {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect()
}

pub fn acc_model() -> PemAdm {
    build_acc_model(&AccConfig::default()).unwrap()
}

/// PGC design on the built-in cruise-control model, computed once.
pub fn acc_pgc() -> &'static SynthesisResult {
    static CELL: OnceLock<SynthesisResult> = OnceLock::new();
    CELL.get_or_init(|| {
        synth_pgc(&acc_model(), &SynthesisOptions::default())
            .unwrap()
            .feasible()
            .expect("PGC feasible")
    })
}

//! Exact sampling and estimation of continuous-time Markov chains.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;

use crate::model::Generator;

/// Right-continuous piecewise-constant mode path on `[0, horizon]`.
/// `modes[0]` holds from time 0 and `modes[k + 1]` from `jump_times[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModePath {
    pub jump_times: Vec<f64>,
    pub modes: Vec<usize>,
    pub horizon: f64,
}

impl ModePath {
    pub fn mode_at(&self, t: f64) -> usize {
        let k = self.jump_times.partition_point(|&s| s <= t);
        self.modes[k]
    }

    pub fn n_jumps(&self) -> usize {
        self.jump_times.len()
    }

    /// Concatenate paths end to end (the second starts where the first ends).
    pub fn concat(&self, other: &ModePath) -> ModePath {
        let mut jump_times = self.jump_times.clone();
        let mut modes = self.modes.clone();
        if other.modes[0] != *modes.last().unwrap() {
            jump_times.push(self.horizon);
            modes.push(other.modes[0]);
        }
        jump_times.extend(other.jump_times.iter().map(|t| t + self.horizon));
        modes.extend_from_slice(&other.modes[1..]);
        ModePath {
            jump_times,
            modes,
            horizon: self.horizon + other.horizon,
        }
    }
}

/// Exponential holding times with rate `−q_ii`, then a jump to `j ≠ i` with
/// probability `q_ij / (−q_ii)`. Absorbing modes hold until the horizon.
pub fn sample_ctmc<R: Rng + ?Sized>(
    gen: &Generator,
    r0: usize,
    horizon: f64,
    rng: &mut R,
) -> ModePath {
    let mut jump_times = Vec::new();
    let mut modes = vec![r0];
    let mut t = 0.0;
    let mut cur = r0;
    loop {
        let exit = gen.exit_rate(cur);
        if !(exit > 0.0) {
            break;
        }
        t += Exp::new(exit).expect("positive exit rate").sample(rng);
        if t > horizon {
            break;
        }
        let target = rng.random::<f64>() * exit;
        let mut acc = 0.0;
        let mut next = None;
        for j in 0..gen.n_modes() {
            if j == cur {
                continue;
            }
            let q = gen.rate(cur, j);
            if q <= 0.0 {
                continue;
            }
            next = Some(j);
            acc += q;
            if target < acc {
                break;
            }
        }
        cur = next.expect("positive exit rate implies a target mode");
        jump_times.push(t);
        modes.push(cur);
    }
    ModePath {
        jump_times,
        modes,
        horizon,
    }
}

/// Draw an index from a discrete distribution.
pub fn sample_discrete<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Maximum-likelihood generator estimate with normal-approximation
/// 95% half-widths from the Poisson transition counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorEstimate {
    pub rates: DMatrix<f64>,
    pub half_width: DMatrix<f64>,
    pub counts: DMatrix<f64>,
    pub occupancy: Vec<f64>,
    /// `false` for modes never visited; their rows are NaN.
    pub estimable: Vec<bool>,
}

pub fn estimate_generator(paths: &[ModePath], n_modes: usize) -> GeneratorEstimate {
    let mut counts: DMatrix<f64> = DMatrix::zeros(n_modes, n_modes);
    let mut occupancy = vec![0.0; n_modes];
    for p in paths {
        let mut start = 0.0;
        for (k, &m) in p.modes.iter().enumerate() {
            let end = p.jump_times.get(k).copied().unwrap_or(p.horizon);
            occupancy[m] += end - start;
            if k + 1 < p.modes.len() {
                counts[(m, p.modes[k + 1])] += 1.0;
            }
            start = end;
        }
    }
    let mut rates = DMatrix::zeros(n_modes, n_modes);
    let mut half_width = DMatrix::zeros(n_modes, n_modes);
    let mut estimable = vec![true; n_modes];
    for i in 0..n_modes {
        if occupancy[i] <= 0.0 {
            estimable[i] = false;
            for j in 0..n_modes {
                rates[(i, j)] = f64::NAN;
                half_width[(i, j)] = f64::NAN;
            }
            continue;
        }
        let mut exit = 0.0;
        let mut exit_count = 0.0f64;
        for j in (0..n_modes).filter(|&j| j != i) {
            rates[(i, j)] = counts[(i, j)] / occupancy[i];
            half_width[(i, j)] = 1.96 * counts[(i, j)].sqrt() / occupancy[i];
            exit += rates[(i, j)];
            exit_count += counts[(i, j)];
        }
        rates[(i, i)] = -exit;
        half_width[(i, i)] = 1.96 * exit_count.sqrt() / occupancy[i];
    }
    GeneratorEstimate {
        rates,
        half_width,
        counts,
        occupancy,
        estimable,
    }
}

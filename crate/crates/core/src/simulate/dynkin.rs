//! Monte-Carlo check of Dynkin's formula for mode-dependent quadratics.
//!
//! For `V(x, i) = xᵀP(i)x` the generator of the jump diffusion is
//! `𝓛V(x, i) = xᵀM(i)x + tr(W(i)ᵀP(i)W(i))` with `M(i)` the coupled
//! Lyapunov expression, so `d/dt E[V] = E[𝓛V]`. The left side is estimated
//! by a forward difference over `h = 10·dt` on the same paths.

use serde::Serialize;

use super::{check_x0, simulate_path, InitialMode, PathStreams, SimConfig};
use crate::analysis::lyapunov_lhs;
use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::model::ClosedLoop;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynkinReport {
    pub t_probe: f64,
    pub h: f64,
    /// Forward-difference estimate of `d/dt E[V]`.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Monte-Carlo estimate of `E[𝓛V]` at `t_probe`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// Standard error of the paired difference `lhs − rhs`.
    pub diff_stderr: f64,
    pub rel_error: f64,
    pub n_paths_used: usize,
}

fn quad(p: &SymMatrix, x: &[f64]) -> f64 {
    let m = p.as_matrix();
    let mut s = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        for (j, &xj) in x.iter().enumerate() {
            s += xi * m[(i, j)] * xj;
        }
    }
    s
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `cfg` supplies `dt`, `n_paths`, `seed` and `initial_mode`; its horizon and
/// recording stride are replaced.
pub fn validate_dynkin(
    cl: &ClosedLoop,
    p_mats: &[SymMatrix],
    x0: &[f64],
    t_probe: f64,
    cfg: &SimConfig,
) -> Result<DynkinReport> {
    if p_mats.len() != cl.n_modes() || p_mats.iter().any(|p| p.dim() != cl.state_dim()) {
        return Err(Error::InvalidOption(
            "one n×n quadratic form per mode is required".into(),
        ));
    }
    check_x0(cl, x0)?;
    let h = 10.0 * cfg.dt;
    let k_probe = (t_probe / h).round() as usize;
    let mut run = cfg.clone();
    run.record_stride = 10;
    run.horizon = (k_probe + 1) as f64 * h;
    run.tail_window = None;
    run.validate()?;
    let init = InitialMode::resolve(&cl.generator, cfg.initial_mode)?;
    let m_mats: Vec<SymMatrix> = (0..cl.n_modes())
        .map(|i| lyapunov_lhs(cl, p_mats, i))
        .collect();
    let noise: Vec<f64> = (0..cl.n_modes())
        .map(|i| (cl.w[i].transpose() * p_mats[i].as_matrix() * &cl.w[i]).trace())
        .collect();

    let per_path: Vec<Option<(f64, f64)>> = super::map_paths(cfg.n_paths, |path| {
        let mut streams = PathStreams::new(cfg.seed, path);
        let mut v_t = 0.0;
        let mut lv_t = 0.0;
        let mut v_th = 0.0;
        let out = simulate_path(cl, x0, &init, &run, &mut streams, |r| {
            if r.index == k_probe {
                v_t = quad(&p_mats[r.mode], r.x);
                lv_t = quad(&m_mats[r.mode], r.x) + noise[r.mode];
            } else if r.index == k_probe + 1 {
                v_th = quad(&p_mats[r.mode], r.x);
            }
        });
        out.diverged_at.is_none().then(|| ((v_th - v_t) / h, lv_t))
    });
    let pairs: Vec<(f64, f64)> = per_path.into_iter().flatten().collect();
    if pairs.is_empty() {
        return Err(Error::NumericalFailure(
            "every Dynkin probe path diverged".into(),
        ));
    }
    let lhs_v: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs_v: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff_v: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let (lhs, lhs_stderr) = mean_stderr(&lhs_v);
    let (rhs, rhs_stderr) = mean_stderr(&rhs_v);
    let (_, diff_stderr) = mean_stderr(&diff_v);
    Ok(DynkinReport {
        t_probe: k_probe as f64 * h,
        h,
        lhs,
        lhs_stderr,
        rhs,
        rhs_stderr,
        diff_stderr,
        rel_error: (lhs - rhs).abs() / rhs.abs(),
        n_paths_used: pairs.len(),
    })
}

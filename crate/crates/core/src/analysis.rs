//! Mean-square stability analysis of the closed-loop jump diffusion.
//!
//! A certificate is a set of per-mode Lyapunov matrices `P(i) ≻ 0` with
//! `M(i) = A_cl(i)ᵀP(i) + P(i)A_cl(i) + Σ_j q_ij P(j) ≺ 0`. From it follow
//!
//! * `γ₁ = −max_i λ_max(M(i))`, `γ₂ = min_i λ_min(P(i))`,
//!   `γ₃ = max_i λ_max(P(i))`, `c₁ = max_i tr(W(i)ᵀP(i)W(i))`;
//! * the steady-state bound `lim sup E[xᵀx] ≤ γ₃c₁/(γ₁γ₂)`;
//! * the decay rate `γ₁/γ₃` of `E[V]` outside that region;
//! * the all-time bound `max{γ₃/γ₂ · x₀ᵀx₀, γ₃c₁/(γ₁γ₂)}`.
//!
//! [`solve_moments`] is an independent exact oracle: the coupled
//! second-moment equations of the jump diffusion.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, SymMatrix};
use crate::model::{stationary_distribution, ClosedLoop};
use crate::sdp::{sdp_solve, LmiProgram, MatExpr, SdpStatus};

/// Relative tolerance when comparing stored and recomputed constants.
const CONSTANT_TOL: f64 = 1e-9;
/// Spectral abscissa band treated as marginal by the moment oracle.
pub const MARGINAL_BAND: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub p_mats: Vec<SymMatrix>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub c1: f64,
    pub ss_bound: f64,
    pub rate: f64,
}

impl Certificate {
    /// Derive all constants from the Lyapunov matrices.
    pub fn from_p(cl: &ClosedLoop, p_mats: Vec<SymMatrix>) -> Result<Self> {
        let c = derived_constants(cl, &p_mats)?;
        Ok(Certificate {
            p_mats,
            gamma1: c.gamma1,
            gamma2: c.gamma2,
            gamma3: c.gamma3,
            c1: c.c1,
            ss_bound: c.ss_bound(),
            rate: c.rate(),
        })
    }

    /// `max{γ₃/γ₂ · x₀ᵀx₀, γ₃c₁/(γ₁γ₂)}`.
    pub fn alltime_bound(&self, x0: &[f64]) -> f64 {
        let r2: f64 = x0.iter().map(|v| v * v).sum();
        (self.gamma3 / self.gamma2 * r2).max(self.ss_bound)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Constants {
    gamma1: f64,
    gamma2: f64,
    gamma3: f64,
    c1: f64,
}

impl Constants {
    fn ss_bound(&self) -> f64 {
        self.gamma3 * self.c1 / (self.gamma1 * self.gamma2)
    }
    fn rate(&self) -> f64 {
        self.gamma1 / self.gamma3
    }
}

/// `M(i) = A_cl(i)ᵀP(i) + P(i)A_cl(i) + Σ_j q_ij P(j)`.
pub fn lyapunov_lhs(cl: &ClosedLoop, p_mats: &[SymMatrix], i: usize) -> SymMatrix {
    let a = &cl.a_cl[i];
    let p = p_mats[i].as_matrix();
    let mut m = a.transpose() * p + p * a;
    for (j, pj) in p_mats.iter().enumerate() {
        m += pj.as_matrix() * cl.generator.rate(i, j);
    }
    SymMatrix::new(m)
}

fn derived_constants(cl: &ClosedLoop, p_mats: &[SymMatrix]) -> Result<Constants> {
    if p_mats.len() != cl.n_modes() {
        return Err(Error::InvalidModel(format!(
            "{} Lyapunov matrices for {} modes",
            p_mats.len(),
            cl.n_modes()
        )));
    }
    let mut max_m = f64::NEG_INFINITY;
    let mut gamma2 = f64::INFINITY;
    let mut gamma3 = f64::NEG_INFINITY;
    let mut c1 = f64::NEG_INFINITY;
    for i in 0..cl.n_modes() {
        if p_mats[i].dim() != cl.state_dim() {
            return Err(Error::Dimension {
                mode: i,
                field: "P",
                got: format!("{0}x{0}", p_mats[i].dim()),
                expected: format!("{0}x{0}", cl.state_dim()),
            });
        }
        max_m = max_m.max(lyapunov_lhs(cl, p_mats, i).max_eig()?);
        let e = eig_sym(&p_mats[i])?;
        gamma2 = gamma2.min(e.values[0]);
        gamma3 = gamma3.max(*e.values.last().unwrap());
        let w = &cl.w[i];
        c1 = c1.max((w.transpose() * p_mats[i].as_matrix() * w).trace());
    }
    Ok(Constants {
        gamma1: -max_m,
        gamma2,
        gamma3,
        c1,
    })
}

/// Search for a certificate by solving the coupled Lyapunov LMIs.
/// `Ok(None)` means no certificate was found; the condition is only
/// sufficient, so this says nothing definite about instability.
pub fn find_certificate(cl: &ClosedLoop, strictness: f64) -> Result<Option<Certificate>> {
    let n = cl.state_dim();
    let n_modes = cl.n_modes();
    let mut prog = LmiProgram::new(strictness);
    let p: Vec<_> = (0..n_modes)
        .map(|i| prog.add_sym_var(format!("P{i}"), n))
        .collect();
    for i in 0..n_modes {
        let pi = MatExpr::var(&p[i]);
        let mut m = pi.premul(&cl.a_cl[i].transpose()).sym_sum();
        for (j, pj) in p.iter().enumerate() {
            let q = cl.generator.rate(i, j);
            if q != 0.0 {
                m = m + MatExpr::var(pj) * q;
            }
        }
        prog.add_lmi(format!("M({i})<0"), m);
        prog.add_lmi(format!("P({i})>0"), -pi);
    }
    let sol = sdp_solve(&prog)?;
    match sol.status {
        SdpStatus::Infeasible => Ok(None),
        SdpStatus::NumericalFailure => Err(Error::NumericalFailure(sol.message)),
        SdpStatus::Feasible | SdpStatus::Optimal => {
            let p_mats: Vec<SymMatrix> = sol.variables.into_iter().map(SymMatrix::new).collect();
            let cert = Certificate::from_p(cl, p_mats)?;
            let report = verify_certificate(cl, &cert);
            if !report.passes {
                return Err(Error::NumericalFailure(format!(
                    "solver certificate failed re-verification: {}",
                    report.violations.join("; ")
                )));
            }
            Ok(Some(cert))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub lambda_max_m: Vec<f64>,
    pub lambda_min_p: Vec<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub c1: f64,
    pub ss_bound: f64,
    pub rate: f64,
    pub passes: bool,
    pub violations: Vec<String>,
}

/// Recompute everything from the Lyapunov matrices and check every
/// certificate invariant.
pub fn verify_certificate(cl: &ClosedLoop, cert: &Certificate) -> CertificateReport {
    let mut violations = Vec::new();
    let mut lambda_max_m = Vec::new();
    let mut lambda_min_p = Vec::new();
    let consts = match derived_constants(cl, &cert.p_mats) {
        Ok(c) => c,
        Err(e) => {
            return CertificateReport {
                lambda_max_m,
                lambda_min_p,
                gamma1: f64::NAN,
                gamma2: f64::NAN,
                gamma3: f64::NAN,
                c1: f64::NAN,
                ss_bound: f64::NAN,
                rate: f64::NAN,
                passes: false,
                violations: vec![e.to_string()],
            }
        }
    };
    for i in 0..cl.n_modes() {
        let lm = lyapunov_lhs(cl, &cert.p_mats, i)
            .max_eig()
            .unwrap_or(f64::NAN);
        let lp = cert.p_mats[i].min_eig().unwrap_or(f64::NAN);
        if !(lp > 0.0) {
            violations.push(format!(
                "P({}) not positive definite (lambda_min {lp:e})",
                i + 1
            ));
        }
        if !(lm < 0.0) {
            violations.push(format!(
                "M({}) not negative definite (lambda_max {lm:e})",
                i + 1
            ));
        }
        lambda_max_m.push(lm);
        lambda_min_p.push(lp);
    }
    let close = |a: f64, b: f64| (a - b).abs() <= CONSTANT_TOL * a.abs().max(b.abs()).max(1.0);
    for (name, stored, fresh) in [
        ("gamma1", cert.gamma1, consts.gamma1),
        ("gamma2", cert.gamma2, consts.gamma2),
        ("gamma3", cert.gamma3, consts.gamma3),
        ("c1", cert.c1, consts.c1),
    ] {
        if !close(stored, fresh) {
            violations.push(format!("{name} stored {stored} but recomputes to {fresh}"));
        }
    }
    let ss_bound = consts.ss_bound();
    let rate = consts.rate();
    CertificateReport {
        lambda_max_m,
        lambda_min_p,
        gamma1: consts.gamma1,
        gamma2: consts.gamma2,
        gamma3: consts.gamma3,
        c1: consts.c1,
        ss_bound,
        rate,
        passes: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub ss_bound: f64,
    pub rate: f64,
    pub alltime_bound: f64,
}

pub fn bound_report(cert: &Certificate, x0: &[f64]) -> BoundReport {
    BoundReport {
        ss_bound: cert.gamma3 * cert.c1 / (cert.gamma1 * cert.gamma2),
        rate: cert.gamma1 / cert.gamma3,
        alltime_bound: cert.alltime_bound(x0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSolution {
    /// Steady-state `E[x xᵀ 1{r = i}]`; empty when unstable.
    pub second_moments: Vec<SymMatrix>,
    pub total_ms: f64,
    pub stable: bool,
    pub spectral_abscissa: f64,
}

/// The second-moment generator acting on `(vec M₁, …, vec M_N)`:
/// `M_i ↦ A_i M_i + M_i A_iᵀ + Σ_j q_ji M_j`.
pub fn moment_operator(cl: &ClosedLoop) -> DMatrix<f64> {
    let n = cl.state_dim();
    let nm = cl.n_modes();
    let block = n * n;
    let dim = nm * block;
    let mut op = DMatrix::zeros(dim, dim);
    for col in 0..dim {
        let src_mode = col / block;
        let mut e = DMatrix::zeros(n, n);
        e[((col % block) % n, (col % block) / n)] = 1.0;
        for i in 0..nm {
            let mut out = DMatrix::zeros(n, n);
            if i == src_mode {
                let a = &cl.a_cl[i];
                out += a * &e + &e * a.transpose();
            }
            out += &e * cl.generator.rate(src_mode, i);
            for (k, v) in out.iter().enumerate() {
                op[(i * block + k, col)] = *v;
            }
        }
    }
    op
}

/// Exact steady-state second moments of the closed loop with the chain in
/// its stationary regime.
pub fn solve_moments(cl: &ClosedLoop) -> Result<MomentSolution> {
    let pi = stationary_distribution(&cl.generator)?;
    let op = moment_operator(cl);
    let abscissa = op
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if abscissa.abs() < MARGINAL_BAND {
        return Err(Error::Marginal(abscissa));
    }
    if abscissa > 0.0 {
        return Ok(MomentSolution {
            second_moments: Vec::new(),
            total_ms: f64::INFINITY,
            stable: false,
            spectral_abscissa: abscissa,
        });
    }
    let n = cl.state_dim();
    let block = n * n;
    let mut rhs = DVector::zeros(cl.n_modes() * block);
    for i in 0..cl.n_modes() {
        let f = &cl.w[i] * cl.w[i].transpose() * pi[i];
        for (k, v) in f.iter().enumerate() {
            rhs[i * block + k] = -v;
        }
    }
    let sol = op
        .clone()
        .full_piv_lu()
        .solve(&rhs)
        .ok_or(Error::Marginal(abscissa))?;
    let residual = (&op * &sol - &rhs).amax();
    if residual >= 1e-8 * rhs.amax().max(1.0) {
        return Err(Error::NumericalFailure(format!(
            "moment solve residual {residual:e}"
        )));
    }
    let second_moments: Vec<SymMatrix> = (0..cl.n_modes())
        .map(|i| {
            SymMatrix::new(DMatrix::from_column_slice(
                n,
                n,
                &sol.as_slice()[i * block..(i + 1) * block],
            ))
        })
        .collect();
    let total_ms = second_moments.iter().map(|m| m.trace()).sum();
    Ok(MomentSolution {
        second_moments,
        total_ms,
        stable: true,
        spectral_abscissa: abscissa,
    })
}

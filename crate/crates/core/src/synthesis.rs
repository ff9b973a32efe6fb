//! Output-feedback gain synthesis through coupled LMIs.
//!
//! With `S(i) = P(i)⁻¹`, the congruence of the stability condition by
//! `S(i)` and the substitution `F(i) = K(i)Y(i)`, where `C(i)S(i) = Y(i)C(i)`,
//! make the condition affine in `(S, Y, F)`:
//!
//! ```text
//! [ Δ(i)    Λ_i(S) ]
//! [ Λ_i(S)ᵀ  −Ξ_i(S) ] ≺ 0,
//! Δ(i) = S Aᵀ + Cᵀ Fᵀ Bᵀ + A S + B F C + q_ii S,
//! Λ_i(S) = [√q_ij S(i)]_{j≠i},   Ξ_i(S) = diag(S(j))_{j≠i}.
//! ```
//!
//! The stabilizing program (SSC) is pure feasibility. The
//! performance-guaranteed program (PGC) adds a decay margin `γ̄₁S(i)` to
//! `Δ(i)`, confines the spectrum of `S(i)` to `[1/γ̄₃, 1/γ̄₂]` and minimizes
//! the worst-mode noise injection `tr((BFD)ᵀ(BFD))` through an epigraph.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::analysis::{find_certificate, lyapunov_lhs, Certificate};
use crate::error::{Error, Result};
use crate::linalg::{eig_sym, SymMatrix};
use crate::model::{build_closed_loop, validate_model, GainSet, PemAdm};
use crate::sdp::{
    sdp_solve, LmiProgram, MatExpr, MatVar, SdpSolution, SdpStatus, DEFAULT_STRICTNESS,
};

/// Largest acceptable condition number of `Y(i)` when recovering gains.
pub const MAX_Y_CONDITION: f64 = 1e10;
const ROUND_TRIP_TOL: f64 = 1e-8;
const EQUALITY_TOL: f64 = 1e-8;
const BOX_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthesisOptions {
    pub gamma1_bar: f64,
    pub gamma2_bar: f64,
    pub gamma3_bar: f64,
    pub alpha1: f64,
    pub strictness: f64,
}

impl Default for SynthesisOptions {
    /// The ACC design point.
    fn default() -> Self {
        SynthesisOptions {
            gamma1_bar: 0.8,
            gamma2_bar: 0.1,
            gamma3_bar: 1.0,
            alpha1: 10.0,
            strictness: DEFAULT_STRICTNESS,
        }
    }
}

impl SynthesisOptions {
    /// Options with `γ̄₃ = α₁ γ̄₂`.
    pub fn new(gamma1_bar: f64, gamma2_bar: f64, alpha1: f64) -> Result<Self> {
        let opts = SynthesisOptions {
            gamma1_bar,
            gamma2_bar,
            gamma3_bar: alpha1 * gamma2_bar,
            alpha1,
            strictness: DEFAULT_STRICTNESS,
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidOption(msg));
        if !(self.gamma1_bar >= 0.0 && self.gamma1_bar.is_finite()) {
            return bad(format!(
                "gamma1_bar must be non-negative, got {}",
                self.gamma1_bar
            ));
        }
        if !(self.gamma2_bar > 0.0 && self.gamma2_bar.is_finite()) {
            return bad(format!(
                "gamma2_bar must be positive, got {}",
                self.gamma2_bar
            ));
        }
        if !(self.gamma3_bar > 0.0 && self.gamma3_bar.is_finite()) {
            return bad(format!(
                "gamma3_bar must be positive, got {}",
                self.gamma3_bar
            ));
        }
        if !(self.alpha1 >= 1.0 && self.alpha1.is_finite()) {
            return bad(format!("alpha1 must be at least 1, got {}", self.alpha1));
        }
        if (self.gamma3_bar - self.alpha1 * self.gamma2_bar).abs()
            > 1e-12 * self.gamma3_bar.max(1.0)
        {
            return bad(format!(
                "gamma3_bar ({}) must equal alpha1 * gamma2_bar ({})",
                self.gamma3_bar,
                self.alpha1 * self.gamma2_bar
            ));
        }
        if !(self.strictness > 0.0) {
            return bad(format!(
                "strictness must be positive, got {}",
                self.strictness
            ));
        }
        Ok(())
    }

    /// `α₁ γ̄₃³ γ₄ / γ̄₁`.
    pub fn guaranteed_bound(&self, gamma4: f64) -> f64 {
        self.alpha1 * self.gamma3_bar.powi(3) * gamma4 / self.gamma1_bar
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisResult {
    pub s_mats: Vec<SymMatrix>,
    pub y_mats: Vec<SymMatrix>,
    pub f_mats: Vec<DMatrix<f64>>,
    pub gains: GainSet,
    pub gamma4: Option<f64>,
    pub guaranteed_bound: Option<f64>,
    /// PGC only: `c₁ / (γ̄₁ min λ_min(P))` with `P(i) = S(i)⁻¹`, the
    /// steady-state bound implied directly by the verified decay margin.
    /// Unlike `guaranteed_bound` it does not assume `D(i)` commutes with
    /// `Y(i)⁻¹`.
    pub decay_bound: Option<f64>,
    /// Certificate found for the recovered closed loop.
    pub certificate: Certificate,
    pub newton_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Infeasibility {
    pub worst_constraint: String,
    pub max_constraint_eig: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SynthesisOutcome {
    Feasible(Box<SynthesisResult>),
    Infeasible(Infeasibility),
}

impl SynthesisOutcome {
    pub fn feasible(self) -> Option<SynthesisResult> {
        match self {
            SynthesisOutcome::Feasible(r) => Some(*r),
            SynthesisOutcome::Infeasible(_) => None,
        }
    }
}

/// Variables of a synthesis program, in declaration order per mode.
#[derive(Debug, Clone)]
pub struct SynthesisVars {
    pub s: Vec<MatVar>,
    pub y: Vec<MatVar>,
    pub f: Vec<MatVar>,
    pub z: Vec<MatVar>,
    pub gamma4: Option<MatVar>,
}

fn common_program(
    model: &PemAdm,
    decay: f64,
    strictness: f64,
) -> Result<(LmiProgram, SynthesisVars)> {
    let report = validate_model(model);
    if !report.is_ok() {
        return Err(Error::InvalidModel(report.to_string()));
    }
    let (n, m, p) = (model.state_dim, model.input_dim, model.output_dim);
    let nm = model.n_modes();
    let mut prog = LmiProgram::new(strictness);
    let mut vars = SynthesisVars {
        s: vec![],
        y: vec![],
        f: vec![],
        z: vec![],
        gamma4: None,
    };
    for i in 0..nm {
        vars.s.push(prog.add_sym_var(format!("S{i}"), n));
        vars.y.push(prog.add_sym_var(format!("Y{i}"), p));
        vars.f.push(prog.add_full_var(format!("F{i}"), m, p));
    }
    let gen = &model.generator;
    for i in 0..nm {
        let mode = &model.modes[i];
        let s = MatExpr::var(&vars.s[i]);
        let bfc = MatExpr::var(&vars.f[i]).premul(&mode.b).postmul(&mode.c);
        let delta = (s.premul(&mode.a) + bfc).sym_sum() + s.scale(gen.rate(i, i) + decay);
        let others: Vec<usize> = (0..nm).filter(|&j| j != i).collect();
        let block = if others.is_empty() {
            delta
        } else {
            let lambda: Vec<MatExpr> = others
                .iter()
                .map(|&j| s.scale(gen.rate(i, j).sqrt()))
                .collect();
            let lambda = MatExpr::blocks(vec![lambda]);
            let xi =
                MatExpr::block_diag(others.iter().map(|&j| -MatExpr::var(&vars.s[j])).collect());
            MatExpr::blocks(vec![
                vec![delta, lambda.clone()],
                vec![lambda.transpose(), xi],
            ])
        };
        prog.add_lmi(format!("stability({})", i + 1), block);
        prog.add_lmi(format!("S({})>0", i + 1), -s.clone());
        prog.add_lmi(format!("Y({})>0", i + 1), -MatExpr::var(&vars.y[i]));
        let cs_yc = s.premul(&mode.c) - MatExpr::var(&vars.y[i]).postmul(&mode.c);
        prog.add_matrix_eq(&format!("CS=YC({})", i + 1), &cs_yc);
    }
    Ok((prog, vars))
}

/// The stabilizing-controller feasibility program.
pub fn build_ssc_program(model: &PemAdm, strictness: f64) -> Result<(LmiProgram, SynthesisVars)> {
    common_program(model, 0.0, strictness)
}

/// The performance-guaranteed program; objective `γ₄`.
pub fn build_pgc_program(
    model: &PemAdm,
    opts: &SynthesisOptions,
) -> Result<(LmiProgram, SynthesisVars)> {
    opts.validate()?;
    let (mut prog, mut vars) = common_program(model, opts.gamma1_bar, opts.strictness)?;
    let n = model.state_dim;
    let p = model.output_dim;
    let gamma4 = prog.add_full_var("gamma4", 1, 1);
    let g4 = MatExpr::var(&gamma4);
    for i in 0..model.n_modes() {
        let mode = &model.modes[i];
        let s = MatExpr::var(&vars.s[i]);
        prog.add_lmi(
            format!("S({})<=I/g2", i + 1),
            s.clone() - MatExpr::identity(n).scale(1.0 / opts.gamma2_bar),
        );
        prog.add_lmi(
            format!("S({})>=I/g3", i + 1),
            MatExpr::identity(n).scale(1.0 / opts.gamma3_bar) - s,
        );
        let z = prog.add_sym_var(format!("Z{i}"), n);
        let bfd = MatExpr::var(&vars.f[i]).premul(&mode.b).postmul(&mode.d);
        let lift = MatExpr::blocks(vec![
            vec![MatExpr::var(&z), bfd.clone()],
            vec![bfd.transpose(), MatExpr::identity(p)],
        ]);
        prog.add_lmi(format!("noise-lift({})", i + 1), -lift);
        prog.add_lmi(
            format!("trace({})<=gamma4", i + 1),
            MatExpr::var(&z).trace() - g4.clone(),
        );
        vars.z.push(z);
    }
    prog.minimize(&g4);
    vars.gamma4 = Some(gamma4);
    Ok((prog, vars))
}

/// Solve the stabilizing program and recover verified gains.
pub fn synth_ssc(model: &PemAdm, strictness: f64) -> Result<SynthesisOutcome> {
    let (prog, vars) = build_ssc_program(model, strictness)?;
    let sol = sdp_solve(&prog)?;
    finish(model, &vars, sol, None)
}

/// Solve the performance-guaranteed program and recover verified gains.
pub fn synth_pgc(model: &PemAdm, opts: &SynthesisOptions) -> Result<SynthesisOutcome> {
    let (prog, vars) = build_pgc_program(model, opts)?;
    let sol = sdp_solve(&prog)?;
    finish(model, &vars, sol, Some(opts))
}

/// `K = F Y⁻¹`, refusing ill-conditioned `Y`.
pub fn recover_gain(mode: usize, f: &DMatrix<f64>, y: &SymMatrix) -> Result<DMatrix<f64>> {
    let e = eig_sym(y)?;
    let lo = e.values[0];
    let hi = *e.values.last().unwrap();
    if !(lo > 0.0) {
        return Err(Error::GainRecovery {
            mode,
            reason: format!("Y not positive definite (lambda_min {lo:e})"),
        });
    }
    let cond = hi / lo;
    if cond > MAX_Y_CONDITION {
        return Err(Error::GainRecovery {
            mode,
            reason: format!("Y condition number {cond:e} exceeds {MAX_Y_CONDITION:e}"),
        });
    }
    let k = f * y.inverse()?.as_matrix();
    let round_trip = (&k * y.as_matrix() - f).norm();
    if round_trip >= ROUND_TRIP_TOL * f.norm().max(1.0) {
        return Err(Error::GainRecovery {
            mode,
            reason: format!("F - K Y residual {round_trip:e}"),
        });
    }
    Ok(k)
}

fn finish(
    model: &PemAdm,
    vars: &SynthesisVars,
    sol: SdpSolution,
    opts: Option<&SynthesisOptions>,
) -> Result<SynthesisOutcome> {
    match sol.status {
        SdpStatus::Infeasible => {
            return Ok(SynthesisOutcome::Infeasible(Infeasibility {
                worst_constraint: sol.worst_constraint,
                max_constraint_eig: sol.max_constraint_eig,
            }))
        }
        SdpStatus::NumericalFailure => return Err(Error::NumericalFailure(sol.message)),
        SdpStatus::Feasible | SdpStatus::Optimal => {}
    }
    let x = &sol.scalars;
    let nm = model.n_modes();
    let s_mats: Vec<SymMatrix> = vars.s.iter().map(|v| SymMatrix::new(v.value(x))).collect();
    let y_mats: Vec<SymMatrix> = vars.y.iter().map(|v| SymMatrix::new(v.value(x))).collect();
    let f_mats: Vec<DMatrix<f64>> = vars.f.iter().map(|v| v.value(x)).collect();

    for i in 0..nm {
        let c = &model.modes[i].c;
        let res = (c * s_mats[i].as_matrix() - y_mats[i].as_matrix() * c).norm();
        if res >= EQUALITY_TOL {
            return Err(Error::Verification(format!(
                "C S - Y C residual {res:e} in mode {}",
                i + 1
            )));
        }
    }
    let gains = GainSet::new(
        (0..nm)
            .map(|i| recover_gain(i, &f_mats[i], &y_mats[i]))
            .collect::<Result<Vec<_>>>()?,
    );

    let (gamma4, guaranteed_bound) = match (opts, &vars.gamma4) {
        (Some(o), Some(g)) => {
            let g4 = g.value(x)[(0, 0)];
            (Some(g4), Some(o.guaranteed_bound(g4)))
        }
        _ => (None, None),
    };

    let cl = build_closed_loop(model, &gains)?;
    let mut decay_bound = None;
    if let Some(o) = opts {
        for (i, s) in s_mats.iter().enumerate() {
            let e = eig_sym(s)?;
            let (lo, hi) = (e.values[0], *e.values.last().unwrap());
            if hi > 1.0 / o.gamma2_bar + BOX_TOL || lo < 1.0 / o.gamma3_bar - BOX_TOL {
                return Err(Error::Verification(format!(
                    "spectrum of S({}) = [{lo}, {hi}] leaves [1/g3, 1/g2]",
                    i + 1
                )));
            }
        }
        let p_mats = s_mats
            .iter()
            .map(|s| s.inverse())
            .collect::<Result<Vec<_>>>()?;
        for i in 0..nm {
            let tightened =
                lyapunov_lhs(&cl, &p_mats, i).as_matrix() + p_mats[i].as_matrix() * o.gamma1_bar;
            let lam = SymMatrix::new(tightened).max_eig()?;
            let tol = 1e-8 * p_mats[i].max_eig()?.powi(2).max(1.0);
            if lam > tol {
                return Err(Error::Verification(format!(
                    "decay margin violated in mode {} (lambda_max {lam:e})",
                    i + 1
                )));
            }
        }
        let mut c1 = 0.0f64;
        let mut p_min = f64::INFINITY;
        for (i, p) in p_mats.iter().enumerate() {
            c1 = c1.max((cl.w[i].transpose() * p.as_matrix() * &cl.w[i]).trace());
            p_min = p_min.min(p.min_eig()?);
        }
        decay_bound = Some(c1 / (o.gamma1_bar * p_min));
    }
    let certificate = find_certificate(&cl, DEFAULT_STRICTNESS)?.ok_or_else(|| {
        Error::Verification("no certificate for the recovered closed loop".into())
    })?;

    Ok(SynthesisOutcome::Feasible(Box::new(SynthesisResult {
        s_mats,
        y_mats,
        f_mats,
        gains,
        gamma4,
        guaranteed_bound,
        decay_bound,
        certificate,
        newton_steps: sol.newton_steps,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Generator, ModeSystem};

    fn scalar_model(a: f64, b: f64) -> PemAdm {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        PemAdm::new(
            vec![ModeSystem {
                a: one(a),
                b: one(b),
                c: one(1.0),
                d: one(1.0),
            }],
            Generator::trivial(),
        )
        .unwrap()
    }

    #[test]
    fn options_validation() {
        assert!(SynthesisOptions::default().validate().is_ok());
        assert!(SynthesisOptions::new(0.8, 0.1, 0.5).is_err());
        let mut o = SynthesisOptions::default();
        o.gamma3_bar = 2.0;
        assert!(matches!(o.validate(), Err(Error::InvalidOption(_))));
    }

    #[test]
    fn guaranteed_bound_arithmetic() {
        assert!((SynthesisOptions::default().guaranteed_bound(1.0) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn single_mode_block_is_delta() {
        let (prog, _) = build_ssc_program(&scalar_model(1.0, 1.0), 1e-6).unwrap();
        assert_eq!(prog.lmis[0].expr.shape(), (1, 1));
    }

    #[test]
    fn uncontrollable_unstable_is_infeasible() {
        let out = synth_ssc(&scalar_model(1.0, 0.0), 1e-6).unwrap();
        assert!(matches!(out, SynthesisOutcome::Infeasible(_)));
    }

    #[test]
    fn scalar_unstable_plant_stabilized() {
        let r = synth_ssc(&scalar_model(1.0, 1.0), 1e-6)
            .unwrap()
            .feasible()
            .unwrap();
        assert!(1.0 + r.gains.gains[0][(0, 0)] < 0.0);
    }

    #[test]
    fn ill_conditioned_y_rejected() {
        let y = SymMatrix::from_row_slice(2, &[1.0, 0.0, 0.0, 1e-12]);
        let f = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(matches!(
            recover_gain(0, &f, &y),
            Err(Error::GainRecovery { mode: 0, .. })
        ));
    }
}

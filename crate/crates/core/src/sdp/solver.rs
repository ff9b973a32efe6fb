//! Dense primal log-barrier interior-point method for LMI programs.
//!
//! Equalities are eliminated first. A phase-I program (shift every LMI by a
//! common slack `s` and minimize it) produces a strictly feasible point; a
//! pure feasibility program then moves to the analytic center of its
//! feasible set, while an optimization program follows the central path
//! `min t·cᵀx + φ(x)` until the barrier gap `m/t` meets the tolerance.
//!
//! Every scalar is confined to the box `|x_k| < variable_bound` so that the
//! barrier has a minimizer even for homogeneous (cone-shaped) feasible sets.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::eliminate::{eliminate_equalities, AffineLift};
use super::program::LmiProgram;
use crate::error::{Error, Result};
use crate::linalg::lambda_max;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative barrier-gap tolerance for optimization programs.
    pub gap_tol: f64,
    /// Central-path multiplier.
    pub mu: f64,
    /// Box bound on every (reduced) scalar variable.
    pub variable_bound: f64,
    pub max_newton_per_center: usize,
    pub max_outer: usize,
    /// Stop centering once half the squared Newton decrement is below this.
    pub newton_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-7,
            mu: 20.0,
            variable_bound: 1e4,
            max_newton_per_center: 200,
            max_outer: 60,
            newton_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl SdpStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SdpStatus::Optimal | SdpStatus::Feasible)
    }
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    /// Matrix variables in declaration order.
    pub variables: Vec<DMatrix<f64>>,
    /// Flat scalar vector of the original program.
    pub scalars: Vec<f64>,
    pub objective_value: f64,
    /// Largest eigenvalue over all LMI left-hand sides at the solution.
    pub max_constraint_eig: f64,
    /// Label of the LMI attaining `max_constraint_eig`.
    pub worst_constraint: String,
    pub max_equality_residual: f64,
    pub newton_steps: usize,
    pub message: String,
}

/// Solve with default options.
pub fn sdp_solve(prog: &LmiProgram) -> Result<SdpSolution> {
    sdp_solve_with(prog, &SolverOptions::default())
}

pub fn sdp_solve_with(prog: &LmiProgram, opts: &SolverOptions) -> Result<SdpSolution> {
    let reduced = eliminate_equalities(prog)?;
    let eps = prog.effective_strictness();
    let barrier = Barrier::from_program(&reduced.program, eps, opts.variable_bound);
    let mut newton_steps = 0;

    let outcome = run(&barrier, &reduced.program, opts, &mut newton_steps);
    let (status, z, message) = match outcome {
        Ok((status, z)) => (status, z, String::new()),
        Err(msg) => (SdpStatus::NumericalFailure, vec![0.0; barrier.nx], msg),
    };
    Ok(finish(
        prog,
        &reduced.lift,
        status,
        &z,
        newton_steps,
        message,
        eps,
    ))
}

fn finish(
    prog: &LmiProgram,
    lift: &AffineLift,
    mut status: SdpStatus,
    z: &[f64],
    newton_steps: usize,
    mut message: String,
    eps: f64,
) -> SdpSolution {
    let scalars = lift.lift(z);
    let variables = prog.vars.iter().map(|v| v.value(&scalars)).collect();
    let mut max_eig = f64::NEG_INFINITY;
    let mut worst = String::new();
    for l in &prog.lmis {
        let g = l.expr.eval(&scalars);
        let lam = lambda_max(&g).unwrap_or(f64::INFINITY);
        if lam > max_eig {
            max_eig = lam;
            worst = l.label.clone();
        }
    }
    let max_eq = prog
        .eqs
        .iter()
        .map(|e| e.residual(&scalars).abs())
        .fold(0.0, f64::max);
    if status.is_success() {
        if max_eq >= 1e-8 {
            status = SdpStatus::NumericalFailure;
            message = format!("equality residual {max_eq:e} after lifting");
        } else if max_eig > -eps / 2.0 {
            status = SdpStatus::NumericalFailure;
            message = format!("constraint `{worst}` margin lost ({max_eig:e})");
        }
    }
    SdpSolution {
        status,
        variables,
        objective_value: prog.objective_value(&scalars),
        scalars,
        max_constraint_eig: max_eig,
        worst_constraint: worst,
        max_equality_residual: max_eq,
        newton_steps,
        message,
    }
}

/// `Z(x) = c − Σ_j x_j g_j ≻ 0`.
#[derive(Debug, Clone)]
struct Block {
    c: DMatrix<f64>,
    g: Vec<(usize, DMatrix<f64>)>,
}

impl Block {
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut z = self.c.clone();
        for (j, g) in &self.g {
            z -= g * x[*j];
        }
        z
    }
}

#[derive(Debug, Clone)]
struct Barrier {
    nx: usize,
    blocks: Vec<Block>,
    /// Scalars `0..n_boxed` are box-constrained.
    n_boxed: usize,
    bound: f64,
    objective: DVector<f64>,
}

impl Barrier {
    fn from_program(prog: &LmiProgram, eps: f64, bound: f64) -> Self {
        let blocks = prog
            .lmis
            .iter()
            .map(|l| {
                let n = l.expr.rows;
                Block {
                    c: -&l.expr.constant - DMatrix::identity(n, n) * eps,
                    g: l.expr.terms.iter().map(|(&k, m)| (k, m.clone())).collect(),
                }
            })
            .collect();
        Barrier {
            nx: prog.n_scalars,
            blocks,
            n_boxed: prog.n_scalars,
            bound,
            objective: DVector::from_column_slice(&prog.objective),
        }
    }

    /// Same constraints shifted by a slack `s` (new last variable); minimize `s`.
    fn phase_one(&self) -> Barrier {
        let s = self.nx;
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                let n = b.c.nrows();
                let mut g = b.g.clone();
                g.push((s, -DMatrix::identity(n, n)));
                Block { c: b.c.clone(), g }
            })
            .collect();
        let mut objective = DVector::zeros(self.nx + 1);
        objective[s] = 1.0;
        Barrier {
            nx: self.nx + 1,
            blocks,
            n_boxed: self.nx,
            bound: self.bound,
            objective,
        }
    }

    fn degree(&self) -> f64 {
        (self.blocks.iter().map(|b| b.c.nrows()).sum::<usize>() + 2 * self.n_boxed) as f64
    }

    /// Barrier value, or `None` outside the domain.
    fn phi(&self, x: &[f64]) -> Option<f64> {
        let mut val = 0.0;
        for &xk in &x[..self.n_boxed] {
            let (a, b) = (self.bound - xk, self.bound + xk);
            if a <= 0.0 || b <= 0.0 {
                return None;
            }
            val -= a.ln() + b.ln();
        }
        for blk in &self.blocks {
            let chol = Cholesky::new(blk.eval(x))?;
            val -= 2.0
                * chol
                    .l_dirty()
                    .diagonal()
                    .iter()
                    .map(|d| d.ln())
                    .sum::<f64>();
        }
        Some(val)
    }

    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let phi = self.phi(x)?;
        Some(
            t * self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
                + phi,
        )
    }

    fn grad_hess(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.nx;
        let mut grad = &self.objective * t;
        let mut hess = DMatrix::zeros(n, n);
        for k in 0..self.n_boxed {
            let (a, b) = (self.bound - x[k], self.bound + x[k]);
            grad[k] += 1.0 / a - 1.0 / b;
            hess[(k, k)] += 1.0 / (a * a) + 1.0 / (b * b);
        }
        for blk in &self.blocks {
            let chol = Cholesky::new(blk.eval(x))?;
            let zinv = chol.inverse();
            let prods: Vec<(usize, DMatrix<f64>)> =
                blk.g.iter().map(|(j, g)| (*j, &zinv * g)).collect();
            for (a, (ja, pa)) in prods.iter().enumerate() {
                grad[*ja] += pa.trace();
                for (jb, pb) in prods.iter().skip(a) {
                    // tr(Pa Pb) = Σ Pa ∘ Pbᵀ
                    let mut s = 0.0;
                    let dim = pa.nrows();
                    for r in 0..dim {
                        for c in 0..dim {
                            s += pa[(r, c)] * pb[(c, r)];
                        }
                    }
                    hess[(*ja, *jb)] += s;
                    if ja != jb {
                        hess[(*jb, *ja)] += s;
                    }
                }
            }
        }
        Some((grad, hess))
    }
}

enum CenterExit {
    Converged,
    /// Stop predicate fired on an iterate.
    Stopped,
}

/// Damped Newton on `t·cᵀx + φ(x)` starting from a strictly feasible `x`.
fn center(
    bar: &Barrier,
    x: &mut Vec<f64>,
    t: f64,
    opts: &SolverOptions,
    steps: &mut usize,
    stop: &dyn Fn(&[f64]) -> bool,
) -> std::result::Result<CenterExit, String> {
    for _ in 0..opts.max_newton_per_center {
        let (grad, hess) = bar
            .grad_hess(x, t)
            .ok_or("iterate left the barrier domain")?;
        let dx = solve_spd(hess, &grad).ok_or("singular Newton system")?;
        let dx = -dx;
        let decrement = -grad.dot(&dx);
        *steps += 1;
        if !decrement.is_finite() {
            return Err("non-finite Newton decrement".into());
        }
        if decrement / 2.0 <= opts.newton_tol {
            return Ok(CenterExit::Converged);
        }
        let f0 = bar.value(x, t).ok_or("iterate left the barrier domain")?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = x
                .iter()
                .zip(dx.iter())
                .map(|(a, d)| a + alpha * d)
                .collect();
            if let Some(f1) = bar.value(&trial, t) {
                if f1 <= f0 - 0.25 * alpha * decrement {
                    *x = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            // No descent at machine precision: treat as centered.
            return Ok(CenterExit::Converged);
        }
        if stop(x) {
            return Ok(CenterExit::Stopped);
        }
    }
    Ok(CenterExit::Converged)
}

fn solve_spd(mut h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if h.nrows() == 0 {
        return Some(DVector::zeros(0));
    }
    if let Some(ch) = Cholesky::<f64, Dyn>::new(h.clone()) {
        return Some(ch.solve(g));
    }
    let reg = 1e-12 * h.diagonal().amax().max(1e-300);
    for k in 0..h.nrows() {
        h[(k, k)] += reg;
    }
    if let Some(ch) = Cholesky::<f64, Dyn>::new(h.clone()) {
        return Some(ch.solve(g));
    }
    h.lu().solve(g)
}

fn run(
    bar: &Barrier,
    prog: &LmiProgram,
    opts: &SolverOptions,
    steps: &mut usize,
) -> std::result::Result<(SdpStatus, Vec<f64>), String> {
    let feasibility = prog.is_feasibility();
    let success = if feasibility {
        SdpStatus::Feasible
    } else {
        SdpStatus::Optimal
    };
    if bar.nx == 0 {
        let ok = bar.phi(&[]).is_some();
        return Ok((if ok { success } else { SdpStatus::Infeasible }, vec![]));
    }

    let mut x = vec![0.0; bar.nx];
    if bar.phi(&x).is_none() {
        match phase_one(bar, opts, steps)? {
            Ok(x0) => x = x0,
            // Report constraints at the least-infeasible point found.
            Err(x_best) => return Ok((SdpStatus::Infeasible, x_best)),
        }
    }

    if feasibility {
        center(bar, &mut x, 0.0, opts, steps, &|_| false)?;
        return Ok((success, x));
    }

    let m = bar.degree();
    let mut t = 1.0;
    for _ in 0..opts.max_outer {
        center(bar, &mut x, t, opts, steps, &|_| false)?;
        let obj: f64 = bar
            .objective
            .iter()
            .zip(&x)
            .map(|(c, v)| c * v)
            .sum::<f64>()
            + prog.objective_constant;
        if m / t <= opts.gap_tol * obj.abs().max(1.0) {
            return Ok((success, x));
        }
        t *= opts.mu;
    }
    Err(format!(
        "barrier gap did not close after {} outer iterations",
        opts.max_outer
    ))
}

/// `Ok(x)` is strictly feasible; `Err(x)` is the last phase-I iterate of a
/// (numerically) infeasible program.
type PhaseOneResult = std::result::Result<Vec<f64>, Vec<f64>>;

fn phase_one(
    bar: &Barrier,
    opts: &SolverOptions,
    steps: &mut usize,
) -> std::result::Result<PhaseOneResult, String> {
    let p1 = bar.phase_one();
    let x0 = vec![0.0; bar.nx];
    let mut shift = 0.0f64;
    for blk in &bar.blocks {
        let z = blk.eval(&x0);
        let lmin = crate::linalg::lambda_min(&z).map_err(|e| e.to_string())?;
        shift = shift.max(-lmin);
    }
    let mut x = x0;
    x.push(shift + 1.0 + shift.abs() * 0.1);
    let s_idx = bar.nx;
    let m = p1.degree();
    let mut t = 1.0 / x[s_idx].abs().max(1.0);
    let stop = |x: &[f64]| x[s_idx] < 0.0;
    for _ in 0..opts.max_outer * 2 {
        match center(&p1, &mut x, t, opts, steps, &stop)? {
            CenterExit::Stopped => {
                x.truncate(bar.nx);
                return Ok(Ok(x));
            }
            CenterExit::Converged => {
                if x[s_idx] < 0.0 {
                    x.truncate(bar.nx);
                    return Ok(Ok(x));
                }
                if x[s_idx] - m / t > 0.0 {
                    x.truncate(bar.nx);
                    return Ok(Err(x));
                }
            }
        }
        if m / t < 1e-13 * x[s_idx].abs().max(1.0) {
            break;
        }
        t *= opts.mu;
    }
    // The central path stalled at a non-negative slack.
    x.truncate(bar.nx);
    Ok(Err(x))
}

impl SdpSolution {
    pub fn into_result(self) -> Result<SdpSolution> {
        match self.status {
            SdpStatus::NumericalFailure => Err(Error::NumericalFailure(self.message)),
            _ => Ok(self),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdp::program::MatExpr;

    fn lyapunov_program(a: &DMatrix<f64>) -> LmiProgram {
        let n = a.nrows();
        let mut prog = LmiProgram::new(1e-6);
        let p = prog.add_sym_var("P", n);
        let pe = MatExpr::var(&p);
        prog.add_lmi("lyap", pe.premul(&a.transpose()).sym_sum());
        prog.add_lmi("P>0", -pe);
        prog
    }

    #[test]
    fn hurwitz_lyapunov_feasible() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let sol = sdp_solve(&lyapunov_program(&a)).unwrap();
        assert_eq!(sol.status, SdpStatus::Feasible, "{}", sol.message);
        let p = &sol.variables[0];
        assert!(crate::linalg::lambda_min(p).unwrap() > 0.0);
        let lhs = a.transpose() * p + p * &a;
        assert!(lambda_max(&lhs).unwrap() < -1e-6);
    }

    #[test]
    fn unstable_lyapunov_infeasible() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let sol = sdp_solve(&lyapunov_program(&a)).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn scalar_minimization() {
        // minimize x subject to 1 - x ⪯ -ε, i.e. x ≥ 1 + ε.
        let mut prog = LmiProgram::new(1e-6);
        let x = prog.add_full_var("x", 1, 1);
        prog.add_lmi("x>=1", MatExpr::scalar(1.0) - MatExpr::var(&x));
        prog.minimize(&MatExpr::var(&x));
        let sol = sdp_solve(&prog).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(
            (sol.objective_value - 1.0).abs() < 1e-5,
            "{}",
            sol.objective_value
        );
    }

    #[test]
    fn matrix_minimization_with_equality() {
        // minimize tr(X) s.t. X ⪰ [[2,1],[1,2]], X12 = 0.5 (equality).
        let mut prog = LmiProgram::new(1e-8);
        let x = prog.add_sym_var("X", 2);
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        prog.add_lmi("X>=C", MatExpr::constant(c) - MatExpr::var(&x));
        prog.eqs.push(crate::sdp::program::LinearEq {
            label: "x12".into(),
            coeffs: vec![(1, 1.0)],
            rhs: 0.5,
        });
        prog.minimize(&MatExpr::var(&x).trace());
        let sol = sdp_solve(&prog).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal, "{}", sol.message);
        // X - C = [[a, -0.5], [-0.5, b]] ⪰ 0 with a b ≥ 1/4: min a + b = 1.
        assert!(
            (sol.objective_value - 5.0).abs() < 1e-4,
            "{}",
            sol.objective_value
        );
        assert!((sol.variables[0][(0, 1)] - 0.5).abs() < 1e-10);
    }
}

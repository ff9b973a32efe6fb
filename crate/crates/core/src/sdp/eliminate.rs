//! Removal of scalar equality constraints by nullspace parametrization.
//!
//! The equalities `E x = e` are reduced to row-echelon form one constraint at
//! a time, so the first constraint found inconsistent with its predecessors
//! is the one reported. The solution set is then written `x = x₀ + N z` with
//! orthonormal `N` and `x₀ ⟂ range(N)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::program::{LmiConstraint, LmiProgram, MatExpr, VarShape};
use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-10;

/// `x = offset + basis · z`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLift {
    pub offset: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl AffineLift {
    pub fn identity(n: usize) -> Self {
        AffineLift {
            offset: DVector::zeros(n),
            basis: DMatrix::identity(n, n),
        }
    }

    pub fn lift(&self, z: &[f64]) -> Vec<f64> {
        let x = &self.offset + &self.basis * DVector::from_column_slice(z);
        x.iter().copied().collect()
    }

    pub fn reduced_dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// A program without equalities plus the map back to the original scalars.
#[derive(Debug, Clone)]
pub struct EliminatedProgram {
    pub program: LmiProgram,
    pub lift: AffineLift,
}

struct EchelonRow {
    coeffs: DVector<f64>,
    rhs: f64,
    pivot: usize,
}

pub fn eliminate_equalities(prog: &LmiProgram) -> Result<EliminatedProgram> {
    prog.check()?;
    let n = prog.n_scalars;
    if prog.eqs.is_empty() {
        return Ok(EliminatedProgram {
            program: prog.clone(),
            lift: AffineLift::identity(n),
        });
    }

    let coeff_scale = prog
        .eqs
        .iter()
        .flat_map(|e| e.coeffs.iter().map(|c| c.1.abs()))
        .fold(1.0f64, f64::max);
    let tol = PIVOT_TOL * coeff_scale;

    let mut rows: Vec<EchelonRow> = Vec::new();
    for eq in &prog.eqs {
        let mut v: DVector<f64> = DVector::zeros(n);
        for &(k, c) in &eq.coeffs {
            v[k] += c;
        }
        let mut rhs = eq.rhs;
        for r in &rows {
            let f = v[r.pivot];
            if f != 0.0 {
                v.axpy(-f, &r.coeffs, 1.0);
                rhs -= f * r.rhs;
            }
        }
        let (pivot, pmax) = v.iter().enumerate().fold((0, 0.0f64), |acc, (k, x)| {
            if x.abs() > acc.1 {
                (k, x.abs())
            } else {
                acc
            }
        });
        if pmax <= tol {
            if rhs.abs() > tol.max(1e-10 * eq.rhs.abs()) {
                return Err(Error::InconsistentEquality {
                    label: eq.label.clone(),
                    residual: rhs,
                });
            }
            continue;
        }
        let scale = v[pivot];
        v /= scale;
        rhs /= scale;
        v[pivot] = 1.0;
        for r in rows.iter_mut() {
            let f = r.coeffs[pivot];
            if f != 0.0 {
                r.coeffs.axpy(-f, &v, 1.0);
                r.coeffs[pivot] = 0.0;
                r.rhs -= f * rhs;
            }
        }
        rows.push(EchelonRow {
            coeffs: v,
            rhs,
            pivot,
        });
    }

    let pivots: Vec<usize> = rows.iter().map(|r| r.pivot).collect();
    let free: Vec<usize> = (0..n).filter(|k| !pivots.contains(k)).collect();

    let mut offset = DVector::zeros(n);
    for r in &rows {
        offset[r.pivot] = r.rhs;
    }
    let mut basis = DMatrix::zeros(n, free.len());
    for (j, &f) in free.iter().enumerate() {
        basis[(f, j)] = 1.0;
        for r in &rows {
            basis[(r.pivot, j)] = -r.coeffs[f];
        }
    }
    // Modified Gram–Schmidt; the free-variable basis is full rank.
    for j in 0..basis.ncols() {
        for k in 0..j {
            let proj = basis.column(k).dot(&basis.column(j));
            let ck = basis.column(k).clone_owned();
            basis.column_mut(j).axpy(-proj, &ck, 1.0);
        }
        let nrm = basis.column(j).norm();
        basis.column_mut(j).unscale_mut(nrm);
    }
    let coords = basis.transpose() * &offset;
    offset -= &basis * coords;

    let lift = AffineLift { offset, basis };
    Ok(EliminatedProgram {
        program: reduce(prog, &lift),
        lift,
    })
}

fn reduce(prog: &LmiProgram, lift: &AffineLift) -> LmiProgram {
    let nz = lift.reduced_dim();
    let mut out = LmiProgram::new(prog.strictness);
    if nz > 0 {
        out.add_var("z", VarShape::Full(nz, 1));
    }
    out.lmis = prog
        .lmis
        .iter()
        .map(|l| LmiConstraint {
            label: l.label.clone(),
            expr: substitute(&l.expr, lift),
        })
        .collect();
    let c = DVector::from_column_slice(&prog.objective);
    out.objective = (lift.basis.transpose() * &c).iter().copied().collect();
    out.objective_constant = prog.objective_constant + c.dot(&lift.offset);
    out
}

/// Rewrite an expression over `x` as one over `z`.
pub fn substitute(expr: &MatExpr, lift: &AffineLift) -> MatExpr {
    let mut constant = expr.constant.clone();
    for (&k, m) in &expr.terms {
        constant += m * lift.offset[k];
    }
    let mut terms = BTreeMap::new();
    for j in 0..lift.reduced_dim() {
        let mut acc = DMatrix::zeros(expr.rows, expr.cols);
        let mut any = false;
        for (&k, m) in &expr.terms {
            let w = lift.basis[(k, j)];
            if w != 0.0 {
                acc += m * w;
                any = true;
            }
        }
        if any && acc.iter().any(|v| v.abs() > 1e-15) {
            terms.insert(j, acc);
        }
    }
    MatExpr {
        rows: expr.rows,
        cols: expr.cols,
        constant,
        terms,
    }
}

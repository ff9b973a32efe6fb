//! Affine matrix expressions over scalar decision variables, and the LMI
//! program that collects them.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Shape of a matrix decision variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    /// Symmetric `n × n`, parametrized by its upper triangle.
    Symmetric(usize),
    /// General `rows × cols`.
    Full(usize, usize),
}

impl VarShape {
    pub fn n_scalars(&self) -> usize {
        match *self {
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Full(r, c) => r * c,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Symmetric(n) => (n, n),
            VarShape::Full(r, c) => (r, c),
        }
    }
}

/// A named matrix variable occupying `shape.n_scalars()` consecutive scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct MatVar {
    pub name: String,
    pub shape: VarShape,
    pub offset: usize,
}

impl MatVar {
    /// Basis matrix of each scalar, in scalar order.
    fn basis(&self) -> Vec<DMatrix<f64>> {
        match self.shape {
            VarShape::Symmetric(n) => {
                let mut out = Vec::with_capacity(self.shape.n_scalars());
                for r in 0..n {
                    for c in r..n {
                        let mut e = DMatrix::zeros(n, n);
                        e[(r, c)] = 1.0;
                        e[(c, r)] = 1.0;
                        out.push(e);
                    }
                }
                out
            }
            VarShape::Full(rows, cols) => {
                let mut out = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for c in 0..cols {
                        let mut e = DMatrix::zeros(rows, cols);
                        e[(r, c)] = 1.0;
                        out.push(e);
                    }
                }
                out
            }
        }
    }

    /// Rebuild the matrix value from the global scalar vector.
    pub fn value(&self, scalars: &[f64]) -> DMatrix<f64> {
        let (r, c) = self.shape.dims();
        let mut out = DMatrix::zeros(r, c);
        for (k, e) in self.basis().iter().enumerate() {
            out += e * scalars[self.offset + k];
        }
        out
    }

    /// Write a matrix value into the global scalar vector (symmetric part for
    /// symmetric variables).
    pub fn store(&self, value: &DMatrix<f64>, scalars: &mut [f64]) {
        match self.shape {
            VarShape::Symmetric(n) => {
                let mut k = self.offset;
                for r in 0..n {
                    for c in r..n {
                        scalars[k] = 0.5 * (value[(r, c)] + value[(c, r)]);
                        k += 1;
                    }
                }
            }
            VarShape::Full(rows, cols) => {
                let mut k = self.offset;
                for r in 0..rows {
                    for c in 0..cols {
                        scalars[k] = value[(r, c)];
                        k += 1;
                    }
                }
            }
        }
    }
}

/// `constant + Σ_k x_k · terms[k]` for a fixed output shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    pub rows: usize,
    pub cols: usize,
    pub constant: DMatrix<f64>,
    pub terms: BTreeMap<usize, DMatrix<f64>>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        MatExpr {
            rows,
            cols,
            constant: DMatrix::zeros(rows, cols),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        MatExpr {
            rows: m.nrows(),
            cols: m.ncols(),
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(DMatrix::from_element(1, 1, v))
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// The variable itself.
    pub fn var(v: &MatVar) -> Self {
        let (rows, cols) = v.shape.dims();
        let mut terms = BTreeMap::new();
        for (k, e) in v.basis().into_iter().enumerate() {
            terms.insert(v.offset + k, e);
        }
        MatExpr {
            rows,
            cols,
            constant: DMatrix::zeros(rows, cols),
            terms,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn transpose(&self) -> Self {
        MatExpr {
            rows: self.cols,
            cols: self.rows,
            constant: self.constant.transpose(),
            terms: self
                .terms
                .iter()
                .map(|(&k, m)| (k, m.transpose()))
                .collect(),
        }
    }

    /// `left · self`.
    pub fn premul(&self, left: &DMatrix<f64>) -> Self {
        assert_eq!(left.ncols(), self.rows, "premul shape mismatch");
        MatExpr {
            rows: left.nrows(),
            cols: self.cols,
            constant: left * &self.constant,
            terms: self.terms.iter().map(|(&k, m)| (k, left * m)).collect(),
        }
        .pruned()
    }

    /// `self · right`.
    pub fn postmul(&self, right: &DMatrix<f64>) -> Self {
        assert_eq!(right.nrows(), self.cols, "postmul shape mismatch");
        MatExpr {
            rows: self.rows,
            cols: right.ncols(),
            constant: &self.constant * right,
            terms: self.terms.iter().map(|(&k, m)| (k, m * right)).collect(),
        }
        .pruned()
    }

    pub fn scale(&self, s: f64) -> Self {
        MatExpr {
            rows: self.rows,
            cols: self.cols,
            constant: &self.constant * s,
            terms: self.terms.iter().map(|(&k, m)| (k, m * s)).collect(),
        }
        .pruned()
    }

    /// `self + selfᵀ`.
    pub fn sym_sum(&self) -> Self {
        self.clone() + self.transpose()
    }

    pub fn trace(&self) -> Self {
        assert_eq!(self.rows, self.cols, "trace of a non-square expression");
        let mut out = MatExpr::scalar(self.constant.trace());
        for (&k, m) in &self.terms {
            out.terms.insert(k, DMatrix::from_element(1, 1, m.trace()));
        }
        out.pruned()
    }

    /// Assemble a block expression. Row heights come from the first column
    /// and widths from the first row.
    pub fn blocks(grid: Vec<Vec<MatExpr>>) -> Self {
        let heights: Vec<usize> = grid.iter().map(|row| row[0].rows).collect();
        let widths: Vec<usize> = grid[0].iter().map(|b| b.cols).collect();
        let rows = heights.iter().sum();
        let cols = widths.iter().sum();
        let mut out = MatExpr::zeros(rows, cols);
        let mut r0 = 0;
        for (bi, row) in grid.iter().enumerate() {
            assert_eq!(row.len(), widths.len(), "ragged block grid");
            let mut c0 = 0;
            for (bj, b) in row.iter().enumerate() {
                assert_eq!(
                    (b.rows, b.cols),
                    (heights[bi], widths[bj]),
                    "block shape mismatch"
                );
                out.constant
                    .view_mut((r0, c0), (b.rows, b.cols))
                    .copy_from(&b.constant);
                for (&k, m) in &b.terms {
                    let t = out
                        .terms
                        .entry(k)
                        .or_insert_with(|| DMatrix::zeros(rows, cols));
                    t.view_mut((r0, c0), (b.rows, b.cols)).copy_from(m);
                }
                c0 += widths[bj];
            }
            r0 += heights[bi];
        }
        out.pruned()
    }

    /// Block-diagonal assembly.
    pub fn block_diag(parts: Vec<MatExpr>) -> Self {
        let k = parts.len();
        let mut grid = Vec::with_capacity(k);
        for (i, p) in parts.iter().enumerate() {
            let row = (0..k)
                .map(|j| {
                    if i == j {
                        p.clone()
                    } else {
                        MatExpr::zeros(p.rows, parts[j].cols)
                    }
                })
                .collect();
            grid.push(row);
        }
        MatExpr::blocks(grid)
    }

    /// Evaluate at a scalar vector.
    pub fn eval(&self, scalars: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (&k, m) in &self.terms {
            out += m * scalars[k];
        }
        out
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (&self.constant - self.constant.transpose()).amax() <= tol
            && self
                .terms
                .values()
                .all(|m| (m - m.transpose()).amax() <= tol)
    }

    fn pruned(mut self) -> Self {
        self.terms.retain(|_, m| m.iter().any(|v| *v != 0.0));
        self
    }
}

impl Add for MatExpr {
    type Output = MatExpr;
    fn add(mut self, rhs: MatExpr) -> MatExpr {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        self.constant += &rhs.constant;
        for (k, m) in rhs.terms {
            match self.terms.get_mut(&k) {
                Some(t) => *t += m,
                None => {
                    self.terms.insert(k, m);
                }
            }
        }
        self.pruned()
    }
}

impl Sub for MatExpr {
    type Output = MatExpr;
    fn sub(self, rhs: MatExpr) -> MatExpr {
        self + (-rhs)
    }
}

impl Neg for MatExpr {
    type Output = MatExpr;
    fn neg(self) -> MatExpr {
        self.scale(-1.0)
    }
}

impl Mul<f64> for MatExpr {
    type Output = MatExpr;
    fn mul(self, s: f64) -> MatExpr {
        self.scale(s)
    }
}

/// A symmetric affine constraint `G(x) ⪯ −ε I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiConstraint {
    pub label: String,
    pub expr: MatExpr,
}

/// A scalar equality `Σ coeffs · x = rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearEq {
    pub label: String,
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl LinearEq {
    pub fn residual(&self, scalars: &[f64]) -> f64 {
        self.coeffs
            .iter()
            .map(|&(k, c)| c * scalars[k])
            .sum::<f64>()
            - self.rhs
    }
}

/// Linear-objective program over matrix variables with LMI and scalar
/// equality constraints. Every LMI reads `G(x) ⪯ −ε I`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiProgram {
    pub vars: Vec<MatVar>,
    pub n_scalars: usize,
    /// Minimized; all zeros for a pure feasibility problem.
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub lmis: Vec<LmiConstraint>,
    pub eqs: Vec<LinearEq>,
    pub strictness: f64,
}

pub const DEFAULT_STRICTNESS: f64 = 1e-6;

impl LmiProgram {
    pub fn new(strictness: f64) -> Self {
        LmiProgram {
            vars: Vec::new(),
            n_scalars: 0,
            objective: Vec::new(),
            objective_constant: 0.0,
            lmis: Vec::new(),
            eqs: Vec::new(),
            strictness,
        }
    }

    pub fn var_dims(&self) -> Vec<(usize, usize)> {
        self.vars.iter().map(|v| v.shape.dims()).collect()
    }

    pub fn add_var(&mut self, name: impl Into<String>, shape: VarShape) -> MatVar {
        let v = MatVar {
            name: name.into(),
            shape,
            offset: self.n_scalars,
        };
        self.n_scalars += shape.n_scalars();
        self.objective.resize(self.n_scalars, 0.0);
        self.vars.push(v.clone());
        v
    }

    pub fn add_sym_var(&mut self, name: impl Into<String>, n: usize) -> MatVar {
        self.add_var(name, VarShape::Symmetric(n))
    }

    pub fn add_full_var(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> MatVar {
        self.add_var(name, VarShape::Full(rows, cols))
    }

    /// Require `expr ⪯ −ε I`; `expr` must be symmetric.
    pub fn add_lmi(&mut self, label: impl Into<String>, expr: MatExpr) {
        self.lmis.push(LmiConstraint {
            label: label.into(),
            expr,
        });
    }

    /// Require every entry of `expr` to vanish.
    pub fn add_matrix_eq(&mut self, label: &str, expr: &MatExpr) {
        for r in 0..expr.rows {
            for c in 0..expr.cols {
                let coeffs: Vec<(usize, f64)> = expr
                    .terms
                    .iter()
                    .filter_map(|(&k, m)| (m[(r, c)] != 0.0).then_some((k, m[(r, c)])))
                    .collect();
                let rhs = -expr.constant[(r, c)];
                if coeffs.is_empty() && rhs == 0.0 {
                    continue;
                }
                self.eqs.push(LinearEq {
                    label: format!("{label}[{r},{c}]"),
                    coeffs,
                    rhs,
                });
            }
        }
    }

    /// Minimize a scalar (1×1) affine expression.
    pub fn minimize(&mut self, expr: &MatExpr) {
        assert_eq!(expr.shape(), (1, 1), "objective must be scalar");
        self.objective = vec![0.0; self.n_scalars];
        for (&k, m) in &expr.terms {
            self.objective[k] = m[(0, 0)];
        }
        self.objective_constant = expr.constant[(0, 0)];
    }

    pub fn is_feasibility(&self) -> bool {
        self.objective.iter().all(|&c| c == 0.0)
    }

    pub fn objective_value(&self, scalars: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .zip(scalars)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Strictness actually enforced: `ε · max(1, largest |constant entry|)`.
    pub fn effective_strictness(&self) -> f64 {
        let scale = self
            .lmis
            .iter()
            .map(|l| crate::linalg::max_abs(&l.expr.constant))
            .fold(1.0f64, f64::max);
        self.strictness * scale
    }

    pub fn check(&self) -> Result<()> {
        if !(self.strictness > 0.0) {
            return Err(Error::MalformedProgram(
                "strictness must be positive".into(),
            ));
        }
        if self.objective.len() != self.n_scalars {
            return Err(Error::MalformedProgram("objective length mismatch".into()));
        }
        for l in &self.lmis {
            if !l.expr.is_symmetric(1e-12) {
                return Err(Error::MalformedProgram(format!(
                    "constraint `{}` is not symmetric",
                    l.label
                )));
            }
            if l.expr.terms.keys().any(|&k| k >= self.n_scalars) {
                return Err(Error::MalformedProgram(format!(
                    "constraint `{}` references unknown scalar",
                    l.label
                )));
            }
        }
        for e in &self.eqs {
            if e.coeffs.iter().any(|&(k, _)| k >= self.n_scalars) {
                return Err(Error::MalformedProgram(format!(
                    "equality `{}` references unknown scalar",
                    e.label
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_var_roundtrip() {
        let mut prog = LmiProgram::new(1e-6);
        let _f = prog.add_full_var("F", 1, 2);
        let s = prog.add_sym_var("S", 2);
        let mut x = vec![0.0; prog.n_scalars];
        let val = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        s.store(&val, &mut x);
        assert_eq!(s.value(&x), val);
        assert_eq!(MatExpr::var(&s).eval(&x), val);
    }

    #[test]
    fn products_and_trace() {
        let mut prog = LmiProgram::new(1e-6);
        let s = prog.add_sym_var("S", 2);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let expr = MatExpr::var(&s).premul(&a).sym_sum();
        let mut x = vec![0.0; prog.n_scalars];
        let sv = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 2.0]);
        s.store(&sv, &mut x);
        let direct = &a * &sv + &sv * a.transpose();
        assert!((expr.eval(&x) - direct).amax() < 1e-14);
        assert!(expr.is_symmetric(1e-14));
        assert_eq!(MatExpr::var(&s).trace().eval(&x)[(0, 0)], 3.0);
    }

    #[test]
    fn matrix_equality_expands_entries() {
        let mut prog = LmiProgram::new(1e-6);
        let s = prog.add_sym_var("S", 2);
        let y = prog.add_sym_var("Y", 2);
        let c = DMatrix::identity(2, 2);
        let e = MatExpr::var(&s).premul(&c) - MatExpr::var(&y).postmul(&c);
        prog.add_matrix_eq("CS-YC", &e);
        assert_eq!(prog.eqs.len(), 4);
    }

    #[test]
    fn block_assembly_evaluates() {
        let mut prog = LmiProgram::new(1e-6);
        let s = prog.add_sym_var("S", 1);
        let x = vec![2.0];
        let e = MatExpr::blocks(vec![
            vec![MatExpr::var(&s), MatExpr::scalar(1.0)],
            vec![MatExpr::scalar(1.0), MatExpr::var(&s) * -1.0],
        ]);
        assert_eq!(
            e.eval(&x),
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, -2.0])
        );
        let d = MatExpr::block_diag(vec![MatExpr::var(&s), MatExpr::identity(2)]);
        assert_eq!(
            d.eval(&x),
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 1.0, 1.0]))
        );
    }
}

//! The mode-switched driving model: per-mode `(A, B, C, D)` matrices driven
//! by a continuous-time Markov chain, plus the closed loop obtained under
//! mode-dependent static output feedback `u = K(i) y`.

use std::fmt;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must vanish to this absolute tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Row-sum defects up to this size are repaired by recomputing the diagonal.
pub const ROW_SUM_REPAIR_TOL: f64 = 1e-9;

/// Transition-rate matrix `[q_ij]` of a continuous-time Markov chain (1/s).
/// Serialized as a list of rows and validated on deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Generator {
    rates: DMatrix<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for Generator {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Generator::from_rows(&rows)
    }
}

impl From<Generator> for Vec<Vec<f64>> {
    fn from(g: Generator) -> Self {
        g.to_rows()
    }
}

impl Generator {
    /// Validating constructor. Small row-sum defects are repaired.
    pub fn new(rates: DMatrix<f64>) -> Result<Self> {
        let g = Generator { rates };
        let violations = g.violations();
        if violations.is_empty() {
            return Ok(g);
        }
        if violations
            .iter()
            .all(|v| v.kind == ViolationKind::RowSum && v.magnitude <= ROW_SUM_REPAIR_TOL)
        {
            warn!("generator row sums off by <= {ROW_SUM_REPAIR_TOL:e}; diagonal recomputed");
            return Ok(g.repaired());
        }
        Err(Error::InvalidModel(
            violations
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidModel("generator must be square".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    /// Build without any validation; used to describe invalid inputs.
    pub fn unchecked(rates: DMatrix<f64>) -> Self {
        Generator { rates }
    }

    /// The single-mode chain `[0]`.
    pub fn trivial() -> Self {
        Generator {
            rates: DMatrix::zeros(1, 1),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.rates.nrows()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    /// Total exit rate `-q_ii`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        -self.rates[(i, i)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_modes())
            .map(|i| self.rates.row(i).iter().copied().collect())
            .collect()
    }

    fn repaired(mut self) -> Self {
        for i in 0..self.n_modes() {
            let off: f64 = (0..self.n_modes())
                .filter(|&j| j != i)
                .map(|j| self.rates[(i, j)])
                .sum();
            self.rates[(i, i)] = -off;
        }
        self
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let n = self.rates.nrows();
        if self.rates.ncols() != n || n == 0 {
            out.push(Violation {
                mode: None,
                field: "generator",
                kind: ViolationKind::Dimension,
                magnitude: 0.0,
                message: format!(
                    "generator is {}x{}, expected square and non-empty",
                    n,
                    self.rates.ncols()
                ),
            });
            return out;
        }
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let q = self.rates[(i, j)];
                if !q.is_finite() {
                    out.push(Violation {
                        mode: Some(i),
                        field: "generator",
                        kind: ViolationKind::NonFinite,
                        magnitude: f64::INFINITY,
                        message: format!("entry ({i}, {j}) is not finite"),
                    });
                    continue;
                }
                if j != i && q < 0.0 {
                    out.push(Violation {
                        mode: Some(i),
                        field: "generator",
                        kind: ViolationKind::NegativeRate,
                        magnitude: -q,
                        message: format!("off-diagonal rate ({i}, {j}) = {q} is negative"),
                    });
                }
                sum += q;
            }
            if sum.is_finite() && sum.abs() > ROW_SUM_TOL {
                out.push(Violation {
                    mode: Some(i),
                    field: "generator",
                    kind: ViolationKind::RowSum,
                    magnitude: sum.abs(),
                    message: format!("row {i} sums to {sum}"),
                });
            }
        }
        out
    }
}

/// Matrices of one mode: `dx = (A x + B u) dt`, `y = C x + D ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// The full jump system. Fields are public so that invalid models can be
/// described and then reported by [`validate_model`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PemAdm {
    pub modes: Vec<ModeSystem>,
    pub generator: Generator,
    pub state_dim: usize,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl PemAdm {
    /// Build and validate; dimensions are taken from the first mode.
    pub fn new(modes: Vec<ModeSystem>, generator: Generator) -> Result<Self> {
        let first = modes
            .first()
            .ok_or_else(|| Error::InvalidModel("no modes".into()))?;
        let model = PemAdm {
            state_dim: first.a.nrows(),
            input_dim: first.b.ncols(),
            output_dim: first.c.nrows(),
            modes,
            generator,
        };
        let report = validate_model(&model);
        if report.is_ok() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(report.to_string()))
        }
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }
}

/// Per-mode output-feedback gains `K(i)`, each `m × p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub gains: Vec<DMatrix<f64>>,
}

impl GainSet {
    pub fn new(gains: Vec<DMatrix<f64>>) -> Self {
        GainSet { gains }
    }

    pub fn zeros(model: &PemAdm) -> Self {
        GainSet {
            gains: vec![DMatrix::zeros(model.input_dim, model.output_dim); model.n_modes()],
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }
}

/// `dx = A_cl(r) x dt + W(r) dw` with `A_cl = A + B K C`, `W = B K D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoop {
    pub a_cl: Vec<DMatrix<f64>>,
    pub w: Vec<DMatrix<f64>>,
    pub generator: Generator,
}

impl ClosedLoop {
    /// Direct constructor for loops that do not come from a `PemAdm`.
    pub fn new(
        a_cl: Vec<DMatrix<f64>>,
        w: Vec<DMatrix<f64>>,
        generator: Generator,
    ) -> Result<Self> {
        if a_cl.len() != generator.n_modes() || w.len() != generator.n_modes() {
            return Err(Error::InvalidModel(format!(
                "closed loop has {} drift / {} noise matrices for {} modes",
                a_cl.len(),
                w.len(),
                generator.n_modes()
            )));
        }
        let n = a_cl[0].nrows();
        let p = w[0].ncols();
        for (i, (a, wi)) in a_cl.iter().zip(&w).enumerate() {
            if a.shape() != (n, n) {
                return Err(dim_err(i, "a_cl", a, (n, n)));
            }
            if wi.shape() != (n, p) {
                return Err(dim_err(i, "w", wi, (n, p)));
            }
        }
        Ok(ClosedLoop { a_cl, w, generator })
    }

    /// Scalar single-mode loop `dx = a x dt + σ dw`.
    pub fn scalar(a: f64, sigma: f64) -> Self {
        ClosedLoop {
            a_cl: vec![DMatrix::from_element(1, 1, a)],
            w: vec![DMatrix::from_element(1, 1, sigma)],
            generator: Generator::trivial(),
        }
    }

    pub fn n_modes(&self) -> usize {
        self.a_cl.len()
    }

    pub fn state_dim(&self) -> usize {
        self.a_cl[0].nrows()
    }

    pub fn noise_dim(&self) -> usize {
        self.w[0].ncols()
    }
}

fn dim_err(mode: usize, field: &'static str, m: &DMatrix<f64>, expected: (usize, usize)) -> Error {
    Error::Dimension {
        mode,
        field,
        got: format!("{}x{}", m.nrows(), m.ncols()),
        expected: format!("{}x{}", expected.0, expected.1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    RowSum,
    NegativeRate,
    NonFinite,
}

/// One violated model invariant. `mode` is 0-based; `Display` prints it 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub mode: Option<usize>,
    pub field: &'static str,
    pub kind: ViolationKind,
    pub magnitude: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            Some(i) => write!(f, "mode {} {}: {}", i + 1, self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Report every violated invariant of `model`. Never panics.
pub fn validate_model(model: &PemAdm) -> ValidationReport {
    let mut violations = model.generator.violations();
    let (n, m, p) = (model.state_dim, model.input_dim, model.output_dim);
    if model.modes.len() != model.generator.n_modes() {
        violations.push(Violation {
            mode: None,
            field: "modes",
            kind: ViolationKind::Dimension,
            magnitude: 0.0,
            message: format!(
                "modes.len != n_modes ({} modes, generator has {})",
                model.modes.len(),
                model.generator.n_modes()
            ),
        });
    }
    if n == 0 || m == 0 || p == 0 {
        violations.push(Violation {
            mode: None,
            field: "dims",
            kind: ViolationKind::Dimension,
            magnitude: 0.0,
            message: format!("dimensions (n, m, p) = ({n}, {m}, {p}) must be positive"),
        });
    }
    for (i, mode) in model.modes.iter().enumerate() {
        let checks: [(&'static str, &DMatrix<f64>, (usize, usize)); 4] = [
            ("A", &mode.a, (n, n)),
            ("B", &mode.b, (n, m)),
            ("C", &mode.c, (p, n)),
            ("D", &mode.d, (p, p)),
        ];
        for (field, mat, expected) in checks {
            if mat.shape() != expected {
                violations.push(Violation {
                    mode: Some(i),
                    field,
                    kind: ViolationKind::Dimension,
                    magnitude: 0.0,
                    message: format!(
                        "is {}x{}, expected {}x{}",
                        mat.nrows(),
                        mat.ncols(),
                        expected.0,
                        expected.1
                    ),
                });
            }
            if let Some(pos) = mat.iter().position(|v| !v.is_finite()) {
                violations.push(Violation {
                    mode: Some(i),
                    field,
                    kind: ViolationKind::NonFinite,
                    magnitude: f64::INFINITY,
                    message: format!("entry {pos} (column-major) is not finite"),
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Form `A_cl(i) = A(i) + B(i) K(i) C(i)` and `W(i) = B(i) K(i) D(i)`.
pub fn build_closed_loop(model: &PemAdm, gains: &GainSet) -> Result<ClosedLoop> {
    let report = validate_model(model);
    if !report.is_ok() {
        return Err(Error::InvalidModel(report.to_string()));
    }
    if gains.len() != model.n_modes() {
        return Err(Error::InvalidModel(format!(
            "{} gains supplied for {} modes",
            gains.len(),
            model.n_modes()
        )));
    }
    let (m, p) = (model.input_dim, model.output_dim);
    let mut a_cl = Vec::with_capacity(model.n_modes());
    let mut w = Vec::with_capacity(model.n_modes());
    for (i, (mode, k)) in model.modes.iter().zip(&gains.gains).enumerate() {
        if k.shape() != (m, p) {
            return Err(dim_err(i, "K", k, (m, p)));
        }
        let bk = &mode.b * k;
        a_cl.push(&mode.a + &bk * &mode.c);
        w.push(&bk * &mode.d);
    }
    Ok(ClosedLoop {
        a_cl,
        w,
        generator: model.generator.clone(),
    })
}

/// Stationary distribution `π` with `π Q = 0`, `Σ π = 1`.
pub fn stationary_distribution(gen: &Generator) -> Result<Vec<f64>> {
    let n = gen.n_modes();
    if n == 1 {
        return Ok(vec![1.0]);
    }
    // Solve Qᵀ πᵀ = 0 with the last equation replaced by normalization.
    let mut lhs = gen.rates().transpose();
    for j in 0..n {
        lhs[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let scale = crate::linalg::max_abs(gen.rates()).max(1.0);
    let lu = lhs.clone().full_piv_lu();
    let pivot_min = (0..n)
        .map(|k| lu.u()[(k, k)].abs())
        .fold(f64::INFINITY, f64::min);
    if pivot_min <= 1e-12 * scale {
        return Err(Error::NoStationaryDistribution(
            "singular balance equations (reducible chain)".into(),
        ));
    }
    let pi = lu
        .solve(&rhs)
        .ok_or_else(|| Error::NoStationaryDistribution("singular balance equations".into()))?;
    if pi.iter().any(|&v| v < -1e-10) {
        return Err(Error::NoStationaryDistribution(
            "negative stationary mass".into(),
        ));
    }
    let pi: Vec<f64> = pi.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn acc_mode(c: [f64; 2], d: [f64; 2]) -> ModeSystem {
        ModeSystem {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            b: DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            c: DMatrix::from_diagonal(&DVector::from_column_slice(&c)),
            d: DMatrix::from_diagonal(&DVector::from_column_slice(&d)),
        }
    }

    fn naive_mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
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

    #[test]
    fn acc_model_validates() {
        let gen = Generator::from_rows(&[vec![-4.0, 4.0], vec![0.5, -0.5]]).unwrap();
        let model = PemAdm::new(
            vec![
                acc_mode([0.0, 1.0], [1.0, 1.0]),
                acc_mode([1.0, 1.0], [0.05, 0.5]),
            ],
            gen,
        );
        assert!(model.is_ok());
    }

    #[test]
    fn mode_count_mismatch_reported() {
        let gen = Generator::unchecked(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        let model = PemAdm {
            modes: vec![acc_mode([1.0, 1.0], [1.0, 1.0])],
            generator: gen,
            state_dim: 2,
            input_dim: 1,
            output_dim: 2,
        };
        let report = validate_model(&model);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0]
            .message
            .contains("modes.len != n_modes"));
    }

    #[test]
    fn row_sum_violation_reported() {
        let gen = Generator::unchecked(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 1.0, -1.0]));
        let model = PemAdm {
            modes: vec![acc_mode([1.0, 1.0], [1.0, 1.0]); 2],
            generator: gen.clone(),
            state_dim: 2,
            input_dim: 1,
            output_dim: 2,
        };
        let report = validate_model(&model);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::RowSum);
        assert!(report.violations[0].message.contains("row 0 sums to -0.5"));
        assert!(Generator::new(gen.rates().clone()).is_err());
    }

    #[test]
    fn small_row_sum_defect_is_repaired() {
        let g = Generator::from_rows(&[vec![-1.0, 1.0 + 5e-10], vec![0.3, -0.3]]).unwrap();
        assert_eq!(g.rate(0, 0), -(1.0 + 5e-10));
    }

    #[test]
    fn negative_rate_and_dimension_violations() {
        let gen = Generator::unchecked(DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, -1.0]));
        let mut bad = acc_mode([1.0, 1.0], [1.0, 1.0]);
        bad.d = DMatrix::zeros(2, 1);
        let model = PemAdm {
            modes: vec![bad.clone(), bad],
            generator: gen,
            state_dim: 2,
            input_dim: 1,
            output_dim: 2,
        };
        let report = validate_model(&model);
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::NegativeRate));
        assert_eq!(
            report.violations.iter().filter(|v| v.field == "D").count(),
            2
        );
        assert!(report.to_string().contains("mode 1 D"));
    }

    #[test]
    fn closed_loop_acc_mode1() {
        let gen = Generator::from_rows(&[vec![-4.0, 4.0], vec![0.5, -0.5]]).unwrap();
        let model = PemAdm::new(
            vec![
                acc_mode([0.0, 1.0], [1.0, 1.0]),
                acc_mode([1.0, 1.0], [0.05, 0.5]),
            ],
            gen,
        )
        .unwrap();
        let gains = GainSet::new(vec![
            DMatrix::from_row_slice(1, 2, &[0.0, -2.52]),
            DMatrix::from_row_slice(1, 2, &[-2.61, -1.76]),
        ]);
        let cl = build_closed_loop(&model, &gains).unwrap();
        let expected_a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.61, -1.76]);
        let expected_w = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, -2.61 * 0.05, -1.76 * 0.5]);
        assert!((&cl.a_cl[1] - expected_a).amax() < 1e-15);
        assert!((&cl.w[1] - expected_w).amax() < 1e-15);
        assert_relative_eq!(cl.w[1][(1, 0)], -0.1305, epsilon = 1e-12);
        assert_relative_eq!(cl.w[1][(1, 1)], -0.88, epsilon = 1e-12);
        assert_eq!(cl.generator, model.generator);
    }

    #[test]
    fn zero_gain_closed_loop() {
        let model =
            PemAdm::new(vec![acc_mode([1.0, 1.0], [1.0, 1.0])], Generator::trivial()).unwrap();
        let cl = build_closed_loop(&model, &GainSet::zeros(&model)).unwrap();
        assert_eq!(cl.a_cl[0], model.modes[0].a);
        assert_eq!(cl.w[0].amax(), 0.0);
    }

    #[test]
    fn gain_dimension_error_names_mode() {
        let model =
            PemAdm::new(vec![acc_mode([1.0, 1.0], [1.0, 1.0])], Generator::trivial()).unwrap();
        let err = build_closed_loop(&model, &GainSet::new(vec![DMatrix::zeros(2, 2)])).unwrap_err();
        assert!(matches!(
            err,
            Error::Dimension {
                mode: 0,
                field: "K",
                ..
            }
        ));
    }

    #[test]
    fn stationary_two_state() {
        let g = Generator::from_rows(&[vec![-4.0, 4.0], vec![0.5, -0.5]]).unwrap();
        let pi = stationary_distribution(&g).unwrap();
        assert_relative_eq!(pi[0], 1.0 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(pi[1], 8.0 / 9.0, epsilon = 1e-14);

        let g = Generator::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        assert_eq!(stationary_distribution(&g).unwrap(), vec![0.5, 0.5]);

        let g = Generator::from_rows(&[vec![-4.0, 4.0], vec![3.0, -3.0]]).unwrap();
        let pi = stationary_distribution(&g).unwrap();
        assert_relative_eq!(pi[0], 3.0 / 7.0, epsilon = 1e-14);
        assert_relative_eq!(pi[1], 4.0 / 7.0, epsilon = 1e-14);
    }

    #[test]
    fn reducible_chain_rejected() {
        let g = Generator::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![1.0, 1.0, -2.0],
        ])
        .unwrap();
        assert!(matches!(
            stationary_distribution(&g),
            Err(Error::NoStationaryDistribution(_))
        ));
    }

    fn random_generator(n: usize, raw: &[f64]) -> Generator {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m[(i, j)] = raw[i * n + j];
                }
            }
            let s: f64 = m.row(i).sum();
            m[(i, i)] = -s;
        }
        Generator::new(m).unwrap()
    }

    proptest! {
        #[test]
        fn stationary_balance_residual(raw in proptest::collection::vec(0.05f64..5.0, 16), n in 2usize..=4) {
            let g = random_generator(n, &raw);
            let pi = stationary_distribution(&g).unwrap();
            let sum: f64 = pi.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            for j in 0..n {
                let r: f64 = (0..n).map(|i| pi[i] * g.rate(i, j)).sum();
                prop_assert!(r.abs() < 1e-10);
            }
            prop_assert!(pi.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn closed_loop_matches_naive_products(
            entries in proptest::collection::vec(-3.0f64..3.0, 3 * (9 + 6 + 6 + 4 + 4)),
        ) {
            let mut it = entries.into_iter();
            let mut take = |r: usize, c: usize| DMatrix::from_iterator(r, c, it.by_ref().take(r * c));
            let mut modes = Vec::new();
            let mut gains = Vec::new();
            for _ in 0..3 {
                modes.push(ModeSystem { a: take(3, 3), b: take(3, 2), c: take(2, 3), d: take(2, 2) });
                gains.push(take(2, 2));
            }
            let gen = random_generator(3, &[0.0, 1.0, 2.0, 0.5, 0.0, 0.7, 1.5, 0.2, 0.0]);
            let model = PemAdm::new(modes, gen).unwrap();
            let cl = build_closed_loop(&model, &GainSet::new(gains.clone())).unwrap();
            for i in 0..3 {
                let md = &model.modes[i];
                let bkc = naive_mul(&naive_mul(&md.b, &gains[i]), &md.c);
                let bkd = naive_mul(&naive_mul(&md.b, &gains[i]), &md.d);
                prop_assert!(((&cl.a_cl[i] - &md.a) - bkc).amax() < 1e-12);
                prop_assert!((&cl.w[i] - bkd).amax() < 1e-12);
            }
        }

        #[test]
        fn validate_is_total(entries in proptest::collection::vec(proptest::num::f64::ANY, 12), n_modes in 1usize..3) {
            let g = Generator::unchecked(DMatrix::from_iterator(2, 2, entries[..4].iter().copied()));
            let mode = ModeSystem {
                a: DMatrix::from_iterator(2, 2, entries[4..8].iter().copied()),
                b: DMatrix::from_iterator(2, 1, entries[8..10].iter().copied()),
                c: DMatrix::from_iterator(1, 2, entries[10..12].iter().copied()),
                d: DMatrix::from_element(1, 1, 1.0),
            };
            let model = PemAdm { modes: vec![mode; n_modes], generator: g, state_dim: 2, input_dim: 1, output_dim: 1 };
            let _ = validate_model(&model).to_string();
        }
    }
}

//! Python module `jumpctl`.
//!
//! Matrices cross the boundary as nested lists of rows; results come back as
//! plain dicts and lists.

use jumpctl_core::acc::{
    build_acc_model, run_scenario, scenario_config, AccController, IdmParams, RbcParams,
};
use jumpctl_core::analysis::{
    bound_report, find_certificate, solve_moments, verify_certificate, MomentSolution,
};
use jumpctl_core::model::{build_closed_loop, GainSet, Generator, ModeSystem, PemAdm};
use jumpctl_core::simulate::{run_ensemble, FeedbackLoop, SimConfig};
use jumpctl_core::synthesis::{synth_pgc, synth_ssc, SynthesisOptions, SynthesisOutcome};
use jumpctl_core::Error;
use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;
use serde_json::{json, Value};

type Rows = Vec<Vec<f64>>;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::InvalidModel(_)
        | Error::InvalidOption(_)
        | Error::UnknownScenario(_)
        | Error::Dimension { .. } => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn to_matrix(rows: &Rows, what: &str) -> PyResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err(format!(
            "{what}: rows have different lengths"
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Serialize through JSON into native Python objects.
fn native<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A switched linear model with Markov mode process.
#[pyclass(module = "jumpctl", frozen)]
struct Model {
    inner: PemAdm,
}

#[pymethods]
impl Model {
    /// `modes` is a list of dicts with keys A, B, C, D; `generator` the
    /// rate matrix.
    #[new]
    fn new(modes: Vec<Bound<'_, PyDict>>, generator: Rows) -> PyResult<Self> {
        let mut systems = vec![];
        for (i, d) in modes.iter().enumerate() {
            let get = |k: &str| -> PyResult<DMatrix<f64>> {
                let item = d
                    .get_item(k)?
                    .ok_or_else(|| PyValueError::new_err(format!("modes[{i}] has no key {k}")))?;
                to_matrix(&item.extract::<Rows>()?, &format!("modes[{i}].{k}"))
            };
            systems.push(ModeSystem {
                a: get("A")?,
                b: get("B")?,
                c: get("C")?,
                d: get("D")?,
            });
        }
        let generator = Generator::new(to_matrix(&generator, "generator")?).map_err(to_py)?;
        Ok(Model {
            inner: PemAdm::new(systems, generator).map_err(to_py)?,
        })
    }

    /// Cruise-control model of built-in scenario 1, 2 or 3.
    #[staticmethod]
    #[pyo3(signature = (scenario = 1))]
    fn acc(scenario: u32) -> PyResult<Self> {
        let cfg = scenario_config(scenario).map_err(to_py)?;
        Ok(Model {
            inner: build_acc_model(&cfg).map_err(to_py)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.state_dim
    }
    #[getter]
    fn m(&self) -> usize {
        self.inner.input_dim
    }
    #[getter]
    fn p(&self) -> usize {
        self.inner.output_dim
    }
    #[getter]
    fn n_modes(&self) -> usize {
        self.inner.n_modes()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        let modes: Vec<Value> = self
            .inner
            .modes
            .iter()
            .map(|s| json!({ "A": rows(&s.a), "B": rows(&s.b), "C": rows(&s.c), "D": rows(&s.d) }))
            .collect();
        native(
            py,
            &json!({ "modes": modes, "generator": self.inner.generator.to_rows() }),
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(n={}, m={}, p={}, modes={})",
            self.n(),
            self.m(),
            self.p(),
            self.n_modes()
        )
    }
}

fn gain_set(model: &PemAdm, gains: &[Rows]) -> PyResult<GainSet> {
    if gains.len() != model.n_modes() {
        return Err(PyValueError::new_err(format!(
            "{} gains for {} modes",
            gains.len(),
            model.n_modes()
        )));
    }
    let ks = gains
        .iter()
        .enumerate()
        .map(|(i, g)| to_matrix(g, &format!("gains[{i}]")))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(GainSet::new(ks))
}

fn moments_json(m: Result<MomentSolution, Error>) -> PyResult<Value> {
    match m {
        Ok(m) => Ok(json!({
            "stable": m.stable,
            "marginal": false,
            "total_ms": m.stable.then_some(m.total_ms),
            "spectral_abscissa": m.spectral_abscissa,
            "second_moments": m.second_moments.iter().map(|s| rows(s.as_matrix())).collect::<Vec<_>>(),
        })),
        Err(Error::Marginal(a)) => Ok(
            json!({ "stable": false, "marginal": true, "total_ms": null, "spectral_abscissa": a }),
        ),
        Err(e) => Err(to_py(e)),
    }
}

/// Exact steady-state second moments of the closed loop.
#[pyfunction]
fn moments(py: Python<'_>, model: &Model, gains: Vec<Rows>) -> PyResult<Py<PyAny>> {
    let cl = build_closed_loop(&model.inner, &gain_set(&model.inner, &gains)?).map_err(to_py)?;
    native(py, &moments_json(solve_moments(&cl))?)
}

/// Search for a mean-square stability certificate for the given gains.
/// Returns `certified`, the certificate report, bounds and exact moments.
#[pyfunction]
#[pyo3(signature = (model, gains, x0 = None, epsilon = 1e-6))]
fn analyze(
    py: Python<'_>,
    model: &Model,
    gains: Vec<Rows>,
    x0: Option<Vec<f64>>,
    epsilon: f64,
) -> PyResult<Py<PyAny>> {
    let cl = build_closed_loop(&model.inner, &gain_set(&model.inner, &gains)?).map_err(to_py)?;
    let x0 = x0.unwrap_or_else(|| vec![0.0; model.inner.state_dim]);
    if x0.len() != model.inner.state_dim {
        return Err(PyValueError::new_err(format!(
            "x0 needs {} entries",
            model.inner.state_dim
        )));
    }
    let cert = py
        .detach(|| find_certificate(&cl, epsilon))
        .map_err(to_py)?;
    let out = json!({
        "certified": cert.is_some(),
        "certificate": cert.as_ref().map(|c| verify_certificate(&cl, c)),
        "bounds": cert.as_ref().map(|c| bound_report(c, &x0)),
        "moments": moments_json(solve_moments(&cl))?,
    });
    native(py, &out)
}

/// Design gains. `method` is "ssc" or "pgc"; `gamma3_bar` is `alpha1 · gamma2_bar`.
#[pyfunction]
#[pyo3(signature = (model, method = "pgc", gamma1_bar = 0.8, gamma2_bar = 0.1, alpha1 = 10.0, epsilon = 1e-6))]
fn synthesize(
    py: Python<'_>,
    model: &Model,
    method: &str,
    gamma1_bar: f64,
    gamma2_bar: f64,
    alpha1: f64,
    epsilon: f64,
) -> PyResult<Py<PyAny>> {
    let outcome = match method {
        "ssc" => py.detach(|| synth_ssc(&model.inner, epsilon)),
        "pgc" => {
            let opts = SynthesisOptions {
                gamma1_bar,
                gamma2_bar,
                gamma3_bar: alpha1 * gamma2_bar,
                alpha1,
                strictness: epsilon,
            };
            opts.validate().map_err(to_py)?;
            py.detach(|| synth_pgc(&model.inner, &opts))
        }
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method {other:?}; use 'ssc' or 'pgc'"
            )))
        }
    }
    .map_err(to_py)?;
    let out = match outcome {
        SynthesisOutcome::Feasible(r) => json!({
            "feasible": true,
            "gains": r.gains.gains.iter().map(rows).collect::<Vec<_>>(),
            "gamma4": r.gamma4,
            "guaranteed_bound": r.guaranteed_bound,
            "decay_bound": r.decay_bound,
            "certificate_ss_bound": r.certificate.ss_bound,
        }),
        SynthesisOutcome::Infeasible(inf) => json!({
            "feasible": false,
            "worst_constraint": inf.worst_constraint,
            "max_constraint_eig": inf.max_constraint_eig,
        }),
    };
    native(py, &out)
}

fn sim_config(
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    initial_mode: Option<usize>,
    tail_window: Option<(f64, f64)>,
) -> SimConfig {
    SimConfig {
        dt,
        horizon,
        n_paths,
        seed,
        initial_mode,
        tail_window: tail_window.map(|(a, b)| [a, b]),
        ..Default::default()
    }
}

/// Monte-Carlo ensemble of `u = K(r) y`. Returns the ensemble statistics
/// (times, mean_state, mean_sq, stderr_mean_sq, tail, ...).
#[pyfunction]
#[pyo3(signature = (model, gains, x0, dt = 1e-3, horizon = 10.0, n_paths = 500, seed = 1, initial_mode = None, tail_window = None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    model: &Model,
    gains: Vec<Rows>,
    x0: Vec<f64>,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
    initial_mode: Option<usize>,
    tail_window: Option<(f64, f64)>,
) -> PyResult<Py<PyAny>> {
    let gains = gain_set(&model.inner, &gains)?;
    let cfg = sim_config(dt, horizon, n_paths, seed, initial_mode, tail_window);
    let sys = FeedbackLoop {
        model: &model.inner,
        controller: gains,
        exogenous: None,
    };
    let ens = py.detach(|| run_ensemble(&sys, &x0, &cfg)).map_err(to_py)?;
    native(py, &ens.stats)
}

/// Run built-in cruise-control scenario 1, 2 or 3. `controller` is "idm",
/// "rbc", or a list of two 1×2 gain matrices.
#[pyfunction]
#[pyo3(signature = (scenario, controller, dt = 1e-3, horizon = 10.0, n_paths = 500, seed = 1))]
fn scenario(
    py: Python<'_>,
    scenario: u32,
    controller: &Bound<'_, PyAny>,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    seed: u64,
) -> PyResult<Py<PyAny>> {
    let ctrl = if let Ok(name) = controller.extract::<String>() {
        match name.as_str() {
            "idm" => AccController::Idm {
                params: IdmParams::default(),
            },
            "rbc" => AccController::Rbc {
                params: RbcParams::default(),
            },
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown controller {other:?}"
                )))
            }
        }
    } else {
        let gains: Vec<Rows> = controller.extract()?;
        let model = build_acc_model(&scenario_config(scenario).map_err(to_py)?).map_err(to_py)?;
        AccController::Gains {
            gains: gain_set(&model, &gains)?,
        }
    };
    let cfg = sim_config(dt, horizon, n_paths, seed, None, None);
    let res = py
        .detach(|| run_scenario(scenario, &ctrl, None, &cfg))
        .map_err(to_py)?;
    let out = json!({
        "scenario": res.scenario,
        "controller": res.controller,
        "collision_fraction": res.collision_fraction,
        "divergence_fraction": res.divergence_fraction,
        "failure_fraction": res.failure_fraction,
        "tail": res.tail,
        "times": res.stats.times,
        "mean_sq": res.stats.mean_sq,
        "mean_delta1": res.stats.mean_observables.iter().map(|o| o[0]).collect::<Vec<_>>(),
    });
    native(py, &out)
}

#[pymodule]
fn jumpctl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(scenario, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

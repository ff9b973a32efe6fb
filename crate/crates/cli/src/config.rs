//! The JSON configuration document.
//!
//! ```json
//! {
//!   "model": {
//!     "n": 1, "m": 1, "p": 1,
//!     "modes": [{ "A": [[0.0]], "B": [[1.0]], "C": [[1.0]], "D": [[0.5]] }],
//!     "generator": [[0.0]]
//!   },
//!   "gains": [[[-1.0]]],
//!   "synthesis": { "gamma1_bar": 0.8, "gamma2_bar": 0.1, "alpha1": 10.0, "epsilon": 1e-6 },
//!   "sim": { "dt": 0.001, "horizon": 10.0, "n_paths": 500, "seed": 1, "record_stride": 10 },
//!   "x0": [1.0]
//! }
//! ```
//!
//! A `scenario` section (cruise-control parameters) may replace `model`.
//! Matrices are arrays of rows. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use jumpctl_core::acc::{build_acc_model, AccConfig};
use jumpctl_core::model::{GainSet, Generator, ModeSystem, PemAdm};
use jumpctl_core::simulate::SimConfig;
use jumpctl_core::synthesis::SynthesisOptions;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    /// Free-form annotations; ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    /// One `m × p` matrix per mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthesis: Option<SynthesisSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<AccConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub modes: Vec<ModeSection>,
    pub generator: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
}

/// `gamma3_bar` defaults to `alpha1 · gamma2_bar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub gamma1_bar: f64,
    pub gamma2_bar: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma3_bar: Option<f64>,
    pub alpha1: f64,
    pub epsilon: f64,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        let d = SynthesisOptions::default();
        SynthesisSection {
            gamma1_bar: d.gamma1_bar,
            gamma2_bar: d.gamma2_bar,
            gamma3_bar: None,
            alpha1: d.alpha1,
            epsilon: d.strictness,
        }
    }
}

impl SynthesisSection {
    pub fn options(&self) -> Result<SynthesisOptions> {
        let opts = SynthesisOptions {
            gamma1_bar: self.gamma1_bar,
            gamma2_bar: self.gamma2_bar,
            gamma3_bar: self.gamma3_bar.unwrap_or(self.alpha1 * self.gamma2_bar),
            alpha1: self.alpha1,
            strictness: self.epsilon,
        };
        opts.validate().context("synthesis section")?;
        Ok(opts)
    }
}

/// Parse a document, reporting syntax and schema errors with line and column.
pub fn parse_document(text: &str, origin: &str) -> Result<ConfigDocument> {
    serde_json::from_str(text).map_err(|e| {
        anyhow!(
            "{origin}:{}:{}: {}",
            e.line(),
            e.column(),
            strip_position(&e)
        )
    })
}

fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(k) => s[..k].to_string(),
        None => s,
    }
}

pub fn load_document(path: &Path) -> Result<ConfigDocument> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_document(&text, &path.display().to_string())
}

/// A `key.path=value` override. The value is read as JSON when it parses,
/// otherwise as a string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl Override {
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, raw) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("override `{spec}` is not key=value"))?;
        Self::new(key, raw)
    }

    pub fn new(key: &str, raw: &str) -> Result<Self> {
        let path: Vec<String> = key.split('.').map(str::to_string).collect();
        if path.iter().any(|p| p.is_empty()) {
            bail!("override key `{key}` has an empty component");
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        Ok(Override { path, value })
    }

    pub fn key(&self) -> String {
        self.path.join(".")
    }
}

/// Apply overrides and re-validate the document against the schema.
pub fn apply_overrides(doc: &ConfigDocument, overrides: &[Override]) -> Result<ConfigDocument> {
    if overrides.is_empty() {
        return Ok(doc.clone());
    }
    let mut v = serde_json::to_value(doc)?;
    for o in overrides {
        let mut cur = &mut v;
        for (k, part) in o.path.iter().enumerate() {
            let obj = cur.as_object_mut().ok_or_else(|| {
                anyhow!(
                    "override {}: `{}` is not a section",
                    o.key(),
                    o.path[..k].join(".")
                )
            })?;
            cur = obj
                .entry(part.clone())
                .or_insert_with(|| Value::Object(Default::default()));
        }
        *cur = o.value.clone();
    }
    serde_json::from_value(v).map_err(|e| {
        let keys: Vec<String> = overrides.iter().map(Override::key).collect();
        anyhow!("after overrides [{}]: {e}", keys.join(", "))
    })
}

fn to_matrix(rows: &Rows, shape: (usize, usize), field: &str) -> Result<DMatrix<f64>> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        let got_cols: Vec<usize> = rows.iter().map(Vec::len).collect();
        bail!(
            "{field}: expected {}x{}, got {} rows with lengths {:?}",
            shape.0,
            shape.1,
            rows.len(),
            got_cols
        );
    }
    if let Some((i, j)) = rows
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.iter().position(|v| !v.is_finite()).map(|j| (i, j)))
    {
        bail!("{field}: entry ({i}, {j}) is not finite");
    }
    Ok(DMatrix::from_fn(shape.0, shape.1, |i, j| rows[i][j]))
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ModelSection {
    pub fn build(&self) -> Result<PemAdm> {
        let (n, m, p) = (self.n, self.m, self.p);
        let k = self.modes.len();
        if k == 0 {
            bail!("model.modes: at least one mode is required");
        }
        let gen_rows = &self.generator;
        if gen_rows.len() != k || gen_rows.iter().any(|r| r.len() != k) {
            bail!("model.generator: expected {k}x{k} for {k} modes");
        }
        let generator = Generator::from_rows(gen_rows).context("model.generator")?;
        let mut modes = Vec::with_capacity(k);
        for (i, s) in self.modes.iter().enumerate() {
            let f = |name: &str| format!("model.modes[{i}].{name}");
            modes.push(ModeSystem {
                a: to_matrix(&s.a, (n, n), &f("A"))?,
                b: to_matrix(&s.b, (n, m), &f("B"))?,
                c: to_matrix(&s.c, (p, n), &f("C"))?,
                d: to_matrix(&s.d, (p, p), &f("D"))?,
            });
        }
        Ok(PemAdm::new(modes, generator)?)
    }

    pub fn from_model(model: &PemAdm) -> Self {
        ModelSection {
            n: model.state_dim,
            m: model.input_dim,
            p: model.output_dim,
            modes: model
                .modes
                .iter()
                .map(|s| ModeSection {
                    a: matrix_rows(&s.a),
                    b: matrix_rows(&s.b),
                    c: matrix_rows(&s.c),
                    d: matrix_rows(&s.d),
                })
                .collect(),
            generator: model.generator.to_rows(),
        }
    }
}

impl ConfigDocument {
    /// The explicit model, or the cruise-control model of the scenario section.
    pub fn build_model(&self) -> Result<PemAdm> {
        match (&self.model, &self.scenario) {
            (Some(m), _) => m.build(),
            (None, Some(s)) => Ok(build_acc_model(s).context("scenario")?),
            (None, None) => bail!("the config needs a `model` or a `scenario` section"),
        }
    }

    pub fn build_gains(&self, model: &PemAdm) -> Result<Option<GainSet>> {
        let Some(rows) = &self.gains else {
            return Ok(None);
        };
        parse_gains(rows, model, "gains").map(Some)
    }

    pub fn sim(&self) -> SimConfig {
        self.sim.clone().unwrap_or_default()
    }

    pub fn synthesis(&self) -> SynthesisSection {
        self.synthesis.clone().unwrap_or_default()
    }

    /// Initial state: `x0`, else the scenario's initial error, else zero.
    pub fn x0(&self, n: usize) -> Result<Vec<f64>> {
        let x0 = match (&self.x0, &self.scenario) {
            (Some(x), _) => x.clone(),
            (None, Some(s)) => s.x0().to_vec(),
            (None, None) => vec![0.0; n],
        };
        if x0.len() != n {
            bail!("x0: expected {n} entries, got {}", x0.len());
        }
        Ok(x0)
    }

    /// Fill every defaulted section so the document records all values used.
    pub fn resolved(&self) -> Self {
        let mut d = self.clone();
        d.sim = Some(self.sim());
        let mut syn = self.synthesis();
        syn.gamma3_bar = Some(syn.gamma3_bar.unwrap_or(syn.alpha1 * syn.gamma2_bar));
        d.synthesis = Some(syn);
        d
    }
}

pub fn parse_gains(rows: &[Rows], model: &PemAdm, field: &str) -> Result<GainSet> {
    if rows.len() != model.n_modes() {
        bail!(
            "{field}: {} gain matrices for {} modes",
            rows.len(),
            model.n_modes()
        );
    }
    let shape = (model.input_dim, model.output_dim);
    let gains = rows
        .iter()
        .enumerate()
        .map(|(i, r)| to_matrix(r, shape, &format!("{field}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(GainSet::new(gains))
}

/// A gains file: either `{"gains": [...]}` or a bare array of matrices.
pub fn load_gains(path: &Path, model: &PemAdm) -> Result<GainSet> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum GainsFile {
        Wrapped { gains: Vec<Rows> },
        Bare(Vec<Rows>),
    }
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed: GainsFile = serde_json::from_str(&text).map_err(|e| {
        anyhow!(
            "{}:{}:{}: {}",
            path.display(),
            e.line(),
            e.column(),
            strip_position(&e)
        )
    })?;
    let rows = match parsed {
        GainsFile::Wrapped { gains } | GainsFile::Bare(gains) => gains,
    };
    parse_gains(&rows, model, &path.display().to_string())
}

pub fn gains_rows(g: &GainSet) -> Vec<Rows> {
    g.gains.iter().map(matrix_rows).collect()
}

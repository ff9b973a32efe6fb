//! The analyze, synthesize, simulate, reproduce and replay workflows.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use jumpctl_core::acc::{run_scenario, AccController, IdmParams, RbcParams, ScenarioResult};
use jumpctl_core::analysis::{
    bound_report, find_certificate, solve_moments, verify_certificate, BoundReport,
    CertificateReport,
};
use jumpctl_core::model::{build_closed_loop, ClosedLoop, GainSet, PemAdm};
use jumpctl_core::simulate::{
    run_ensemble, EnsembleStats, FeedbackLoop, TailStats, TrajectorySample,
};
use jumpctl_core::synthesis::{synth_pgc, synth_ssc, SynthesisOutcome, SynthesisResult};
use jumpctl_core::Error as CoreError;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::builtin;
use crate::config::{gains_rows, ConfigDocument, Rows};
use crate::output::{write_ensemble_csv, write_json, write_sample_csv};
use crate::plots;

/// Result of a command that ran to completion. Errors map to exit code 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// No stability certificate exists for the given gains.
    AnalysisNegative,
    /// The synthesis program has no solution.
    Infeasible,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::AnalysisNegative => 2,
            Outcome::Infeasible => 3,
        }
    }
}

pub const MANIFEST: &str = "manifest.json";
pub const SUMMARY: &str = "summary.json";

/// Everything needed to re-run a command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ConfigDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<ConfigDocument>,
    /// Keyed by scenario number.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenarios: Option<BTreeMap<u32, ConfigDocument>>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Artifacts written, relative to the output directory.
    #[serde(default)]
    pub files: Vec<String>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Manifest {
            tool: "jumpctl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            method: None,
            controller: None,
            methods: None,
            config: None,
            design: None,
            scenarios: None,
            warnings: vec![],
            files: vec![],
        }
    }
}

macro_rules! named_enum {
    ($(#[$m:meta])* $name:ident { $($var:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($var),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$var => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = anyhow::Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($s => Ok($name::$var),)+
                    other => bail!(concat!("unknown ", stringify!($name), " `{}` (expected one of: ", $($s, " ",)+ ")"), other),
                }
            }
        }
    };
}

named_enum!(
    /// Synthesis program.
    Method { Ssc => "ssc", Pgc => "pgc" }
);
named_enum!(
    /// Controller driving a cruise-control simulation.
    ControllerKind { Gains => "gains", Idm => "idm", Rbc => "rbc" }
);
named_enum!(
    /// Method compared by `reproduce`.
    CompareMethod { Pgc => "pgc", Idm => "idm", Rbc => "rbc" }
);

fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn finish_manifest(out: &Path, mut manifest: Manifest, files: &[PathBuf]) -> Result<()> {
    manifest.files = files
        .iter()
        .map(|p| {
            p.strip_prefix(out)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/")
        })
        .collect();
    manifest.files.push(MANIFEST.into());
    write_json(&out.join(MANIFEST), &manifest)
}

#[derive(Debug, Clone, Serialize)]
struct MomentSummary {
    stable: bool,
    marginal: bool,
    total_ms: Option<f64>,
    spectral_abscissa: Option<f64>,
}

fn moment_summary(cl: &ClosedLoop) -> Result<MomentSummary> {
    match solve_moments(cl) {
        Ok(m) => Ok(MomentSummary {
            stable: m.stable,
            marginal: false,
            total_ms: m.stable.then_some(m.total_ms),
            spectral_abscissa: Some(m.spectral_abscissa),
        }),
        Err(CoreError::Marginal(a)) => Ok(MomentSummary {
            stable: false,
            marginal: true,
            total_ms: None,
            spectral_abscissa: Some(a),
        }),
        Err(e) => Err(e.into()),
    }
}

fn print_certificate(r: &CertificateReport, b: &BoundReport) {
    for (i, l) in r.lambda_max_m.iter().enumerate() {
        println!("  lambda_max(M({})) = {l:.6e}", i + 1);
    }
    for (i, l) in r.lambda_min_p.iter().enumerate() {
        println!("  lambda_min(P({})) = {l:.6e}", i + 1);
    }
    println!(
        "  gamma1 = {:.6e}  gamma2 = {:.6e}  gamma3 = {:.6e}  c1 = {:.6e}",
        r.gamma1, r.gamma2, r.gamma3, r.c1
    );
    println!("  steady-state bound E[x'x] <= {:.6e}", b.ss_bound);
    println!("  convergence rate {:.6e}", b.rate);
    println!("  all-time bound {:.6e}", b.alltime_bound);
}

fn print_gains(g: &GainSet) {
    for (i, k) in g.gains.iter().enumerate() {
        let rows: Vec<String> = gains_rows(&GainSet::new(vec![k.clone()]))[0]
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| format!("{v:.6}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .collect();
        println!("  K({}) = [{}]", i + 1, rows.join("; "));
    }
}

#[derive(Debug, Clone, Serialize)]
struct AnalysisSummary {
    certified: bool,
    certificate: Option<CertificateReport>,
    bounds: Option<BoundReport>,
    x0: Vec<f64>,
    moments: MomentSummary,
}

/// Search for a stability certificate for the configured gains.
pub fn analyze(doc: &ConfigDocument, out: Option<&Path>) -> Result<Outcome> {
    let doc = doc.resolved();
    let model = doc.build_model()?;
    let gains = doc
        .build_gains(&model)?
        .ok_or_else(|| anyhow!("analyze needs gains: a `gains` section or --gains FILE"))?;
    let cl = build_closed_loop(&model, &gains)?;
    let x0 = doc.x0(model.state_dim)?;
    let eps = doc.synthesis().epsilon;
    let cert = find_certificate(&cl, eps)?;
    let moments = moment_summary(&cl)?;
    let (report, bounds) = match &cert {
        Some(c) => (Some(verify_certificate(&cl, c)), Some(bound_report(c, &x0))),
        None => (None, None),
    };
    match (&report, &bounds) {
        (Some(r), Some(b)) => {
            println!("verdict: ultimately bounded in mean square (certificate found)");
            print_certificate(r, b);
        }
        _ => println!("verdict: no certificate found"),
    }
    match (moments.stable, moments.total_ms) {
        (true, Some(ms)) => println!("  exact steady-state E[x'x] = {ms:.6e}"),
        _ if moments.marginal => println!("  second-moment dynamics are marginal"),
        _ => println!("  second-moment dynamics are unstable"),
    }
    if let Some(out) = out {
        prepare_dir(out)?;
        let summary = AnalysisSummary {
            certified: cert.is_some(),
            certificate: report,
            bounds,
            x0,
            moments,
        };
        let path = out.join(SUMMARY);
        write_json(&path, &summary)?;
        let mut m = Manifest::new("analyze");
        m.config = Some(doc.clone());
        finish_manifest(out, m, &[path])?;
    }
    Ok(if cert.is_some() {
        Outcome::Success
    } else {
        Outcome::AnalysisNegative
    })
}

#[derive(Debug, Clone, Serialize)]
struct DesignSummary {
    method: Method,
    feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    gains: Option<Vec<Rows>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    guaranteed_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    decay_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<CertificateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    moments: Option<MomentSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    worst_constraint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_constraint_eig: Option<f64>,
}

fn design(
    model: &PemAdm,
    doc: &ConfigDocument,
    method: Method,
) -> Result<(SynthesisOutcome, DesignSummary)> {
    let syn = doc.synthesis();
    let outcome = match method {
        Method::Ssc => synth_ssc(model, syn.epsilon)?,
        Method::Pgc => synth_pgc(model, &syn.options()?)?,
    };
    let summary = match &outcome {
        SynthesisOutcome::Feasible(r) => {
            let cl = build_closed_loop(model, &r.gains)?;
            DesignSummary {
                method,
                feasible: true,
                gains: Some(gains_rows(&r.gains)),
                gamma4: r.gamma4,
                guaranteed_bound: r.guaranteed_bound,
                decay_bound: r.decay_bound,
                certificate: Some(verify_certificate(&cl, &r.certificate)),
                moments: Some(moment_summary(&cl)?),
                worst_constraint: None,
                max_constraint_eig: None,
            }
        }
        SynthesisOutcome::Infeasible(inf) => DesignSummary {
            method,
            feasible: false,
            gains: None,
            gamma4: None,
            guaranteed_bound: None,
            decay_bound: None,
            certificate: None,
            moments: None,
            worst_constraint: Some(inf.worst_constraint.clone()),
            max_constraint_eig: Some(inf.max_constraint_eig),
        },
    };
    Ok((outcome, summary))
}

fn print_design(s: &DesignSummary, r: Option<&SynthesisResult>) {
    match r {
        Some(r) => {
            println!("{}: feasible", s.method);
            print_gains(&r.gains);
            if let (Some(g4), Some(b)) = (r.gamma4, r.guaranteed_bound) {
                println!("  gamma4 = {g4:.6e}");
                println!("  guaranteed steady-state bound E[x'x] <= {b:.6e}");
            }
            if let Some(b) = r.decay_bound {
                println!("  decay-margin bound E[x'x] <= {b:.6e}");
            }
            if let Some(c) = &s.certificate {
                println!(
                    "  closed-loop re-verification: {}",
                    if c.passes { "passed" } else { "FAILED" }
                );
            }
            if let Some(MomentSummary {
                total_ms: Some(ms), ..
            }) = &s.moments
            {
                println!("  exact steady-state E[x'x] = {ms:.6e}");
            }
        }
        None => println!(
            "{}: infeasible (worst constraint {}, max eigenvalue {:.3e})",
            s.method,
            s.worst_constraint.as_deref().unwrap_or("?"),
            s.max_constraint_eig.unwrap_or(f64::NAN)
        ),
    }
}

/// Design gains; writes `gains.json` (reusable with `--gains`) and the summary.
pub fn synthesize(doc: &ConfigDocument, method: Method, out: &Path) -> Result<Outcome> {
    let doc = doc.resolved();
    let model = doc.build_model()?;
    let (outcome, summary) = design(&model, &doc, method)?;
    prepare_dir(out)?;
    let mut files = vec![];
    let result = match &outcome {
        SynthesisOutcome::Feasible(r) => {
            let path = out.join("gains.json");
            write_json(&path, &serde_json::json!({ "gains": gains_rows(&r.gains) }))?;
            files.push(path);
            Some(r.as_ref())
        }
        SynthesisOutcome::Infeasible(_) => None,
    };
    print_design(&summary, result);
    let path = out.join(SUMMARY);
    write_json(&path, &summary)?;
    files.push(path);
    let mut m = Manifest::new("synthesize");
    m.method = Some(method.to_string());
    m.config = Some(doc);
    finish_manifest(out, m, &files)?;
    Ok(if result.is_some() {
        Outcome::Success
    } else {
        Outcome::Infeasible
    })
}

fn write_samples(
    dir: &Path,
    samples: &[TrajectorySample],
    names: &[String],
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    for (k, s) in samples.iter().enumerate() {
        let path = dir.join(format!("sample_path_{k}.csv"));
        write_sample_csv(&path, s, names)?;
        files.push(path);
    }
    Ok(())
}

fn write_svg(path: PathBuf, text: String, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    files.push(path);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SimulationSummary {
    n_paths: usize,
    n_valid: usize,
    divergence_fraction: f64,
    collision_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    failure_fraction: Option<f64>,
    tail: Option<TailStats>,
    final_mean_sq: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    moments: Option<MomentSummary>,
}

fn acc_controller(kind: ControllerKind, gains: Option<GainSet>) -> Result<AccController> {
    Ok(match kind {
        ControllerKind::Gains => AccController::Gains {
            gains: gains.ok_or_else(|| {
                anyhow!("the gains controller needs a `gains` section or --gains FILE")
            })?,
        },
        ControllerKind::Idm => AccController::Idm {
            params: IdmParams::default(),
        },
        ControllerKind::Rbc => AccController::Rbc {
            params: RbcParams::default(),
        },
    })
}

/// Monte-Carlo ensemble with CSV, SVG, summary and manifest output.
pub fn simulate(doc: &ConfigDocument, kind: ControllerKind, out: &Path) -> Result<Outcome> {
    let doc = doc.resolved();
    let model = doc.build_model()?;
    let sim = doc.sim();
    sim.validate()?;
    prepare_dir(out)?;
    let mut files = vec![];
    let gains = doc.build_gains(&model)?;
    let (stats, samples, failure, moments) = match (&doc.model, &doc.scenario) {
        (None, Some(cfg)) => {
            if doc.x0.is_some() {
                bail!("x0 is derived from scenario.ego0, scenario.lead0 and scenario.delta_d; remove the x0 entry");
            }
            let moments = match &gains {
                Some(g) if kind == ControllerKind::Gains => {
                    Some(moment_summary(&build_closed_loop(&model, g)?)?)
                }
                _ => None,
            };
            let res = run_scenario(0, &acc_controller(kind, gains)?, Some(cfg), &sim)?;
            let title = format!("Cruise control, {} controller", kind);
            write_svg(
                out.join("acc.svg"),
                plots::acc_figure(&title, &[(kind.as_str(), &res.stats)]),
                &mut files,
            )?;
            (res.stats, res.samples, Some(res.failure_fraction), moments)
        }
        _ => {
            if kind != ControllerKind::Gains {
                bail!("the {kind} controller needs a cruise-control `scenario` section");
            }
            let gains = gains.ok_or_else(|| {
                anyhow!("simulate needs gains: a `gains` section or --gains FILE")
            })?;
            let moments = Some(moment_summary(&build_closed_loop(&model, &gains)?)?);
            let x0 = doc.x0(model.state_dim)?;
            let sys = FeedbackLoop {
                model: &model,
                controller: gains,
                exogenous: None,
            };
            let ens = run_ensemble(&sys, &x0, &sim)?;
            for (name, text) in plots::generic_figures(&ens.stats) {
                write_svg(out.join(name), text, &mut files)?;
            }
            (ens.stats, ens.samples, None, moments)
        }
    };
    if let Some(s) = samples.first() {
        write_svg(
            out.join("mode_path.svg"),
            plots::mode_figure("Perception mode, path 0", s),
            &mut files,
        )?;
    }
    let path = out.join("ensemble_stats.csv");
    write_ensemble_csv(&path, &stats)?;
    files.push(path);
    write_samples(out, &samples, &stats.observable_names, &mut files)?;

    let mut m = Manifest::new("simulate");
    if stats.divergence_fraction > 0.5 {
        let w = format!(
            "divergence fraction {:.3} exceeds 50%",
            stats.divergence_fraction
        );
        warn!("{w}");
        m.warnings.push(w);
    }
    let summary = SimulationSummary {
        n_paths: stats.n_paths,
        n_valid: stats.n_valid,
        divergence_fraction: stats.divergence_fraction,
        collision_fraction: stats.collision_fraction,
        failure_fraction: failure,
        tail: stats.tail.clone(),
        final_mean_sq: stats.mean_sq.last().copied(),
        moments,
    };
    print_simulation(&summary);
    let path = out.join(SUMMARY);
    write_json(&path, &summary)?;
    files.push(path);
    m.controller = Some(kind.to_string());
    m.config = Some(doc);
    finish_manifest(out, m, &files)?;
    Ok(Outcome::Success)
}

fn print_simulation(s: &SimulationSummary) {
    println!("paths: {} ({} valid)", s.n_paths, s.n_valid);
    println!("divergence fraction: {:.4}", s.divergence_fraction);
    println!("collision fraction: {:.4}", s.collision_fraction);
    if let Some(f) = s.failure_fraction {
        println!("failure fraction: {f:.4}");
    }
    if let Some(t) = &s.tail {
        println!(
            "tail E[x'x] over [{}, {}]: {:.6e} +/- {:.2e}",
            t.window[0], t.window[1], t.mean, t.stderr
        );
    }
    if let Some(MomentSummary {
        total_ms: Some(ms), ..
    }) = &s.moments
    {
        println!("exact steady-state E[x'x]: {ms:.6e}");
    }
}

/// Inputs of a `reproduce` run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReproducePlan {
    pub design: ConfigDocument,
    pub scenarios: BTreeMap<u32, ConfigDocument>,
    pub methods: Vec<CompareMethod>,
}

impl ReproducePlan {
    /// Built-in parameter sets for the requested scenarios.
    pub fn builtin(scenarios: &[u32], methods: &[CompareMethod]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for &id in scenarios {
            map.insert(id, builtin::scenario(id)?);
        }
        let mut methods = methods.to_vec();
        methods.sort();
        methods.dedup();
        Ok(ReproducePlan {
            design: builtin::design()?,
            scenarios: map,
            methods,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
struct MethodRow {
    scenario: u32,
    method: CompareMethod,
    collision_fraction: f64,
    divergence_fraction: f64,
    collided_or_diverged_fraction: f64,
    failure_fraction: f64,
    tail_mean_sq: Option<f64>,
    tail_stderr: Option<f64>,
    /// At most 5% of paths failed.
    stable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    moments: Option<MomentSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    certified: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
struct ReproduceSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    design: Option<DesignSummary>,
    results: Vec<MethodRow>,
}

/// Design the performance-guaranteed gains once, then run every scenario
/// with every requested method.
pub fn reproduce(plan: &ReproducePlan, out: &Path) -> Result<Outcome> {
    if plan.methods.is_empty() {
        bail!("no methods selected");
    }
    let design_doc = plan.design.resolved();
    let scenarios: BTreeMap<u32, ConfigDocument> = plan
        .scenarios
        .iter()
        .map(|(k, d)| (*k, d.resolved()))
        .collect();
    prepare_dir(out)?;
    let mut files = vec![];
    let mut m = Manifest::new("reproduce");
    m.methods = Some(plan.methods.iter().map(|x| x.to_string()).collect());
    m.design = Some(design_doc.clone());
    m.scenarios = Some(scenarios.clone());

    let mut design_summary = None;
    let mut pgc_gains = None;
    if plan.methods.contains(&CompareMethod::Pgc) {
        let model = design_doc.build_model()?;
        let (outcome, summary) = design(&model, &design_doc, Method::Pgc)?;
        print_design(
            &summary,
            match &outcome {
                SynthesisOutcome::Feasible(r) => Some(r),
                SynthesisOutcome::Infeasible(_) => None,
            },
        );
        let feasible = summary.feasible;
        design_summary = Some(summary);
        match outcome {
            SynthesisOutcome::Feasible(r) => pgc_gains = Some(r.gains),
            SynthesisOutcome::Infeasible(_) => {
                debug_assert!(!feasible);
                let path = out.join(SUMMARY);
                write_json(
                    &path,
                    &ReproduceSummary {
                        design: design_summary,
                        results: vec![],
                    },
                )?;
                files.push(path);
                finish_manifest(out, m, &files)?;
                return Ok(Outcome::Infeasible);
            }
        }
    }

    let mut rows = vec![];
    for (&id, doc) in &scenarios {
        let cfg = doc
            .scenario
            .as_ref()
            .ok_or_else(|| anyhow!("scenario {id} has no `scenario` section"))?;
        let sim = doc.sim();
        sim.validate()?;
        let dir = out.join(format!("scenario_{id}"));
        prepare_dir(&dir)?;
        let mut results: Vec<(CompareMethod, ScenarioResult)> = vec![];
        for &method in &plan.methods {
            info!("scenario {id}: running {method}");
            let (controller, extra) = match method {
                CompareMethod::Pgc => {
                    let gains = pgc_gains.clone().expect("designed above");
                    let model = doc.build_model()?;
                    let cl = build_closed_loop(&model, &gains)?;
                    let certified =
                        find_certificate(&cl, design_doc.synthesis().epsilon)?.is_some();
                    (
                        AccController::Gains { gains },
                        Some((moment_summary(&cl)?, certified)),
                    )
                }
                CompareMethod::Idm => (acc_controller(ControllerKind::Idm, None)?, None),
                CompareMethod::Rbc => (acc_controller(ControllerKind::Rbc, None)?, None),
            };
            let res = run_scenario(id, &controller, Some(cfg), &sim)?;
            let mdir = dir.join(method.as_str());
            prepare_dir(&mdir)?;
            let path = mdir.join("ensemble_stats.csv");
            write_ensemble_csv(&path, &res.stats)?;
            files.push(path);
            write_samples(&mdir, &res.samples, &res.stats.observable_names, &mut files)?;
            rows.push(MethodRow {
                scenario: id,
                method,
                collision_fraction: res.collision_fraction,
                divergence_fraction: res.divergence_fraction,
                collided_or_diverged_fraction: collided_or_diverged(&res.stats),
                failure_fraction: res.failure_fraction,
                tail_mean_sq: res.tail.as_ref().map(|t| t.mean),
                tail_stderr: res.tail.as_ref().map(|t| t.stderr),
                stable: res.failure_fraction <= 0.05,
                moments: extra.as_ref().map(|e| e.0.clone()),
                certified: extra.map(|e| e.1),
            });
            if res.divergence_fraction > 0.5 {
                m.warnings.push(format!(
                    "scenario {id}, {method}: divergence fraction {:.3} exceeds 50%",
                    res.divergence_fraction
                ));
            }
            results.push((method, res));
        }
        let series: Vec<(&str, &EnsembleStats)> = results
            .iter()
            .map(|(k, r)| (k.as_str(), &r.stats))
            .collect();
        let title = format!("Scenario {id}");
        write_svg(
            dir.join("comparison.svg"),
            plots::acc_figure(&title, &series),
            &mut files,
        )?;
        if let Some(s) = results.first().and_then(|(_, r)| r.samples.first()) {
            let title = format!("Scenario {id}: perception mode, path 0");
            write_svg(
                dir.join("mode_path.svg"),
                plots::mode_figure(&title, s),
                &mut files,
            )?;
        }
    }
    print_table(&rows);
    let path = out.join(SUMMARY);
    write_json(
        &path,
        &ReproduceSummary {
            design: design_summary,
            results: rows,
        },
    )?;
    files.push(path);
    finish_manifest(out, m, &files)?;
    Ok(Outcome::Success)
}

fn collided_or_diverged(s: &EnsembleStats) -> f64 {
    let n = s
        .paths
        .iter()
        .filter(|p| p.collided_at.is_some() || p.diverged_at.is_some())
        .count();
    n as f64 / s.paths.len().max(1) as f64
}

fn print_table(rows: &[MethodRow]) {
    println!(
        "{:>8} {:>6} {:>10} {:>10} {:>10} {:>14} {:>8}",
        "scenario", "method", "collision", "diverged", "failed", "tail E[x'x]", "stable"
    );
    for r in rows {
        println!(
            "{:>8} {:>6} {:>10.4} {:>10.4} {:>10.4} {:>14.6e} {:>8}",
            r.scenario,
            r.method,
            r.collision_fraction,
            r.divergence_fraction,
            r.failure_fraction,
            r.tail_mean_sq.unwrap_or(f64::NAN),
            if r.stable { "yes" } else { "no" }
        );
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| anyhow!("{}:{}:{}: {e}", path.display(), e.line(), e.column()))
}

/// Re-run the command recorded in a manifest.
pub fn replay(manifest: &Manifest, out: &Path) -> Result<Outcome> {
    let config = || {
        manifest
            .config
            .clone()
            .ok_or_else(|| anyhow!("manifest has no `config`"))
    };
    match manifest.command.as_str() {
        "analyze" => analyze(&config()?, Some(out)),
        "synthesize" => {
            let method = manifest
                .method
                .as_deref()
                .ok_or_else(|| anyhow!("manifest has no `method`"))?;
            synthesize(&config()?, method.parse()?, out)
        }
        "simulate" => {
            let kind = manifest.controller.as_deref().unwrap_or("gains");
            simulate(&config()?, kind.parse()?, out)
        }
        "reproduce" => {
            let plan = ReproducePlan {
                design: manifest
                    .design
                    .clone()
                    .ok_or_else(|| anyhow!("manifest has no `design`"))?,
                scenarios: manifest
                    .scenarios
                    .clone()
                    .ok_or_else(|| anyhow!("manifest has no `scenarios`"))?,
                methods: manifest
                    .methods
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .map(|s| s.parse())
                    .collect::<Result<_>>()?,
            };
            reproduce(&plan, out)
        }
        other => bail!("manifest command `{other}` cannot be replayed"),
    }
}

//! Argument parsing and dispatch.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::builtin;
use crate::commands::{self, CompareMethod, ControllerKind, Method, Outcome, ReproducePlan};
use crate::config::{
    apply_overrides, gains_rows, load_document, load_gains, ConfigDocument, Override,
};

#[derive(Debug, Parser)]
#[command(
    name = "jumpctl",
    version,
    about = "Mean-square analysis, gain synthesis and Monte-Carlo simulation of Markov jump linear systems"
)]
pub struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for a mean-square stability certificate for given gains.
    Analyze {
        #[command(flatten)]
        input: Input,
        /// Write summary.json and manifest.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Design mode-dependent output-feedback gains.
    Synthesize {
        /// `ssc` (stability only) or `pgc` (guaranteed performance).
        #[arg(long, default_value = "pgc")]
        method: Method,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        out: OutDir,
    },
    /// Monte-Carlo ensemble of the closed loop.
    Simulate {
        /// `gains`, or for cruise-control scenarios also `idm` or `rbc`.
        #[arg(long, default_value = "gains")]
        controller: ControllerKind,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        out: OutDir,
    },
    /// Design cruise-control gains and compare them with the baselines on
    /// the built-in scenarios.
    Reproduce {
        /// 1, 2, 3 or all; repeatable.
        #[arg(long, default_value = "all")]
        scenario: Vec<String>,
        /// Comma-separated subset of pgc, idm, rbc.
        #[arg(long, value_delimiter = ',', default_value = "pgc,idm,rbc")]
        methods: Vec<CompareMethod>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        out: OutDir,
    },
    /// Re-run the command recorded in a manifest.json.
    Replay {
        manifest: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Debug, Args)]
pub struct OutDir {
    /// Output directory.
    #[arg(long = "out", env = "JUMPCTL_OUT", default_value = "jumpctl-out")]
    pub dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct Input {
    /// JSON configuration document.
    #[arg(conflicts_with = "builtin")]
    pub config: Option<PathBuf>,
    /// Built-in parameter set: acc, scenario1, scenario2 or scenario3.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Gains file ({"gains": [...]} or a bare array), replacing the
    /// document's `gains`.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub n_paths: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub record_stride: Option<usize>,
    #[arg(long)]
    pub keep_paths: Option<usize>,
    /// Initial mode index, counted from 0.
    #[arg(long)]
    pub initial_mode: Option<usize>,
    #[arg(long)]
    pub gamma1_bar: Option<f64>,
    #[arg(long)]
    pub gamma2_bar: Option<f64>,
    #[arg(long)]
    pub gamma3_bar: Option<f64>,
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Set any document field, e.g. `--set scenario.delta_d=-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    pub fn to_list(&self) -> Result<Vec<Override>> {
        let mut out = vec![];
        let mut push = |key: &str, v: Option<String>| -> Result<()> {
            if let Some(v) = v {
                out.push(Override::new(key, &v)?);
            }
            Ok(())
        };
        push("sim.dt", self.dt.map(|v| v.to_string()))?;
        push("sim.horizon", self.horizon.map(|v| v.to_string()))?;
        push("sim.n_paths", self.n_paths.map(|v| v.to_string()))?;
        push("sim.seed", self.seed.map(|v| v.to_string()))?;
        push(
            "sim.record_stride",
            self.record_stride.map(|v| v.to_string()),
        )?;
        push("sim.keep_paths", self.keep_paths.map(|v| v.to_string()))?;
        push("sim.initial_mode", self.initial_mode.map(|v| v.to_string()))?;
        push(
            "synthesis.gamma1_bar",
            self.gamma1_bar.map(|v| v.to_string()),
        )?;
        push(
            "synthesis.gamma2_bar",
            self.gamma2_bar.map(|v| v.to_string()),
        )?;
        push(
            "synthesis.gamma3_bar",
            self.gamma3_bar.map(|v| v.to_string()),
        )?;
        push("synthesis.alpha1", self.alpha1.map(|v| v.to_string()))?;
        push("synthesis.epsilon", self.epsilon.map(|v| v.to_string()))?;
        for s in &self.set {
            out.push(Override::parse(s)?);
        }
        Ok(out)
    }

    pub fn apply(&self, doc: &ConfigDocument) -> Result<ConfigDocument> {
        apply_overrides(doc, &self.to_list()?)
    }
}

impl Input {
    /// The document with overrides applied and any gains file merged in.
    pub fn load(&self) -> Result<ConfigDocument> {
        let base = match (&self.config, &self.builtin) {
            (Some(p), _) => load_document(p)?,
            (None, Some(name)) => builtin::by_name(name)?,
            (None, None) => bail!("give a CONFIG file or --builtin NAME"),
        };
        let mut doc = self.overrides.apply(&base)?;
        if let Some(path) = &self.gains {
            let model = doc.build_model()?;
            doc.gains = Some(gains_rows(&load_gains(path, &model)?));
        }
        Ok(doc)
    }
}

fn parse_scenarios(specs: &[String]) -> Result<Vec<u32>> {
    let mut ids = vec![];
    for s in specs {
        match s.trim() {
            "all" => ids.extend([1, 2, 3]),
            t => match t.parse::<u32>() {
                Ok(id @ 1..=3) => ids.push(id),
                _ => bail!("--scenario `{t}`: expected 1, 2, 3 or all"),
            },
        }
    }
    ids.sort_unstable();
    ids.dedup();
    Ok(ids)
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Analyze { input, out } => commands::analyze(&input.load()?, out.as_deref()),
        Command::Synthesize { method, input, out } => {
            commands::synthesize(&input.load()?, *method, &out.dir)
        }
        Command::Simulate {
            controller,
            input,
            out,
        } => commands::simulate(&input.load()?, *controller, &out.dir),
        Command::Reproduce {
            scenario,
            methods,
            overrides,
            out,
        } => {
            let mut plan = ReproducePlan::builtin(&parse_scenarios(scenario)?, methods)?;
            // Synthesis settings go to the design; simulation settings to every scenario.
            plan.design = overrides.apply(&plan.design)?;
            for doc in plan.scenarios.values_mut() {
                *doc = overrides.apply(doc)?;
            }
            commands::reproduce(&plan, &out.dir)
        }
        Command::Replay { manifest, out } => {
            commands::replay(&commands::load_manifest(manifest)?, &out.dir)
        }
    }
}

/// Convenience for tests and the Python binding: parse and run an argv.
pub fn run_args<I, S>(args: I) -> Result<Outcome>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    run(&Cli::try_parse_from(args)?)
}

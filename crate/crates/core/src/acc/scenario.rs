//! Closed-loop cruise-control scenarios.

use serde::{Deserialize, Serialize};

use super::{
    build_acc_model, idm_control, lead_acceleration, lead_velocity, rbc_control, AccConfig,
    IdmParams, LeadProfile, RbcParams,
};
use crate::error::{Error, Result};
use crate::model::{GainSet, Generator, PemAdm};
use crate::simulate::{
    run_ensemble, EnsembleStats, JumpSystem, SimConfig, TailStats, TrajectorySample,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AccController {
    /// Mode-dependent output feedback `u = K(r) y`.
    Gains {
        gains: GainSet,
    },
    Idm {
        params: IdmParams,
    },
    Rbc {
        params: RbcParams,
    },
}

impl AccController {
    pub fn name(&self) -> &'static str {
        match self {
            AccController::Gains { .. } => "gains",
            AccController::Idm { .. } => "idm",
            AccController::Rbc { .. } => "rbc",
        }
    }
}

/// The cruise-control plant driven by a controller that sees only the
/// switched noisy measurement. The ego vehicle knows its own speed exactly.
pub struct AccSystem {
    pub model: PemAdm,
    pub cfg: AccConfig,
    pub controller: AccController,
}

impl AccSystem {
    pub fn new(cfg: &AccConfig, controller: AccController) -> Result<Self> {
        let model = build_acc_model(cfg)?;
        if let AccController::Gains { gains } = &controller {
            if gains.len() != 2 || gains.gains.iter().any(|k| k.shape() != (1, 2)) {
                return Err(Error::InvalidOption(
                    "cruise-control gains must be two 1x2 matrices".into(),
                ));
            }
        }
        Ok(AccSystem {
            model,
            cfg: cfg.clone(),
            controller,
        })
    }
}

impl JumpSystem for AccSystem {
    fn generator(&self) -> &Generator {
        &self.model.generator
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn noise_dim(&self) -> usize {
        2
    }
    fn output_dim(&self) -> usize {
        2
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn signals(
        &self,
        t: f64,
        h: f64,
        mode: usize,
        x: &[f64],
        xi: &[f64],
        y: &mut [f64],
        u: &mut [f64],
    ) {
        let m = &self.model.modes[mode];
        let s = 1.0 / h.sqrt();
        for (r, yr) in y.iter_mut().enumerate().take(2) {
            *yr = m.c[(r, 0)] * x[0]
                + m.c[(r, 1)] * x[1]
                + (m.d[(r, 0)] * xi[0] + m.d[(r, 1)] * xi[1]) * s;
        }
        let v_ego = lead_velocity(&self.cfg.lead_profile, self.cfg.lead0[1], t) + x[1];
        u[0] = match &self.controller {
            AccController::Gains { gains } => {
                let k = &gains.gains[mode];
                k[(0, 0)] * y[0] + k[(0, 1)] * y[1]
            }
            // The baselines are saturating laws for a real vehicle, which
            // does not reverse: braking stops at standstill.
            AccController::Idm { params } => {
                let gap = -(y[0] + self.cfg.delta_d);
                no_reverse(idm_control(gap, v_ego, y[1], params).accel, v_ego)
            }
            AccController::Rbc { params } => no_reverse(rbc_control(-y[0], y[1], params), v_ego),
        };
    }
    fn advance(
        &self,
        t: f64,
        h: f64,
        _mode: usize,
        x: &mut [f64],
        u: &[f64],
        _xi: &[f64],
        _scratch: &mut [f64],
    ) {
        let a_lead = lead_acceleration(&self.cfg.lead_profile, t);
        let v = x[1];
        x[0] += v * h;
        x[1] += (u[0] - a_lead) * h;
    }
    fn observable_names(&self) -> Vec<String> {
        vec!["delta1".into(), "gap".into()]
    }
    fn observe(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let delta1 = x[0] + self.cfg.delta_d;
        out[0] = delta1;
        out[1] = -delta1;
    }
    /// The ego vehicle has reached the lead: `δ₁ > 0`.
    fn collided(&self, _t: f64, x: &[f64]) -> bool {
        x[0] + self.cfg.delta_d > 0.0
    }
}

fn no_reverse(accel: f64, v_ego: f64) -> f64 {
    if v_ego <= 0.0 {
        accel.max(0.0)
    } else {
        accel
    }
}

/// Built-in scenarios: 1 constant-speed lead, 2 sinusoidal lead, both with
/// the low misdetection rate; 3 sinusoidal lead with the high rate.
pub fn scenario_config(id: u32) -> Result<AccConfig> {
    let sine = LeadProfile::Sinusoidal {
        amplitude: 1.0,
        frequency: 1.0,
    };
    let high = Generator::from_rows(&[vec![-4.0, 4.0], vec![3.0, -3.0]])?;
    match id {
        1 => Ok(AccConfig::default()),
        2 => Ok(AccConfig {
            lead_profile: sine,
            ..Default::default()
        }),
        3 => Ok(AccConfig {
            lead_profile: sine,
            generator: high,
            ..Default::default()
        }),
        other => Err(Error::UnknownScenario(other)),
    }
}

/// Tail window used when the simulation config does not give one.
pub fn default_tail_window(horizon: f64) -> [f64; 2] {
    [0.5 * horizon, horizon]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: u32,
    pub controller: String,
    pub stats: EnsembleStats,
    pub samples: Vec<TrajectorySample>,
    pub collision_fraction: f64,
    pub divergence_fraction: f64,
    /// Paths that collided, blew up, or whose tail RMS error exceeds the
    /// initial error norm.
    pub failure_fraction: f64,
    pub tail: Option<TailStats>,
    pub collision_times: Vec<Option<f64>>,
}

/// Mode the scenarios start in unless the simulation config says otherwise:
/// the lead is detected at t = 0.
pub const ACC_INITIAL_MODE: usize = 1;

/// Simulate scenario `id` with `controller`. `cfg` replaces the built-in
/// scenario parameters when given, and `id` then only labels the result.
pub fn run_scenario(
    id: u32,
    controller: &AccController,
    cfg: Option<&AccConfig>,
    sim: &SimConfig,
) -> Result<ScenarioResult> {
    let base;
    let cfg = match cfg {
        Some(c) => c,
        None => {
            base = scenario_config(id)?;
            &base
        }
    };
    let sys = AccSystem::new(cfg, controller.clone())?;
    let mut sim = sim.clone();
    if sim.tail_window.is_none() {
        sim.tail_window = Some(default_tail_window(sim.n_steps() as f64 * sim.dt));
    }
    if sim.initial_mode.is_none() {
        sim.initial_mode = Some(ACC_INITIAL_MODE);
    }
    let x0 = cfg.x0();
    let x0_sq = x0[0] * x0[0] + x0[1] * x0[1];
    let ens = run_ensemble(&sys, &x0, &sim)?;
    let n = ens.stats.n_paths as f64;
    let failures = ens
        .stats
        .paths
        .iter()
        .filter(|p| {
            p.collided_at.is_some()
                || p.diverged_at.is_some()
                || p.tail_mean_sq.is_some_and(|v| v > x0_sq)
        })
        .count();
    Ok(ScenarioResult {
        scenario: id,
        controller: controller.name().to_string(),
        collision_fraction: ens.stats.collision_fraction,
        divergence_fraction: ens.stats.divergence_fraction,
        failure_fraction: failures as f64 / n,
        tail: ens.stats.tail.clone(),
        collision_times: ens.stats.paths.iter().map(|p| p.collided_at).collect(),
        stats: ens.stats,
        samples: ens.samples,
    })
}

/// First time the ego reaches the lead (`δ₁ > 0`), linearly interpolated
/// between samples.
pub fn detect_collision(times: &[f64], delta1: &[f64]) -> Option<f64> {
    let k = delta1.iter().position(|&d| d > 0.0)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (d0, d1) = (delta1[k - 1], delta1[k]);
    let (t0, t1) = (times[k - 1], times[k]);
    Some(t0 + (0.0 - d0) / (d1 - d0) * (t1 - t0))
}

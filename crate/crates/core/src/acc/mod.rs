//! Adaptive cruise control with a switched, noisy perception channel.
//!
//! The state is the tracking error `x̃ = (δ₁ − δ₁ᵈ, v_ego − v_lead)` with
//! `δ₁ = p_ego − p_lead` (negative while following). The error obeys
//! `dx̃ = (A x̃ + B u − B a_lead(t)) dt` with a double-integrator `A`, `B`.
//! Mode 0 is a misdetection (position channel blind), mode 1 is normal.

mod baselines;
mod scenario;

pub use baselines::{idm_control, rbc_control, IdmOutput, IdmParams, RbcParams};
pub use scenario::{
    default_tail_window, detect_collision, run_scenario, scenario_config, AccController, AccSystem,
    ScenarioResult, ACC_INITIAL_MODE,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Generator, ModeSystem, PemAdm};

/// Lead-vehicle acceleration profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeadProfile {
    Constant,
    /// `a(t) = amplitude · sin(frequency · t)`.
    Sinusoidal {
        amplitude: f64,
        frequency: f64,
    },
    /// `(start_time, acceleration)` pairs sorted by start time; zero before
    /// the first start.
    Piecewise {
        schedule: Vec<(f64, f64)>,
    },
}

impl LeadProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            LeadProfile::Constant => Ok(()),
            LeadProfile::Sinusoidal {
                amplitude,
                frequency,
            } => {
                if amplitude.is_finite() && *frequency > 0.0 && frequency.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidOption(format!(
                        "sinusoidal profile needs finite amplitude and positive frequency, got ({amplitude}, {frequency})"
                    )))
                }
            }
            LeadProfile::Piecewise { schedule } => {
                let sorted = schedule.windows(2).all(|w| w[0].0 < w[1].0);
                let finite = schedule
                    .iter()
                    .all(|(t, a)| t.is_finite() && a.is_finite() && *t >= 0.0);
                if sorted && finite {
                    Ok(())
                } else {
                    Err(Error::InvalidOption(
                        "piecewise schedule needs finite, non-negative, strictly increasing start times".into(),
                    ))
                }
            }
        }
    }
}

/// Lead acceleration (m/s²) at time `t`.
pub fn lead_acceleration(profile: &LeadProfile, t: f64) -> f64 {
    match profile {
        LeadProfile::Constant => 0.0,
        LeadProfile::Sinusoidal {
            amplitude,
            frequency,
        } => amplitude * (frequency * t).sin(),
        LeadProfile::Piecewise { schedule } => {
            let k = schedule.partition_point(|&(s, _)| s <= t);
            if k == 0 {
                0.0
            } else {
                schedule[k - 1].1
            }
        }
    }
}

/// Lead velocity (m/s) at time `t`, integrated in closed form.
pub fn lead_velocity(profile: &LeadProfile, v0: f64, t: f64) -> f64 {
    match profile {
        LeadProfile::Constant => v0,
        LeadProfile::Sinusoidal {
            amplitude,
            frequency,
        } => v0 + amplitude / frequency * (1.0 - (frequency * t).cos()),
        LeadProfile::Piecewise { schedule } => {
            let mut v = v0;
            for (k, &(start, a)) in schedule.iter().enumerate() {
                if start >= t {
                    break;
                }
                let end = schedule.get(k + 1).map_or(t, |s| s.0.min(t));
                v += a * (end - start);
            }
            v
        }
    }
}

/// Lead position (m) at time `t`, integrated in closed form.
pub fn lead_position(profile: &LeadProfile, p0: f64, v0: f64, t: f64) -> f64 {
    match profile {
        LeadProfile::Constant => p0 + v0 * t,
        LeadProfile::Sinusoidal {
            amplitude,
            frequency,
        } => {
            let r = amplitude / frequency;
            p0 + (v0 + r) * t - r / frequency * (frequency * t).sin()
        }
        LeadProfile::Piecewise { schedule } => {
            let (mut p, mut v, mut cur) = (p0, v0, 0.0);
            for (k, &(start, a)) in schedule.iter().enumerate() {
                if start >= t {
                    break;
                }
                p += v * (start - cur);
                let end = schedule.get(k + 1).map_or(t, |s| s.0.min(t));
                let dt = end - start;
                p += v * dt + 0.5 * a * dt * dt;
                v += a * dt;
                cur = end;
            }
            p + v * (t - cur)
        }
    }
}

/// Missing fields take the scenario-1 values when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccConfig {
    /// Measurement noise scales: `D(0) = diag(σ00, σ01)`, `D(1) = diag(σ10, σ11)`.
    pub sigma00: f64,
    pub sigma01: f64,
    pub sigma10: f64,
    pub sigma11: f64,
    /// Two-mode generator; mode 0 misdetected, mode 1 normal.
    pub generator: Generator,
    /// Desired `δ₁ = p_ego − p_lead` (m).
    pub delta_d: f64,
    /// Ego (position m, velocity m/s) at t = 0.
    pub ego0: [f64; 2],
    /// Lead (position m, velocity m/s) at t = 0.
    pub lead0: [f64; 2],
    pub lead_profile: LeadProfile,
}

impl Default for AccConfig {
    /// Constant-speed lead with the low misdetection rate.
    fn default() -> Self {
        AccConfig {
            sigma00: 1.0,
            sigma01: 1.0,
            sigma10: 0.05,
            sigma11: 0.5,
            generator: Generator::from_rows(&[vec![-4.0, 4.0], vec![0.5, -0.5]])
                .expect("valid generator"),
            delta_d: -5.0,
            ego0: [0.0, 1.0],
            lead0: [10.0, 5.0],
            lead_profile: LeadProfile::Constant,
        }
    }
}

impl AccConfig {
    pub fn validate(&self) -> Result<()> {
        let sig = [self.sigma00, self.sigma01, self.sigma10, self.sigma11];
        if sig.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidOption(format!(
                "noise scales must be finite and non-negative, got {sig:?}"
            )));
        }
        if self.generator.n_modes() != 2 {
            return Err(Error::InvalidOption(format!(
                "the cruise-control model has 2 modes, generator has {}",
                self.generator.n_modes()
            )));
        }
        let vals = [
            self.delta_d,
            self.ego0[0],
            self.ego0[1],
            self.lead0[0],
            self.lead0[1],
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidOption(
                "initial conditions must be finite".into(),
            ));
        }
        self.lead_profile.validate()
    }

    pub fn initial_state(&self) -> AccState {
        AccState::from_vehicles(self.ego0, self.lead0, self.delta_d)
    }

    /// Initial tracking error `x̃(0)`.
    pub fn x0(&self) -> [f64; 2] {
        self.initial_state().err
    }
}

/// Both vehicles plus the derived tracking quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AccState {
    pub ego: [f64; 2],
    pub lead: [f64; 2],
    pub err: [f64; 2],
    pub delta1: f64,
}

impl AccState {
    pub fn from_vehicles(ego: [f64; 2], lead: [f64; 2], delta_d: f64) -> Self {
        let delta1 = ego[0] - lead[0];
        AccState {
            ego,
            lead,
            err: [delta1 - delta_d, ego[1] - lead[1]],
            delta1,
        }
    }

    /// Headway `p_lead − p_ego`.
    pub fn gap(&self) -> f64 {
        -self.delta1
    }
}

pub fn build_acc_model(cfg: &AccConfig) -> Result<PemAdm> {
    cfg.validate()?;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let diag = |x: f64, y: f64| DMatrix::from_row_slice(2, 2, &[x, 0.0, 0.0, y]);
    PemAdm::new(
        vec![
            ModeSystem {
                a: a.clone(),
                b: b.clone(),
                c: diag(0.0, 1.0),
                d: diag(cfg.sigma00, cfg.sigma01),
            },
            ModeSystem {
                a,
                b,
                c: diag(1.0, 1.0),
                d: diag(cfg.sigma10, cfg.sigma11),
            },
        ],
        cfg.generator.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use std::f64::consts::PI;

    #[test]
    fn default_model_matrices() {
        let m = build_acc_model(&AccConfig::default()).unwrap();
        assert!(validate_model(&m).is_ok());
        assert_eq!(m.modes[0].d, DMatrix::identity(2, 2));
        assert_eq!(
            m.modes[1].d,
            DMatrix::from_row_slice(2, 2, &[0.05, 0.0, 0.0, 0.5])
        );
        assert_eq!(m.modes[0].c[(0, 0)], 0.0);
        assert_eq!(m.modes[1].c, DMatrix::identity(2, 2));
    }

    #[test]
    fn noiseless_model() {
        let cfg = AccConfig {
            sigma00: 0.0,
            sigma01: 0.0,
            sigma10: 0.0,
            sigma11: 0.0,
            ..Default::default()
        };
        let m = build_acc_model(&cfg).unwrap();
        assert!(m.modes.iter().all(|s| s.d.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn initial_error() {
        let s = AccConfig::default().initial_state();
        assert_eq!(s.delta1, -10.0);
        assert_eq!(s.err, [-5.0, -4.0]);
        assert_eq!(s.gap(), 10.0);
    }

    #[test]
    fn profiles() {
        let sine = LeadProfile::Sinusoidal {
            amplitude: 1.0,
            frequency: 1.0,
        };
        assert_eq!(lead_acceleration(&LeadProfile::Constant, 3.7), 0.0);
        assert!((lead_acceleration(&sine, PI / 2.0) - 1.0).abs() < 1e-15);
        let pw = LeadProfile::Piecewise {
            schedule: vec![(0.0, 0.0), (5.0, -1.0)],
        };
        assert_eq!(lead_acceleration(&pw, 6.0), -1.0);
        assert_eq!(lead_acceleration(&pw, 4.9), 0.0);
        assert!((lead_velocity(&pw, 5.0, 6.0) - 4.0).abs() < 1e-12);
        assert!((lead_position(&pw, 0.0, 5.0, 6.0) - (30.0 - 0.5)).abs() < 1e-12);
        assert!((lead_velocity(&sine, 5.0, PI) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_lead_matches_quadrature() {
        let profiles = [
            LeadProfile::Sinusoidal {
                amplitude: 1.3,
                frequency: 0.7,
            },
            LeadProfile::Piecewise {
                schedule: vec![(1.0, 0.5), (2.5, -2.0), (4.0, 0.25)],
            },
        ];
        for p in &profiles {
            let h = 1e-5;
            let (mut pos, mut vel) = (2.0, 5.0);
            let n = 500_000;
            for k in 0..n {
                let t = k as f64 * h;
                let a0 = lead_acceleration(p, t);
                let a1 = lead_acceleration(p, t + h);
                pos += vel * h + h * h * (2.0 * a0 + a1) / 6.0;
                vel += 0.5 * (a0 + a1) * h;
            }
            let t = n as f64 * h;
            assert!((lead_velocity(p, 5.0, t) - vel).abs() < 1e-4, "{p:?}");
            assert!((lead_position(p, 2.0, 5.0, t) - pos).abs() < 1e-4, "{p:?}");
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = AccConfig {
            lead_profile: LeadProfile::Sinusoidal {
                amplitude: 1.0,
                frequency: 1.0,
            },
            ..Default::default()
        };
        let s = serde_json::to_string(&cfg).unwrap();
        let back: AccConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}

//! Classical car-following laws used as baselines.

use serde::{Deserialize, Serialize};

/// Intelligent-driver-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Time headway (s).
    pub t_headway: f64,
    pub a_max: f64,
    /// Comfortable deceleration (m/s²).
    pub b: f64,
    /// Standstill gap (m).
    pub s0: f64,
    /// Deceleration limit (m/s²).
    pub b_max: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams {
            v0: 5.0,
            t_headway: 1.5,
            a_max: 1.5,
            b: 2.0,
            s0: 2.0,
            b_max: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdmOutput {
    pub accel: f64,
    /// Set when the gap is not positive and the law is undefined.
    pub collision_imminent: bool,
}

/// `a = a_max [1 − (v/v₀)⁴ − (s*/s)²]` with
/// `s* = s₀ + max(0, vT + vΔv / (2√(a_max b)))`, clamped to `[−b_max, a_max]`.
/// `gap` is the headway, `v` the ego speed and `dv` the closing speed
/// `v_ego − v_lead`.
pub fn idm_control(gap: f64, v: f64, dv: f64, p: &IdmParams) -> IdmOutput {
    if !(gap > 0.0) {
        return IdmOutput {
            accel: -p.b_max,
            collision_imminent: true,
        };
    }
    let s_star = p.s0 + (v * p.t_headway + v * dv / (2.0 * (p.a_max * p.b).sqrt())).max(0.0);
    let a = p.a_max * (1.0 - (v / p.v0).powi(4) - (s_star / gap).powi(2));
    IdmOutput {
        accel: a.clamp(-p.b_max, p.a_max),
        collision_imminent: false,
    }
}

/// Threshold-rule controller parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RbcParams {
    /// Dead band on the gap error (m).
    pub e_tol: f64,
    /// Rule acceleration magnitude (m/s²).
    pub a_r: f64,
    /// Speed damping inside the dead band (1/s).
    pub k_v: f64,
    pub a_clamp: f64,
}

impl Default for RbcParams {
    fn default() -> Self {
        RbcParams {
            e_tol: 0.5,
            a_r: 1.0,
            k_v: 1.0,
            a_clamp: 3.0,
        }
    }
}

/// `e` is the gap error (headway minus desired headway, negative when too
/// close) and `dv` the closing speed.
pub fn rbc_control(e: f64, dv: f64, p: &RbcParams) -> f64 {
    let a = if e < -p.e_tol {
        -p.a_r
    } else if e > p.e_tol {
        p.a_r
    } else {
        -p.k_v * dv
    };
    a.clamp(-p.a_clamp, p.a_clamp)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idm_free_road_equilibrium() {
        let p = IdmParams::default();
        let out = idm_control(1e9, p.v0, 0.0, &p);
        assert!(out.accel.abs() < 1e-9);
    }

    #[test]
    fn idm_zero_gap_brakes() {
        let p = IdmParams::default();
        assert_eq!(
            idm_control(0.0, 3.0, 0.0, &p),
            IdmOutput {
                accel: -8.0,
                collision_imminent: true
            }
        );
        let near = idm_control(1e-6, 3.0, 0.0, &p);
        assert_eq!(near.accel, -8.0);
        assert!(!near.collision_imminent);
    }

    #[test]
    fn rbc_rules() {
        let p = RbcParams::default();
        assert_eq!(rbc_control(0.0, 0.0, &p), 0.0);
        assert_eq!(rbc_control(-3.0, 0.0, &p), -1.0);
        assert_eq!(rbc_control(3.0, 0.0, &p), 1.0);
        assert_eq!(rbc_control(0.2, 10.0, &p), -3.0);
    }
}

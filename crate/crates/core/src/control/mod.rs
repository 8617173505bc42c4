//! Crank-rate PD, FDC length PD and the pitch outer loop.

use std::f64::consts::TAU;

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// When false every command is zero and the reference stays at the zero path.
    pub enabled: bool,
    pub k_d1_per_s: f64,
    pub omega_ref_rad_per_s: f64,
    pub k_p2_per_s2: [f64; 4],
    pub k_d2_per_s: [f64; 4],
    /// Zero-path FDC lengths `[l_3b, l_3c, l_8b, l_10b]`.
    pub l_ref_zp_m: [f64; 4],
    /// Pitch gain; multiplied by `k_c_unit_m` to give meters per radian.
    pub k_c: [f64; 4],
    /// Meters represented by one unit of `k_c * rad`. The default reads the
    /// gains in millimeters per radian, matching the zero-path lengths.
    pub k_c_unit_m: f64,
    pub theta_y_ref_rad: f64,
    pub l_min_m: [f64; 4],
    pub l_max_m: [f64; 4],
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let l_ref_zp_m = [7.8e-3, 10.5e-3, 6.2e-3, 7.2e-3];
        Self {
            enabled: true,
            k_d1_per_s: 20.0,
            omega_ref_rad_per_s: TAU * 10.0,
            k_p2_per_s2: [4000.0; 4],
            k_d2_per_s: [120.0; 4],
            l_ref_zp_m,
            k_c: [0.42, -0.26, -0.38, -0.097],
            k_c_unit_m: 1e-3,
            theta_y_ref_rad: 33f64.to_radians(),
            l_min_m: l_ref_zp_m.map(|l| l - 3e-3),
            l_max_m: l_ref_zp_m.map(|l| l + 3e-3),
        }
    }
}

/// Commands for one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub u_g: f64,
    pub u_p: Vector4<f64>,
    pub l_ref: Vector4<f64>,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = |key: &str, v: &[f64]| {
            if v.iter().all(|x| x.is_finite()) {
                Ok(())
            } else {
                Err(Error::validation(format!("control.{key}"), "must be finite"))
            }
        };
        finite("k_d1_per_s", &[self.k_d1_per_s])?;
        finite("k_p2_per_s2", &self.k_p2_per_s2)?;
        finite("k_d2_per_s", &self.k_d2_per_s)?;
        finite("k_c", &self.k_c)?;
        finite("k_c_unit_m", &[self.k_c_unit_m])?;
        finite("theta_y_ref_rad", &[self.theta_y_ref_rad])?;
        if !(self.omega_ref_rad_per_s > 0.0 && self.omega_ref_rad_per_s.is_finite()) {
            return Err(Error::validation("control.omega_ref_rad_per_s", "must be positive"));
        }
        for i in 0..4 {
            let (lo, zp, hi) = (self.l_min_m[i], self.l_ref_zp_m[i], self.l_max_m[i]);
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::validation("control.l_min_m", format!("l_min > l_max on channel {i}")));
            }
            if !(lo <= zp && zp <= hi) {
                return Err(Error::validation("control.l_ref_zp_m", format!("channel {i}: {zp} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn saturate(&self, l: &Vector4<f64>) -> Vector4<f64> {
        Vector4::from_fn(|i, _| l[i].clamp(self.l_min_m[i], self.l_max_m[i]))
    }

    pub fn k_c_m_per_rad(&self) -> Vector4<f64> {
        Vector4::from(self.k_c) * self.k_c_unit_m
    }
}

/// `u_g = K_d1 (omega_ref - theta_1')`.
pub fn flap_speed_control(crank_rate: f64, cfg: &ControllerConfig) -> f64 {
    cfg.k_d1_per_s * (cfg.omega_ref_rad_per_s - crank_rate)
}

/// `u_p = K_p2 (l_ref - l) - K_d2 l'`, channel by channel.
pub fn fdc_length_control(
    l: &Vector4<f64>,
    l_dot: &Vector4<f64>,
    l_ref: &Vector4<f64>,
    cfg: &ControllerConfig,
) -> Vector4<f64> {
    Vector4::from_fn(|i, _| cfg.k_p2_per_s2[i] * (l_ref[i] - l[i]) - cfg.k_d2_per_s[i] * l_dot[i])
}

/// `l_ref = sat(l_zp + K_c (theta_ref - theta_y))`.
pub fn pitch_controller(theta_y: f64, cfg: &ControllerConfig) -> Vector4<f64> {
    let raw = Vector4::from(cfg.l_ref_zp_m) + cfg.k_c_m_per_rad() * (cfg.theta_y_ref_rad - theta_y);
    cfg.saturate(&raw)
}

/// All three laws for one step; zero commands when disabled.
pub fn control_step(
    crank_rate: f64,
    l: &Vector4<f64>,
    l_dot: &Vector4<f64>,
    theta_y: f64,
    cfg: &ControllerConfig,
) -> ControlOutput {
    if !cfg.enabled {
        return ControlOutput { u_g: 0.0, u_p: Vector4::zeros(), l_ref: Vector4::from(cfg.l_ref_zp_m) };
    }
    let l_ref = pitch_controller(theta_y, cfg);
    ControlOutput { u_g: flap_speed_control(crank_rate, cfg), u_p: fdc_length_control(l, l_dot, &l_ref, cfg), l_ref }
}

use std::f64::consts::TAU;
use std::io::{self, BufWriter, Write};

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use super::{Trajectory, TrajectorySample};
use crate::error::{Error, Result};

/// Poincaré-section settings. The section state is `(theta_y, omega, qd_d)`,
/// each block scaled by its weight before taking the Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitCycleConfig {
    /// Crank phase of the section, taken modulo one turn.
    pub section_phase_rad: f64,
    pub pitch_weight_per_rad: f64,
    pub body_rate_weight_s_per_rad: f64,
    pub body_velocity_weight_s_per_m: f64,
    pub link_rate_weight_s_per_rad: f64,
    pub threshold: f64,
    pub required_crossings: usize,
    pub min_crossings: usize,
}

impl Default for LimitCycleConfig {
    fn default() -> Self {
        Self {
            section_phase_rad: 0.0,
            pitch_weight_per_rad: 1.0 / 1f64.to_radians(),
            body_rate_weight_s_per_rad: 1.0,
            body_velocity_weight_s_per_m: 1.0,
            link_rate_weight_s_per_rad: 0.1,
            threshold: 1.0,
            required_crossings: 3,
            min_crossings: 10,
        }
    }
}

impl LimitCycleConfig {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("pitch_weight_per_rad", self.pitch_weight_per_rad),
            ("body_rate_weight_s_per_rad", self.body_rate_weight_s_per_rad),
            ("body_velocity_weight_s_per_m", self.body_velocity_weight_s_per_m),
            ("link_rate_weight_s_per_rad", self.link_rate_weight_s_per_rad),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("limit_cycle.{key}"), "must be finite and non-negative"));
            }
        }
        if !(self.threshold > 0.0 && self.section_phase_rad.is_finite()) {
            return Err(Error::validation("limit_cycle.threshold", "must be positive"));
        }
        if self.required_crossings == 0 {
            return Err(Error::validation("limit_cycle.required_crossings", "must be at least 1"));
        }
        Ok(())
    }

    fn section_state(&self, s: &TrajectorySample) -> SVector<f64, 11> {
        let mut x = SVector::<f64, 11>::zeros();
        x[0] = self.pitch_weight_per_rad * s.pitch;
        for i in 0..3 {
            x[1 + i] = self.body_rate_weight_s_per_rad * s.dynamic.omega[i];
            x[4 + i] = self.body_velocity_weight_s_per_m * s.dynamic.qd[i];
        }
        for i in 0..4 {
            x[7 + i] = self.link_rate_weight_s_per_rad * s.dynamic.qd[3 + i];
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleReport {
    pub detected: bool,
    /// Mean spacing of the settled crossings, or of all crossings when not detected.
    pub period_s: f64,
    pub crossing_times_s: Vec<f64>,
    /// Distance between crossing `n` and `n + 1`.
    pub return_distances: Vec<f64>,
    pub transient_end_s: Option<f64>,
}

/// Samples the trajectory on a fixed crank phase and looks for a settled orbit.
///
/// The transient ends at the first crossing after which every return
/// distance stays below the threshold, provided at least
/// `required_crossings` distances follow it.
pub fn detect_limit_cycle(traj: &Trajectory, cfg: &LimitCycleConfig) -> Result<LimitCycleReport> {
    cfg.validate()?;
    let mut times = Vec::new();
    let mut states = Vec::new();
    for pair in traj.samples.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let (pa, pb) =
            (a.kinematic.crank_angle() - cfg.section_phase_rad, b.kinematic.crank_angle() - cfg.section_phase_rad);
        let (na, nb) = ((pa / TAU).floor(), (pb / TAU).floor());
        if na == nb {
            continue;
        }
        // Crossing of the level n * 2pi between the two samples, either direction.
        let level = TAU * na.max(nb);
        let w = (level - pa) / (pb - pa);
        times.push(a.t + w * (b.t - a.t));
        let (xa, xb) = (cfg.section_state(a), cfg.section_state(b));
        states.push(xa + w * (xb - xa));
    }
    if times.len() < cfg.min_crossings {
        return Err(Error::TooShort { crossings: times.len(), needed: cfg.min_crossings });
    }

    let distances: Vec<f64> = states.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let settled_from = distances.iter().rposition(|d| !(*d < cfg.threshold)).map_or(0, |i| i + 1);
    let settled = distances.len() - settled_from;
    let detected = settled >= cfg.required_crossings;

    let spacing = |from: usize| {
        let t = &times[from..];
        (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64
    };
    let period_s = if detected { spacing(settled_from) } else { spacing(0) };
    Ok(LimitCycleReport {
        detected,
        period_s,
        transient_end_s: detected.then(|| times[settled_from]),
        crossing_times_s: times,
        return_distances: distances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedgerRow {
    pub t: f64,
    pub kinetic: f64,
    pub gravitational: f64,
    pub spring: f64,
    pub total: f64,
    pub damping_work: f64,
    pub aero_work: f64,
    pub drive_work: f64,
    /// `E(t) - E(0) - W(t)`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub rows: Vec<EnergyLedgerRow>,
    /// Largest of kinetic plus spring energy, gravitational excursion and
    /// accumulated work over the episode.
    pub scale: f64,
    pub max_abs_residual: f64,
    pub max_relative_residual: f64,
}

impl EnergyAudit {
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "t,kinetic,gravitational,spring,total,damping_work,aero_work,drive_work,residual")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t,
                r.kinetic,
                r.gravitational,
                r.spring,
                r.total,
                r.damping_work,
                r.aero_work,
                r.drive_work,
                r.residual
            )?;
        }
        out.flush()
    }
}

/// Energy ledger of a logged episode and its closure residual.
pub fn energy_audit(traj: &Trajectory) -> EnergyAudit {
    let Some(first) = traj.samples.first() else {
        return EnergyAudit { rows: Vec::new(), scale: 0.0, max_abs_residual: 0.0, max_relative_residual: 0.0 };
    };
    let e0 = first.energy.total() - first.energy.external_work();
    let g0 = first.energy.gravitational;
    let mut scale = 0.0f64;
    let mut max_abs = 0.0f64;
    let rows: Vec<EnergyLedgerRow> = traj
        .samples
        .iter()
        .map(|s| {
            let e = &s.energy;
            let residual = e.total() - e.external_work() - e0;
            scale = scale
                .max(e.kinetic + e.spring)
                .max((e.gravitational - g0).abs())
                .max(e.damping_work.abs() + e.aero_work.abs() + e.drive_work.abs());
            max_abs = max_abs.max(residual.abs());
            EnergyLedgerRow {
                t: s.t,
                kinetic: e.kinetic,
                gravitational: e.gravitational,
                spring: e.spring,
                total: e.total(),
                damping_work: e.damping_work,
                aero_work: e.aero_work,
                drive_work: e.drive_work,
                residual,
            }
        })
        .collect();
    let rel = if scale > 0.0 { max_abs / scale } else { max_abs };
    EnergyAudit { rows, scale, max_abs_residual: max_abs, max_relative_residual: rel }
}

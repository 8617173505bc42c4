use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{Vector2, Vector4};
use serde::Serialize;

use super::{Fdc, LinkageTopology, MechanismConfig};
use crate::error::{Error, Result};

/// A perturbable link segment: an FDC length or a fixed segment by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SensitivityParameter {
    Fdc(Fdc),
    Fixed(&'static str),
}

const FIXED_SEGMENTS: [&str; 10] = ["1a", "2a", "3a", "6a", "8a", "9a", "9b", "10a", "12a", "12c"];

impl SensitivityParameter {
    /// The four FDC lengths followed by the fixed segments.
    pub fn all() -> Vec<SensitivityParameter> {
        Fdc::ALL
            .iter()
            .map(|&f| SensitivityParameter::Fdc(f))
            .chain(FIXED_SEGMENTS.iter().map(|&n| SensitivityParameter::Fixed(n)))
            .collect()
    }

    fn fixed_length<'a>(geometry: &'a mut MechanismConfig, name: &str) -> &'a mut f64 {
        match name {
            "1a" => &mut geometry.crank_length_m,
            "2a" => &mut geometry.coupler_length_m,
            "3a" => &mut geometry.elbow_distance_m,
            "6a" => &mut geometry.second_crank_length_m,
            "8a" => &mut geometry.pushrod_fixed_length_m,
            "9a" => &mut geometry.bell_crank_input_arm_m,
            "9b" => &mut geometry.bell_crank_output_arm_m,
            "10a" => &mut geometry.radius_link_fixed_length_m,
            "12a" => &mut geometry.radius_crank_arm_m,
            "12c" => &mut geometry.radius_output_arm_m,
            _ => unreachable!("segment names are validated on parse"),
        }
    }
}

impl fmt::Display for SensitivityParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SensitivityParameter::Fdc(fdc) => write!(f, "{fdc}"),
            SensitivityParameter::Fixed(name) => write!(f, "l_{name}"),
        }
    }
}

impl FromStr for SensitivityParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(fdc) = s.parse::<Fdc>() {
            return Ok(SensitivityParameter::Fdc(fdc));
        }
        let bare = s.strip_prefix("l_").unwrap_or(s);
        FIXED_SEGMENTS
            .iter()
            .find(|&&n| n == bare)
            .map(|&n| SensitivityParameter::Fixed(n))
            .ok_or_else(|| Error::validation("sensitivity.parameter", format!("unknown segment `{s}`")))
    }
}

/// Deviation of the driven-joint paths over one crank turn, per meter of
/// parameter change (raw deviation when `delta` is zero).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport {
    pub parameter: String,
    pub delta: f64,
    pub max_dev_j5: f64,
    pub rms_dev_j5: f64,
    pub max_dev_j16: f64,
    pub rms_dev_j16: f64,
}

fn joint_paths(
    topology: &LinkageTopology,
    lengths: &Vector4<f64>,
    n: usize,
) -> Result<Vec<(Vector2<f64>, Vector2<f64>)>> {
    (0..n)
        .map(|i| {
            let s = topology.solve_loop_closure(TAU * i as f64 / n as f64, lengths, None)?;
            Ok((topology.joint5.position(&s.q), topology.joint16.position(&s.q)))
        })
        .collect()
}

pub fn sensitivity_analysis(
    topology: &LinkageTopology,
    parameter: SensitivityParameter,
    delta: f64,
    n_samples: usize,
) -> Result<SensitivityReport> {
    if n_samples == 0 {
        return Err(Error::validation("sensitivity.n_samples", "must be at least 1"));
    }
    if !delta.is_finite() {
        return Err(Error::validation("sensitivity.delta_m", "must be finite"));
    }
    let nominal = Vector4::from(topology.geometry.fdc.nominal_m);
    let base = joint_paths(topology, &nominal, n_samples)?;
    let perturbed = match parameter {
        SensitivityParameter::Fdc(fdc) => {
            let mut lengths = nominal;
            lengths[fdc.index()] += delta;
            joint_paths(topology, &lengths, n_samples)?
        }
        SensitivityParameter::Fixed(name) => {
            let mut geometry = topology.geometry.clone();
            *SensitivityParameter::fixed_length(&mut geometry, name) += delta;
            joint_paths(&LinkageTopology::new(&geometry)?, &nominal, n_samples)?
        }
    };

    let scale = if delta == 0.0 { 1.0 } else { delta.abs() };
    let (mut max5, mut max16, mut sq5, mut sq16) = (0.0f64, 0.0f64, 0.0, 0.0);
    for ((b5, b16), (p5, p16)) in base.iter().zip(&perturbed) {
        let (d5, d16) = ((p5 - b5).norm(), (p16 - b16).norm());
        max5 = max5.max(d5);
        max16 = max16.max(d16);
        sq5 += d5 * d5;
        sq16 += d16 * d16;
    }
    let n = n_samples as f64;
    Ok(SensitivityReport {
        parameter: parameter.to_string(),
        delta,
        max_dev_j5: max5 / scale,
        rms_dev_j5: (sq5 / n).sqrt() / scale,
        max_dev_j16: max16 / scale,
        rms_dev_j16: (sq16 / n).sqrt() / scale,
    })
}

pub fn write_sensitivity_csv<W: Write>(mut out: W, reports: &[SensitivityReport]) -> std::io::Result<()> {
    writeln!(out, "parameter,delta,max_dev_j5,rms_dev_j5,max_dev_j16,rms_dev_j16")?;
    for r in reports {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e}",
            r.parameter, r.delta, r.max_dev_j5, r.rms_dev_j5, r.max_dev_j16, r.rms_dev_j16
        )?;
    }
    Ok(())
}

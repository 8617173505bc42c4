//! Aggregate run configuration: one TOML document with a table per module.
//! Every key is optional and falls back to its default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Value;

use crate::aero::AeroEnvironment;
use crate::control::ControllerConfig;
use crate::dynamics::{JointCoupling, MassProperties};
use crate::error::{Error, Result};
use crate::kinematics::{MechanismConfig, SensitivityParameter};
use crate::optim::OptimizationConfig;
use crate::sim::{LimitCycleConfig, Model, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    /// Segment names such as `l_3b` or `l_12a`; every segment when empty.
    pub parameters: Vec<String>,
    pub delta_m: f64,
    pub samples: usize,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self { parameters: Vec::new(), delta_m: 1e-4, samples: 360 }
    }
}

impl SensitivityConfig {
    pub fn validate(&self) -> Result<()> {
        self.resolved()?;
        if !self.delta_m.is_finite() {
            return Err(Error::validation("sensitivity.delta_m", "must be finite"));
        }
        if self.samples == 0 {
            return Err(Error::validation("sensitivity.samples", "must be at least 1"));
        }
        Ok(())
    }

    pub fn resolved(&self) -> Result<Vec<SensitivityParameter>> {
        if self.parameters.is_empty() {
            return Ok(SensitivityParameter::all());
        }
        self.parameters
            .iter()
            .map(|p| {
                p.parse().map_err(|_| Error::validation("sensitivity.parameters", format!("unknown segment `{p}`")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub mechanism: MechanismConfig,
    pub mass: MassProperties,
    pub coupling: JointCoupling,
    pub aero: AeroEnvironment,
    pub control: ControllerConfig,
    pub sim: SimConfig,
    pub limit_cycle: LimitCycleConfig,
    pub optimization: OptimizationConfig,
    pub sensitivity: SensitivityConfig,
}

fn parse_error(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string().trim_end().to_string())
}

impl Config {
    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(parse_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(parse_error)
    }

    pub fn validate(&self) -> Result<()> {
        self.mass.validate()?;
        self.coupling.validate()?;
        self.aero.validate()?;
        self.control.validate()?;
        self.sim.validate()?;
        self.limit_cycle.validate()?;
        self.optimization.validate()?;
        self.sensitivity.validate()?;
        self.build_model().map(|_| ())
    }

    pub fn build_model(&self) -> Result<Model> {
        Model::new(&self.mechanism, &self.mass, &self.coupling, &self.aero)
    }

    /// Sets a dotted key such as `sim.dt_s` to a TOML literal. Bare words
    /// that do not parse as TOML are taken as strings. The key must name a
    /// field of the configuration; the result is re-validated.
    pub fn set(&mut self, key: &str, literal: &str) -> Result<()> {
        let value = toml::from_str::<toml::Table>(&format!("v = {literal}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(literal.to_string()));
        let mut tree = Value::try_from(&*self).map_err(parse_error)?;
        let unknown = || Error::validation(key, "no such configuration key");
        let mut path = key.split('.').peekable();
        let mut node = &mut tree;
        while let Some(part) = path.next() {
            let table = node.as_table_mut().ok_or_else(unknown)?;
            if path.peek().is_none() {
                // Absent optional fields are accepted if the schema knows them.
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table.get_mut(part).ok_or_else(unknown)?;
        }
        let updated: Config = tree.try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            if msg.contains("unknown field") {
                unknown()
            } else {
                Error::validation(key, msg)
            }
        })?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for item in overrides {
            let item = item.as_ref();
            let (key, value) =
                item.split_once('=').ok_or_else(|| Error::Parse(format!("override `{item}` is not key=value")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = Config::default();
        cfg.sim.initial.fdc_lengths_m = Some([7.0e-3, 10.0e-3, 6.0e-3, 7.0e-3]);
        cfg.coupling.radius.attachment_m = Some([0.02, 0.001]);
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(Config::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn inverted_bounds_name_the_key() {
        let err =
            Config::from_toml_str("[control]\nl_min_m = [0.02, 0.0, 0.0, 0.0]\nl_max_m = [0.01, 0.02, 0.02, 0.02]\n")
                .unwrap_err();
        match err {
            Error::Validation { key, .. } => assert_eq!(key, "control.l_min_m"),
            other => panic!("unexpected {other}"),
        }
        let err = Config::from_toml_str(
            "[mechanism.fdc]\nmin_m = [0.02, 0.007, 0.003, 0.004]\nmax_m = [0.01, 0.013, 0.009, 0.010]\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "mechanism.fdc.min_m"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Config::from_toml_str("[sim]\nstep = 1\n"), Err(Error::Parse(_))));
        let mut cfg = Config::default();
        assert!(matches!(cfg.set("sim.step", "1"), Err(Error::Validation { .. })));
        assert!(matches!(cfg.set("nope.dt_s", "1"), Err(Error::Validation { .. })));
    }

    #[test]
    fn overrides_reach_nested_and_optional_keys() {
        let mut cfg = Config::default();
        cfg.apply_overrides(&[
            "sim.dt_s=5e-5",
            "optimization.search.method=cmaes",
            "sim.initial.fdc_lengths_m=[0.008,0.01,0.006,0.007]",
        ])
        .unwrap();
        assert_eq!(cfg.sim.dt_s, 5e-5);
        assert_eq!(cfg.optimization.search.method, crate::optim::Method::Cmaes);
        assert_eq!(cfg.sim.initial.fdc_lengths_m, Some([0.008, 0.01, 0.006, 0.007]));
        let err = cfg.set("sim.dt_s", "-1").unwrap_err();
        assert!(matches!(err, Error::Validation { ref key, .. } if key == "sim.dt_s"));
        assert!(matches!(cfg.set("sim.dt_s", "\"fast\""), Err(Error::Validation { .. })));
    }
}

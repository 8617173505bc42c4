use serde::{Deserialize, Serialize};

use super::{minimize, OptimizationResult, SearchConfig};
use crate::control::ControllerConfig;
use crate::error::{Error, Result};
use crate::sim::{run_episode, Model, SimConfig, Trajectory};

/// Cost assigned to an episode that failed; never reported as best.
pub const PENALTY_COST: f64 = 1e12;

/// Weights and sampling of the episode cost
/// `J = sum_j (w1 |Pi_j|^2 + w2 |v_B,j|^2 + w3 (theta_ref - theta_j)^2) dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    /// Angular momentum weight.
    pub w1: f64,
    /// Body velocity weight.
    pub w2: f64,
    /// Pitch error weight.
    pub w3: f64,
    pub dt_s: f64,
    pub horizon_s: f64,
    /// Samples before this time are left out of the sum.
    pub warmup_s: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w1: 1.0, w2: 1.0, w3: 10.0, dt_s: 1e-3, horizon_s: 4.0, warmup_s: 1.0 }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [("w1", self.w1), ("w2", self.w2), ("w3", self.w3)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(
                    format!("optimization.weights.{key}"),
                    "must be finite and non-negative",
                ));
            }
        }
        if !(self.dt_s > 0.0 && self.dt_s.is_finite()) {
            return Err(Error::validation("optimization.weights.dt_s", "must be positive"));
        }
        if !(self.horizon_s >= self.dt_s && self.warmup_s >= 0.0 && self.warmup_s < self.horizon_s) {
            return Err(Error::validation(
                "optimization.weights.warmup_s",
                "need 0 <= warmup_s < horizon_s and horizon_s >= dt_s",
            ));
        }
        Ok(())
    }

    /// Integration steps per costing step.
    fn decimation(&self, sim_dt: f64) -> Result<usize> {
        let ratio = self.dt_s / sim_dt;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::validation(
                "optimization.weights.dt_s",
                format!("must be an integer multiple of sim.dt_s ({sim_dt})"),
            ));
        }
        Ok(n as usize)
    }
}

/// Box on the four pitch-gain entries, in the controller's gain units.
///
/// The default keeps the humerus-side channels (`l_3b`, `l_3c`) small:
/// large positive gains there trade a lower flight speed for a period-two
/// pitch oscillation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GainBounds {
    pub k_c_min: [f64; 4],
    pub k_c_max: [f64; 4],
}

impl Default for GainBounds {
    fn default() -> Self {
        Self { k_c_min: [-2.0, -2.0, -30.0, -30.0], k_c_max: [2.0, 2.0, 30.0, 30.0] }
    }
}

impl GainBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            if !(self.k_c_min[i].is_finite() && self.k_c_max[i].is_finite() && self.k_c_min[i] <= self.k_c_max[i]) {
                return Err(Error::validation(
                    "optimization.gain_bounds.k_c_min",
                    format!("entry {i} exceeds k_c_max"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizationConfig {
    pub weights: CostWeights,
    pub gain_bounds: GainBounds,
    pub search: SearchConfig,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            gain_bounds: GainBounds::default(),
            search: SearchConfig { budget: 60, x_tolerance: 1e-3, f_tolerance: 1e-4, ..SearchConfig::default() },
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.gain_bounds.validate()?;
        self.search.validate("optimization.search")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub j: f64,
    pub diverged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

/// Weighted sum over the logged samples in `[warmup, horizon)`.
pub fn cost_of_trajectory(traj: &Trajectory, weights: &CostWeights, theta_ref: f64) -> f64 {
    let eps = 1e-9 * weights.dt_s;
    traj.samples
        .iter()
        .filter(|s| s.t >= weights.warmup_s - eps && s.t < weights.horizon_s - eps)
        .map(|s| {
            let v = s.dynamic.qd.fixed_rows::<3>(0);
            let e = theta_ref - s.pitch;
            weights.w1 * s.angular_momentum.norm_squared() + weights.w2 * v.norm_squared() + weights.w3 * e * e
        })
        .sum::<f64>()
        * weights.dt_s
}

/// Runs one episode over the costing horizon and returns its cost.
///
/// An episode that diverges or loses the linkage costs [`PENALTY_COST`] and
/// is flagged. Configuration errors are returned as errors.
pub fn evaluate_cost(
    model: &Model,
    sim: &SimConfig,
    controller: &ControllerConfig,
    weights: &CostWeights,
) -> Result<CostReport> {
    weights.validate()?;
    let mut sim = sim.clone();
    sim.log_every = weights.decimation(sim.dt_s)?;
    sim.duration_s = weights.horizon_s;
    match run_episode(model, &sim, controller) {
        Ok(traj) => Ok(CostReport {
            j: cost_of_trajectory(&traj, weights, controller.theta_y_ref_rad),
            diverged: false,
            failure: None,
        }),
        Err(
            e @ (Error::SimDiverged { .. }
            | Error::NoConvergence { .. }
            | Error::BranchJump { .. }
            | Error::SingularMassMatrix { .. }
            | Error::NonPositiveDefinite),
        ) => Ok(CostReport { j: PENALTY_COST, diverged: true, failure: Some(e.to_string()) }),
        Err(e) => Err(e),
    }
}

fn episode_objective<'a>(
    model: &'a Model,
    sim: &'a SimConfig,
    controller: &'a ControllerConfig,
    weights: &'a CostWeights,
    apply: impl Fn(&mut ControllerConfig, &[f64]) + Sync + 'a,
) -> impl Fn(&[f64]) -> Option<f64> + Sync + 'a {
    move |x| {
        let mut c = controller.clone();
        apply(&mut c, x);
        match evaluate_cost(model, sim, &c, weights) {
            Ok(r) if !r.diverged => Some(r.j),
            _ => None,
        }
    }
}

/// Tunes `K_c` from the configured gain as the initial guess.
pub fn optimize_pitch_gain(
    model: &Model,
    sim: &SimConfig,
    controller: &ControllerConfig,
    cfg: &OptimizationConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    sim.validate()?;
    controller.validate()?;
    cfg.weights.decimation(sim.dt_s)?;
    let f = episode_objective(model, sim, controller, &cfg.weights, |c, x| c.k_c.copy_from_slice(x));
    minimize(f, &controller.k_c, &cfg.gain_bounds.k_c_min, &cfg.gain_bounds.k_c_max, &cfg.search)
}

/// Tunes the zero-path lengths with the pitch loop off (`K_c = 0`), inside
/// the FDC saturation bounds, from the configured lengths.
pub fn optimize_zero_path(
    model: &Model,
    sim: &SimConfig,
    controller: &ControllerConfig,
    cfg: &OptimizationConfig,
) -> Result<OptimizationResult> {
    cfg.validate()?;
    sim.validate()?;
    controller.validate()?;
    cfg.weights.decimation(sim.dt_s)?;
    let mut open_loop = controller.clone();
    open_loop.k_c = [0.0; 4];
    let f = episode_objective(model, sim, &open_loop, &cfg.weights, |c, x| c.l_ref_zp_m.copy_from_slice(x));
    minimize(f, &controller.l_ref_zp_m, &controller.l_min_m, &controller.l_max_m, &cfg.search)
}

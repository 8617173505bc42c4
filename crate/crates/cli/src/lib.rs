//! Run orchestration for the `batwing` binary: resolve the configuration,
//! dispatch a verb, write artifacts and a JSON summary into the output
//! directory.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use batwing_core::config::Config;
use batwing_core::control::ControllerConfig;
use batwing_core::kinematics::{sensitivity_analysis, write_sensitivity_csv, LinkageTopology};
use batwing_core::optim::{cost_of_trajectory, evaluate_cost, optimize_pitch_gain, optimize_zero_path};
use batwing_core::sim::{
    detect_limit_cycle, energy_audit, run_episode, EnergyAudit, LimitCycleReport, Model, Trajectory,
};
use batwing_core::{Error, Result};
use clap::ValueEnum;
use serde::Serialize;

pub const SUMMARY_SCHEMA: &str = "batwing-summary/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Sensitivity,
    OptimizeGain,
    OptimizeZeroPath,
    Audit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    /// Defaults are used when absent.
    pub config: Option<PathBuf>,
    pub command: Command,
    pub out_dir: PathBuf,
    pub seed: u64,
    /// `key=value` pairs applied after loading.
    pub overrides: Vec<String>,
}

/// Distinct process exit status for each error kind.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) => 2,
        Error::Validation { .. } => 3,
        Error::NoConvergence { .. } => 4,
        Error::BranchJump { .. } => 5,
        Error::SingularMassMatrix { .. } => 6,
        Error::NonPositiveDefinite => 7,
        Error::SimDiverged { .. } => 8,
        Error::BudgetExhausted(_) => 9,
        Error::TooShort { .. } => 10,
        Error::Io(_) => 11,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeSummary {
    pub duration_s: f64,
    pub samples: usize,
    pub final_pitch_rad: f64,
    pub final_crank_rate_rad_per_s: f64,
    pub final_velocity_m_per_s: [f64; 3],
    /// Pitch statistics after the detected transient, or after the cost
    /// warm-up when no cycle was found.
    pub settled_from_s: f64,
    pub settled_mean_pitch_rad: f64,
    pub settled_max_pitch_error_rad: f64,
    pub cost_j: f64,
    pub max_closure_residual_m: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditSummary {
    pub scale_j: f64,
    pub max_abs_residual_j: f64,
    pub max_relative_residual: f64,
}

impl From<&EnergyAudit> for AuditSummary {
    fn from(a: &EnergyAudit) -> Self {
        Self {
            scale_j: a.scale,
            max_abs_residual_j: a.max_abs_residual,
            max_relative_residual: a.max_relative_residual,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum LimitCycleOutcome {
    Report(LimitCycleReport),
    Failed { error: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationSummary {
    pub parameter: &'static str,
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    pub initial_params: Vec<f64>,
    pub initial_cost: f64,
    /// Cost with the pitch loop open (`K_c = 0`) for comparison.
    pub open_loop_cost: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityRow {
    pub parameter: String,
    pub max_dev_j5: f64,
    pub rms_dev_j5: f64,
    pub max_dev_j16: f64,
    pub rms_dev_j16: f64,
}

/// Contents of `summary.json`. Keys are stable; absent sections are omitted.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: &'static str,
    pub command: Command,
    pub seed: u64,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub artifacts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episode: Option<EpisodeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit_cycle: Option<LimitCycleOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy_audit: Option<AuditSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimization: Option<OptimizationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Vec<SensitivityRow>>,
}

impl Summary {
    fn new(manifest: &RunManifest) -> Self {
        Self {
            schema: SUMMARY_SCHEMA,
            command: manifest.command,
            seed: manifest.seed,
            status: "ok",
            exit_code: 0,
            error: None,
            artifacts: Vec::new(),
            episode: None,
            limit_cycle: None,
            energy_audit: None,
            optimization: None,
            sensitivity: None,
        }
    }
}

/// Loads the configuration named by the manifest, applies the overrides and
/// the seed.
pub fn resolve_config(manifest: &RunManifest) -> Result<Config> {
    let mut cfg = match &manifest.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    cfg.apply_overrides(&manifest.overrides)?;
    cfg.optimization.search.seed = manifest.seed;
    Ok(cfg)
}

struct Run<'a> {
    out: &'a Path,
    summary: Summary,
}

impl Run<'_> {
    fn create(&mut self, name: &str) -> Result<File> {
        self.summary.artifacts.push(name.to_string());
        Ok(File::create(self.out.join(name))?)
    }

    fn write_trajectory(&mut self, traj: &Trajectory, model: &Model) -> Result<()> {
        traj.write_csv(self.create("trajectory.csv")?)?;
        traj.write_binary(self.create("trajectory.bin")?)?;
        traj.write_plot_data(self.out, &model.mass)?;
        self.summary.artifacts.extend(["pitch.csv", "energy.csv", "wingtip.csv"].map(String::from));
        Ok(())
    }

    /// Logs, analyzes and summarizes one episode.
    fn episode(
        &mut self,
        cfg: &Config,
        model: &Model,
        control: &ControllerConfig,
        write_trajectory: bool,
    ) -> Result<()> {
        let traj = run_episode(model, &cfg.sim, control)?;
        if write_trajectory {
            self.write_trajectory(&traj, model)?;
        }
        let audit = energy_audit(&traj);
        audit.write_csv(self.create("energy_audit.csv")?)?;
        let cycle = detect_limit_cycle(&traj, &cfg.limit_cycle);
        let settled_from = match &cycle {
            Ok(LimitCycleReport { transient_end_s: Some(t), .. }) => *t,
            _ => cfg.optimization.weights.warmup_s,
        };
        self.summary.episode = Some(summarize_episode(&traj, cfg, &model.topology, settled_from));
        self.summary.energy_audit = Some((&audit).into());
        self.summary.limit_cycle = Some(match cycle {
            Ok(r) => LimitCycleOutcome::Report(r),
            Err(e) => LimitCycleOutcome::Failed { error: e.to_string() },
        });
        Ok(())
    }
}

fn summarize_episode(traj: &Trajectory, cfg: &Config, topology: &LinkageTopology, settled_from: f64) -> EpisodeSummary {
    let last = traj.samples.last().expect("an episode logs its initial state");
    let settled: Vec<f64> = traj.samples.iter().filter(|s| s.t >= settled_from).map(|s| s.pitch).collect();
    let theta_ref = cfg.control.theta_y_ref_rad;
    let mean = if settled.is_empty() { f64::NAN } else { settled.iter().sum::<f64>() / settled.len() as f64 };
    let mut weights = cfg.optimization.weights.clone();
    weights.dt_s = traj.dt;
    EpisodeSummary {
        duration_s: traj.duration(),
        samples: traj.len(),
        final_pitch_rad: last.pitch,
        final_crank_rate_rad_per_s: last.kinematic.crank_rate(),
        final_velocity_m_per_s: [last.dynamic.qd[0], last.dynamic.qd[1], last.dynamic.qd[2]],
        settled_from_s: settled_from,
        settled_mean_pitch_rad: mean,
        settled_max_pitch_error_rad: settled.iter().map(|p| (p - theta_ref).abs()).fold(0.0, f64::max),
        cost_j: cost_of_trajectory(traj, &weights, theta_ref),
        max_closure_residual_m: traj
            .samples
            .iter()
            .map(|s| topology.closure_residual(&s.kinematic.q))
            .fold(0.0, f64::max),
    }
}

fn dispatch(run: &mut Run<'_>, cfg: &Config) -> Result<()> {
    let model = cfg.build_model()?;
    match run.summary.command {
        Command::Simulate => run.episode(cfg, &model, &cfg.control, true),
        Command::Audit => run.episode(cfg, &model, &cfg.control, false),
        Command::Sensitivity => {
            let reports = cfg
                .sensitivity
                .resolved()?
                .into_iter()
                .map(|p| sensitivity_analysis(&model.topology, p, cfg.sensitivity.delta_m, cfg.sensitivity.samples))
                .collect::<Result<Vec<_>>>()?;
            write_sensitivity_csv(run.create("sensitivity.csv")?, &reports)?;
            run.summary.sensitivity = Some(
                reports
                    .into_iter()
                    .map(|r| SensitivityRow {
                        parameter: r.parameter,
                        max_dev_j5: r.max_dev_j5,
                        rms_dev_j5: r.rms_dev_j5,
                        max_dev_j16: r.max_dev_j16,
                        rms_dev_j16: r.rms_dev_j16,
                    })
                    .collect(),
            );
            Ok(())
        }
        Command::OptimizeGain | Command::OptimizeZeroPath => {
            let gain = run.summary.command == Command::OptimizeGain;
            let outcome = if gain {
                optimize_pitch_gain(&model, &cfg.sim, &cfg.control, &cfg.optimization)
            } else {
                optimize_zero_path(&model, &cfg.sim, &cfg.control, &cfg.optimization)
            };
            let result = match outcome {
                Ok(r) => r,
                Err(Error::BudgetExhausted(r)) => *r,
                Err(e) => return Err(e),
            };
            result.write_trace_csv(run.create("optimization_trace.csv")?)?;

            let mut tuned = cfg.control.clone();
            if gain {
                tuned.k_c.copy_from_slice(&result.best_params);
            } else {
                tuned.k_c = [0.0; 4];
                tuned.l_ref_zp_m.copy_from_slice(&result.best_params);
            }
            let mut open = cfg.control.clone();
            open.k_c = [0.0; 4];
            let open_loop_cost = evaluate_cost(&model, &cfg.sim, &open, &cfg.optimization.weights)?.j;
            run.summary.optimization = Some(OptimizationSummary {
                parameter: if gain { "control.k_c" } else { "control.l_ref_zp_m" },
                best_params: result.best_params.clone(),
                best_cost: result.best_cost,
                initial_params: result.initial_params.clone(),
                initial_cost: result.initial_cost,
                open_loop_cost,
                evaluations: result.evaluations,
                iterations: result.iterations,
                converged: result.converged,
            });
            let mut tuned_cfg = cfg.clone();
            tuned_cfg.control = tuned.clone();
            fs::write(run.out.join("tuned_config.toml"), tuned_cfg.to_toml_string()?)?;
            run.summary.artifacts.push("tuned_config.toml".into());
            let mut sim_cfg = tuned_cfg;
            sim_cfg.sim.duration_s = cfg.optimization.weights.horizon_s;
            run.episode(&sim_cfg, &model, &tuned, true)?;
            if result.converged {
                Ok(())
            } else {
                Err(Error::BudgetExhausted(Box::new(result)))
            }
        }
    }
}

/// Executes the manifest and returns the process exit status. Artifacts and
/// `summary.json` are written even when the command fails after the output
/// directory exists.
pub fn run_command(manifest: &RunManifest) -> Result<i32> {
    fs::create_dir_all(&manifest.out_dir)?;
    let mut run = Run { out: &manifest.out_dir, summary: Summary::new(manifest) };
    let outcome = resolve_config(manifest).and_then(|cfg| {
        let result = dispatch(&mut run, &cfg);
        let text = cfg.to_toml_string()?;
        fs::write(manifest.out_dir.join("resolved_config.toml"), text)?;
        run.summary.artifacts.push("resolved_config.toml".into());
        result
    });
    if let Err(e) = &outcome {
        run.summary.status = "error";
        run.summary.exit_code = exit_code(e);
        run.summary.error = Some(e.to_string());
    }
    run.summary.artifacts.sort();
    let mut json = serde_json::to_string_pretty(&run.summary).map_err(|e| Error::Parse(e.to_string()))?;
    json.push('\n');
    fs::write(manifest.out_dir.join("summary.json"), json)?;
    match outcome {
        Ok(()) => Ok(0),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(exit_code(&e))
        }
    }
}

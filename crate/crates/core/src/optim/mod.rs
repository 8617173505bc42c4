//! Bounded derivative-free minimization and the episode cost used to tune
//! the pitch gain and the zero-path FDC lengths.

mod cmaes;
mod cost;
mod nelder_mead;

use std::io::{self, BufWriter, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cost::{
    cost_of_trajectory, evaluate_cost, optimize_pitch_gain, optimize_zero_path, CostReport, CostWeights, GainBounds,
    OptimizationConfig, PENALTY_COST,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    NelderMead,
    Cmaes,
}

/// Settings shared by both search methods. Tolerances apply in coordinates
/// normalized to the unit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub method: Method,
    /// Maximum number of objective evaluations. The initial guess is always
    /// evaluated, even with a budget of zero.
    pub budget: usize,
    pub seed: u64,
    pub x_tolerance: f64,
    pub f_tolerance: f64,
    /// Initial simplex edge, or initial CMA-ES step size.
    pub initial_step: f64,
    /// CMA-ES population; `4 + 3 ln n` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub population: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            method: Method::NelderMead,
            budget: 500,
            seed: 0,
            x_tolerance: 1e-6,
            f_tolerance: 1e-12,
            initial_step: 0.1,
            population: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, key: &str) -> Result<()> {
        if !(self.x_tolerance > 0.0 && self.f_tolerance >= 0.0) {
            return Err(Error::validation(format!("{key}.x_tolerance"), "tolerances must be positive"));
        }
        if !(self.initial_step > 0.0 && self.initial_step <= 1.0) {
            return Err(Error::validation(format!("{key}.initial_step"), "must lie in (0, 1]"));
        }
        if self.population.is_some_and(|p| p < 2) {
            return Err(Error::validation(format!("{key}.population"), "must be at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub candidate: usize,
    pub params: Vec<f64>,
    pub cost: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_params: Vec<f64>,
    pub best_cost: f64,
    pub initial_params: Vec<f64>,
    pub initial_cost: f64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Every evaluation in order.
    pub trace: Vec<TraceEntry>,
}

impl OptimizationResult {
    /// Columns `iteration,candidate,J,diverged,p0..pn`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        let n = self.best_params.len();
        let params: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        writeln!(out, "iteration,candidate,J,diverged{}{}", if n > 0 { "," } else { "" }, params.join(","))?;
        for e in &self.trace {
            write!(out, "{},{},{:e},{}", e.iteration, e.candidate, e.cost, u8::from(e.diverged))?;
            for p in &e.params {
                write!(out, ",{p:e}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    /// Running minimum of the feasible costs.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trace
            .iter()
            .map(|e| {
                if !e.diverged {
                    best = best.min(e.cost);
                }
                best
            })
            .collect()
    }
}

/// Map between the free coordinates of the unit box and parameter space.
struct Scaling {
    lower: Vec<f64>,
    width: Vec<f64>,
    free: Vec<usize>,
}

impl Scaling {
    fn to_params(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.lower.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = self.lower[i] + z[k].clamp(0.0, 1.0) * self.width[i];
        }
        x
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| ((x[i] - self.lower[i]) / self.width[i]).clamp(0.0, 1.0)).collect()
    }
}

/// Budgeted, traced access to the objective.
struct Evaluator<'a, F> {
    objective: &'a F,
    scaling: Scaling,
    budget: usize,
    trace: Vec<TraceEntry>,
    best: Option<(Vec<f64>, f64)>,
    iteration: usize,
}

impl<F: Fn(&[f64]) -> Option<f64> + Sync> Evaluator<'_, F> {
    fn remaining(&self) -> usize {
        self.budget.saturating_sub(self.trace.len())
    }

    /// Evaluates as many of the unit-box points as the budget allows, in
    /// parallel, and returns their costs in order. Diverged candidates cost
    /// [`PENALTY_COST`].
    fn batch(&mut self, points: &[Vec<f64>]) -> Vec<f64> {
        let n = points.len().min(self.remaining());
        let params: Vec<Vec<f64>> = points[..n].iter().map(|z| self.scaling.to_params(z)).collect();
        let f = self.objective;
        let costs: Vec<Option<f64>> = params.par_iter().map(|x| f(x).filter(|c| c.is_finite())).collect();
        params
            .into_iter()
            .zip(costs)
            .map(|(x, c)| {
                if let Some(c) = c {
                    if self.best.as_ref().is_none_or(|(_, b)| c < *b) {
                        self.best = Some((x.clone(), c));
                    }
                }
                let cost = c.unwrap_or(PENALTY_COST);
                self.trace.push(TraceEntry {
                    iteration: self.iteration,
                    candidate: self.trace.len(),
                    params: x,
                    cost,
                    diverged: c.is_none(),
                });
                cost
            })
            .collect()
    }
}

/// Minimizes `objective` over the box `[lower, upper]` from `x0`.
///
/// The objective returns `None` for a failed candidate; such points are
/// ranked with a penalty and never reported as best. Returns
/// [`Error::BudgetExhausted`] carrying the best point found when the budget
/// runs out before the tolerances are met.
pub fn minimize<F>(
    objective: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    cfg: &SearchConfig,
) -> Result<OptimizationResult>
where
    F: Fn(&[f64]) -> Option<f64> + Sync,
{
    cfg.validate("optimization")?;
    if x0.len() != lower.len() || x0.len() != upper.len() {
        return Err(Error::validation("optimization.bounds", "dimension mismatch"));
    }
    for i in 0..x0.len() {
        if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] <= upper[i]) {
            return Err(Error::validation("optimization.bounds", format!("entry {i}: lower must not exceed upper")));
        }
        if !x0[i].is_finite() {
            return Err(Error::validation("optimization.initial", format!("entry {i} must be finite")));
        }
    }
    let scaling = Scaling {
        lower: lower.to_vec(),
        width: lower.iter().zip(upper).map(|(l, u)| u - l).collect(),
        free: (0..x0.len()).filter(|&i| upper[i] > lower[i]).collect(),
    };
    let z0 = scaling.to_unit(x0);
    let mut ev = Evaluator {
        objective: &objective,
        scaling,
        budget: cfg.budget.max(1),
        trace: Vec::new(),
        best: None,
        iteration: 0,
    };
    let f0 = ev.batch(std::slice::from_ref(&z0))[0];
    let initial_params = ev.trace[0].params.clone();

    let converged = if ev.scaling.free.is_empty() {
        true
    } else if cfg.budget <= 1 {
        false
    } else {
        match cfg.method {
            Method::NelderMead => nelder_mead::run(&mut ev, z0, f0, cfg),
            Method::Cmaes => cmaes::run(&mut ev, z0, cfg),
        }
    };

    let (best_params, best_cost) = ev.best.clone().unwrap_or((initial_params.clone(), f0));
    let result = OptimizationResult {
        best_params,
        best_cost,
        initial_params,
        initial_cost: f0,
        evaluations: ev.trace.len(),
        iterations: ev.iteration,
        converged,
        trace: ev.trace,
    };
    if converged {
        Ok(result)
    } else {
        Err(Error::BudgetExhausted(Box::new(result)))
    }
}

/// Unwraps a finished search, accepting a budget-limited one.
pub fn best_effort(r: Result<OptimizationResult>) -> Result<OptimizationResult> {
    match r {
        Err(Error::BudgetExhausted(res)) => Ok(*res),
        other => other,
    }
}

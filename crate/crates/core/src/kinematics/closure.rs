use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, SVector, Vector2, Vector4};

use super::expr::unit;
use super::topology::{cross, Dyad};
use super::{coord, KinematicState, LinkageTopology};
use crate::error::{Error, Result};

const NEWTON_ITERATIONS: usize = 40;
const SCAN_POINTS: usize = 720;
/// Residual above which a solve is reported as failed.
pub(crate) const ACCEPT_RESIDUAL: f64 = 1e-10;

/// Shift `angle` by whole turns to land nearest to `reference`.
pub(crate) fn unwrap_near(angle: f64, reference: f64) -> f64 {
    angle - TAU * ((angle - reference) / TAU).round()
}

impl LinkageTopology {
    /// Solves all closure equations for the given crank angle and FDC lengths.
    ///
    /// Without a seed the configured assembly branch is used. With a seed the
    /// solution continuous with it is tracked, and a jump larger than the
    /// configured threshold is reported as [`Error::BranchJump`]. The returned
    /// state carries the seed's velocities projected onto the constraint
    /// manifold (zero without a seed).
    pub fn solve_loop_closure(
        &self,
        crank_angle: f64,
        fdc_lengths: &Vector4<f64>,
        seed: Option<&KinematicState>,
    ) -> Result<KinematicState> {
        if !crank_angle.is_finite() {
            return Err(Error::validation("crank_angle", "must be finite"));
        }
        let f = &self.geometry.fdc;
        for i in 0..4 {
            let l = fdc_lengths[i];
            if !(l.is_finite() && l >= f.min_m[i] && l <= f.max_m[i]) {
                return Err(Error::validation(
                    format!("fdc_lengths.{}", super::Fdc::ALL[i]),
                    format!("{l} m outside [{}, {}]", f.min_m[i], f.max_m[i]),
                ));
            }
        }
        self.close(crank_angle, fdc_lengths, seed)
    }

    fn close(
        &self,
        crank_angle: f64,
        fdc_lengths: &Vector4<f64>,
        seed: Option<&KinematicState>,
    ) -> Result<KinematicState> {
        let mut q = seed.map_or_else(SVector::<f64, 12>::zeros, |s| s.q);
        q[coord::THETA1] = crank_angle;
        q.fixed_rows_mut::<4>(coord::L3B).copy_from(fdc_lengths);
        q[coord::THETA9] = self.geometry.gear_ratio * crank_angle + self.geometry.gear_phase_rad;

        for (k, dyad) in self.dyads.iter().enumerate() {
            self.solve_dyad(k, dyad, &mut q, seed.map(|s| &s.q), crank_angle)?;
        }

        let mut state = KinematicState { q, qd: SVector::zeros() };
        if let Some(s) = seed {
            state.qd = s.qd;
            self.project_velocity(&mut state);
        }
        Ok(state)
    }

    /// Re-closes a state drifted by integration: positions by Newton from the
    /// current values, then velocities onto the constraint tangent space.
    /// FDC lengths are taken as they are, without the stroke-limit check.
    pub fn project(&self, state: &KinematicState) -> Result<KinematicState> {
        if !state.q.iter().all(|v| v.is_finite()) {
            return Err(Error::NoConvergence { crank_angle: state.crank_angle(), residual: f64::NAN });
        }
        self.close(state.crank_angle(), &state.fdc_lengths(), Some(state))
    }

    /// `qd_dep = -Phi_dep^{-1} Phi_indep qd_indep`.
    pub fn project_velocity(&self, state: &mut KinematicState) {
        let jac = self.constraint_jacobian(&state.q);
        let mut rhs = SVector::<f64, 7>::zeros();
        for &i in &coord::INDEPENDENT {
            rhs -= jac.column(i) * state.qd[i];
        }
        let dep = nalgebra::SMatrix::<f64, 7, 7>::from_fn(|r, c| jac[(r, coord::DEPENDENT[c])]);
        if let Some(x) = dep.lu().solve(&rhs) {
            for (c, &i) in coord::DEPENDENT.iter().enumerate() {
                state.qd[i] = x[c];
            }
        }
    }

    /// Largest closure residual over all stages (meters).
    pub fn closure_residual(&self, q: &SVector<f64, 12>) -> f64 {
        let gear = q[coord::THETA9] - self.geometry.gear_ratio * q[coord::THETA1] - self.geometry.gear_phase_rad;
        self.dyads.iter().map(|d| d.residual(q).norm()).fold(gear.abs() * self.geometry.second_crank_length_m, f64::max)
    }

    fn solve_dyad(
        &self,
        k: usize,
        dyad: &Dyad,
        q: &mut SVector<f64, 12>,
        seed: Option<&SVector<f64, 12>>,
        crank_angle: f64,
    ) -> Result<()> {
        let [ia, ib] = dyad.unknowns();
        let tol = self.geometry.closure_tolerance_m;

        let guess = match seed {
            Some(_) => Some((q[ia], q[ib])),
            None => closed_form(dyad, q),
        };
        let mut solved = false;
        if let Some((a, b)) = guess {
            q[ia] = a;
            q[ib] = b;
            solved = newton(dyad, q, tol) && dyad.branch_of(q) == dyad.branch;
        }
        if !solved {
            let near = seed.map(|s| s[ia]);
            match bisect(dyad, q, near) {
                Some((a, b)) => {
                    q[ia] = a;
                    q[ib] = b;
                    newton(dyad, q, tol);
                }
                None => return Err(Error::NoConvergence { crank_angle, residual: stage_gap(dyad, q) }),
            }
        }

        let residual = dyad.residual(q).norm();
        if !(residual < ACCEPT_RESIDUAL) {
            return Err(Error::NoConvergence { crank_angle, residual });
        }
        if let Some(s) = seed {
            q[ia] = unwrap_near(q[ia], s[ia]);
            q[ib] = unwrap_near(q[ib], s[ib]);
            let jump = (q[ia] - s[ia]).abs().max((q[ib] - s[ib]).abs());
            if dyad.branch_of(q) != dyad.branch || jump > self.geometry.branch_jump_threshold_rad {
                return Err(Error::BranchJump { dyad: k + 1, jump });
            }
        }
        Ok(())
    }
}

/// Triangle construction of the stage joint on the configured branch.
fn closed_form(dyad: &Dyad, q: &SVector<f64, 12>) -> Option<(f64, f64)> {
    let (ta, tb) = (dyad.lhs.last(), dyad.rhs.last());
    let (la, lb) = (ta.len(q), tb.len(q));
    let a = dyad.lhs.position_without_last(q);
    let b = dyad.rhs.position_without_last(q);
    let d = (b - a).norm();
    if d <= 0.0 {
        return None;
    }
    let x = (d * d + la * la - lb * lb) / (2.0 * d);
    let h2 = la * la - x * x;
    if h2 < 0.0 {
        return None;
    }
    let u = (b - a) / d;
    let n = Vector2::new(-u.y, u.x);
    let c = a + x * u + dyad.branch * h2.sqrt() * n;
    Some(angles_through(dyad, q, &c))
}

fn angles_through(dyad: &Dyad, q: &SVector<f64, 12>, c: &Vector2<f64>) -> (f64, f64) {
    let (ta, tb) = (dyad.lhs.last(), dyad.rhs.last());
    let a = dyad.lhs.position_without_last(q);
    let b = dyad.rhs.position_without_last(q);
    let da = c - a;
    let db = c - b;
    (da.y.atan2(da.x) - ta.offset, db.y.atan2(db.x) - tb.offset)
}

/// Distance by which the stage fails to close (for diagnostics).
fn stage_gap(dyad: &Dyad, q: &SVector<f64, 12>) -> f64 {
    let (la, lb) = (dyad.lhs.last().len(q), dyad.rhs.last().len(q));
    let d = (dyad.rhs.position_without_last(q) - dyad.lhs.position_without_last(q)).norm();
    (d - la - lb).max(la - lb - d).max(lb - la - d).max(0.0)
}

/// Damped Newton on the two unknown angles of one stage.
fn newton(dyad: &Dyad, q: &mut SVector<f64, 12>, tol: f64) -> bool {
    let [ia, ib] = dyad.unknowns();
    let (ta, tb) = (*dyad.lhs.last(), *dyad.rhs.last());
    let mut r = dyad.residual(q);
    for _ in 0..NEWTON_ITERATIONS {
        if r.norm() < tol {
            return true;
        }
        let ja = ta.len(q) * unit(ta.heading(q)).1;
        let jb = -tb.len(q) * unit(tb.heading(q)).1;
        let Some(step) = Matrix2::from_columns(&[ja, jb]).lu().solve(&(-r)) else {
            return false;
        };
        let (a0, b0) = (q[ia], q[ib]);
        let mut lambda = 1.0;
        loop {
            q[ia] = a0 + lambda * step.x;
            q[ib] = b0 + lambda * step.y;
            let trial = dyad.residual(q);
            if trial.norm() < r.norm() || lambda < 1e-4 {
                r = trial;
                break;
            }
            lambda *= 0.5;
        }
        if (lambda * step).norm() < 1e-15 {
            break;
        }
    }
    r.norm() < tol.max(ACCEPT_RESIDUAL)
}

/// Scalar fallback: scan `|A + la e(a) - B| - lb` over one turn, bisect every
/// sign change and keep the root on the configured branch nearest `near`.
fn bisect(dyad: &Dyad, q: &SVector<f64, 12>, near: Option<f64>) -> Option<(f64, f64)> {
    let ta = *dyad.lhs.last();
    let la = ta.len(q);
    let lb = dyad.rhs.last().len(q);
    let a = dyad.lhs.position_without_last(q);
    let b = dyad.rhs.position_without_last(q);
    let joint = |angle: f64| a + la * unit(angle + ta.offset).0;
    let g = |angle: f64| (joint(angle) - b).norm() - lb;
    let center = near.unwrap_or(0.0);
    let start = center - PI;
    let step = TAU / SCAN_POINTS as f64;

    let mut best: Option<(f64, f64, f64)> = None;
    let mut x0 = start;
    let mut g0 = g(x0);
    for i in 1..=SCAN_POINTS {
        let x1 = start + step * i as f64;
        let g1 = g(x1);
        if g0 == 0.0 || g0.signum() != g1.signum() {
            let (mut lo, mut hi, mut glo) = (x0, x1, g0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if gm.signum() == glo.signum() {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            let c = joint(root);
            if cross(&(b - a), &(c - a)).signum() == dyad.branch {
                let dist = (root - center).abs();
                if best.is_none_or(|(_, _, d)| dist < d) {
                    let (ra, rb) = angles_through(dyad, q, &c);
                    best = Some((unwrap_near(ra, center), rb, dist));
                }
            }
        }
        x0 = x1;
        g0 = g1;
    }
    best.map(|(ra, rb, _)| (ra, rb))
}

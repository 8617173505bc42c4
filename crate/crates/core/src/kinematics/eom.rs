use nalgebra::{SMatrix, SVector};

use super::{coord, DrivenJointOutput, KinematicInput, KinematicState, LinkageTopology};
use crate::error::{Error, Result};

pub type KinematicAccel = SVector<f64, 12>;

/// `||A||_1 ||A^-1||_1`, or infinity when `A` is not invertible.
pub(crate) fn condition_estimate<const N: usize>(a: &SMatrix<f64, N, N>) -> f64 {
    let norm1 = |m: &SMatrix<f64, N, N>| m.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    match a.try_inverse() {
        Some(inv) => norm1(a) * norm1(&inv),
        None => f64::INFINITY,
    }
}

impl LinkageTopology {
    /// `Phi_q`: gear row first, then two rows per stage in solve order.
    pub fn constraint_jacobian(&self, q: &SVector<f64, 12>) -> SMatrix<f64, 7, 12> {
        let mut jac = SMatrix::<f64, 7, 12>::zeros();
        jac[(0, coord::THETA9)] = 1.0;
        jac[(0, coord::THETA1)] = -self.geometry.gear_ratio;
        for (k, d) in self.dyads.iter().enumerate() {
            let rows = d.lhs.jacobian(q) - d.rhs.jacobian(q);
            jac.fixed_rows_mut::<2>(1 + 2 * k).copy_from(&rows);
        }
        jac
    }

    /// `(Phi_q qd)_q qd`.
    pub fn constraint_bias(&self, q: &SVector<f64, 12>, qd: &SVector<f64, 12>) -> SVector<f64, 7> {
        let mut gamma = SVector::<f64, 7>::zeros();
        for (k, d) in self.dyads.iter().enumerate() {
            gamma.fixed_rows_mut::<2>(1 + 2 * k).copy_from(&(d.lhs.bias(q, qd) - d.rhs.bias(q, qd)));
        }
        gamma
    }

    fn constraint_rows(&self) -> [usize; 7] {
        let [d1, d2, d3] = &self.dyads;
        [coord::THETA9, d1.rows[0], d1.rows[1], d2.rows[0], d2.rows[1], d3.rows[0], d3.rows[1]]
    }

    /// `M_k`: identity rows for the actuated coordinates, constraint
    /// Jacobian rows for the closure-determined ones.
    pub fn mass_matrix(&self, q: &SVector<f64, 12>) -> SMatrix<f64, 12, 12> {
        let mut m = SMatrix::<f64, 12, 12>::zeros();
        for &i in &coord::INDEPENDENT {
            m[(i, i)] = 1.0;
        }
        let jac = self.constraint_jacobian(q);
        for (r, row) in self.constraint_rows().into_iter().enumerate() {
            m.row_mut(row).copy_from(&jac.row(r));
        }
        m
    }

    /// `h_k`: velocity-quadratic closure terms, zero on actuated rows.
    pub fn bias(&self, q: &SVector<f64, 12>, qd: &SVector<f64, 12>) -> SVector<f64, 12> {
        let gamma = self.constraint_bias(q, qd);
        let mut h = SVector::<f64, 12>::zeros();
        for (r, row) in self.constraint_rows().into_iter().enumerate() {
            h[row] = gamma[r];
        }
        h
    }

    /// `B_k`: maps `[u_g, u_3b, u_3c, u_8b, u_10b]` onto the actuated rows.
    pub fn input_matrix(&self) -> SMatrix<f64, 12, 5> {
        let mut b = SMatrix::<f64, 12, 5>::zeros();
        for (c, &i) in coord::INDEPENDENT.iter().enumerate() {
            b[(i, c)] = 1.0;
        }
        b
    }

    /// `qdd_k = M_k^{-1} (B_k u_k - h_k)`.
    pub fn kinematic_eom(&self, state: &KinematicState, input: &KinematicInput) -> Result<KinematicAccel> {
        let m = self.mass_matrix(&state.q);
        let condition = condition_estimate(&m);
        if !(condition <= self.geometry.singular_condition_limit) {
            return Err(Error::SingularMassMatrix { condition });
        }
        let rhs = self.input_matrix() * input.as_vector() - self.bias(&state.q, &state.qd);
        m.lu().solve(&rhs).ok_or(Error::SingularMassMatrix { condition })
    }

    pub fn driven_joint_output(&self, state: &KinematicState, accel: &KinematicAccel) -> DrivenJointOutput {
        let (q, qd) = (&state.q, &state.qd);
        let (j5, j16) = (&self.joint5, &self.joint16);
        DrivenJointOutput {
            p5: j5.position(q),
            p16: j16.position(q),
            v5: j5.velocity(q, qd),
            v16: j16.velocity(q, qd),
            a5: j5.jacobian(q) * accel + j5.bias(q, qd),
            a16: j16.jacobian(q) * accel + j16.bias(q, qd),
        }
    }

    /// Elbow (joint 17) position; the radius rotates about this point.
    pub fn elbow_position(&self, q: &SVector<f64, 12>) -> nalgebra::Vector2<f64> {
        self.elbow.position(q)
    }

    /// Absolute angle of the humerus axis in the wing-root frame.
    pub fn humerus_angle(&self, q: &SVector<f64, 12>) -> f64 {
        q[coord::THETA4] + self.geometry.humerus_axis_offset_rad
    }

    /// Absolute angle of the radius axis in the wing-root frame.
    pub fn radius_angle(&self, q: &SVector<f64, 12>) -> f64 {
        q[coord::THETA14] + self.geometry.radius_output_angle_rad
    }
}

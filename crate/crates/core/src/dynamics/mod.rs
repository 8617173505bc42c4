//! Massed subsystem: body plus humerus and radius of each wing.
//!
//! Generalized velocity `v = [p' (inertial, 3), phi' (4), omega_B (body, 3)]`
//! with `phi = [left humerus, left radius, right humerus, right radius]`.
//! Humerus angles are absolute in the wing-root plane; radius angles are
//! measured relative to the humerus. The body frame has x forward, y to the
//! left and z up; its origin is the body center of mass.

mod attitude;
mod coupling;
mod model;

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attitude::{orthonormalize, pitch_angle, step_attitude};
pub use coupling::{coupling_forces, CouplingForces, CouplingSite, JointCoupling};
pub use model::{
    angular_momentum, bias_forces, dynamics_accel, energies, linear_momentum, link_rotation, mass_matrix, total_mass,
    vehicle_com, Energies, LinkPoint, PointKinematics,
};

pub type GeneralizedForce = SVector<f64, 10>;

/// The four massed wing links.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WingLink {
    LeftHumerus,
    LeftRadius,
    RightHumerus,
    RightRadius,
}

impl WingLink {
    pub const ALL: [WingLink; 4] =
        [WingLink::LeftHumerus, WingLink::LeftRadius, WingLink::RightHumerus, WingLink::RightRadius];

    pub fn index(self) -> usize {
        self as usize
    }

    /// +1 for the left wing, -1 for the right.
    pub fn side(self) -> f64 {
        match self {
            WingLink::LeftHumerus | WingLink::LeftRadius => 1.0,
            WingLink::RightHumerus | WingLink::RightRadius => -1.0,
        }
    }

    pub fn is_radius(self) -> bool {
        matches!(self, WingLink::LeftRadius | WingLink::RightRadius)
    }

    /// Index of this wing's humerus angle within `phi`.
    pub fn humerus_slot(self) -> usize {
        if self.side() > 0.0 {
            0
        } else {
            2
        }
    }

    pub fn label(self) -> &'static str {
        ["LH", "LR", "RH", "RR"][self.index()]
    }
}

/// Mass, center of mass and principal inertia of one wing link.
///
/// The link frame has x along the flapping axis (body x), y along the link
/// and z completing the triad. `com_m` is `[along, across]` in the link plane
/// from the link's joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkMassConfig {
    pub mass_kg: f64,
    pub length_m: f64,
    pub com_m: [f64; 2],
    /// Principal moments about the center of mass in the link frame.
    pub inertia_kg_m2: [f64; 3],
}

impl LinkMassConfig {
    /// Slender rod of the given mass and length.
    pub fn rod(mass_kg: f64, length_m: f64) -> Self {
        let transverse = mass_kg * length_m * length_m / 12.0;
        Self {
            mass_kg,
            length_m,
            com_m: [0.5 * length_m, 0.0],
            inertia_kg_m2: [transverse, 1e-3 * transverse, transverse],
        }
    }
}

impl Default for LinkMassConfig {
    fn default() -> Self {
        Self::rod(2.0e-3, 0.05)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MassProperties {
    pub body_mass_kg: f64,
    /// Body inertia tensor about its center of mass, body frame.
    pub body_inertia_kg_m2: [[f64; 3]; 3],
    /// Left shoulder pivot in the body frame; the right one is mirrored in y.
    pub shoulder_m: [f64; 3],
    pub humerus: LinkMassConfig,
    pub radius: LinkMassConfig,
}

impl Default for MassProperties {
    fn default() -> Self {
        // prolate ellipsoid, semi-axes 60 x 15 x 15 mm
        let m = 22.0e-3;
        let (a, b) = (0.06f64, 0.015f64);
        let ixx = m * 2.0 * b * b / 5.0;
        let iyy = m * (a * a + b * b) / 5.0;
        Self {
            body_mass_kg: m,
            body_inertia_kg_m2: [[ixx, 0.0, 0.0], [0.0, iyy, 0.0], [0.0, 0.0, iyy]],
            shoulder_m: [-4.5e-3, 10.0e-3, 30.0e-3],
            humerus: LinkMassConfig::rod(2.0e-3, 0.05),
            radius: LinkMassConfig::rod(2.0e-3, 0.10),
        }
    }
}

impl MassProperties {
    pub fn body_inertia(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|r, c| self.body_inertia_kg_m2[r][c])
    }

    pub fn link(&self, link: WingLink) -> &LinkMassConfig {
        if link.is_radius() {
            &self.radius
        } else {
            &self.humerus
        }
    }

    /// Shoulder of the given wing in the body frame.
    pub fn shoulder(&self, side: f64) -> Vector3<f64> {
        let [x, y, z] = self.shoulder_m;
        Vector3::new(x, side * y, z)
    }

    /// Distance from shoulder to elbow along the humerus.
    pub fn elbow_distance(&self) -> f64 {
        self.humerus.length_m
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.body_mass_kg > 0.0 && self.body_mass_kg.is_finite()) {
            return Err(Error::validation("mass.body_mass_kg", "must be positive"));
        }
        check_spd("mass.body_inertia_kg_m2", &self.body_inertia())?;
        for (name, link) in [("humerus", &self.humerus), ("radius", &self.radius)] {
            if !(link.mass_kg > 0.0 && link.mass_kg.is_finite()) {
                return Err(Error::validation(format!("mass.{name}.mass_kg"), "must be positive"));
            }
            if !(link.length_m > 0.0 && link.length_m.is_finite()) {
                return Err(Error::validation(format!("mass.{name}.length_m"), "must be positive"));
            }
            if link.inertia_kg_m2.iter().any(|&i| !(i > 0.0 && i.is_finite())) {
                return Err(Error::validation(
                    format!("mass.{name}.inertia_kg_m2"),
                    "principal moments must be positive",
                ));
            }
        }
        if self.shoulder_m.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("mass.shoulder_m", "must be finite"));
        }
        Ok(())
    }
}

fn check_spd(key: &str, m: &Matrix3<f64>) -> Result<()> {
    if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max() {
        return Err(Error::validation(key, "must be symmetric"));
    }
    if m.cholesky().is_none() {
        return Err(Error::validation(key, "must be positive definite"));
    }
    Ok(())
}

/// Generalized coordinates and velocities of the massed subsystem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicState {
    /// `[p (3), phi (4)]`
    pub q: SVector<f64, 7>,
    /// `[p', phi']`
    pub qd: SVector<f64, 7>,
    /// Body to inertial rotation.
    pub r_b: Matrix3<f64>,
    /// Body angular velocity in the body frame.
    pub omega: Vector3<f64>,
}

impl DynamicState {
    pub fn at_rest(phi: [f64; 4]) -> Self {
        let mut q = SVector::<f64, 7>::zeros();
        q.fixed_rows_mut::<4>(3).copy_from_slice(&phi);
        Self { q, qd: SVector::zeros(), r_b: Matrix3::identity(), omega: Vector3::zeros() }
    }

    pub fn position(&self) -> Vector3<f64> {
        self.q.fixed_rows::<3>(0).into_owned()
    }

    pub fn velocity(&self) -> Vector3<f64> {
        self.qd.fixed_rows::<3>(0).into_owned()
    }

    pub fn phi(&self) -> SVector<f64, 4> {
        self.q.fixed_rows::<4>(3).into_owned()
    }

    pub fn phi_rate(&self) -> SVector<f64, 4> {
        self.qd.fixed_rows::<4>(3).into_owned()
    }

    /// `[p', phi', omega]`.
    pub fn generalized_velocity(&self) -> SVector<f64, 10> {
        let mut v = SVector::<f64, 10>::zeros();
        v.fixed_rows_mut::<7>(0).copy_from(&self.qd);
        v.fixed_rows_mut::<3>(7).copy_from(&self.omega);
        v
    }

    /// Absolute planar angle of a link in its wing-root plane.
    pub fn link_angle(&self, link: WingLink) -> f64 {
        let h = self.q[3 + link.humerus_slot()];
        if link.is_radius() {
            h + self.q[4 + link.humerus_slot()]
        } else {
            h
        }
    }

    pub fn pitch(&self) -> f64 {
        pitch_angle(&self.r_b)
    }
}

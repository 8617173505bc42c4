use nalgebra::{SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{DynamicState, LinkPoint, MassProperties, PointKinematics, WingLink};
use crate::error::{Error, Result};
use crate::kinematics::DrivenJointOutput;

/// Spring-damper tying a massed link point to a driven joint of the linkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingSite {
    pub stiffness_n_per_m: f64,
    /// Acts on the full relative velocity of the two points.
    pub damping_n_s_per_m: f64,
    pub rest_length_m: f64,
    /// `[along, across]` on the massed link. When absent, the point that
    /// coincides with the driven joint at nominal FDC lengths is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attachment_m: Option<[f64; 2]>,
}

impl CouplingSite {
    fn validate(&self, key: &str) -> Result<()> {
        for (name, value) in [
            ("stiffness_n_per_m", self.stiffness_n_per_m),
            ("damping_n_s_per_m", self.damping_n_s_per_m),
            ("rest_length_m", self.rest_length_m),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(Error::validation(format!("{key}.{name}"), "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Joint 5 drives the humerus, joint 16 the radius, on both wings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointCoupling {
    pub humerus: CouplingSite,
    pub radius: CouplingSite,
}

impl Default for CouplingSite {
    fn default() -> Self {
        Self { stiffness_n_per_m: 1.0e5, damping_n_s_per_m: 15.0, rest_length_m: 0.0, attachment_m: None }
    }
}

impl Default for JointCoupling {
    fn default() -> Self {
        Self {
            humerus: CouplingSite::default(),
            radius: CouplingSite { stiffness_n_per_m: 2.0e4, damping_n_s_per_m: 3.0, ..CouplingSite::default() },
        }
    }
}

impl JointCoupling {
    pub fn validate(&self) -> Result<()> {
        self.humerus.validate("coupling.humerus")?;
        self.radius.validate("coupling.radius")
    }

    pub fn site(&self, link: WingLink) -> &CouplingSite {
        if link.is_radius() {
            &self.radius
        } else {
            &self.humerus
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingForces {
    /// Force on each massed link, body frame, in [`WingLink::ALL`] order.
    pub forces: [Vector3<f64>; 4],
    /// Virtual-work map of the four forces (3 columns per site).
    pub b_s: SMatrix<f64, 10, 12>,
    pub generalized: SVector<f64, 10>,
    pub spring_energy: f64,
    /// Power delivered by the moving driven joints.
    pub drive_power: f64,
    /// Power dissipated by the dampers (non-positive).
    pub damping_power: f64,
}

/// Spring and damper forces for the four coupling sites.
///
/// `attachments` gives the resolved `[along, across]` point on each massed
/// link. Each site is a bushing mounted on the body at the driven joint: it
/// reacts to the stretch `d` and its body-frame rate, and its reaction acts
/// at the attachment point. The vehicle sees no net force or torque, only
/// `D^T f` on the link angles.
pub fn coupling_forces(
    state: &DynamicState,
    props: &MassProperties,
    driven: &DrivenJointOutput,
    coupling: &JointCoupling,
    attachments: &[[f64; 2]; 2],
    damping_on: bool,
) -> CouplingForces {
    let mut out = CouplingForces {
        forces: [Vector3::zeros(); 4],
        b_s: SMatrix::zeros(),
        generalized: SVector::zeros(),
        spring_energy: 0.0,
        drive_power: 0.0,
        damping_power: 0.0,
    };
    for link in WingLink::ALL {
        let site = coupling.site(link);
        let s = link.side();
        let [along, across] = attachments[usize::from(link.is_radius())];
        let pk = PointKinematics::of(state, props, &LinkPoint::new(link, along, across));
        let (p, v): (Vector2<f64>, Vector2<f64>) =
            if link.is_radius() { (driven.p16, driven.v16) } else { (driven.p5, driven.v5) };
        let rj = props.shoulder(s) + Vector3::new(0.0, s * p.x, p.y);
        let vj = Vector3::new(0.0, s * v.x, v.y);
        let d = pk.r - rj;
        let v_rel = pk.r_dot - vj;

        let len = d.norm();
        let stretch = len - site.rest_length_m;
        let mut f = if site.rest_length_m == 0.0 {
            -site.stiffness_n_per_m * d
        } else if len > 0.0 {
            -site.stiffness_n_per_m * stretch * d / len
        } else {
            Vector3::zeros()
        };
        out.spring_energy += 0.5 * site.stiffness_n_per_m * stretch * stretch;
        if damping_on {
            let fc = -site.damping_n_s_per_m * v_rel;
            out.damping_power += fc.dot(&v_rel);
            f += fc;
        }
        out.drive_power += f.dot(&vj);

        let k = link.index();
        let mut cols = SMatrix::<f64, 10, 3>::zeros();
        cols.fixed_view_mut::<4, 3>(3, 0).copy_from(&pk.d.transpose());
        out.b_s.fixed_view_mut::<10, 3>(0, 3 * k).copy_from(&cols);
        out.generalized += cols * f;
        out.forces[k] = f;
    }
    out
}

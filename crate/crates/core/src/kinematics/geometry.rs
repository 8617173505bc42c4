//! Planar geometry of one wing's linkage, in the wing-root frame.
//!
//! The wing-root frame has its origin at the shoulder pivot (joint 4), `u`
//! pointing spanwise outboard and `w` pointing up. All lengths are meters,
//! all angles radians measured counter-clockwise from `+u`.

use serde::{Deserialize, Serialize};

use super::Fdc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdcConfig {
    /// Nominal segment lengths `[l_3b, l_3c, l_8b, l_10b]`.
    pub nominal_m: [f64; 4],
    /// Mechanical stroke limits of each FDC.
    pub min_m: [f64; 4],
    pub max_m: [f64; 4],
}

impl Default for FdcConfig {
    fn default() -> Self {
        let nominal_m = [7.8e-3, 10.5e-3, 6.2e-3, 7.2e-3];
        Self { nominal_m, min_m: nominal_m.map(|l| l - 3.0e-3), max_m: nominal_m.map(|l| l + 3.0e-3) }
    }
}

/// Link dimensions and ground anchors of the kinetic-sculpture linkage.
///
/// The linkage has three closed stages solved in order:
/// the humerus crank-rocker (crank L1, coupler L2, rocker segment 3b), the
/// push-rod stage (second crank L6, push-rod L8 with segment 8b, bell crank L9
/// pivoting on the humerus) and the elbow four-bar (bell crank L9, radius link
/// L10 with segment 10b, radius crank L12 pivoting at the elbow).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismConfig {
    /// Ground pivot of the motor crank (joint 1).
    pub crank_center_m: [f64; 2],
    pub crank_length_m: f64,
    pub coupler_length_m: f64,
    /// Angle of segment 3c relative to segment 3b on the humerus rocker.
    pub output_arm_angle_rad: f64,
    /// Angle of the humerus axis relative to segment 3b.
    pub humerus_axis_offset_rad: f64,
    /// Ground pivot of the geared second crank (joint 9).
    pub second_crank_center_m: [f64; 2],
    pub second_crank_length_m: f64,
    /// theta_9 = gear_ratio * theta_1 + gear_phase_rad.
    pub gear_ratio: f64,
    pub gear_phase_rad: f64,
    /// Fixed part of the push-rod; the FDC segment 8b adds to it.
    pub pushrod_fixed_length_m: f64,
    /// Distance of the bell-crank pivot from the shoulder along the humerus axis.
    pub bell_crank_pivot_m: f64,
    pub bell_crank_input_arm_m: f64,
    pub bell_crank_output_arm_m: f64,
    /// Angle of the bell-crank output arm relative to its input arm.
    pub bell_crank_arm_angle_rad: f64,
    /// Distance of the elbow from the shoulder along the humerus axis.
    pub elbow_distance_m: f64,
    /// Fixed part of the radius link; the FDC segment 10b adds to it.
    pub radius_link_fixed_length_m: f64,
    pub radius_crank_arm_m: f64,
    /// Distance of joint 16 from the elbow along the radius axis.
    pub radius_output_arm_m: f64,
    /// Angle of the radius axis relative to the radius crank arm.
    pub radius_output_angle_rad: f64,
    /// Assembly branch of each closed stage: sign of `(B - A) x (C - A)`.
    pub branches: [i8; 3],
    pub fdc: FdcConfig,
    pub closure_tolerance_m: f64,
    pub branch_jump_threshold_rad: f64,
    pub singular_condition_limit: f64,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            crank_center_m: [-4.0e-3, -11.0e-3],
            crank_length_m: 3.0e-3,
            coupler_length_m: 12.0e-3,
            output_arm_angle_rad: std::f64::consts::FRAC_PI_2,
            humerus_axis_offset_rad: 0.62,
            second_crank_center_m: [0.0, -6.0e-3],
            second_crank_length_m: 3.5e-3,
            gear_ratio: 1.0,
            gear_phase_rad: 0.0,
            pushrod_fixed_length_m: 29.3e-3,
            bell_crank_pivot_m: 35.0e-3,
            bell_crank_input_arm_m: 12.0e-3,
            bell_crank_output_arm_m: 12.0e-3,
            bell_crank_arm_angle_rad: 0.0,
            elbow_distance_m: 50.0e-3,
            radius_link_fixed_length_m: 7.8e-3,
            radius_crank_arm_m: 12.0e-3,
            radius_output_arm_m: 20.0e-3,
            radius_output_angle_rad: std::f64::consts::FRAC_PI_2,
            branches: [-1, -1, -1],
            fdc: FdcConfig::default(),
            closure_tolerance_m: 1e-12,
            branch_jump_threshold_rad: 0.5,
            singular_condition_limit: 1e10,
        }
    }
}

impl MechanismConfig {
    pub fn nominal_length(&self, fdc: Fdc) -> f64 {
        self.fdc.nominal_m[fdc.index()]
    }

    /// Position of joint 5 in the humerus frame (x along the humerus axis).
    ///
    /// Joint 5 rides rigidly on the humerus rocker, so this only depends on
    /// the 3b/3c segment lengths.
    pub fn joint5_in_humerus_frame(&self, l3b: f64, l3c: f64) -> [f64; 2] {
        let g = self.humerus_axis_offset_rad;
        let b = self.output_arm_angle_rad;
        [l3b * (-g).cos() + l3c * (b - g).cos(), l3b * (-g).sin() + l3c * (b - g).sin()]
    }
}

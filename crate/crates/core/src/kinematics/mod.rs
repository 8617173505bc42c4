//! Massless linkage subsystem of the wing.
//!
//! Coordinate layout of `q_k` (index: meaning):
//!
//! | idx | coordinate | joint / segment |
//! |-----|------------|-----------------|
//! | 0   | `theta_1`  | motor crank L1 at j1 |
//! | 1   | `theta_2`  | coupler L2 (j2 to j3) |
//! | 2   | `theta_4`  | humerus rocker L3, direction of segment 3b from j4 |
//! | 3   | `theta_9`  | geared second crank L6 at j9 |
//! | 4   | `theta_10` | push-rod L8 (j10 to j11) |
//! | 5   | `theta_12` | bell crank L9 input arm (j8 to j11) |
//! | 6   | `theta_13` | radius link L10 (j13 to j15) |
//! | 7   | `theta_14` | radius crank L12 arm (j17 to j15) |
//! | 8   | `l_3b`     | FDC on segment 3b |
//! | 9   | `l_3c`     | FDC on segment 3c |
//! | 10  | `l_8b`     | FDC on segment 8b |
//! | 11  | `l_10b`    | FDC on segment 10b |
//!
//! Angles are absolute in the wing-root frame.

mod closure;
mod eom;
mod expr;
mod geometry;
mod sensitivity;
mod topology;

use std::fmt;
use std::str::FromStr;

use nalgebra::{SVector, Vector2, Vector4};
use serde::{Deserialize, Serialize};

pub use eom::KinematicAccel;
pub use geometry::{FdcConfig, MechanismConfig};
pub use sensitivity::{sensitivity_analysis, write_sensitivity_csv, SensitivityParameter, SensitivityReport};
pub use topology::{Joint, JointKind, Link, LinkRef, LinkageTopology, Segment, SegmentLength};

/// Indices into `q_k`.
pub mod coord {
    pub const THETA1: usize = 0;
    pub const THETA2: usize = 1;
    pub const THETA4: usize = 2;
    pub const THETA9: usize = 3;
    pub const THETA10: usize = 4;
    pub const THETA12: usize = 5;
    pub const THETA13: usize = 6;
    pub const THETA14: usize = 7;
    pub const L3B: usize = 8;
    pub const L3C: usize = 9;
    pub const L8B: usize = 10;
    pub const L10B: usize = 11;

    /// Coordinates driven directly by `u_k`.
    pub const INDEPENDENT: [usize; 5] = [THETA1, L3B, L3C, L8B, L10B];
    /// Coordinates fixed by loop closure.
    pub const DEPENDENT: [usize; 7] = [THETA2, THETA4, THETA9, THETA10, THETA12, THETA13, THETA14];

    pub const NAMES: [&str; 12] = [
        "theta_1", "theta_2", "theta_4", "theta_9", "theta_10", "theta_12", "theta_13", "theta_14", "l_3b", "l_3c",
        "l_8b", "l_10b",
    ];
}

/// The four length-adjustable segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Fdc {
    L3b,
    L3c,
    L8b,
    L10b,
}

impl Fdc {
    pub const ALL: [Fdc; 4] = [Fdc::L3b, Fdc::L3c, Fdc::L8b, Fdc::L10b];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Position of this length in `q_k`.
    pub fn coord(self) -> usize {
        coord::L3B + self.index()
    }

    pub fn name(self) -> &'static str {
        ["l_3b", "l_3c", "l_8b", "l_10b"][self.index()]
    }

    /// Radius-side segments do not enter the humerus chain.
    pub fn is_radius_side(self) -> bool {
        matches!(self, Fdc::L8b | Fdc::L10b)
    }
}

impl fmt::Display for Fdc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fdc {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fdc::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown FDC segment `{s}`"))
    }
}

/// `q_k` and its time derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub q: SVector<f64, 12>,
    pub qd: SVector<f64, 12>,
}

impl KinematicState {
    pub fn crank_angle(&self) -> f64 {
        self.q[coord::THETA1]
    }

    pub fn crank_rate(&self) -> f64 {
        self.qd[coord::THETA1]
    }

    pub fn fdc_lengths(&self) -> Vector4<f64> {
        self.q.fixed_rows::<4>(coord::L3B).into_owned()
    }

    pub fn fdc_rates(&self) -> Vector4<f64> {
        self.qd.fixed_rows::<4>(coord::L3B).into_owned()
    }

    /// Independent velocities `[theta_1', l_3b', l_3c', l_8b', l_10b']`.
    pub fn independent_rates(&self) -> SVector<f64, 5> {
        SVector::from_iterator(coord::INDEPENDENT.iter().map(|&i| self.qd[i]))
    }
}

/// `u_k = [u_g, u_3b, u_3c, u_8b, u_10b]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicInput {
    pub u_g: f64,
    pub u_p: Vector4<f64>,
}

impl KinematicInput {
    pub fn as_vector(&self) -> SVector<f64, 5> {
        SVector::<f64, 5>::new(self.u_g, self.u_p[0], self.u_p[1], self.u_p[2], self.u_p[3])
    }
}

/// Joints 5 and 16 in the wing-root frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivenJointOutput {
    pub p5: Vector2<f64>,
    pub p16: Vector2<f64>,
    pub v5: Vector2<f64>,
    pub v16: Vector2<f64>,
    pub a5: Vector2<f64>,
    pub a16: Vector2<f64>,
}

//! Flight dynamics, morphing-linkage kinematics and pitch control for a
//! bat-inspired flapping-wing robot.

// `!(x < limit)` guards are written that way so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aero;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod kinematics;
pub mod optim;
pub mod sim;

pub use error::{Error, Result};

//! Dynamics of a three-wheel omnidirectional robot driven by DC motors.
//!
//! The chain runs from armature voltage to per-wheel traction force, to the
//! body wrench, to a linear state-space model on `(v, v_n, ω)`. Two model
//! variants are provided: the corrected model and a reconstruction of an
//! uncorrected one that misses the yaw-rate coupling in the lateral force and
//! may carry a different yaw damping. The [`sim`], [`compare`] and [`mpc`]
//! modules quantify what that difference does in open and closed loop.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod actuation;
pub mod compare;
pub mod error;
pub mod kinematics;
pub mod mpc;
pub mod params;
pub mod sim;
pub mod statespace;

pub use actuation::{
    closed_form_wrench, wheel_forces, wrench_from_wheel_forces, MotorInput, Variant, WheelForces,
    Wrench,
};
pub use error::{Error, ParamError, Result};
pub use kinematics::{body_to_wheels, wheels_to_body, BodyVelocity, Pose, WheelSpeeds};
pub use params::{DriveConstants, RobotParams};
pub use statespace::{DiscreteStateSpace, StateSpace};

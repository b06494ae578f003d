//! DC-motor traction model and the resulting body wrench.
//!
//! Armature inductance is neglected, so current is an algebraic function of
//! voltage and wheel speed and there is no electrical state. The body wrench
//! is available along two routes that must agree: per-wheel forces summed
//! through the mount geometry ([`wrench_from_wheel_forces`]), and the
//! collected closed form ([`closed_form_wrench`]).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::{body_to_wheels, BodyVelocity};
use crate::params::RobotParams;

/// Armature voltages, V.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MotorInput {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
}

impl MotorInput {
    pub fn new(u1: f64, u2: f64, u3: f64) -> Self {
        MotorInput { u1, u2, u3 }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.u1, self.u2, self.u3)
    }

    pub fn from_vector(u: &Vector3<f64>) -> Self {
        MotorInput::new(u[0], u[1], u[2])
    }

    pub fn sum(&self) -> f64 {
        self.u1 + self.u2 + self.u3
    }

    /// Clips each voltage to `[-u_max, u_max]`.
    pub fn saturate(self, u_max: f64) -> Self {
        MotorInput::new(
            self.u1.clamp(-u_max, u_max),
            self.u2.clamp(-u_max, u_max),
            self.u3.clamp(-u_max, u_max),
        )
    }
}

/// Traction force of each wheel along its drive direction, N.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WheelForces {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

/// Net body-frame force and yaw torque.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub f_v: f64,
    pub f_vn: f64,
    pub gamma: f64,
}

impl Wrench {
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.f_v, self.f_vn, self.gamma)
    }
}

/// Which dynamics model to use.
///
/// `Erroneous` reconstructs the uncorrected model: the yaw-rate term of the
/// lateral force is missing, and the yaw damping in the torque is multiplied
/// by `torque_scale` (1.0 leaves it unchanged).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Variant {
    Correct,
    Erroneous { torque_scale: f64 },
}

impl Variant {
    pub fn erroneous() -> Self {
        Variant::Erroneous { torque_scale: 1.0 }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Correct => "correct",
            Variant::Erroneous { .. } => "erroneous",
        }
    }

    /// Multiplier on the yaw-rate damping in the lateral force (1 or 0).
    pub(crate) fn lateral_coupling(&self) -> f64 {
        match self {
            Variant::Correct => 1.0,
            Variant::Erroneous { .. } => 0.0,
        }
    }

    pub(crate) fn torque_scale(&self) -> f64 {
        match self {
            Variant::Correct => 1.0,
            Variant::Erroneous { torque_scale } => *torque_scale,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Armature current for voltage `u` at wheel drive speed `wheel_speed`.
pub fn motor_current(u: f64, wheel_speed: f64, params: &RobotParams) -> f64 {
    let back_emf = params.k_t * params.l * wheel_speed / params.r;
    (u - back_emf) / params.r_a
}

pub fn motor_torque(current: f64, params: &RobotParams) -> f64 {
    params.k_t * current
}

/// Torque after the gear reduction.
pub fn wheel_torque(motor_torque: f64, params: &RobotParams) -> f64 {
    motor_torque * params.l
}

pub fn force_from_torque(wheel_torque: f64, params: &RobotParams) -> f64 {
    wheel_torque / params.r
}

/// `f = gain·u − damping·v_wheel`.
pub fn traction_force(u: f64, wheel_speed: f64, params: &RobotParams) -> f64 {
    let c = params.drive_constants();
    c.gain * u - c.damping * wheel_speed
}

pub fn wheel_forces(u: MotorInput, vel: BodyVelocity, params: &RobotParams) -> WheelForces {
    let w = body_to_wheels(vel, params);
    WheelForces {
        f1: traction_force(u.u1, w.v1, params),
        f2: traction_force(u.u2, w.v2, params),
        f3: traction_force(u.u3, w.v3, params),
    }
}

/// Resolves per-wheel forces into the body frame.
pub fn wrench_from_wheel_forces(f: WheelForces, params: &RobotParams) -> Wrench {
    let (s, c) = params.mount_trig();
    Wrench {
        f_v: c * (f.f2 - f.f3),
        f_vn: -f.f1 + s * (f.f2 + f.f3),
        gamma: params.b() * (f.f1 + f.f2 + f.f3),
    }
}

/// Wrench with the velocity terms collected per state variable.
///
/// At a general mount angle:
///
/// ```text
/// F_v  = cos δ·g·(u2 − u3)          − 2cos²δ·D·v
/// F_vn = g·(−u1 + sin δ·(u2 + u3))  − D·((1 + 2sin²δ)·v_n + 2sin δ·ω·d)
/// Γ    = b·[g·(u1 + u2 + u3)        − D·((2sin δ − 1)·v_n + 2ω·d)]
/// ```
///
/// with `g`/`D` the drive gain/damping. At δ = 30° the coefficients become
/// 3/2, 3/2, ω·d, 0 and 2ω·d.
pub fn closed_form_wrench(
    u: MotorInput,
    vel: BodyVelocity,
    params: &RobotParams,
    variant: Variant,
) -> Wrench {
    let (s, c) = params.mount_trig();
    let cos_sq = 1.0 - s * s;
    let dc = params.drive_constants();
    let (g, damp) = (dc.gain, dc.damping);
    let d = params.d;

    let f_v = c * g * (u.u2 - u.u3) - 2.0 * cos_sq * damp * vel.v;
    let yaw_lateral = variant.lateral_coupling() * 2.0 * s * vel.omega * d;
    let f_vn =
        g * (-u.u1 + s * (u.u2 + u.u3)) - damp * ((1.0 + 2.0 * s * s) * vel.v_n + yaw_lateral);
    let yaw_damping = variant.torque_scale() * 2.0 * vel.omega * d;
    let gamma = params.b() * (g * u.sum() - damp * ((2.0 * s - 1.0) * vel.v_n + yaw_damping));

    Wrench { f_v, f_vn, gamma }
}

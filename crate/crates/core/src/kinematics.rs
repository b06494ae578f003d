//! Body-frame ↔ wheel-space velocity mapping and body → world rotation.
//!
//! Wheel 1 drives along the negative lateral axis, wheels 2 and 3 sit at
//! ±(90° − δ) from it. Wheel 1 carries no yaw term: `v1 = −v_n`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::params::{mount_trig, RobotParams};

/// Body-frame velocity, ordered `(v, v_n, ω)` everywhere in the crate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub v: f64,
    pub v_n: f64,
    pub omega: f64,
}

impl BodyVelocity {
    pub fn new(v: f64, v_n: f64, omega: f64) -> Self {
        BodyVelocity { v, v_n, omega }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.v, self.v_n, self.omega)
    }

    pub fn from_vector(x: &Vector3<f64>) -> Self {
        BodyVelocity::new(x[0], x[1], x[2])
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.v_n.is_finite() && self.omega.is_finite()
    }
}

/// Drive-direction speed of each wheel, m/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WheelSpeeds {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
}

impl WheelSpeeds {
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.v1, self.v2, self.v3)
    }

    pub fn from_vector(x: &Vector3<f64>) -> Self {
        WheelSpeeds {
            v1: x[0],
            v2: x[1],
            v3: x[2],
        }
    }
}

/// Planar world pose; `theta` is measured counterclockwise from the world
/// x-axis to the body longitudinal axis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// World-frame velocity `(ẋ, ẏ, θ̇)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WorldVelocity {
    pub x_dot: f64,
    pub y_dot: f64,
    pub theta_dot: f64,
}

/// Maps `(v, v_n, ω)` to `(v1, v2, v3)`:
///
/// ```text
/// [  0     -1    0 ]
/// [ cos δ  sin δ  d ]
/// [-cos δ  sin δ  d ]
/// ```
pub fn projection_matrix(delta: f64, d: f64) -> Matrix3<f64> {
    let (s, c) = mount_trig(delta);
    Matrix3::new(
        0.0, -1.0, 0.0, //
        c, s, d, //
        -c, s, d,
    )
}

/// Closed-form inverse of [`projection_matrix`]. Determinant is `2·d·cos δ`.
pub fn projection_inverse(delta: f64, d: f64) -> Matrix3<f64> {
    let (s, c) = mount_trig(delta);
    let half_c = 0.5 / c;
    let half_d = 0.5 / d;
    Matrix3::new(
        0.0,
        half_c,
        -half_c, //
        -1.0,
        0.0,
        0.0, //
        s / d,
        half_d,
        half_d,
    )
}

pub fn body_to_wheels(vel: BodyVelocity, params: &RobotParams) -> WheelSpeeds {
    let (s, c) = params.mount_trig();
    let spin = vel.omega * params.d;
    WheelSpeeds {
        v1: -vel.v_n,
        v2: vel.v * c + vel.v_n * s + spin,
        v3: -vel.v * c + vel.v_n * s + spin,
    }
}

pub fn wheels_to_body(ws: WheelSpeeds, params: &RobotParams) -> BodyVelocity {
    let (s, c) = params.mount_trig();
    let v_n = -ws.v1;
    BodyVelocity {
        v: (ws.v2 - ws.v3) / (2.0 * c),
        v_n,
        omega: (ws.v2 + ws.v3 - 2.0 * s * v_n) / (2.0 * params.d),
    }
}

/// Rotates the body translational velocity into the world frame.
pub fn body_to_world(pose: &Pose, vel: BodyVelocity) -> WorldVelocity {
    let (s, c) = pose.theta.sin_cos();
    WorldVelocity {
        x_dot: c * vel.v - s * vel.v_n,
        y_dot: s * vel.v + c * vel.v_n,
        theta_dot: vel.omega,
    }
}

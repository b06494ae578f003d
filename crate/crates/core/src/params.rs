//! Physical parameter set shared by every model in the crate.
//!
//! All wheels share one motor/gear/wheel description (torque constant equal
//! to the back-EMF constant), and the centre-to-wheel distance is used both
//! for the wheel projection and as the torque lever arm.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParamError};

/// Physical constants of the robot, SI units, angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// Motor torque constant, N·m/A. Also used as the back-EMF constant.
    pub k_t: f64,
    /// Gear reduction ratio (wheel teeth / motor teeth).
    pub l: f64,
    /// Wheel radius, m.
    pub r: f64,
    /// Armature resistance, Ω.
    pub r_a: f64,
    /// Centre-to-wheel distance, m. Doubles as the torque lever arm `b`.
    pub d: f64,
    /// Wheel mount half-angle, rad.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Robot mass, kg.
    pub mass: f64,
    /// Yaw inertia, kg·m².
    pub inertia: f64,
    /// Viscous friction on the longitudinal channel, N·s/m.
    pub b_v: f64,
    /// Viscous friction on the lateral channel, N·s/m.
    pub b_vn: f64,
    /// Viscous friction on the yaw channel, N·m·s.
    pub b_omega: f64,
}

fn default_delta() -> f64 {
    FRAC_PI_6
}

impl RobotParams {
    /// All constants equal to one, frictionless, 30° mount.
    pub fn unit() -> Self {
        RobotParams {
            k_t: 1.0,
            l: 1.0,
            r: 1.0,
            r_a: 1.0,
            d: 1.0,
            delta: FRAC_PI_6,
            mass: 1.0,
            inertia: 1.0,
            b_v: 0.0,
            b_vn: 0.0,
            b_omega: 0.0,
        }
    }

    /// Checks every invariant and returns the value unchanged when they hold.
    ///
    /// The first violated invariant is reported by field name.
    pub fn validate(self) -> Result<Self, ParamError> {
        let positive = [
            ("k_t", self.k_t),
            ("l", self.l),
            ("r", self.r),
            ("r_a", self.r_a),
            ("d", self.d),
            ("mass", self.mass),
            ("inertia", self.inertia),
        ];
        for (field, value) in positive {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { field });
            }
            if value <= 0.0 {
                return Err(ParamError::NotPositive { field, value });
            }
        }
        let non_negative = [
            ("b_v", self.b_v),
            ("b_vn", self.b_vn),
            ("b_omega", self.b_omega),
        ];
        for (field, value) in non_negative {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { field });
            }
            if value < 0.0 {
                return Err(ParamError::Negative { field, value });
            }
        }
        if !(self.delta > 0.0 && self.delta < FRAC_PI_2) {
            return Err(ParamError::MountAngle { value: self.delta });
        }
        Ok(self)
    }

    /// Parses a flat JSON object and validates it. Unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let params: RobotParams = serde_json::from_str(text)?;
        Ok(params.validate()?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Lumped traction-law coefficients.
    pub fn drive_constants(&self) -> DriveConstants {
        DriveConstants::from_params(self)
    }

    /// `(sin δ, cos δ)` of the wheel mount.
    ///
    /// The nominal 30° mount returns exactly `(1/2, √3/2)`: `sin(FRAC_PI_6)`
    /// rounds to `0.49999999999999994`, which would leave ~1e-16 residues in
    /// entries that vanish identically at 30°.
    pub fn mount_trig(&self) -> (f64, f64) {
        mount_trig(self.delta)
    }

    /// Torque lever arm; the same length as `d`.
    pub fn b(&self) -> f64 {
        self.d
    }
}

pub(crate) fn mount_trig(delta: f64) -> (f64, f64) {
    if (delta - FRAC_PI_6).abs() <= 4.0 * f64::EPSILON {
        (0.5, 0.75f64.sqrt())
    } else {
        delta.sin_cos()
    }
}

/// Voltage gain and speed damping of the per-wheel traction law
/// `f = gain·u − damping·v_wheel`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriveConstants {
    /// `K_t·l / (r·R_a)`, N/V.
    pub gain: f64,
    /// `K_t²·l² / (r²·R_a)`, N·s/m.
    pub damping: f64,
}

impl DriveConstants {
    pub fn from_params(p: &RobotParams) -> Self {
        let gain = p.k_t * p.l / (p.r * p.r_a);
        let damping = p.k_t * p.k_t * p.l * p.l / (p.r * p.r * p.r_a);
        DriveConstants { gain, damping }
    }
}

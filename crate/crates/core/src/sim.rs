//! Time integration of the body dynamics and world pose.

use std::io::{self, Write};

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::actuation::{closed_form_wrench, MotorInput, Variant, Wrench};
use crate::error::{Error, Result};
use crate::kinematics::{body_to_world, BodyVelocity, Pose};
use crate::params::RobotParams;
use crate::statespace::StateSpace;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    /// Symmetric voltage saturation applied before the plant, if any.
    #[serde(default)]
    pub u_max: Option<f64>,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_t_final() -> f64 {
    10.0
}

fn default_stride() -> usize {
    10
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: default_dt(),
            t_final: default_t_final(),
            integrator: Integrator::Rk4,
            record_stride: default_stride(),
            u_max: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0 (got {})", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "t_final must be >= dt (got {})",
                self.t_final
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be >= 1".into()));
        }
        if let Some(u_max) = self.u_max {
            if !(u_max > 0.0) {
                return Err(Error::Config(format!("u_max must be > 0 (got {u_max})")));
            }
        }
        Ok(())
    }

    /// Number of integration steps covering `[0, t_final]`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// One piece of a piecewise-constant signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment<T> {
    pub t_start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(flatten)]
    pub value: T,
}

/// Piecewise-constant signal; each segment holds until the next one starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule<T> {
    pub segments: Vec<Segment<T>>,
}

pub type InputSchedule = Schedule<MotorInput>;
pub type ReferenceSchedule = Schedule<BodyVelocity>;

impl<T: Copy> Schedule<T> {
    pub fn constant(value: T) -> Self {
        Schedule {
            segments: vec![Segment {
                t_start: 0.0,
                t_end: None,
                value,
            }],
        }
    }

    pub fn from_steps(steps: impl IntoIterator<Item = (f64, T)>) -> Self {
        Schedule {
            segments: steps
                .into_iter()
                .map(|(t_start, value)| Segment {
                    t_start,
                    t_end: None,
                    value,
                })
                .collect(),
        }
    }

    /// Checks that segments start at 0, are ordered and leave no gap or
    /// overlap before `t_final`.
    pub fn validate(&self, t_final: f64) -> Result<()> {
        let first = self
            .segments
            .first()
            .ok_or_else(|| Error::Config("schedule has no segments".into()))?;
        if first.t_start != 0.0 {
            return Err(Error::Config(format!(
                "schedule must start at t = 0 (first segment starts at {})",
                first.t_start
            )));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !seg.t_start.is_finite() {
                return Err(Error::Config(format!("segment {i}: t_start not finite")));
            }
            if let Some(end) = seg.t_end {
                if !(end > seg.t_start) {
                    return Err(Error::Config(format!(
                        "segment {i}: t_end {end} is not after t_start {}",
                        seg.t_start
                    )));
                }
            }
            match self.segments.get(i + 1) {
                Some(next) => {
                    if !(next.t_start > seg.t_start) {
                        return Err(Error::Config(format!(
                            "segment {}: t_start {} is not after previous start {}",
                            i + 1,
                            next.t_start,
                            seg.t_start
                        )));
                    }
                    if let Some(end) = seg.t_end {
                        if end < next.t_start {
                            return Err(Error::Config(format!(
                                "gap in schedule between t = {end} and t = {}",
                                next.t_start
                            )));
                        }
                        if end > next.t_start {
                            return Err(Error::Config(format!(
                                "segments {i} and {} overlap on [{}, {end}]",
                                i + 1,
                                next.t_start
                            )));
                        }
                    }
                }
                None => {
                    if let Some(end) = seg.t_end {
                        if end < t_final {
                            return Err(Error::Config(format!(
                                "schedule ends at t = {end} before t_final = {t_final}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Value held at time `t`. Start times within 1e-9 s count as reached.
    pub fn at(&self, t: f64) -> T {
        let idx = self
            .segments
            .partition_point(|s| s.t_start <= t + 1e-9)
            .saturating_sub(1);
        self.segments[idx].value
    }
}

/// Pose and body velocity of the plant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    #[serde(default)]
    pub pose: Pose,
    #[serde(default)]
    pub vel: BodyVelocity,
}

impl SimState {
    fn to_vector(self) -> SVector<f64, 6> {
        SVector::<f64, 6>::new(
            self.pose.x,
            self.pose.y,
            self.pose.theta,
            self.vel.v,
            self.vel.v_n,
            self.vel.omega,
        )
    }

    fn from_vector(s: &SVector<f64, 6>) -> Self {
        SimState {
            pose: Pose {
                x: s[0],
                y: s[1],
                theta: s[2],
            },
            vel: BodyVelocity::new(s[3], s[4], s[5]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.pose.is_finite() && self.vel.is_finite()
    }
}

fn rhs(model: &StateSpace, s: &SVector<f64, 6>, u: &Vector3<f64>) -> SVector<f64, 6> {
    let state = SimState::from_vector(s);
    let world = body_to_world(&state.pose, state.vel);
    let acc = model.derivative(&state.vel.to_vector(), u);
    SVector::<f64, 6>::new(
        world.x_dot,
        world.y_dot,
        world.theta_dot,
        acc[0],
        acc[1],
        acc[2],
    )
}

/// Advances pose and velocity by one step with `u` held constant.
///
/// Pose and velocity are integrated together so the pose uses the same
/// stage velocities.
pub fn step(
    state: &SimState,
    u: MotorInput,
    model: &StateSpace,
    dt: f64,
    integrator: Integrator,
) -> SimState {
    let s = state.to_vector();
    let u = u.to_vector();
    let next = match integrator {
        Integrator::Euler => s + rhs(model, &s, &u) * dt,
        Integrator::Rk4 => {
            let k1 = rhs(model, &s, &u);
            let k2 = rhs(model, &(s + k1 * (dt / 2.0)), &u);
            let k3 = rhs(model, &(s + k2 * (dt / 2.0)), &u);
            let k4 = rhs(model, &(s + k3 * dt), &u);
            s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    };
    SimState::from_vector(&next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub pose: Pose,
    pub vel: BodyVelocity,
    pub input: MotorInput,
    pub wrench: Wrench,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub variant: Variant,
    /// Time between recorded samples.
    pub spacing: f64,
    pub samples: Vec<Sample>,
}

pub const CSV_HEADER: &str = "t,x,y,theta,v,vn,omega,u1,u2,u3,Fv,Fvn,Gamma";

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.samples.last()
    }

    /// Writes the CSV form: header line then one row per sample, every value
    /// with 17 significant digits, LF line endings.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        out.write_all(CSV_HEADER.as_bytes())?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            let row = [
                s.t,
                s.pose.x,
                s.pose.y,
                s.pose.theta,
                s.vel.v,
                s.vel.v_n,
                s.vel.omega,
                s.input.u1,
                s.input.u2,
                s.input.u3,
                s.wrench.f_v,
                s.wrench.f_vn,
                s.wrench.gamma,
            ];
            for (i, value) in row.iter().enumerate() {
                if i > 0 {
                    out.write_all(b",")?;
                }
                write!(out, "{value:.16e}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }
}

/// Runs the plant from `x0` under `schedule`, recording every
/// `record_stride`-th step including `t = 0` and the final step.
pub fn simulate(
    x0: SimState,
    schedule: &InputSchedule,
    params: &RobotParams,
    variant: Variant,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    schedule.validate(cfg.t_final)?;
    let model = StateSpace::new(params, variant);
    let n = cfg.steps();
    let input_at = |t: f64| {
        let u = schedule.at(t);
        match cfg.u_max {
            Some(u_max) => u.saturate(u_max),
            None => u,
        }
    };

    let mut samples = Vec::with_capacity(n / cfg.record_stride + 2);
    let mut state = x0;
    for k in 0..=n {
        let t = k as f64 * cfg.dt;
        if !state.is_finite() {
            return Err(Error::NonFinite { t });
        }
        let u = input_at(t);
        if k % cfg.record_stride == 0 {
            samples.push(Sample {
                t,
                pose: state.pose,
                vel: state.vel,
                input: u,
                wrench: closed_form_wrench(u, state.vel, params, variant),
            });
        }
        if k < n {
            state = step(&state, u, &model, cfg.dt, cfg.integrator);
        }
    }
    Ok(Trajectory {
        variant,
        spacing: cfg.dt * cfg.record_stride as f64,
        samples,
    })
}

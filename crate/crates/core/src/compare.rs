//! Divergence between trajectories of the two model variants.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::RobotParams;
use crate::sim::{Sample, Trajectory};
use crate::statespace::build_a;
use crate::Variant;

pub const DEFAULT_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChannelError {
    pub max: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub scenario: String,
    pub threshold: f64,
    pub v: ChannelError,
    pub v_n: ChannelError,
    pub omega: ChannelError,
    pub x: ChannelError,
    pub y: ChannelError,
    pub theta: ChannelError,
    /// First sample time where `|Δv_n|` exceeds `threshold`.
    pub first_exceedance: Option<f64>,
}

const CHANNELS: [fn(&Sample) -> f64; 6] = [
    |s| s.vel.v,
    |s| s.vel.v_n,
    |s| s.vel.omega,
    |s| s.pose.x,
    |s| s.pose.y,
    |s| s.pose.theta,
];

/// Channel-wise max/RMS of `ta − tb`. Both trajectories must share a time grid.
pub fn diff_trajectories(
    scenario: &str,
    ta: &Trajectory,
    tb: &Trajectory,
    threshold: f64,
) -> Result<DivergenceReport> {
    if ta.len() != tb.len() {
        return Err(Error::Dimension(format!(
            "trajectories have {} and {} samples",
            ta.len(),
            tb.len()
        )));
    }
    if ta.is_empty() {
        return Err(Error::Dimension("trajectories are empty".into()));
    }
    for (a, b) in ta.samples.iter().zip(&tb.samples) {
        if (a.t - b.t).abs() > 1e-9 * a.t.abs().max(1.0) {
            return Err(Error::Dimension(format!(
                "time grids differ: {} vs {}",
                a.t, b.t
            )));
        }
    }

    let mut stats = [ChannelError::default(); 6];
    let mut first_exceedance = None;
    for (a, b) in ta.samples.iter().zip(&tb.samples) {
        for (stat, channel) in stats.iter_mut().zip(CHANNELS) {
            let e = (channel(a) - channel(b)).abs();
            stat.max = stat.max.max(e);
            stat.rms += e * e;
        }
        if first_exceedance.is_none() && (a.vel.v_n - b.vel.v_n).abs() > threshold {
            first_exceedance = Some(a.t);
        }
    }
    let n = ta.len() as f64;
    for stat in &mut stats {
        stat.rms = (stat.rms / n).sqrt();
        // RMS never exceeds the max; clamp the last-ulp rounding.
        stat.rms = stat.rms.min(stat.max);
    }
    let [v, v_n, omega, x, y, theta] = stats;
    Ok(DivergenceReport {
        scenario: scenario.to_string(),
        threshold,
        v,
        v_n,
        omega,
        x,
        y,
        theta,
        first_exceedance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Wheel radius.
    R,
    /// Armature resistance.
    RA,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// `|a[1][2]|`, the lateral-force yaw-rate coupling absent from the
    /// erroneous model.
    pub missing_term: f64,
}

/// Size of the yaw-rate coupling in the lateral row of `A` as `r` or `R_a` varies.
pub fn sensitivity_sweep(
    params: &RobotParams,
    which: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let p = match which {
                SweepParam::R => RobotParams {
                    r: value,
                    ..*params
                },
                SweepParam::RA => RobotParams {
                    r_a: value,
                    ..*params
                },
            }
            .validate()?;
            let a = build_a(&p, Variant::Correct);
            Ok(SweepRow {
                value,
                missing_term: a[(1, 2)].abs(),
            })
        })
        .collect()
}

use std::path::{Path, PathBuf};

use omnidyn_core::mpc::MpcConfig;
use omnidyn_core::sim::{InputSchedule, ReferenceSchedule, Schedule, Segment, SimConfig, SimState};
use omnidyn_core::{BodyVelocity, MotorInput, RobotParams, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum VariantSel {
    Correct,
    Erroneous,
    Both,
}

impl VariantSel {
    pub fn expand(self, torque_scale: f64) -> Vec<Variant> {
        let erroneous = Variant::Erroneous { torque_scale };
        match self {
            VariantSel::Correct => vec![Variant::Correct],
            VariantSel::Erroneous => vec![erroneous],
            VariantSel::Both => vec![Variant::Correct, erroneous],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSchedule {
    pub segments: usize,
    pub amplitude: f64,
    /// Forces `u1 + u2 + u3 = 0` in every segment.
    #[serde(default)]
    pub zero_sum: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Segments(InputSchedule),
    Random { random: RandomSchedule },
}

/// Scenario file as written on disk.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    /// Parameter file, relative to the scenario file.
    #[serde(default)]
    pub params: Option<PathBuf>,
    #[serde(default)]
    pub variants: Option<VariantSel>,
    #[serde(default)]
    pub torque_scale: Option<f64>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub initial: SimState,
    #[serde(default)]
    pub schedule: Option<ScheduleSpec>,
    #[serde(default)]
    pub reference: Option<ReferenceSchedule>,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub plant: Option<VariantSel>,
    #[serde(default)]
    pub controller: Option<VariantSel>,
    #[serde(default)]
    pub divergence_threshold: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// Command-line overrides shared by the scenario commands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub params: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub variant: Option<VariantSel>,
    pub torque_scale: Option<f64>,
    pub seed: Option<u64>,
}

/// A scenario with every path resolved and every field validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub params: RobotParams,
    pub variants: VariantSel,
    pub torque_scale: f64,
    pub sim: SimConfig,
    pub initial: SimState,
    pub schedule: InputSchedule,
    pub reference: Option<ReferenceSchedule>,
    pub mpc: MpcConfig,
    pub plant: Option<VariantSel>,
    pub controller: Option<VariantSel>,
    pub divergence_threshold: f64,
    pub output_dir: PathBuf,
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn load_params(path: &Path) -> Result<RobotParams, CliError> {
    let text = read_input(path)?;
    RobotParams::from_json(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

impl Scenario {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let text = read_input(path)?;
        let file: ScenarioFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: malformed scenario: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::resolve(file, base, ov)
    }

    pub fn resolve(file: ScenarioFile, base: &Path, ov: &Overrides) -> Result<Self, CliError> {
        if file.name.is_empty() || file.name.contains(['/', '\\']) {
            return Err(CliError::Input(format!(
                "scenario name {:?} must be non-empty and contain no path separators",
                file.name
            )));
        }
        let params_path = match (&ov.params, &file.params) {
            (Some(p), _) => p.clone(),
            (None, Some(p)) => base.join(p),
            (None, None) => {
                return Err(CliError::Input(
                    "no parameter file: set \"params\" in the scenario or pass --params".into(),
                ))
            }
        };
        let params = load_params(&params_path)?;
        file.sim.validate().map_err(CliError::from)?;

        let torque_scale = ov.torque_scale.or(file.torque_scale).unwrap_or(1.0);
        if !(torque_scale >= 0.0 && torque_scale.is_finite()) {
            return Err(CliError::Input(format!(
                "torque scale must be a finite value >= 0 (got {torque_scale})"
            )));
        }

        let schedule = match file.schedule {
            None => Schedule::constant(MotorInput::default()),
            Some(ScheduleSpec::Segments(s)) => s,
            Some(ScheduleSpec::Random { random }) => {
                random_schedule(&random, file.sim.t_final, ov.seed.unwrap_or(0))?
            }
        };
        schedule.validate(file.sim.t_final)?;

        let threshold = file
            .divergence_threshold
            .unwrap_or(omnidyn_core::compare::DEFAULT_THRESHOLD);
        if !(threshold > 0.0) {
            return Err(CliError::Input(format!(
                "divergence_threshold must be > 0 (got {threshold})"
            )));
        }

        let output_dir = match (&ov.out, &file.output_dir) {
            (Some(o), _) => o.clone(),
            (None, Some(o)) => base.join(o),
            (None, None) => base.join("out"),
        };

        Ok(Scenario {
            name: file.name,
            params,
            variants: ov.variant.or(file.variants).unwrap_or(VariantSel::Both),
            torque_scale,
            sim: file.sim,
            initial: file.initial,
            schedule,
            reference: file.reference,
            mpc: file.mpc,
            plant: file.plant,
            controller: file.controller,
            divergence_threshold: threshold,
            output_dir,
        })
    }
}

/// Evenly spaced random voltage segments from a seeded generator.
pub fn random_schedule(
    spec: &RandomSchedule,
    t_final: f64,
    seed: u64,
) -> Result<InputSchedule, CliError> {
    if spec.segments == 0 {
        return Err(CliError::Input("random schedule needs >= 1 segment".into()));
    }
    if !(spec.amplitude >= 0.0 && spec.amplitude.is_finite()) {
        return Err(CliError::Input(format!(
            "random amplitude must be >= 0 (got {})",
            spec.amplitude
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = spec.amplitude;
    let mut draw = || if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 };
    let segments = (0..spec.segments)
        .map(|i| {
            let u1 = draw();
            let u2 = draw();
            let u3 = if spec.zero_sum { -(u1 + u2) } else { draw() };
            Segment {
                t_start: i as f64 * t_final / spec.segments as f64,
                t_end: None,
                value: MotorInput::new(u1, u2, u3),
            }
        })
        .collect();
    Ok(Schedule { segments })
}

/// Reference used by the `mpc` command when the scenario gives none.
pub fn default_reference() -> ReferenceSchedule {
    Schedule::constant(BodyVelocity::default())
}

use std::io::Write;
use std::path::{Path, PathBuf};

use omnidyn_core::compare::{
    diff_trajectories, sensitivity_sweep, DivergenceReport, SweepParam, SweepRow,
};
use omnidyn_core::mpc::{
    closed_loop, ClosedLoopResult, ClosedLoopScenario, SolverStats, TrackingMetrics,
};
use omnidyn_core::sim::{simulate, Trajectory};
use omnidyn_core::statespace::MatrixReport;
use omnidyn_core::{RobotParams, Variant};
use serde::Serialize;

use crate::error::CliError;
use crate::scenario::{default_reference, load_params, Overrides, Scenario, VariantSel};

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let runtime = |e: std::io::Error| CliError::Runtime(format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(runtime)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| CliError::Runtime(format!("{}: not a file path", path.display())))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result.map_err(runtime)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serializing output: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Runs independent jobs on scoped threads; results keep input order.
fn run_parallel<T, R, F>(jobs: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs.iter().map(|job| scope.spawn(|| f(job))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

#[derive(Serialize)]
#[serde(untagged)]
enum MatricesOutput {
    One(Box<MatrixReport>),
    Both {
        correct: Box<MatrixReport>,
        erroneous: Box<MatrixReport>,
    },
}

/// JSON with `A`, `B` (and `Ad`, `Bd` when `dt` is given), row-major.
pub fn cmd_matrices(
    params_path: &Path,
    variant: VariantSel,
    torque_scale: f64,
    dt: Option<f64>,
) -> Result<String, CliError> {
    let params = load_params(params_path)?;
    if !(torque_scale >= 0.0 && torque_scale.is_finite()) {
        return Err(CliError::Input(format!(
            "torque scale must be a finite value >= 0 (got {torque_scale})"
        )));
    }
    let report = |v| MatrixReport::new(&params, v, dt).map_err(CliError::from);
    let erroneous = Variant::Erroneous { torque_scale };
    let out = match variant {
        VariantSel::Correct => MatricesOutput::One(Box::new(report(Variant::Correct)?)),
        VariantSel::Erroneous => MatricesOutput::One(Box::new(report(erroneous)?)),
        VariantSel::Both => MatricesOutput::Both {
            correct: Box::new(report(Variant::Correct)?),
            erroneous: Box::new(report(erroneous)?),
        },
    };
    to_json(&out)
}

fn trajectory_path(sc: &Scenario, variant: Variant) -> PathBuf {
    sc.output_dir
        .join(format!("{}_{}.csv", sc.name, variant.label()))
}

fn run_variants(sc: &Scenario, variants: &[Variant]) -> Result<Vec<Trajectory>, CliError> {
    run_parallel(variants, |&v| {
        simulate(sc.initial, &sc.schedule, &sc.params, v, &sc.sim)
    })
    .into_iter()
    .map(|r| r.map_err(CliError::from))
    .collect()
}

/// Simulates every requested variant; returns the files written.
pub fn cmd_simulate(scenario: &Path, ov: &Overrides) -> Result<Vec<PathBuf>, CliError> {
    let sc = Scenario::load(scenario, ov)?;
    let variants = sc.variants.expand(sc.torque_scale);
    let trajectories = run_variants(&sc, &variants)?;
    let mut written = Vec::new();
    for (v, traj) in variants.iter().zip(&trajectories) {
        let path = trajectory_path(&sc, *v);
        write_atomic(&path, traj.to_csv_string().as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
pub struct CompareOutput {
    pub torque_scale: f64,
    pub divergence: DivergenceReport,
    /// `|a[1][2]|` as `r` and `R_a` shrink to 1, 1/2, 1/4 of the scenario value.
    pub sensitivity: Sensitivity,
}

#[derive(Debug, Serialize)]
pub struct Sensitivity {
    pub r: Vec<SweepRow>,
    pub r_a: Vec<SweepRow>,
}

fn sensitivity(params: &RobotParams) -> Result<Sensitivity, CliError> {
    let scaled = |base: f64| [base, base * 0.5, base * 0.25];
    Ok(Sensitivity {
        r: sensitivity_sweep(params, SweepParam::R, &scaled(params.r))?,
        r_a: sensitivity_sweep(params, SweepParam::RA, &scaled(params.r_a))?,
    })
}

/// Runs both variants, writes their CSVs and a divergence report.
pub fn cmd_compare(scenario: &Path, ov: &Overrides) -> Result<Vec<PathBuf>, CliError> {
    let sc = Scenario::load(scenario, ov)?;
    let variants = VariantSel::Both.expand(sc.torque_scale);
    let trajectories = run_variants(&sc, &variants)?;
    let divergence = diff_trajectories(
        &sc.name,
        &trajectories[0],
        &trajectories[1],
        sc.divergence_threshold,
    )?;
    let report = CompareOutput {
        torque_scale: sc.torque_scale,
        divergence,
        sensitivity: sensitivity(&sc.params)?,
    };
    let mut written = Vec::new();
    for (v, traj) in variants.iter().zip(&trajectories) {
        let path = trajectory_path(&sc, *v);
        write_atomic(&path, traj.to_csv_string().as_bytes())?;
        written.push(path);
    }
    let path = sc.output_dir.join(format!("{}_report.json", sc.name));
    write_atomic(&path, to_json(&report)?.as_bytes())?;
    written.push(path);
    Ok(written)
}

#[derive(Debug, Serialize)]
pub struct MpcMetrics {
    pub scenario: String,
    pub plant: String,
    pub controller: String,
    pub torque_scale: f64,
    pub tracking: TrackingMetrics,
    pub solver: SolverStats,
}

/// Closed-loop runs: plant variant(s) × controller variant(s).
pub fn cmd_mpc(
    scenario: &Path,
    ov: &Overrides,
    plant: Option<VariantSel>,
    controller: Option<VariantSel>,
) -> Result<Vec<PathBuf>, CliError> {
    let sc = Scenario::load(scenario, ov)?;
    let plants = plant
        .or(sc.plant)
        .unwrap_or(VariantSel::Correct)
        .expand(sc.torque_scale);
    let controllers = controller
        .or(sc.controller)
        .or(ov.variant)
        .unwrap_or(VariantSel::Both)
        .expand(sc.torque_scale);
    let loop_scenario = ClosedLoopScenario {
        x0: sc.initial,
        reference: sc.reference.clone().unwrap_or_else(default_reference),
        t_final: sc.sim.t_final,
    };
    let pairs: Vec<(Variant, Variant)> = plants
        .iter()
        .flat_map(|&p| controllers.iter().map(move |&c| (p, c)))
        .collect();
    let results: Vec<ClosedLoopResult> = run_parallel(&pairs, |&(p, c)| {
        closed_loop(p, c, &loop_scenario, &sc.params, &sc.mpc)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut written = Vec::new();
    for ((p, c), result) in pairs.iter().zip(results) {
        let stem = format!("{}_mpc_plant-{}_ctrl-{}", sc.name, p.label(), c.label());
        let csv = sc.output_dir.join(format!("{stem}.csv"));
        write_atomic(&csv, result.trajectory.to_csv_string().as_bytes())?;
        let metrics = MpcMetrics {
            scenario: sc.name.clone(),
            plant: p.label().into(),
            controller: c.label().into(),
            torque_scale: sc.torque_scale,
            tracking: result.metrics,
            solver: result.solver,
        };
        let json = sc.output_dir.join(format!("{stem}_metrics.json"));
        write_atomic(&json, to_json(&metrics)?.as_bytes())?;
        written.push(csv);
        written.push(json);
    }
    Ok(written)
}

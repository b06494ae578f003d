//! Linear MPC tracking of a body-velocity reference.
//!
//! The prediction model is condensed into a dense box-constrained QP over the
//! stacked inputs and solved by projected gradient. The controller's model
//! variant and the plant's variant are chosen independently, which is how
//! model error is exercised in closed loop.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::actuation::{closed_form_wrench, MotorInput, Variant};
use crate::compare::ChannelError;
use crate::error::{Error, Result};
use crate::params::RobotParams;
use crate::sim::{step, Integrator, ReferenceSchedule, Sample, SimState, Trajectory};
use crate::statespace::{DiscreteStateSpace, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpcConfig {
    pub horizon: usize,
    /// Control period, s.
    pub dt: f64,
    /// Diagonal state weights on `(v, v_n, ω)`.
    pub q: [f64; 3],
    /// Diagonal input weights.
    pub r: [f64; 3],
    /// Symmetric voltage bound.
    pub u_max: f64,
    /// Projected-gradient residual at which the solver stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Plant integration steps per control period.
    pub plant_substeps: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 10,
            dt: 0.05,
            q: [10.0; 3],
            r: [0.01; 3],
            u_max: 12.0,
            tolerance: 1e-8,
            max_iterations: 10_000,
            plant_substeps: 10,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0 (got {})", self.dt));
        }
        if self.q.iter().any(|q| !(*q >= 0.0 && q.is_finite())) {
            return bad(format!("state weights must be >= 0 (got {:?})", self.q));
        }
        if self.r.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad(format!("input weights must be > 0 (got {:?})", self.r));
        }
        if !(self.u_max >= 0.0 && self.u_max.is_finite()) {
            return bad(format!("u_max must be >= 0 (got {})", self.u_max));
        }
        if !(self.tolerance > 0.0) {
            return bad(format!("tolerance must be > 0 (got {})", self.tolerance));
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be >= 1".into());
        }
        if self.plant_substeps == 0 {
            return bad("plant_substeps must be >= 1".into());
        }
        Ok(())
    }
}

/// `min uᵀHu + 2gᵀu + constant` subject to `|u_i| ≤ u_max`.
///
/// The objective equals the summed tracking cost over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub constant: f64,
    pub u_max: f64,
}

impl QpProblem {
    pub fn cost(&self, u: &DVector<f64>) -> f64 {
        (u.transpose() * &self.h * u)[0] + 2.0 * self.g.dot(u) + self.constant
    }

    pub fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.h * u + &self.g
    }

    fn project(&self, u: &mut DVector<f64>) {
        u.apply(|x| *x = x.clamp(-self.u_max, self.u_max));
    }

    /// `‖u − P(u − ∇)‖` with `∇ = Hu + g`; zero exactly at the constrained optimum.
    pub fn residual(&self, u: &DVector<f64>) -> f64 {
        let mut moved = u - self.gradient(u);
        self.project(&mut moved);
        (u - moved).norm()
    }

    /// Row-sum bound on the largest eigenvalue of `H`.
    pub fn lipschitz(&self) -> f64 {
        self.h.abs().column_sum().max()
    }
}

/// Stacked prediction `X = Φ·x0 + S·U` over `horizon` steps.
pub fn prediction_matrices(
    ds: &DiscreteStateSpace,
    horizon: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut phi = DMatrix::zeros(3 * horizon, 3);
    let mut s = DMatrix::zeros(3 * horizon, 3 * horizon);
    // powers[k] = Ad^k
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(Matrix3::identity());
    for k in 0..horizon {
        let next = ds.ad * powers[k];
        powers.push(next);
    }
    for k in 0..horizon {
        phi.view_mut((3 * k, 0), (3, 3)).copy_from(&powers[k + 1]);
        for j in 0..=k {
            let block = powers[k - j] * ds.bd;
            s.view_mut((3 * k, 3 * j), (3, 3)).copy_from(&block);
        }
    }
    (phi, s)
}

/// Condenses the tracking problem for `x1..xN` against `reference[0..N]`.
pub fn condense(
    ds: &DiscreteStateSpace,
    cfg: &MpcConfig,
    x0: &Vector3<f64>,
    reference: &[Vector3<f64>],
) -> Result<QpProblem> {
    let n = cfg.horizon;
    if reference.len() != n {
        return Err(Error::Dimension(format!(
            "reference has {} steps, horizon is {n}",
            reference.len()
        )));
    }
    let (phi, s) = prediction_matrices(ds, n);
    let q_bar = DVector::from_iterator(3 * n, (0..n).flat_map(|_| cfg.q));
    let r_bar = DVector::from_iterator(3 * n, (0..n).flat_map(|_| cfg.r));
    let stacked_ref =
        DVector::from_iterator(3 * n, reference.iter().flat_map(|r| r.iter().copied()));

    let free = &phi * x0 - stacked_ref;
    let qs = DMatrix::from_diagonal(&q_bar) * &s;
    let mut h = s.transpose() * &qs + DMatrix::from_diagonal(&r_bar);
    // exact symmetry
    h = (&h + h.transpose()) * 0.5;
    let g = qs.transpose() * &free;
    let constant = free.component_mul(&q_bar).dot(&free);
    Ok(QpProblem {
        h,
        g,
        constant,
        u_max: cfg.u_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Projected gradient with fixed step `1/L`.
pub struct ProjectedGradient<'a> {
    qp: &'a QpProblem,
    step: f64,
    u: DVector<f64>,
}

impl<'a> ProjectedGradient<'a> {
    pub fn new(qp: &'a QpProblem, start: DVector<f64>) -> Self {
        let l = qp.lipschitz();
        let step = if l > 0.0 { 1.0 / l } else { 0.0 };
        let mut u = start;
        qp.project(&mut u);
        ProjectedGradient { qp, step, u }
    }

    pub fn current(&self) -> &DVector<f64> {
        &self.u
    }

    pub fn iterate(&mut self) {
        let grad = self.qp.gradient(&self.u);
        self.u -= grad * self.step;
        self.qp.project(&mut self.u);
    }

    pub fn into_solution(self, iterations: usize) -> QpSolution {
        let residual = self.qp.residual(&self.u);
        QpSolution {
            u: self.u,
            iterations,
            residual,
        }
    }
}

pub fn solve_qp(qp: &QpProblem, cfg: &MpcConfig) -> Result<QpSolution> {
    solve_qp_from(qp, cfg, DVector::zeros(qp.g.len()))
}

/// Solves starting from `start` (projected into the box first).
pub fn solve_qp_from(qp: &QpProblem, cfg: &MpcConfig, start: DVector<f64>) -> Result<QpSolution> {
    if qp.h.nrows() != qp.g.len() || qp.h.ncols() != qp.g.len() || start.len() != qp.g.len() {
        return Err(Error::Dimension(format!(
            "H is {}x{}, g has {} entries, start has {}",
            qp.h.nrows(),
            qp.h.ncols(),
            qp.g.len(),
            start.len()
        )));
    }
    let mut solver = ProjectedGradient::new(qp, start);
    for it in 0..=cfg.max_iterations {
        let residual = qp.residual(solver.current());
        if residual < cfg.tolerance {
            return Ok(solver.into_solution(it));
        }
        if it == cfg.max_iterations {
            return Err(Error::NotConverged {
                iterations: it,
                residual,
            });
        }
        solver.iterate();
    }
    unreachable!("loop returns on its final iteration")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingMetrics {
    pub v: ChannelError,
    pub v_n: ChannelError,
    pub omega: ChannelError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverStats {
    pub iterations: Vec<usize>,
    pub max_iterations: usize,
    pub mean_iterations: f64,
    pub worst_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopResult {
    pub trajectory: Trajectory,
    pub metrics: TrackingMetrics,
    pub solver: SolverStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopScenario {
    pub x0: SimState,
    pub reference: ReferenceSchedule,
    pub t_final: f64,
}

/// Receding-horizon loop: solve on the controller's model, apply the first
/// input to the plant model for one control period, repeat.
///
/// Tracking errors are taken at every control instant after the first.
pub fn closed_loop(
    plant: Variant,
    controller: Variant,
    scenario: &ClosedLoopScenario,
    params: &RobotParams,
    cfg: &MpcConfig,
) -> Result<ClosedLoopResult> {
    cfg.validate()?;
    if !(scenario.t_final >= cfg.dt) {
        return Err(Error::Config(format!(
            "t_final {} is shorter than the control period {}",
            scenario.t_final, cfg.dt
        )));
    }
    scenario.reference.validate(scenario.t_final)?;

    let plant_model = StateSpace::new(params, plant);
    let ctrl = StateSpace::new(params, controller).discretize(cfg.dt)?;
    let sub_dt = cfg.dt / cfg.plant_substeps as f64;
    let steps = (scenario.t_final / cfg.dt).round() as usize;
    let n = cfg.horizon;

    let mut state = scenario.x0;
    let mut warm = DVector::zeros(3 * n);
    let mut samples = Vec::with_capacity(steps + 1);
    let mut iterations = Vec::with_capacity(steps + 1);
    let mut worst_residual = 0.0f64;
    let mut sq = [0.0f64; 3];
    let mut max = [0.0f64; 3];

    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        if !state.is_finite() {
            return Err(Error::NonFinite { t });
        }
        let x = state.vel.to_vector();
        if k > 0 {
            let e = x - scenario.reference.at(t).to_vector();
            for i in 0..3 {
                sq[i] += e[i] * e[i];
                max[i] = max[i].max(e[i].abs());
            }
        }
        let reference: Vec<Vector3<f64>> = (1..=n)
            .map(|i| scenario.reference.at(t + i as f64 * cfg.dt).to_vector())
            .collect();
        let qp = condense(&ctrl, cfg, &x, &reference)?;
        let sol = solve_qp_from(&qp, cfg, warm)?;
        iterations.push(sol.iterations);
        worst_residual = worst_residual.max(sol.residual);
        let u = MotorInput::new(sol.u[0], sol.u[1], sol.u[2]);

        samples.push(Sample {
            t,
            pose: state.pose,
            vel: state.vel,
            input: u,
            wrench: closed_form_wrench(u, state.vel, params, plant),
        });

        // shift the horizon by one step, repeating the final input
        warm = DVector::from_fn(3 * n, |i, _| sol.u[(i + 3).min(3 * n - 3 + i % 3)]);

        if k < steps {
            for _ in 0..cfg.plant_substeps {
                state = step(&state, u, &plant_model, sub_dt, Integrator::Rk4);
            }
        }
    }

    let count = steps.max(1) as f64;
    let channel = |i: usize| ChannelError {
        max: max[i],
        rms: (sq[i] / count).sqrt().min(max[i]),
    };
    let max_iterations = iterations.iter().copied().max().unwrap_or(0);
    let mean_iterations = iterations.iter().sum::<usize>() as f64 / iterations.len() as f64;
    Ok(ClosedLoopResult {
        trajectory: Trajectory {
            variant: plant,
            spacing: cfg.dt,
            samples,
        },
        metrics: TrackingMetrics {
            v: channel(0),
            v_n: channel(1),
            omega: channel(2),
        },
        solver: SolverStats {
            iterations,
            max_iterations,
            mean_iterations,
            worst_residual,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::BodyVelocity;
    use crate::sim::Schedule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_model(variant: Variant, dt: f64) -> DiscreteStateSpace {
        StateSpace::new(&RobotParams::unit(), variant)
            .discretize(dt)
            .unwrap()
    }

    fn qp(h: &[f64], g: &[f64], u_max: f64) -> QpProblem {
        let n = g.len();
        QpProblem {
            h: DMatrix::from_row_slice(n, n, h),
            g: DVector::from_row_slice(g),
            constant: 0.0,
            u_max,
        }
    }

    fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        m.transpose() * &m + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn single_step_condensation() {
        let ds = unit_model(Variant::Correct, 0.05);
        let cfg = MpcConfig {
            horizon: 1,
            q: [1.0, 2.0, 3.0],
            r: [0.1, 0.2, 0.3],
            ..MpcConfig::default()
        };
        let x0 = Vector3::new(0.3, -0.2, 0.5);
        let reference = [Vector3::new(1.0, 0.0, -1.0)];
        let p = condense(&ds, &cfg, &x0, &reference).unwrap();
        let q = Matrix3::from_diagonal(&Vector3::from(cfg.q));
        let r = Matrix3::from_diagonal(&Vector3::from(cfg.r));
        let h = ds.bd.transpose() * q * ds.bd + r;
        let g = ds.bd.transpose() * q * (ds.ad * x0 - reference[0]);
        for i in 0..3 {
            assert!((p.g[i] - g[i]).abs() < 1e-14);
            for j in 0..3 {
                assert!((p.h[(i, j)] - h[(i, j)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reference_length_checked() {
        let ds = unit_model(Variant::Correct, 0.05);
        let cfg = MpcConfig::default();
        let err = condense(&ds, &cfg, &Vector3::zeros(), &[Vector3::zeros(); 3]).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn condensed_cost_matches_rollout() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ds = unit_model(Variant::Correct, 0.1);
        let cfg = MpcConfig {
            horizon: 3,
            q: [1.5, 0.7, 2.0],
            r: [0.3, 0.1, 0.2],
            ..MpcConfig::default()
        };
        let x0 = Vector3::new(0.4, -0.6, 0.9);
        let reference: Vec<_> = (0..3)
            .map(|_| Vector3::from_fn(|_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let p = condense(&ds, &cfg, &x0, &reference).unwrap();
        for _ in 0..20 {
            let u = DVector::from_fn(9, |_, _| rng.gen_range(-5.0..5.0));
            let mut x = x0;
            let mut rollout = 0.0;
            for k in 0..3 {
                let uk = Vector3::new(u[3 * k], u[3 * k + 1], u[3 * k + 2]);
                x = ds.step(&x, &uk);
                let e = x - reference[k];
                for i in 0..3 {
                    rollout += cfg.q[i] * e[i] * e[i] + cfg.r[i] * uk[i] * uk[i];
                }
            }
            assert!((p.cost(&u) - rollout).abs() < 1e-10 * rollout.max(1.0));
        }
    }

    #[test]
    fn zero_state_weight_gives_zero_input() {
        let ds = unit_model(Variant::Correct, 0.05);
        let cfg = MpcConfig {
            q: [0.0; 3],
            ..MpcConfig::default()
        };
        let p = condense(
            &ds,
            &cfg,
            &Vector3::new(1.0, 2.0, 3.0),
            &[Vector3::new(5.0, 0.0, 0.0); 10],
        )
        .unwrap();
        let sol = solve_qp(&p, &cfg).unwrap();
        assert!(sol.u.amax() < 1e-9);
    }

    #[test]
    fn unconstrained_matches_direct_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3, 6, 12] {
            let h = random_spd(&mut rng, n);
            let g = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let p = QpProblem {
                h: h.clone(),
                g: g.clone(),
                constant: 0.0,
                u_max: 1e6,
            };
            let cfg = MpcConfig {
                tolerance: 1e-11,
                max_iterations: 200_000,
                ..MpcConfig::default()
            };
            let sol = solve_qp(&p, &cfg).unwrap();
            let direct = h.cholesky().unwrap().solve(&(-g));
            assert!((sol.u - direct).amax() < 1e-8, "n = {n}");
        }
    }

    #[test]
    fn degenerate_box() {
        let p = qp(&[2.0, 0.5, 0.5, 1.0], &[-3.0, 4.0], 0.0);
        let sol = solve_qp(&p, &MpcConfig::default()).unwrap();
        assert_eq!(sol.u.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn one_dimensional_clip() {
        let p = qp(&[2.0], &[-10.0], 1.0);
        let sol = solve_qp(&p, &MpcConfig::default()).unwrap();
        assert_eq!(sol.u[0], 1.0);
        assert_eq!(sol.residual, 0.0);
    }

    #[test]
    fn non_convergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_spd(&mut rng, 8);
        let p = QpProblem {
            h,
            g: DVector::from_element(8, 1.0),
            constant: 0.0,
            u_max: 10.0,
        };
        let cfg = MpcConfig {
            max_iterations: 2,
            ..MpcConfig::default()
        };
        match solve_qp(&p, &cfg) {
            Err(Error::NotConverged {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn iterations_never_increase_cost() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_spd(&mut rng, 9);
        let g = DVector::from_fn(9, |_, _| rng.gen_range(-5.0..5.0));
        let p = QpProblem {
            h,
            g,
            constant: 0.0,
            u_max: 0.5,
        };
        let mut pg = ProjectedGradient::new(&p, DVector::zeros(9));
        let mut last = p.cost(pg.current());
        for _ in 0..500 {
            pg.iterate();
            let c = p.cost(pg.current());
            assert!(c <= last + 1e-12 * last.abs().max(1.0));
            assert!(pg.current().amax() <= 0.5);
            last = c;
        }
    }

    #[test]
    fn kkt_at_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_spd(&mut rng, 6);
        let g = DVector::from_fn(6, |_, _| rng.gen_range(-8.0..8.0));
        let p = QpProblem {
            h,
            g,
            constant: 0.0,
            u_max: 0.3,
        };
        let cfg = MpcConfig::default();
        let sol = solve_qp(&p, &cfg).unwrap();
        let grad = p.gradient(&sol.u);
        let mut active = 0;
        for i in 0..6 {
            let u = sol.u[i];
            assert!(u.abs() <= p.u_max);
            if u == p.u_max {
                assert!(grad[i] <= cfg.tolerance);
                active += 1;
            } else if u == -p.u_max {
                assert!(grad[i] >= -cfg.tolerance);
                active += 1;
            } else {
                assert!(grad[i].abs() < cfg.tolerance);
            }
        }
        assert!(active > 0);
    }

    #[test]
    fn zero_reference_from_rest_stays_at_rest() {
        let scenario = ClosedLoopScenario {
            x0: SimState::default(),
            reference: Schedule::constant(BodyVelocity::default()),
            t_final: 1.0,
        };
        let out = closed_loop(
            Variant::Correct,
            Variant::Correct,
            &scenario,
            &RobotParams::unit(),
            &MpcConfig::default(),
        )
        .unwrap();
        assert!(out
            .trajectory
            .samples
            .iter()
            .all(|s| s.input == MotorInput::default()));
        assert_eq!(
            out.metrics.v.max + out.metrics.v_n.max + out.metrics.omega.max,
            0.0
        );
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            MpcConfig {
                horizon: 0,
                ..MpcConfig::default()
            },
            MpcConfig {
                r: [0.0, 1.0, 1.0],
                ..MpcConfig::default()
            },
            MpcConfig {
                q: [-1.0, 1.0, 1.0],
                ..MpcConfig::default()
            },
            MpcConfig {
                dt: 0.0,
                ..MpcConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}

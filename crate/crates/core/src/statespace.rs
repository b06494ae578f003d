//! Continuous linear model `ẋ = A·x + B·u` on the state `(v, v_n, ω)` and
//! its zero-order-hold discretization.

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::Serialize;

use crate::actuation::{closed_form_wrench, MotorInput, Variant};
use crate::error::{Error, Result};
use crate::kinematics::BodyVelocity;
use crate::params::RobotParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSpace {
    pub a: Matrix3<f64>,
    pub b_mat: Matrix3<f64>,
    pub variant: Variant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteStateSpace {
    pub ad: Matrix3<f64>,
    pub bd: Matrix3<f64>,
    pub dt: f64,
}

impl StateSpace {
    pub fn new(params: &RobotParams, variant: Variant) -> Self {
        StateSpace {
            a: build_a(params, variant),
            b_mat: build_b(params),
            variant,
        }
    }

    pub fn derivative(&self, x: &Vector3<f64>, u: &Vector3<f64>) -> Vector3<f64> {
        self.a * x + self.b_mat * u
    }

    pub fn discretize(&self, dt: f64) -> Result<DiscreteStateSpace> {
        discretize(self, dt)
    }
}

impl DiscreteStateSpace {
    pub fn step(&self, x: &Vector3<f64>, u: &Vector3<f64>) -> Vector3<f64> {
        self.ad * x + self.bd * u
    }
}

/// System matrix for the given variant.
///
/// Rows are the longitudinal/lateral force over mass and the torque over
/// inertia, each minus its viscous friction. At the 30° mount this is
///
/// ```text
/// [ -3D/2M - Bv/M    0                0              ]
/// [  0              -3D/2M - Bvn/M   -D·d/M          ]
/// [  0               0               -2D·b²/I - Bω/I ]
/// ```
///
/// with `D` the drive damping. Away from 30° the lateral row picks up
/// δ-dependent coefficients and `a[2][1]` becomes `b·D·(1 - 2 sin δ)/I`.
pub fn build_a(params: &RobotParams, variant: Variant) -> Matrix3<f64> {
    let (s, _) = params.mount_trig();
    let cos_sq = 1.0 - s * s;
    let damp = params.drive_constants().damping;
    let (m, inertia, d, b) = (params.mass, params.inertia, params.d, params.b());

    let a00 = -2.0 * cos_sq * damp / m - params.b_v / m;
    let a11 = -(1.0 + 2.0 * s * s) * damp / m - params.b_vn / m;
    let a12 = match variant {
        Variant::Correct => -2.0 * s * damp * d / m,
        Variant::Erroneous { .. } => 0.0,
    };
    let a21 = b * (1.0 - 2.0 * s) * damp / inertia;
    let a22 = -variant.torque_scale() * 2.0 * damp * b * d / inertia - params.b_omega / inertia;

    Matrix3::new(
        a00, 0.0, 0.0, //
        0.0, a11, a12, //
        0.0, a21, a22,
    )
}

/// Input matrix: voltage coefficients of the wrench, row-scaled by
/// `(1/M, 1/M, b/I)`.
pub fn build_b(params: &RobotParams) -> Matrix3<f64> {
    let (s, c) = params.mount_trig();
    let g = params.drive_constants().gain;
    let row0 = g * c / params.mass;
    let row1 = g / params.mass;
    let row2 = params.b() * g / params.inertia;
    Matrix3::new(
        0.0,
        row0,
        -row0, //
        -row1,
        s * row1,
        s * row1, //
        row2,
        row2,
        row2,
    )
}

/// Body acceleration produced by the wrench model, friction included.
pub fn acceleration(
    u: MotorInput,
    vel: BodyVelocity,
    params: &RobotParams,
    variant: Variant,
) -> Vector3<f64> {
    let w = closed_form_wrench(u, vel, params, variant);
    Vector3::new(
        (w.f_v - params.b_v * vel.v) / params.mass,
        (w.f_vn - params.b_vn * vel.v_n) / params.mass,
        (w.gamma - params.b_omega * vel.omega) / params.inertia,
    )
}

/// Central-difference Jacobian of [`acceleration`] at rest with zero input.
pub fn linearization_oracle(params: &RobotParams, variant: Variant) -> Matrix3<f64> {
    const STEP: f64 = 1e-6;
    let mut jac = Matrix3::zeros();
    for j in 0..3 {
        let mut plus = Vector3::zeros();
        plus[j] = STEP;
        let minus = -plus;
        let fp = acceleration(
            MotorInput::default(),
            BodyVelocity::from_vector(&plus),
            params,
            variant,
        );
        let fm = acceleration(
            MotorInput::default(),
            BodyVelocity::from_vector(&minus),
            params,
            variant,
        );
        jac.set_column(j, &((fp - fm) / (2.0 * STEP)));
    }
    jac
}

/// Zero-order-hold discretization from the exponential of `[[A, B], [0, 0]]·dt`.
pub fn discretize(ss: &StateSpace, dt: f64) -> Result<DiscreteStateSpace> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("dt must be > 0 (got {dt})")));
    }
    let mut aug = SMatrix::<f64, 6, 6>::zeros();
    aug.fixed_view_mut::<3, 3>(0, 0).copy_from(&(ss.a * dt));
    aug.fixed_view_mut::<3, 3>(0, 3).copy_from(&(ss.b_mat * dt));
    let e = expm(&aug);
    Ok(DiscreteStateSpace {
        ad: e.fixed_view::<3, 3>(0, 0).into_owned(),
        bd: e.fixed_view::<3, 3>(0, 3).into_owned(),
        dt,
    })
}

/// Matrix exponential by scaling and squaring of a truncated Taylor series.
///
/// The series stops once a term's norm drops below 1e-16 of the running sum.
pub fn expm<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let norm = m.abs().row_sum().max();
    let mut squarings = 0;
    let mut scaled_norm = norm;
    while scaled_norm > 0.5 {
        scaled_norm *= 0.5;
        squarings += 1;
    }
    let x = m * 0.5f64.powi(squarings);

    let mut sum = SMatrix::<f64, N, N>::identity();
    let mut term = SMatrix::<f64, N, N>::identity();
    for k in 1..64 {
        term = term * x / k as f64;
        sum += term;
        if term.abs().max() <= 1e-16 * sum.abs().max() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// Row-major matrices for JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct MatrixReport {
    pub variant: String,
    pub torque_scale: f64,
    pub a: [[f64; 3]; 3],
    pub b: [[f64; 3]; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ad: Option<[[f64; 3]; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bd: Option<[[f64; 3]; 3]>,
}

pub fn row_major(m: &Matrix3<f64>) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[(i, j)];
        }
    }
    out
}

impl MatrixReport {
    pub fn new(params: &RobotParams, variant: Variant, dt: Option<f64>) -> Result<Self> {
        let ss = StateSpace::new(params, variant);
        let disc = dt.map(|dt| ss.discretize(dt)).transpose()?;
        Ok(MatrixReport {
            variant: variant.label().to_string(),
            torque_scale: variant.torque_scale(),
            a: row_major(&ss.a),
            b: row_major(&ss.b_mat),
            dt,
            ad: disc.as_ref().map(|d| row_major(&d.ad)),
            bd: disc.as_ref().map(|d| row_major(&d.bd)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> RobotParams {
        RobotParams::unit()
    }

    #[test]
    fn unit_a_matrices() {
        let a = build_a(&unit(), Variant::Correct);
        assert_eq!(
            a,
            Matrix3::new(-1.5, 0.0, 0.0, 0.0, -1.5, -1.0, 0.0, 0.0, -2.0)
        );
        let a = build_a(&unit(), Variant::erroneous());
        assert_eq!(
            a,
            Matrix3::new(-1.5, 0.0, 0.0, 0.0, -1.5, 0.0, 0.0, 0.0, -2.0)
        );
    }

    #[test]
    fn friction_adds_to_diagonal() {
        let p = RobotParams {
            b_v: 1.0,
            b_vn: 2.0,
            b_omega: 3.0,
            mass: 2.0,
            inertia: 3.0,
            ..unit()
        };
        let no_friction = RobotParams {
            b_v: 0.0,
            b_vn: 0.0,
            b_omega: 0.0,
            ..p
        };
        let a = build_a(&p, Variant::Correct);
        let a0 = build_a(&no_friction, Variant::Correct);
        assert_eq!(a0.diagonal(), Vector3::new(-0.75, -0.75, -2.0 / 3.0));
        let extra = a.diagonal() - a0.diagonal();
        assert!((extra - Vector3::new(-0.5, -1.0, -1.0)).abs().max() < 1e-15);
    }

    #[test]
    fn unit_b_matrix() {
        let b = build_b(&unit());
        let h = 3f64.sqrt() / 2.0;
        let expected = Matrix3::new(0.0, h, -h, -1.0, 0.5, 0.5, 1.0, 1.0, 1.0);
        assert!((b - expected).abs().max() < 1e-15);
        let p = RobotParams {
            inertia: 2.5,
            d: 0.3,
            k_t: 0.7,
            ..unit()
        };
        let bu = build_b(&p) * Vector3::new(1.0, 1.0, 1.0);
        let g = p.drive_constants().gain;
        assert!(bu[0].abs() < 1e-15 && bu[1].abs() < 1e-15);
        assert!((bu[2] - 3.0 * p.d * g / p.inertia).abs() < 1e-15);
    }

    #[test]
    fn oracle_matches_build_a() {
        let p = RobotParams {
            k_t: 0.35,
            l: 9.0,
            r: 0.05,
            r_a: 1.6,
            d: 0.2,
            mass: 4.0,
            inertia: 0.12,
            b_v: 0.4,
            b_vn: 0.6,
            b_omega: 0.02,
            ..unit()
        };
        for variant in [
            Variant::Correct,
            Variant::erroneous(),
            Variant::Erroneous { torque_scale: 0.4 },
        ] {
            let fd = linearization_oracle(&p, variant);
            let a = build_a(&p, variant);
            assert!((fd - a).abs().max() < 1e-6 * a.abs().max(), "{variant}");
        }
    }

    #[test]
    fn variant_difference_is_single_entry() {
        let p = RobotParams {
            d: 0.3,
            mass: 2.0,
            ..unit()
        };
        let diff = build_a(&p, Variant::Correct) - build_a(&p, Variant::erroneous());
        let damp = p.drive_constants().damping;
        let mut expected = Matrix3::zeros();
        expected[(1, 2)] = -damp * p.d / p.mass;
        assert!((diff - expected).abs().max() < 1e-15);
    }

    #[test]
    fn zero_dt_rejected() {
        let ss = StateSpace::new(&unit(), Variant::Correct);
        assert!(discretize(&ss, 0.0).is_err());
        assert!(discretize(&ss, -1e-3).is_err());
    }

    #[test]
    fn zero_a_gives_dt_b() {
        let mut ss = StateSpace::new(&unit(), Variant::Correct);
        ss.a = Matrix3::zeros();
        let d = discretize(&ss, 0.1).unwrap();
        assert_eq!(d.ad, Matrix3::identity());
        assert!((d.bd - ss.b_mat * 0.1).abs().max() < 1e-16);
    }

    #[test]
    fn diagonal_is_scalar_exponential() {
        let ss = StateSpace::new(&unit(), Variant::Correct);
        let dt = 0.37;
        let d = discretize(&ss, dt).unwrap();
        for i in 0..3 {
            let expected = (ss.a[(i, i)] * dt).exp();
            assert!((d.ad[(i, i)] - expected).abs() < 1e-15 * 4.0);
        }
    }

    fn rk4_propagate(ss: &StateSpace, dt: f64, steps: usize) -> (Matrix3<f64>, Matrix3<f64>) {
        // Columns: Φ(t) from Φ' = AΦ, Γ(t) from Γ' = AΓ + B.
        let h = dt / steps as f64;
        let mut phi = Matrix3::identity();
        let mut gam = Matrix3::zeros();
        let fphi = |p: &Matrix3<f64>| ss.a * p;
        let fgam = |g: &Matrix3<f64>| ss.a * g + ss.b_mat;
        for _ in 0..steps {
            let k1 = fphi(&phi);
            let k2 = fphi(&(phi + k1 * (h / 2.0)));
            let k3 = fphi(&(phi + k2 * (h / 2.0)));
            let k4 = fphi(&(phi + k3 * h));
            phi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let k1 = fgam(&gam);
            let k2 = fgam(&(gam + k1 * (h / 2.0)));
            let k3 = fgam(&(gam + k2 * (h / 2.0)));
            let k4 = fgam(&(gam + k3 * h));
            gam += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        (phi, gam)
    }

    #[test]
    fn discretization_matches_rk4_propagation() {
        let p = RobotParams {
            k_t: 0.35,
            l: 9.0,
            r: 0.05,
            r_a: 1.6,
            d: 0.2,
            mass: 4.0,
            inertia: 0.12,
            delta: 0.6,
            ..unit()
        };
        for variant in [Variant::Correct, Variant::erroneous()] {
            let ss = StateSpace::new(&p, variant);
            let dt = 0.05;
            let d = discretize(&ss, dt).unwrap();
            let (phi, gam) = rk4_propagate(&ss, dt, 10_000);
            assert!((d.ad - phi).abs().max() < 1e-9);
            assert!((d.bd - gam).abs().max() < 1e-9);
        }
    }

    #[test]
    fn report_has_discrete_only_with_dt() {
        let r = MatrixReport::new(&unit(), Variant::Correct, None).unwrap();
        assert!(r.ad.is_none());
        assert_eq!(r.a[1][2], -1.0);
        let r = MatrixReport::new(&unit(), Variant::erroneous(), Some(0.01)).unwrap();
        assert_eq!(r.a[1][2], 0.0);
        assert!(r.bd.is_some());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = RobotParams> {
            (
                (0.05f64..2.0, 1.0f64..20.0, 0.02f64..0.5, 0.2f64..5.0),
                (0.05f64..0.5, 0.5f64..20.0, 0.01f64..2.0),
                (0.0f64..2.0, 0.0f64..2.0, 0.0f64..0.5),
            )
                .prop_map(
                    |((k_t, l, r, r_a), (d, mass, inertia), (b_v, b_vn, b_omega))| RobotParams {
                        k_t,
                        l,
                        r,
                        r_a,
                        d,
                        mass,
                        inertia,
                        b_v,
                        b_vn,
                        b_omega,
                        ..RobotParams::unit()
                    },
                )
        }

        proptest! {
            #[test]
            fn nominal_mount_structure(p in params(), scale in 0.0f64..3.0) {
                for variant in [Variant::Correct, Variant::Erroneous { torque_scale: scale }] {
                    let a = build_a(&p, variant);
                    prop_assert_eq!(a[(0, 1)], 0.0);
                    prop_assert_eq!(a[(0, 2)], 0.0);
                    prop_assert_eq!(a[(1, 0)], 0.0);
                    prop_assert_eq!(a[(2, 0)], 0.0);
                    prop_assert_eq!(a[(2, 1)], 0.0);
                    prop_assert!(a.diagonal().max() < 0.0 || scale == 0.0);
                    if let Variant::Erroneous { .. } = variant {
                        prop_assert_eq!(a[(1, 2)], 0.0);
                    }
                }
            }

            #[test]
            fn equal_frictions_equal_translational_poles(p in params()) {
                let p = RobotParams { b_vn: p.b_v, ..p };
                let a = build_a(&p, Variant::Correct);
                prop_assert!((a[(0, 0)] - a[(1, 1)]).abs() <= 1e-15 * a[(0, 0)].abs());
            }

            #[test]
            fn model_matches_wrench(p in params(), delta in 0.05f64..1.5,
                                    u in prop::array::uniform3(-12.0f64..12.0),
                                    x in prop::array::uniform3(-3.0f64..3.0)) {
                let p = RobotParams { delta, ..p };
                for variant in [Variant::Correct, Variant::Erroneous { torque_scale: 0.6 }] {
                    let ss = StateSpace::new(&p, variant);
                    let xv = Vector3::from(x);
                    let uv = Vector3::from(u);
                    let lhs = ss.derivative(&xv, &uv);
                    let rhs = acceleration(MotorInput::from_vector(&uv), BodyVelocity::from_vector(&xv), &p, variant);
                    let tol = 1e-12 * rhs.abs().max().max(ss.a.abs().max() * 3.0).max(1.0);
                    prop_assert!((lhs - rhs).abs().max() <= tol);
                }
            }

            #[test]
            fn semigroup(p in params(), dt1 in 0.001f64..0.2, dt2 in 0.001f64..0.2) {
                let ss = StateSpace::new(&p, Variant::Correct);
                let both = discretize(&ss, dt1 + dt2).unwrap().ad;
                let split = discretize(&ss, dt1).unwrap().ad * discretize(&ss, dt2).unwrap().ad;
                prop_assert!((both - split).abs().max() < 1e-10);
            }

            #[test]
            fn general_mount_model_is_stable(p in params(), delta in 0.05f64..1.5) {
                let p = RobotParams { delta, ..p };
                let a = build_a(&p, Variant::Correct);
                let eig = a.complex_eigenvalues();
                prop_assert!(eig.iter().all(|z| z.re < 0.0));
            }
        }
    }
}

//! Rotation algebra on SO(3): skew/axial maps, the Rodrigues exponential and
//! its arc-length derivatives, logarithm, and the multiplicative updates of
//! rotations and material curvatures.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Vector3};

use crate::{Error, Result};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Below this angle the Rodrigues coefficients use their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-4;

/// Orthogonality drift that triggers polar re-projection in [`update_rotation`].
pub const DRIFT_TOL: f64 = 1e-12;

/// `skew(v) h = v × h`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Axial vector of a skew-symmetric matrix; fails if `s` is not skew.
pub fn axial(s: &Mat3) -> Result<Vec3> {
    let scale = s.amax().max(1.0);
    let sym = (s + s.transpose()).amax();
    if sym > 1e-12 * scale {
        return Err(Error::Contract(format!(
            "axial() of a matrix that is not skew-symmetric (|S + Sᵀ| = {sym:e})"
        )));
    }
    Ok(axial_of_skew_part(s))
}

/// Axial vector of the skew-symmetric part `(S − Sᵀ)/2`.
#[inline]
pub fn axial_of_skew_part(s: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (s[(2, 1)] - s[(1, 2)]),
        0.5 * (s[(0, 2)] - s[(2, 0)]),
        0.5 * (s[(1, 0)] - s[(0, 1)]),
    )
}

/// Rodrigues coefficients `sin θ/θ` and `(1 − cos θ)/θ²`.
fn rodrigues_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
    } else {
        let h = (0.5 * theta).sin() / theta;
        (theta.sin() / theta, 2.0 * h * h)
    }
}

/// Exponential map `exp(θ̃) = I + a θ̃ + b θ̃²`.
pub fn exp_map(theta: &Vec3) -> Mat3 {
    let (a, b) = rodrigues_coefficients(theta.norm());
    let t = skew(theta);
    Mat3::identity() + t * a + t * t * b
}

/// Principal logarithm; the returned rotation vector has norm in [0, π].
pub fn log_map(r: &Mat3) -> Vec3 {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = axial_of_skew_part(r); // sin θ · n
    let sin = w.norm();
    let angle = sin.atan2(cos);
    if angle < 1e-6 {
        // θ / sin θ ≈ 1 + θ²/6
        return w * (1.0 + angle * angle / 6.0);
    }
    if angle < std::f64::consts::PI - 1e-4 {
        return w * (angle / sin);
    }
    // near π: axis from the symmetric part, R + Rᵀ = 2 cos θ I + 2 (1 − cos θ) n nᵀ
    let b = (r + r.transpose() - Mat3::identity() * (2.0 * cos)) / (2.0 * (1.0 - cos));
    let diag = Vec3::new(b[(0, 0)], b[(1, 1)], b[(2, 2)]);
    let k = diag.imax();
    let mut n = b.column(k).into_owned() / diag[k].max(0.0).sqrt();
    n /= n.norm();
    if n.dot(&w) < 0.0 {
        n = -n;
    }
    n * angle
}

/// Coefficient of θ̃² in the inverse Jacobians.
fn jacobian_inverse_coefficient(phi: f64) -> f64 {
    if phi < 1e-3 {
        let p2 = phi * phi;
        1.0 / 12.0 + p2 / 720.0 + p2 * p2 / 30240.0
    } else {
        1.0 / (phi * phi) - (1.0 + phi.cos()) / (2.0 * phi * phi.sin())
    }
}

/// Inverse left Jacobian: `log(exp(δ̃) exp(φ̃)) ≈ φ + J_l⁻¹(φ) δ`.
pub fn left_jacobian_inverse(phi: &Vec3) -> Mat3 {
    let p = skew(phi);
    Mat3::identity() - p * 0.5 + p * p * jacobian_inverse_coefficient(phi.norm())
}

/// Inverse right Jacobian: `log(exp(φ̃) exp(δ̃)) ≈ φ + J_r⁻¹(φ) δ`.
pub fn right_jacobian_inverse(phi: &Vec3) -> Mat3 {
    left_jacobian_inverse(&-phi)
}

/// `‖RᵀR − I‖∞` (entrywise max).
pub fn orthogonality_error(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).amax()
}

/// True for proper orthogonal matrices within `tol`.
pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    orthogonality_error(r) <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Closest rotation in the Frobenius norm (polar factor).
pub fn project_to_rotation(r: &Mat3) -> Mat3 {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut q = u * vt;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * vt;
    }
    q
}

/// `R ← R exp(δΘ̃)`, re-orthonormalized when the drift exceeds [`DRIFT_TOL`].
pub fn update_rotation(r_old: &Mat3, delta: &Vec3) -> Mat3 {
    let r = r_old * exp_map(delta);
    if orthogonality_error(&r) > DRIFT_TOL {
        project_to_rotation(&r)
    } else {
        r
    }
}

/// Second-order jet `(f, f', f'')` of a scalar function of arc length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet {
    pub const fn new(v: f64, d: f64, dd: f64) -> Self {
        Self { v, d, dd }
    }

    pub const fn constant(v: f64) -> Self {
        Self { v, d: 0.0, dd: 0.0 }
    }

    /// Applies a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, f1: f64, f2: f64) -> Self {
        Self {
            v: f,
            d: f1 * self.d,
            dd: f2 * self.d * self.d + f1 * self.dd,
        }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet::new(self.v + o.v, self.d + o.d, self.dd + o.dd)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet::new(self.v - o.v, self.d - o.d, self.dd - o.dd)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet::new(-self.v, -self.d, -self.dd)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet::new(
            self.v * o.v,
            self.d * o.v + self.v * o.d,
            self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        )
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, k: f64) -> Jet {
        Jet::new(self.v * k, self.d * k, self.dd * k)
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        let q = self.v / o.v;
        let qd = (self.d - q * o.d) / o.v;
        let qdd = (self.dd - 2.0 * qd * o.d - q * o.dd) / o.v;
        Jet::new(q, qd, qdd)
    }
}

/// Jets of the Rodrigues coefficients `a = sin θ/θ`, `b = (1 − cos θ)/θ²`
/// as functions of `q = θ·θ`.
fn rodrigues_jets(q: Jet) -> (Jet, Jet) {
    if q.v < 1e-4 {
        // series in q, accurate to ~1e-22 for |θ| < 1e-2
        let a_coef = [1.0, -1.0 / 6.0, 1.0 / 120.0, -1.0 / 5040.0, 1.0 / 362880.0];
        let b_coef = [0.5, -1.0 / 24.0, 1.0 / 720.0, -1.0 / 40320.0, 1.0 / 3628800.0];
        let horner = |c: &[f64]| {
            c.iter()
                .rev()
                .fold(Jet::constant(0.0), |acc, &k| acc * q + Jet::constant(k))
        };
        (horner(&a_coef), horner(&b_coef))
    } else {
        let theta = q.sqrt();
        let a = theta.sin() / theta;
        let b = (Jet::constant(1.0) - theta.cos()) / q;
        (a, b)
    }
}

/// `Λ = exp(Θ̃(s))` and its first and second arc-length derivatives for a
/// rotation-vector field with local values `(θ, θ', θ'')`.
pub fn exp_jet(theta: &Vec3, theta_s: &Vec3, theta_ss: &Vec3) -> (Mat3, Mat3, Mat3) {
    let q = Jet::new(
        theta.dot(theta),
        2.0 * theta.dot(theta_s),
        2.0 * (theta_s.dot(theta_s) + theta.dot(theta_ss)),
    );
    let (a, b) = rodrigues_jets(q);
    let t0 = skew(theta);
    let t1 = skew(theta_s);
    let t2 = skew(theta_ss);
    let sq0 = t0 * t0;
    let sq1 = t1 * t0 + t0 * t1;
    let sq2 = t2 * t0 + t1 * t1 * 2.0 + t0 * t2;
    let lam = Mat3::identity() + t0 * a.v + sq0 * b.v;
    let lam_s = t0 * a.d + t1 * a.v + sq0 * b.d + sq1 * b.v;
    let lam_ss = t0 * a.dd + t1 * (2.0 * a.d) + t2 * a.v + sq0 * b.dd + sq1 * (2.0 * b.d) + sq2 * b.v;
    (lam, lam_s, lam_ss)
}

/// Arc-length derivative of `exp(θ̃(s))` for local values `θ` and `θ'`.
pub fn dexp_along(theta: &Vec3, theta_s: &Vec3) -> Mat3 {
    exp_jet(theta, theta_s, &Vec3::zeros()).1
}

fn symmetrize_skew(m: &Mat3) -> Mat3 {
    (m - m.transpose()) * 0.5
}

/// Material curvature after the rotation update `R ← R exp(δΘ̃)`:
/// `K̃ ← Λᵀ K̃ Λ + Λᵀ Λ,s` with `Λ = exp(δΘ̃)`.
pub fn update_curvature(k_old: &Mat3, delta: &Vec3, delta_s: &Vec3) -> Mat3 {
    let lam = exp_map(delta);
    let lam_s = dexp_along(delta, delta_s);
    symmetrize_skew(&(lam.transpose() * k_old * lam + lam.transpose() * lam_s))
}

/// Curvature vector and its arc-length derivative after the rotation update.
///
/// Differentiating `K̃ ← Λᵀ K̃ Λ + Λᵀ Λ,s` once more along `s` needs `δΘ,ss`.
pub fn update_curvature_with_gradient(
    k: &Vec3,
    k_s: &Vec3,
    delta: &Vec3,
    delta_s: &Vec3,
    delta_ss: &Vec3,
) -> (Vec3, Vec3) {
    let (lam, lam_s, lam_ss) = exp_jet(delta, delta_s, delta_ss);
    let kt = skew(k);
    let kt_s = skew(k_s);
    let lt = lam.transpose();
    let lt_s = lam_s.transpose();
    let k_new = lt * kt * lam + lt * lam_s;
    let k_new_s = lt_s * kt * lam
        + lt * kt_s * lam
        + lt * kt * lam_s
        + lt_s * lam_s
        + lt * lam_ss;
    (axial_of_skew_part(&k_new), axial_of_skew_part(&k_new_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Unit, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ) * scale
    }

    #[test]
    fn skew_is_cross_product() {
        let v = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(skew(&v) * Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0));
        let mut r = rng();
        for _ in 0..100 {
            let v = random_vec(&mut r, 3.0);
            let h = random_vec(&mut r, 3.0);
            assert_abs_diff_eq!((skew(&v) * h - v.cross(&h)).norm(), 0.0, epsilon = 1e-14);
            assert_eq!(axial(&skew(&v)).unwrap(), v);
            assert_eq!(skew(&v).transpose(), -skew(&v));
        }
    }

    #[test]
    fn axial_rejects_non_skew() {
        let m = Mat3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(axial(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn exp_examples() {
        assert_eq!(exp_map(&Vec3::zeros()), Mat3::identity());
        let r = exp_map(&Vec3::new(FRAC_PI_2, 0.0, 0.0));
        assert_abs_diff_eq!((r * Vec3::y() - Vec3::z()).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn exp_matches_quaternion_oracle() {
        let mut r = rng();
        for _ in 0..200 {
            let theta = random_vec(&mut r, 4.0);
            let angle = theta.norm();
            let axis = Unit::new_normalize(theta);
            // compose from two half-angle quaternions to keep the oracle independent
            let half = UnitQuaternion::from_axis_angle(&axis, angle / 2.0);
            let q = half * half;
            let m = q.to_rotation_matrix().into_inner();
            assert_abs_diff_eq!((exp_map(&theta) - m).amax(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exp_is_orthogonal_across_magnitudes() {
        let dir = Vec3::new(0.3, -0.5, 0.81).normalize();
        for mag in [0.0, 1e-9, 1e-4, 1.0, PI, 10.0] {
            let r = exp_map(&(dir * mag));
            assert!(is_rotation(&r, 1e-12), "magnitude {mag}");
        }
    }

    #[test]
    fn small_angle_branch_is_accurate() {
        let dir = Vec3::new(1.0, 2.0, -0.5).normalize();
        for angle in [SMALL_ANGLE * (1.0 - 1e-9), SMALL_ANGLE * (1.0 + 1e-9), 1e-7] {
            let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(dir), angle);
            let oracle = q.to_rotation_matrix().into_inner();
            assert_abs_diff_eq!((exp_map(&(dir * angle)) - oracle).amax(), 0.0, epsilon = 4e-16);
        }
    }

    #[test]
    fn collinear_composition() {
        let mut r = rng();
        for _ in 0..50 {
            let t = random_vec(&mut r, 1.5);
            assert_abs_diff_eq!((exp_map(&t) * exp_map(&t) - exp_map(&(t * 2.0))).amax(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn log_round_trip() {
        let mut r = rng();
        for _ in 0..200 {
            let t = random_vec(&mut r, 1.7);
            if t.norm() < PI {
                assert_abs_diff_eq!((log_map(&exp_map(&t)) - t).norm(), 0.0, epsilon = 1e-12);
            }
        }
        for mag in [0.0, 1e-10, 1e-7, 3.0, PI - 1e-6] {
            let t = Vec3::new(0.2, 0.9, -0.3).normalize() * mag;
            assert_abs_diff_eq!((log_map(&exp_map(&t)) - t).norm(), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn inverse_jacobians_linearize_log() {
        let mut r = rng();
        let h = 1e-6;
        for _ in 0..20 {
            let phi = random_vec(&mut r, 1.0);
            let d = random_vec(&mut r, 1.0);
            let rot = exp_map(&phi);
            let right = (log_map(&(rot * exp_map(&(d * h)))) - log_map(&(rot * exp_map(&(d * -h))))) / (2.0 * h);
            let left = (log_map(&(exp_map(&(d * h)) * rot)) - log_map(&(exp_map(&(d * -h)) * rot))) / (2.0 * h);
            assert_abs_diff_eq!((right - right_jacobian_inverse(&phi) * d).norm(), 0.0, epsilon = 1e-8);
            assert_abs_diff_eq!((left - left_jacobian_inverse(&phi) * d).norm(), 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn dexp_examples() {
        let k = Vec3::new(0.3, -1.0, 2.0);
        assert_abs_diff_eq!((dexp_along(&Vec3::zeros(), &k) - skew(&k)).amax(), 0.0, epsilon = 1e-15);
        assert_eq!(dexp_along(&Vec3::new(0.4, 0.1, 0.2), &Vec3::zeros()), Mat3::zeros());
    }

    #[test]
    fn dexp_matches_central_differences() {
        let mut r = rng();
        let h = 1e-6;
        for scale in [1e-3, 0.5, 2.0, 3.0] {
            for _ in 0..20 {
                let t = random_vec(&mut r, scale);
                let tp = random_vec(&mut r, 1.0);
                let fd = (exp_map(&(t + tp * h)) - exp_map(&(t - tp * h))) / (2.0 * h);
                assert_abs_diff_eq!((dexp_along(&t, &tp) - fd).amax(), 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn second_derivative_matches_central_differences() {
        let mut r = rng();
        let h = 1e-4;
        for scale in [1e-3, 0.02, 1.0, 2.5] {
            for _ in 0..10 {
                let t0 = random_vec(&mut r, scale);
                let t1 = random_vec(&mut r, 1.0);
                let t2 = random_vec(&mut r, 1.0);
                let field = |s: f64| t0 + t1 * s + t2 * (0.5 * s * s);
                let fd = (exp_map(&field(h)) - exp_map(&field(0.0)) * 2.0 + exp_map(&field(-h))) / (h * h);
                let (_, _, lam_ss) = exp_jet(&t0, &t1, &t2);
                assert_abs_diff_eq!((lam_ss - fd).amax(), 0.0, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn update_rotation_examples() {
        let mut r = rng();
        let rot = exp_map(&random_vec(&mut r, 2.0));
        assert_eq!(update_rotation(&rot, &Vec3::zeros()), rot);
        let half = update_rotation(&Mat3::identity(), &Vec3::new(0.0, PI, 0.0));
        let expected = Mat3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert_abs_diff_eq!((half - expected).amax(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn long_update_sequences_stay_orthogonal() {
        let mut r = rng();
        let mut rot = Mat3::identity();
        for _ in 0..10_000 {
            rot = update_rotation(&rot, &random_vec(&mut r, 0.05));
        }
        assert!(orthogonality_error(&rot) < 1e-10);
        assert_abs_diff_eq!(rot.determinant(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn polar_projection_restores_orthogonality() {
        let mut r = rng();
        let rot = exp_map(&random_vec(&mut r, 2.0));
        let noisy = rot + Mat3::from_fn(|_, _| 1e-7);
        let fixed = project_to_rotation(&noisy);
        assert!(is_rotation(&fixed, 1e-14));
        assert!((fixed - rot).amax() < 1e-6);
    }

    #[test]
    fn curvature_update_examples() {
        let k = skew(&Vec3::new(0.1, 0.2, 0.3));
        assert_abs_diff_eq!((update_curvature(&k, &Vec3::zeros(), &Vec3::zeros()) - k).amax(), 0.0, epsilon = 1e-16);
        let twist = update_curvature(&Mat3::zeros(), &Vec3::zeros(), &Vec3::new(2.5, 0.0, 0.0));
        assert_abs_diff_eq!((twist - skew(&Vec3::new(2.5, 0.0, 0.0))).amax(), 0.0, epsilon = 1e-16);
        assert_eq!(twist, -twist.transpose());
    }

    /// Synthetic fields R(s) = exp(A(s)) and δΘ(s); the updated curvature must
    /// equal axial((RΛ)ᵀ (RΛ),s) computed by finite differences.
    #[test]
    fn curvature_update_matches_field_finite_differences() {
        let mut r = rng();
        let h = 1e-5;
        for _ in 0..20 {
            let a0 = random_vec(&mut r, 1.0);
            let a1 = random_vec(&mut r, 1.0);
            let a2 = random_vec(&mut r, 1.0);
            let d0 = random_vec(&mut r, 1.2);
            let d1 = random_vec(&mut r, 1.0);
            let d2 = random_vec(&mut r, 1.0);
            let rot_field = |s: f64| exp_map(&(a0 + a1 * s + a2 * (s * s)));
            let delta_field = |s: f64| d0 + d1 * s + d2 * (s * s);
            let new_field = |s: f64| rot_field(s) * exp_map(&delta_field(s));
            let curvature = |f: &dyn Fn(f64) -> Mat3, s: f64| {
                let ds = (f(s + h) - f(s - h)) / (2.0 * h);
                axial_of_skew_part(&(f(s).transpose() * ds))
            };
            let k_old = curvature(&rot_field, 0.0);
            let expected = curvature(&new_field, 0.0);
            let got = update_curvature(&skew(&k_old), &d0, &d1);
            assert!((axial(&got).unwrap() - expected).norm() < 1e-7);

            // gradient of the updated curvature
            let k_old_s = (curvature(&rot_field, 1e-3) - curvature(&rot_field, -1e-3)) / 2e-3;
            let expected_s = (curvature(&new_field, 1e-3) - curvature(&new_field, -1e-3)) / 2e-3;
            let (k_new, k_new_s) = update_curvature_with_gradient(&k_old, &k_old_s, &d0, &d1, &(d2 * 2.0));
            assert!((k_new - expected).norm() < 1e-7);
            assert!((k_new_s - expected_s).norm() < 1e-4, "{} vs {}", k_new_s, expected_s);
        }
    }
}

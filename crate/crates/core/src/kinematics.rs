//! Strain measures and per-collocation-point configuration state.

use crate::material::{StrainSet, ViscousHistory};
use crate::nurbs::{BasisTable, NurbsCurve};
use crate::so3::{update_curvature_with_gradient, update_rotation, Mat3, Vec3};
use crate::{Error, Result};

/// Number of uniform parameter samples used to march the reference frame.
pub const FRAME_SAMPLES: usize = 4000;

/// Reference (stress-free) configuration at one collocation point.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    /// Parametric coordinate.
    pub u: f64,
    /// `J = |c₀,u|` and `J,u`.
    pub jac: f64,
    pub jac_u: f64,
    pub c0: Vec3,
    /// Unit tangent `c₀,s` and curvature vector `c₀,ss`.
    pub c0_s: Vec3,
    pub c0_ss: Vec3,
    pub r0: Mat3,
    /// Material reference curvature `K₀` and its arc-length derivative.
    pub k0: Vec3,
    pub k0_s: Vec3,
}

impl ReferencePoint {
    /// `R₀ᵀ c₀,s`.
    pub fn a0(&self) -> Vec3 {
        self.r0.transpose() * self.c0_s
    }

    /// Arc-length derivative of `R₀ᵀ c₀,s`.
    pub fn a0_s(&self) -> Vec3 {
        -self.k0.cross(&self.a0()) + self.r0.transpose() * self.c0_ss
    }
}

/// Current configuration at one collocation point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointState {
    pub r: Mat3,
    /// Material curvature `K = axial(RᵀR,s)` and `K,s`.
    pub k: Vec3,
    pub k_s: Vec3,
    pub c_s: Vec3,
    pub c_ss: Vec3,
}

impl PointState {
    /// The undeformed state.
    pub fn reference(rp: &ReferencePoint) -> Self {
        Self {
            r: rp.r0,
            k: rp.k0,
            k_s: rp.k0_s,
            c_s: rp.c0_s,
            c_ss: rp.c0_ss,
        }
    }

    /// `a = Rᵀ c,s`.
    pub fn a(&self) -> Vec3 {
        self.r.transpose() * self.c_s
    }

    /// `a,s = −K̃ a + Rᵀ c,ss`.
    pub fn a_s(&self) -> Vec3 {
        -self.k.cross(&self.a()) + self.r.transpose() * self.c_ss
    }
}

/// `Γ_N = Rᵀc,s − R₀ᵀc₀,s` and `K_M = K − K₀`.
pub fn strains(r: &Mat3, c_s: &Vec3, k: &Vec3, rp: &ReferencePoint) -> (Vec3, Vec3) {
    (r.transpose() * c_s - rp.a0(), k - rp.k0)
}

/// `(Γ_N,s, K_M,s)`.
pub fn strain_derivatives(state: &PointState, rp: &ReferencePoint) -> (Vec3, Vec3) {
    (state.a_s() - rp.a0_s(), state.k_s - rp.k0_s)
}

/// Total strains with their arc-length derivatives.
pub fn strain_set(state: &PointState, rp: &ReferencePoint) -> StrainSet {
    let (gamma, kappa) = strains(&state.r, &state.c_s, &state.k, rp);
    let (gamma_s, kappa_s) = strain_derivatives(state, rp);
    StrainSet {
        gamma,
        kappa,
        gamma_s,
        kappa_s,
    }
}

/// Basis functions at one point with derivatives taken along the reference
/// arc length: `d/ds = J⁻¹ d/du`, `d²/ds² = J⁻² d²/du² − J⁻³ J,u d/du`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcBasis {
    pub first: usize,
    pub n: Vec<f64>,
    pub n_s: Vec<f64>,
    pub n_ss: Vec<f64>,
}

impl ArcBasis {
    pub fn new(table: &BasisTable, jac: f64, jac_u: f64) -> Self {
        let inv = 1.0 / jac;
        let n_s: Vec<f64> = table.ders[1].iter().map(|d| d * inv).collect();
        let n_ss = table.ders[2]
            .iter()
            .zip(&table.ders[1])
            .map(|(d2, d1)| d2 * inv * inv - jac_u * inv * inv * inv * d1)
            .collect();
        Self {
            first: table.first,
            n: table.ders[0].clone(),
            n_s,
            n_ss,
        }
    }

    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// `(Σ N v_j, Σ N,s v_j, Σ N,ss v_j)` over the supported coefficients.
    pub fn interpolate<F: Fn(usize) -> Vec3>(&self, coeff: F) -> (Vec3, Vec3, Vec3) {
        let mut out = (Vec3::zeros(), Vec3::zeros(), Vec3::zeros());
        for l in 0..self.len() {
            let v = coeff(self.first + l);
            out.0 += v * self.n[l];
            out.1 += v * self.n_s[l];
            out.2 += v * self.n_ss[l];
        }
        out
    }
}

/// Unit tangent and its first two arc-length derivatives from parametric
/// derivatives `c,u … c,uuu`.
fn tangent_jet(d: &[Vec3]) -> Result<(f64, f64, Vec3, Vec3, Vec3)> {
    let j = d[1].norm();
    if !(j > 1e-14) {
        return Err(Error::SingularGeometry("vanishing tangent".into()));
    }
    let t = d[1] / j;
    let j_u = t.dot(&d[2]);
    let t_u = (d[2] - t * j_u) / j;
    let j_uu = t_u.dot(&d[2]) + t.dot(&d[3]);
    let t_uu = (d[3] - t * j_uu - t_u * (2.0 * j_u)) / j;
    let t_s = t_u / j;
    let t_ss = (t_uu - t_u * (j_u / j)) / (j * j);
    Ok((j, j_u, t, t_s, t_ss))
}

fn default_director(t: &Vec3) -> Vec3 {
    let d = Vec3::z().cross(t);
    if d.norm() > 1e-8 {
        d.normalize()
    } else {
        Vec3::x().cross(t).normalize()
    }
}

/// One step of the double-reflection rule for rotation-minimizing frames.
fn double_reflection(x0: &Vec3, t0: &Vec3, r0: &Vec3, x1: &Vec3, t1: &Vec3) -> Vec3 {
    let v1 = x1 - x0;
    let c1 = v1.dot(&v1);
    if c1 == 0.0 {
        return *r0;
    }
    let r_l = r0 - v1 * (2.0 / c1 * v1.dot(r0));
    let t_l = t0 - v1 * (2.0 / c1 * v1.dot(t0));
    let v2 = t1 - t_l;
    let c2 = v2.dot(&v2);
    if c2 == 0.0 {
        return r_l;
    }
    r_l - v2 * (2.0 / c2 * v2.dot(&r_l))
}

/// Reference states at the parameters `sites` (sorted).
///
/// `R₀ = [t | d₂ | d₃]` is a rotation-minimizing frame marched from the start
/// of the curve, so it has no reference twist and stays defined where the
/// curvature vanishes. The initial `d₂` is `director` projected onto the normal
/// plane, by default `e₃ × t`.
pub fn reference_points(curve: &NurbsCurve, sites: &[f64], director: Option<Vec3>) -> Result<Vec<ReferencePoint>> {
    let lo = curve.knots().first();
    let hi = curve.knots().last();
    let mut grid: Vec<f64> = (0..=FRAME_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / FRAME_SAMPLES as f64)
        .chain(sites.iter().copied())
        .collect();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();

    let start = curve.eval(lo, 1)?;
    let t_start = start[1].normalize();
    let mut d2 = match director {
        Some(d) => {
            let p = d - t_start * d.dot(&t_start);
            if p.norm() < 1e-8 {
                return Err(Error::SingularGeometry("initial director is parallel to the tangent".into()));
            }
            p.normalize()
        }
        None => default_director(&t_start),
    };

    let mut out = Vec::with_capacity(sites.len());
    let mut next_site = 0;
    let mut prev_x = start[0];
    let mut prev_t = t_start;
    for &u in &grid {
        let d = curve.eval(u, 3)?;
        let (jac, jac_u, t, t_s, t_ss) = tangent_jet(&d)?;
        d2 = double_reflection(&prev_x, &prev_t, &d2, &d[0], &t);
        d2 = (d2 - t * d2.dot(&t)).normalize();
        prev_x = d[0];
        prev_t = t;
        while next_site < sites.len() && sites[next_site] == u {
            let d3 = t.cross(&d2);
            let r0 = Mat3::from_columns(&[t, d2, d3]);
            out.push(ReferencePoint {
                u,
                jac,
                jac_u,
                c0: d[0],
                c0_s: t,
                c0_ss: t_s,
                r0,
                k0: Vec3::new(0.0, -d3.dot(&t_s), d2.dot(&t_s)),
                k0_s: Vec3::new(0.0, -d3.dot(&t_ss), d2.dot(&t_ss)),
            });
            next_site += 1;
        }
    }
    if out.len() != sites.len() {
        return Err(Error::Contract("collocation sites must be sorted and inside the knot range".into()));
    }
    Ok(out)
}

/// Which end of a patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Start,
    End,
}

impl End {
    /// Outward orientation of the arc-length axis: −1 at the start, +1 at the end.
    pub fn sign(self) -> f64 {
        match self {
            End::Start => -1.0,
            End::End => 1.0,
        }
    }
}

/// Configuration and history of one patch at its collocation points.
#[derive(Debug, Clone)]
pub struct PatchState {
    pub reference_curve: NurbsCurve,
    /// Current centroid curve (same basis, displaced control points).
    pub curve: NurbsCurve,
    /// Greville abscissae.
    pub sites: Vec<f64>,
    pub basis: Vec<ArcBasis>,
    pub refs: Vec<ReferencePoint>,
    pub points: Vec<PointState>,
    pub history: Vec<ViscousHistory>,
}

impl PatchState {
    pub fn new(curve: &NurbsCurve, director: Option<Vec3>, branches: usize) -> Result<Self> {
        if curve.len() < curve.degree() + 1 || curve.len() < 2 {
            return Err(Error::Contract("patch needs at least p + 1 control points".into()));
        }
        let sites = curve.greville();
        let refs = reference_points(curve, &sites, director)?;
        let basis = sites
            .iter()
            .zip(&refs)
            .map(|(&u, rp)| Ok(ArcBasis::new(&curve.basis(u, 2)?, rp.jac, rp.jac_u)))
            .collect::<Result<Vec<_>>>()?;
        let points = refs.iter().map(PointState::reference).collect();
        let history = vec![ViscousHistory::virgin(branches); sites.len()];
        Ok(Self {
            reference_curve: curve.clone(),
            curve: curve.clone(),
            sites,
            basis,
            refs,
            points,
            history,
        })
    }

    pub fn n_ctrl(&self) -> usize {
        self.curve.len()
    }

    pub fn end_index(&self, end: End) -> usize {
        match end {
            End::Start => 0,
            End::End => self.sites.len() - 1,
        }
    }

    /// Current position of an end.
    pub fn end_position(&self, end: End) -> Vec3 {
        let pts = self.curve.control_points();
        match end {
            End::Start => pts[0],
            End::End => pts[pts.len() - 1],
        }
    }

    pub fn reference_end_position(&self, end: End) -> Vec3 {
        let pts = self.reference_curve.control_points();
        match end {
            End::Start => pts[0],
            End::End => pts[pts.len() - 1],
        }
    }

    /// Total strains at collocation point `i`.
    pub fn strains(&self, i: usize) -> StrainSet {
        strain_set(&self.points[i], &self.refs[i])
    }

    /// Applies the increments `(δη̌_j, δΘ̌_j)`: control points are translated,
    /// rotations updated multiplicatively and curvatures pushed forward.
    pub fn apply_increment(&mut self, eta: &[Vec3], theta: &[Vec3]) {
        for (p, d) in self.curve.control_points_mut().iter_mut().zip(eta) {
            *p += d;
        }
        let pts = self.curve.control_points();
        for (b, st) in self.basis.iter().zip(self.points.iter_mut()) {
            let (d, d_s, d_ss) = b.interpolate(|j| theta[j]);
            let (k, k_s) = update_curvature_with_gradient(&st.k, &st.k_s, &d, &d_s, &d_ss);
            st.r = update_rotation(&st.r, &d);
            st.k = k;
            st.k_s = k_s;
            let (_, c_s, c_ss) = b.interpolate(|j| pts[j]);
            st.c_s = c_s;
            st.c_ss = c_ss;
        }
    }

    /// Trapezoid weights in reference arc length over the collocation points.
    pub fn arc_length_weights(&self) -> Vec<f64> {
        let n = self.sites.len();
        let mut w = vec![0.0; n];
        for i in 0..n - 1 {
            let ds = (self.sites[i + 1] - self.sites[i]) * 0.5 * (self.refs[i].jac + self.refs[i + 1].jac);
            w[i] += 0.5 * ds;
            w[i + 1] += 0.5 * ds;
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nurbs::{make_arc, make_line};
    use crate::so3::{axial_of_skew_part, exp_jet, exp_map};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale
    }

    /// Smooth synthetic configuration: c(s) cubic, R(s) = exp(A(s)) with A quadratic.
    struct Synthetic {
        c: [Vec3; 4],
        a: [Vec3; 3],
    }

    impl Synthetic {
        fn random(rng: &mut ChaCha8Rng) -> Self {
            Self {
                c: [random_vec(rng, 1.0), Vec3::new(1.0, 0.2, -0.1) + random_vec(rng, 0.2), random_vec(rng, 0.5), random_vec(rng, 0.3)],
                a: [random_vec(rng, 1.0), random_vec(rng, 0.8), random_vec(rng, 0.5)],
            }
        }

        fn state(&self, s: f64) -> PointState {
            let c_s = self.c[1] + self.c[2] * (2.0 * s) + self.c[3] * (3.0 * s * s);
            let c_ss = self.c[2] * 2.0 + self.c[3] * (6.0 * s);
            let th = self.a[0] + self.a[1] * s + self.a[2] * (s * s);
            let th_s = self.a[1] + self.a[2] * (2.0 * s);
            let th_ss = self.a[2] * 2.0;
            let (l, l_s, l_ss) = exp_jet(&th, &th_s, &th_ss);
            PointState {
                r: l,
                k: axial_of_skew_part(&(l.transpose() * l_s)),
                k_s: axial_of_skew_part(&(l_s.transpose() * l_s + l.transpose() * l_ss)),
                c_s,
                c_ss,
            }
        }

        fn reference(&self, s: f64) -> ReferencePoint {
            let st = self.state(s);
            ReferencePoint {
                u: s,
                jac: 1.0,
                jac_u: 0.0,
                c0: Vec3::zeros(),
                c0_s: st.c_s,
                c0_ss: st.c_ss,
                r0: st.r,
                k0: st.k,
                k0_s: st.k_s,
            }
        }
    }

    #[test]
    fn undeformed_and_rigid_motion_give_zero_strain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let syn = Synthetic::random(&mut rng);
        for s in [-0.3, 0.0, 0.45] {
            let rp = syn.reference(s);
            let st = PointState::reference(&rp);
            let set = strain_set(&st, &rp);
            assert_eq!(set.max_abs(), 0.0);
            // superimposed rigid rotation Q on both c and R; K unchanged
            let q = exp_map(&random_vec(&mut rng, 2.0));
            let moved = PointState {
                r: q * st.r,
                k: st.k,
                k_s: st.k_s,
                c_s: q * st.c_s,
                c_ss: q * st.c_ss,
            };
            assert!(strain_set(&moved, &rp).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn uniform_stretch() {
        let rp = ReferencePoint {
            u: 0.5,
            jac: 1.0,
            jac_u: 0.0,
            c0: Vec3::zeros(),
            c0_s: Vec3::x(),
            c0_ss: Vec3::zeros(),
            r0: Mat3::identity(),
            k0: Vec3::zeros(),
            k0_s: Vec3::zeros(),
        };
        let lambda = 1.37;
        let st = PointState {
            c_s: Vec3::x() * lambda,
            ..PointState::reference(&rp)
        };
        let (g, k) = strains(&st.r, &st.c_s, &st.k, &rp);
        assert_abs_diff_eq!((g - Vec3::new(lambda - 1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(k, Vec3::zeros());
    }

    #[test]
    fn strain_derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = 1e-5;
        for _ in 0..10 {
            let reference = Synthetic::random(&mut rng);
            let current = Synthetic::random(&mut rng);
            let strain_at = |s: f64| {
                let st = current.state(s);
                strains(&st.r, &st.c_s, &st.k, &reference.reference(s))
            };
            let s = 0.2;
            let (gs, ks) = strain_derivatives(&current.state(s), &reference.reference(s));
            let (gp, kp) = strain_at(s + h);
            let (gm, km) = strain_at(s - h);
            let fd_g = (gp - gm) / (2.0 * h);
            let fd_k = (kp - km) / (2.0 * h);
            assert!((gs - fd_g).norm() <= 1e-6 * gs.norm().max(1.0));
            assert!((ks - fd_k).norm() <= 1e-6 * ks.norm().max(1.0));
        }
    }

    #[test]
    fn circle_frame_has_uniform_curvature() {
        let arc = make_arc(2.0, std::f64::consts::FRAC_PI_2).unwrap().k_refine(4, 6).unwrap();
        let sites = arc.greville();
        let pts = reference_points(&arc, &sites, None).unwrap();
        for p in &pts {
            // planar arc in x1-x2: d3 = e3, bending about d3 with curvature 1/R
            assert_abs_diff_eq!((p.r0.column(2) - Vec3::z()).norm(), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!((p.k0 - Vec3::new(0.0, 0.0, 0.5)).norm(), 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(p.k0_s.norm(), 0.0, epsilon = 1e-9);
            assert!(crate::so3::is_rotation(&p.r0, 1e-12));
            assert_abs_diff_eq!((p.a0() - Vec3::x()).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(p.a0_s().norm(), 0.0, epsilon = 1e-10);
            let st = PointState::reference(p);
            assert_abs_diff_eq!(strain_set(&st, p).max_abs(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn straight_beam_frame_and_director() {
        let line = make_line(Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)).unwrap().k_refine(3, 2).unwrap();
        let sites = line.greville();
        let pts = reference_points(&line, &sites, None).unwrap();
        for p in &pts {
            assert_abs_diff_eq!((p.r0 - Mat3::identity()).amax(), 0.0, epsilon = 1e-14);
            assert_eq!(p.k0, Vec3::zeros());
            assert_abs_diff_eq!(p.jac, 1.0, epsilon = 1e-14);
        }
        let tilted = reference_points(&line, &sites, Some(Vec3::new(0.3, 0.0, 1.0))).unwrap();
        assert_abs_diff_eq!((tilted[0].r0.column(1) - Vec3::z()).norm(), 0.0, epsilon = 1e-14);
        assert!(reference_points(&line, &sites, Some(Vec3::x())).is_err());
    }

    /// The marched frame of a helix must reproduce its exact twist-free curvature.
    #[test]
    fn helix_reference_curvature_matches_finite_differences() {
        let pts: Vec<(f64, Vec3)> = (0..400)
            .map(|i| {
                let t = i as f64 / 399.0 * 3.0;
                (t, Vec3::new(t.cos(), t.sin(), 0.3 * t))
            })
            .collect();
        let fit = crate::nurbs::fit_curve(&pts, 6, 40).unwrap().curve;
        let sites = fit.greville();
        let refs = reference_points(&fit, &sites, None).unwrap();
        // twist-free frame: K₀ has no torsional component, and its norm is the
        // geometric curvature κ = 1/(1 + 0.09)
        for p in refs.iter().skip(3).take(30) {
            assert_eq!(p.k0.x, 0.0);
            assert_abs_diff_eq!(p.k0.norm(), 1.0 / 1.09, epsilon = 1e-5);
        }
        // K₀,s consistent with K₀ along s
        for i in 5..30 {
            let (a, b) = (&refs[i], &refs[i + 1]);
            let ds = (b.u - a.u) * 0.5 * (a.jac + b.jac);
            let fd = (b.k0 - a.k0) / ds;
            let mid = (a.k0_s + b.k0_s) * 0.5;
            assert!((fd - mid).norm() < 1e-3, "{fd} vs {mid}");
        }
    }

    #[test]
    fn arc_basis_converts_derivatives() {
        let arc = make_arc(1.0, 1.0).unwrap().k_refine(5, 3).unwrap();
        let u = 0.37;
        let (jac, jac_u) = arc.jacobian(u).unwrap();
        let b = ArcBasis::new(&arc.basis(u, 2).unwrap(), jac, jac_u);
        let (c, c_s, c_ss) = b.interpolate(|j| arc.control_points()[j]);
        assert_abs_diff_eq!(c.norm(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c_s.norm(), 1.0, epsilon = 1e-12);
        // curvature vector of the unit circle points to the center
        assert_abs_diff_eq!((c_ss + c).norm(), 0.0, epsilon = 1e-10);
    }
}

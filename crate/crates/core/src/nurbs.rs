//! NURBS curves for beam centroid lines.
//!
//! Basis functions are evaluated with the Cox-de Boor recurrence and the
//! rational quotient rule. Derivatives up to third order are supported: the
//! field equations need second derivatives and the reference curvature
//! gradient needs the third.

use nalgebra::{DMatrix, Vector3, Vector4};

use crate::{Error, Result};

/// Highest derivative order returned by [`basis_eval`].
pub const MAX_DERIVATIVE: usize = 3;

const KNOT_EPS: f64 = 1e-12;

/// Nondecreasing, clamped knot sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    values: Vec<f64>,
}

impl KnotVector {
    /// Validates an open (clamped) knot vector for degree `degree`.
    pub fn new(values: Vec<f64>, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::Knots("degree must be at least 1".into()));
        }
        if values.len() < 2 * (degree + 1) {
            return Err(Error::Knots(format!(
                "{} knots are too few for degree {degree}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Knots("non-finite knot".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Knots("knots must be nondecreasing".into()));
        }
        let first = values[0];
        let last = values[values.len() - 1];
        if last - first <= 0.0 {
            return Err(Error::Knots("knot range is empty".into()));
        }
        let clamped_start = values[..=degree].iter().all(|&v| v == first);
        let clamped_end = values[values.len() - degree - 1..].iter().all(|&v| v == last);
        if !clamped_start || !clamped_end {
            return Err(Error::Knots("knot vector must be clamped at both ends".into()));
        }
        for (value, mult) in multiplicities(&values[degree + 1..values.len() - degree - 1]) {
            if mult > degree {
                return Err(Error::Knots(format!(
                    "interior knot {value} has multiplicity {mult} > degree {degree}"
                )));
            }
        }
        Ok(Self { values })
    }

    /// Open uniform knots on [0, 1] for `n_ctrl` control points.
    pub fn open_uniform(degree: usize, n_ctrl: usize) -> Result<Self> {
        if n_ctrl < degree + 1 {
            return Err(Error::Knots(format!(
                "{n_ctrl} control points cannot carry degree {degree}"
            )));
        }
        let spans = n_ctrl - degree;
        let mut values = vec![0.0; degree + 1];
        values.extend((1..spans).map(|i| i as f64 / spans as f64));
        values.extend(std::iter::repeat_n(1.0, degree + 1));
        Self::new(values, degree)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Distinct interior knots with their multiplicities.
    pub fn interior(&self, degree: usize) -> Vec<(f64, usize)> {
        multiplicities(&self.values[degree + 1..self.values.len() - degree - 1])
    }

    /// Knot span index `i` with `u_i <= u < u_{i+1}`; the last nonempty span
    /// is returned at the right end.
    pub fn find_span(&self, degree: usize, u: f64) -> Result<usize> {
        let (lo, hi) = (self.first(), self.last());
        if !(u >= lo - KNOT_EPS && u <= hi + KNOT_EPS) {
            return Err(Error::Domain { u, lo, hi });
        }
        let u = u.clamp(lo, hi);
        let n = self.values.len() - degree - 1;
        if u >= self.values[n] {
            return Ok(n - 1);
        }
        let (mut low, mut high) = (degree, n);
        let mut mid = (low + high) / 2;
        while u < self.values[mid] || u >= self.values[mid + 1] {
            if u < self.values[mid] {
                high = mid;
            } else {
                low = mid;
            }
            mid = (low + high) / 2;
        }
        Ok(mid)
    }
}

fn multiplicities(values: &[f64]) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((last, m)) if *last == v => *m += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

/// Nonzero basis functions at one parameter and their derivatives.
#[derive(Debug, Clone)]
pub struct BasisTable {
    /// Index of the first supported function.
    pub first: usize,
    /// `ders[r][i]` is the `r`-th derivative of function `first + i`.
    pub ders: Vec<Vec<f64>>,
}

impl BasisTable {
    pub fn len(&self) -> usize {
        self.ders[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.ders[0].is_empty()
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.len()
    }

    /// Linear combination `Σ_j d^r R_j · coeffs[j]`.
    pub fn combine(&self, order: usize, coeffs: &[Vector3<f64>]) -> Vector3<f64> {
        self.ders[order]
            .iter()
            .zip(&coeffs[self.first..self.first + self.len()])
            .fold(Vector3::zeros(), |acc, (b, c)| acc + c * *b)
    }
}

/// Polynomial B-spline basis derivatives on a span (nonrational).
pub fn bspline_basis_ders(knots: &KnotVector, degree: usize, u: f64, k: usize) -> Result<BasisTable> {
    let p = degree;
    let span = knots.find_span(p, u)?;
    let u = u.clamp(knots.first(), knots.last());
    let kv = knots.values();
    let nd = k.min(p);

    let mut ndu = vec![vec![0.0; p + 1]; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    ndu[0][0] = 1.0;
    for j in 1..=p {
        left[j] = u - kv[span + 1 - j];
        right[j] = kv[span + j] - u;
        let mut saved = 0.0;
        for r in 0..j {
            ndu[j][r] = right[r + 1] + left[j - r];
            let temp = ndu[r][j - 1] / ndu[j][r];
            ndu[r][j] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        ndu[j][j] = saved;
    }

    let mut ders = vec![vec![0.0; p + 1]; k + 1];
    for j in 0..=p {
        ders[0][j] = ndu[j][p];
    }
    let mut a = vec![vec![0.0; p + 1]; 2];
    for r in 0..=p {
        let (mut s1, mut s2) = (0usize, 1usize);
        a[0][0] = 1.0;
        for kk in 1..=nd {
            let mut d = 0.0;
            let rk = r as isize - kk as isize;
            let pk = p - kk;
            if r >= kk {
                a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                d = a[s2][0] * ndu[rk as usize][pk];
            }
            let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
            let j2 = if (r as isize - 1) <= pk as isize { kk - 1 } else { p - r };
            for j in j1..=j2 {
                let idx = (rk + j as isize) as usize;
                a[s2][j] = (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][idx];
                d += a[s2][j] * ndu[idx][pk];
            }
            if r <= pk {
                a[s2][kk] = -a[s1][kk - 1] / ndu[pk + 1][r];
                d += a[s2][kk] * ndu[r][pk];
            }
            ders[kk][r] = d;
            std::mem::swap(&mut s1, &mut s2);
        }
    }
    let mut factor = p as f64;
    for (kk, row) in ders.iter_mut().enumerate().take(nd + 1).skip(1) {
        for v in row.iter_mut() {
            *v *= factor;
        }
        factor *= (p - kk) as f64;
    }
    Ok(BasisTable {
        first: span - p,
        ders,
    })
}

/// Rational basis `R_{j,p}(u)` and derivatives up to order `k` (at most 3).
pub fn basis_eval(knots: &KnotVector, weights: &[f64], degree: usize, u: f64, k: usize) -> Result<BasisTable> {
    if k > MAX_DERIVATIVE {
        return Err(Error::Contract(format!(
            "derivative order {k} exceeds {MAX_DERIVATIVE}"
        )));
    }
    let poly = bspline_basis_ders(knots, degree, u, k)?;
    let len = poly.len();
    let w = &weights[poly.first..poly.first + len];

    // W^(r) and A^(r)_i = w_i N_i^(r)
    let wsum: Vec<f64> = (0..=k)
        .map(|r| poly.ders[r].iter().zip(w).map(|(n, wi)| n * wi).sum())
        .collect();
    let mut ders = vec![vec![0.0; len]; k + 1];
    for r in 0..=k {
        for i in 0..len {
            let mut v = w[i] * poly.ders[r][i];
            for l in 1..=r {
                v -= binomial(r, l) * wsum[l] * ders[r - l][i];
            }
            ders[r][i] = v / wsum[0];
        }
    }
    Ok(BasisTable {
        first: poly.first,
        ders,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Greville abscissae `(u_{i+1} + ... + u_{i+p}) / p`, one per control point.
pub fn greville(knots: &KnotVector, degree: usize) -> Vec<f64> {
    let kv = knots.values();
    let n = kv.len() - degree - 1;
    (0..n)
        .map(|i| kv[i + 1..=i + degree].iter().sum::<f64>() / degree as f64)
        .collect()
}

/// Rational curve `c(u) = Σ R_{j,p}(u) p_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct NurbsCurve {
    degree: usize,
    knots: KnotVector,
    points: Vec<Vector3<f64>>,
    weights: Vec<f64>,
}

impl NurbsCurve {
    pub fn new(
        degree: usize,
        knots: KnotVector,
        points: Vec<Vector3<f64>>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let expected = knots.len().saturating_sub(degree + 1);
        if points.len() != expected {
            return Err(Error::Curve(format!(
                "{} control points given, knot vector needs {expected}",
                points.len()
            )));
        }
        if weights.len() != points.len() {
            return Err(Error::Curve("one weight per control point is required".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::Curve("weights must be positive".into()));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::Curve("non-finite control point".into()));
        }
        // re-validate so that a knot vector built for another degree is rejected
        let knots = KnotVector::new(knots.values, degree)?;
        Ok(Self {
            degree,
            knots,
            points,
            weights,
        })
    }

    /// Nonrational B-spline (unit weights).
    pub fn bspline(degree: usize, knots: KnotVector, points: Vec<Vector3<f64>>) -> Result<Self> {
        let weights = vec![1.0; points.len()];
        Self::new(degree, knots, points, weights)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn control_points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn control_points_mut(&mut self) -> &mut [Vector3<f64>] {
        &mut self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn greville(&self) -> Vec<f64> {
        greville(&self.knots, self.degree)
    }

    pub fn basis(&self, u: f64, k: usize) -> Result<BasisTable> {
        basis_eval(&self.knots, &self.weights, self.degree, u, k)
    }

    /// Point and parametric derivatives `[c, c_u, ..]` up to order `k`.
    pub fn eval(&self, u: f64, k: usize) -> Result<Vec<Vector3<f64>>> {
        let table = self.basis(u, k)?;
        Ok((0..=k).map(|r| table.combine(r, &self.points)).collect())
    }

    pub fn point(&self, u: f64) -> Result<Vector3<f64>> {
        Ok(self.eval(u, 0)?[0])
    }

    /// `J = |c_u|` and `J_u`.
    pub fn jacobian(&self, u: f64) -> Result<(f64, f64)> {
        let d = self.eval(u, 2)?;
        let j = d[1].norm();
        if !(j > 1e-14) {
            return Err(Error::SingularGeometry(format!(
                "vanishing tangent at u = {u}"
            )));
        }
        Ok((j, d[1].dot(&d[2]) / j))
    }

    fn homogeneous(&self) -> Vec<Vector4<f64>> {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| Vector4::new(p.x * w, p.y * w, p.z * w, w))
            .collect()
    }

    fn from_homogeneous(degree: usize, knots: KnotVector, hom: &[Vector4<f64>]) -> Result<Self> {
        let weights: Vec<f64> = hom.iter().map(|h| h.w).collect();
        let points = hom
            .iter()
            .map(|h| Vector3::new(h.x / h.w, h.y / h.w, h.z / h.w))
            .collect();
        Self::new(degree, knots, points, weights)
    }

    /// Boehm knot insertion (single knot).
    pub fn insert_knot(&self, u: f64) -> Result<Self> {
        let p = self.degree;
        let k = self.knots.find_span(p, u)?;
        let kv = self.knots.values();
        let hom = self.homogeneous();
        let mut new_hom = Vec::with_capacity(hom.len() + 1);
        for i in 0..=hom.len() {
            let q = if i + p <= k {
                hom[i]
            } else if i > k {
                hom[i - 1]
            } else {
                let alpha = (u - kv[i]) / (kv[i + p] - kv[i]);
                hom[i] * alpha + hom[i - 1] * (1.0 - alpha)
            };
            new_hom.push(q);
        }
        let mut new_knots = kv.to_vec();
        new_knots.insert(k + 1, u);
        Self::from_homogeneous(p, KnotVector::new(new_knots, p)?, &new_hom)
    }

    /// Raises the degree while keeping the interior continuity.
    ///
    /// The homogeneous curve lies in the elevated spline space, so its control
    /// net is recovered exactly by interpolation at that space's Greville points.
    pub fn elevate_degree(&self, target: usize) -> Result<Self> {
        if target < self.degree {
            return Err(Error::Curve(format!(
                "cannot lower degree {} to {target}",
                self.degree
            )));
        }
        if target == self.degree {
            return Ok(self.clone());
        }
        let t = target - self.degree;
        let (lo, hi) = (self.knots.first(), self.knots.last());
        let mut values = vec![lo; target + 1];
        for (v, m) in self.knots.interior(self.degree) {
            values.extend(std::iter::repeat_n(v, m + t));
        }
        values.extend(std::iter::repeat_n(hi, target + 1));
        let knots = KnotVector::new(values, target)?;
        let sites = greville(&knots, target);
        let n = sites.len();
        let mut collocation = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DMatrix::<f64>::zeros(n, 4);
        let hom = self.homogeneous();
        for (i, &u) in sites.iter().enumerate() {
            let target_basis = bspline_basis_ders(&knots, target, u, 0)?;
            for (l, v) in target_basis.ders[0].iter().enumerate() {
                collocation[(i, target_basis.first + l)] = *v;
            }
            let own = bspline_basis_ders(&self.knots, self.degree, u, 0)?;
            let h = own.ders[0]
                .iter()
                .zip(&hom[own.first..own.first + own.len()])
                .fold(Vector4::zeros(), |acc, (b, c)| acc + c * *b);
            for c in 0..4 {
                rhs[(i, c)] = h[c];
            }
        }
        let sol = collocation
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::SingularGeometry("degree elevation system is singular".into()))?;
        let new_hom: Vec<Vector4<f64>> = (0..n)
            .map(|i| Vector4::new(sol[(i, 0)], sol[(i, 1)], sol[(i, 2)], sol[(i, 3)]))
            .collect();
        Self::from_homogeneous(target, knots, &new_hom)
    }

    /// k-refinement: degree elevation to `target_degree`, then insertion of
    /// `n_insert` knots spaced uniformly over the parameter range. A position
    /// that already carries a knot of full multiplicity is shifted by half a
    /// spacing.
    pub fn k_refine(&self, target_degree: usize, n_insert: usize) -> Result<Self> {
        let mut curve = self.elevate_degree(target_degree)?;
        let (lo, hi) = (self.knots.first(), self.knots.last());
        let h = (hi - lo) / (n_insert + 1) as f64;
        for i in 1..=n_insert {
            let mut u = lo + h * i as f64;
            let full = |c: &NurbsCurve, u: f64| {
                c.knots.values().iter().filter(|&&k| (k - u).abs() <= 1e-14 * (hi - lo)).count() >= target_degree
            };
            if full(&curve, u) {
                u += 0.5 * h;
            }
            curve = curve.insert_knot(u)?;
        }
        Ok(curve)
    }

    /// k-refinement to exactly `n_ctrl` control points (when reachable).
    pub fn refine_to(&self, target_degree: usize, n_ctrl: usize) -> Result<Self> {
        let elevated = self.elevate_degree(target_degree)?;
        if n_ctrl < elevated.len() {
            return Err(Error::Curve(format!(
                "cannot refine to {n_ctrl} control points; elevated curve already has {}",
                elevated.len()
            )));
        }
        self.k_refine(target_degree, n_ctrl - elevated.len())
    }

    /// Splits at an interior parameter into two curves, each reparametrized to `[0, 1]`.
    pub fn split(&self, u: f64) -> Result<(Self, Self)> {
        let (lo, hi) = (self.knots.first(), self.knots.last());
        if !(u > lo && u < hi) {
            return Err(Error::Curve(format!("split parameter {u} is not inside ({lo}, {hi})")));
        }
        let p = self.degree;
        let tol = 1e-14 * (hi - lo);
        let multiplicity = |c: &Self| c.knots.values().iter().filter(|&&k| (k - u).abs() <= tol).count();
        let mut curve = self.clone();
        for _ in multiplicity(self)..p {
            curve = curve.insert_knot(u)?;
        }
        let kv = curve.knots.values();
        let idx = kv.iter().position(|&k| (k - u).abs() <= tol).unwrap_or(0);
        let rescale = |vals: Vec<f64>, a: f64, b: f64| -> Vec<f64> { vals.into_iter().map(|k| ((k - a) / (b - a)).clamp(0.0, 1.0)).collect() };

        let mut left_knots: Vec<f64> = kv[..idx].to_vec();
        left_knots.extend(std::iter::repeat_n(u, p + 1));
        let left = Self::new(
            p,
            KnotVector::new(rescale(left_knots, lo, u), p)?,
            curve.points[..idx].to_vec(),
            curve.weights[..idx].to_vec(),
        )?;
        let mut right_knots = vec![u];
        right_knots.extend(kv[idx..].iter().map(|&k| if (k - u).abs() <= tol { u } else { k }));
        let right = Self::new(
            p,
            KnotVector::new(rescale(right_knots, u, hi), p)?,
            curve.points[idx - 1..].to_vec(),
            curve.weights[idx - 1..].to_vec(),
        )?;
        Ok((left, right))
    }

    /// Rigid motion `x ↦ Q x + a` applied to the control net.
    pub fn transformed(&self, rotation: &nalgebra::Matrix3<f64>, shift: &Vector3<f64>) -> Self {
        let mut out = self.clone();
        for p in &mut out.points {
            *p = rotation * *p + shift;
        }
        out
    }
}

/// Straight segment from `a` to `b` (degree 1).
pub fn make_line(a: Vector3<f64>, b: Vector3<f64>) -> Result<NurbsCurve> {
    if (b - a).norm() <= 0.0 {
        return Err(Error::SingularGeometry("zero-length segment".into()));
    }
    NurbsCurve::bspline(1, KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1)?, vec![a, b])
}

/// Exact circular arc in the x1-x2 plane, centred at the origin, starting at
/// `(radius, 0, 0)` and turning counterclockwise by `angle`.
///
/// Arcs wider than a right angle are split into equal rational quadratic
/// segments joined with C0 continuity.
pub fn make_arc(radius: f64, angle: f64) -> Result<NurbsCurve> {
    if !(radius > 0.0) || !(angle > 0.0) || angle > 2.0 * std::f64::consts::PI + 1e-12 {
        return Err(Error::Curve(format!(
            "arc needs radius > 0 and 0 < angle <= 2π (got {radius}, {angle})"
        )));
    }
    let segments = (angle / std::f64::consts::FRAC_PI_2 - 1e-12).ceil().max(1.0) as usize;
    let delta = angle / segments as f64;
    let w_mid = (delta / 2.0).cos();
    let mut points = Vec::with_capacity(2 * segments + 1);
    let mut weights = Vec::with_capacity(2 * segments + 1);
    let on_circle = |a: f64| Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
    points.push(on_circle(0.0));
    weights.push(1.0);
    for s in 0..segments {
        let a0 = s as f64 * delta;
        let mid = a0 + delta / 2.0;
        points.push(on_circle(mid) / w_mid);
        weights.push(w_mid);
        points.push(on_circle(a0 + delta));
        weights.push(1.0);
    }
    let mut knots = vec![0.0; 3];
    for s in 1..segments {
        let v = s as f64 / segments as f64;
        knots.extend([v, v]);
    }
    knots.extend([1.0; 3]);
    NurbsCurve::new(2, KnotVector::new(knots, 2)?, points, weights)
}

/// Outcome of a least-squares fit.
#[derive(Debug, Clone)]
pub struct CurveFit {
    pub curve: NurbsCurve,
    /// Largest distance between a sample and the fitted curve at the sample parameter.
    pub max_residual: f64,
}

/// Chord-length parameters normalized to [0, 1].
pub fn chord_length_params(points: &[Vector3<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; points.len()];
    for i in 1..points.len() {
        acc[i] = acc[i - 1] + (points[i] - points[i - 1]).norm();
    }
    let total = acc.last().copied().unwrap_or(0.0);
    if total > 0.0 {
        acc.iter_mut().for_each(|a| *a /= total);
    }
    acc
}

/// Least-squares B-spline fit of degree `degree` with `n_ctrl` control points
/// and open uniform knots; the end samples are interpolated exactly.
pub fn fit_curve(samples: &[(f64, Vector3<f64>)], degree: usize, n_ctrl: usize) -> Result<CurveFit> {
    if samples.len() < n_ctrl {
        return Err(Error::Fit(format!(
            "{} samples cannot determine {n_ctrl} control points",
            samples.len()
        )));
    }
    if n_ctrl < degree + 1 || n_ctrl < 2 {
        return Err(Error::Fit(format!("degree {degree} needs at least {} controls", degree + 1)));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::Fit("sample parameters must be strictly increasing".into()));
    }
    let t0 = samples[0].0;
    let span = samples[samples.len() - 1].0 - t0;
    let params: Vec<f64> = samples.iter().map(|(t, _)| (t - t0) / span).collect();
    let knots = KnotVector::open_uniform(degree, n_ctrl)?;
    let first = samples[0].1;
    let last = samples[samples.len() - 1].1;

    let mut points = vec![Vector3::zeros(); n_ctrl];
    points[0] = first;
    points[n_ctrl - 1] = last;
    let inner = n_ctrl - 2;
    if inner > 0 {
        let rows = samples.len() - 2;
        let mut a = DMatrix::<f64>::zeros(rows, inner);
        let mut b = DMatrix::<f64>::zeros(rows, 3);
        for (r, (u, (_, q))) in params[1..params.len() - 1]
            .iter()
            .zip(&samples[1..samples.len() - 1])
            .enumerate()
        {
            let table = bspline_basis_ders(&knots, degree, *u, 0)?;
            let mut rhs = *q;
            for (l, v) in table.ders[0].iter().enumerate() {
                let j = table.first + l;
                if j == 0 {
                    rhs -= first * *v;
                } else if j == n_ctrl - 1 {
                    rhs -= last * *v;
                } else {
                    a[(r, j - 1)] = *v;
                }
            }
            for c in 0..3 {
                b[(r, c)] = rhs[c];
            }
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax) {
            return Err(Error::Fit(format!(
                "rank-deficient normal equations (singular values {smin:e} / {smax:e})"
            )));
        }
        let sol = svd
            .solve(&b, 0.0)
            .map_err(|e| Error::Fit(e.to_string()))?;
        for j in 0..inner {
            points[j + 1] = Vector3::new(sol[(j, 0)], sol[(j, 1)], sol[(j, 2)]);
        }
    }
    let curve = NurbsCurve::bspline(degree, knots, points)?;
    let mut max_residual: f64 = 0.0;
    for (u, (_, q)) in params.iter().zip(samples) {
        max_residual = max_residual.max((curve.point(*u)? - q).norm());
    }
    Ok(CurveFit {
        curve,
        max_residual,
    })
}

/// Fit of raw points using chord-length parameters.
pub fn fit_points(points: &[Vector3<f64>], degree: usize, n_ctrl: usize) -> Result<CurveFit> {
    let params = chord_length_params(points);
    let samples: Vec<(f64, Vector3<f64>)> = params.into_iter().zip(points.iter().copied()).collect();
    fit_curve(&samples, degree, n_ctrl)
}

/// Samples of a parametric curve reparameterized by arc length.
///
/// The arc length is accumulated with composite Simpson quadrature of
/// `|c'(s)|` on `fine` subintervals per sample interval.
pub fn arc_length_samples<F, D>(
    curve: F,
    derivative: D,
    range: (f64, f64),
    count: usize,
    fine: usize,
) -> Vec<(f64, Vector3<f64>)>
where
    F: Fn(f64) -> Vector3<f64>,
    D: Fn(f64) -> Vector3<f64>,
{
    let (a, b) = range;
    let h = (b - a) / (count - 1) as f64;
    let mut out = Vec::with_capacity(count);
    let mut length = 0.0;
    out.push((0.0, curve(a)));
    for i in 1..count {
        let s0 = a + (i - 1) as f64 * h;
        length += simpson(|s| derivative(s).norm(), s0, s0 + h, fine);
        let s = if i == count - 1 { b } else { a + i as f64 * h };
        out.push((length, curve(s)));
    }
    out
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n.max(2) & !1;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    sum * h / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn quarter_circle() -> NurbsCurve {
        make_arc(1.0, FRAC_PI_2).unwrap()
    }

    fn wavy_curve() -> NurbsCurve {
        let knots = KnotVector::new(
            vec![0.0, 0.0, 0.0, 0.0, 0.3, 0.5, 0.5, 0.8, 1.0, 1.0, 1.0, 1.0],
            3,
        )
        .unwrap();
        let pts = (0..8)
            .map(|i| {
                let x = i as f64;
                Vector3::new(x, (x * 0.7).sin(), 0.2 * x * x - x)
            })
            .collect();
        let weights = vec![1.0, 0.8, 1.3, 0.9, 1.1, 1.0, 0.7, 1.2];
        NurbsCurve::new(3, knots, pts, weights).unwrap()
    }

    #[test]
    fn linear_hat_functions() {
        let knots = KnotVector::new(vec![0.0, 0.0, 1.0, 1.0], 1).unwrap();
        let t = basis_eval(&knots, &[1.0, 1.0], 1, 0.5, 0).unwrap();
        assert_eq!(t.first, 0);
        assert_abs_diff_eq!(t.ders[0][0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(t.ders[0][1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn outside_range_is_domain_error() {
        let c = quarter_circle();
        assert!(matches!(c.eval(1.5, 1), Err(Error::Domain { .. })));
        assert!(matches!(c.eval(-0.1, 0), Err(Error::Domain { .. })));
    }

    #[test]
    fn rational_bezier_matches_de_casteljau() {
        // de Casteljau on homogeneous coordinates
        let w = 0.37;
        let pts = [
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 2.0, -1.0),
            Vector3::new(3.0, 0.5, 2.0),
        ];
        let weights = [1.0, w, 1.0];
        let u = 0.5;
        let mut h: Vec<Vector4<f64>> = pts
            .iter()
            .zip(weights)
            .map(|(p, w)| Vector4::new(p.x * w, p.y * w, p.z * w, w))
            .collect();
        while h.len() > 1 {
            h = h.windows(2).map(|s| s[0] * (1.0 - u) + s[1] * u).collect();
        }
        let expected = Vector3::new(h[0].x / h[0].w, h[0].y / h[0].w, h[0].z / h[0].w);

        let knots = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2).unwrap();
        let c = NurbsCurve::new(2, knots, pts.to_vec(), weights.to_vec()).unwrap();
        assert_abs_diff_eq!((c.point(u).unwrap() - expected).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn greville_examples() {
        let k = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(greville(&k, 2), vec![0.0, 0.5, 1.0]);
        let k = KnotVector::new(vec![0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(greville(&k, 2), vec![0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn greville_degree_four_matches_direct_averages() {
        let k = KnotVector::open_uniform(4, 10).unwrap();
        let g = greville(&k, 4);
        // knots 0,0,0,0,0, 1/6..5/6, 1,1,1,1,1
        let knots: Vec<f64> = std::iter::repeat_n(0.0, 5)
            .chain((1..6).map(|i| i as f64 / 6.0))
            .chain(std::iter::repeat_n(1.0, 5))
            .collect();
        let expected: Vec<f64> = (0..10)
            .map(|i| (1..=4).map(|l| knots[i + l]).sum::<f64>() / 4.0)
            .collect();
        assert_eq!(g.len(), 10);
        for (a, b) in g.iter().zip(&expected) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g[0], 0.0);
        assert_eq!(g[9], 1.0);
    }

    #[test]
    fn straight_segment_interpolates() {
        let a = Vector3::new(1.0, 2.0, 3.0);
        let b = Vector3::new(-1.0, 0.0, 5.0);
        let c = make_line(a, b).unwrap();
        assert_abs_diff_eq!((c.point(0.3).unwrap() - (a * 0.7 + b * 0.3)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quarter_circle_is_exact() {
        let c = quarter_circle();
        assert_abs_diff_eq!(c.weights()[1], FRAC_PI_4.cos(), epsilon = 1e-15);
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert_abs_diff_eq!(c.point(u).unwrap().norm(), 1.0, epsilon = 1e-13);
        }
        let d0 = c.eval(0.0, 1).unwrap()[1];
        let d1 = c.eval(1.0, 1).unwrap()[1];
        assert_abs_diff_eq!(d0.dot(&d1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn arc_length_by_adaptive_quadrature() {
        fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m, 2);
            let right = simpson(f, m, b, 2);
            if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            adaptive(f, a, m, left, tol / 2.0, depth - 1) + adaptive(f, m, b, right, tol / 2.0, depth - 1)
        }
        let c = quarter_circle();
        let speed = |u: f64| c.eval(u, 1).unwrap()[1].norm();
        let whole = simpson(speed, 0.0, 1.0, 2);
        let len = adaptive(&speed, 0.0, 1.0, whole, 1e-13, 40);
        assert_abs_diff_eq!(len, FRAC_PI_2, epsilon = 1e-10);
    }

    #[test]
    fn wide_arcs_compose_segments() {
        let c = make_arc(2.0, 1.5 * PI).unwrap();
        assert_eq!(c.len(), 7);
        for i in 0..=60 {
            let u = i as f64 / 60.0;
            assert_abs_diff_eq!(c.point(u).unwrap().norm(), 2.0, epsilon = 1e-13);
        }
        let end = c.point(1.0).unwrap();
        assert_abs_diff_eq!((end - Vector3::new(0.0, -2.0, 0.0)).norm(), 0.0, epsilon = 1e-13);
    }

    #[test]
    fn jacobian_examples() {
        let c = make_line(Vector3::zeros(), Vector3::new(2.5, 0.0, 0.0))
            .unwrap()
            .k_refine(4, 5)
            .unwrap();
        for u in [0.0, 0.13, 0.5, 1.0] {
            let (j, ju) = c.jacobian(u).unwrap();
            assert_abs_diff_eq!(j, 2.5, epsilon = 1e-12);
            assert_abs_diff_eq!(ju, 0.0, epsilon = 1e-10);
        }
        // a rational quadratic arc is not arc-length parameterized, so
        // check the integral of J instead
        let arc = quarter_circle();
        let total = simpson(|u| arc.jacobian(u).unwrap().0, 0.0, 1.0, 2000);
        assert_abs_diff_eq!(total, FRAC_PI_2, epsilon = 1e-10);
    }

    #[test]
    fn jacobian_derivative_matches_finite_differences() {
        let c = wavy_curve();
        let h = 1e-6;
        for u in [0.1, 0.35, 0.62, 0.9] {
            let (_, ju) = c.jacobian(u).unwrap();
            let fd = (c.jacobian(u + h).unwrap().0 - c.jacobian(u - h).unwrap().0) / (2.0 * h);
            assert!((ju - fd).abs() < 1e-6 * (1.0 + ju.abs()), "{ju} vs {fd}");
        }
    }

    #[test]
    fn vanishing_tangent_is_singular() {
        let knots = KnotVector::new(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 2).unwrap();
        let p = Vector3::new(1.0, 1.0, 1.0);
        let c = NurbsCurve::bspline(2, knots, vec![p, p, p]).unwrap();
        assert!(matches!(c.jacobian(0.5), Err(Error::SingularGeometry(_))));
    }

    #[test]
    fn basis_derivatives_match_finite_differences() {
        let c = wavy_curve();
        let h = 1e-5;
        for u in [0.07, 0.21, 0.44, 0.66, 0.93] {
            let t = c.basis(u, 3).unwrap();
            let tp = c.basis(u + h, 3).unwrap();
            let tm = c.basis(u - h, 3).unwrap();
            assert_eq!(t.first, tp.first);
            assert_eq!(t.first, tm.first);
            for r in 0..3 {
                for i in 0..t.len() {
                    let fd = (tp.ders[r][i] - tm.ders[r][i]) / (2.0 * h);
                    let exact = t.ders[r + 1][i];
                    assert!(
                        (fd - exact).abs() <= 1e-6 * exact.abs().max(1.0),
                        "order {} fn {i} at {u}: {exact} vs {fd}",
                        r + 1
                    );
                }
            }
        }
    }

    #[test]
    fn elevation_preserves_geometry() {
        let c = quarter_circle();
        let e = c.elevate_degree(4).unwrap();
        assert_eq!(e.len(), 5);
        for i in 0..=50 {
            let u = i as f64 / 50.0;
            assert_abs_diff_eq!((e.point(u).unwrap() - c.point(u).unwrap()).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn insertion_preserves_geometry_and_grows_net() {
        let c = quarter_circle();
        let r = c.k_refine(2, 8).unwrap();
        assert_eq!(r.len(), c.len() + 8);
        for i in 0..=100 {
            let u = i as f64 / 100.0;
            assert_abs_diff_eq!((r.point(u).unwrap() - c.point(u).unwrap()).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn k_refinement_keeps_continuity_of_interior_knots() {
        let c = wavy_curve();
        let r = c.k_refine(6, 7).unwrap();
        for (v, m) in r.knots().interior(6) {
            if (v - 0.5).abs() < 1e-15 {
                // double knot of the cubic gains three from elevation and
                // one from the insertion at 4/8
                assert_eq!(m, 6);
            }
        }
        for i in 0..=200 {
            let u = i as f64 / 200.0;
            assert!((r.point(u).unwrap() - c.point(u).unwrap()).norm() < 1e-10);
        }
        assert_eq!(r.greville().len(), r.len());
    }

    #[test]
    fn fit_reproduces_representable_curve() {
        let knots = KnotVector::open_uniform(3, 7).unwrap();
        let pts: Vec<Vector3<f64>> = (0..7)
            .map(|i| Vector3::new(i as f64, ((i * i) % 5) as f64, -(i as f64) * 0.5))
            .collect();
        let truth = NurbsCurve::bspline(3, knots, pts.clone()).unwrap();
        let samples: Vec<(f64, Vector3<f64>)> = (0..60)
            .map(|i| {
                let u = i as f64 / 59.0;
                (u, truth.point(u).unwrap())
            })
            .collect();
        let fit = fit_curve(&samples, 3, 7).unwrap();
        assert!(fit.max_residual < 1e-10);
        for (a, b) in fit.curve.control_points().iter().zip(&pts) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn fit_rejects_rank_deficiency() {
        // all interior samples in one knot span cannot fix all controls
        let samples: Vec<(f64, Vector3<f64>)> = [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 1.0]
            .iter()
            .map(|&u| (u, Vector3::new(u, u * u, 0.0)))
            .collect();
        assert!(matches!(fit_curve(&samples, 2, 8), Err(Error::Fit(_))));
    }

    #[test]
    fn chord_length_fit_of_raw_points() {
        let pts: Vec<Vector3<f64>> = (0..200)
            .map(|i| {
                let a = i as f64 / 199.0 * FRAC_PI_2;
                Vector3::new(a.cos(), a.sin(), 0.0)
            })
            .collect();
        let fit = fit_points(&pts, 4, 12).unwrap();
        assert!(fit.max_residual < 1e-6, "{}", fit.max_residual);
    }

    #[test]
    fn bad_knots_rejected() {
        assert!(KnotVector::new(vec![0.0, 0.0, 1.0, 0.5], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.1, 1.0, 1.0], 1).is_err());
        assert!(KnotVector::new(vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.5, 1.0, 1.0, 1.0], 2).is_err());
        let k = KnotVector::open_uniform(2, 4).unwrap();
        assert!(NurbsCurve::bspline(2, k.clone(), vec![Vector3::zeros(); 3]).is_err());
        assert!(NurbsCurve::new(2, k, vec![Vector3::zeros(); 4], vec![1.0, -1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn split_halves_trace_the_original() {
        let c = wavy_curve().k_refine(5, 4).unwrap();
        for &at in &[0.5, 0.3, 0.61] {
            let (a, b) = c.split(at).unwrap();
            assert_eq!(a.degree(), c.degree());
            for k in 0..=20 {
                let v = k as f64 / 20.0;
                assert!((a.point(v).unwrap() - c.point(at * v).unwrap()).norm() < 1e-12);
                assert!((b.point(v).unwrap() - c.point(at + (1.0 - at) * v).unwrap()).norm() < 1e-12);
            }
        }
        let arc = make_arc(1.0, std::f64::consts::PI).unwrap();
        let (a, b) = arc.split(0.25).unwrap();
        assert!((a.point(1.0).unwrap() - b.point(0.0).unwrap()).norm() < 1e-14);
        assert!((b.point(0.4).unwrap().norm() - 1.0).abs() < 1e-14);
        assert!(arc.split(0.0).is_err());
        assert!(arc.split(1.0).is_err());
    }

    proptest! {
        #[test]
        fn partition_of_unity(u in 0.0f64..=1.0, w in proptest::collection::vec(0.2f64..3.0, 8)) {
            let knots = KnotVector::open_uniform(4, 8).unwrap();
            let t = basis_eval(&knots, &w, 4, u, 2).unwrap();
            prop_assert_eq!(t.len(), 5);
            let s0: f64 = t.ders[0].iter().sum();
            let s1: f64 = t.ders[1].iter().sum();
            let s2: f64 = t.ders[2].iter().sum();
            prop_assert!((s0 - 1.0).abs() < 1e-13);
            prop_assert!(s1.abs() < 1e-13 * (1.0 + t.ders[1].iter().map(|v| v.abs()).sum::<f64>()));
            prop_assert!(s2.abs() < 1e-12 * (1.0 + t.ders[2].iter().map(|v| v.abs()).sum::<f64>()));
        }

        #[test]
        fn refinement_is_geometry_preserving(extra in 0usize..6, p in 3usize..7, u in 0.0f64..=1.0) {
            let c = wavy_curve();
            let r = c.k_refine(p, extra).unwrap();
            prop_assert_eq!(r.greville().len(), r.len());
            prop_assert!((r.point(u).unwrap() - c.point(u).unwrap()).norm() < 1e-10);
        }
    }
}

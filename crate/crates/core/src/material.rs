//! Generalized Maxwell model for beam stress resultants.
//!
//! A long-term spring acts in parallel with `m` spring–dashpot branches. The
//! viscous strain of every branch is integrated with the trapezoidal rule,
//! which makes the branch contribution an affine function of the current total
//! strain: `Γ_α^n = c_α Γ^n + β_α^{n−1}`.

use std::ops::{Add, AddAssign, Mul, Sub};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

type Vec3 = Vector3<f64>;

/// Geometric properties of a cross section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSection {
    /// Area `A` [m²].
    pub area: f64,
    /// Shear area along d₂, including the correction factor [m²].
    pub shear_area_2: f64,
    /// Shear area along d₃, including the correction factor [m²].
    pub shear_area_3: f64,
    /// Torsion constant `J_t` [m⁴].
    pub torsion: f64,
    /// Second moment about d₂ [m⁴].
    pub inertia_2: f64,
    /// Second moment about d₃ [m⁴].
    pub inertia_3: f64,
}

/// Shear correction factor for rectangles.
pub const RECTANGLE_SHEAR_FACTOR: f64 = 5.0 / 6.0;
/// Shear correction factor for solid circles.
pub const CIRCLE_SHEAR_FACTOR: f64 = 0.9;

impl CrossSection {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.area,
            self.shear_area_2,
            self.shear_area_3,
            self.torsion,
            self.inertia_2,
            self.inertia_3,
        ];
        if all.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("cross-section properties must be positive: {self:?}")))
        }
    }

    /// Solid rectangle, `width` along d₂ and `height` along d₃.
    pub fn rectangle(width: f64, height: f64) -> Self {
        let area = width * height;
        Self {
            area,
            shear_area_2: RECTANGLE_SHEAR_FACTOR * area,
            shear_area_3: RECTANGLE_SHEAR_FACTOR * area,
            torsion: rectangle_torsion(width, height),
            inertia_2: width * height.powi(3) / 12.0,
            inertia_3: height * width.powi(3) / 12.0,
        }
    }

    pub fn square(side: f64) -> Self {
        Self::rectangle(side, side)
    }

    /// Solid circle of diameter `d`.
    pub fn circle(d: f64) -> Self {
        let area = std::f64::consts::PI * d * d / 4.0;
        let inertia = std::f64::consts::PI * d.powi(4) / 64.0;
        Self {
            area,
            shear_area_2: CIRCLE_SHEAR_FACTOR * area,
            shear_area_3: CIRCLE_SHEAR_FACTOR * area,
            torsion: 2.0 * inertia,
            inertia_2: inertia,
            inertia_3: inertia,
        }
    }
}

/// Saint-Venant torsion constant of a solid rectangle (series solution).
pub fn rectangle_torsion(width: f64, height: f64) -> f64 {
    let (a, b) = if width >= height { (width, height) } else { (height, width) };
    let ratio = b / a;
    let mut sum = 0.0;
    for k in 0..50 {
        let n = (2 * k + 1) as f64;
        sum += (n * std::f64::consts::PI / (2.0 * ratio)).tanh() / n.powi(5);
    }
    a * b.powi(3) / 3.0 * (1.0 - 192.0 / std::f64::consts::PI.powi(5) * ratio * sum)
}

/// One spring–dashpot branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxwellBranch {
    /// Young modulus `E_α` [N/m²].
    pub modulus: f64,
    /// Relaxation time `τ_α` [s].
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxwellMaterial {
    /// Long-term Young modulus `E∞` [N/m²].
    pub e_inf: f64,
    /// Poisson ratio, shared by all branches.
    pub nu: f64,
    #[serde(default)]
    pub branches: Vec<MaxwellBranch>,
}

impl MaxwellMaterial {
    pub fn new(e_inf: f64, nu: f64, branches: Vec<MaxwellBranch>) -> Result<Self> {
        let m = Self { e_inf, nu, branches };
        m.validate()?;
        Ok(m)
    }

    pub fn elastic(e: f64, nu: f64) -> Self {
        Self {
            e_inf: e,
            nu,
            branches: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_inf >= 0.0) || !self.e_inf.is_finite() {
            return Err(Error::Config("E_inf must be nonnegative".into()));
        }
        if !(self.nu > -1.0 && self.nu < 0.5) {
            return Err(Error::Config(format!("Poisson ratio {} outside (-1, 0.5)", self.nu)));
        }
        if self.e_inf == 0.0 && self.branches.is_empty() {
            return Err(Error::Config("material has no stiffness".into()));
        }
        for b in &self.branches {
            if !(b.tau > 0.0) || !(b.modulus >= 0.0) || !b.tau.is_finite() || !b.modulus.is_finite() {
                return Err(Error::Config(format!("invalid Maxwell branch {b:?}")));
            }
        }
        Ok(())
    }

    pub fn shear_modulus(&self, e: f64) -> f64 {
        e / (2.0 * (1.0 + self.nu))
    }

    /// Instantaneous Young modulus `E∞ + Σ E_α`.
    pub fn e0(&self) -> f64 {
        self.e_inf + self.branches.iter().map(|b| b.modulus).sum::<f64>()
    }
}

/// Diagonals of `C_N = diag(EA, GA₂, GA₃)` and `C_M = diag(GJ_t, EJ₂, EJ₃)`.
fn diagonals(e: f64, g: f64, s: &CrossSection) -> (Vec3, Vec3) {
    (
        Vec3::new(e * s.area, g * s.shear_area_2, g * s.shear_area_3),
        Vec3::new(g * s.torsion, e * s.inertia_2, e * s.inertia_3),
    )
}

/// Section stiffness of the long-term spring and of each branch (diagonals).
#[derive(Debug, Clone, PartialEq)]
pub struct SectionStiffness {
    pub cn_inf: Vec3,
    pub cm_inf: Vec3,
    pub cn_v: Vec<Vec3>,
    pub cm_v: Vec<Vec3>,
    pub tau: Vec<f64>,
}

impl SectionStiffness {
    pub fn new(mat: &MaxwellMaterial, section: &CrossSection) -> Self {
        let (cn_inf, cm_inf) = diagonals(mat.e_inf, mat.shear_modulus(mat.e_inf), section);
        let mut cn_v = Vec::with_capacity(mat.branches.len());
        let mut cm_v = Vec::with_capacity(mat.branches.len());
        for b in &mat.branches {
            let (n, m) = diagonals(b.modulus, mat.shear_modulus(b.modulus), section);
            cn_v.push(n);
            cm_v.push(m);
        }
        Self {
            cn_inf,
            cm_inf,
            cn_v,
            cm_v,
            tau: mat.branches.iter().map(|b| b.tau).collect(),
        }
    }

    pub fn branch_count(&self) -> usize {
        self.tau.len()
    }

    pub fn cn0(&self) -> Vec3 {
        self.cn_v.iter().fold(self.cn_inf, |acc, c| acc + c)
    }

    pub fn cm0(&self) -> Vec3 {
        self.cm_v.iter().fold(self.cm_inf, |acc, c| acc + c)
    }

    /// `(C_N∞, C_M∞, C_N0, C_M0)` as matrices.
    pub fn elastic_tensors(&self) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
        (
            Matrix3::from_diagonal(&self.cn_inf),
            Matrix3::from_diagonal(&self.cm_inf),
            Matrix3::from_diagonal(&self.cn0()),
            Matrix3::from_diagonal(&self.cm0()),
        )
    }

    /// Time-discrete coefficients for step size `dt`.
    pub fn effective(&self, dt: f64) -> EffectiveStiffness {
        let coeffs: Vec<TrapezoidCoefficients> =
            self.tau.iter().map(|&tau| TrapezoidCoefficients::new(tau, dt)).collect();
        let mut cn_bar = self.cn0();
        let mut cm_bar = self.cm0();
        for ((n, m), c) in self.cn_v.iter().zip(&self.cm_v).zip(&coeffs) {
            cn_bar -= n * c.current;
            cm_bar -= m * c.current;
        }
        EffectiveStiffness { cn_bar, cm_bar, coeffs }
    }
}

/// Trapezoidal-rule coefficients of one branch:
/// `c = dt/(2τ + dt)` and `r = (2τ − dt)/(2τ + dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrapezoidCoefficients {
    pub current: f64,
    pub previous: f64,
}

impl TrapezoidCoefficients {
    pub fn new(tau: f64, dt: f64) -> Self {
        let den = 2.0 * tau + dt;
        Self {
            current: dt / den,
            previous: (2.0 * tau - dt) / den,
        }
    }
}

/// Effective tensors `C̄ = C0 − Σ C^v_α c_α` (diagonals) with the branch coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveStiffness {
    pub cn_bar: Vec3,
    pub cm_bar: Vec3,
    pub coeffs: Vec<TrapezoidCoefficients>,
}

impl EffectiveStiffness {
    pub fn cn_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.cn_bar)
    }

    pub fn cm_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.cm_bar)
    }
}

/// Strain-like quantities at a point: `(Γ, K)` and their arc-length derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StrainSet {
    pub gamma: Vec3,
    pub kappa: Vec3,
    pub gamma_s: Vec3,
    pub kappa_s: Vec3,
}

impl StrainSet {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn max_abs(&self) -> f64 {
        self.gamma
            .amax()
            .max(self.kappa.amax())
            .max(self.gamma_s.amax())
            .max(self.kappa_s.amax())
    }
}

impl Add for StrainSet {
    type Output = StrainSet;
    fn add(self, o: StrainSet) -> StrainSet {
        StrainSet {
            gamma: self.gamma + o.gamma,
            kappa: self.kappa + o.kappa,
            gamma_s: self.gamma_s + o.gamma_s,
            kappa_s: self.kappa_s + o.kappa_s,
        }
    }
}

impl AddAssign for StrainSet {
    fn add_assign(&mut self, o: StrainSet) {
        *self = *self + o;
    }
}

impl Sub for StrainSet {
    type Output = StrainSet;
    fn sub(self, o: StrainSet) -> StrainSet {
        self + o * -1.0
    }
}

impl Mul<f64> for StrainSet {
    type Output = StrainSet;
    fn mul(self, k: f64) -> StrainSet {
        StrainSet {
            gamma: self.gamma * k,
            kappa: self.kappa * k,
            gamma_s: self.gamma_s * k,
            kappa_s: self.kappa_s * k,
        }
    }
}

/// Converged strains of the previous step at one collocation point.
#[derive(Debug, Clone, PartialEq)]
pub struct ViscousHistory {
    /// Total strains `(Γ_N, K_M)` at step n−1.
    pub total: StrainSet,
    /// Viscous strains `(Γ_Nα, K_Mα)` at step n−1, one entry per branch.
    pub viscous: Vec<StrainSet>,
}

impl ViscousHistory {
    /// Virgin material: all strains zero.
    pub fn virgin(branches: usize) -> Self {
        Self {
            total: StrainSet::zeros(),
            viscous: vec![StrainSet::zeros(); branches],
        }
    }
}

/// `β_α^{n−1} = c_α S^{n−1} + r_α S_α^{n−1}` for every branch.
///
/// The recurrence is linear in its strain arguments, so the arc-length
/// derivative parts obey the same formula.
pub fn history_beta(coeffs: &[TrapezoidCoefficients], history: &ViscousHistory) -> Vec<StrainSet> {
    coeffs
        .iter()
        .zip(&history.viscous)
        .map(|(c, v)| history.total * c.current + *v * c.previous)
        .collect()
}

/// `Γ_α^n = c_α Γ^n + β_α^{n−1}` for every branch.
pub fn update_viscous(coeffs: &[TrapezoidCoefficients], total: &StrainSet, beta: &[StrainSet]) -> Vec<StrainSet> {
    coeffs
        .iter()
        .zip(beta)
        .map(|(c, b)| *total * c.current + *b)
        .collect()
}

/// Sums `Σ C^v_α β_α` for forces and couples, values and derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HistoryLoad {
    pub n: Vec3,
    pub n_s: Vec3,
    pub m: Vec3,
    pub m_s: Vec3,
}

impl HistoryLoad {
    pub fn new(stiffness: &SectionStiffness, beta: &[StrainSet]) -> Self {
        let mut out = HistoryLoad::default();
        for ((cn, cm), b) in stiffness.cn_v.iter().zip(&stiffness.cm_v).zip(beta) {
            out.n += cn.component_mul(&b.gamma);
            out.n_s += cn.component_mul(&b.gamma_s);
            out.m += cm.component_mul(&b.kappa);
            out.m_s += cm.component_mul(&b.kappa_s);
        }
        out
    }
}

/// Material force and couple resultants
/// `N = C_N∞ Γ + Σ C^v_α (Γ − Γ_α)`, `M = C_M∞ K + Σ C^v_α (K − K_α)`.
pub fn internal_forces(stiffness: &SectionStiffness, total: &StrainSet, viscous: &[StrainSet]) -> (Vec3, Vec3) {
    let mut n = stiffness.cn_inf.component_mul(&total.gamma);
    let mut m = stiffness.cm_inf.component_mul(&total.kappa);
    for ((cn, cm), v) in stiffness.cn_v.iter().zip(&stiffness.cm_v).zip(viscous) {
        n += cn.component_mul(&(total.gamma - v.gamma));
        m += cm.component_mul(&(total.kappa - v.kappa));
    }
    (n, m)
}

/// Energy dissipated per unit length over one step,
/// `Σ_α dt · ṡ_αᵀ (τ_α C^v_α) ṡ_α` with `ṡ_α = (S_α^n − S_α^{n−1})/dt`.
pub fn dissipation_increment(
    dt: f64,
    stiffness: &SectionStiffness,
    viscous_old: &[StrainSet],
    viscous_new: &[StrainSet],
) -> f64 {
    let mut d = 0.0;
    for (((cn, cm), tau), (old, new)) in stiffness
        .cn_v
        .iter()
        .zip(&stiffness.cm_v)
        .zip(&stiffness.tau)
        .zip(viscous_old.iter().zip(viscous_new))
    {
        let rg = (new.gamma - old.gamma) / dt;
        let rk = (new.kappa - old.kappa) / dt;
        d += dt * tau * (rg.dot(&cn.component_mul(&rg)) + rk.dot(&cm.component_mul(&rk)));
    }
    d
}

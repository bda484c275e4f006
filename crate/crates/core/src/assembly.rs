//! Collocation residuals and their consistent linearization.
//!
//! Unknowns are increments `(δη̌_j, δΘ̌_j)` of every control point, six per
//! control point, patches stacked in order. Row `6i..6i+3` of a patch holds the
//! force equation at collocation point `i`, `6i+3..6i+6` the moment equation;
//! the first and last points carry end or joint conditions instead.
//! Rotation increments are material: `R ← R exp(δΘ̃)`.

use rayon::prelude::*;

use crate::kinematics::{End, PatchState, PointState, ReferencePoint};
use crate::material::{history_beta, HistoryLoad, SectionStiffness, StrainSet, TrapezoidCoefficients};
use crate::scene::{Scene, Support};
use crate::so3::{left_jacobian_inverse, log_map, right_jacobian_inverse, skew, exp_map, Mat3, Vec3};
use crate::{Error, Result};

/// Margin below π at which a rotation residual is considered ambiguous.
pub const BRANCH_MARGIN: f64 = 1e-6;

/// Linearization of a three-row equation at one collocation point.
///
/// `eta[k]` multiplies the k-th arc-length derivative of `δc`, `theta[k]` that of `δΘ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowBlock {
    pub eta: [Mat3; 3],
    pub theta: [Mat3; 3],
    pub residual: Vec3,
}

impl RowBlock {
    pub fn zero() -> Self {
        Self {
            eta: [Mat3::zeros(); 3],
            theta: [Mat3::zeros(); 3],
            residual: Vec3::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointBlocks {
    pub force: RowBlock,
    pub moment: RowBlock,
}

/// Per-step constants of a patch: effective stiffness and history loads.
#[derive(Debug, Clone)]
pub struct PatchStep {
    pub cn: Vec3,
    pub cm: Vec3,
    pub coeffs: Vec<TrapezoidCoefficients>,
    /// `β_α` at each collocation point.
    pub beta: Vec<Vec<StrainSet>>,
    pub load: Vec<HistoryLoad>,
}

impl PatchStep {
    pub fn new(stiffness: &SectionStiffness, state: &PatchState, dt: f64) -> Self {
        let eff = stiffness.effective(dt);
        let beta: Vec<Vec<StrainSet>> = state
            .history
            .iter()
            .map(|h| history_beta(&eff.coeffs, h))
            .collect();
        let load = beta.iter().map(|b| HistoryLoad::new(stiffness, b)).collect();
        Self {
            cn: eff.cn_bar,
            cm: eff.cm_bar,
            coeffs: eff.coeffs,
            beta,
            load,
        }
    }
}

/// Section forces `f = C̄_N Γ − B_N`, `g = C̄_M K − B_M` and their derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionForces {
    pub f: Vec3,
    pub f_s: Vec3,
    pub g: Vec3,
    pub g_s: Vec3,
}

pub fn section_forces(strain: &StrainSet, cn: &Vec3, cm: &Vec3, load: &HistoryLoad) -> SectionForces {
    SectionForces {
        f: cn.component_mul(&strain.gamma) - load.n,
        f_s: cn.component_mul(&strain.gamma_s) - load.n_s,
        g: cm.component_mul(&strain.kappa) - load.m,
        g_s: cm.component_mul(&strain.kappa_s) - load.m_s,
    }
}

fn strain_of(st: &PointState, rp: &ReferencePoint) -> StrainSet {
    crate::kinematics::strain_set(st, rp)
}

/// Balance equations at an interior collocation point,
/// `K̃f + f,s + Rᵀn̄ = 0` and `K̃g + g,s + a × f + Rᵀm̄ = 0`, with their tangent.
pub fn interior_point(
    st: &PointState,
    rp: &ReferencePoint,
    cn: &Vec3,
    cm: &Vec3,
    load: &HistoryLoad,
    nbar: &Vec3,
    mbar: &Vec3,
) -> PointBlocks {
    let s = section_forces(&strain_of(st, rp), cn, cm, load);
    let cn = Mat3::from_diagonal(cn);
    let cm = Mat3::from_diagonal(cm);
    let rt = st.r.transpose();
    let a = st.a();
    let at = skew(&a);
    let kt = skew(&st.k);
    let ft = skew(&s.f);
    let gt = skew(&s.g);
    let rn = rt * nbar;
    let rm = rt * mbar;

    let force = RowBlock {
        residual: st.k.cross(&s.f) + s.f_s + rn,
        eta: [Mat3::zeros(), kt * cn * rt - cn * kt * rt, cn * rt],
        theta: [
            -ft * kt + kt * cn * at + cn * (at * kt - kt * at + skew(&(rt * st.c_ss))) + skew(&rn),
            cn * at - ft,
            Mat3::zeros(),
        ],
    };
    let af = at * cn - ft;
    let moment = RowBlock {
        residual: st.k.cross(&s.g) + s.g_s + a.cross(&s.f) + rm,
        eta: [Mat3::zeros(), af * rt, Mat3::zeros()],
        theta: [
            -gt * kt + kt * cm * kt + cm * skew(&st.k_s) + af * at + skew(&rm),
            -gt + kt * cm + cm * kt,
            cm,
        ],
    };
    PointBlocks { force, moment }
}

/// Natural conditions `σ f = Rᵀn̄_c`, `σ g = Rᵀm̄_c` at an end with outward sign `σ`.
pub fn neumann_point(
    st: &PointState,
    rp: &ReferencePoint,
    cn: &Vec3,
    cm: &Vec3,
    load: &HistoryLoad,
    sign: f64,
    force: &Vec3,
    moment: &Vec3,
) -> PointBlocks {
    let s = section_forces(&strain_of(st, rp), cn, cm, load);
    let cn = Mat3::from_diagonal(cn);
    let cm = Mat3::from_diagonal(cm);
    let rt = st.r.transpose();
    let rn = rt * force;
    let rm = rt * moment;
    PointBlocks {
        force: RowBlock {
            residual: s.f * sign - rn,
            eta: [Mat3::zeros(), cn * rt * sign, Mat3::zeros()],
            theta: [cn * skew(&st.a()) * sign - skew(&rn), Mat3::zeros(), Mat3::zeros()],
        },
        moment: RowBlock {
            residual: s.g * sign - rm,
            eta: [Mat3::zeros(); 3],
            theta: [cm * skew(&st.k) * sign - skew(&rm), cm * sign, Mat3::zeros()],
        },
    }
}

/// Prescribed end displacement: `c − (c₀ + η̄) = 0`.
pub fn dirichlet_translation(position: &Vec3, reference: &Vec3, target: &Vec3) -> RowBlock {
    RowBlock {
        residual: position - reference - target,
        eta: [Mat3::identity(), Mat3::zeros(), Mat3::zeros()],
        theta: [Mat3::zeros(); 3],
    }
}

fn checked_log(r: &Mat3) -> Result<Vec3> {
    let phi = log_map(r);
    let angle = phi.norm();
    if angle > std::f64::consts::PI - BRANCH_MARGIN {
        return Err(Error::BranchAmbiguity { angle });
    }
    Ok(phi)
}

/// Prescribed end rotation `R = exp(θ̄̃) R₀`, enforced as `log(R_targetᵀ R) = 0`.
pub fn dirichlet_rotation(r: &Mat3, r0: &Mat3, target: &Vec3) -> Result<RowBlock> {
    let r_target = exp_map(target) * r0;
    let phi = checked_log(&(r_target.transpose() * r))?;
    Ok(RowBlock {
        residual: phi,
        eta: [Mat3::zeros(); 3],
        theta: [right_jacobian_inverse(&phi), Mat3::zeros(), Mat3::zeros()],
    })
}

/// One patch point's share in an equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub patch: usize,
    pub point: usize,
    pub eta: [Mat3; 3],
    pub theta: [Mat3; 3],
}

impl Term {
    fn of(patch: usize, point: usize, b: &RowBlock) -> Self {
        Self {
            patch,
            point,
            eta: b.eta,
            theta: b.theta,
        }
    }
}

/// Three scalar equations starting at global row `row`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub row: usize,
    pub residual: Vec3,
    pub terms: Vec<Term>,
}

/// Assembled Newton system `A δx = rhs` with `rhs = −residual`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalSystem {
    pub size: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

impl GlobalSystem {
    pub fn residual_norm(&self) -> f64 {
        self.rhs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.size, self.size);
        for &(i, j, v) in &self.triplets {
            a[(i, j)] += v;
        }
        a
    }
}

/// First unknown (and row) of every patch, plus the total count at the end.
pub fn offsets(states: &[PatchState]) -> Vec<usize> {
    let mut out = Vec::with_capacity(states.len() + 1);
    let mut acc = 0;
    out.push(0);
    for s in states {
        acc += 6 * s.n_ctrl();
        out.push(acc);
    }
    out
}

fn end_equations(
    scene: &Scene,
    states: &[PatchState],
    steps: &[PatchStep],
    offs: &[usize],
    p: usize,
    end: End,
    t: f64,
) -> Result<Vec<Equation>> {
    let patch = &scene.patches[p];
    let st = &states[p];
    let i = st.end_index(end);
    let row = offs[p] + 6 * i;
    let bc = patch.bc(end);
    let pt = &st.points[i];
    let rp = &st.refs[i];
    let step = &steps[p];
    let (fc, mc) = match (&bc.translation, &bc.rotation) {
        (Support::Load(f), Support::Load(m)) => (f.at(t), m.at(t)),
        (Support::Load(f), _) => (f.at(t), Vec3::zeros()),
        (_, Support::Load(m)) => (Vec3::zeros(), m.at(t)),
        _ => (Vec3::zeros(), Vec3::zeros()),
    };
    let natural = neumann_point(pt, rp, &step.cn, &step.cm, &step.load[i], end.sign(), &fc, &mc);
    let force = match &bc.translation {
        Support::Load(_) => natural.force,
        Support::Prescribed(d) => {
            dirichlet_translation(&st.end_position(end), &st.reference_end_position(end), &d.at(t))
        }
    };
    let moment = match &bc.rotation {
        Support::Load(_) => natural.moment,
        Support::Prescribed(r) => dirichlet_rotation(&pt.r, &rp.r0, &r.at(t))?,
    };
    Ok(vec![
        Equation { row, residual: force.residual, terms: vec![Term::of(p, i, &force)] },
        Equation { row: row + 3, residual: moment.residual, terms: vec![Term::of(p, i, &moment)] },
    ])
}

fn joint_equations(
    scene: &Scene,
    states: &[PatchState],
    steps: &[PatchStep],
    offs: &[usize],
    k: usize,
    t: f64,
) -> Result<Vec<Equation>> {
    let joint = &scene.joints[k];
    let (p1, e1) = joint.members[0];
    let i1 = states[p1].end_index(e1);
    let row1 = offs[p1] + 6 * i1;

    let mut force = Equation { row: row1, residual: -joint.force.at(t), terms: Vec::new() };
    let mut moment = Equation { row: row1 + 3, residual: -joint.moment.at(t), terms: Vec::new() };
    let mut out = Vec::with_capacity(2 * joint.members.len());
    let r1 = states[p1].points[i1].r;
    let r01 = states[p1].refs[i1].r0;
    let d1 = states[p1].end_position(e1) - states[p1].reference_end_position(e1);

    for (slot, &(p, end)) in joint.members.iter().enumerate() {
        let st = &states[p];
        let i = st.end_index(end);
        let pt = &st.points[i];
        let rp = &st.refs[i];
        let step = &steps[p];
        let sigma = end.sign();
        let s = section_forces(&strain_of(pt, rp), &step.cn, &step.cm, &step.load[i]);
        let cn = Mat3::from_diagonal(&step.cn);
        let cm = Mat3::from_diagonal(&step.cm);
        let r = pt.r;
        force.residual += r * s.f * sigma;
        force.terms.push(Term {
            patch: p,
            point: i,
            eta: [Mat3::zeros(), r * cn * r.transpose() * sigma, Mat3::zeros()],
            theta: [r * (cn * skew(&pt.a()) - skew(&s.f)) * sigma, Mat3::zeros(), Mat3::zeros()],
        });
        moment.residual += r * s.g * sigma;
        moment.terms.push(Term {
            patch: p,
            point: i,
            eta: [Mat3::zeros(); 3],
            theta: [r * (cm * skew(&pt.k) - skew(&s.g)) * sigma, r * cm * sigma, Mat3::zeros()],
        });
        if slot == 0 {
            continue;
        }
        let row = offs[p] + 6 * i;
        let d = st.end_position(end) - st.reference_end_position(end);
        let ident = [Mat3::identity(), Mat3::zeros(), Mat3::zeros()];
        let neg = [-Mat3::identity(), Mat3::zeros(), Mat3::zeros()];
        out.push(Equation {
            row,
            residual: d - d1,
            terms: vec![
                Term { patch: p, point: i, eta: ident, theta: [Mat3::zeros(); 3] },
                Term { patch: p1, point: i1, eta: neg, theta: [Mat3::zeros(); 3] },
            ],
        });
        let g = r01.transpose() * rp.r0;
        let phi = checked_log(&(g.transpose() * r1.transpose() * r))?;
        out.push(Equation {
            row: row + 3,
            residual: phi,
            terms: vec![
                Term {
                    patch: p,
                    point: i,
                    eta: [Mat3::zeros(); 3],
                    theta: [right_jacobian_inverse(&phi), Mat3::zeros(), Mat3::zeros()],
                },
                Term {
                    patch: p1,
                    point: i1,
                    eta: [Mat3::zeros(); 3],
                    theta: [-left_jacobian_inverse(&phi) * g.transpose(), Mat3::zeros(), Mat3::zeros()],
                },
            ],
        });
    }
    out.push(force);
    out.push(moment);
    Ok(out)
}

fn expand(eq: &Equation, states: &[PatchState], offs: &[usize], triplets: &mut Vec<(usize, usize, f64)>) {
    for term in &eq.terms {
        let b = &states[term.patch].basis[term.point];
        let base = offs[term.patch];
        for j in 0..b.len() {
            let w = [b.n[j], b.n_s[j], b.n_ss[j]];
            let me = term.eta[0] * w[0] + term.eta[1] * w[1] + term.eta[2] * w[2];
            let mt = term.theta[0] * w[0] + term.theta[1] * w[1] + term.theta[2] * w[2];
            let col = base + 6 * (b.first + j);
            for r in 0..3 {
                for c in 0..3 {
                    if me[(r, c)] != 0.0 {
                        triplets.push((eq.row + r, col + c, me[(r, c)]));
                    }
                    if mt[(r, c)] != 0.0 {
                        triplets.push((eq.row + r, col + 3 + c, mt[(r, c)]));
                    }
                }
            }
        }
    }
}

/// All equations of the scene at time `t`.
pub fn equations(scene: &Scene, states: &[PatchState], steps: &[PatchStep], t: f64) -> Result<Vec<Equation>> {
    if states.len() != scene.patches.len() || steps.len() != states.len() {
        return Err(Error::Contract("scene, states and step data differ in length".into()));
    }
    let offs = offsets(states);
    let mut eqs: Vec<Equation> = states
        .par_iter()
        .enumerate()
        .flat_map_iter(|(p, st)| {
            let patch = &scene.patches[p];
            let nbar = patch.distributed_force.at(t);
            let mbar = patch.distributed_moment.at(t);
            let step = &steps[p];
            let row0 = offs[p];
            (1..st.points.len() - 1).flat_map(move |i| {
                let b = interior_point(&st.points[i], &st.refs[i], &step.cn, &step.cm, &step.load[i], &nbar, &mbar);
                let row = row0 + 6 * i;
                [
                    Equation { row, residual: b.force.residual, terms: vec![Term::of(p, i, &b.force)] },
                    Equation { row: row + 3, residual: b.moment.residual, terms: vec![Term::of(p, i, &b.moment)] },
                ]
            })
        })
        .collect();
    for p in 0..states.len() {
        for end in [End::Start, End::End] {
            if scene.joint_of(p, end).is_none() {
                eqs.extend(end_equations(scene, states, steps, &offs, p, end, t)?);
            }
        }
    }
    for k in 0..scene.joints.len() {
        eqs.extend(joint_equations(scene, states, steps, &offs, k, t)?);
    }
    Ok(eqs)
}

/// Residual and tangent of the whole scene at time `t`.
pub fn assemble(scene: &Scene, states: &[PatchState], steps: &[PatchStep], t: f64) -> Result<GlobalSystem> {
    let eqs = equations(scene, states, steps, t)?;
    let offs = offsets(states);
    let size = offs[states.len()];
    let chunks: Vec<Vec<(usize, usize, f64)>> = eqs
        .par_chunks(64)
        .map(|chunk| {
            let mut trip = Vec::new();
            for eq in chunk {
                expand(eq, states, &offs, &mut trip);
            }
            trip
        })
        .collect();
    let mut triplets = Vec::with_capacity(chunks.iter().map(Vec::len).sum());
    for c in chunks {
        triplets.extend(c);
    }
    let mut rhs = vec![0.0; size];
    for eq in &eqs {
        for r in 0..3 {
            rhs[eq.row + r] = -eq.residual[r];
        }
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solve("non-finite residual".into()));
    }
    Ok(GlobalSystem { size, triplets, rhs })
}

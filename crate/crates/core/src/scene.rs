//! Multi-patch models: patches, boundary conditions, time-dependent loads,
//! rigid joints, and generators for planar and tubular nets.

use std::f64::consts::PI;

use crate::kinematics::End;
use crate::material::{CrossSection, MaxwellMaterial};
use crate::nurbs::{fit_curve, NurbsCurve};
use crate::so3::Vec3;
use crate::{Error, Result};

/// Tolerance for coincident joint members in the reference configuration [m].
pub const JOINT_TOL: f64 = 1e-8;

/// Piecewise-linear scalar function of time, constant outside its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFunction {
    points: Vec<(f64, f64)>,
}

impl TimeFunction {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("time function needs at least one breakpoint".into()));
        }
        if points.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config("time breakpoints must be strictly increasing".into()));
        }
        if points.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(Error::Config("non-finite time breakpoint".into()));
        }
        Ok(Self { points })
    }

    pub fn constant(v: f64) -> Self {
        Self { points: vec![(0.0, v)] }
    }

    /// 0 at t = 0, rising linearly to 1 at `t1`, then held.
    pub fn ramp(t1: f64) -> Self {
        Self {
            points: vec![(0.0, 0.0), (t1, 1.0)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, t: f64) -> f64 {
        let pts = &self.points;
        if t <= pts[0].0 {
            return pts[0].1;
        }
        if t >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let i = pts.partition_point(|p| p.0 <= t) - 1;
        let (t0, v0) = pts[i];
        let (t1, v1) = pts[i + 1];
        v0 + (v1 - v0) * (t - t0) / (t1 - t0)
    }
}

/// Spatial vector load: a sum of fixed vectors, each scaled by its own time function.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorLoad {
    terms: Vec<(Vec3, TimeFunction)>,
}

impl VectorLoad {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn constant(vector: Vec3) -> Self {
        Self::new(vector, TimeFunction::constant(1.0))
    }

    pub fn new(vector: Vec3, time: TimeFunction) -> Self {
        Self {
            terms: vec![(vector, time)],
        }
    }

    /// Adds another vector with its own time history.
    pub fn plus(mut self, vector: Vec3, time: TimeFunction) -> Self {
        self.terms.push((vector, time));
        self
    }

    pub fn terms(&self) -> &[(Vec3, TimeFunction)] {
        &self.terms
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.terms
            .iter()
            .fold(Vec3::zeros(), |acc, (v, f)| acc + v * f.eval(t))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(v, _)| *v == Vec3::zeros())
    }
}

/// Condition on the translational or the rotational triple of an end.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Applied concentrated force or couple (spatial frame).
    Load(VectorLoad),
    /// Prescribed displacement, or rotation vector applied on top of `R₀`.
    Prescribed(VectorLoad),
}

impl Support {
    pub fn is_prescribed(&self) -> bool {
        matches!(self, Support::Prescribed(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryCondition {
    pub translation: Support,
    pub rotation: Support,
}

impl BoundaryCondition {
    pub fn free() -> Self {
        Self {
            translation: Support::Load(VectorLoad::zero()),
            rotation: Support::Load(VectorLoad::zero()),
        }
    }

    pub fn clamped() -> Self {
        Self {
            translation: Support::Prescribed(VectorLoad::zero()),
            rotation: Support::Prescribed(VectorLoad::zero()),
        }
    }

    pub fn loaded(force: VectorLoad, moment: VectorLoad) -> Self {
        Self {
            translation: Support::Load(force),
            rotation: Support::Load(moment),
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(&self.translation, Support::Load(l) if l.is_zero())
            && matches!(&self.rotation, Support::Load(l) if l.is_zero())
    }
}

/// One beam patch with its own geometry, section and material.
#[derive(Debug, Clone)]
pub struct BeamPatch {
    pub curve: NurbsCurve,
    pub section: CrossSection,
    pub material: MaxwellMaterial,
    /// Initial cross-section director `d₂` at the start of the patch.
    pub director: Option<Vec3>,
    pub start: BoundaryCondition,
    pub end: BoundaryCondition,
    /// Distributed force and couple per unit length (spatial frame).
    pub distributed_force: VectorLoad,
    pub distributed_moment: VectorLoad,
}

impl BeamPatch {
    pub fn new(curve: NurbsCurve, section: CrossSection, material: MaxwellMaterial) -> Self {
        Self {
            curve,
            section,
            material,
            director: None,
            start: BoundaryCondition::free(),
            end: BoundaryCondition::free(),
            distributed_force: VectorLoad::zero(),
            distributed_moment: VectorLoad::zero(),
        }
    }

    pub fn bc(&self, end: End) -> &BoundaryCondition {
        match end {
            End::Start => &self.start,
            End::End => &self.end,
        }
    }

    pub fn bc_mut(&mut self, end: End) -> &mut BoundaryCondition {
        match end {
            End::Start => &mut self.start,
            End::End => &mut self.end,
        }
    }

    pub fn end_point(&self, end: End) -> Vec3 {
        let pts = self.curve.control_points();
        match end {
            End::Start => pts[0],
            End::End => pts[pts.len() - 1],
        }
    }
}

/// Rigid connection between patch ends.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub members: Vec<(usize, End)>,
    pub force: VectorLoad,
    pub moment: VectorLoad,
}

impl Joint {
    pub fn new(members: Vec<(usize, End)>) -> Self {
        Self {
            members,
            force: VectorLoad::zero(),
            moment: VectorLoad::zero(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub patches: Vec<BeamPatch>,
    pub joints: Vec<Joint>,
}

impl Scene {
    pub fn single(patch: BeamPatch) -> Self {
        Self {
            patches: vec![patch],
            joints: Vec::new(),
        }
    }

    /// Checks patch data and joint topology.
    pub fn validate(&self) -> Result<()> {
        if self.patches.is_empty() {
            return Err(Error::Scene("scene has no patches".into()));
        }
        for (i, p) in self.patches.iter().enumerate() {
            p.section.validate().map_err(|e| Error::Scene(format!("patch {i}: {e}")))?;
            p.material.validate().map_err(|e| Error::Scene(format!("patch {i}: {e}")))?;
        }
        let mut used = std::collections::HashSet::new();
        for (k, joint) in self.joints.iter().enumerate() {
            if joint.members.len() < 2 {
                return Err(Error::Scene(format!("joint {k} has fewer than two members")));
            }
            let first = joint.members[0];
            for &(patch, end) in &joint.members {
                let p = self
                    .patches
                    .get(patch)
                    .ok_or_else(|| Error::Scene(format!("joint {k} refers to missing patch {patch}")))?;
                if !used.insert((patch, end)) {
                    return Err(Error::Scene(format!("patch {patch} {end:?} belongs to more than one joint")));
                }
                let bc = p.bc(end);
                if bc.translation.is_prescribed() || bc.rotation.is_prescribed() {
                    return Err(Error::Scene(format!("joint {k}: member {patch} {end:?} also has a prescribed end")));
                }
                let gap = (p.end_point(end) - self.patches[first.0].end_point(first.1)).norm();
                if gap > JOINT_TOL {
                    return Err(Error::SingularGeometry(format!(
                        "joint {k}: member {patch} {end:?} is {gap:e} m away from the first member"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Joint index and member slot of a patch end, if it is joined.
    pub fn joint_of(&self, patch: usize, end: End) -> Option<(usize, usize)> {
        self.joints.iter().enumerate().find_map(|(k, j)| {
            j.members
                .iter()
                .position(|&m| m == (patch, end))
                .map(|slot| (k, slot))
        })
    }

    /// Number of distinct end points minus the patch count plus one: the
    /// number of closed cells of a connected planar network.
    pub fn cell_count(&self) -> usize {
        let mut nodes: Vec<Vec3> = Vec::new();
        for p in &self.patches {
            for end in [End::Start, End::End] {
                let x = p.end_point(end);
                if !nodes.iter().any(|n| (n - x).norm() < JOINT_TOL) {
                    nodes.push(x);
                }
            }
        }
        (self.patches.len() + 1).saturating_sub(nodes.len())
    }
}

/// Groups coincident patch ends into joints, skipping ends with a prescribed condition.
pub fn connect_coincident_ends(patches: &[BeamPatch]) -> Vec<Joint> {
    let mut groups: Vec<(Vec3, Vec<(usize, End)>)> = Vec::new();
    for (i, p) in patches.iter().enumerate() {
        for end in [End::Start, End::End] {
            let bc = p.bc(end);
            if bc.translation.is_prescribed() || bc.rotation.is_prescribed() {
                continue;
            }
            let x = p.end_point(end);
            match groups.iter_mut().find(|(y, _)| (x - *y).norm() < JOINT_TOL) {
                Some((_, members)) => members.push((i, end)),
                None => groups.push((x, vec![(i, end)])),
            }
        }
    }
    groups
        .into_iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|(_, m)| Joint::new(m))
        .collect()
}

/// Least-squares NURBS of a parametric formula on `[a, b]` (endpoints exact).
fn fit_formula<F: Fn(f64) -> Vec3>(f: F, a: f64, b: f64, degree: usize, n_ctrl: usize) -> Result<NurbsCurve> {
    let samples = (8 * n_ctrl).max(200);
    let pts: Vec<(f64, Vec3)> = (0..samples)
        .map(|i| {
            let t = a + (b - a) * i as f64 / (samples - 1) as f64;
            (t, f(t))
        })
        .collect();
    Ok(fit_curve(&pts, degree, n_ctrl)?.curve)
}

/// Discretization and load options shared by the net generators.
#[derive(Debug, Clone, PartialEq)]
pub struct NetOptions {
    pub degree: usize,
    pub n_ctrl: usize,
    /// Magnitude of each concentrated load (N·m for couples, N for forces).
    pub load: f64,
    /// End of the linear load ramp [s].
    pub ramp_end: f64,
}

/// Planar net: `n₁` sinusoidal curves of `n₂` patches each,
/// `c(s) = [1.5 s, −(−1)^k cos s + 2(k−1), 0]` cm on `s ∈ [(j−1)π, jπ]`.
///
/// Neighbouring curves touch at multiples of π; touching ends become joints.
/// The curve starts (x₁ = 0) are clamped and couples about x₁ act on the nodes
/// of the opposite edge.
pub fn build_planar_net(
    n1: usize,
    n2: usize,
    section: CrossSection,
    material: MaxwellMaterial,
    opts: &NetOptions,
) -> Result<Scene> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::Scene("planar net needs n1, n2 >= 1".into()));
    }
    const CM: f64 = 0.01;
    let mut patches = Vec::with_capacity(n1 * n2);
    for k in 1..=n1 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let offset = 2.0 * (k as f64 - 1.0);
        for j in 1..=n2 {
            let formula = |s: f64| Vec3::new(1.5 * s, sign * (s - PI / 2.0).sin() + offset, 0.0) * CM;
            let curve = fit_formula(formula, (j - 1) as f64 * PI, j as f64 * PI, opts.degree, opts.n_ctrl)?;
            let mut patch = BeamPatch::new(curve, section, material.clone());
            patch.director = Some(Vec3::z().cross(&Vec3::x()));
            if j == 1 {
                patch.start = BoundaryCondition::clamped();
            }
            patches.push(patch);
        }
    }
    let mut joints = connect_coincident_ends(&patches);
    let couple = VectorLoad::new(Vec3::new(opts.load, 0.0, 0.0), TimeFunction::ramp(opts.ramp_end));
    let far_edge = |x: &Vec3| (x.x - 1.5 * n2 as f64 * PI * CM).abs() < JOINT_TOL;
    for joint in &mut joints {
        let (p, e) = joint.members[0];
        if far_edge(&patches[p].end_point(e)) {
            joint.moment = couple.clone();
        }
    }
    for k in 0..n1 {
        let idx = k * n2 + n2 - 1;
        let joined = joints.iter().any(|j| j.members.contains(&(idx, End::End)));
        if !joined {
            patches[idx].end = BoundaryCondition::loaded(VectorLoad::zero(), couple.clone());
        }
    }
    let scene = Scene { patches, joints };
    scene.validate()?;
    Ok(scene)
}

/// Node indices of the far (loaded) edge of a planar net.
pub fn planar_net_far_edge(scene: &Scene) -> Vec<(usize, End)> {
    let x_max = scene
        .patches
        .iter()
        .map(|p| p.end_point(End::End).x)
        .fold(f64::MIN, f64::max);
    let mut out = Vec::new();
    for (i, p) in scene.patches.iter().enumerate() {
        let x = p.end_point(End::End);
        if (x.x - x_max).abs() < JOINT_TOL && !out.iter().any(|&(q, e): &(usize, End)| (scene.patches[q].end_point(e) - x).norm() < JOINT_TOL) {
            out.push((i, End::End));
        }
    }
    out
}

/// Tubular net: `wires` helices (half right-, half left-handed) of `n_w`
/// patches each, `c(ϑ) = [(R + r cos(n_w ϑ)) cos ϑ, (R + r cos(n_w ϑ)) sin ϑ, R ϑ tan(π/6)]`
/// with `ϑ ∈ [kπ, (k+1)π]` per patch. Both tube ends are clamped and radial
/// forces act on the joints of the central section.
pub fn build_tubular_net(
    wires: usize,
    n_w: usize,
    big_r: f64,
    small_r: f64,
    section: CrossSection,
    material: MaxwellMaterial,
    opts: &NetOptions,
) -> Result<Scene> {
    if wires < 2 || !wires.is_multiple_of(2) || n_w < 2 || !(big_r > small_r) || !(small_r >= 0.0) {
        return Err(Error::Scene("tubular net needs an even wire count, n_w >= 2 and R > r >= 0".into()));
    }
    let per_hand = wires / 2;
    let pitch = (PI / 6.0).tan();
    let mut patches = Vec::with_capacity(wires * n_w);
    for hand in [1.0, -1.0] {
        for i in 0..per_hand {
            let phase = 2.0 * PI * i as f64 / per_hand as f64;
            for k in 0..n_w {
                let formula = |th: f64| {
                    let rad = big_r + small_r * (th * n_w as f64).cos();
                    let ang = hand * th + phase;
                    Vec3::new(rad * ang.cos(), rad * ang.sin(), big_r * th * pitch)
                };
                let curve = fit_formula(formula, k as f64 * PI, (k + 1) as f64 * PI, opts.degree, opts.n_ctrl)?;
                let mut patch = BeamPatch::new(curve, section, material.clone());
                // radial director keeps d₃ roughly tangent to the tube surface
                let start = formula(k as f64 * PI);
                patch.director = Some(Vec3::new(start.x, start.y, 0.0));
                if k == 0 {
                    patch.start = BoundaryCondition::clamped();
                }
                if k == n_w - 1 {
                    patch.end = BoundaryCondition::clamped();
                }
                patches.push(patch);
            }
        }
    }
    let mut joints = connect_coincident_ends(&patches);
    let z_mid = big_r * (n_w as f64 / 2.0) * PI * pitch;
    for joint in &mut joints {
        let (p, e) = joint.members[0];
        let x = patches[p].end_point(e);
        if (x.z - z_mid).abs() < JOINT_TOL {
            let radial = Vec3::new(x.x, x.y, 0.0).normalize();
            joint.force = VectorLoad::new(radial * opts.load, TimeFunction::ramp(opts.ramp_end));
        }
    }
    let scene = Scene { patches, joints };
    scene.validate()?;
    Ok(scene)
}

/// Joints carrying the radial loads of a tubular net.
pub fn tubular_net_central_joints(scene: &Scene) -> Vec<usize> {
    scene
        .joints
        .iter()
        .enumerate()
        .filter(|(_, j)| !j.force.is_zero())
        .map(|(k, _)| k)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::MaxwellBranch;

    fn pla() -> MaxwellMaterial {
        MaxwellMaterial::new(2.8e5, 0.4, vec![MaxwellBranch { modulus: 3.61e7, tau: 0.2 }]).unwrap()
    }

    fn coarse() -> NetOptions {
        NetOptions {
            degree: 4,
            n_ctrl: 8,
            load: 1e-4,
            ramp_end: 6.0,
        }
    }

    #[test]
    fn time_function_interpolates() {
        let f = TimeFunction::new(vec![(0.0, 0.0), (1.0, 2.0), (3.0, 2.0), (4.0, -1.0)]).unwrap();
        assert_eq!(f.eval(-1.0), 0.0);
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(2.0), 2.0);
        assert_eq!(f.eval(3.5), 0.5);
        assert_eq!(f.eval(10.0), -1.0);
        assert_eq!(f.eval(1.0), 2.0);
        assert!(TimeFunction::new(vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
        assert_eq!(TimeFunction::ramp(2.0).eval(1.0), 0.5);
    }

    /// Independent count of nodes and joints of the planar net: curve k touches
    /// curve k+1 at s = mπ when k + m is odd ... shifted by one (k odd touches at even m).
    fn planar_counts(n1: usize, n2: usize) -> (usize, usize, usize) {
        let touches = |k: usize, m: usize| k < n1 && (k % 2 == 1) == m.is_multiple_of(2);
        let mut joints = 0;
        let mut two_member = 0;
        for m in 1..=n2 {
            for k in 1..=n1 {
                let up = touches(k, m);
                let down = k > 1 && touches(k - 1, m);
                if down {
                    continue; // counted with the lower curve
                }
                if up {
                    joints += 1;
                } else if m < n2 {
                    joints += 1;
                    two_member += 1;
                }
            }
        }
        let mut nodes = n1 * (n2 + 1);
        for m in 0..=n2 {
            for k in 1..n1 {
                if touches(k, m) {
                    nodes -= 1;
                }
            }
        }
        let cells = n1 * n2 + 1 - nodes;
        (joints, two_member, cells)
    }

    #[test]
    fn miniature_planar_net_counts() {
        let scene = build_planar_net(2, 2, CrossSection::circle(1.3e-3), pla(), &coarse()).unwrap();
        assert_eq!(scene.patches.len(), 4);
        let (joints, two, cells) = planar_counts(2, 2);
        assert_eq!(scene.joints.len(), joints);
        assert_eq!(scene.joints.iter().filter(|j| j.members.len() == 2).count(), two + 1);
        assert_eq!(scene.cell_count(), cells);
        assert_eq!(cells, 1);
    }

    #[test]
    fn paper_planar_net_has_36_patches_and_13_cells() {
        let scene = build_planar_net(6, 6, CrossSection::circle(1.3e-3), pla(), &coarse()).unwrap();
        assert_eq!(scene.patches.len(), 36);
        assert_eq!(scene.cell_count(), 13);
        let (joints, _, cells) = planar_counts(6, 6);
        assert_eq!(cells, 13);
        assert_eq!(scene.joints.len(), joints);
        let loaded = scene.joints.iter().filter(|j| !j.moment.is_zero()).count();
        assert_eq!(loaded, 3);
        for j in &scene.joints {
            let x0 = scene.patches[j.members[0].0].end_point(j.members[0].1);
            for &(p, e) in &j.members {
                assert!((scene.patches[p].end_point(e) - x0).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn tubular_net_geometry() {
        let (big_r, small_r) = (4e-2, 6.5e-4);
        let opts = NetOptions { load: 1.0, ramp_end: 1.15, ..coarse() };
        let scene = build_tubular_net(12, 4, big_r, small_r, CrossSection::circle(1.3e-3), pla(), &opts).unwrap();
        assert_eq!(scene.patches.len(), 48);
        // 6 nodes per interior section, three interior sections, four members each
        assert_eq!(scene.joints.len(), 18);
        assert!(scene.joints.iter().all(|j| j.members.len() == 4));
        assert_eq!(tubular_net_central_joints(&scene).len(), 6);
        for p in &scene.patches {
            for end in [End::Start, End::End] {
                let x = p.end_point(end);
                // patch ends sit where cos(n_w ϑ) = 1
                let rho = (x.x * x.x + x.y * x.y).sqrt();
                assert!((rho - (big_r + small_r)).abs() < 1e-10);
            }
        }
        let mini = build_tubular_net(6, 4, big_r, small_r, CrossSection::circle(1.3e-3), pla(), &opts).unwrap();
        assert_eq!(mini.patches.len(), 24);
        mini.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_joints() {
        let line = crate::nurbs::make_line(Vec3::zeros(), Vec3::x()).unwrap();
        let other = crate::nurbs::make_line(Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0)).unwrap();
        let sec = CrossSection::square(0.1);
        let mat = MaxwellMaterial::elastic(1.0, 0.0);
        let mut scene = Scene {
            patches: vec![BeamPatch::new(line, sec, mat.clone()), BeamPatch::new(other, sec, mat)],
            joints: vec![Joint::new(vec![(0, End::End), (1, End::Start)])],
        };
        assert!(matches!(scene.validate(), Err(Error::SingularGeometry(_))));
        scene.joints = vec![Joint::new(vec![(0, End::End)])];
        assert!(scene.validate().is_err());
    }
}

//! Implicit time stepping with Newton iterations and viscous history updates.

use crate::assembly::{assemble, offsets, GlobalSystem, PatchStep};
use crate::kinematics::PatchState;
use crate::linalg::solve;
use crate::material::{dissipation_increment, update_viscous, SectionStiffness};
use crate::scene::Scene;
use crate::so3::{log_map, Mat3, Vec3};
use crate::{Error, Result};

/// Smallest homotopy increment tried before giving up on a step.
const MIN_HOMOTOPY_STEP: f64 = 1.0 / 256.0;
/// Safety factor on the round-off estimate of a residual row.
const ROUNDOFF_FACTOR: f64 = 64.0;
/// Newton gives up once the residual exceeds its initial value by this factor.
const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub dt: f64,
    pub t_end: f64,
    /// Newton stops when the max-norm of the increment or of the residual drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Recover from a failed Newton solve: first by continuation within the
    /// step, then by retrying as two half steps.
    pub substep_on_failure: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            t_end: 1.0,
            tol: 1e-10,
            max_iter: 50,
            substep_on_failure: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Config(format!("end time must be non-negative, got {}", self.t_end)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("tolerance and iteration limit must be positive".into()));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t_end]`, the last one possibly shorter.
    pub fn step_count(&self) -> usize {
        let n = self.t_end / self.dt;
        let r = n.round();
        if (n - r).abs() < 1e-9 * n.max(1.0) {
            r as usize
        } else {
            n.ceil() as usize
        }
    }
}

/// Observation point on a patch at normalized parameter `u ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub name: String,
    pub patch: usize,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub iterations: usize,
    pub residual: f64,
    /// 1 for a regular step, 2 when it was split after a failure.
    pub substeps: usize,
    /// Energy dissipated during the step [J].
    pub dissipation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub step: usize,
    pub t: f64,
    pub probe: usize,
    pub u: f64,
    pub position: Vec3,
    pub displacement: Vec3,
    /// Rotation vector accumulated step by step, so angles past π keep growing.
    pub rotation: Vec3,
    pub iterations: usize,
    /// Cumulative dissipated energy [J].
    pub dissipation: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeHistory {
    pub probes: Vec<Probe>,
    pub samples: Vec<ProbeSample>,
    pub steps: Vec<StepReport>,
}

impl TimeHistory {
    /// Samples of one probe in time order.
    pub fn series(&self, probe: usize) -> impl Iterator<Item = &ProbeSample> {
        self.samples.iter().filter(move |s| s.probe == probe)
    }
}

struct NewtonOutcome {
    iterations: usize,
    residual: f64,
}

#[derive(Debug, Clone)]
struct ProbeTracker {
    site: usize,
    previous: Mat3,
    accumulated: Vec3,
}

/// A scene being integrated in time.
#[derive(Debug, Clone)]
pub struct Simulation {
    scene: Scene,
    settings: SolverSettings,
    states: Vec<PatchState>,
    stiffness: Vec<SectionStiffness>,
    probes: Vec<Probe>,
    trackers: Vec<ProbeTracker>,
    time: f64,
    step: usize,
    dissipation: f64,
}

impl Simulation {
    pub fn new(scene: Scene, settings: SolverSettings) -> Result<Self> {
        scene.validate()?;
        settings.validate()?;
        let states = scene
            .patches
            .iter()
            .map(|p| PatchState::new(&p.curve, p.director, p.material.branches.len()))
            .collect::<Result<Vec<_>>>()?;
        let stiffness = scene
            .patches
            .iter()
            .map(|p| SectionStiffness::new(&p.material, &p.section))
            .collect();
        Ok(Self {
            scene,
            settings,
            states,
            stiffness,
            probes: Vec::new(),
            trackers: Vec::new(),
            time: 0.0,
            step: 0,
            dissipation: 0.0,
        })
    }

    pub fn add_probe(&mut self, probe: Probe) -> Result<usize> {
        let st = self
            .states
            .get(probe.patch)
            .ok_or_else(|| Error::Config(format!("probe '{}' refers to missing patch {}", probe.name, probe.patch)))?;
        if !(0.0..=1.0).contains(&probe.u) {
            return Err(Error::Config(format!("probe '{}': u = {} outside [0, 1]", probe.name, probe.u)));
        }
        let u = self.parameter(probe.patch, probe.u);
        let site = st
            .sites
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - u).abs().total_cmp(&(b.1 - u).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.trackers.push(ProbeTracker {
            site,
            previous: st.points[site].r,
            accumulated: Vec3::zeros(),
        });
        self.probes.push(probe);
        Ok(self.probes.len() - 1)
    }

    fn parameter(&self, patch: usize, u: f64) -> f64 {
        let k = self.states[patch].curve.knots();
        k.first() + (k.last() - k.first()) * u
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn states(&self) -> &[PatchState] {
        &self.states
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn dissipation(&self) -> f64 {
        self.dissipation
    }

    pub fn unknowns(&self) -> usize {
        offsets(&self.states)[self.states.len()]
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.settings.step_count()
    }

    /// Current and reference position at normalized parameter `u` of a patch.
    pub fn point(&self, patch: usize, u: f64) -> Result<(Vec3, Vec3)> {
        let st = self
            .states
            .get(patch)
            .ok_or_else(|| Error::Contract(format!("no patch {patch}")))?;
        let s = self.parameter(patch, u.clamp(0.0, 1.0));
        Ok((st.curve.point(s)?, st.reference_curve.point(s)?))
    }

    pub fn displacement(&self, patch: usize, u: f64) -> Result<Vec3> {
        let (x, x0) = self.point(patch, u)?;
        Ok(x - x0)
    }

    /// Sampled centroid lines of all patches.
    pub fn polylines(&self, samples: usize) -> Result<Vec<Vec<Vec3>>> {
        let samples = samples.max(2);
        (0..self.states.len())
            .map(|p| {
                (0..samples)
                    .map(|k| self.point(p, k as f64 / (samples - 1) as f64).map(|x| x.0))
                    .collect()
            })
            .collect()
    }

    pub fn probe_sample(&self, index: usize, iterations: usize) -> Result<ProbeSample> {
        let probe = self
            .probes
            .get(index)
            .ok_or_else(|| Error::Contract(format!("no probe {index}")))?;
        let (x, x0) = self.point(probe.patch, probe.u)?;
        Ok(ProbeSample {
            step: self.step,
            t: self.time,
            probe: index,
            u: probe.u,
            position: x,
            displacement: x - x0,
            rotation: self.trackers[index].accumulated,
            iterations,
            dissipation: self.dissipation,
        })
    }

    /// Newton iteration; `shift = (r₀, w)` solves `R(x) = w r₀` instead of `R(x) = 0`.
    fn newton(&mut self, t_new: f64, steps: &[PatchStep], shift: Option<(&[f64], f64)>) -> Result<NewtonOutcome> {
        let mut trail = Vec::new();
        for iter in 0..self.settings.max_iter {
            let mut sys = match assemble(&self.scene, &self.states, steps, t_new) {
                Ok(s) => s,
                Err(e @ (Error::Solve(_) | Error::BranchAmbiguity { .. })) => {
                    trail.push(f64::NAN);
                    return Err(self.nonconvergence(t_new, trail, Some(e)));
                }
                Err(e) => return Err(e),
            };
            if let Some((r0, w)) = shift {
                // rhs holds −R
                sys.rhs.iter_mut().zip(r0).for_each(|(b, a)| *b -= w * a);
            }
            let res = sys.residual_norm();
            trail.push(res);
            if !res.is_finite() || res > DIVERGENCE_FACTOR * trail[0].max(self.settings.tol) {
                return Err(self.nonconvergence(t_new, trail, None));
            }
            if iter > 0 && (res <= self.settings.tol || self.at_roundoff_floor(&sys)) {
                return Ok(NewtonOutcome { iterations: iter, residual: res });
            }
            let dx = match solve(sys.size, &sys.triplets, &sys.rhs) {
                Ok((x, _)) => x,
                Err(e) => return Err(self.nonconvergence(t_new, trail, Some(e))),
            };
            let offs = offsets(&self.states);
            for (p, st) in self.states.iter_mut().enumerate() {
                let block = &dx[offs[p]..offs[p + 1]];
                let eta: Vec<Vec3> = block.chunks(6).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
                let theta: Vec<Vec3> = block.chunks(6).map(|c| Vec3::new(c[3], c[4], c[5])).collect();
                st.apply_increment(&eta, &theta);
            }
            let inc = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if inc <= self.settings.tol {
                return Ok(NewtonOutcome { iterations: iter + 1, residual: res });
            }
        }
        Err(self.nonconvergence(t_new, trail, None))
    }

    /// Newton solve of one step. On failure the step is re-solved along the
    /// residual homotopy `R(x) − (1 − λ) R(x₀)`, with `x₀` the start-of-step
    /// state and adaptive increments of `λ`: whatever changes over the step
    /// (loads, history, prescribed motion) is phased in gradually. The last
    /// stage, `λ = 1`, solves exactly the original equations.
    fn solve_step(&mut self, t_new: f64, steps: &[PatchStep]) -> Result<NewtonOutcome> {
        let start = self.states.clone();
        let err = match self.newton(t_new, steps, None) {
            Err(e @ Error::Nonconvergence { .. }) if self.settings.substep_on_failure => e,
            other => return other,
        };
        self.states = start;
        let r0 = assemble(&self.scene, &self.states, steps, t_new)?.rhs;
        let (mut lambda, mut h, mut iterations) = (0.0f64, 0.5f64, 0usize);
        loop {
            let target = (lambda + h).min(1.0);
            let shift = (target < 1.0).then_some((r0.as_slice(), 1.0 - target));
            let saved = self.states.clone();
            match self.newton(t_new, steps, shift) {
                Ok(out) => {
                    iterations += out.iterations;
                    if target >= 1.0 {
                        return Ok(NewtonOutcome { iterations, residual: out.residual });
                    }
                    lambda = target;
                    h = (2.0 * h).min(1.0 - lambda);
                }
                Err(Error::Nonconvergence { .. }) => {
                    self.states = saved;
                    h *= 0.5;
                    if h < MIN_HOMOTOPY_STEP {
                        return Err(err);
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// True when every residual row is below the tolerance or within
    /// round-off of zero. A row's floor is `ε Σ_j |A_ij| |x_j|`, with `|x_j|`
    /// the size of the coordinates for translations and 1 for rotations:
    /// stiff, finely resolved patches far from the origin cannot reach an
    /// absolute 1e-10 in double precision.
    fn at_roundoff_floor(&self, sys: &GlobalSystem) -> bool {
        let offs = offsets(&self.states);
        let mut scale = vec![1.0; sys.size];
        for (p, st) in self.states.iter().enumerate() {
            let size = st
                .curve
                .control_points()
                .iter()
                .chain(st.reference_curve.control_points())
                .fold(0.0f64, |m, c| m.max(c.amax()));
            for j in 0..st.n_ctrl() {
                for k in 0..3 {
                    scale[offs[p] + 6 * j + k] = size.max(1.0);
                }
            }
        }
        let mut floor = vec![0.0; sys.size];
        for &(i, j, v) in &sys.triplets {
            floor[i] += v.abs() * scale[j];
        }
        sys.rhs
            .iter()
            .zip(&floor)
            .all(|(r, f)| r.abs() <= self.settings.tol.max(ROUNDOFF_FACTOR * f64::EPSILON * f))
    }

    fn nonconvergence(&self, t: f64, residuals: Vec<f64>, _cause: Option<Error>) -> Error {
        Error::Nonconvergence {
            step: self.step + 1,
            time: t,
            residuals,
        }
    }

    /// Stores the converged strains as history and returns the step's dissipation.
    fn advance_history(&mut self, dt: f64, steps: &[PatchStep]) -> f64 {
        let mut dissipated = 0.0;
        for ((st, step), stiff) in self.states.iter_mut().zip(steps).zip(&self.stiffness) {
            let weights = st.arc_length_weights();
            for i in 0..st.points.len() {
                let total = crate::kinematics::strain_set(&st.points[i], &st.refs[i]);
                let viscous = update_viscous(&step.coeffs, &total, &step.beta[i]);
                dissipated += weights[i] * dissipation_increment(dt, stiff, &st.history[i].viscous, &viscous);
                st.history[i].total = total;
                st.history[i].viscous = viscous;
            }
        }
        dissipated
    }

    fn single_step(&mut self, t_new: f64) -> Result<(NewtonOutcome, f64)> {
        let dt = t_new - self.time;
        let steps: Vec<PatchStep> = self
            .states
            .iter()
            .zip(&self.stiffness)
            .map(|(st, s)| PatchStep::new(s, st, dt))
            .collect();
        let out = self.solve_step(t_new, &steps)?;
        let d = self.advance_history(dt, &steps);
        self.time = t_new;
        Ok((out, d))
    }

    fn update_trackers(&mut self) {
        for (tr, probe) in self.trackers.iter_mut().zip(&self.probes) {
            let r = self.states[probe.patch].points[tr.site].r;
            tr.accumulated += log_map(&(r * tr.previous.transpose()));
            tr.previous = r;
        }
    }

    /// Advances one time step (see [`SolverSettings::substep_on_failure`]).
    pub fn step(&mut self) -> Result<StepReport> {
        // step times are multiples of dt (no accumulated round-off); the
        // last step is shortened to land on t_end
        let target = if self.step + 1 >= self.settings.step_count() {
            self.settings.t_end
        } else {
            (self.step + 1) as f64 * self.settings.dt
        };
        let snapshot = (self.states.clone(), self.time);
        let report = match self.single_step(target) {
            Ok((out, d)) => StepReport {
                step: self.step + 1,
                t: self.time,
                iterations: out.iterations,
                residual: out.residual,
                substeps: 1,
                dissipation: d,
            },
            Err(err @ Error::Nonconvergence { .. }) if self.settings.substep_on_failure => {
                self.states = snapshot.0;
                self.time = snapshot.1;
                let first = self.single_step(0.5 * (self.time + target));
                let (a, da) = first.map_err(|_| err)?;
                self.update_trackers();
                let (b, db) = self.single_step(target)?;
                StepReport {
                    step: self.step + 1,
                    t: self.time,
                    iterations: a.iterations + b.iterations,
                    residual: b.residual,
                    substeps: 2,
                    dissipation: da + db,
                }
            }
            Err(e) => {
                self.states = snapshot.0;
                self.time = snapshot.1;
                return Err(e);
            }
        };
        self.update_trackers();
        self.dissipation += report.dissipation;
        self.step += 1;
        Ok(report)
    }

    /// Runs to the end time, sampling every probe after each step.
    pub fn run(&mut self) -> Result<TimeHistory> {
        self.run_with(|_, _| {})
    }

    /// Like [`Simulation::run`] with a callback after every step.
    pub fn run_with<F: FnMut(&Simulation, &StepReport)>(&mut self, mut observe: F) -> Result<TimeHistory> {
        let mut hist = TimeHistory {
            probes: self.probes.clone(),
            ..Default::default()
        };
        if self.step == 0 {
            for k in 0..self.probes.len() {
                hist.samples.push(self.probe_sample(k, 0)?);
            }
        }
        while !self.is_finished() {
            let report = self.step()?;
            for k in 0..self.probes.len() {
                hist.samples.push(self.probe_sample(k, report.iterations)?);
            }
            observe(self, &report);
            hist.steps.push(report);
        }
        Ok(hist)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{CrossSection, MaxwellBranch, MaxwellMaterial};
    use crate::nurbs::make_line;
    use crate::scene::{BeamPatch, BoundaryCondition, TimeFunction, VectorLoad};
    use approx::assert_relative_eq;

    fn cantilever(material: MaxwellMaterial, tip: VectorLoad) -> Scene {
        let curve = make_line(Vec3::zeros(), Vec3::x()).unwrap().refine_to(4, 16).unwrap();
        let mut p = BeamPatch::new(curve, CrossSection::square(0.1), material);
        p.start = BoundaryCondition::clamped();
        p.end = BoundaryCondition::loaded(tip, VectorLoad::zero());
        Scene::single(p)
    }

    fn run_tip(scene: Scene, settings: SolverSettings) -> (Simulation, TimeHistory) {
        let mut sim = Simulation::new(scene, settings).unwrap();
        sim.add_probe(Probe { name: "tip".into(), patch: 0, u: 1.0 }).unwrap();
        let h = sim.run().unwrap();
        (sim, h)
    }

    #[test]
    fn small_load_matches_euler_bernoulli_plus_shear() {
        let mat = MaxwellMaterial::elastic(1e7, 0.3);
        let f = 1e-3;
        let settings = SolverSettings { dt: 1.0, t_end: 1.0, ..Default::default() };
        let (sim, h) = run_tip(cantilever(mat.clone(), VectorLoad::constant(Vec3::new(0.0, 0.0, f))), settings);
        let sec = CrossSection::square(0.1);
        let g = mat.shear_modulus(mat.e_inf);
        let expected = f / (3.0 * mat.e_inf * sec.inertia_2) + f / (g * sec.shear_area_3);
        let tip = h.series(0).last().unwrap().displacement;
        assert_relative_eq!(tip.z, expected, max_relative = 1e-6);
        assert_eq!(sim.step_index(), 1);
    }

    #[test]
    fn creep_approaches_the_long_term_stiffness() {
        // standard linear solid: instantaneous modulus E∞ + E₁, relaxed E∞
        let mat = MaxwellMaterial::new(1e6, 0.0, vec![MaxwellBranch { modulus: 3e6, tau: 0.2 }]).unwrap();
        let f = 1e-4;
        // retardation time τ(E∞ + E₁)/E∞ = 0.8 s; run 20 of them
        let settings = SolverSettings { dt: 0.05, t_end: 16.0, ..Default::default() };
        let (sim, h) = run_tip(cantilever(mat, VectorLoad::constant(Vec3::new(0.0, 0.0, f))), settings);
        let sec = CrossSection::square(0.1);
        let w = |e: f64| f / (3.0 * e * sec.inertia_2) + f / (e / 2.0 * sec.shear_area_3);
        let series: Vec<f64> = h.series(0).map(|s| s.displacement.z).collect();
        // first implicit step sees E∞ + E₁(1 − c) with c = dt/(2τ + dt)
        let c = 0.05 / (0.4 + 0.05);
        assert_relative_eq!(series[1], w(1e6 + 3e6 * (1.0 - c)), max_relative = 1e-6);
        assert_relative_eq!(*series.last().unwrap(), w(1e6), max_relative = 1e-6);
        assert!(series.windows(2).all(|p| p[1] >= p[0] - 1e-15), "creep is monotone");
        assert!(sim.dissipation() > 0.0);
    }

    #[test]
    fn elastic_material_does_not_dissipate() {
        let load = VectorLoad::new(Vec3::new(0.0, 0.0, 2e2), TimeFunction::ramp(0.5));
        let settings = SolverSettings { dt: 0.1, t_end: 1.0, ..Default::default() };
        let (sim, h) = run_tip(cantilever(MaxwellMaterial::elastic(1e7, 0.3), load), settings);
        assert_eq!(sim.dissipation(), 0.0);
        assert!(h.steps.iter().all(|s| s.iterations >= 1 && s.iterations < 20));
        assert_eq!(h.steps.len(), 10);
    }

    #[test]
    fn step_count_handles_round_off() {
        let s = SolverSettings { dt: 0.1, t_end: 0.3, ..Default::default() };
        assert_eq!(s.step_count(), 3);
        let s = SolverSettings { dt: 0.25, t_end: 0.6, ..Default::default() };
        assert_eq!(s.step_count(), 3);
    }
}

//! TOML run configuration.
//!
//! A config either names a builtin benchmark with its parameter table or lists
//! patches explicitly. Unknown keys are rejected everywhere. The manifest
//! written next to every run is a config of the first kind with all
//! parameters resolved, so it can be fed back to `viscobeam run`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::benchmarks::{build_resolved, resolve, Params};
use crate::kinematics::End;
use crate::material::{CrossSection, MaxwellMaterial};
use crate::nurbs::{fit_points, make_arc, make_line, KnotVector, NurbsCurve};
use crate::scene::{BeamPatch, BoundaryCondition, Joint, Scene, Support, TimeFunction, VectorLoad};
use crate::so3::{exp_map, Vec3};
use crate::solver::{Probe, SolverSettings};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Recorded for randomized property tests; runs themselves are deterministic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub geometry: GeometryConfig,
    /// Replaces the section of every patch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionConfig>,
    /// Replaces the material of every patch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaxwellMaterial>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeometryConfig {
    Builtin {
        benchmark: String,
        #[serde(default)]
        params: Params,
    },
    Patches {
        patches: Vec<PatchConfig>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        joints: Vec<JointConfig>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Time step [s]; builtin benchmarks default to their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// End time [s].
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_true")]
    pub substep_on_failure: bool,
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    50
}

fn default_true() -> bool {
    true
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: None,
            t_end: None,
            tol: default_tol(),
            max_iter: default_max_iter(),
            substep_on_failure: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub name: String,
    pub patch: usize,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Points per patch in polyline snapshots.
    #[serde(default = "default_samples")]
    pub polyline_samples: usize,
    /// Times [s] at which to write extra polyline snapshots.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
}

fn default_samples() -> usize {
    50
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            polyline_samples: default_samples(),
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum SectionConfig {
    /// `width` along d₂, `height` along d₃ [m].
    Rectangle { width: f64, height: f64 },
    Square { side: f64 },
    Circle { diameter: f64 },
    Custom {
        area: f64,
        shear_area_2: f64,
        shear_area_3: f64,
        torsion: f64,
        inertia_2: f64,
        inertia_3: f64,
    },
}

impl SectionConfig {
    pub fn build(&self) -> Result<CrossSection> {
        let s = match *self {
            SectionConfig::Rectangle { width, height } => CrossSection::rectangle(width, height),
            SectionConfig::Square { side } => CrossSection::square(side),
            SectionConfig::Circle { diameter } => CrossSection::circle(diameter),
            SectionConfig::Custom { area, shear_area_2, shear_area_3, torsion, inertia_2, inertia_3 } => CrossSection {
                area,
                shear_area_2,
                shear_area_3,
                torsion,
                inertia_2,
                inertia_3,
            },
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CurveConfig {
    Line {
        from: [f64; 3],
        to: [f64; 3],
    },
    /// Arc in the x1-x2 plane from `(radius, 0, 0)`, then rotated by the
    /// rotation vector `rotation` and shifted by `shift`.
    Arc {
        radius: f64,
        angle: f64,
        #[serde(default)]
        rotation: [f64; 3],
        #[serde(default)]
        shift: [f64; 3],
    },
    Nurbs {
        degree: usize,
        knots: Vec<f64>,
        points: Vec<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Least-squares fit through points with chord-length parameters.
    Fit {
        points: Vec<[f64; 3]>,
        degree: usize,
        n: usize,
    },
}

impl CurveConfig {
    pub fn build(&self) -> Result<NurbsCurve> {
        let v = |a: &[f64; 3]| Vec3::new(a[0], a[1], a[2]);
        match self {
            CurveConfig::Line { from, to } => make_line(v(from), v(to)),
            CurveConfig::Arc { radius, angle, rotation, shift } => {
                Ok(make_arc(*radius, *angle)?.transformed(&exp_map(&v(rotation)), &v(shift)))
            }
            CurveConfig::Nurbs { degree, knots, points, weights } => {
                let pts: Vec<Vec3> = points.iter().map(v).collect();
                let w = weights.clone().unwrap_or_else(|| vec![1.0; pts.len()]);
                NurbsCurve::new(*degree, KnotVector::new(knots.clone(), *degree)?, pts, w)
            }
            CurveConfig::Fit { points, degree, n } => {
                let pts: Vec<Vec3> = points.iter().map(v).collect();
                Ok(fit_points(&pts, *degree, *n)?.curve)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineConfig {
    pub degree: usize,
    pub n: usize,
}

/// A vector scaled by a piecewise-linear time function given as `[t, value]`
/// pairs (constant 1 when omitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub vector: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<Vec<[f64; 2]>>,
}

impl LoadConfig {
    pub fn build(&self) -> Result<VectorLoad> {
        let time = match &self.time {
            None => TimeFunction::constant(1.0),
            Some(points) => TimeFunction::new(points.iter().map(|p| (p[0], p[1])).collect())?,
        };
        Ok(VectorLoad::new(Vec3::new(self.vector[0], self.vector[1], self.vector[2]), time))
    }
}

fn load(opt: &Option<LoadConfig>) -> Result<VectorLoad> {
    opt.as_ref().map(LoadConfig::build).unwrap_or_else(|| Ok(VectorLoad::zero()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SupportConfig {
    /// Concentrated force (translation) or couple (rotation) [N, N·m].
    Load {
        vector: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time: Option<Vec<[f64; 2]>>,
    },
    /// Displacement [m] or rotation vector [rad] relative to the reference.
    Prescribed {
        vector: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        time: Option<Vec<[f64; 2]>>,
    },
}

impl SupportConfig {
    fn build(&self) -> Result<Support> {
        Ok(match self {
            SupportConfig::Load { vector, time } => Support::Load(LoadConfig { vector: *vector, time: time.clone() }.build()?),
            SupportConfig::Prescribed { vector, time } => {
                Support::Prescribed(LoadConfig { vector: *vector, time: time.clone() }.build()?)
            }
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    #[serde(default)]
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<SupportConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<SupportConfig>,
}

impl BcConfig {
    fn build(&self) -> Result<BoundaryCondition> {
        if self.clamped {
            if self.translation.is_some() || self.rotation.is_some() {
                return Err(Error::Config("a clamped end cannot also list translation/rotation".into()));
            }
            return Ok(BoundaryCondition::clamped());
        }
        let mut bc = BoundaryCondition::free();
        if let Some(t) = &self.translation {
            bc.translation = t.build()?;
        }
        if let Some(r) = &self.rotation {
            bc.rotation = r.build()?;
        }
        Ok(bc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchConfig {
    pub curve: CurveConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<RefineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<SectionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<MaxwellMaterial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub director: Option<[f64; 3]>,
    #[serde(default)]
    pub start: BcConfig,
    #[serde(default)]
    pub end: BcConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributed_force: Option<LoadConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distributed_moment: Option<LoadConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub members: Vec<(usize, End)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force: Option<LoadConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moment: Option<LoadConfig>,
}

/// Everything a run needs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub name: String,
    pub scene: Scene,
    pub settings: SolverSettings,
    pub probes: Vec<Probe>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Config of a builtin benchmark with every parameter resolved.
    pub fn for_benchmark(name: &str, overrides: &Params) -> Result<Self> {
        let params = resolve(name, overrides)?;
        let bench = build_resolved(name, &params)?;
        Ok(Self {
            name: Some(name.to_string()),
            seed: None,
            geometry: GeometryConfig::Builtin { benchmark: name.to_string(), params },
            section: None,
            material: None,
            solver: SolverConfig {
                dt: Some(bench.settings.dt),
                t_end: Some(bench.settings.t_end),
                ..Default::default()
            },
            probes: bench
                .probes
                .iter()
                .map(|p| ProbeConfig { name: p.name.clone(), patch: p.patch, u: p.u })
                .collect(),
            output: OutputConfig::default(),
        })
    }

    /// Builds scene, solver settings and probes.
    pub fn prepare(&self) -> Result<Prepared> {
        let (mut scene, mut settings, default_probes, name) = match &self.geometry {
            GeometryConfig::Builtin { benchmark, params } => {
                let b = build_resolved(benchmark, &resolve(benchmark, params)?)?;
                (b.scene, b.settings, b.probes, benchmark.clone())
            }
            GeometryConfig::Patches { patches, joints } => {
                let scene = self.explicit_scene(patches, joints)?;
                let settings = SolverSettings {
                    dt: self.solver.dt.ok_or_else(|| Error::Config("solver.dt is required".into()))?,
                    t_end: self.solver.t_end.ok_or_else(|| Error::Config("solver.T is required".into()))?,
                    ..Default::default()
                };
                let probes = scene
                    .patches
                    .iter()
                    .enumerate()
                    .map(|(i, _)| Probe { name: format!("patch-{i}-end"), patch: i, u: 1.0 })
                    .collect();
                (scene, settings, probes, "custom".to_string())
            }
        };
        if let Some(dt) = self.solver.dt {
            settings.dt = dt;
        }
        if let Some(t) = self.solver.t_end {
            settings.t_end = t;
        }
        settings.tol = self.solver.tol;
        settings.max_iter = self.solver.max_iter;
        settings.substep_on_failure = self.solver.substep_on_failure;
        settings.validate()?;
        if let Some(s) = &self.section {
            let s = s.build()?;
            scene.patches.iter_mut().for_each(|p| p.section = s);
        }
        if let Some(m) = &self.material {
            m.validate()?;
            scene.patches.iter_mut().for_each(|p| p.material = m.clone());
        }
        scene.validate().map_err(|e| match e {
            Error::Scene(m) => Error::Config(m),
            other => other,
        })?;
        let probes = if self.probes.is_empty() {
            default_probes
        } else {
            self.probes
                .iter()
                .map(|p| Probe { name: p.name.clone(), patch: p.patch, u: p.u })
                .collect()
        };
        if self.output.polyline_samples < 2 {
            return Err(Error::Config("output.polyline_samples must be at least 2".into()));
        }
        Ok(Prepared {
            name: self.name.clone().unwrap_or(name),
            scene,
            settings,
            probes,
        })
    }

    fn explicit_scene(&self, patches: &[PatchConfig], joints: &[JointConfig]) -> Result<Scene> {
        if patches.is_empty() {
            return Err(Error::Config("geometry lists no patches".into()));
        }
        let mut out = Vec::with_capacity(patches.len());
        for (i, pc) in patches.iter().enumerate() {
            let ctx = |e: Error| Error::Config(format!("patch {i}: {e}"));
            let mut curve = pc.curve.build().map_err(ctx)?;
            if let Some(r) = pc.refine {
                curve = curve.refine_to(r.degree, r.n).map_err(ctx)?;
            }
            let section = pc
                .section
                .as_ref()
                .or(self.section.as_ref())
                .ok_or_else(|| Error::Config(format!("patch {i}: no section given")))?
                .build()
                .map_err(ctx)?;
            let material = pc
                .material
                .clone()
                .or_else(|| self.material.clone())
                .ok_or_else(|| Error::Config(format!("patch {i}: no material given")))?;
            material.validate().map_err(ctx)?;
            let mut patch = BeamPatch::new(curve, section, material);
            patch.director = pc.director.map(|d| Vec3::new(d[0], d[1], d[2]));
            patch.start = pc.start.build().map_err(ctx)?;
            patch.end = pc.end.build().map_err(ctx)?;
            patch.distributed_force = load(&pc.distributed_force).map_err(ctx)?;
            patch.distributed_moment = load(&pc.distributed_moment).map_err(ctx)?;
            out.push(patch);
        }
        let joints = joints
            .iter()
            .map(|j| {
                let mut joint = Joint::new(j.members.clone());
                joint.force = load(&j.force)?;
                joint.moment = load(&j.moment)?;
                Ok(joint)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene { patches: out, joints })
    }
}

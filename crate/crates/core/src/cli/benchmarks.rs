//! Builtin benchmark problems with their default parameters.
//!
//! Every benchmark is described by a flat parameter table. Defaults depend
//! only on `phase` where a benchmark has one; overrides must name existing keys.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use toml::Value;

use crate::kinematics::End;
use crate::material::{CrossSection, MaxwellBranch, MaxwellMaterial};
use crate::nurbs::{arc_length_samples, fit_curve, make_arc, make_line, NurbsCurve};
use crate::scene::{
    build_planar_net, build_tubular_net, BeamPatch, BoundaryCondition, NetOptions, Scene, TimeFunction, VectorLoad,
};
use crate::solver::{Probe, SolverSettings};
use crate::so3::Vec3;
use crate::{Error, Result};

pub type Params = BTreeMap<String, Value>;

pub const NAMES: [&str; 8] = [
    "rollup",
    "cantilever-tip",
    "arch-linear",
    "arch-complex",
    "spivak",
    "lissajous",
    "planar-net",
    "tubular-net",
];

/// A fully specified run.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: String,
    pub params: Params,
    pub scene: Scene,
    pub settings: SolverSettings,
    pub probes: Vec<Probe>,
}

/// Material of the roll-up, cantilever and linear-arch tests.
pub fn rollup_material(tau: f64) -> MaxwellMaterial {
    MaxwellMaterial {
        e_inf: 40.0,
        nu: 0.0,
        branches: vec![MaxwellBranch { modulus: 530.0, tau }],
    }
}

/// Nine-branch Prony series of the complex arch and the Spivak beam.
pub fn prony9_material() -> MaxwellMaterial {
    let table = [
        (2.977e8, 0.092),
        (6.363e7, 0.981),
        (1.583e8, 9.527),
        (1.811e8, 94.318),
        (2.388e8, 920.660),
        (2.780e8, 8.998e3),
        (3.277e8, 8.685e4),
        (3.228e8, 8.514e5),
        (4.047e8, 7.740e6),
    ];
    MaxwellMaterial {
        e_inf: 1.419e9,
        nu: 0.4,
        branches: table
            .iter()
            .map(|&(modulus, tau)| MaxwellBranch { modulus, tau })
            .collect(),
    }
}

/// PLA with a single Maxwell branch.
pub fn pla_material() -> MaxwellMaterial {
    MaxwellMaterial {
        e_inf: 2.80e5,
        nu: 0.4,
        branches: vec![MaxwellBranch { modulus: 3.61e7, tau: 0.2 }],
    }
}

fn float(v: f64) -> Value {
    Value::Float(v)
}

fn int(v: i64) -> Value {
    Value::Integer(v)
}

fn string(v: &str) -> Value {
    Value::String(v.to_string())
}

fn phase_of(name: &str, overrides: &Params) -> Result<String> {
    let phase = match overrides.get("phase") {
        None => "instantaneous".to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(v) => return Err(Error::Config(format!("{name}: phase must be a string, got {v}"))),
    };
    match phase.as_str() {
        "instantaneous" | "long-term" => Ok(phase),
        _ => Err(Error::Config(format!(
            "{name}: phase must be 'instantaneous' or 'long-term', got '{phase}'"
        ))),
    }
}

/// Default parameters of a benchmark (phase-dependent entries use the
/// phase found in `overrides`).
pub fn defaults(name: &str, overrides: &Params) -> Result<Params> {
    let mut p = Params::new();
    let mut set = |k: &str, v: Value| {
        p.insert(k.to_string(), v);
    };
    match name {
        "rollup" => {
            let long = phase_of(name, overrides)? == "long-term";
            set("phase", string(if long { "long-term" } else { "instantaneous" }));
            set("p", int(8));
            set("n", int(30));
            set("length", float(1.0));
            set("side", float(0.1));
            set("tau", float(if long { 0.05 } else { 5000.0 }));
            set("dt", float(if long { 5.0 } else { 1e-4 }));
            set("ramp_steps", int(1));
            set("T", float(if long { 3000.0 } else { 1e-4 }));
        }
        "cantilever-tip" => {
            set("p", int(6));
            set("n", int(30));
            set("tau", float(0.1));
            set("dt", float(1e-3));
            set("T", float(4.0));
            set("force", float(4e-4));
            set("load_start", float(1.79));
            set("load_ramp", float(0.05));
        }
        "arch-linear" => {
            let long = phase_of(name, overrides)? == "long-term";
            set("phase", string(if long { "long-term" } else { "instantaneous" }));
            set("p", int(8));
            set("n", int(40));
            set("radius", float(1.0));
            set("side", float(0.1));
            set("force", float(1e-8));
            set("tau", float(if long { 0.05 } else { 5000.0 }));
            set("dt", float(if long { 0.1 } else { 1e-4 }));
            set("T", float(if long { 20.0 } else { 1e-4 }));
        }
        "arch-complex" => {
            set("p", int(6));
            set("n", int(50));
            set("dt", float(1e-3));
            set("T", float(4.0));
            set("force", float(5e3));
            set("moment", float(5e3));
        }
        "spivak" => {
            set("p", int(8));
            set("n", int(100));
            set("dt", float(1e-2));
            set("T", float(4.0));
            set("force2", float(5e3));
            set("force3", float(5e3));
        }
        "lissajous" => {
            set("p", int(8));
            set("n", int(100));
            set("dt", float(1e-3));
            set("T", float(4.0));
            set("moment", float(0.5));
            set("force", float(0.1));
        }
        "planar-net" => {
            set("n1", int(6));
            set("n2", int(6));
            set("p", int(8));
            set("n", int(35));
            set("dt", float(0.05));
            set("T", float(8.0));
            set("couple", float(9e-6));
            set("ramp", float(6.0));
        }
        "tubular-net" => {
            set("wires", int(12));
            set("n_w", int(4));
            set("p", int(8));
            set("n", int(20));
            set("big_r", float(4e-2));
            set("small_r", float(6.5e-4));
            set("dt", float(5e-2));
            set("T", float(6.0));
            set("force", float(1.0));
            set("ramp", float(1.15));
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown benchmark '{name}' (available: {})",
                NAMES.join(", ")
            )))
        }
    }
    Ok(p)
}

/// Defaults merged with overrides; unknown keys and type changes are rejected.
pub fn resolve(name: &str, overrides: &Params) -> Result<Params> {
    let mut p = defaults(name, overrides)?;
    for (k, v) in overrides {
        let old = p
            .get(k)
            .ok_or_else(|| Error::Config(format!("benchmark '{name}' has no parameter '{k}'")))?;
        let v = match (old, v) {
            (Value::Float(_), Value::Integer(i)) => Value::Float(*i as f64),
            (Value::Float(_), Value::Float(_)) | (Value::Integer(_), Value::Integer(_)) | (Value::String(_), Value::String(_)) => {
                v.clone()
            }
            _ => {
                return Err(Error::Config(format!(
                    "benchmark '{name}': parameter '{k}' expects {}, got {v}",
                    old.type_str()
                )))
            }
        };
        p.insert(k.clone(), v);
    }
    Ok(p)
}

/// Parses `key=value`; the value is read as a TOML scalar, falling back to a bare string.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (k, v) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{text}' is not of the form key=value")))?;
    let key = k.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override '{text}' has an empty key")));
    }
    let raw = v.trim();
    let value = toml::from_str::<BTreeMap<String, Value>>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut m| m.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

struct Reader<'a> {
    name: &'a str,
    params: &'a Params,
}

impl Reader<'_> {
    fn f64(&self, key: &str) -> Result<f64> {
        match self.params.get(key) {
            Some(Value::Float(v)) if v.is_finite() => Ok(*v),
            Some(Value::Integer(v)) => Ok(*v as f64),
            _ => Err(Error::Config(format!("{}: parameter '{key}' must be a finite number", self.name))),
        }
    }

    fn positive(&self, key: &str) -> Result<f64> {
        let v = self.f64(key)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Config(format!("{}: parameter '{key}' must be positive, got {v}", self.name)))
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        match self.params.get(key) {
            Some(Value::Integer(v)) if *v >= 0 => Ok(*v as usize),
            _ => Err(Error::Config(format!("{}: parameter '{key}' must be a non-negative integer", self.name))),
        }
    }

    fn str(&self, key: &str) -> Result<&str> {
        match self.params.get(key) {
            Some(Value::String(s)) => Ok(s),
            _ => Err(Error::Config(format!("{}: parameter '{key}' must be a string", self.name))),
        }
    }

    fn settings(&self) -> Result<SolverSettings> {
        let s = SolverSettings {
            dt: self.positive("dt")?,
            t_end: self.positive("T")?,
            ..Default::default()
        };
        s.validate()?;
        Ok(s)
    }

    fn refinement(&self) -> Result<(usize, usize)> {
        let p = self.usize("p")?;
        let n = self.usize("n")?;
        if p < 2 || n < p + 1 {
            return Err(Error::Config(format!(
                "{}: need p >= 2 and n >= p + 1 (got p = {p}, n = {n})",
                self.name
            )));
        }
        Ok((p, n))
    }
}

fn tip_probe(patch: usize) -> Probe {
    Probe { name: "tip".into(), patch, u: 1.0 }
}

/// Curve through `samples` (arc-length parameterized) with the given refinement.
fn fitted(samples: &[(f64, Vec3)], p: usize, n: usize) -> Result<NurbsCurve> {
    Ok(fit_curve(samples, p, n)?.curve)
}

/// Spivak curve: `[s, 0, e^{−1/s²}]` for s < 0 and `[s, e^{−1/s²}, 0]` for s > 0.
pub fn spivak_point(s: f64) -> Vec3 {
    let bump = if s == 0.0 { 0.0 } else { (-1.0 / (s * s)).exp() };
    if s < 0.0 {
        Vec3::new(s, 0.0, bump)
    } else {
        Vec3::new(s, bump, 0.0)
    }
}

fn spivak_tangent(s: f64) -> Vec3 {
    let d = if s == 0.0 { 0.0 } else { 2.0 / (s * s * s) * (-1.0 / (s * s)).exp() };
    if s < 0.0 {
        Vec3::new(1.0, 0.0, d)
    } else {
        Vec3::new(1.0, d, 0.0)
    }
}

/// Arc-length samples of the Spivak curve on `[−2, 3]`; the origin is sampled exactly.
pub fn spivak_samples(count: usize) -> Vec<(f64, Vec3)> {
    let half = count / 2;
    let mut left = arc_length_samples(spivak_point, spivak_tangent, (-2.0, 0.0), half.max(3), 16);
    let right = arc_length_samples(spivak_point, spivak_tangent, (0.0, 3.0), (count - half).max(3), 16);
    let offset = left.last().map(|s| s.0).unwrap_or(0.0);
    left.extend(right.into_iter().skip(1).map(|(l, x)| (l + offset, x)));
    left
}

pub fn lissajous_point(s: f64) -> Vec3 {
    Vec3::new((3.0 * s).cos(), (2.0 * s).sin(), (7.0 * s).sin())
}

fn lissajous_tangent(s: f64) -> Vec3 {
    Vec3::new(-3.0 * (3.0 * s).sin(), 2.0 * (2.0 * s).cos(), 7.0 * (7.0 * s).cos())
}

pub fn lissajous_samples(count: usize) -> Vec<(f64, Vec3)> {
    arc_length_samples(lissajous_point, lissajous_tangent, (-PI / 3.0, PI / 3.0), count, 16)
}

/// Builds a benchmark from resolved parameters.
pub fn build_resolved(name: &str, params: &Params) -> Result<Benchmark> {
    let r = Reader { name, params };
    let settings = r.settings()?;
    let (scene, probes) = match name {
        "rollup" => {
            let (p, n) = r.refinement()?;
            let length = r.positive("length")?;
            let side = r.positive("side")?;
            let material = rollup_material(r.positive("tau")?);
            let section = CrossSection::square(side);
            let long = r.str("phase")? == "long-term";
            let e = if long { material.e_inf } else { material.e0() };
            let couple = 2.0 * PI * e * section.inertia_2 / length;
            let ramp = r.usize("ramp_steps")?.max(1) as f64 * settings.dt;
            let curve = make_line(Vec3::zeros(), Vec3::new(length, 0.0, 0.0))?.refine_to(p, n)?;
            let mut patch = BeamPatch::new(curve, section, material);
            patch.start = BoundaryCondition::clamped();
            patch.end = BoundaryCondition::loaded(
                VectorLoad::zero(),
                VectorLoad::new(Vec3::new(0.0, couple, 0.0), TimeFunction::ramp(ramp)),
            );
            let probes = vec![
                Probe { name: "root".into(), patch: 0, u: 0.0 },
                Probe { name: "third".into(), patch: 0, u: 1.0 / 3.0 },
                Probe { name: "two-thirds".into(), patch: 0, u: 2.0 / 3.0 },
                tip_probe(0),
            ];
            (Scene::single(patch), probes)
        }
        "cantilever-tip" => {
            let (p, n) = r.refinement()?;
            let t0 = r.f64("load_start")?;
            let ramp = r.positive("load_ramp")?;
            let curve = make_line(Vec3::zeros(), Vec3::x())?.refine_to(p, n)?;
            let mut patch = BeamPatch::new(curve, CrossSection::square(0.1), rollup_material(r.positive("tau")?));
            patch.start = BoundaryCondition::clamped();
            let time = if t0 > 0.0 {
                TimeFunction::new(vec![(0.0, 0.0), (t0, 0.0), (t0 + ramp, 1.0)])?
            } else {
                TimeFunction::ramp(ramp)
            };
            patch.end = BoundaryCondition::loaded(
                VectorLoad::new(Vec3::new(0.0, 0.0, r.f64("force")?), time),
                VectorLoad::zero(),
            );
            (Scene::single(patch), vec![tip_probe(0)])
        }
        "arch-linear" | "arch-complex" => {
            let (p, n) = r.refinement()?;
            let complex = name == "arch-complex";
            let (radius, side, material) = if complex {
                (1.0, 0.1, prony9_material())
            } else {
                (r.positive("radius")?, r.positive("side")?, rollup_material(r.positive("tau")?))
            };
            let curve = make_arc(radius, FRAC_PI_2)?.refine_to(p, n)?;
            let mut patch = BeamPatch::new(curve, CrossSection::square(side), material);
            patch.start = BoundaryCondition::clamped();
            patch.end = if complex {
                // forces and couples along x2 and x3, reversed through zero at t = 2 s
                let f = r.f64("force")?;
                let m = r.f64("moment")?;
                let pattern = TimeFunction::new(vec![
                    (0.0, 0.0),
                    (0.5, 1.0),
                    (1.999, 1.0),
                    (2.001, -1.0),
                    (3.0, -1.0),
                    (3.5, -0.5),
                ])?;
                BoundaryCondition::loaded(
                    VectorLoad::new(Vec3::new(0.0, f, f), pattern.clone()),
                    VectorLoad::new(Vec3::new(0.0, m, -m), pattern),
                )
            } else {
                BoundaryCondition::loaded(VectorLoad::constant(Vec3::new(0.0, 0.0, r.f64("force")?)), VectorLoad::zero())
            };
            (Scene::single(patch), vec![tip_probe(0)])
        }
        "spivak" => {
            let (p, n) = r.refinement()?;
            let curve = fitted(&spivak_samples((40 * n).max(2000)), p, n)?;
            let mut patch = BeamPatch::new(curve, CrossSection::square(0.2), prony9_material());
            patch.start = BoundaryCondition::clamped();
            // F2 is applied first and removed, F3 follows and is held
            let force = VectorLoad::new(
                Vec3::new(0.0, r.f64("force2")?, 0.0),
                TimeFunction::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 1.0), (2.5, 0.0)])?,
            )
            .plus(
                Vec3::new(0.0, 0.0, r.f64("force3")?),
                TimeFunction::new(vec![(0.0, 0.0), (1.0, 0.0), (2.0, 1.0)])?,
            );
            patch.end = BoundaryCondition::loaded(force, VectorLoad::zero());
            (Scene::single(patch), vec![tip_probe(0)])
        }
        "lissajous" => {
            let (p, n) = r.refinement()?;
            let curve = fitted(&lissajous_samples((40 * n).max(2000)), p, n)?;
            let mut patch = BeamPatch::new(curve, CrossSection::circle(0.12), pla_material());
            patch.start = BoundaryCondition::clamped();
            let t1 = 4.0 / 3.0;
            let t2 = 8.0 / 3.0;
            patch.end = BoundaryCondition::loaded(
                VectorLoad::new(
                    Vec3::new(r.f64("force")?, 0.0, 0.0),
                    TimeFunction::new(vec![(0.0, 0.0), (t1, 0.0), (t2, 1.0)])?,
                ),
                VectorLoad::new(Vec3::new(0.0, 0.0, -r.f64("moment")?), TimeFunction::ramp(t1)),
            );
            (Scene::single(patch), vec![tip_probe(0)])
        }
        "planar-net" => {
            let (p, n) = r.refinement()?;
            let opts = NetOptions {
                degree: p,
                n_ctrl: n,
                load: r.f64("couple")?,
                ramp_end: r.positive("ramp")?,
            };
            let scene = build_planar_net(r.usize("n1")?, r.usize("n2")?, CrossSection::circle(1.3e-3), pla_material(), &opts)?;
            let probes = crate::scene::planar_net_far_edge(&scene)
                .into_iter()
                .enumerate()
                .map(|(k, (patch, _))| Probe { name: format!("edge-{k}"), patch, u: 1.0 })
                .collect();
            (scene, probes)
        }
        "tubular-net" => {
            let (p, n) = r.refinement()?;
            let opts = NetOptions {
                degree: p,
                n_ctrl: n,
                load: r.f64("force")?,
                ramp_end: r.positive("ramp")?,
            };
            let scene = build_tubular_net(
                r.usize("wires")?,
                r.usize("n_w")?,
                r.positive("big_r")?,
                r.f64("small_r")?,
                CrossSection::circle(1.3e-3),
                pla_material(),
                &opts,
            )?;
            let probes = crate::scene::tubular_net_central_joints(&scene)
                .into_iter()
                .enumerate()
                .map(|(k, j)| {
                    let (patch, end) = scene.joints[j].members[0];
                    Probe {
                        name: format!("centre-{k}"),
                        patch,
                        u: if end == End::Start { 0.0 } else { 1.0 },
                    }
                })
                .collect();
            (scene, probes)
        }
        _ => return Err(Error::Config(format!("unknown benchmark '{name}'"))),
    };
    Ok(Benchmark {
        name: name.to_string(),
        params: params.clone(),
        scene,
        settings,
        probes,
    })
}

/// Resolves overrides and builds the benchmark.
pub fn build(name: &str, overrides: &Params) -> Result<Benchmark> {
    let params = resolve(name, overrides)?;
    build_resolved(name, &params)
}

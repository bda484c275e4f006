//! Error measures against exact references and refinement studies.

use std::f64::consts::PI;

use rayon::prelude::*;
use toml::Value;

use super::benchmarks::{build, Params};
use crate::material::{CrossSection, MaxwellMaterial};
use crate::so3::Vec3;
use crate::solver::Simulation;
use crate::{Error, Result};

/// Circumradius of three points.
pub fn circle_radius_from_axis(points: [Vec3; 3]) -> Result<f64> {
    let [a, b, c] = points;
    let ab = b - a;
    let ac = c - a;
    let bc = c - b;
    let area2 = ab.cross(&ac).norm();
    let scale = ab.norm() * ac.norm();
    if !(area2 > 1e-14 * scale) {
        return Err(Error::SingularGeometry("circle through collinear points".into()));
    }
    Ok(ab.norm() * ac.norm() * bc.norm() / (2.0 * area2))
}

/// Roll-up errors after the run: tip distance from the clamped end and the
/// relative radius error from three equally spaced axis points.
pub fn rollup_errors(sim: &Simulation, length: f64) -> Result<(f64, f64)> {
    let root = sim.point(0, 0.0)?.0;
    let tip = sim.point(0, 1.0)?.0;
    let r = circle_radius_from_axis([root, sim.point(0, 1.0 / 3.0)?.0, sim.point(0, 2.0 / 3.0)?.0])?;
    let err_tip = (tip - root).norm();
    let err_radius = 2.0 * PI * (r - length / (2.0 * PI)).abs() / length;
    Ok((err_tip, err_radius))
}

/// Small-displacement tip deflection of a quarter-circle arch under an
/// out-of-plane tip force, for moduli `e` and `g`.
pub fn arch_tip_deflection(force: f64, radius: f64, section: &CrossSection, e: f64, g: f64) -> f64 {
    PI * force * radius / (2.0 * g * section.shear_area_3)
        + force * radius.powi(3) / (g * section.torsion) * (0.75 * PI - 2.0)
        + PI * force * radius.powi(3) / (4.0 * e * section.inertia_2)
}

/// Reference arch deflection for the instantaneous (`E₀`, `G₀`) or relaxed (`E∞`, `G∞`) response.
pub fn arch_reference(material: &MaxwellMaterial, section: &CrossSection, force: f64, radius: f64, long_term: bool) -> f64 {
    let e = if long_term { material.e_inf } else { material.e0() };
    arch_tip_deflection(force, radius, section, e, material.shear_modulus(e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub p: usize,
    pub n: usize,
    pub err_tip: f64,
    /// Roll-up radius error; absent for the arch.
    pub err_radius: Option<f64>,
    /// Relative tip error for the arch; absent for the roll-up.
    pub err_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorReport {
    pub benchmark: String,
    pub rows: Vec<ErrorRow>,
}

impl ErrorReport {
    pub fn for_degree(&self, p: usize) -> impl Iterator<Item = &ErrorRow> {
        self.rows.iter().filter(move |r| r.p == p)
    }
}

fn level(name: &str, p: usize, n: usize, overrides: &Params) -> Result<ErrorRow> {
    let mut ov = overrides.clone();
    ov.insert("p".into(), Value::Integer(p as i64));
    ov.insert("n".into(), Value::Integer(n as i64));
    let bench = build(name, &ov)?;
    let patch = bench.scene.patches[0].clone();
    let mut sim = Simulation::new(bench.scene, bench.settings)?;
    sim.run()?;
    match name {
        "rollup" => {
            let length = match bench.params.get("length") {
                Some(Value::Float(l)) => *l,
                _ => 1.0,
            };
            let (err_tip, err_radius) = rollup_errors(&sim, length)?;
            Ok(ErrorRow { p, n, err_tip, err_radius: Some(err_radius), err_rel: None })
        }
        "arch-linear" => {
            let get = |k: &str| match bench.params.get(k) {
                Some(Value::Float(v)) => *v,
                _ => f64::NAN,
            };
            let long = matches!(bench.params.get("phase"), Some(Value::String(s)) if s == "long-term");
            let v = arch_reference(&patch.material, &patch.section, get("force"), get("radius"), long);
            let tip = sim.displacement(0, 1.0)?;
            let err_tip = (tip.z - v).abs();
            Ok(ErrorRow { p, n, err_tip, err_radius: None, err_rel: Some(err_tip / v.abs()) })
        }
        _ => Err(Error::Config(format!(
            "benchmark '{name}' has no exact reference; convergence studies support rollup and arch-linear"
        ))),
    }
}

/// Runs every `(p, n)` level (concurrently) and tabulates the errors.
pub fn convergence_study(name: &str, degrees: &[usize], ns: &[usize], overrides: &Params) -> Result<ErrorReport> {
    if !matches!(name, "rollup" | "arch-linear") {
        return Err(Error::Config(format!(
            "benchmark '{name}' has no exact reference; convergence studies support rollup and arch-linear"
        )));
    }
    if degrees.is_empty() || ns.is_empty() {
        return Err(Error::Config("convergence study needs at least one degree and one n".into()));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("n values must be strictly increasing".into()));
    }
    let levels: Vec<(usize, usize)> = degrees
        .iter()
        .flat_map(|&p| ns.iter().filter(move |&&n| n > p).map(move |&n| (p, n)))
        .collect();
    if levels.is_empty() {
        return Err(Error::Config("every n is too small for the requested degrees".into()));
    }
    let rows = levels
        .par_iter()
        .map(|&(p, n)| level(name, p, n, overrides))
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport { benchmark: name.to_string(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn circumradius_of_exact_circle() {
        let r = 0.37;
        let on = |a: f64| Vec3::new(r * a.cos(), r * a.sin(), 0.0);
        let got = circle_radius_from_axis([on(0.1), on(1.7), on(4.0)]).unwrap();
        assert!((got - r).abs() < 1e-15);
    }

    #[test]
    fn circumradius_is_stable_under_small_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let on = |a: f64| Vec3::new(a.cos(), a.sin(), 0.0);
        for _ in 0..100 {
            let mut pts = [on(0.0), on(2.0 * PI / 3.0), on(4.0 * PI / 3.0)];
            for p in &mut pts {
                *p += Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * 1e-8;
            }
            assert!((circle_radius_from_axis(pts).unwrap() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn collinear_points_are_rejected() {
        let pts = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(matches!(circle_radius_from_axis(pts), Err(Error::SingularGeometry(_))));
    }

    #[test]
    fn single_level_study_returns_one_row() {
        let mut ov = Params::new();
        ov.insert("phase".into(), Value::String("long-term".into()));
        let rep = convergence_study("arch-linear", &[6], &[16], &ov).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.rows[0].err_rel.unwrap() < 1e-3, "{:?}", rep.rows[0]);
    }
}

//! Plain-text outputs: probe histories, polyline snapshots, error tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::study::ErrorReport;
use crate::solver::{Simulation, TimeHistory};
use crate::Result;

pub const PROBE_HEADER: &str =
    "step,t[s],probe,u,x1[m],x2[m],x3[m],rot1[rad],rot2[rad],rot3[rad],iterations,dissipation[J]";

pub const ERROR_HEADER: &str = "p,n,err_tip,err_radius,err_rel";

/// Probe history as CSV; `x1..x3` are displacements from the reference
/// position, `rot1..rot3` the accumulated rotation vector.
pub fn probe_csv(history: &TimeHistory) -> String {
    let mut s = String::with_capacity(128 * (history.samples.len() + 1));
    s.push_str(PROBE_HEADER);
    s.push('\n');
    for r in &history.samples {
        let _ = writeln!(
            s,
            "{},{:e},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{},{:e}",
            r.step,
            r.t,
            history.probes[r.probe].name,
            r.u,
            r.displacement.x,
            r.displacement.y,
            r.displacement.z,
            r.rotation.x,
            r.rotation.y,
            r.rotation.z,
            r.iterations,
            r.dissipation
        );
    }
    s
}

/// Current centrelines, one `x y z` line per point and a blank line between patches.
pub fn polylines_text(sim: &Simulation, samples: usize) -> Result<String> {
    let mut s = String::new();
    for (i, line) in sim.polylines(samples)?.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        for p in line {
            let _ = writeln!(s, "{:e} {:e} {:e}", p.x, p.y, p.z);
        }
    }
    Ok(s)
}

pub fn errors_csv(report: &ErrorReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut s = String::from(ERROR_HEADER);
    s.push('\n');
    for r in &report.rows {
        let _ = writeln!(s, "{},{},{:e},{},{}", r.p, r.n, r.err_tip, opt(r.err_radius), opt(r.err_rel));
    }
    s
}

pub fn write(dir: &Path, file: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(file), contents)?;
    Ok(())
}

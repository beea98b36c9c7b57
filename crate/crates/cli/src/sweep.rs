use std::path::Path;

use cohflux::coupling::condition_residuals;
use cohflux::protocol::{build_joint_states, overlap_to_ideal, WindowSpec};
use rayon::prelude::*;

use crate::config::{Experiment, ProfileSpec, SweepSpec};
use crate::error::{CliError, CliResult};
use crate::output::fmt_f64;
use crate::run::run_protocol;

pub const COLUMNS: [&str; 13] = [
    "n", "N", "sigma", "epsilon", "r1", "r2", "r3", "overlap", "bound", "r2_bound", "r3_bound",
    "holds", "error",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub sigma: Option<f64>,
    pub point: Result<SweepPoint, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub big_n: usize,
    pub epsilon: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub overlap: f64,
    pub bound: f64,
    pub r2_bound: f64,
    pub r3_bound: f64,
    pub holds: bool,
}

fn evaluate(exp: &Experiment, n: usize, profile: ProfileSpec) -> CliResult<SweepPoint> {
    let c = &exp.coupling;
    let w = WindowSpec::new(n, c.f_max() as usize)?;
    let proto = run_protocol(c, &w, profile)?;
    let r = condition_residuals(&proto.forward);
    let (psi, _) = build_joint_states(c, c.u(), &w)?;
    let o = overlap_to_ideal(&psi, &exp.p, &w);
    let fm = w.f_max as f64;
    let r2_bound = (8.0 * proto.epsilon).sqrt() * fm * (fm + 1.0);
    let r3_bound = proto.epsilon / 2.0;
    let tol = exp.default_tolerance;
    let holds = o.overlap >= o.bound - tol
        && r.r1 <= tol
        && r.r2 <= r2_bound + tol
        && r.r3 <= r3_bound + tol;
    Ok(SweepPoint {
        big_n: w.big_n,
        epsilon: proto.epsilon,
        r1: r.r1,
        r2: r.r2,
        r3: r.r3,
        overlap: o.overlap,
        bound: o.bound,
        r2_bound,
        r3_bound,
        holds,
    })
}

/// One row per sweep point, in sweep order; failed points keep their error.
pub fn sweep(exp: &Experiment) -> CliResult<Vec<SweepRow>> {
    let points: Vec<(usize, Option<f64>)> = match &exp.raw.sweep {
        Some(SweepSpec::N([start, stop, step])) => {
            (*start..=*stop).step_by(*step).map(|n| (n, None)).collect()
        }
        Some(SweepSpec::Sigma(sigmas)) => sigmas.iter().map(|&s| (exp.n(), Some(s))).collect(),
        None => return Err(CliError::Config("sweep: missing; give {\"n\": [start, stop, step]} or {\"sigma\": [...]}".into())),
    };
    Ok(points
        .into_par_iter()
        .map(|(n, sigma)| {
            let profile = match sigma {
                Some(sigma) => ProfileSpec::TruncatedGaussian { sigma },
                None => exp.raw.alpha_profile,
            };
            let sigma = match profile {
                ProfileSpec::TruncatedGaussian { sigma } => Some(sigma),
                ProfileSpec::UniformWindow => None,
            };
            SweepRow { n, sigma, point: evaluate(exp, n, profile).map_err(|e| e.to_string()) }
        })
        .collect())
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> CliResult<()> {
    let mut out = csv::Writer::from_path(path)?;
    out.write_record(COLUMNS)?;
    for row in rows {
        let sigma = row.sigma.map(fmt_f64).unwrap_or_default();
        let record: Vec<String> = match &row.point {
            Ok(p) => vec![
                row.n.to_string(),
                p.big_n.to_string(),
                sigma,
                fmt_f64(p.epsilon),
                fmt_f64(p.r1),
                fmt_f64(p.r2),
                fmt_f64(p.r3),
                fmt_f64(p.overlap),
                fmt_f64(p.bound),
                fmt_f64(p.r2_bound),
                fmt_f64(p.r3_bound),
                p.holds.to_string(),
                String::new(),
            ],
            Err(e) => {
                let mut r = vec![row.n.to_string(), String::new(), sigma];
                r.extend(std::iter::repeat_n(String::new(), 8));
                r.push("false".into());
                r.push(e.clone());
                r
            }
        };
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

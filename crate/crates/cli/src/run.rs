use std::collections::BTreeMap;

use cohflux::battery::{new_battery, uniformity_epsilon, Battery};
use cohflux::coupling::{
    condition_residuals, fair_kernel, marginal_w, mix, ConditionResiduals, Coupling, GridMode,
};
use cohflux::protocol::{
    build_joint_states, build_transition, forward_protocol, full_label_oracle, overlap_to_ideal,
    reverse_protocol, verify_transport, OracleReport, Overlap, ReverseCoupling,
    ReverseResiduals, WindowSpec, ORACLE_MAX_N,
};
use cohflux::theorems::{
    crooks, default_alpha_grid, entropy_vs_majorisation, integral_ft, jarzynski, renyi_catalytic,
    second_law, tail_bound, third_law, CriterionComparison, TheoremReport,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Check, Experiment, ProfileSpec, RawConfig};
use crate::error::{CliError, CliResult};

/// Condition checks use this bound to decide whether the protocol can run at all.
const PROTOCOL_GATE: f64 = 1e-9;

#[derive(Debug, Serialize)]
pub struct ConditionsReport {
    #[serde(flatten)]
    pub residuals: ConditionResiduals,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Serialize)]
pub struct OverlapReport {
    #[serde(flatten)]
    pub overlap: Overlap,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Serialize)]
pub struct ProtocolReport {
    pub epsilon: f64,
    pub transport_error: f64,
    /// Conditions re-evaluated on the table the forward protocol produces.
    pub forward_residuals: ConditionResiduals,
    pub reverse_residuals: Option<ReverseResiduals>,
    pub reverse_error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RenyiRecord {
    pub holds: bool,
    pub orders: usize,
    pub min_order: f64,
    pub max_order: f64,
}

#[derive(Debug, Serialize)]
pub struct MixtureReport {
    pub count: usize,
    pub seed: u64,
    pub failures: usize,
    pub worst_condition_residual: f64,
    pub worst_theorem_residual: f64,
    pub holds: bool,
}

#[derive(Debug, Serialize)]
pub struct OracleSection {
    pub n: usize,
    #[serde(flatten)]
    pub report: OracleReport,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub config: RawConfig,
    pub window: WindowSpec,
    pub conditions: ConditionsReport,
    pub protocol: Option<ProtocolReport>,
    pub protocol_error: Option<String>,
    /// `"protocol"` when the theorems see the forward protocol's output table.
    pub theorem_source: &'static str,
    pub theorems: Vec<TheoremReport>,
    pub overlap: Option<OverlapReport>,
    pub renyi_catalytic: Option<RenyiRecord>,
    pub entropy_vs_majorisation: Option<CriterionComparison>,
    pub oracle: Option<OracleSection>,
    pub mixtures: Option<MixtureReport>,
    pub checks: BTreeMap<String, bool>,
    pub all_hold: bool,
}

/// Side files produced alongside the report.
pub struct Distributions {
    pub forward: BTreeMap<i64, f64>,
    pub reverse: Option<BTreeMap<i64, f64>>,
    pub delta_w: f64,
}

pub struct Protocol {
    pub forward: Coupling,
    pub reverse: Result<ReverseCoupling, String>,
    pub epsilon: f64,
    pub transport_error: f64,
}

pub fn forward_battery(w: &WindowSpec, u: u32, profile: ProfileSpec) -> CliResult<Battery> {
    Ok(new_battery(u, w.n, profile.on(w.lo, w.hi))?)
}

/// Window, transition and both protocol passes for one battery size.
pub fn run_protocol(c: &Coupling, w: &WindowSpec, profile: ProfileSpec) -> CliResult<Protocol> {
    let u = c.u();
    let transition = build_transition(c, u, w)?;
    let (psi, phi) = build_joint_states(c, u, w)?;
    let transport_error = verify_transport(&transition, &phi, &psi);
    let fwd_battery = forward_battery(w, u, profile)?;
    let epsilon = uniformity_epsilon(&fwd_battery, w.f_max);
    let forward = forward_protocol(&transition, &fwd_battery)?;
    let reverse = w
        .inner()
        .and_then(|(lo, hi)| new_battery(u, w.n, profile.on(lo, hi)))
        .and_then(|b| reverse_protocol(&transition, &b))
        .map_err(|e| e.to_string());
    Ok(Protocol { forward, reverse, epsilon, transport_error })
}

fn theorem(report: cohflux::error::Result<TheoremReport>, tol: f64) -> CliResult<TheoremReport> {
    Ok(report?.with_tolerance(tol))
}

fn random_mixtures(exp: &Experiment) -> CliResult<MixtureReport> {
    let c = &exp.coupling;
    let mut rng = ChaCha8Rng::seed_from_u64(exp.raw.seed);
    let tol = exp.tolerance(Check::Mixtures);
    let uniform_target = c.q().is_uniform_on_support(1e-12);
    let (mut failures, mut worst_cond, mut worst_thm) = (0, 0.0f64, 0.0f64);
    for _ in 0..exp.raw.mixtures {
        let parts = rng.gen_range(1..=4);
        let mut pool = vec![c.clone()];
        for _ in 0..parts {
            let kernel = fair_kernel(rng.gen_range(1..=2), rng.gen_range(1..=2), c.u())?;
            pool.push(c.smeared(&kernel));
        }
        let raw: Vec<f64> = (0..pool.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let m = mix(&pool, &weights)?;
        let cond = condition_residuals(&m).max();
        worst_cond = worst_cond.max(cond);
        let mut reports = vec![second_law(&m), third_law(&m)?];
        if m.mode() == GridMode::ExactGrid {
            reports.push(integral_ft(&m)?);
        }
        if uniform_target {
            reports.push(jarzynski(&m)?);
            for &r in &exp.raw.tail_r {
                reports.push(tail_bound(&m, r)?);
            }
        }
        let bad = cond > tol || reports.iter().any(|r| r.residual > tol);
        worst_thm = reports.iter().map(|r| r.residual).fold(worst_thm, f64::max);
        failures += bad as usize;
    }
    Ok(MixtureReport {
        count: exp.raw.mixtures,
        seed: exp.raw.seed,
        failures,
        worst_condition_residual: worst_cond,
        worst_theorem_residual: worst_thm,
        holds: failures == 0,
    })
}

pub fn run_experiment(exp: &Experiment) -> CliResult<(Report, Distributions)> {
    let c = &exp.coupling;
    let w = exp.window;
    let mut checks = BTreeMap::new();

    let residuals = condition_residuals(c);
    let tol = exp.tolerance(Check::Conditions);
    let conditions = ConditionsReport { residuals, tolerance: tol, holds: residuals.max() <= tol };
    if exp.wants(Check::Conditions) {
        checks.insert(Check::Conditions.to_string(), conditions.holds);
    }

    let gate_open = residuals.max() <= PROTOCOL_GATE;
    let protocol = if gate_open {
        Some(run_protocol(c, &w, exp.raw.alpha_profile)?)
    } else {
        None
    };
    let protocol_error = (!gate_open)
        .then(|| format!("conditions violated beyond {PROTOCOL_GATE:e}; protocol not built"));
    let source = protocol.as_ref().map(|p| &p.forward).unwrap_or(c);

    let mut theorems = Vec::new();
    if exp.wants(Check::IntegralFt) {
        theorems.push(theorem(integral_ft(source), exp.tolerance(Check::IntegralFt))?);
    }
    if exp.wants(Check::SecondLaw) {
        theorems.push(second_law(source).with_tolerance(exp.tolerance(Check::SecondLaw)));
    }
    if exp.wants(Check::ThirdLaw) {
        theorems.push(theorem(third_law(source), exp.tolerance(Check::ThirdLaw))?);
    }
    if exp.wants(Check::Jarzynski) {
        theorems.push(theorem(jarzynski(source), exp.tolerance(Check::Jarzynski))?);
    }
    if exp.wants(Check::TailBound) {
        for &r in &exp.raw.tail_r {
            theorems.push(theorem(tail_bound(source, r), exp.tolerance(Check::TailBound))?);
        }
    }
    if exp.wants(Check::Crooks) {
        match protocol.as_ref().map(|p| &p.reverse) {
            Some(Ok(rev)) => theorems.push(theorem(crooks(source, rev), exp.tolerance(Check::Crooks))?),
            Some(Err(e)) => {
                return Err(CliError::Config(format!("crooks: reverse protocol unavailable: {e}")));
            }
            None => {
                checks.insert(Check::Crooks.to_string(), false);
            }
        }
    }
    for t in &theorems {
        let entry = checks.entry(t.name.clone()).or_insert(true);
        *entry &= t.holds;
    }

    let overlap = if exp.wants(Check::Overlap) {
        let (psi, _) = build_joint_states(c, c.u(), &w)?;
        let o = overlap_to_ideal(&psi, &exp.p, &w);
        let tol = exp.tolerance(Check::Overlap);
        let holds = o.overlap >= o.bound - tol;
        checks.insert(Check::Overlap.to_string(), holds);
        Some(OverlapReport { overlap: o, tolerance: tol, holds })
    } else {
        None
    };

    let renyi = exp.wants(Check::RenyiCatalytic).then(|| {
        let grid = exp.raw.alpha_grid.clone().unwrap_or_else(default_alpha_grid);
        let holds = renyi_catalytic(&exp.p, &exp.q, exp.p.dim(), &grid);
        checks.insert(Check::RenyiCatalytic.to_string(), holds);
        RenyiRecord {
            holds,
            orders: grid.len(),
            min_order: grid.iter().copied().fold(f64::INFINITY, f64::min),
            max_order: grid.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    });

    let criteria = if exp.wants(Check::EntropyVsMajorisation) {
        let cmp = entropy_vs_majorisation(&exp.p, &exp.q)?;
        checks.insert(Check::EntropyVsMajorisation.to_string(), !cmp.flagged);
        Some(cmp)
    } else {
        None
    };

    let oracle = if exp.wants(Check::Oracle) {
        let n = w.n.min(ORACLE_MAX_N);
        let report = full_label_oracle(c, c.u(), n)?;
        let tol = exp.tolerance(Check::Oracle);
        let holds = report.max_discrepancy() <= tol;
        checks.insert(Check::Oracle.to_string(), holds);
        Some(OracleSection { n, report, tolerance: tol, holds })
    } else {
        None
    };

    let mixtures = if exp.wants(Check::Mixtures) {
        let m = random_mixtures(exp)?;
        checks.insert(Check::Mixtures.to_string(), m.holds);
        Some(m)
    } else {
        None
    };

    let dists = Distributions {
        forward: marginal_w(source),
        reverse: protocol.as_ref().and_then(|p| p.reverse.as_ref().ok()).map(|rev| {
            // keyed by the reverse battery change
            rev.marginal_w().into_iter().map(|(f, m)| (-f, m)).filter(|&(_, m)| m != 0.0).collect()
        }),
        delta_w: c.delta_w(),
    };

    let protocol_report = protocol.map(|p| ProtocolReport {
        epsilon: p.epsilon,
        transport_error: p.transport_error,
        forward_residuals: condition_residuals(&p.forward),
        reverse_residuals: p.reverse.as_ref().ok().map(|r| r.residuals()),
        reverse_error: p.reverse.err(),
    });

    let all_hold = checks.values().all(|&h| h);
    let report = Report {
        config: exp.raw.clone(),
        window: w,
        conditions,
        theorem_source: if protocol_report.is_some() { "protocol" } else { "coupling" },
        protocol: protocol_report,
        protocol_error,
        theorems,
        overlap,
        renyi_catalytic: renyi,
        entropy_vs_majorisation: criteria,
        oracle,
        mixtures,
        checks,
        all_hold,
    };
    Ok((report, dists))
}

//! Fluctuation relations evaluated on a coupling and its reverse.
//!
//! Every check returns a [`TheoremReport`]. For inequalities the residual is
//! the amount of violation, so `holds` always means `residual <= tolerance`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::coupling::{marginal_w, Coupling, GridMode};
use crate::error::{Error, Result};
use crate::majorisation::is_majorised;
use crate::protocol::ReverseCoupling;
use crate::state::{c_rel_pure, renyi_entropy, DiagonalState};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Mass below this is not counted as a realised value of `w`.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

const UNIFORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Equals,
    Leq,
    Geq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub relation: Relation,
    pub residual: f64,
    pub tolerance: f64,
    pub holds: bool,
    pub details: BTreeMap<String, f64>,
}

impl TheoremReport {
    fn new(name: &str, lhs: f64, rhs: f64, relation: Relation) -> Self {
        let residual = match relation {
            Relation::Equals => (lhs - rhs).abs(),
            Relation::Leq => (lhs - rhs).max(0.0),
            Relation::Geq => (rhs - lhs).max(0.0),
        };
        Self {
            name: name.into(),
            lhs,
            rhs,
            relation,
            residual,
            tolerance: DEFAULT_TOLERANCE,
            holds: residual <= DEFAULT_TOLERANCE,
            details: BTreeMap::new(),
        }
    }

    fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.into(), value);
        self
    }

    /// Re-judges the report against another tolerance.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.holds = self.residual <= tolerance;
        self
    }
}

fn rank(p: &DiagonalState) -> usize {
    p.support().len()
}

fn require_uniform_target(c: &Coupling, name: &str) -> Result<()> {
    if !c.q().is_uniform_on_support(UNIFORM_TOL) {
        return Err(Error::Precondition(format!(
            "{name} needs a final state uniform on its support"
        )));
    }
    Ok(())
}

/// `⟨e^{w - ln q_j + ln p_i}⟩ = 1` over the joint distribution `P(i,w|j) q_j`.
pub fn integral_ft(c: &Coupling) -> Result<TheoremReport> {
    if c.mode() != GridMode::ExactGrid {
        return Err(Error::Precondition("integral relation needs an exact-grid coupling".into()));
    }
    let mut lhs = 0.0;
    for e in c.entries() {
        lhs += e.value * c.p().get(e.i) * (e.f as f64 * c.delta_w()).exp();
    }
    Ok(TheoremReport::new("integral_ft", lhs, 1.0, Relation::Equals))
}

/// `⟨w⟩ ≤ C(ψ) - C(φ)`; `details.gap` is the slack.
pub fn second_law(c: &Coupling) -> TheoremReport {
    let lhs: f64 = marginal_w(c)
        .into_iter()
        .map(|(f, mass)| mass * f as f64 * c.delta_w())
        .sum();
    let rhs = c_rel_pure(c.p()) - c_rel_pure(c.q());
    TheoremReport::new("second_law", lhs, rhs, Relation::Leq).detail("gap", rhs - lhs)
}

/// `Σ_w e^w ≥ q_min / (d' p_min)` with `w` over the realised support of `P(w)`.
///
/// `details.lhs_grid` sums over the whole stored grid instead.
pub fn third_law(c: &Coupling) -> Result<TheoremReport> {
    let support: Vec<i64> = marginal_w(c)
        .into_iter()
        .filter(|&(_, mass)| mass > SUPPORT_THRESHOLD)
        .map(|(f, _)| f)
        .collect();
    if support.is_empty() {
        return Err(Error::Degenerate("distribution of w has empty support".into()));
    }
    let dw = c.delta_w();
    let lhs: f64 = support.iter().map(|&f| (f as f64 * dw).exp()).sum();
    let lhs_grid: f64 = (-c.grid()..=c.grid()).map(|f| (f as f64 * dw).exp()).sum();
    let rhs = c.q().min_nonzero() / (rank(c.q()) as f64 * c.p().min_nonzero());
    Ok(TheoremReport::new("third_law", lhs, rhs, Relation::Geq)
        .detail("lhs_grid", lhs_grid)
        .detail("support_size", support.len() as f64)
        .detail("support_threshold", SUPPORT_THRESHOLD))
}

/// `⟨e^w⟩ = d / d'` for a final state uniform on `d'` levels.
pub fn jarzynski(c: &Coupling) -> Result<TheoremReport> {
    require_uniform_target(c, "jarzynski")?;
    let lhs: f64 = marginal_w(c)
        .into_iter()
        .map(|(f, mass)| mass * (f as f64 * c.delta_w()).exp())
        .sum();
    let (d, dp) = (rank(c.p()), rank(c.q()));
    Ok(TheoremReport::new("jarzynski", lhs, d as f64 / dp as f64, Relation::Equals)
        .detail("d", d as f64)
        .detail("d_final", dp as f64))
}

/// `P(w ≥ ln(d/d') + r) ≤ e^{-r}`.
pub fn tail_bound(c: &Coupling, r: f64) -> Result<TheoremReport> {
    require_uniform_target(c, "tail_bound")?;
    if !(r > 0.0) {
        return Err(Error::Validation(format!("tail offset must be positive, got {r}")));
    }
    let threshold = (rank(c.p()) as f64 / rank(c.q()) as f64).ln() + r;
    let slack = 1e-12 * threshold.abs().max(1.0);
    let lhs: f64 = marginal_w(c)
        .into_iter()
        .filter(|&(f, _)| f as f64 * c.delta_w() >= threshold - slack)
        .map(|(_, mass)| mass)
        .sum();
    Ok(TheoremReport::new("tail_bound", lhs, (-r).exp(), Relation::Leq)
        .detail("r", r)
        .detail("threshold", threshold))
}

/// Forward and reverse weights at one battery change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrooksPoint {
    pub f: i64,
    pub w: f64,
    /// `P(w)`
    pub forward: f64,
    /// `P^rev(-w)`
    pub reverse: f64,
    /// `P(w) e^w d' / d`, the value the reverse weight should take.
    pub predicted: f64,
}

/// Pairs `P(w)` with `P^rev(-w)` over the union of both supports.
pub fn crooks_points(forward: &Coupling, reverse: &ReverseCoupling) -> Result<Vec<CrooksPoint>> {
    require_uniform_target(forward, "crooks")?;
    if reverse.dim() != forward.dim() {
        return Err(Error::DimensionMismatch(forward.dim(), reverse.dim()));
    }
    let d = rank(forward.p()) as f64;
    let dp = rank(forward.q()) as f64;
    for (i, &v) in reverse.q_rev().iter().enumerate() {
        let expected = if forward.p().get(i) > 0.0 { 1.0 / d } else { 0.0 };
        if (v - expected).abs() > UNIFORM_TOL {
            return Err(Error::Precondition(
                "crooks needs the reverse final state uniform on the forward initial support".into(),
            ));
        }
    }
    let fwd = marginal_w(forward);
    let rev = reverse.marginal_w();
    let mut fs: Vec<i64> = fwd
        .iter()
        .chain(rev.iter())
        .filter(|&(_, &m)| m > SUPPORT_THRESHOLD)
        .map(|(&f, _)| f)
        .collect();
    fs.sort_unstable();
    fs.dedup();
    Ok(fs
        .into_iter()
        .map(|f| {
            let w = f as f64 * forward.delta_w();
            let p = fwd.get(&f).copied().unwrap_or(0.0);
            CrooksPoint {
                f,
                w,
                forward: p,
                reverse: rev.get(&f).copied().unwrap_or(0.0),
                predicted: p * w.exp() * dp / d,
            }
        })
        .collect())
}

/// `P(w) / P^rev(-w) = e^{-w} d / d'`, checked in the division-free form.
pub fn crooks(forward: &Coupling, reverse: &ReverseCoupling) -> Result<TheoremReport> {
    let points = crooks_points(forward, reverse)?;
    let worst = points
        .iter()
        .copied()
        .max_by(|a, b| (a.predicted - a.reverse).abs().total_cmp(&(b.predicted - b.reverse).abs()))
        .ok_or_else(|| Error::Degenerate("no supported w".into()))?;
    let mut report = TheoremReport::new("crooks", worst.predicted, worst.reverse, Relation::Equals)
        .detail("worst_f", worst.f as f64)
        .detail("d", rank(forward.p()) as f64)
        .detail("d_final", rank(forward.q()) as f64);
    for pt in &points {
        if pt.reverse > SUPPORT_THRESHOLD {
            report = report.detail(&format!("ratio_f{:+}", pt.f), pt.forward / pt.reverse);
        }
    }
    Ok(report)
}

/// Forty log-spaced orders on each side of zero, magnitudes `1e-2` to `50`.
pub fn default_alpha_grid() -> Vec<f64> {
    const POINTS: usize = 40;
    let (lo, hi) = (1e-2f64.ln(), 50f64.ln());
    let positive: Vec<f64> = (0..POINTS)
        .map(|k| (lo + (hi - lo) * k as f64 / (POINTS - 1) as f64).exp())
        .filter(|&a| a != 1.0)
        .collect();
    let mut grid: Vec<f64> = positive.iter().rev().map(|a| -a).collect();
    grid.extend(positive);
    grid
}

/// Samples the strict Rényi ordering needed for a catalytic conversion.
///
/// Only a finite grid is inspected, so `true` is necessary evidence rather
/// than proof. Orders `0` and `1` are skipped.
pub fn renyi_catalytic(p: &DiagonalState, q: &DiagonalState, d: usize, alpha_grid: &[f64]) -> bool {
    let ln_d = (d as f64).ln();
    alpha_grid
        .iter()
        .filter(|&&a| a != 0.0 && a != 1.0 && a.is_finite())
        .all(|&a| {
            let lhs = (renyi_entropy(p, a) - ln_d) / a.abs();
            let rhs = (renyi_entropy(q, a) - ln_d) / a.abs();
            lhs > rhs
        })
}

/// Side-by-side entropy ordering and majorisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriterionComparison {
    pub majorised: bool,
    pub entropy_ordered: bool,
    /// The two criteria disagree.
    pub flagged: bool,
}

pub fn entropy_vs_majorisation(p: &DiagonalState, q: &DiagonalState) -> Result<CriterionComparison> {
    let majorised = is_majorised(p, q, 1e-12)?;
    let entropy_ordered = c_rel_pure(p) >= c_rel_pure(q) - 1e-12;
    Ok(CriterionComparison { majorised, entropy_ordered, flagged: majorised != entropy_ordered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{canonical_coupling, explicit_coupling, CouplingEntry};

    const LN2: f64 = std::f64::consts::LN_2;

    fn st(v: &[f64]) -> DiagonalState {
        DiagonalState::new(v.to_vec()).unwrap()
    }

    fn canon(p: &[f64], q: &[f64]) -> Coupling {
        canonical_coupling(&st(p), &st(q), 2, GridMode::ExactGrid).unwrap()
    }

    fn breathing() -> Coupling {
        let e = |i, j, f, value| CouplingEntry { i, j, f, value };
        let table = [
            e(0, 0, 1, 1.0 / 3.0),
            e(1, 0, -1, 2.0 / 3.0),
            e(1, 1, 1, 1.0 / 3.0),
            e(0, 1, -1, 2.0 / 3.0),
        ];
        explicit_coupling(&st(&[0.5, 0.5]), &st(&[0.5, 0.5]), &table, 2, GridMode::ExactGrid).unwrap()
    }

    #[test]
    fn integral_relation() {
        for c in [canon(&[0.5, 0.25, 0.125, 0.125], &[0.25; 4]), breathing(), canon(&[0.5, 0.5], &[0.5, 0.5])] {
            let r = integral_ft(&c).unwrap();
            assert!((r.lhs - 1.0).abs() < 1e-12, "{r:?}");
        }
        let floor = canonical_coupling(&st(&[0.6, 0.4]), &st(&[1.0, 0.0]), 2, GridMode::FloorDiscretised).unwrap();
        assert!(matches!(integral_ft(&floor), Err(Error::Precondition(_))));
    }

    #[test]
    fn second_law_examples() {
        let r = second_law(&canon(&[0.5, 0.25, 0.125, 0.125], &[0.25; 4]));
        assert!((r.lhs + 0.25 * LN2).abs() < 1e-12);
        assert!((r.rhs + 0.25 * LN2).abs() < 1e-12);
        assert!(r.details["gap"].abs() < 1e-12 && r.holds);
        let r = second_law(&breathing());
        assert!((r.lhs + LN2 / 3.0).abs() < 1e-12);
        assert!((r.details["gap"] - LN2 / 3.0).abs() < 1e-12 && r.holds);
        let r = second_law(&canon(&[0.5, 0.5], &[1.0, 0.0]));
        assert!((r.lhs - LN2).abs() < 1e-12 && (r.rhs - LN2).abs() < 1e-12);
    }

    #[test]
    fn third_law_examples() {
        let r = third_law(&canon(&[0.5, 0.25, 0.25, 0.0], &[0.25; 4])).unwrap();
        assert!((r.lhs - 1.5).abs() < 1e-12 && (r.rhs - 0.25).abs() < 1e-12 && r.holds);
        let r = third_law(&breathing()).unwrap();
        assert!((r.lhs - 2.5).abs() < 1e-12 && (r.rhs - 0.5).abs() < 1e-12);
        let r = third_law(&canon(&[0.5, 0.5], &[0.5, 0.5])).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12 && (r.rhs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn jarzynski_examples() {
        let r = jarzynski(&canon(&[0.5, 0.25, 0.125, 0.125], &[0.25; 4])).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-12 && r.holds);
        let r = jarzynski(&canon(&[0.5, 0.5], &[1.0, 0.0])).unwrap();
        assert!((r.lhs - 2.0).abs() < 1e-12 && r.rhs == 2.0);
        let r = jarzynski(&canon(&[0.5, 0.25, 0.25, 0.0], &[0.25; 4])).unwrap();
        assert!((r.lhs - 0.75).abs() < 1e-12 && r.holds);
        let not_uniform = canon(&[0.25, 0.25, 0.5], &[0.5, 0.25, 0.25]);
        assert!(matches!(jarzynski(&not_uniform), Err(Error::Precondition(_))));
        assert!(matches!(tail_bound(&not_uniform, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn tail_examples() {
        let r = tail_bound(&breathing(), LN2).unwrap();
        assert!((r.lhs - 1.0 / 3.0).abs() < 1e-12 && r.holds);
        let r = tail_bound(&canon(&[0.5, 0.25, 0.125, 0.125], &[0.25; 4]), LN2).unwrap();
        assert!((r.lhs - 0.25).abs() < 1e-12 && r.holds);
        let r = tail_bound(&breathing(), 50.0).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(tail_bound(&breathing(), 0.0).is_err());
    }

    #[test]
    fn alpha_grid_shape() {
        let g = default_alpha_grid();
        assert_eq!(g.len(), 80);
        assert!((g[40] - 1e-2).abs() < 1e-15 && (g[79] - 50.0).abs() < 1e-12);
        assert!((g[0] + 50.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn renyi_examples() {
        let positive: Vec<f64> = default_alpha_grid().into_iter().filter(|&a| a > 0.0).collect();
        assert!(renyi_catalytic(&st(&[0.5, 0.5]), &st(&[1.0, 0.0]), 2, &positive));
        // negative orders see the dropped zero of the target
        assert!(!renyi_catalytic(&st(&[0.5, 0.5]), &st(&[1.0, 0.0]), 2, &default_alpha_grid()));
        let p = st(&[0.5, 0.3, 0.2]);
        assert!(!renyi_catalytic(&p, &p, 3, &default_alpha_grid()));
        // at large order the ordering follows -ln max
        let p = st(&[0.5, 0.49, 0.01]);
        let q = st(&[0.8, 0.1, 0.1]);
        assert!(renyi_catalytic(&p, &q, 3, &[50.0]));
        assert_eq!(renyi_catalytic(&p, &q, 3, &[50.0]), -(0.5f64).ln() > -(0.8f64).ln());
    }

    #[test]
    fn criterion_comparison() {
        let c = entropy_vs_majorisation(&st(&[0.5, 0.49, 0.01]), &st(&[0.8, 0.1, 0.1])).unwrap();
        assert!(c.entropy_ordered && !c.majorised && c.flagged);
        let c = entropy_vs_majorisation(&st(&[1.0 / 3.0; 3]), &st(&[0.7, 0.2, 0.1])).unwrap();
        assert!(c.entropy_ordered && c.majorised && !c.flagged);
    }

    #[test]
    fn tolerance_rejudges() {
        let r = TheoremReport::new("x", 1.0, 1.0 + 1e-9, Relation::Equals);
        assert!(!r.holds);
        assert!(r.with_tolerance(1e-8).holds);
    }
}

//! Conditional fluctuation tables `P(i, w | j)` on the integer grid `w = f δw`.
//!
//! A table is a valid battery-assisted protocol exactly when
//!
//! 1. `Σ_{i,f} P(i,f|j) = 1` for every `j` in the support of `q`,
//! 2. `Σ_{j,f} P(i,f|j) e^{f δw} = 1` for every `i` in the support of `p`,
//! 3. `Σ_{j,f} P(i,f|j) q_j = p_i` for every `i`.
//!
//! Entries for `j` outside the support of `q` are undefined and rejected.
//! Rows with `p_i = 0` are forced to zero by condition 3, so condition 2 is
//! only asked of the support of `p`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::battery::delta_w;
use crate::error::{Error, Result};
use crate::simplex;
use crate::state::DiagonalState;

/// How `w = ln(q_j / p_i)` is placed on the integer grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Every `w` is an exact multiple of `δw`.
    #[serde(rename = "exact")]
    ExactGrid,
    /// `f = ⌊w / δw⌋`; condition 2 degrades to `Σ ≤ 1`.
    #[serde(rename = "floor")]
    FloorDiscretised,
}

/// One table record, as exchanged in JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingEntry {
    pub i: usize,
    pub j: usize,
    pub f: i64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionResiduals {
    pub r1: f64,
    /// Equality residual in exact mode, upper-bound violation `max(0, Σ - 1)` in floor mode.
    pub r2: f64,
    pub r3: f64,
    pub c2_one_sided: bool,
    /// Range of the condition-2 sums over the support of `p`.
    pub c2_min: f64,
    pub c2_max: f64,
}

impl ConditionResiduals {
    pub fn max(&self) -> f64 {
        self.r1.max(self.r2).max(self.r3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    p: DiagonalState,
    q: DiagonalState,
    u: u32,
    delta_w: f64,
    mode: GridMode,
    /// Grid half-width `F`: stored `f` range is `[-F, F]`.
    grid: i64,
    /// Indexed `[(j * d + i) * (2F + 1) + (f + F)]`.
    table: Vec<f64>,
}

impl Coupling {
    fn zeroed(p: &DiagonalState, q: &DiagonalState, u: u32, mode: GridMode, grid: i64) -> Self {
        let d = p.dim();
        let width = (2 * grid + 1) as usize;
        Self {
            p: p.clone(),
            q: q.clone(),
            u,
            delta_w: delta_w(u),
            mode,
            grid,
            table: vec![0.0; d * d * width],
        }
    }

    fn index(&self, i: usize, j: usize, f: i64) -> usize {
        let width = (2 * self.grid + 1) as usize;
        (j * self.dim() + i) * width + (f + self.grid) as usize
    }

    pub fn p(&self) -> &DiagonalState {
        &self.p
    }

    pub fn q(&self) -> &DiagonalState {
        &self.q
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn delta_w(&self) -> f64 {
        self.delta_w
    }

    pub fn mode(&self) -> GridMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    /// Stored grid half-width `F`.
    pub fn grid(&self) -> i64 {
        self.grid
    }

    /// `P(i, f | j)`; zero off the stored grid.
    pub fn get(&self, i: usize, j: usize, f: i64) -> f64 {
        if f.abs() > self.grid {
            return 0.0;
        }
        self.table[self.index(i, j, f)]
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, f: i64, value: f64) {
        let k = self.index(i, j, f);
        self.table[k] = value;
    }

    /// Largest `|f|` carrying nonzero probability.
    pub fn f_max(&self) -> i64 {
        self.entries().iter().map(|e| e.f.abs()).max().unwrap_or(0)
    }

    /// Nonzero records in `(j, i, f)` order.
    pub fn entries(&self) -> Vec<CouplingEntry> {
        let d = self.dim();
        let mut out = Vec::new();
        for j in 0..d {
            for i in 0..d {
                for f in -self.grid..=self.grid {
                    let value = self.get(i, j, f);
                    if value != 0.0 {
                        out.push(CouplingEntry { i, j, f, value });
                    }
                }
            }
        }
        out
    }

    /// Same table on a wider grid.
    pub fn widened(&self, grid: i64) -> Self {
        if grid <= self.grid {
            return self.clone();
        }
        let mut out = Self::zeroed(&self.p, &self.q, self.u, self.mode, grid);
        for e in self.entries() {
            out.set(e.i, e.j, e.f, e.value);
        }
        out
    }

    /// Largest entry-wise difference; grids may differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let grid = self.grid.max(other.grid);
        let d = self.dim().max(other.dim());
        let mut worst: f64 = 0.0;
        for j in 0..d {
            for i in 0..d {
                for f in -grid..=grid {
                    worst = worst.max((self.get(i, j, f) - other.get(i, j, f)).abs());
                }
            }
        }
        worst
    }

    /// Convolves the battery change with a kernel `k(g)` satisfying
    /// `Σ k = 1` and `Σ k e^{g δw} = 1`, which keeps all three conditions.
    pub fn smeared(&self, kernel: &[(i64, f64)]) -> Self {
        let reach = kernel.iter().map(|(g, _)| g.abs()).max().unwrap_or(0);
        let mut out = Self::zeroed(&self.p, &self.q, self.u, self.mode, self.grid + reach);
        for e in self.entries() {
            for &(g, k) in kernel {
                let cur = out.get(e.i, e.j, e.f + g);
                out.set(e.i, e.j, e.f + g, cur + e.value * k);
            }
        }
        out
    }
}

/// Two-point kernel on `{-down, +up}` with zero mean of `e^{g δw} - 1`.
pub fn fair_kernel(down: i64, up: i64, u: u32) -> Result<Vec<(i64, f64)>> {
    if down < 1 || up < 1 {
        return Err(Error::Validation("kernel steps must be positive".into()));
    }
    let dw = delta_w(u);
    let lo = (-(down as f64) * dw).exp();
    let hi = (up as f64 * dw).exp();
    let a = (1.0 - lo) / (hi - lo);
    Ok(vec![(-down, 1.0 - a), (up, a)])
}

fn check_pair(p: &DiagonalState, q: &DiagonalState, u: u32) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    if u < 2 {
        return Err(Error::Validation(format!("u = {u}, need u >= 2")));
    }
    Ok(())
}

/// Product coupling `P(i, w | j) = p_i` at `w = ln(q_j / p_i)`.
pub fn canonical_coupling(
    p: &DiagonalState,
    q: &DiagonalState,
    u: u32,
    mode: GridMode,
) -> Result<Coupling> {
    check_pair(p, q, u)?;
    let dw = delta_w(u);
    let mut cells = Vec::new();
    let mut offending = Vec::new();
    for j in q.support() {
        for i in p.support() {
            let steps = (q.get(j) / p.get(i)).ln() / dw;
            let f = match mode {
                GridMode::ExactGrid => {
                    let f = steps.round();
                    if (steps - f).abs() > 1e-9 {
                        offending.push((i, j));
                    }
                    f as i64
                }
                // guard against ln round-off pushing an exact multiple down a step
                GridMode::FloorDiscretised => (steps + 1e-12).floor() as i64,
            };
            cells.push((i, j, f, p.get(i)));
        }
    }
    if !offending.is_empty() {
        return Err(Error::Grid { offending });
    }
    let grid = cells.iter().map(|c| c.2.abs()).max().unwrap_or(0);
    let mut c = Coupling::zeroed(p, q, u, mode, grid);
    for (i, j, f, v) in cells {
        c.set(i, j, f, v);
    }
    Ok(c)
}

/// Table from explicit records. Duplicate `(i, j, f)` records add up.
/// Conditions are not enforced; inspect [`condition_residuals`].
pub fn explicit_coupling(
    p: &DiagonalState,
    q: &DiagonalState,
    entries: &[CouplingEntry],
    u: u32,
    mode: GridMode,
) -> Result<Coupling> {
    check_pair(p, q, u)?;
    let d = p.dim();
    for e in entries {
        if !(e.value >= 0.0) || !e.value.is_finite() {
            return Err(Error::Validation(format!(
                "entry (i={}, j={}, f={}) has value {}",
                e.i, e.j, e.f, e.value
            )));
        }
        if e.i >= d || e.j >= d {
            return Err(Error::Validation(format!("index (i={}, j={}) out of range", e.i, e.j)));
        }
        if q.get(e.j) == 0.0 && e.value > 0.0 {
            return Err(Error::Validation(format!("column j={} lies outside supp(q)", e.j)));
        }
    }
    let grid = entries.iter().map(|e| e.f.abs()).max().unwrap_or(0);
    let mut c = Coupling::zeroed(p, q, u, mode, grid);
    for e in entries {
        let cur = c.get(e.i, e.j, e.f);
        c.set(e.i, e.j, e.f, cur + e.value);
    }
    Ok(c)
}

pub fn condition_residuals(c: &Coupling) -> ConditionResiduals {
    let d = c.dim();
    let mut r1: f64 = 0.0;
    for j in c.q.support() {
        let s: f64 = (0..d)
            .flat_map(|i| (-c.grid..=c.grid).map(move |f| (i, f)))
            .map(|(i, f)| c.get(i, j, f))
            .sum();
        r1 = r1.max((s - 1.0).abs());
    }
    let ratio = (c.delta_w).exp();
    let one_sided = c.mode == GridMode::FloorDiscretised;
    let (mut r2, mut c2_min, mut c2_max) = (0.0f64, f64::INFINITY, f64::NEG_INFINITY);
    for i in c.p.support() {
        let s: f64 = c
            .q
            .support()
            .into_iter()
            .flat_map(|j| (-c.grid..=c.grid).map(move |f| (j, f)))
            .map(|(j, f)| c.get(i, j, f) * ratio.powi(f as i32))
            .sum();
        c2_min = c2_min.min(s);
        c2_max = c2_max.max(s);
        r2 = r2.max(if one_sided { (s - 1.0).max(0.0) } else { (s - 1.0).abs() });
    }
    let mut r3: f64 = 0.0;
    for i in 0..d {
        let s: f64 = c
            .q
            .support()
            .into_iter()
            .flat_map(|j| (-c.grid..=c.grid).map(move |f| (j, f)))
            .map(|(j, f)| c.get(i, j, f) * c.q.get(j))
            .sum();
        r3 = r3.max((s - c.p.get(i)).abs());
    }
    if c2_min > c2_max {
        (c2_min, c2_max) = (0.0, 0.0);
    }
    ConditionResiduals { r1, r2, r3, c2_one_sided: one_sided, c2_min, c2_max }
}

/// `P(f) = Σ_{i,j} P(i,f|j) q_j`, over grid points with nonzero mass.
pub fn marginal_w(c: &Coupling) -> BTreeMap<i64, f64> {
    let mut out = BTreeMap::new();
    for e in c.entries() {
        *out.entry(e.f).or_insert(0.0) += e.value * c.q.get(e.j);
    }
    out.retain(|_, v| *v != 0.0);
    out
}

/// Entry-wise convex combination of couplings sharing `(p, q, u)`.
pub fn mix(couplings: &[Coupling], weights: &[f64]) -> Result<Coupling> {
    let Some(first) = couplings.first() else {
        return Err(Error::Validation("nothing to mix".into()));
    };
    if couplings.len() != weights.len() {
        return Err(Error::DimensionMismatch(couplings.len(), weights.len()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::Validation(format!("mixing weights must be a distribution, sum={total}")));
    }
    for c in &couplings[1..] {
        if c.p != first.p || c.q != first.q || c.u != first.u || c.mode != first.mode {
            return Err(Error::Validation("couplings have mismatched marginals".into()));
        }
    }
    let grid = couplings.iter().map(|c| c.grid).max().unwrap_or(0);
    let mut out = Coupling::zeroed(&first.p, &first.q, first.u, first.mode, grid);
    for (c, &w) in couplings.iter().zip(weights) {
        for e in c.entries() {
            let cur = out.get(e.i, e.j, e.f);
            out.set(e.i, e.j, e.f, cur + w * e.value);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    pub witness: Option<Coupling>,
}

/// Largest instance accepted by the feasibility LP.
pub const LP_MAX_DIM: usize = 16;
pub const LP_MAX_GRID: i64 = 16;
const LP_MAX_ITER: usize = 200_000;

/// Decides whether some table on `f ∈ [-F, F]` satisfies conditions 1–3.
pub fn feasibility_lp(p: &DiagonalState, q: &DiagonalState, f: i64, u: u32) -> Result<Feasibility> {
    if f < 0 {
        return Err(Error::Validation("grid half-width must be nonnegative".into()));
    }
    feasibility_lp_on(p, q, -f, f, u)
}

/// As [`feasibility_lp`], restricted to `f ∈ [f_lo, f_hi]`.
pub fn feasibility_lp_on(
    p: &DiagonalState,
    q: &DiagonalState,
    f_lo: i64,
    f_hi: i64,
    u: u32,
) -> Result<Feasibility> {
    check_pair(p, q, u)?;
    let d = p.dim();
    if d > LP_MAX_DIM || f_lo.abs().max(f_hi.abs()) > LP_MAX_GRID {
        return Err(Error::SizeCap(format!(
            "LP limited to d <= {LP_MAX_DIM}, |f| <= {LP_MAX_GRID}"
        )));
    }
    if f_lo > f_hi {
        return Err(Error::Validation(format!("empty grid [{f_lo}, {f_hi}]")));
    }
    let cols = q.support();
    let rows = p.support();
    let vars: Vec<(usize, usize, i64)> = cols
        .iter()
        .flat_map(|&j| (0..d).flat_map(move |i| (f_lo..=f_hi).map(move |f| (i, j, f))))
        .collect();
    let ratio = delta_w(u).exp();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &j in &cols {
        a.push(vars.iter().map(|v| if v.1 == j { 1.0 } else { 0.0 }).collect());
        b.push(1.0);
    }
    for &i in &rows {
        a.push(
            vars.iter()
                .map(|v| if v.0 == i { ratio.powi(v.2 as i32) } else { 0.0 })
                .collect(),
        );
        b.push(1.0);
    }
    for i in 0..d {
        a.push(vars.iter().map(|v| if v.0 == i { q.get(v.1) } else { 0.0 }).collect());
        b.push(p.get(i));
    }
    let Some(x) = simplex::phase_one(&a, &b, LP_MAX_ITER)? else {
        return Ok(Feasibility { feasible: false, witness: None });
    };
    let grid = f_lo.abs().max(f_hi.abs());
    let mut c = Coupling::zeroed(p, q, u, GridMode::ExactGrid, grid);
    for (v, &value) in vars.iter().zip(&x) {
        if value > 0.0 {
            c.set(v.0, v.1, v.2, value);
        }
    }
    Ok(Feasibility { feasible: true, witness: Some(c) })
}

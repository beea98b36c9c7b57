//! Block bistochastic transport `G^(N)` and the forward/reverse protocols.
//!
//! Rows are labelled by initial labels `(i, z)` with `z ∈ χ_x`, columns by final
//! labels `(j, z')` with `z' ∈ χ_{x'}`. Inside the window (`j ∈ supp q`,
//! `x' ∈ S`) the per-label entry is `P(i, x | j, x') / m_x` with
//! `P(i, x | j, x') = P(i, f = x' - x | j)`; only the collapsed values are
//! stored. Every other column is filled with the row slack spread evenly,
//! `slack(i, x) / K`, where `K` counts those exterior columns. Total slack
//! equals `K` whenever the window columns sum to one, so exterior columns
//! sum to one as well.

use serde::{Deserialize, Serialize};

use crate::battery::{log_multiplicity, Battery};
use crate::coupling::{condition_residuals, Coupling, GridMode};
use crate::error::{Error, Result};
use crate::state::DiagonalState;

use super::joint::CollapsedState;
use super::window::WindowSpec;

/// Tolerance on conditions 1–2 accepted by [`build_transition`].
pub const CONDITION_TOL: f64 = 1e-9;

/// Symbolic description of the uniform completion block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    /// `ln K`; `-inf` when there are no exterior columns.
    pub log_exterior_columns: f64,
    /// Column sum of every exterior column, `Σ_{i,x} m_x slack(i,x) / K`.
    pub exterior_column_sum: f64,
    /// Smallest row slack; negative values would break nonnegativity.
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTransition {
    window: WindowSpec,
    u: u32,
    delta_w: f64,
    p: DiagonalState,
    q: DiagonalState,
    mode: GridMode,
    /// Columns `j ∈ supp q`.
    cols: Vec<usize>,
    /// `[((i (n+1) + x) |cols| + jc) (N+1) + (x' - lo)]`
    blocks: Vec<f64>,
    row_slack: Vec<f64>,
    completion: Completion,
}

impl BlockTransition {
    fn block_index(&self, i: usize, x: usize, jc: usize, xp: usize) -> usize {
        let n1 = self.window.n + 1;
        ((i * n1 + x) * self.cols.len() + jc) * self.window.width() + (xp - self.window.lo)
    }

    fn col_slot(&self, j: usize) -> Option<usize> {
        self.cols.iter().position(|&c| c == j)
    }

    pub fn window(&self) -> &WindowSpec {
        &self.window
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    pub fn completion(&self) -> &Completion {
        &self.completion
    }

    /// Collapsed window entry `P(i, x | j, x')`; zero outside the window.
    pub fn block(&self, i: usize, x: usize, j: usize, xp: usize) -> f64 {
        match self.col_slot(j) {
            Some(jc) if self.window.contains(xp as i64) && x <= self.window.n => {
                self.blocks[self.block_index(i, x, jc, xp)]
            }
            _ => 0.0,
        }
    }

    /// `1 - Σ_{j, x' ∈ S} (m_{x'} / m_x) P(i, x | j, x')`.
    pub fn row_slack(&self, i: usize, x: usize) -> f64 {
        self.row_slack[i * (self.window.n + 1) + x]
    }

    /// Largest deviation of a window column's collapsed sum from one.
    pub fn window_column_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for &j in &self.cols {
            for xp in self.window.lo..=self.window.hi {
                let s: f64 = (0..self.dim())
                    .flat_map(|i| (0..=self.window.n).map(move |x| (i, x)))
                    .map(|(i, x)| self.block(i, x, j, xp))
                    .sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    fn ln_m(&self, x: usize) -> f64 {
        log_multiplicity(self.u, self.window.n, x).expect("level in range")
    }

    /// `(m_{x'} / m_x)` as a power of the level ratio.
    fn level_ratio(&self, from: usize, to: usize) -> f64 {
        (self.delta_w.exp()).powi(to as i32 - from as i32)
    }

    fn recompute_slack(&mut self) {
        let (d, n) = (self.dim(), self.window.n);
        let mut slack = vec![0.0; d * (n + 1)];
        for i in 0..d {
            for x in 0..=n {
                let mut mass = 0.0;
                for jc in 0..self.cols.len() {
                    for xp in self.window.lo..=self.window.hi {
                        let v = self.blocks[self.block_index(i, x, jc, xp)];
                        if v != 0.0 {
                            mass += self.level_ratio(x, xp) * v;
                        }
                    }
                }
                slack[i * (n + 1) + x] = 1.0 - mass;
            }
        }
        self.row_slack = slack;
        self.completion = self.analyse_completion();
    }

    fn analyse_completion(&self) -> Completion {
        let (d, n) = (self.dim(), self.window.n);
        let scale = (0..=n).map(|x| self.ln_m(x)).fold(f64::NEG_INFINITY, f64::max);
        let scaled: Vec<f64> = (0..=n).map(|x| (self.ln_m(x) - scale).exp()).collect();
        let exterior: f64 = (0..=n).filter(|&x| !self.window.contains(x as i64)).map(|x| scaled[x]).sum();
        let interior: f64 = (self.window.lo..=self.window.hi).map(|x| scaled[x]).sum();
        let k_scaled = d as f64 * exterior + (d - self.cols.len()) as f64 * interior;
        let min_slack = self.row_slack.iter().copied().fold(f64::INFINITY, f64::min);
        if k_scaled == 0.0 {
            return Completion { log_exterior_columns: f64::NEG_INFINITY, exterior_column_sum: 1.0, min_slack };
        }
        let total: f64 = (0..d)
            .flat_map(|i| (0..=n).map(move |x| (i, x)))
            .map(|(i, x)| scaled[x] * self.row_slack(i, x))
            .sum();
        Completion {
            log_exterior_columns: k_scaled.ln() + scale,
            exterior_column_sum: total / k_scaled,
            min_slack,
        }
    }

    /// `m_x / K`, the factor turning a row slack into a per-column entry times `m_x`.
    fn completion_weight(&self, x: usize) -> f64 {
        (self.ln_m(x) - self.completion.log_exterior_columns).exp()
    }

    #[cfg(test)]
    pub(crate) fn corrupt(&mut self, i: usize, x: usize, j: usize, xp: usize, delta: f64) {
        let jc = self.col_slot(j).unwrap();
        let k = self.block_index(i, x, jc, xp);
        self.blocks[k] += delta;
    }
}

/// Builds `G^(N)` from a coupling satisfying conditions 1 and 2.
pub fn build_transition(c: &Coupling, u: u32, w: &WindowSpec) -> Result<BlockTransition> {
    if u != c.u() {
        return Err(Error::Validation(format!("battery u = {u} but coupling u = {}", c.u())));
    }
    if c.f_max() as usize > w.f_max {
        return Err(Error::Window(format!(
            "coupling reaches |f| = {} beyond window f_max = {}",
            c.f_max(),
            w.f_max
        )));
    }
    let res = condition_residuals(c);
    if res.r1 > CONDITION_TOL {
        return Err(Error::ConditionViolation { condition: 1, detail: format!("r1 = {:e}", res.r1) });
    }
    if c.mode() == GridMode::ExactGrid && res.r2 > CONDITION_TOL {
        return Err(Error::ConditionViolation { condition: 2, detail: format!("r2 = {:e}", res.r2) });
    }
    let d = c.dim();
    let cols = c.q().support();
    let mut g = BlockTransition {
        window: *w,
        u,
        delta_w: c.delta_w(),
        p: c.p().clone(),
        q: c.q().clone(),
        mode: c.mode(),
        blocks: vec![0.0; d * (w.n + 1) * cols.len() * w.width()],
        cols,
        row_slack: Vec::new(),
        completion: Completion { log_exterior_columns: 0.0, exterior_column_sum: 0.0, min_slack: 0.0 },
    };
    for e in c.entries() {
        let jc = g.col_slot(e.j).expect("entries live on supp q");
        for xp in w.lo..=w.hi {
            let x = (xp as i64 - e.f) as usize;
            let k = g.block_index(e.i, x, jc, xp);
            g.blocks[k] = e.value;
        }
    }
    g.recompute_slack();
    if g.completion.min_slack < -CONDITION_TOL {
        return Err(Error::ConditionViolation {
            condition: 2,
            detail: format!("row mass exceeds one by {:e}", -g.completion.min_slack),
        });
    }
    Ok(g)
}

/// Largest level-mass error of `G Φ` against `Ψ`.
pub fn verify_transport(g: &BlockTransition, phi: &CollapsedState, psi: &CollapsedState) -> f64 {
    let (d, n) = (g.dim(), g.window.n);
    // mass of Φ sitting on exterior columns
    let exterior_mass: f64 = (0..d)
        .flat_map(|j| (0..=n).map(move |xp| (j, xp)))
        .filter(|&(j, xp)| g.col_slot(j).is_none() || !g.window.contains(xp as i64))
        .map(|(j, xp)| phi.mass(j, xp))
        .sum();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for x in 0..=n {
            let mut mass = 0.0;
            for &j in &g.cols {
                for xp in g.window.lo..=g.window.hi {
                    mass += g.block(i, x, j, xp) * phi.mass(j, xp);
                }
            }
            if exterior_mass != 0.0 {
                mass += g.completion_weight(x) * g.row_slack(i, x) * exterior_mass;
            }
            worst = worst.max((mass - psi.mass(i, x)).abs());
        }
    }
    worst
}

fn check_battery(g: &BlockTransition, b: &Battery) -> Result<()> {
    if b.u() != g.u || b.n() != g.window.n {
        return Err(Error::Validation(format!(
            "battery (u={}, n={}) does not match transition (u={}, n={})",
            b.u(),
            b.n(),
            g.u,
            g.window.n
        )));
    }
    Ok(())
}

/// Runs the five-step measurement protocol through `G` with battery `b`:
/// `P̂(i, f | j) = Σ_{x'} α_{x'} Q(i, x' - f | j, x')`.
pub fn forward_protocol(g: &BlockTransition, b: &Battery) -> Result<Coupling> {
    check_battery(g, b)?;
    let (lo, hi) = b.support();
    if lo < g.window.lo || hi > g.window.hi {
        return Err(Error::Wraparound(format!(
            "battery support [{lo}, {hi}] escapes window [{}, {}]",
            g.window.lo, g.window.hi
        )));
    }
    let f_max = g.window.f_max as i64;
    let mut out = crate::coupling::explicit_coupling(&g.p, &g.q, &[], g.u, g.mode)?.widened(f_max);
    for &j in &g.cols {
        for i in 0..g.dim() {
            for f in -f_max..=f_max {
                let mut v = 0.0;
                for xp in lo..=hi {
                    let x = xp as i64 - f;
                    if x >= 0 && x as usize <= g.window.n {
                        v += b.alpha()[xp] * g.block(i, x as usize, j, xp);
                    }
                }
                out.set(i, j, f, v);
            }
        }
    }
    Ok(out)
}

/// Conditional table of the reverse protocol, `P^rev(j, -f | i)`.
///
/// `q_rev` is the reverse protocol's final diagonal (indexed by `i`) and
/// `p_rev_j = Σ_{i,f} P^rev(j, -f | i) q_rev_i` its initial one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReverseCoupling {
    dim: usize,
    grid: i64,
    delta_w: f64,
    p_rev: Vec<f64>,
    q_rev: Vec<f64>,
    /// `[(i d + j) (2F+1) + (f + F)]`
    table: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverseResiduals {
    /// `max_i |Σ_{j,f} P^rev - 1|` over `supp q_rev`.
    pub r1: f64,
    /// `max_j |Σ_{i,f} P^rev e^{-w} - 1|` over `supp p_rev`.
    pub r2: f64,
    /// `max_j |Σ_{i,f} P^rev q_rev_i - p_rev_j|`.
    pub r3: f64,
}

impl ReverseCoupling {
    fn index(&self, j: usize, i: usize, f: i64) -> usize {
        (i * self.dim + j) * (2 * self.grid + 1) as usize + (f + self.grid) as usize
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn grid(&self) -> i64 {
        self.grid
    }

    /// `P^rev(j, -f | i)`: the battery changes by `-f δw`.
    pub fn get(&self, j: usize, i: usize, f: i64) -> f64 {
        if f.abs() > self.grid {
            return 0.0;
        }
        self.table[self.index(j, i, f)]
    }

    pub fn p_rev(&self) -> &[f64] {
        &self.p_rev
    }

    pub fn q_rev(&self) -> &[f64] {
        &self.q_rev
    }

    /// `P^rev(-f) = Σ_{i,j} P^rev(j, -f | i) q_rev_i`, keyed by the forward `f`.
    pub fn marginal_w(&self) -> std::collections::BTreeMap<i64, f64> {
        let mut out = std::collections::BTreeMap::new();
        for i in 0..self.dim {
            for j in 0..self.dim {
                for f in -self.grid..=self.grid {
                    let v = self.get(j, i, f) * self.q_rev[i];
                    if v != 0.0 {
                        *out.entry(f).or_insert(0.0) += v;
                    }
                }
            }
        }
        out
    }

    pub fn residuals(&self) -> ReverseResiduals {
        let d = self.dim;
        let (mut r1, mut r2, mut r3) = (0.0f64, 0.0f64, 0.0f64);
        for i in (0..d).filter(|&i| self.q_rev[i] > 0.0) {
            let s: f64 = (0..d)
                .flat_map(|j| (-self.grid..=self.grid).map(move |f| (j, f)))
                .map(|(j, f)| self.get(j, i, f))
                .sum();
            r1 = r1.max((s - 1.0).abs());
        }
        for j in 0..d {
            let mut s2 = 0.0;
            let mut s3 = 0.0;
            for i in 0..d {
                for f in -self.grid..=self.grid {
                    let v = self.get(j, i, f);
                    s2 += v * (-(f as f64) * self.delta_w).exp();
                    s3 += v * self.q_rev[i];
                }
            }
            if self.p_rev[j] > 0.0 {
                r2 = r2.max((s2 - 1.0).abs());
            }
            r3 = r3.max((s3 - self.p_rev[j]).abs());
        }
        ReverseResiduals { r1, r2, r3 }
    }

    /// Largest entry-wise difference on the common grid.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let grid = self.grid.max(other.grid);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                for f in -grid..=grid {
                    worst = worst.max((self.get(j, i, f) - other.get(j, i, f)).abs());
                }
            }
        }
        worst
    }
}

/// Runs the dual protocol through `Gᵀ` with battery `b` on the inner window:
/// `P^rev(j, -f | i) = Σ_{x''} α_{x''} e^{f δw} Q(i, x'' | j, x'' + f)`.
///
/// The reverse final state is maximally coherent on `supp p`.
pub fn reverse_protocol(g: &BlockTransition, b: &Battery) -> Result<ReverseCoupling> {
    check_battery(g, b)?;
    let (in_lo, in_hi) = g.window.inner()?;
    let (lo, hi) = b.support();
    if lo < in_lo || hi > in_hi {
        return Err(Error::Wraparound(format!(
            "battery support [{lo}, {hi}] escapes inner window [{in_lo}, {in_hi}]"
        )));
    }
    let d = g.dim();
    let grid = g.window.f_max as i64;
    let rank = g.p.support().len() as f64;
    let q_rev: Vec<f64> = (0..d).map(|i| if g.p.get(i) > 0.0 { 1.0 / rank } else { 0.0 }).collect();
    let mut rev = ReverseCoupling {
        dim: d,
        grid,
        delta_w: g.delta_w,
        p_rev: vec![0.0; d],
        q_rev,
        table: vec![0.0; d * d * (2 * grid + 1) as usize],
    };
    let up = g.delta_w.exp();
    for i in 0..d {
        for &j in &g.cols {
            for f in -grid..=grid {
                let mut v = 0.0;
                for x in lo..=hi {
                    let xp = x as i64 + f;
                    v += b.alpha()[x] * g.block(i, x, j, xp as usize);
                }
                let k = rev.index(j, i, f);
                rev.table[k] = up.powi(f as i32) * v;
            }
        }
    }
    for j in 0..d {
        rev.p_rev[j] = (0..d)
            .flat_map(|i| (-grid..=grid).map(move |f| (i, f)))
            .map(|(i, f)| rev.get(j, i, f) * rev.q_rev[i])
            .sum();
    }
    Ok(rev)
}

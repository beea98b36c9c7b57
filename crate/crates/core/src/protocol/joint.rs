//! Joint system–battery diagonals in collapsed form.

use serde::{Deserialize, Serialize};

use crate::battery::log_multiplicity;
use crate::coupling::Coupling;
use crate::error::{Error, Result};
use crate::state::DiagonalState;

use super::window::WindowSpec;

/// Diagonal of a joint state that is uniform within each level block.
///
/// `mass(i, x)` is the total weight on the `m_x` labels of `|i⟩ ⊗ χ_x`;
/// each individual label carries `mass / m_x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollapsedState {
    u: u32,
    n: usize,
    dim: usize,
    mass: Vec<f64>,
}

impl CollapsedState {
    pub(crate) fn zeros(u: u32, n: usize, dim: usize) -> Self {
        Self { u, n, dim, mass: vec![0.0; dim * (n + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn mass(&self, i: usize, x: usize) -> f64 {
        self.mass[i * (self.n + 1) + x]
    }

    pub(crate) fn mass_mut(&mut self, i: usize, x: usize) -> &mut f64 {
        &mut self.mass[i * (self.n + 1) + x]
    }

    /// Weight of a single reference label at level `x`.
    pub fn per_label(&self, i: usize, x: usize) -> f64 {
        let ln_m = log_multiplicity(self.u, self.n, x).expect("level in range");
        (self.mass(i, x).ln() - ln_m).exp()
    }

    /// Multiplicity-weighted total, i.e. the trace.
    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Battery marginal over levels.
    pub fn level_marginal(&self) -> Vec<f64> {
        (0..=self.n)
            .map(|x| (0..self.dim).map(|i| self.mass(i, x)).sum())
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// `(Ψ^(N), Φ^(N))`: the correlated initial state and the product final state
/// with the battery uniform on the window.
pub fn build_joint_states(
    c: &Coupling,
    u: u32,
    w: &WindowSpec,
) -> Result<(CollapsedState, CollapsedState)> {
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
    let d = c.dim();
    let width = w.width() as f64;
    let mut psi = CollapsedState::zeros(u, w.n, d);
    let mut phi = CollapsedState::zeros(u, w.n, d);
    for j in 0..d {
        for x in w.lo..=w.hi {
            *phi.mass_mut(j, x) = c.q().get(j) / width;
        }
    }
    // p_{i,f} = Σ_j P(i,f|j) q_j lands on levels x with x + f ∈ S
    for e in c.entries() {
        let weight = e.value * c.q().get(e.j) / width;
        for x in w.lo..=w.hi {
            let level = x as i64 - e.f;
            *psi.mass_mut(e.i, level as usize) += weight;
        }
    }
    Ok((psi, phi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub overlap: f64,
    pub bound: f64,
}

/// Overlap of `Ψ^(N)` with `Σ_{i,x} √(p_i / (n+1)) |i⟩|c_x⟩`, and the
/// guaranteed lower bound `1 / (1 + 2 f_max / (N+1))`.
pub fn overlap_to_ideal(psi: &CollapsedState, p: &DiagonalState, w: &WindowSpec) -> Overlap {
    let levels = (w.n + 1) as f64;
    let mut overlap = 0.0;
    for i in 0..psi.dim() {
        for x in 0..=w.n {
            overlap += (p.get(i) / levels * psi.mass(i, x)).sqrt();
        }
    }
    let bound = 1.0 / (1.0 + 2.0 * w.f_max as f64 / w.width() as f64);
    Overlap { overlap, bound }
}

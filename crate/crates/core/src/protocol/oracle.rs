//! Dense full-label reference computation for small instances.
//!
//! Enumerates every reference label `(i, z)` of system and battery for `u = 2`
//! (level `x` has `2^x` labels), builds the sub-bistochastic block directly from
//! the coupling, completes it with uniform exterior columns counted one by one,
//! and recomputes the protocol distributions by dense matrix arithmetic. The
//! reverse route goes through the transpose of the dense matrix.

use serde::{Deserialize, Serialize};

use crate::battery::Battery;
use crate::coupling::Coupling;
use crate::error::{Error, Result};

use super::joint::build_joint_states;
use super::transition::{build_transition, forward_protocol, reverse_protocol, verify_transport};
use super::window::make_window;

pub const ORACLE_MAX_N: usize = 8;
pub const ORACLE_MAX_DIM: usize = 3;

/// Dense-versus-collapsed comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub dense_dim: usize,
    /// `max |row sum - 1|` of the dense matrix.
    pub row_sum_error: f64,
    /// `max |column sum - 1|` of the dense matrix.
    pub col_sum_error: f64,
    pub min_entry: f64,
    /// Dense `G Φ` against the dense `Ψ`, aggregated per level.
    pub dense_transport_error: f64,
    /// Dense `G Φ` against the collapsed `Ψ`.
    pub transport_vs_collapsed: f64,
    /// Collapsed [`verify_transport`] value.
    pub collapsed_transport_error: f64,
    /// Dense minus collapsed forward table, entry-wise max.
    pub forward_diff: f64,
    /// Dense minus collapsed reverse table; absent when the inner window is empty.
    pub reverse_diff: Option<f64>,
}

impl OracleReport {
    /// Largest discrepancy across all compared quantities.
    pub fn max_discrepancy(&self) -> f64 {
        [
            self.row_sum_error,
            self.col_sum_error,
            (-self.min_entry).max(0.0),
            self.dense_transport_error,
            self.transport_vs_collapsed,
            self.collapsed_transport_error,
            self.forward_diff,
            self.reverse_diff.unwrap_or(0.0),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

struct Labels {
    per_system: usize,
}

impl Labels {
    fn new(n: usize) -> Self {
        Self { per_system: (1usize << (n + 1)) - 1 }
    }

    fn mult(&self, x: usize) -> usize {
        1 << x
    }

    /// Dense index range of `|i⟩ ⊗ χ_x`.
    fn block(&self, i: usize, x: usize) -> std::ops::Range<usize> {
        let start = i * self.per_system + (1 << x) - 1;
        start..start + self.mult(x)
    }
}

pub fn full_label_oracle(c: &Coupling, u: u32, n: usize) -> Result<OracleReport> {
    let d = c.dim();
    if u != 2 || n > ORACLE_MAX_N || d > ORACLE_MAX_DIM {
        return Err(Error::SizeCap(format!(
            "oracle needs u = 2, n <= {ORACLE_MAX_N}, d <= {ORACLE_MAX_DIM}; got u = {u}, n = {n}, d = {d}"
        )));
    }
    if c.u() != u {
        return Err(Error::Validation(format!("coupling u = {} but oracle u = {u}", c.u())));
    }
    let w = make_window(n, c)?;
    let labels = Labels::new(n);
    let dim = d * labels.per_system;
    let width = w.width() as f64;
    let in_window = |j: usize, xp: usize| c.q().get(j) > 0.0 && w.contains(xp as i64);

    // sub-bistochastic part, row-major
    let mut g = vec![0.0; dim * dim];
    for i in 0..d {
        for x in 0..=n {
            for j in 0..d {
                for xp in 0..=n {
                    if !in_window(j, xp) {
                        continue;
                    }
                    let value = c.get(i, j, xp as i64 - x as i64) / labels.mult(x) as f64;
                    if value == 0.0 {
                        continue;
                    }
                    for r in labels.block(i, x) {
                        for col in labels.block(j, xp) {
                            g[r * dim + col] = value;
                        }
                    }
                }
            }
        }
    }
    let exterior: Vec<usize> = (0..d)
        .flat_map(|j| (0..=n).map(move |xp| (j, xp)))
        .filter(|&(j, xp)| !in_window(j, xp))
        .flat_map(|(j, xp)| labels.block(j, xp))
        .collect();
    if !exterior.is_empty() {
        let k = exterior.len() as f64;
        for r in 0..dim {
            let slack = 1.0 - g[r * dim..(r + 1) * dim].iter().sum::<f64>();
            for &col in &exterior {
                g[r * dim + col] = slack / k;
            }
        }
    }

    let row_sum_error = (0..dim)
        .map(|r| (g[r * dim..(r + 1) * dim].iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let col_sum_error = (0..dim)
        .map(|col| ((0..dim).map(|r| g[r * dim + col]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    let min_entry = g.iter().copied().fold(f64::INFINITY, f64::min);

    // per-label Φ and Ψ from their defining sums
    let mut phi = vec![0.0; dim];
    let mut psi_level = vec![0.0; d * (n + 1)];
    for j in 0..d {
        for xp in 0..=n {
            if w.contains(xp as i64) {
                for col in labels.block(j, xp) {
                    phi[col] = c.q().get(j) / (width * labels.mult(xp) as f64);
                }
            }
        }
    }
    for i in 0..d {
        for x in 0..=n {
            let mut mass = 0.0;
            for j in 0..d {
                for f in -c.grid()..=c.grid() {
                    if w.contains(x as i64 + f) {
                        mass += c.get(i, j, f) * c.q().get(j) / width;
                    }
                }
            }
            psi_level[i * (n + 1) + x] = mass;
        }
    }
    let image: Vec<f64> = (0..dim)
        .map(|r| g[r * dim..(r + 1) * dim].iter().zip(&phi).map(|(a, b)| a * b).sum())
        .collect();

    let g_block = build_transition(c, u, &w)?;
    let (psi, phi_c) = build_joint_states(c, u, &w)?;
    let mut dense_transport_error: f64 = 0.0;
    let mut transport_vs_collapsed: f64 = 0.0;
    for i in 0..d {
        for x in 0..=n {
            let level: f64 = labels.block(i, x).map(|r| image[r]).sum();
            dense_transport_error = dense_transport_error.max((level - psi_level[i * (n + 1) + x]).abs());
            transport_vs_collapsed = transport_vs_collapsed.max((level - psi.mass(i, x)).abs());
        }
    }
    let collapsed_transport_error = verify_transport(&g_block, &phi_c, &psi);

    // Q(i, x | j, x') = Σ_{z ∈ χ_x, z' ∈ χ_x'} G / m_x'
    let mut q_blocks = vec![0.0; d * (n + 1) * d * (n + 1)];
    let qi = |i: usize, x: usize, j: usize, xp: usize| ((i * (n + 1) + x) * d + j) * (n + 1) + xp;
    for i in 0..d {
        for x in 0..=n {
            for j in 0..d {
                for xp in 0..=n {
                    let mut s = 0.0;
                    for r in labels.block(i, x) {
                        s += g[r * dim + labels.block(j, xp).start..r * dim + labels.block(j, xp).end]
                            .iter()
                            .sum::<f64>();
                    }
                    q_blocks[qi(i, x, j, xp)] = s;
                }
            }
        }
    }

    let fwd_battery = Battery::centred_uniform(u, n, w.width())?;
    let collapsed_fwd = forward_protocol(&g_block, &fwd_battery)?;
    let span = n as i64;
    let mut forward_diff: f64 = 0.0;
    for i in 0..d {
        for j in c.q().support() {
            for f in -span..=span {
                let mut v = 0.0;
                for xp in 0..=n {
                    let x = xp as i64 - f;
                    if (0..=span).contains(&x) {
                        v += fwd_battery.alpha()[xp] * q_blocks[qi(i, x as usize, j, xp)]
                            / labels.mult(xp) as f64;
                    }
                }
                forward_diff = forward_diff.max((v - collapsed_fwd.get(i, j, f)).abs());
            }
        }
    }

    let reverse_diff = match w.inner() {
        Err(_) => None,
        Ok((lo, hi)) => {
            let rev_battery = Battery::centred_uniform(u, n, hi - lo + 1)?;
            let collapsed_rev = reverse_protocol(&g_block, &rev_battery)?;
            // Q^rev(j, x' | i, x) = Σ Gᵀ(j, z' | i, z) / m_x
            let mut worst: f64 = 0.0;
            for i in 0..d {
                for j in c.q().support() {
                    for f in -span..=span {
                        let mut v = 0.0;
                        for x in 0..=n {
                            let xp = x as i64 + f;
                            if (0..=span).contains(&xp) {
                                v += rev_battery.alpha()[x] * q_blocks[qi(i, x, j, xp as usize)]
                                    / labels.mult(x) as f64;
                            }
                        }
                        worst = worst.max((v - collapsed_rev.get(j, i, f)).abs());
                    }
                }
            }
            Some(worst)
        }
    };

    Ok(OracleReport {
        dense_dim: dim,
        row_sum_error,
        col_sum_error,
        min_entry,
        dense_transport_error,
        transport_vs_collapsed,
        collapsed_transport_error,
        forward_diff,
        reverse_diff,
    })
}

//! Reference-basis diagonals of pure states and their entropies.
//!
//! A pure state enters every computation only through the probability vector
//! of its diagonal in the reference basis, so amplitudes and phases are never
//! stored. All entropies are in nats. The relative entropy of coherence of a
//! pure state equals the Shannon entropy of that vector; divide by `ln 2` for
//! the value in bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the normalisation of a probability vector.
pub const NORM_TOL: f64 = 1e-12;

/// Diagonal of a pure state in the reference basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalState {
    probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

impl DiagonalState {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, NORM_TOL)
    }

    /// Validates against a caller-supplied normalisation tolerance.
    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Validation("probability vector is empty".into()));
        }
        if let Some((k, v)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::Validation(format!("entry {k} = {v} is not a probability")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::Validation(format!("sum={sum}")));
        }
        Ok(Self { probs, label: None })
    }

    pub fn labelled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// Indices with strictly positive weight.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    /// Smallest nonzero entry.
    pub fn min_nonzero(&self) -> f64 {
        self.probs
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every nonzero entry equals `1 / rank` within `tol`.
    pub fn is_uniform_on_support(&self, tol: f64) -> bool {
        let rank = diagonal_rank(self, 0.0) as f64;
        self.probs
            .iter()
            .filter(|&&v| v > 0.0)
            .all(|&v| (v - 1.0 / rank).abs() <= tol)
    }

    /// Entries sorted in descending order; ties keep their original order.
    pub fn sorted_desc(&self) -> (Vec<f64>, Vec<usize>) {
        let mut order: Vec<usize> = (0..self.dim()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]));
        (order.iter().map(|&k| self.probs[k]).collect(), order)
    }
}

/// Shannon entropy `-Σ p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(p: &DiagonalState) -> f64 {
    let h: f64 = p
        .probs
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| -v * v.ln())
        .sum();
    h.max(0.0)
}

/// Relative entropy of coherence of the pure state with diagonal `p`.
pub fn c_rel_pure(p: &DiagonalState) -> f64 {
    shannon_entropy(p)
}

/// Number of entries strictly above `tol`.
pub fn diagonal_rank(p: &DiagonalState, tol: f64) -> usize {
    p.probs.iter().filter(|&&v| v > tol).count()
}

/// Rényi entropy `sgn(α) ln(Σ p^α) / (1 - α)` over the support of `p`.
///
/// `α = 1` returns the Shannon entropy and `α = 0` returns `ln rank`, the
/// `α → 0⁺` limit. Zero entries are always excluded from the power sum, which
/// is what makes negative orders finite.
pub fn renyi_entropy(p: &DiagonalState, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return shannon_entropy(p);
    }
    if alpha == 0.0 {
        return (diagonal_rank(p, 0.0) as f64).ln();
    }
    let power_sum: f64 = p
        .probs
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v.powf(alpha))
        .sum();
    alpha.signum() * power_sum.ln() / (1.0 - alpha)
}

/// Diagonal of the maximally coherent state of dimension `d`.
pub fn max_coherent(d: usize) -> Result<DiagonalState> {
    if d == 0 {
        return Err(Error::Validation("dimension must be at least 1".into()));
    }
    DiagonalState::new(vec![1.0 / d as f64; d])
}

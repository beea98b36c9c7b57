//! Coherence battery in the collapsed level representation.
//!
//! Level `x ∈ [0, n]` holds `x` charged cells (dimension `u`) and `n - x`
//! discharged cells (dimension `u - 1`). Its dephased state is uniform over
//! `m_x = u^x (u-1)^{n-x}` reference labels, so every protocol quantity depends
//! only on the level index, the occupation `α_x` and `ln m_x`. Multiplicities
//! stay in log space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the level occupation profile `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaProfile {
    /// `α_x = 1 / (hi - lo + 1)` on `[lo, hi]`.
    UniformWindow { lo: usize, hi: usize },
    /// Gaussian weights `exp(-(x - center)² / 2σ²)` on `[lo, hi]`, renormalised.
    TruncatedGaussian { center: f64, sigma: f64, lo: usize, hi: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    u: u32,
    n: usize,
    alpha: Vec<f64>,
    delta_w: f64,
}

/// Coherence quantum `ln(u / (u-1))`.
pub fn delta_w(u: u32) -> f64 {
    (u as f64).ln() - ((u - 1) as f64).ln()
}

fn check_level(n: usize, x: usize) -> Result<()> {
    if x > n {
        return Err(Error::Validation(format!("level {x} outside [0, {n}]")));
    }
    Ok(())
}

/// `ln(u^x (u-1)^{n-x})`, the coherence of level `x`.
pub fn level_coherence(u: u32, n: usize, x: usize) -> Result<f64> {
    check_level(n, x)?;
    Ok(x as f64 * (u as f64).ln() + (n - x) as f64 * ((u - 1) as f64).ln())
}

/// `ln m_x`, the log of the number of reference labels at level `x`.
pub fn log_multiplicity(u: u32, n: usize, x: usize) -> Result<f64> {
    level_coherence(u, n, x)
}

pub fn new_battery(u: u32, n: usize, profile: AlphaProfile) -> Result<Battery> {
    if u < 2 {
        return Err(Error::Validation(format!("u = {u}, need u >= 2")));
    }
    let (lo, hi) = match profile {
        AlphaProfile::UniformWindow { lo, hi } | AlphaProfile::TruncatedGaussian { lo, hi, .. } => {
            (lo, hi)
        }
    };
    if lo > hi || hi > n {
        return Err(Error::Validation(format!("window [{lo}, {hi}] outside [0, {n}]")));
    }
    let mut alpha = vec![0.0; n + 1];
    match profile {
        AlphaProfile::UniformWindow { .. } => {
            let v = 1.0 / (hi - lo + 1) as f64;
            alpha[lo..=hi].iter_mut().for_each(|a| *a = v);
        }
        AlphaProfile::TruncatedGaussian { center, sigma, .. } => {
            if !(sigma > 0.0) || !center.is_finite() {
                return Err(Error::Validation(format!("gaussian needs sigma > 0, got {sigma}")));
            }
            for x in lo..=hi {
                let z = (x as f64 - center) / sigma;
                alpha[x] = (-0.5 * z * z).exp();
            }
            let total: f64 = alpha.iter().sum();
            if !(total > 0.0) {
                return Err(Error::Validation("gaussian profile underflows on its window".into()));
            }
            alpha.iter_mut().for_each(|a| *a /= total);
        }
    }
    Ok(Battery { u, n, alpha, delta_w: delta_w(u) })
}

impl Battery {
    /// Battery uniform on the centred window of `width` levels.
    pub fn centred_uniform(u: u32, n: usize, width: usize) -> Result<Self> {
        if width == 0 || width > n + 1 || (n + 1 - width) % 2 != 0 {
            return Err(Error::Validation(format!(
                "cannot centre a window of width {width} in [0, {n}]"
            )));
        }
        let lo = (n + 1 - width) / 2;
        new_battery(u, n, AlphaProfile::UniformWindow { lo, hi: lo + width - 1 })
    }

    pub fn u(&self) -> u32 {
        self.u
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn delta_w(&self) -> f64 {
        self.delta_w
    }

    /// `α_x`, reading levels outside `[0, n]` as zero.
    pub fn alpha_at(&self, x: i64) -> f64 {
        if x < 0 || x as usize > self.n {
            0.0
        } else {
            self.alpha[x as usize]
        }
    }

    /// Smallest and largest occupied levels.
    pub fn support(&self) -> (usize, usize) {
        let lo = self.alpha.iter().position(|&a| a > 0.0).unwrap_or(0);
        let hi = self.alpha.iter().rposition(|&a| a > 0.0).unwrap_or(0);
        (lo, hi)
    }

    pub fn log_multiplicity(&self, x: usize) -> f64 {
        x as f64 * (self.u as f64).ln() + (self.n - x) as f64 * ((self.u - 1) as f64).ln()
    }
}

/// Smallest `ε` with `Σ_x |α_x - α_{x+y}| ≤ |y| √(8ε)` for all `1 ≤ |y| ≤ f_max`.
pub fn uniformity_epsilon(b: &Battery, f_max: usize) -> f64 {
    let f_max = f_max.max(1) as i64;
    let n = b.n as i64;
    let mut worst: f64 = 0.0;
    for y in (-f_max..=f_max).filter(|&y| y != 0) {
        let total: f64 = (-f_max..=n + f_max)
            .map(|x| (b.alpha_at(x) - b.alpha_at(x + y)).abs())
            .sum();
        worst = worst.max(total / y.abs() as f64);
    }
    worst * worst / 8.0
}

/// Raises every level by `f`: `α'_x = α_{x-f}`. Never wraps around.
pub fn shift_alpha(b: &Battery, f: i64) -> Result<Battery> {
    let (lo, hi) = b.support();
    let (new_lo, new_hi) = (lo as i64 + f, hi as i64 + f);
    if new_lo < 0 || new_hi > b.n as i64 {
        return Err(Error::Wraparound(format!(
            "support [{lo}, {hi}] shifted by {f} leaves [0, {}]",
            b.n
        )));
    }
    let alpha = (0..=b.n as i64).map(|x| b.alpha_at(x - f)).collect();
    Ok(Battery { alpha, ..b.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_window_profile() {
        let b = new_battery(2, 4, AlphaProfile::UniformWindow { lo: 1, hi: 3 }).unwrap();
        let t = 1.0 / 3.0;
        assert_eq!(b.alpha(), &[0.0, t, t, t, 0.0]);
        assert!(new_battery(2, 4, AlphaProfile::UniformWindow { lo: 1, hi: 5 }).is_err());
        assert!(new_battery(1, 4, AlphaProfile::UniformWindow { lo: 0, hi: 4 }).is_err());
    }

    #[test]
    fn quantum_values() {
        for n in [0, 3, 17] {
            let b = new_battery(2, n, AlphaProfile::UniformWindow { lo: 0, hi: n }).unwrap();
            assert_eq!(b.delta_w(), 2f64.ln());
        }
        assert!((delta_w(3) - 1.5f64.ln()).abs() < 1e-15);
        assert!((delta_w(3) - 0.405465).abs() < 1e-6);
    }

    #[test]
    fn level_coherence_examples() {
        assert!((level_coherence(2, 5, 3).unwrap() - 3.0 * 2f64.ln()).abs() < 1e-15);
        assert_eq!(level_coherence(2, 9, 0).unwrap(), 0.0);
        for u in [2, 3, 7] {
            let step = level_coherence(u, 10, 5).unwrap() - level_coherence(u, 10, 4).unwrap();
            assert!((step - delta_w(u)).abs() < 1e-14);
        }
        assert!(level_coherence(2, 5, 6).is_err());
    }

    #[test]
    fn multiplicity_examples() {
        assert!((log_multiplicity(3, 4, 2).unwrap() - 36f64.ln()).abs() < 1e-14);
        assert!((log_multiplicity(2, 8, 5).unwrap() - 5.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn multiplicity_ratio_matches_integers() {
        let dw = delta_w(2);
        for n in 0..=40usize {
            for x in 0..=n {
                for x2 in 0..=n {
                    let exact = 2f64.powi(x2 as i32) / 2f64.powi(x as i32);
                    let approx = ((x2 as f64 - x as f64) * dw).exp();
                    assert!((approx / exact - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn epsilon_examples() {
        let b = new_battery(2, 20, AlphaProfile::UniformWindow { lo: 5, hi: 14 }).unwrap();
        let expect = 1.0 / (2.0 * 100.0);
        assert!((uniformity_epsilon(&b, 1) - expect).abs() < 1e-15);
        let delta = new_battery(2, 6, AlphaProfile::UniformWindow { lo: 3, hi: 3 }).unwrap();
        assert!((uniformity_epsilon(&delta, 1) - 0.5).abs() < 1e-15);
        let full = new_battery(2, 6, AlphaProfile::UniformWindow { lo: 0, hi: 6 }).unwrap();
        assert!(uniformity_epsilon(&full, 2) > 0.0);
    }

    #[test]
    fn shifts() {
        let b = new_battery(2, 4, AlphaProfile::UniformWindow { lo: 1, hi: 3 }).unwrap();
        let up = shift_alpha(&b, 1).unwrap();
        let expect = new_battery(2, 4, AlphaProfile::UniformWindow { lo: 2, hi: 4 }).unwrap();
        assert_eq!(up, expect);
        assert_eq!(shift_alpha(&b, 0).unwrap(), b);
        let low = new_battery(2, 4, AlphaProfile::UniformWindow { lo: 0, hi: 2 }).unwrap();
        assert!(matches!(shift_alpha(&low, -1), Err(Error::Wraparound(_))));
    }

    #[test]
    fn gaussian_is_normalised_on_window() {
        let g = AlphaProfile::TruncatedGaussian { center: 10.0, sigma: 2.0, lo: 3, hi: 17 };
        let b = new_battery(2, 20, g).unwrap();
        assert!((b.alpha().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(b.support(), (3, 17));
        assert_eq!(b.alpha_at(-1), 0.0);
    }

    #[test]
    fn centred_uniform() {
        let b = Battery::centred_uniform(2, 11, 10).unwrap();
        assert_eq!(b.support(), (1, 10));
        assert!(Battery::centred_uniform(2, 11, 11).is_err());
    }
}

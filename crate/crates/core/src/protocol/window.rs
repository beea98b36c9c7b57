use serde::{Deserialize, Serialize};

use crate::coupling::Coupling;
use crate::error::{Error, Result};

/// Battery window `S = [f_max, n - f_max]` of `N + 1` levels, `N = n - 2 f_max`.
///
/// Shifting `S` by any `|f| ≤ f_max` stays inside `[0, n]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub n: usize,
    pub f_max: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub lo: usize,
    pub hi: usize,
}

impl WindowSpec {
    pub fn new(n: usize, f_max: usize) -> Result<Self> {
        if n < 2 * f_max + 1 {
            return Err(Error::Window(format!(
                "n = {n} too small for f_max = {f_max}; need n >= {}",
                2 * f_max + 1
            )));
        }
        let big_n = n - 2 * f_max;
        Ok(Self { n, f_max, big_n, lo: f_max, hi: n - f_max })
    }

    pub fn contains(&self, x: i64) -> bool {
        x >= self.lo as i64 && x <= self.hi as i64
    }

    /// Number of window levels, `N + 1`.
    pub fn width(&self) -> usize {
        self.big_n + 1
    }

    /// Inner window `S' = [2 f_max, n - 2 f_max]` used by the reverse protocol.
    pub fn inner(&self) -> Result<(usize, usize)> {
        let lo = 2 * self.f_max;
        if self.n < 4 * self.f_max + 1 {
            return Err(Error::Window(format!(
                "inner window empty: N' = N - 2 f_max < 1 (n = {}, f_max = {}; need n >= {})",
                self.n,
                self.f_max,
                4 * self.f_max + 1
            )));
        }
        Ok((lo, self.n - lo))
    }
}

/// Window sized to the coupling's largest battery change.
pub fn make_window(n: usize, c: &Coupling) -> Result<WindowSpec> {
    WindowSpec::new(n, c.f_max() as usize)
}

//! Dense phase-1 simplex: find `x ≥ 0` with `A x = b`.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-10;

/// Returns a feasible point, `None` if the system is infeasible, or
/// [`Error::LpInconclusive`] when `max_iter` pivots are exhausted.
pub fn phase_one(a: &[Vec<f64>], b: &[f64], max_iter: usize) -> Result<Option<Vec<f64>>> {
    let m = a.len();
    let nvars = a.first().map_or(0, Vec::len);
    let width = nvars + m + 1;
    // tableau rows: [A | I | b], with rows flipped so b >= 0
    let mut t = vec![0.0; (m + 1) * width];
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut t[r * width..(r + 1) * width];
        for c in 0..nvars {
            row[c] = sign * a[r][c];
        }
        row[nvars + r] = 1.0;
        row[width - 1] = sign * b[r];
    }
    // objective row: minimise the sum of artificials, priced out
    let obj = m * width;
    for r in 0..m {
        for c in 0..width {
            if c < nvars || c == width - 1 {
                t[obj + c] -= t[r * width + c];
            }
        }
    }
    let mut basis: Vec<usize> = (nvars..nvars + m).collect();

    let mut degenerate_run = 0usize;
    for _ in 0..max_iter {
        let bland = degenerate_run > 50;
        let entering = if bland {
            (0..nvars + m).find(|&c| t[obj + c] < -PIVOT_EPS)
        } else {
            (0..nvars + m)
                .filter(|&c| t[obj + c] < -PIVOT_EPS)
                .min_by(|&x, &y| t[obj + x].total_cmp(&t[obj + y]))
        };
        let Some(col) = entering else {
            if -t[obj + width - 1] > FEAS_EPS {
                return Ok(None);
            }
            let mut x = vec![0.0; nvars];
            for (r, &v) in basis.iter().enumerate() {
                if v < nvars {
                    x[v] = t[r * width + width - 1].max(0.0);
                }
            }
            return Ok(Some(x));
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let coef = t[r * width + col];
            if coef > PIVOT_EPS {
                let ratio = t[r * width + width - 1] / coef;
                let better = match leave {
                    None => true,
                    Some((lr, best)) => {
                        ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        // objective is bounded below by zero, so a ratio row always exists
        let Some((row, ratio)) = leave else {
            return Err(Error::Degenerate("unbounded phase-one direction".into()));
        };
        degenerate_run = if ratio.abs() < 1e-15 { degenerate_run + 1 } else { 0 };
        pivot(&mut t, width, m + 1, row, col);
        basis[row] = col;
    }
    Err(Error::LpInconclusive(max_iter))
}

fn pivot(t: &mut [f64], width: usize, rows: usize, row: usize, col: usize) {
    let p = t[row * width + col];
    for c in 0..width {
        t[row * width + c] /= p;
    }
    let pivot_row: Vec<f64> = t[row * width..(row + 1) * width].to_vec();
    for r in 0..rows {
        if r == row {
            continue;
        }
        let factor = t[r * width + col];
        if factor == 0.0 {
            continue;
        }
        for c in 0..width {
            t[r * width + c] -= factor * pivot_row[c];
        }
    }
}

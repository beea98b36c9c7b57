//! Majorisation, bistochastic transport and Birkhoff decomposition.
//!
//! Transport runs "backwards": [`hlp_transport`] returns `B` with `p = B q`,
//! i.e. it maps the diagonal of the *final* state `q` onto the diagonal of the
//! *initial* state `p`. A pure-state conversion `p → q` by incoherent
//! operations is possible exactly when such a `B` exists.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::DiagonalState;

/// Row/column sum tolerance for [`Bistochastic::new`].
pub const BISTOCHASTIC_TOL: f64 = 1e-12;

/// Dense doubly stochastic matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bistochastic {
    dim: usize,
    entries: Vec<f64>,
}

impl Bistochastic {
    /// Builds from rows, checking nonnegativity and unit row/column sums.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::Validation("empty matrix".into()));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Validation(format!("row {r} has length {}", row.len())));
            }
            entries.extend(row);
        }
        let m = Self { dim, entries };
        m.check(BISTOCHASTIC_TOL)?;
        Ok(m)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![0.0; dim * dim];
        for k in 0..dim {
            entries[k * dim + k] = 1.0;
        }
        Self { dim, entries }
    }

    /// The matrix with every entry `1/d`.
    pub fn flat(dim: usize) -> Self {
        Self { dim, entries: vec![1.0 / dim as f64; dim * dim] }
    }

    /// Permutation matrix with `M[perm[c]][c] = 1`, i.e. `(M v)[perm[c]] = v[c]`.
    pub fn from_permutation(perm: &[usize]) -> Self {
        let dim = perm.len();
        let mut entries = vec![0.0; dim * dim];
        for (c, &r) in perm.iter().enumerate() {
            entries[r * dim + c] = 1.0;
        }
        Self { dim, entries }
    }

    fn check(&self, tol: f64) -> Result<()> {
        let d = self.dim;
        if let Some(v) = self.entries.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!("negative or non-finite entry {v}")));
        }
        for r in 0..d {
            let s: f64 = self.entries[r * d..(r + 1) * d].iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Validation(format!("row {r} sums to {s}")));
            }
        }
        for c in 0..d {
            let s: f64 = (0..d).map(|r| self.entries[r * d + c]).sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::Validation(format!("column {c} sums to {s}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.dim + c]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Largest entry-wise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn mul(&self, other: &Self) -> Self {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.entries[r * d + k];
                if a == 0.0 {
                    continue;
                }
                for c in 0..d {
                    entries[r * d + c] += a * other.entries[k * d + c];
                }
            }
        }
        Self { dim: d, entries }
    }

    fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d)
            .map(|r| (0..d).map(|c| self.entries[r * d + c] * v[c]).sum())
            .collect()
    }
}

/// Convex combination of permutation matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationMixture {
    dim: usize,
    terms: Vec<(f64, Vec<usize>)>,
}

impl PermutationMixture {
    pub fn new(dim: usize, terms: Vec<(f64, Vec<usize>)>) -> Result<Self> {
        let mut total = 0.0;
        for (w, perm) in &terms {
            if *w < 0.0 || !w.is_finite() {
                return Err(Error::Validation(format!("weight {w} is negative")));
            }
            if !is_permutation(perm, dim) {
                return Err(Error::Validation(format!("{perm:?} is not a permutation of {dim}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > BISTOCHASTIC_TOL {
            return Err(Error::Validation(format!("weights sum to {total}")));
        }
        Ok(Self { dim, terms })
    }

    pub fn terms(&self) -> &[(f64, Vec<usize>)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Dense matrix `Σ r_m Ξ_m`.
    pub fn to_matrix(&self) -> Bistochastic {
        let d = self.dim;
        let mut entries = vec![0.0; d * d];
        for (w, perm) in &self.terms {
            for (c, &r) in perm.iter().enumerate() {
                entries[r * d + c] += w;
            }
        }
        Bistochastic { dim: d, entries }
    }

    /// Mixture of inverse permutations, the dual unital map.
    pub fn dual(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|(w, perm)| {
                let mut inv = vec![0; perm.len()];
                for (c, &r) in perm.iter().enumerate() {
                    inv[r] = c;
                }
                (*w, inv)
            })
            .collect();
        Self { dim: self.dim, terms }
    }
}

fn is_permutation(perm: &[usize], dim: usize) -> bool {
    if perm.len() != dim {
        return false;
    }
    let mut seen = vec![false; dim];
    perm.iter().all(|&k| k < dim && !std::mem::replace(&mut seen[k], true))
}

fn check_dims(p: &DiagonalState, q: &DiagonalState) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    Ok(())
}

/// First descending prefix where `q` fails to dominate `p`.
fn first_violation(p: &DiagonalState, q: &DiagonalState, tol: f64) -> Option<(usize, f64, f64)> {
    let (ps, _) = p.sorted_desc();
    let (qs, _) = q.sorted_desc();
    let (mut sp, mut sq) = (0.0, 0.0);
    for k in 0..ps.len() {
        sp += ps[k];
        sq += qs[k];
        if sp > sq + tol {
            return Some((k + 1, sp, sq));
        }
    }
    if (sp - sq).abs() > tol {
        return Some((ps.len(), sp, sq));
    }
    None
}

/// `p ≺ q`: every descending prefix sum of `q` dominates that of `p`.
pub fn is_majorised(p: &DiagonalState, q: &DiagonalState, tol: f64) -> Result<bool> {
    check_dims(p, q)?;
    Ok(first_violation(p, q, tol).is_none())
}

/// Bistochastic `B` with `p = B q`, built from at most `d - 1` T-transforms.
///
/// Works on descending-sorted copies: at each step the last index `j` where the
/// working vector exceeds `p` and the first later index `k` where it falls short
/// exchange mass until one of them matches its target.
pub fn hlp_transport(p: &DiagonalState, q: &DiagonalState) -> Result<Bistochastic> {
    check_dims(p, q)?;
    if let Some((prefix, lhs, rhs)) = first_violation(p, q, 1e-12) {
        return Err(Error::Majorisation { prefix, lhs, rhs });
    }
    let d = p.dim();
    let (target, p_order) = p.sorted_desc();
    let (mut x, q_order) = q.sorted_desc();
    let mut chain = Bistochastic::identity(d);
    for _ in 0..d {
        let Some(j) = (0..d).rev().find(|&j| x[j] - target[j] > 1e-15) else {
            break;
        };
        let Some(k) = (j + 1..d).find(|&k| target[k] - x[k] > 1e-15) else {
            break;
        };
        let delta = (x[j] - target[j]).min(target[k] - x[k]);
        // x_j' = t x_j + (1 - t) x_k
        let t = (x[j] - delta - x[k]) / (x[j] - x[k]);
        let mut step = Bistochastic::identity(d);
        step.entries[j * d + j] = t;
        step.entries[k * d + k] = t;
        step.entries[j * d + k] = 1.0 - t;
        step.entries[k * d + j] = 1.0 - t;
        x = step.mul_vec(&x);
        chain = step.mul(&chain);
    }
    // p[p_order[r]] = target[r], x_sorted[c] = q[q_order[c]]
    let mut entries = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            entries[p_order[r] * d + q_order[c]] = chain.entries[r * d + c];
        }
    }
    Ok(Bistochastic { dim: d, entries })
}

/// Applies the diagonal action of a unital map: returns `B v`.
pub fn apply_transport(b: &Bistochastic, v: &DiagonalState) -> Result<DiagonalState> {
    if b.dim != v.dim() {
        return Err(Error::DimensionMismatch(b.dim, v.dim()));
    }
    let out = b.mul_vec(v.probs()).into_iter().map(|x| x.max(0.0)).collect();
    DiagonalState::with_tolerance(out, 1e-10)
}

/// Diagonal action of the dual map: the transpose.
pub fn dual(b: &Bistochastic) -> Bistochastic {
    let d = b.dim;
    let mut entries = vec![0.0; d * d];
    for r in 0..d {
        for c in 0..d {
            entries[c * d + r] = b.entries[r * d + c];
        }
    }
    Bistochastic { dim: d, entries }
}

/// Birkhoff–von Neumann decomposition by repeated peeling of perfect matchings.
///
/// Each step takes the lexicographically smallest perfect matching of the
/// support `{entries > tol}` of the residual and subtracts its minimum entry.
pub fn birkhoff(b: &Bistochastic, tol: f64) -> Result<PermutationMixture> {
    let d = b.dim;
    let mut residual = b.entries.clone();
    let mut terms: Vec<(f64, Vec<usize>)> = Vec::new();
    let max_terms = d * d + 1;
    loop {
        let remaining = residual.iter().copied().fold(0.0, f64::max);
        if remaining <= tol {
            break;
        }
        if terms.len() >= max_terms {
            return Err(Error::Degenerate("Birkhoff peeling did not terminate".into()));
        }
        let support: Vec<Vec<bool>> = (0..d)
            .map(|r| (0..d).map(|c| residual[r * d + c] > tol).collect())
            .collect();
        let Some(row_to_col) = lexmin_perfect_matching(&support) else {
            return Err(Error::Degenerate(format!(
                "no perfect matching on residual support (max residual {remaining:e}); tolerance too tight"
            )));
        };
        let weight = (0..d)
            .map(|r| residual[r * d + row_to_col[r]])
            .fold(f64::INFINITY, f64::min);
        for r in 0..d {
            let e = &mut residual[r * d + row_to_col[r]];
            *e -= weight;
            if *e < tol {
                *e = 0.0;
            }
        }
        // store as column -> row to match `from_permutation`
        let mut perm = vec![0; d];
        for (r, &c) in row_to_col.iter().enumerate() {
            perm[c] = r;
        }
        terms.push((weight, perm));
    }
    let limit = (d.max(1) - 1) * (d.max(1) - 1) + 1;
    while terms.len() > limit {
        if !drop_dependent_term(&mut terms, d) {
            break;
        }
    }
    let total: f64 = terms.iter().map(|t| t.0).sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("empty decomposition".into()));
    }
    // absorb round-off so the weights sum to one exactly
    for t in &mut terms {
        t.0 /= total;
    }
    PermutationMixture::new(d, terms)
}

/// Carathéodory step: shifts weight along an affine dependency among the
/// permutation matrices until one weight reaches zero, then drops it.
fn drop_dependent_term(terms: &mut Vec<(f64, Vec<usize>)>, d: usize) -> bool {
    let m = terms.len();
    // columns are the flattened permutation matrices with a trailing 1
    let rows = d * d + 1;
    let mut a = vec![vec![0.0f64; m]; rows];
    for (k, (_, perm)) in terms.iter().enumerate() {
        for (c, &r) in perm.iter().enumerate() {
            a[r * d + c][k] = 1.0;
        }
        a[d * d][k] = 1.0;
    }
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..m {
        if row == rows {
            break;
        }
        let best = (row..rows).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        if a[best][col].abs() < 1e-9 {
            continue;
        }
        a.swap(row, best);
        let lead = a[row][col];
        for v in a[row].iter_mut() {
            *v /= lead;
        }
        for r in 0..rows {
            if r != row && a[r][col] != 0.0 {
                let factor = a[r][col];
                for k in 0..m {
                    a[r][k] -= factor * a[row][k];
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let Some(free) = (0..m).find(|c| !pivots.contains(c)) else {
        return false;
    };
    let mut dir = vec![0.0; m];
    dir[free] = 1.0;
    for (r, &col) in pivots.iter().enumerate() {
        dir[col] = -a[r][free];
    }
    let Some((drop, step)) = dir
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 1e-12)
        .map(|(k, &c)| (k, terms[k].0 / c))
        .min_by(|x, y| x.1.total_cmp(&y.1))
    else {
        return false;
    };
    for (t, c) in terms.iter_mut().zip(&dir) {
        t.0 = (t.0 - step * c).max(0.0);
    }
    terms[drop].0 = 0.0;
    terms.retain(|t| t.0 > 0.0);
    true
}

/// Kuhn augmenting-path step; `fixed_cols` are never reassigned.
fn augment(
    row: usize,
    support: &[Vec<bool>],
    col_owner: &mut [Option<usize>],
    row_to_col: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    for c in 0..support.len() {
        if !support[row][c] || visited[c] {
            continue;
        }
        visited[c] = true;
        let free = match col_owner[c] {
            None => true,
            Some(r2) => augment(r2, support, col_owner, row_to_col, visited),
        };
        if free {
            col_owner[c] = Some(row);
            row_to_col[row] = Some(c);
            return true;
        }
    }
    false
}

/// Lexicographically smallest perfect matching (as row → column), if any.
fn lexmin_perfect_matching(support: &[Vec<bool>]) -> Option<Vec<usize>> {
    let d = support.len();
    let mut col_owner = vec![None; d];
    let mut row_to_col = vec![None; d];
    for r in 0..d {
        let mut visited = vec![false; d];
        if !augment(r, support, &mut col_owner, &mut row_to_col, &mut visited) {
            return None;
        }
    }
    // Improve row by row: row r may take a smaller column c if the row that
    // owns c can be rematched among rows > r, with r's current column freed.
    for r in 0..d {
        let current = row_to_col[r].unwrap();
        for c in 0..current {
            if !support[r][c] {
                continue;
            }
            let owner = col_owner[c].unwrap();
            if owner < r {
                continue;
            }
            let (mut trial_owner, mut trial_rows) = (col_owner.clone(), row_to_col.clone());
            trial_owner[current] = None;
            trial_owner[c] = Some(r);
            trial_rows[r] = Some(c);
            trial_rows[owner] = None;
            let mut visited = vec![false; d];
            visited[c] = true;
            for rr in 0..r {
                visited[row_to_col[rr].unwrap()] = true;
            }
            if augment(owner, support, &mut trial_owner, &mut trial_rows, &mut visited) {
                col_owner = trial_owner;
                row_to_col = trial_rows;
                break;
            }
        }
    }
    Some(row_to_col.into_iter().map(Option::unwrap).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(v: &[f64]) -> DiagonalState {
        DiagonalState::new(v.to_vec()).unwrap()
    }

    fn max_err(b: &Bistochastic, p: &DiagonalState, q: &DiagonalState) -> f64 {
        b.mul_vec(q.probs())
            .iter()
            .zip(p.probs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn majorisation_examples() {
        assert!(is_majorised(&st(&[0.5, 0.5]), &st(&[0.7, 0.3]), 1e-12).unwrap());
        assert!(is_majorised(&st(&[0.5, 0.3, 0.2]), &st(&[0.6, 0.3, 0.1]), 1e-12).unwrap());
        assert!(!is_majorised(&st(&[0.5, 0.49, 0.01]), &st(&[0.8, 0.1, 0.1]), 1e-12).unwrap());
        assert!(matches!(
            is_majorised(&st(&[1.0]), &st(&[0.5, 0.5]), 1e-12),
            Err(Error::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn transport_single_t_transform() {
        let b = hlp_transport(&st(&[0.6, 0.4]), &st(&[1.0, 0.0])).unwrap();
        let expect = Bistochastic::new(vec![vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap();
        assert!(b.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn transport_identity_and_flat() {
        let p = st(&[0.1, 0.6, 0.3]);
        let b = hlp_transport(&p, &p).unwrap();
        assert!(b.max_abs_diff(&Bistochastic::identity(3)) < 1e-15);

        let u = st(&[0.25; 4]);
        let q = st(&[0.05, 0.7, 0.2, 0.05]);
        // flat matrix is a valid answer; the returned one must still transport
        assert!(max_err(&Bistochastic::flat(4), &u, &q) < 1e-15);
        let b = hlp_transport(&u, &q).unwrap();
        b.check(1e-12).unwrap();
        assert!(max_err(&b, &u, &q) < 1e-12);
    }

    #[test]
    fn transport_unsorted_inputs() {
        let p = st(&[0.2, 0.5, 0.3]);
        let q = st(&[0.1, 0.3, 0.6]);
        let b = hlp_transport(&p, &q).unwrap();
        b.check(1e-12).unwrap();
        assert!(max_err(&b, &p, &q) < 1e-12);
    }

    #[test]
    fn transport_reports_violated_prefix() {
        let err = hlp_transport(&st(&[0.5, 0.49, 0.01]), &st(&[0.8, 0.1, 0.1])).unwrap_err();
        assert!(matches!(err, Error::Majorisation { prefix: 2, .. }));
    }

    #[test]
    fn birkhoff_examples() {
        let b = Bistochastic::new(vec![vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap();
        let mix = birkhoff(&b, 1e-14).unwrap();
        assert_eq!(mix.len(), 2);
        assert_eq!(mix.terms()[0].1, vec![0, 1]);
        assert!((mix.terms()[0].0 - 0.6).abs() < 1e-15);
        assert_eq!(mix.terms()[1].1, vec![1, 0]);

        let mix = birkhoff(&Bistochastic::identity(5), 1e-14).unwrap();
        assert_eq!(mix.terms(), &[(1.0, vec![0, 1, 2, 3, 4])]);

        let flat = Bistochastic::flat(3);
        let mix = birkhoff(&flat, 1e-14).unwrap();
        assert_eq!(mix.len(), 3);
        for (w, _) in mix.terms() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(mix.to_matrix().max_abs_diff(&flat) < 1e-12);
    }

    #[test]
    fn lexmin_matching_prefers_small_columns() {
        let all = vec![vec![true; 3]; 3];
        assert_eq!(lexmin_perfect_matching(&all).unwrap(), vec![0, 1, 2]);
        let no_diag: Vec<Vec<bool>> = (0..3).map(|r| (0..3).map(|c| r != c).collect()).collect();
        assert_eq!(lexmin_perfect_matching(&no_diag).unwrap(), vec![1, 2, 0]);
        let blocked = vec![vec![true, false], vec![true, false]];
        assert!(lexmin_perfect_matching(&blocked).is_none());
    }

    #[test]
    fn apply_and_dual() {
        let v = st(&[0.2, 0.8]);
        assert_eq!(apply_transport(&Bistochastic::identity(2), &v).unwrap(), v);
        let flat = apply_transport(&Bistochastic::flat(2), &v).unwrap();
        assert!((flat.get(0) - 0.5).abs() < 1e-15);
        let b = Bistochastic::new(vec![vec![0.6, 0.4], vec![0.4, 0.6]]).unwrap();
        let out = apply_transport(&b, &st(&[1.0, 0.0])).unwrap();
        assert_eq!(out.probs(), &[0.6, 0.4]);

        assert_eq!(dual(&b), b);
        let perm = Bistochastic::from_permutation(&[1, 2, 0]);
        let inv = Bistochastic::from_permutation(&[2, 0, 1]);
        assert_eq!(dual(&perm), inv);
        assert!(apply_transport(&b, &st(&[1.0])).is_err());
    }

    #[test]
    fn mixture_dual_is_transpose() {
        let mix = PermutationMixture::new(3, vec![(0.25, vec![1, 2, 0]), (0.75, vec![0, 2, 1])])
            .unwrap();
        assert!(mix.dual().to_matrix().max_abs_diff(&dual(&mix.to_matrix())) < 1e-15);
        assert!(PermutationMixture::new(2, vec![(1.0, vec![0, 0])]).is_err());
        assert!(PermutationMixture::new(2, vec![(0.5, vec![0, 1])]).is_err());
    }

    #[test]
    fn dependent_terms_are_dropped() {
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let mut terms: Vec<(f64, Vec<usize>)> = perms.iter().map(|p| (1.0 / 6.0, p.to_vec())).collect();
        assert!(drop_dependent_term(&mut terms, 3));
        assert!(terms.len() <= 5);
        let mix = PermutationMixture::new(3, terms).unwrap();
        assert!(mix.to_matrix().max_abs_diff(&Bistochastic::flat(3)) < 1e-12);
    }
}

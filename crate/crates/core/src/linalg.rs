//! Linear solves for the Newton system: banded LU for single slender patches,
//! dense LU for small systems, sparse LU otherwise.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Systems up to this size fall back to dense LU when not narrowly banded.
pub const DENSE_LIMIT: usize = 600;

/// Which factorization a solve used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Banded,
    Dense,
    Sparse,
}

/// Sorts the entries and sums duplicates.
pub fn compress(triplets: &[(usize, usize, f64)]) -> Vec<(usize, usize, f64)> {
    let mut t = triplets.to_vec();
    t.sort_unstable_by_key(|&(i, j, _)| (j, i));
    let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(t.len());
    for (i, j, v) in t {
        match out.last_mut() {
            Some(last) if last.0 == i && last.1 == j => last.2 += v,
            _ => out.push((i, j, v)),
        }
    }
    out
}

/// Lower and upper bandwidths of a pattern.
pub fn bandwidths(triplets: &[(usize, usize, f64)]) -> (usize, usize) {
    triplets.iter().fold((0, 0), |(kl, ku), &(i, j, _)| {
        if i > j {
            (kl.max(i - j), ku)
        } else {
            (kl, ku.max(j - i))
        }
    })
}

/// LU factorization with partial pivoting of a band matrix.
///
/// Column-major band storage as in LAPACK `gbtrf`: entry `(i, j)` sits at
/// row `kl + ku + i − j` of column `j`, the extra `kl` rows holding fill-in.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    ab: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    fn ld(&self) -> usize {
        2 * self.kl + self.ku + 1
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ld()
    }

    pub fn factor(n: usize, kl: usize, ku: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let ld = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            ab: vec![0.0; ld * n],
            pivots: vec![0; n],
        };
        for &(i, j, v) in triplets {
            if i >= n || j >= n || i > j + kl || j > i + ku {
                return Err(Error::Contract(format!("entry ({i}, {j}) outside the band")));
            }
            let k = lu.idx(i, j);
            lu.ab[k] += v;
        }
        let scale = lu.ab.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ku_fill = kl + ku;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let mut p = j;
            let mut best = lu.ab[lu.idx(j, j)].abs();
            for i in j + 1..=j + km {
                let v = lu.ab[lu.idx(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > scale * 1e-300) || !best.is_finite() {
                return Err(Error::Solve(format!("singular pivot in column {j}")));
            }
            lu.pivots[j] = p;
            let last = (j + ku_fill).min(n - 1);
            if p != j {
                for c in j..=last {
                    let (a, b) = (lu.idx(j, c), lu.idx(p, c));
                    lu.ab.swap(a, b);
                }
            }
            let d = lu.ab[lu.idx(j, j)];
            for i in j + 1..=j + km {
                let k = lu.idx(i, j);
                let l = lu.ab[k] / d;
                lu.ab[k] = l;
                if l != 0.0 {
                    for c in j + 1..=last {
                        let u = lu.ab[lu.idx(j, c)];
                        let t = lu.idx(i, c);
                        lu.ab[t] -= l * u;
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut b = rhs.to_vec();
        for j in 0..n {
            b.swap(j, self.pivots[j]);
            let km = self.kl.min(n - 1 - j);
            for i in j + 1..=j + km {
                b[i] -= self.ab[self.idx(i, j)] * b[j];
            }
        }
        let w = self.kl + self.ku;
        for j in (0..n).rev() {
            let mut s = b[j];
            for c in j + 1..=(j + w).min(n - 1) {
                s -= self.ab[self.idx(j, c)] * b[c];
            }
            b[j] = s / self.ab[self.idx(j, j)];
        }
        b
    }
}

#[cfg(test)]
fn dense_solve(n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<Vec<f64>> {
    let mut a = DMatrix::zeros(n, n);
    for &(i, j, v) in triplets {
        a[(i, j)] += v;
    }
    let x = a
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .ok_or_else(|| Error::Solve("singular dense system".into()))?;
    Ok(x.as_slice().to_vec())
}

/// Picks a factorization from the sparsity pattern.
pub fn choose_method(n: usize, kl: usize, ku: usize) -> Method {
    if 4 * (kl + ku) < n {
        Method::Banded
    } else if n <= DENSE_LIMIT {
        Method::Dense
    } else {
        Method::Sparse
    }
}

/// Row then column scale factors that bring every row and column max to one.
fn equilibrate(n: usize, t: &[(usize, usize, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut row = vec![0.0f64; n];
    for &(i, _, v) in t {
        row[i] = row[i].max(v.abs());
    }
    if let Some(i) = row.iter().position(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::Solve(format!("row {i} is empty or non-finite")));
    }
    row.iter_mut().for_each(|m| *m = 1.0 / *m);
    let mut col = vec![0.0f64; n];
    for &(i, j, v) in t {
        col[j] = col[j].max((v * row[i]).abs());
    }
    if let Some(j) = col.iter().position(|&m| !(m > 0.0)) {
        return Err(Error::Solve(format!("column {j} is empty")));
    }
    col.iter_mut().for_each(|m| *m = 1.0 / *m);
    Ok((row, col))
}

fn residual_of(n: usize, t: &[(usize, usize, f64)], x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    for &(i, j, v) in t {
        r[i] -= v * x[j];
    }
    debug_assert_eq!(r.len(), n);
    r
}

/// Iterative-refinement sweeps after the first solve.
const REFINEMENT_SWEEPS: usize = 3;

/// Solves `A x = b` for a square system given by (possibly repeated) triplets.
///
/// The matrix is equilibrated (rows, then columns) before factorization and
/// the solution is polished by iterative refinement; beam systems mix rows
/// of very different magnitude (axial, bending, joint continuity).
pub fn solve(n: usize, triplets: &[(usize, usize, f64)], rhs: &[f64]) -> Result<(Vec<f64>, Method)> {
    if rhs.len() != n {
        return Err(Error::Contract("right-hand side length differs from the system size".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), Method::Dense));
    }
    let t = compress(triplets);
    let (row, col) = equilibrate(n, &t)?;
    let scaled: Vec<(usize, usize, f64)> = t.iter().map(|&(i, j, v)| (i, j, v * row[i] * col[j])).collect();
    let (kl, ku) = bandwidths(&scaled);
    let method = choose_method(n, kl, ku);
    enum Factor {
        Banded(BandedLu),
        Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
        Sparse(faer::sparse::linalg::solvers::Lu<usize, f64>),
    }
    let factor = match method {
        Method::Banded => Factor::Banded(BandedLu::factor(n, kl, ku, &scaled)?),
        Method::Dense => {
            let mut a = DMatrix::zeros(n, n);
            for &(i, j, v) in &scaled {
                a[(i, j)] += v;
            }
            Factor::Dense(a.lu())
        }
        Method::Sparse => {
            let entries: Vec<Triplet<usize, usize, f64>> = scaled.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
            let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &entries)
                .map_err(|e| Error::Solve(format!("sparse matrix: {e:?}")))?;
            Factor::Sparse(a.sp_lu().map_err(|e| Error::Solve(format!("sparse LU: {e:?}")))?)
        }
    };
    // solves A d = r through the scaled factorization
    let apply = |r: &[f64]| -> Result<Vec<f64>> {
        let rb: Vec<f64> = r.iter().zip(&row).map(|(v, s)| v * s).collect();
        let y = match &factor {
            Factor::Banded(lu) => lu.solve(&rb),
            Factor::Dense(lu) => lu
                .solve(&DVector::from_column_slice(&rb))
                .ok_or_else(|| Error::Solve("singular dense system".into()))?
                .as_slice()
                .to_vec(),
            Factor::Sparse(lu) => {
                let y = lu.solve(&Col::from_fn(n, |i| rb[i]));
                (0..n).map(|i| y[i]).collect()
            }
        };
        Ok(y.iter().zip(&col).map(|(v, s)| v * s).collect())
    };
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut x = apply(rhs)?;
    let mut r = residual_of(n, &t, &x, rhs);
    // scaled residual decides whether a sweep helped
    let scaled_norm = |r: &[f64]| r.iter().zip(&row).fold(0.0f64, |m, (v, s)| m.max((v * s).abs()));
    let mut best = scaled_norm(&r);
    for _ in 0..REFINEMENT_SWEEPS {
        if !(best > 0.0) || !best.is_finite() {
            break;
        }
        let d = apply(&r)?;
        let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        let rt = residual_of(n, &t, &trial, rhs);
        let nt = scaled_norm(&rt);
        if !(nt < 0.5 * best) {
            if nt < best {
                x = trial;
            }
            break;
        }
        x = trial;
        r = rt;
        best = nt;
    }
    if x.iter().any(|v| !v.is_finite()) || !norm(&x).is_finite() {
        return Err(Error::Solve("linear solve produced non-finite values".into()));
    }
    Ok((x, method))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> Vec<(usize, usize, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                t.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
        t
    }

    fn residual(n: usize, t: &[(usize, usize, f64)], x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; n];
        for &(i, j, v) in t {
            ax[i] += v * x[j];
        }
        ax.iter().zip(b).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    #[test]
    fn banded_matches_dense() {
        let n = 120;
        let t = random_band(n, 7, 11, 3);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let xb = BandedLu::factor(n, 7, 11, &t).unwrap().solve(&b);
        let xd = dense_solve(n, &t, &b).unwrap();
        for (u, v) in xb.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-8 * (1.0 + v.abs()));
        }
        assert!(residual(n, &t, &xb, &b) < 1e-9);
    }

    #[test]
    fn banded_needs_pivoting() {
        // zero on the diagonal forces a row exchange
        let t = vec![(0, 0, 0.0), (0, 1, 1.0), (1, 0, 2.0), (1, 1, 1.0), (2, 1, 1.0), (2, 2, 3.0)];
        let x = BandedLu::factor(3, 1, 1, &t).unwrap().solve(&[1.0, 4.0, 7.0]);
        assert!(residual(3, &t, &x, &[1.0, 4.0, 7.0]) < 1e-14);
    }

    #[test]
    fn sparse_path_solves_large_system() {
        let n = 900;
        let mut t = random_band(n, 3, 3, 9);
        for i in 0..n {
            t.push((i, i, 8.0));
        }
        // long-range couplings defeat the band
        t.push((0, n - 1, 0.5));
        t.push((n - 1, 0, 0.5));
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 1e-3).collect();
        let (x, m) = solve(n, &t, &b).unwrap();
        assert_eq!(m, Method::Sparse);
        assert!(residual(n, &t, &x, &b) < 1e-10);
    }

    #[test]
    fn duplicates_are_summed_and_singular_detected() {
        let t = vec![(0, 0, 1.0), (0, 0, 1.0), (1, 1, 4.0)];
        let (x, _) = solve(2, &t, &[2.0, 2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
        assert!(solve(2, &[(0, 0, 1.0)], &[1.0, 1.0]).is_err());
    }
}

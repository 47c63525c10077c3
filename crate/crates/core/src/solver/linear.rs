//! Weighted graph Laplacians restricted to the free vertices, and the two
//! ways of solving them.
//!
//! The matrix is `A = Σ_e w_e (χ_i - χ_j)(χ_i - χ_j)^T` over free–free edges
//! plus a diagonal contribution from free–fixed edges. It is symmetric
//! positive definite whenever every free component touches a fixed vertex.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::{ColMut, Side};

use crate::error::{Error, Result};

/// A weighted Laplacian on `n` free vertices: off-diagonal edge weights and
/// the full diagonal.
pub(crate) struct WeightedLaplacian<'a> {
    pub edges: &'a [(u32, u32)],
    pub weights: &'a [f64],
    pub diag: &'a [f64],
}

impl WeightedLaplacian<'_> {
    fn n(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, di), xi) in y.iter_mut().zip(self.diag).zip(x) {
            *yi = di * xi;
        }
        for (&(i, j), &w) in self.edges.iter().zip(self.weights) {
            let (i, j) = (i as usize, j as usize);
            y[i] -= w * x[j];
            y[j] -= w * x[i];
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct CgSettings {
    pub rel_tolerance: f64,
    pub max_iterations: usize,
}

pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub converged: bool,
}

/// Jacobi-preconditioned conjugate gradients, warm-started from `x`.
pub(crate) fn conjugate_gradient(
    a: &WeightedLaplacian<'_>,
    b: &[f64],
    x: &mut [f64],
    settings: CgSettings,
) -> CgOutcome {
    let n = a.n();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return CgOutcome {
            iterations: 0,
            converged: true,
        };
    }
    let target = settings.rel_tolerance * b_norm;
    let inv_diag: Vec<f64> = a.diag.iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..settings.max_iterations {
        if norm(&r) <= target {
            return CgOutcome {
                iterations: it,
                converged: true,
            };
        }
        a.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return CgOutcome {
                iterations: it,
                converged: false,
            };
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome {
        iterations: settings.max_iterations,
        converged: norm(&r) <= target,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sparse Cholesky of a weighted Laplacian whose sparsity pattern is fixed;
/// the symbolic analysis (with fill-reducing ordering) runs once and is
/// reused for every new set of weights.
pub(crate) struct CholeskyCache {
    pattern: SymbolicSparseColMat<usize>,
    symbolic: SymbolicLlt<usize>,
    diag_slot: Vec<usize>,
    edge_slot: Vec<usize>,
    values: Vec<f64>,
}

impl CholeskyCache {
    pub fn new(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        // Lower triangle: column min(i, j), row max(i, j); diagonal first.
        let mut per_column: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            per_column[lo as usize].push((hi as usize, e));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::with_capacity(n + edges.len());
        let mut diag_slot = vec![0; n];
        let mut edge_slot = vec![0; edges.len()];
        col_ptr.push(0);
        for (col, entries) in per_column.iter_mut().enumerate() {
            entries.sort_unstable();
            diag_slot[col] = row_idx.len();
            row_idx.push(col);
            for &(row, e) in entries.iter() {
                edge_slot[e] = row_idx.len();
                row_idx.push(row);
            }
            col_ptr.push(row_idx.len());
        }
        let nnz = row_idx.len();
        let pattern = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        let symbolic = SymbolicLlt::try_new(pattern.as_ref(), Side::Lower)
            .map_err(|e| Error::LinearSolve(format!("symbolic factorization: {e:?}")))?;
        Ok(Self {
            pattern,
            symbolic,
            diag_slot,
            edge_slot,
            values: vec![0.0; nnz],
        })
    }

    pub fn solve(&mut self, a: &WeightedLaplacian<'_>, b: &[f64]) -> Result<Vec<f64>> {
        for (slot, &d) in self.diag_slot.iter().zip(a.diag) {
            self.values[*slot] = d;
        }
        for (slot, &w) in self.edge_slot.iter().zip(a.weights) {
            self.values[*slot] = -w;
        }
        let mat = SparseColMatRef::new(self.pattern.as_ref(), &self.values);
        let llt = Llt::try_new_with_symbolic(self.symbolic.clone(), mat, Side::Lower)
            .map_err(|e| Error::LinearSolve(format!("numeric factorization: {e:?}")))?;
        let mut x = b.to_vec();
        llt.solve_in_place(ColMut::from_slice_mut(&mut x));
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 0 - 1 - 2 chain with both ends tied to a fixed vertex: tridiag(2,-1).
    fn chain() -> (Vec<(u32, u32)>, Vec<f64>, Vec<f64>) {
        (vec![(0, 1), (1, 2)], vec![1.0, 1.0], vec![2.0, 2.0, 2.0])
    }

    #[test]
    fn cholesky_and_cg_agree_on_a_chain() {
        let (edges, w, diag) = chain();
        let a = WeightedLaplacian {
            edges: &edges,
            weights: &w,
            diag: &diag,
        };
        let b = [1.0, 0.0, 0.0];
        let mut chol = CholeskyCache::new(3, &edges).unwrap();
        let direct = chol.solve(&a, &b).unwrap();
        // Exact inverse of tridiag(2,-1) first column: (3/4, 1/2, 1/4).
        for (x, e) in direct.iter().zip([0.75, 0.5, 0.25]) {
            assert!((x - e).abs() < 1e-14);
        }
        let mut x = vec![0.0; 3];
        let out = conjugate_gradient(
            &a,
            &b,
            &mut x,
            CgSettings {
                rel_tolerance: 1e-14,
                max_iterations: 10,
            },
        );
        assert!(out.converged);
        for (x, e) in x.iter().zip(&direct) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let (edges, w, diag) = chain();
        let a = WeightedLaplacian {
            edges: &edges,
            weights: &w,
            diag: &diag,
        };
        let mut x = vec![1.0; 3];
        let out = conjugate_gradient(
            &a,
            &[0.0; 3],
            &mut x,
            CgSettings {
                rel_tolerance: 1e-12,
                max_iterations: 5,
            },
        );
        assert!(out.converged);
        assert_eq!(x, vec![0.0; 3]);
    }
}

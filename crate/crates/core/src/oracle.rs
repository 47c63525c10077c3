//! Slow reference implementations for cross-checking.
//!
//! Nothing here calls into the graph builder or the solver: cells are
//! generated by literally applying the similitudes to boxes, adjacency is
//! decided by intersecting closed boxes, and the Dirichlet problem is
//! minimized by exact coordinate descent.

use crate::error::{Error, Result};
use crate::graph::AdjacencyMode;
use crate::lattice::FractalSpec;
use crate::solver::{ConductanceResult, DirichletProblem};

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    /// Stop once a full sweep lowers the energy by less than this.
    pub step_tolerance: f64,
    pub max_vertices: usize,
    pub max_sweeps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            step_tolerance: 1e-10,
            max_vertices: 50,
            max_sweeps: 2_000_000,
        }
    }
}

fn pow_abs(t: f64, p: f64) -> f64 {
    t.abs().powf(p)
}

/// Exact coordinate descent on `Σ |f(u) - f(v)|^p`.
///
/// Each one-dimensional subproblem is minimized by bisection on its
/// derivative, which is monotone; the minimizer lies between the smallest
/// and largest neighbour value.
pub fn brute_solve(problem: &DirichletProblem<'_>, config: &OracleConfig) -> Result<ConductanceResult> {
    let graph = problem.graph();
    let fixed = problem.fixed();
    let p = problem.p();
    let n = graph.vertex_count();
    let free: Vec<usize> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    if free.len() > config.max_vertices {
        return Err(Error::OracleCap {
            found: free.len(),
            cap: config.max_vertices,
        });
    }
    // Neighbours with edge weights.
    let nbrs: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|v| {
            let ws = graph.neighbor_weights(v);
            graph
                .neighbors(v)
                .iter()
                .enumerate()
                .map(|(k, &w)| (w as usize, ws.map_or(1.0, |x| x[k])))
                .collect()
        })
        .collect();

    // Free vertices without a path to the data are pinned at 0.
    let mut anchored = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&v| fixed[v].is_some()).collect();
    for &v in &stack {
        anchored[v] = true;
    }
    while let Some(v) = stack.pop() {
        for &(w, _) in &nbrs[v] {
            if !anchored[w] {
                anchored[w] = true;
                stack.push(w);
            }
        }
    }

    let mut f: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    let lo = fixed.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = fixed.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    for &v in &free {
        if anchored[v] {
            f[v] = 0.5 * (lo + hi);
        }
    }
    let total = |f: &[f64]| -> f64 {
        let mut e = 0.0;
        for u in 0..n {
            for &(w, k) in &nbrs[u] {
                if u < w {
                    e += k * pow_abs(f[u] - f[w], p);
                }
            }
        }
        e
    };

    let mut current = total(&f);
    let mut sweeps = 0;
    let mut converged = false;
    let scale = (hi - lo).abs().max(f64::MIN_POSITIVE);
    let is_free = |v: usize| fixed[v].is_none() && anchored[v];
    while sweeps < config.max_sweeps {
        sweeps += 1;
        for &v in &free {
            if !is_free(v) || nbrs[v].is_empty() {
                continue;
            }
            // Single-vertex move: shift by s, boundary = all neighbours.
            let pulls: Vec<(f64, f64)> = nbrs[v].iter().map(|&(w, k)| (f[w] - f[v], k)).collect();
            f[v] += best_shift(&pulls, p);
        }
        // Near p = 1 single-vertex moves stall once neighbouring free values
        // coincide; shift whole near-level clusters as one variable.
        for tau in [1e-2, 1e-4, 1e-6, 1e-9] {
            for cluster in level_clusters(&free, &nbrs, &f, &is_free, tau * scale) {
                if cluster.len() < 2 {
                    continue;
                }
                let inside = |w: usize| cluster.binary_search(&w).is_ok();
                let pulls: Vec<(f64, f64)> = cluster
                    .iter()
                    .flat_map(|&u| nbrs[u].iter().filter(|e| !inside(e.0)).map(move |&(w, k)| (u, w, k)))
                    .map(|(u, w, k)| (f[w] - f[u], k))
                    .collect();
                if pulls.is_empty() {
                    continue;
                }
                let s = best_shift(&pulls, p);
                let before = total(&f);
                for &u in &cluster {
                    f[u] += s;
                }
                if total(&f) > before {
                    for &u in &cluster {
                        f[u] -= s;
                    }
                }
            }
        }
        let next = total(&f);
        let decrease = current - next;
        current = next;
        if decrease < config.step_tolerance {
            converged = true;
            break;
        }
    }
    let unanchored = free.iter().filter(|&&v| !anchored[v]).count();
    Ok(ConductanceResult {
        value: current,
        solution: f,
        iterations: sweeps,
        residual: 0.0,
        converged,
        backend: "oracle-coordinate-descent".into(),
        unanchored,
    })
}

/// Minimizer over `s` of `Σ k |s - y|^p` for weighted pulls `(y, k)`, by
/// bisection on the derivative.
fn best_shift(pulls: &[(f64, f64)], p: f64) -> f64 {
    let derivative = |s: f64| -> f64 {
        pulls
            .iter()
            .map(|&(y, k)| {
                let t = s - y;
                k * p * t.abs().powf(p - 1.0) * t.signum()
            })
            .sum()
    };
    let mut a = pulls.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    let mut b = pulls.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if derivative(mid) > 0.0 {
            b = mid;
        } else {
            a = mid;
        }
    }
    0.5 * (a + b)
}

/// Components of free vertices joined by edges whose values differ by at
/// most `tau`; each component sorted.
fn level_clusters(
    free: &[usize],
    nbrs: &[Vec<(usize, f64)>],
    f: &[f64],
    is_free: &dyn Fn(usize) -> bool,
    tau: f64,
) -> Vec<Vec<usize>> {
    let mut seen = vec![false; nbrs.len()];
    let mut out = Vec::new();
    for &start in free {
        if seen[start] || !is_free(start) {
            continue;
        }
        seen[start] = true;
        let mut cluster = vec![start];
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &(w, _) in &nbrs[u] {
                if !seen[w] && is_free(w) && (f[w] - f[u]).abs() <= tau {
                    seen[w] = true;
                    cluster.push(w);
                    stack.push(w);
                }
            }
        }
        cluster.sort_unstable();
        out.push(cluster);
    }
    out
}

/// Level-`n` cells by repeated application of the similitudes
/// `x ↦ (x + corner)/5`, as integer lower corners in units of `5^-n`,
/// converted to 1-based coordinates and sorted lexicographically.
pub fn enumerate_cells(spec: &FractalSpec, level: u32) -> Vec<Vec<u32>> {
    let d = spec.dimension();
    let mut cells: Vec<Vec<u64>> = vec![vec![0; d]];
    for k in 0..level {
        // Ψ_Q(previous level) for each retained level-1 cell Q.
        let width = 5u64.pow(k);
        let mut next = Vec::new();
        for q in spec.retained() {
            for c in &cells {
                next.push(
                    q.iter()
                        .zip(c)
                        .map(|(&qi, &ci)| (qi as u64 - 1) * width + ci)
                        .collect(),
                );
            }
        }
        cells = next;
    }
    let mut out: Vec<Vec<u32>> = cells
        .into_iter()
        .map(|c| c.into_iter().map(|x| x as u32 + 1).collect())
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Dimension of the intersection of two closed unit boxes with integer
/// lower corners, or `None` when they are disjoint.
fn intersection_dimension(a: &[u32], b: &[u32]) -> Option<usize> {
    let mut dim = 0;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as i64, y as i64);
        let lo = x.max(y);
        let hi = (x + 1).min(y + 1);
        if lo > hi {
            return None;
        }
        if hi > lo {
            dim += 1;
        }
    }
    Some(dim)
}

/// Largest vertex count [`exhaustive_adjacency`] accepts (F3 at level 2 fits).
pub const EXHAUSTIVE_CAP: usize = 15_000;

/// All adjacent pairs `(i, j)`, `i < j`, by pairwise box intersection.
pub fn exhaustive_adjacency(spec: &FractalSpec, level: u32, mode: AdjacencyMode) -> Result<Vec<(usize, usize)>> {
    let count = (spec.retained_count() as u128).pow(level);
    if count > EXHAUSTIVE_CAP as u128 {
        return Err(Error::BudgetExceeded {
            requested: count,
            cap: EXHAUSTIVE_CAP,
        });
    }
    let cells = enumerate_cells(spec, level);
    let d = spec.dimension();
    let mut edges = Vec::new();
    for i in 0..cells.len() {
        for j in i + 1..cells.len() {
            let Some(dim) = intersection_dimension(&cells[i], &cells[j]) else {
                continue;
            };
            let adjacent = match mode {
                AdjacencyMode::NonemptyIntersection => true,
                AdjacencyMode::SharedAtLeastEdge => dim >= 1,
                AdjacencyMode::SharedFace => dim + 1 == d,
            };
            if adjacent {
                edges.push((i, j));
            }
        }
    }
    Ok(edges)
}

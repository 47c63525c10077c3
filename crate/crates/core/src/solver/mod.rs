//! Discrete `p`-energies and the `p`-harmonic Dirichlet problem.
//!
//! The energy of `f` on a graph is `Σ_{u~v} |f(u) - f(v)|^p` over unordered
//! adjacent pairs. Minimizing it with some vertices pinned gives the
//! effective `p`-conductance between the pinned sets.
//!
//! `p = 2` is a single Laplacian solve. For other `p` the minimizer is found
//! on the smoothed energy `Σ ((Δ² + ε²)^{p/2} - ε^p)` with `ε` shrinking
//! geometrically from `smoothing_start·R` to `smoothing_end·R` (`R` the range
//! of the fixed values), each stage warm-started from the last. Every step
//! solves a weighted Laplacian: Newton weights `φ''(Δ)` for
//! [`GeneralBackend::DampedNewton`], majorizer weights `φ'(Δ)/Δ` for
//! [`GeneralBackend::Irls`], followed by an Armijo backtracking line search.

mod linear;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Adjacency;

pub(crate) use linear::{conjugate_gradient, CgSettings, CholeskyCache, WeightedLaplacian};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinearBackend {
    /// Sparse Cholesky with a fill-reducing ordering.
    Direct,
    /// Jacobi-preconditioned conjugate gradients.
    ConjugateGradient,
}

impl LinearBackend {
    pub fn as_str(self) -> &'static str {
        match self {
            LinearBackend::Direct => "direct",
            LinearBackend::ConjugateGradient => "conjugate-gradient",
        }
    }
}

impl std::str::FromStr for LinearBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(LinearBackend::Direct),
            "cg" | "conjugate-gradient" => Ok(LinearBackend::ConjugateGradient),
            _ => Err(Error::Parse(format!("unknown linear backend `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneralBackend {
    Irls,
    DampedNewton,
}

impl GeneralBackend {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneralBackend::Irls => "irls",
            GeneralBackend::DampedNewton => "damped-newton",
        }
    }
}

impl std::str::FromStr for GeneralBackend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "irls" => Ok(GeneralBackend::Irls),
            "newton" | "damped-newton" => Ok(GeneralBackend::DampedNewton),
            _ => Err(Error::Parse(format!("unknown general-p backend `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Bound on both the relative energy decrease of the last step and the
    /// scaled gradient norm `‖∇F‖_∞ / (1 + F)`.
    pub rel_tolerance: f64,
    /// Cap on outer (reweighting or Newton) iterations over all stages.
    pub max_iterations: usize,
    /// Linear solver for `p = 2`.
    pub p2_backend: LinearBackend,
    pub general_backend: GeneralBackend,
    /// Linear solver for the weighted systems inside the `p ≠ 2` iteration.
    pub inner_backend: LinearBackend,
    pub smoothing_start: f64,
    pub smoothing_end: f64,
    /// Cap on conjugate-gradient iterations per linear solve.
    pub cg_max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-8,
            max_iterations: 10_000,
            p2_backend: LinearBackend::Direct,
            general_backend: GeneralBackend::DampedNewton,
            inner_backend: LinearBackend::Direct,
            smoothing_start: 1e-2,
            smoothing_end: 1e-8,
            cg_max_iterations: 200_000,
        }
    }
}

impl SolverConfig {
    /// Conjugate gradients everywhere; for systems too large to factor.
    pub fn iterative() -> Self {
        Self {
            p2_backend: LinearBackend::ConjugateGradient,
            inner_backend: LinearBackend::ConjugateGradient,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.rel_tolerance > 0.0
            && self.max_iterations > 0
            && self.smoothing_end > 0.0
            && self.smoothing_start >= self.smoothing_end
            && self.cg_max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidProblem(format!("invalid solver configuration {self:?}")))
        }
    }
}

/// A graph, Dirichlet data on some of its vertices, and an exponent.
#[derive(Clone, Debug)]
pub struct DirichletProblem<'g> {
    graph: &'g Adjacency,
    fixed: Vec<Option<f64>>,
    p: f64,
}

pub(crate) fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

impl<'g> DirichletProblem<'g> {
    pub fn new(graph: &'g Adjacency, fixed: Vec<Option<f64>>, p: f64) -> Result<Self> {
        check_exponent(p)?;
        if fixed.len() != graph.vertex_count() {
            return Err(Error::MissingValues {
                expected: graph.vertex_count(),
                found: fixed.len(),
            });
        }
        if fixed.iter().all(Option::is_none) {
            return Err(Error::InvalidProblem("no fixed vertices".into()));
        }
        if fixed.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("fixed values must be finite".into()));
        }
        Ok(Self { graph, fixed, p })
    }

    /// Pins `(vertex, value)` pairs; a vertex listed twice keeps the last value.
    pub fn from_pairs(graph: &'g Adjacency, pairs: &[(usize, f64)], p: f64) -> Result<Self> {
        let mut fixed = vec![None; graph.vertex_count()];
        for &(v, value) in pairs {
            *fixed.get_mut(v).ok_or_else(|| {
                Error::InvalidProblem(format!("fixed vertex {v} is not in the graph"))
            })? = Some(value);
        }
        Self::new(graph, fixed, p)
    }

    pub fn graph(&self) -> &'g Adjacency {
        self.graph
    }

    pub fn fixed(&self) -> &[Option<f64>] {
        &self.fixed
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn with_p(&self, p: f64) -> Result<Self> {
        check_exponent(p)?;
        Ok(Self {
            p,
            ..self.clone()
        })
    }

    /// Same graph with every fixed value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let fixed = self.fixed.iter().map(|v| v.map(|x| x * c)).collect();
        Self::new(self.graph, fixed, self.p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConductanceResult {
    /// Minimized (unsmoothed) energy.
    pub value: f64,
    pub solution: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub backend: String,
    /// Free vertices with no path to a fixed vertex; set to 0.
    pub unanchored: usize,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    value: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    backend: &'a str,
    unanchored: usize,
}

impl ConductanceResult {
    pub fn diagnostics_json(&self) -> String {
        serde_json::to_string_pretty(&Diagnostics {
            value: self.value,
            iterations: self.iterations,
            residual: self.residual,
            converged: self.converged,
            backend: &self.backend,
            unanchored: self.unanchored,
        })
        .expect("diagnostics serialize")
    }
}

#[inline]
fn abs_pow(t: f64, p: f64) -> f64 {
    if p == 2.0 {
        t * t
    } else {
        t.abs().powf(p)
    }
}

/// `Σ_{u~v} |f(u) - f(v)|^p` over unordered edges.
pub fn energy(graph: &Adjacency, f: &[f64], p: f64) -> Result<f64> {
    check_exponent(p)?;
    if f.len() != graph.vertex_count() {
        return Err(Error::MissingValues {
            expected: graph.vertex_count(),
            found: f.len(),
        });
    }
    Ok(graph
        .weighted_edges()
        .map(|(u, v, w)| w * abs_pow(f[u] - f[v], p))
        .sum())
}

/// The problem restricted to free vertices reachable from a fixed vertex.
struct Reduced {
    /// Local index → global vertex.
    free: Vec<usize>,
    /// Free–free edges in local indices.
    inner: Vec<(u32, u32)>,
    inner_mult: Vec<f64>,
    /// Free–fixed edges: local index and the pinned value.
    boundary: Vec<(u32, f64)>,
    boundary_mult: Vec<f64>,
    unanchored: Vec<usize>,
    fixed_min: f64,
    fixed_max: f64,
}

impl Reduced {
    fn new(problem: &DirichletProblem<'_>) -> Self {
        let graph = problem.graph;
        let n = graph.vertex_count();
        let mut reached = vec![false; n];
        let mut queue: VecDeque<usize> = VecDeque::new();
        for (v, value) in problem.fixed.iter().enumerate() {
            if value.is_some() {
                reached[v] = true;
                queue.push_back(v);
            }
        }
        while let Some(v) = queue.pop_front() {
            for &w in graph.neighbors(v) {
                let w = w as usize;
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        let mut local = vec![u32::MAX; n];
        let mut free = Vec::new();
        let mut unanchored = Vec::new();
        for v in 0..n {
            if problem.fixed[v].is_none() {
                if reached[v] {
                    local[v] = free.len() as u32;
                    free.push(v);
                } else {
                    unanchored.push(v);
                }
            }
        }
        let (mut inner, mut inner_mult) = (Vec::new(), Vec::new());
        let (mut boundary, mut boundary_mult) = (Vec::new(), Vec::new());
        for (li, &v) in free.iter().enumerate() {
            let weights = graph.neighbor_weights(v);
            for (k, &w) in graph.neighbors(v).iter().enumerate() {
                let w = w as usize;
                let mult = weights.map_or(1.0, |ws| ws[k]);
                match problem.fixed[w] {
                    Some(c) => {
                        boundary.push((li as u32, c));
                        boundary_mult.push(mult);
                    }
                    None if local[w] != u32::MAX && (li as u32) < local[w] => {
                        inner.push((li as u32, local[w]));
                        inner_mult.push(mult);
                    }
                    None => {}
                }
            }
        }
        let values = problem.fixed.iter().flatten();
        let fixed_min = values.clone().copied().fold(f64::INFINITY, f64::min);
        let fixed_max = values.copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            free,
            inner,
            inner_mult,
            boundary,
            boundary_mult,
            unanchored,
            fixed_min,
            fixed_max,
        }
    }

    fn n(&self) -> usize {
        self.free.len()
    }

    fn diagonal(&self, inner_w: &[f64], boundary_w: &[f64]) -> Vec<f64> {
        let mut diag = vec![0.0; self.n()];
        for (&(i, j), &w) in self.inner.iter().zip(inner_w) {
            diag[i as usize] += w;
            diag[j as usize] += w;
        }
        for (&(i, _), &w) in self.boundary.iter().zip(boundary_w) {
            diag[i as usize] += w;
        }
        diag
    }
}

/// Solves weighted Laplacian systems on a fixed pattern with one backend.
struct LinearSolver<'r> {
    reduced: &'r Reduced,
    backend: LinearBackend,
    cholesky: Option<CholeskyCache>,
    cg: CgSettings,
    cg_iterations: usize,
}

impl<'r> LinearSolver<'r> {
    fn new(reduced: &'r Reduced, backend: LinearBackend, cg_max: usize) -> Self {
        Self {
            reduced,
            backend,
            cholesky: None,
            cg: CgSettings {
                rel_tolerance: 1e-12,
                max_iterations: cg_max,
            },
            cg_iterations: 0,
        }
    }

    fn solve(&mut self, inner_w: &[f64], diag: &[f64], rhs: &[f64], start: &[f64]) -> Result<Vec<f64>> {
        let a = WeightedLaplacian {
            edges: &self.reduced.inner,
            weights: inner_w,
            diag,
        };
        match self.backend {
            LinearBackend::Direct => {
                if self.cholesky.is_none() {
                    self.cholesky = Some(CholeskyCache::new(self.reduced.n(), &self.reduced.inner)?);
                }
                self.cholesky.as_mut().expect("initialized").solve(&a, rhs)
            }
            LinearBackend::ConjugateGradient => {
                let mut x = start.to_vec();
                let outcome = conjugate_gradient(&a, rhs, &mut x, self.cg);
                self.cg_iterations += outcome.iterations;
                if !outcome.converged && x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::LinearSolve("conjugate gradients diverged".into()));
                }
                Ok(x)
            }
        }
    }
}

/// `φ(t) = (t² + ε²)^{p/2} - ε^p` and its derivatives.
#[derive(Clone, Copy)]
struct Smoothed {
    p: f64,
    eps2: f64,
    offset: f64,
}

impl Smoothed {
    fn new(p: f64, eps: f64) -> Self {
        Self {
            p,
            eps2: eps * eps,
            offset: eps.powf(p),
        }
    }

    #[inline]
    fn value(&self, t: f64) -> f64 {
        (t * t + self.eps2).powf(0.5 * self.p) - self.offset
    }

    /// `φ'(t) / t`.
    #[inline]
    fn slope_ratio(&self, t: f64) -> f64 {
        self.p * (t * t + self.eps2).powf(0.5 * self.p - 1.0)
    }

    #[inline]
    fn curvature(&self, t: f64) -> f64 {
        let s = t * t + self.eps2;
        self.p * s.powf(0.5 * self.p - 2.0) * ((self.p - 1.0) * t * t + self.eps2)
    }
}

struct Evaluation {
    energy: f64,
    gradient: Vec<f64>,
    inner_w: Vec<f64>,
    boundary_w: Vec<f64>,
}

fn smoothed_energy(reduced: &Reduced, phi: Smoothed, x: &[f64]) -> f64 {
    let inner: f64 = reduced
        .inner
        .iter()
        .zip(&reduced.inner_mult)
        .map(|(&(i, j), &k)| k * phi.value(x[i as usize] - x[j as usize]))
        .sum();
    let boundary: f64 = reduced
        .boundary
        .iter()
        .zip(&reduced.boundary_mult)
        .map(|(&(i, c), &k)| k * phi.value(x[i as usize] - c))
        .sum();
    inner + boundary
}

fn evaluate(reduced: &Reduced, phi: Smoothed, backend: GeneralBackend, x: &[f64]) -> Evaluation {
    let mut gradient = vec![0.0; reduced.n()];
    let mut energy = 0.0;
    let weight = |t: f64| match backend {
        GeneralBackend::DampedNewton => phi.curvature(t),
        GeneralBackend::Irls => phi.slope_ratio(t),
    };
    let mut inner_w = Vec::with_capacity(reduced.inner.len());
    for (&(i, j), &k) in reduced.inner.iter().zip(&reduced.inner_mult) {
        let t = x[i as usize] - x[j as usize];
        energy += k * phi.value(t);
        let g = k * phi.slope_ratio(t) * t;
        gradient[i as usize] += g;
        gradient[j as usize] -= g;
        inner_w.push(k * weight(t));
    }
    let mut boundary_w = Vec::with_capacity(reduced.boundary.len());
    for (&(i, c), &k) in reduced.boundary.iter().zip(&reduced.boundary_mult) {
        let t = x[i as usize] - c;
        energy += k * phi.value(t);
        gradient[i as usize] += k * phi.slope_ratio(t) * t;
        boundary_w.push(k * weight(t));
    }
    Evaluation {
        energy,
        gradient,
        inner_w,
        boundary_w,
    }
}

fn scaled_gradient_norm(gradient: &[f64], energy: f64) -> f64 {
    gradient.iter().fold(0.0f64, |m, g| m.max(g.abs())) / (1.0 + energy.abs())
}

/// Harmonic extension of the fixed values (`p = 2` minimizer).
fn harmonic(reduced: &Reduced, solver: &mut LinearSolver<'_>) -> Result<Vec<f64>> {
    let inner_w = &reduced.inner_mult;
    let boundary_w = &reduced.boundary_mult;
    let diag = reduced.diagonal(inner_w, boundary_w);
    let mut rhs = vec![0.0; reduced.n()];
    for (&(i, c), &k) in reduced.boundary.iter().zip(boundary_w) {
        rhs[i as usize] += k * c;
    }
    let start = vec![0.5 * (reduced.fixed_min + reduced.fixed_max); reduced.n()];
    solver.solve(inner_w, &diag, &rhs, &start)
}

struct Iterate {
    x: Vec<f64>,
    iterations: usize,
    residual: f64,
    converged: bool,
}

fn minimize_general(
    reduced: &Reduced,
    p: f64,
    config: &SolverConfig,
    solver: &mut LinearSolver<'_>,
    mut x: Vec<f64>,
) -> Result<Iterate> {
    let range = reduced.fixed_max - reduced.fixed_min;
    if range == 0.0 || reduced.n() == 0 {
        return Ok(Iterate {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    let eps_end = config.smoothing_end * range;
    let mut eps = config.smoothing_start * range;
    let mut iterations = 0usize;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    loop {
        let last_stage = eps <= eps_end * (1.0 + 1e-12);
        let tol = if last_stage {
            config.rel_tolerance
        } else {
            config.rel_tolerance.max(1e-6)
        };
        let phi = Smoothed::new(p, eps);
        let mut rel_decrease = f64::INFINITY;
        let mut stage_done = false;
        while iterations < config.max_iterations {
            let eval = evaluate(reduced, phi, config.general_backend, &x);
            residual = scaled_gradient_norm(&eval.gradient, eval.energy);
            if residual <= tol && rel_decrease <= tol {
                stage_done = true;
                break;
            }
            let diag = reduced.diagonal(&eval.inner_w, &eval.boundary_w);
            let neg_grad: Vec<f64> = eval.gradient.iter().map(|g| -g).collect();
            let zero = vec![0.0; reduced.n()];
            let step = solver.solve(&eval.inner_w, &diag, &neg_grad, &zero)?;
            let slope = -linear::dot(&neg_grad, &step);
            iterations += 1;
            if slope >= 0.0 {
                // The model offers no descent direction: gradient is at round-off level.
                stage_done = true;
                break;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            let mut trial = vec![0.0; reduced.n()];
            for _ in 0..60 {
                for ((t, xi), si) in trial.iter_mut().zip(&x).zip(&step) {
                    *t = xi + alpha * si;
                }
                let f_new = smoothed_energy(reduced, phi, &trial);
                if f_new <= eval.energy + 1e-4 * alpha * slope {
                    if f_new < eval.energy {
                        accepted = Some(f_new);
                    }
                    break;
                }
                alpha *= 0.5;
            }
            match accepted {
                Some(f_new) => {
                    rel_decrease = (eval.energy - f_new) / f_new.abs().max(f64::MIN_POSITIVE);
                    std::mem::swap(&mut x, &mut trial);
                }
                None => {
                    // No representable decrease left at this smoothing level.
                    rel_decrease = 0.0;
                    stage_done = true;
                    break;
                }
            }
        }
        if last_stage {
            converged = stage_done && residual <= config.rel_tolerance.sqrt();
            if stage_done && residual > config.rel_tolerance {
                // Stagnated on round-off rather than meeting the gradient bound.
                converged = converged && rel_decrease <= config.rel_tolerance;
            }
            break;
        }
        if !stage_done {
            break;
        }
        eps = (eps * 0.1).max(eps_end);
    }
    Ok(Iterate {
        x,
        iterations,
        residual,
        converged,
    })
}

/// Minimizes the `p`-energy subject to the fixed values.
pub fn solve_dirichlet(problem: &DirichletProblem<'_>, config: &SolverConfig) -> Result<ConductanceResult> {
    config.validate()?;
    let reduced = Reduced::new(problem);
    let p = problem.p;
    let is_quadratic = p == 2.0;
    let backend = if is_quadratic {
        config.p2_backend
    } else {
        config.inner_backend
    };
    let mut solver = LinearSolver::new(&reduced, backend, config.cg_max_iterations);
    let start = if reduced.n() > 0 {
        harmonic(&reduced, &mut solver)?
    } else {
        Vec::new()
    };
    let (x, iterations, label) = if is_quadratic {
        let its = match backend {
            LinearBackend::Direct => 1,
            LinearBackend::ConjugateGradient => solver.cg_iterations,
        };
        (Iterate { x: start, iterations: its, residual: 0.0, converged: true }, its, backend.as_str().to_string())
    } else {
        let it = minimize_general(&reduced, p, config, &mut solver, start)?;
        let n = it.iterations;
        (it, n, format!("{}/{}", config.general_backend.as_str(), backend.as_str()))
    };

    let graph = problem.graph;
    let mut solution = vec![0.0; graph.vertex_count()];
    for (v, value) in problem.fixed.iter().enumerate() {
        if let Some(c) = value {
            solution[v] = *c;
        }
    }
    for (li, &v) in reduced.free.iter().enumerate() {
        solution[v] = x.x[li];
    }
    let value = energy(graph, &solution, p)?;
    let (residual, converged) = if is_quadratic {
        let r = quadratic_residual(&reduced, &x.x, value);
        (r, r <= config.rel_tolerance)
    } else {
        (x.residual, x.converged)
    };
    Ok(ConductanceResult {
        value,
        solution,
        iterations,
        residual,
        converged,
        backend: label,
        unanchored: reduced.unanchored.len(),
    })
}

/// Scaled gradient norm of the `p = 2` energy at `x`.
fn quadratic_residual(reduced: &Reduced, x: &[f64], energy: f64) -> f64 {
    let mut g = vec![0.0; reduced.n()];
    for (&(i, j), &k) in reduced.inner.iter().zip(&reduced.inner_mult) {
        let t = 2.0 * k * (x[i as usize] - x[j as usize]);
        g[i as usize] += t;
        g[j as usize] -= t;
    }
    for (&(i, c), &k) in reduced.boundary.iter().zip(&reduced.boundary_mult) {
        g[i as usize] += 2.0 * k * (x[i as usize] - c);
    }
    scaled_gradient_norm(&g, energy)
}

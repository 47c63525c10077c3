//! Conductance experiments: the analytic corner and centre bounds, strip
//! counts, ratio scans, decay fits and the critical exponent search.
//!
//! The standard experiments run on `n = 1` cells of the carpets `F2`/`F3`
//! with the intersection adjacency. The corner cell `(1,…,1)` is called
//! `Q1` and the centre `(3,…,3)` is `Q2`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{csv_err, Adjacency, AdjacencyMode, CellGraph};
use crate::lattice::{
    builtin_spec, cube_symmetries, side, symmetry_orbits, CellIndex, CellSet, CubeSymmetry, FractalSpec,
    DEFAULT_CELL_CAP,
};
use crate::solver::{check_exponent, energy, solve_dirichlet, ConductanceResult, DirichletProblem, SolverConfig};

/// Absolute slack added to the solver residual when checking bounds.
pub const BOUND_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabConfig {
    pub solver: SolverConfig,
    /// Largest vertex set any graph may have.
    pub cell_cap: usize,
    /// Solve on the quotient by the cube symmetries that fix the data.
    pub use_symmetry: bool,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            cell_cap: DEFAULT_CELL_CAP,
            use_symmetry: true,
        }
    }
}

fn carpet_dimension(d: usize) -> Result<()> {
    if d == 2 || d == 3 {
        Ok(())
    } else {
        Err(Error::UnsupportedDimension(d))
    }
}

/// `2^m (5^m+1)^{1-p}` for `d = 2`, `16^m (5^m+1)^{1-p}` for `d = 3`.
pub fn lemma21_lower_bound(d: usize, p: f64, m: u32) -> Result<f64> {
    carpet_dimension(d)?;
    check_exponent(p)?;
    let strips = if d == 2 { 2f64 } else { 16f64 };
    Ok(strips.powi(m as i32) * (5f64.powi(m as i32) + 1.0).powf(1.0 - p))
}

/// `4` for `d = 2`, `7 (12·5^m - 16)` for `d = 3`; independent of `p`.
pub fn lemma22_upper_bound(d: usize, m: u32) -> Result<f64> {
    carpet_dimension(d)?;
    Ok(if d == 2 {
        4.0
    } else {
        7.0 * (12.0 * 5f64.powi(m as i32) - 16.0)
    })
}

/// Number of level `m + 1` cells of `G^(d-1)` inside `[0, 1/5]^{d-1}`,
/// counted by enumeration.
pub fn boundary_strip_count(d: usize, m: u32) -> Result<usize> {
    carpet_dimension(d)?;
    let g = FractalSpec::boundary_carpet(d - 1)?;
    let corner = CellIndex::new(1, vec![1; d - 1])?;
    if !g.contains_cell(&corner)? {
        return Ok(0);
    }
    let start = CellSet::from_cells(1, d - 1, [corner])?;
    Ok(g.subdivide(&start, m)?.len())
}

/// `E_{p,m}(A1, A2)`: builds the level `n + m` graph and solves with
/// `S^m(A1) = 1`, `S^m(A2) = 0`.
#[allow(clippy::too_many_arguments)]
pub fn effective_conductance(
    spec: &FractalSpec,
    n: u32,
    a1: &CellSet,
    a2: &CellSet,
    m: u32,
    p: f64,
    mode: AdjacencyMode,
    config: &LabConfig,
) -> Result<ConductanceResult> {
    check_sets(spec, n, a1, a2)?;
    let graph = CellGraph::build_capped(spec, n + m, mode, config.cell_cap)?;
    conductance_on_graph(&graph, a1, a2, p, config)
}

fn check_sets(spec: &FractalSpec, n: u32, a1: &CellSet, a2: &CellSet) -> Result<()> {
    for a in [a1, a2] {
        if a.dimension() != spec.dimension() {
            return Err(Error::DimensionMismatch {
                expected: spec.dimension(),
                found: a.dimension(),
            });
        }
        if a.level() != n {
            return Err(Error::LevelMismatch {
                expected: n,
                found: a.level(),
            });
        }
        if let Some(c) = a.cells().find(|c| !spec.contains_coords(n, c.coords())) {
            return Err(Error::CellNotInGraph(c.to_string()));
        }
    }
    if let Some(c) = a1.first_common(a2) {
        return Err(Error::OverlappingSets(c.to_string()));
    }
    Ok(())
}

/// Same as [`effective_conductance`] on a prebuilt graph whose level is at
/// least that of the sets; `S^m` membership is read off each vertex's
/// ancestor.
pub fn conductance_on_graph(
    graph: &CellGraph,
    a1: &CellSet,
    a2: &CellSet,
    p: f64,
    config: &LabConfig,
) -> Result<ConductanceResult> {
    check_sets(graph.spec(), a1.level(), a1, a2)?;
    let n = a1.level();
    if graph.level() < n {
        return Err(Error::LevelMismatch {
            expected: n,
            found: graph.level(),
        });
    }
    let scale = side(graph.level() - n);
    let fixed: Vec<Option<f64>> = graph
        .vertices()
        .iter()
        .map(|c| {
            let parent: Vec<u32> = c.iter().map(|&l| (l - 1) / scale + 1).collect();
            if a1.index_of(&parent).is_some() {
                Some(1.0)
            } else if a2.index_of(&parent).is_some() {
                Some(0.0)
            } else {
                None
            }
        })
        .collect();
    let group = if config.use_symmetry {
        stabilizer(graph.spec(), a1, a2)
    } else {
        Vec::new()
    };
    if group.len() <= 1 {
        let problem = DirichletProblem::new(graph.adjacency(), fixed, p)?;
        return solve_dirichlet(&problem, &config.solver);
    }
    let q = SymmetryQuotient::new(graph, &group, &fixed)?;
    let problem = DirichletProblem::new(&q.adjacency, q.fixed.clone(), p)?;
    let r = solve_dirichlet(&problem, &config.solver)?;
    q.expand(graph, &fixed, r, p)
}

/// Cube symmetries that preserve the spec's retained pattern and map each of
/// `a1`, `a2` onto itself. The cell graph and the Dirichlet data are then
/// invariant, and so is the (unique) minimizer.
pub fn stabilizer(spec: &FractalSpec, a1: &CellSet, a2: &CellSet) -> Vec<CubeSymmetry> {
    let mut scratch = Vec::new();
    cube_symmetries(spec.dimension())
        .into_iter()
        .filter(|g| {
            let pattern = spec.retained().iter().all(|r| {
                g.apply_into(1, r, &mut scratch);
                spec.contains_coords(1, &scratch)
            });
            pattern
                && [a1, a2].iter().all(|a| {
                    a.iter().all(|c| {
                        g.apply_into(a.level(), c, &mut scratch);
                        a.index_of(&scratch).is_some()
                    })
                })
        })
        .collect()
}

/// Graph on vertex orbits: an edge between two orbits weighs the number of
/// original edges joining them; edges inside an orbit never stretch and drop
/// out. Its energy on orbit values equals the full energy of the lifted
/// symmetric function.
struct SymmetryQuotient {
    orbit: Vec<u32>,
    adjacency: Adjacency,
    fixed: Vec<Option<f64>>,
}

impl SymmetryQuotient {
    fn new(graph: &CellGraph, group: &[CubeSymmetry], fixed: &[Option<f64>]) -> Result<Self> {
        let vertices = graph.vertices();
        let level = graph.level();
        let rep: Vec<u32> = (0..vertices.len())
            .into_par_iter()
            .with_min_len(4096)
            .map_init(
                || (Vec::new(), Vec::new()),
                |(best, scratch), v| {
                    let here = vertices.get(v);
                    best.clear();
                    best.extend_from_slice(here);
                    for g in group {
                        g.apply_into(level, here, scratch);
                        if scratch < best {
                            std::mem::swap(best, scratch);
                        }
                    }
                    vertices.index_of(best).expect("symmetric image is a vertex") as u32
                },
            )
            .collect();
        let mut id = vec![u32::MAX; vertices.len()];
        let mut count = 0u32;
        for (v, &r) in rep.iter().enumerate() {
            if r as usize == v {
                id[v] = count;
                count += 1;
            }
        }
        let orbit: Vec<u32> = rep.iter().map(|&r| id[r as usize]).collect();
        let mut keys: Vec<u64> = graph
            .adjacency()
            .edges()
            .filter_map(|(u, v)| {
                let (a, b) = (orbit[u], orbit[v]);
                (a != b).then(|| ((a.min(b) as u64) << 32) | a.max(b) as u64)
            })
            .collect();
        keys.par_sort_unstable();
        let (mut edges, mut weights): (Vec<(usize, usize)>, Vec<f64>) = (Vec::new(), Vec::new());
        for run in keys.chunk_by(|x, y| x == y) {
            edges.push(((run[0] >> 32) as usize, (run[0] & 0xffff_ffff) as usize));
            weights.push(run.len() as f64);
        }
        let adjacency = Adjacency::from_weighted_edges(count as usize, &edges, &weights)?;
        let mut qfixed = vec![None; count as usize];
        for (v, &o) in orbit.iter().enumerate() {
            if rep[v] as usize == v {
                qfixed[o as usize] = fixed[v];
            }
        }
        Ok(Self {
            orbit,
            adjacency,
            fixed: qfixed,
        })
    }

    /// Lifts an orbit solution back to every vertex.
    fn expand(&self, graph: &CellGraph, fixed: &[Option<f64>], r: ConductanceResult, p: f64) -> Result<ConductanceResult> {
        let solution: Vec<f64> = self.orbit.iter().map(|&o| r.solution[o as usize]).collect();
        let value = energy(graph.adjacency(), &solution, p)?;
        // Orbits with no path to the data, found on the small graph.
        let mut anchored: Vec<bool> = self.fixed.iter().map(Option::is_some).collect();
        let mut stack: Vec<usize> = (0..anchored.len()).filter(|&o| anchored[o]).collect();
        while let Some(o) = stack.pop() {
            for &w in self.adjacency.neighbors(o) {
                if !anchored[w as usize] {
                    anchored[w as usize] = true;
                    stack.push(w as usize);
                }
            }
        }
        let unanchored = self
            .orbit
            .iter()
            .zip(fixed)
            .filter(|(&o, f)| f.is_none() && !anchored[o as usize])
            .count();
        Ok(ConductanceResult {
            value,
            solution,
            unanchored,
            backend: format!("{}+symmetry", r.backend),
            ..r
        })
    }
}

/// `E_{p,m}(Q, Γ(Q)^c)` on a prebuilt level `n + m` graph.
pub fn cell_conductance_on_graph(
    graph: &CellGraph,
    cell: &CellIndex,
    p: f64,
    config: &LabConfig,
) -> Result<ConductanceResult> {
    let (a1, a2) = cell_and_far_set(graph.spec(), cell)?;
    conductance_on_graph(graph, &a1, &a2, p, config)
}

fn cell_and_far_set(spec: &FractalSpec, cell: &CellIndex) -> Result<(CellSet, CellSet)> {
    if cell.dimension() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            found: cell.dimension(),
        });
    }
    let coarse = CellGraph::build(spec, cell.level(), AdjacencyMode::NonemptyIntersection)?;
    let far = coarse.gamma_complement(cell)?;
    let a1 = CellSet::from_cells(cell.level(), cell.dimension(), [cell.clone()])?;
    Ok((a1, far))
}

/// One conductance with whatever analytic bounds apply to it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub d: usize,
    pub p: f64,
    pub m: u32,
    pub cell: CellIndex,
    pub computed: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// `computed >= lower - tol` when a lower bound applies.
    pub lower_satisfied: Option<bool>,
    /// `computed <= upper + tol` when an upper bound applies.
    pub upper_satisfied: Option<bool>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl BoundReport {
    /// True unless some attached bound is violated.
    pub fn satisfied(&self) -> bool {
        self.lower_satisfied != Some(false) && self.upper_satisfied != Some(false)
    }

    fn from_result(spec: &FractalSpec, cell: &CellIndex, m: u32, p: f64, r: &ConductanceResult) -> Result<Self> {
        let d = spec.dimension();
        let (mut lower, mut upper) = (None, None);
        let is_carpet = (d == 2 || d == 3) && spec.same_pattern(&FractalSpec::unconstrained_carpet(d)?);
        if is_carpet && cell.level() == 1 && m >= 1 {
            if cell.coords().iter().all(|&c| c == 1) {
                lower = Some(lemma21_lower_bound(d, p, m)?);
            }
            if cell.coords().iter().all(|&c| c == 3) {
                upper = Some(lemma22_upper_bound(d, m)?);
            }
        }
        let tol = BOUND_TOLERANCE + r.residual;
        Ok(Self {
            d,
            p,
            m,
            cell: cell.clone(),
            computed: r.value,
            lower,
            upper,
            lower_satisfied: lower.map(|b| r.value >= b - tol),
            upper_satisfied: upper.map(|b| r.value <= b + tol),
            iterations: r.iterations,
            residual: r.residual,
            converged: r.converged,
        })
    }
}

/// Attaches the applicable bounds to a solved `E_{p,m}(Q, Γ(Q)^c)`.
pub fn bound_report(spec: &FractalSpec, cell: &CellIndex, m: u32, p: f64, r: &ConductanceResult) -> Result<BoundReport> {
    BoundReport::from_result(spec, cell, m, p, r)
}

/// `E_{p,m}(Q, Γ(Q)^c)` for a level `n` cell, with the corner lower bound or
/// centre upper bound attached when `spec` is `F2`/`F3` and `n = 1`.
pub fn cell_conductance(
    spec: &FractalSpec,
    cell: &CellIndex,
    m: u32,
    p: f64,
    mode: AdjacencyMode,
    config: &LabConfig,
) -> Result<BoundReport> {
    let graph = CellGraph::build_capped(spec, cell.level() + m, mode, config.cell_cap)?;
    let r = cell_conductance_on_graph(&graph, cell, p, config)?;
    BoundReport::from_result(spec, cell, m, p, &r)
}

/// Graphs of one spec and mode, one per level, built on first use.
pub struct GraphCache {
    spec: FractalSpec,
    mode: AdjacencyMode,
    cap: usize,
    graphs: BTreeMap<u32, CellGraph>,
}

impl GraphCache {
    pub fn new(spec: &FractalSpec, mode: AdjacencyMode, cap: usize) -> Self {
        Self {
            spec: spec.clone(),
            mode,
            cap,
            graphs: BTreeMap::new(),
        }
    }

    pub fn spec(&self) -> &FractalSpec {
        &self.spec
    }

    pub fn get(&mut self, level: u32) -> Result<&CellGraph> {
        if !self.graphs.contains_key(&level) {
            let g = CellGraph::build_capped(&self.spec, level, self.mode, self.cap)?;
            self.graphs.insert(level, g);
        }
        Ok(&self.graphs[&level])
    }

    /// Builds every listed level up front so the graphs can be shared.
    pub fn prepare(&mut self, levels: impl IntoIterator<Item = u32>) -> Result<()> {
        for l in levels {
            self.get(l)?;
        }
        Ok(())
    }

    fn built(&self, level: u32) -> &CellGraph {
        &self.graphs[&level]
    }
}

/// Conductances of several cells over several `m` at one `p`, in
/// `(cell, m)` order. Graph levels must already be prepared.
fn cell_grid(
    cache: &GraphCache,
    cells: &[CellIndex],
    ms: &[u32],
    p: f64,
    config: &LabConfig,
) -> Result<Vec<BoundReport>> {
    let far: Vec<(CellSet, CellSet)> = cells
        .iter()
        .map(|c| cell_and_far_set(cache.spec(), c))
        .collect::<Result<_>>()?;
    let points: Vec<(usize, u32)> = (0..cells.len())
        .flat_map(|i| ms.iter().map(move |&m| (i, m)))
        .collect();
    points
        .par_iter()
        .map(|&(i, m)| {
            let cell = &cells[i];
            let graph = cache.built(cell.level() + m);
            let (a1, a2) = &far[i];
            let r = conductance_on_graph(graph, a1, a2, p, config)?;
            BoundReport::from_result(cache.spec(), cell, m, p, &r)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub m: u32,
    pub corner: BoundReport,
    pub center: BoundReport,
    /// `E(Q1) / E(Q2)`.
    pub ratio: f64,
    /// Quotient of the two analytic bounds; the ratio can't fall below it.
    pub floor: f64,
}

/// Corner and centre conductances of `F(d)` at `n = 1` for each `m`, with
/// their ratio.
pub fn ratio_scan(d: usize, p: f64, ms: &[u32], config: &LabConfig) -> Result<Vec<RatioRow>> {
    carpet_dimension(d)?;
    check_exponent(p)?;
    if ms.is_empty() {
        return Err(Error::InvalidProblem("empty m range".into()));
    }
    let spec = FractalSpec::unconstrained_carpet(d)?;
    let mut cache = GraphCache::new(&spec, AdjacencyMode::NonemptyIntersection, config.cell_cap);
    cache.prepare(ms.iter().map(|m| m + 1))?;
    let cells = [CellIndex::new(1, vec![1; d])?, CellIndex::new(1, vec![3; d])?];
    let grid = cell_grid(&cache, &cells, ms, p, config)?;
    let (corner, center) = grid.split_at(ms.len());
    ms.iter()
        .zip(corner.iter().zip(center))
        .map(|(&m, (c1, c2))| {
            Ok(RatioRow {
                m,
                ratio: c1.computed / c2.computed,
                floor: if m >= 1 {
                    lemma21_lower_bound(d, p, m)? / lemma22_upper_bound(d, m)?
                } else {
                    0.0
                },
                corner: c1.clone(),
                center: c2.clone(),
            })
        })
        .collect()
}

/// Least-squares fit of `log E(m) = a - m log σ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFit {
    pub p: f64,
    pub samples: Vec<(u32, f64)>,
    pub sigma: f64,
    pub slope_stderr: f64,
}

pub fn fit_geometric(p: f64, samples: &[(u32, f64)]) -> Result<ScalingFit> {
    let mut distinct: Vec<u32> = samples.iter().map(|s| s.0).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateFit("need at least two distinct m".into()));
    }
    if let Some(&(m, e)) = samples.iter().find(|s| !(s.1 > 0.0 && s.1.is_finite())) {
        return Err(Error::DegenerateFit(format!(
            "conductance {e} at m = {m}; the configuration is disconnected"
        )));
    }
    let k = samples.len() as f64;
    let xs: Vec<f64> = samples.iter().map(|s| s.0 as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if samples.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (k - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ScalingFit {
        p,
        samples: samples.to_vec(),
        sigma: (-slope).exp(),
        slope_stderr,
    })
}

/// Decay fit of `E_{p,m}(Q, Γ(Q)^c)` over the given `m`.
pub fn scaling_fit(
    spec: &FractalSpec,
    cell: &CellIndex,
    p: f64,
    ms: &[u32],
    mode: AdjacencyMode,
    config: &LabConfig,
) -> Result<ScalingFit> {
    let mut cache = GraphCache::new(spec, mode, config.cell_cap);
    cache.prepare(ms.iter().map(|m| cell.level() + m))?;
    let grid = cell_grid(&cache, std::slice::from_ref(cell), ms, p, config)?;
    let samples: Vec<(u32, f64)> = grid.iter().map(|r| (r.m, r.computed)).collect();
    fit_geometric(p, &samples)
}

/// One evaluation of `σ(p)` during the bisection.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SigmaProbe {
    pub p: f64,
    pub sigma: f64,
    /// Per `m`, the largest conductance over the representative cells.
    pub samples: Vec<(u32, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriticalPBracket {
    pub p_low: f64,
    pub p_high: f64,
    pub sigma_low: f64,
    pub sigma_high: f64,
    pub m_max: u32,
    pub representative_cells: CellSet,
    /// Every `σ` evaluation, in the order made.
    pub probes: Vec<SigmaProbe>,
}

/// Default bracket width.
pub const BRACKET_WIDTH: f64 = 0.05;

/// Bisection for the point where `sigma(p)` crosses 1, given `sigma` below
/// 1 at `p_lo` and above 1 at `p_hi`. Returns the final bracket and the
/// `σ` values at its ends.
pub fn bisect_crossing<F>(mut sigma: F, p_lo: f64, p_hi: f64, width: f64) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(p_lo < p_hi) || !(width > 0.0) {
        return Err(Error::InvalidProblem(format!("bad bracket [{p_lo}, {p_hi}] width {width}")));
    }
    let (mut lo, mut hi) = (p_lo, p_hi);
    let (mut s_lo, mut s_hi) = (sigma(lo)?, sigma(hi)?);
    if !(s_lo < 1.0 && s_hi > 1.0) {
        return Err(Error::NoSignChange {
            p_lo,
            p_hi,
            sigma_lo: s_lo,
            sigma_hi: s_hi,
        });
    }
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        let s = sigma(mid)?;
        if s < 1.0 {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
            s_hi = s;
        }
    }
    Ok((lo, hi, s_lo, s_hi))
}

/// One cell per cube-symmetry orbit of the level `n` cells.
pub fn representative_cells(spec: &FractalSpec, n: u32) -> Result<CellSet> {
    let cells = spec.cells_at_level(n)?;
    let reps = symmetry_orbits(&cells).into_iter().map(|o| o[0].clone());
    CellSet::from_cells(n, spec.dimension(), reps)
}

/// Estimate (never a certified bound) of the exponent where the decay
/// `σ(p)` of `max_Q E_{p,m}(Q, Γ(Q)^c)` over `m = 1..=m_max` crosses 1.
pub fn critical_p_bracket(
    spec: &FractalSpec,
    cells: &CellSet,
    m_max: u32,
    p_lo: f64,
    p_hi: f64,
    config: &LabConfig,
) -> Result<CriticalPBracket> {
    if cells.is_empty() {
        return Err(Error::InvalidProblem("no representative cells".into()));
    }
    if m_max < 2 {
        return Err(Error::DegenerateFit("need m_max >= 2".into()));
    }
    let ms: Vec<u32> = (1..=m_max).collect();
    let reps: Vec<CellIndex> = cells.cells().collect();
    let mut cache = GraphCache::new(spec, AdjacencyMode::NonemptyIntersection, config.cell_cap);
    cache.prepare(ms.iter().map(|m| cells.level() + m))?;
    let mut probes = Vec::new();
    let eval = |p: f64, probes: &mut Vec<SigmaProbe>| -> Result<f64> {
        let grid = cell_grid(&cache, &reps, &ms, p, config)?;
        let samples: Vec<(u32, f64)> = ms
            .iter()
            .map(|&m| {
                let best = grid
                    .iter()
                    .filter(|r| r.m == m)
                    .map(|r| r.computed)
                    .fold(0.0, f64::max);
                (m, best)
            })
            .collect();
        let fit = fit_geometric(p, &samples)?;
        probes.push(SigmaProbe {
            p,
            sigma: fit.sigma,
            samples,
        });
        Ok(fit.sigma)
    };
    let (p_low, p_high, sigma_low, sigma_high) =
        bisect_crossing(|p| eval(p, &mut probes), p_lo, p_hi, BRACKET_WIDTH)?;
    Ok(CriticalPBracket {
        p_low,
        p_high,
        sigma_low,
        sigma_high,
        m_max,
        representative_cells: cells.clone(),
        probes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubgraphRow {
    pub m: u32,
    pub p: f64,
    /// Corner conductance on the first spec.
    pub outer: f64,
    /// Corner conductance on the second spec, with `Γ` taken in its own cells.
    pub inner: f64,
    /// `outer >= inner - tol`.
    pub satisfied: bool,
}

/// Corner-cell conductances on `outer` and on `inner`, whose cells are a
/// subset of the outer ones. Energies restricted to the subgraph can only
/// drop, so `outer >= inner`.
pub fn subgraph_comparison_between(
    outer: &FractalSpec,
    inner: &FractalSpec,
    ms: &[u32],
    p: f64,
    config: &LabConfig,
) -> Result<Vec<SubgraphRow>> {
    let d = outer.dimension();
    let corner = CellIndex::new(1, vec![1; d])?;
    let mode = AdjacencyMode::NonemptyIntersection;
    ms.iter()
        .map(|&m| {
            let a = cell_conductance(outer, &corner, m, p, mode, config)?;
            let b = cell_conductance(inner, &corner, m, p, mode, config)?;
            let tol = BOUND_TOLERANCE + a.residual + b.residual;
            Ok(SubgraphRow {
                m,
                p,
                outer: a.computed,
                inner: b.computed,
                satisfied: a.computed >= b.computed - tol,
            })
        })
        .collect()
}

/// [`subgraph_comparison_between`] for `F2` and `tildeF2`. The second value
/// is the plain discrete conductance on `tildeF2`'s cell graph, a surrogate
/// for the measure-averaged one.
pub fn subgraph_comparison(ms: &[u32], p: f64, config: &LabConfig) -> Result<Vec<SubgraphRow>> {
    subgraph_comparison_between(&builtin_spec("F2")?, &builtin_spec("tildeF2")?, ms, p, config)
}

/// One report row per `(d, p, m, cell)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub d: usize,
    pub p: f64,
    pub m: u32,
    pub cell: String,
    pub computed: f64,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&BoundReport> for ReportRow {
    fn from(r: &BoundReport) -> Self {
        let cell: Vec<String> = r.cell.coords().iter().map(u32::to_string).collect();
        Self {
            d: r.d,
            p: r.p,
            m: r.m,
            cell: cell.join(","),
            computed: r.computed,
            lower_bound: r.lower,
            upper_bound: r.upper,
            iterations: r.iterations,
            converged: r.converged,
        }
    }
}

/// CSV with header `d,p,m,cell,computed,lower_bound,upper_bound,iterations,converged`;
/// missing bounds are empty fields.
pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub fn report_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("report rows serialize")
}

/// Solution as CSV: `l1,…,ld,value` per vertex in canonical order.
pub fn write_solution_csv<W: Write>(graph: &CellGraph, solution: &[f64], out: W) -> Result<()> {
    if solution.len() != graph.vertex_count() {
        return Err(Error::MissingValues {
            expected: graph.vertex_count(),
            found: solution.len(),
        });
    }
    let mut w = csv::Writer::from_writer(out);
    let d = graph.spec().dimension();
    let mut header: Vec<String> = (1..=d).map(|i| format!("l{i}")).collect();
    header.push("value".into());
    w.write_record(&header).map_err(csv_err)?;
    for (coords, value) in graph.vertices().iter().zip(solution) {
        let mut rec: Vec<String> = coords.iter().map(u32::to_string).collect();
        rec.push(format!("{value:e}"));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn analytic_bounds() {
        assert!(close(lemma21_lower_bound(2, 2.0, 1).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(close(lemma21_lower_bound(3, 2.0, 1).unwrap(), 8.0 / 3.0, 1e-15));
        let p = 10f64.ln() / 5f64.ln();
        let mut last = 0.0;
        for m in 1..=6 {
            let v = lemma21_lower_bound(2, p, m).unwrap();
            assert!((0.92..=1.0).contains(&v) && v > last, "m={m} v={v}");
            last = v;
        }
        assert_eq!(lemma22_upper_bound(2, 5).unwrap(), 4.0);
        assert_eq!(lemma22_upper_bound(3, 1).unwrap(), 308.0);
        assert_eq!(lemma22_upper_bound(3, 2).unwrap(), 1988.0);
        assert!(lemma22_upper_bound(4, 1).is_err());
        assert!(lemma21_lower_bound(1, 2.0, 1).is_err());
    }

    #[test]
    fn strip_counts() {
        assert_eq!(boundary_strip_count(2, 0).unwrap(), 1);
        assert_eq!(boundary_strip_count(2, 1).unwrap(), 2);
        assert_eq!(boundary_strip_count(3, 1).unwrap(), 16);
        assert_eq!(boundary_strip_count(2, 4).unwrap(), 16);
    }

    #[test]
    fn center_cell_closed_form() {
        let f2 = builtin_spec("F2").unwrap();
        let q2 = CellIndex::new(1, vec![3, 3]).unwrap();
        let r = cell_conductance(&f2, &q2, 0, 2.0, AdjacencyMode::NonemptyIntersection, &LabConfig::default())
            .unwrap();
        assert!(close(r.computed, 10.0 / 3.0, 1e-12), "{}", r.computed);
        assert_eq!(r.upper, None);
    }

    #[test]
    fn quotient_matches_full_graph() {
        let plain = LabConfig {
            use_symmetry: false,
            ..LabConfig::default()
        };
        let cases = [("F2", 1, 2, 9), ("F2", 2, 1, 4), ("F3", 1, 1, 9), ("G2", 1, 2, 9)];
        for (name, level, top, cells) in cases {
            let spec = builtin_spec(name).unwrap();
            for m in 0..=top {
                let graph = CellGraph::build(&spec, level + m, AdjacencyMode::NonemptyIntersection).unwrap();
                for cell in representative_cells(&spec, level).unwrap().cells().take(cells) {
                    for p in [2.0, 1.3, 3.0] {
                        let a = cell_conductance_on_graph(&graph, &cell, p, &LabConfig::default()).unwrap();
                        let b = cell_conductance_on_graph(&graph, &cell, p, &plain).unwrap();
                        assert!(close(a.value, b.value, 1e-7), "{name} {cell} m={m} p={p}: {} vs {}", a.value, b.value);
                        assert_eq!(a.unanchored, b.unanchored);
                    }
                }
            }
        }
    }

    #[test]
    fn stabilizer_of_center_is_full_group() {
        let f2 = builtin_spec("F2").unwrap();
        let q = CellIndex::new(1, vec![3, 3]).unwrap();
        let (a1, a2) = cell_and_far_set(&f2, &q).unwrap();
        assert_eq!(stabilizer(&f2, &a1, &a2).len(), 8);
        let q = CellIndex::new(1, vec![1, 1]).unwrap();
        let (a1, a2) = cell_and_far_set(&f2, &q).unwrap();
        assert_eq!(stabilizer(&f2, &a1, &a2).len(), 2);
    }

    #[test]
    fn corner_bounds_at_m1() {
        let f2 = builtin_spec("F2").unwrap();
        let q1 = CellIndex::new(1, vec![1, 1]).unwrap();
        let r = cell_conductance(&f2, &q1, 1, 2.0, AdjacencyMode::NonemptyIntersection, &LabConfig::default())
            .unwrap();
        assert!(r.computed >= 1.0 / 3.0 && r.computed <= 4.0);
        assert_eq!(r.lower_satisfied, Some(true));
        let r = cell_conductance(&f2, &q1, 1, 1.2, AdjacencyMode::NonemptyIntersection, &LabConfig::default())
            .unwrap();
        assert!(r.computed >= 2.0 * 6f64.powf(-0.2));
    }

    #[test]
    fn cantor_sets_do_not_conduct() {
        let g1 = builtin_spec("G1").unwrap();
        let a1 = CellSet::from_cells(1, 1, [CellIndex::new(1, vec![1]).unwrap()]).unwrap();
        let a2 = CellSet::from_cells(1, 1, [CellIndex::new(1, vec![5]).unwrap()]).unwrap();
        for m in 0..3 {
            let r = effective_conductance(&g1, 1, &a1, &a2, m, 1.5, AdjacencyMode::NonemptyIntersection, &LabConfig::default())
                .unwrap();
            assert_eq!(r.value, 0.0);
        }
        assert!(matches!(
            effective_conductance(&g1, 1, &a1, &a1, 0, 2.0, AdjacencyMode::NonemptyIntersection, &LabConfig::default()),
            Err(Error::OverlappingSets(_))
        ));
    }

    #[test]
    fn geometric_fits() {
        let s: Vec<(u32, f64)> = (1..=5).map(|m| (m, 3.0 * 2f64.powi(-(m as i32)))).collect();
        let f = fit_geometric(2.0, &s).unwrap();
        assert!(close(f.sigma, 2.0, 1e-12));
        assert!(f.slope_stderr < 1e-12);
        let f = fit_geometric(2.0, &[(1, 0.7), (2, 0.7), (3, 0.7)]).unwrap();
        assert!(close(f.sigma, 1.0, 1e-12));
        assert!(fit_geometric(2.0, &[(1, 1.0), (1, 2.0)]).is_err());
        assert!(fit_geometric(2.0, &[(1, 1.0), (2, 0.0)]).is_err());
    }

    #[test]
    fn synthetic_crossing() {
        let sigma = |p: f64| -> Result<f64> {
            let s: Vec<(u32, f64)> = (1..=3).map(|m| (m, 5f64.powf(1.5 - p).powi(m as i32))).collect();
            Ok(fit_geometric(p, &s)?.sigma)
        };
        let (lo, hi, s_lo, s_hi) = bisect_crossing(sigma, 1.05, 2.5, BRACKET_WIDTH).unwrap();
        assert!(hi - lo <= BRACKET_WIDTH);
        assert!(lo <= 1.5 && 1.5 <= hi);
        assert!(s_lo < 1.0 && s_hi > 1.0);
        assert!(matches!(
            bisect_crossing(sigma, 1.6, 2.5, BRACKET_WIDTH),
            Err(Error::NoSignChange { .. })
        ));
    }

    #[test]
    fn self_comparison_is_equal() {
        let f2 = builtin_spec("F2").unwrap();
        let rows = subgraph_comparison_between(&f2, &f2, &[1], 2.0, &LabConfig::default()).unwrap();
        assert_eq!(rows[0].outer, rows[0].inner);
        let rows = subgraph_comparison(&[1], 2.0, &LabConfig::default()).unwrap();
        assert!(rows[0].satisfied && rows[0].outer >= rows[0].inner);
    }

    #[test]
    fn report_csv_header() {
        let f2 = builtin_spec("F2").unwrap();
        let q1 = CellIndex::new(1, vec![1, 1]).unwrap();
        let r = cell_conductance(&f2, &q1, 1, 2.0, AdjacencyMode::NonemptyIntersection, &LabConfig::default())
            .unwrap();
        let mut buf = Vec::new();
        write_report_csv(&[ReportRow::from(&r)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "d,p,m,cell,computed,lower_bound,upper_bound,iterations,converged"
        );
        assert!(lines.next().unwrap().starts_with("2,2.0,1,\"1,1\","));
    }

    #[test]
    fn representatives_of_f2() {
        let reps = representative_cells(&builtin_spec("F2").unwrap(), 1).unwrap();
        assert_eq!(reps.len(), 5);
        assert!(reps.contains(&CellIndex::new(1, vec![1, 1]).unwrap()));
        assert!(reps.contains(&CellIndex::new(1, vec![3, 3]).unwrap()));
    }
}

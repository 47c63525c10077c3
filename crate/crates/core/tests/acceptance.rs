//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. The `d = 3, m = 2` parts run only with
//! `FRACCOND_ALLOW_SLOW=1`.

use fraccond::lab::{self, LabConfig, RatioRow};
use fraccond::lattice::cube_symmetries;
use fraccond::oracle::{brute_solve, OracleConfig};
use fraccond::{
    builtin_spec, solve_dirichlet, Adjacency, AdjacencyMode, CellGraph, CellIndex, DirichletProblem,
    GeneralBackend, SolverConfig,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::{Duration, Instant};

const BOUND_TOL: f64 = 1e-9;
const CENTER_CLOSED_FORM_TOL: f64 = 1e-8;
const PATH_TOL: f64 = 1e-10;
const ORACLE_REL_TOL: f64 = 1e-6;
const ORACLE_GRAPHS: usize = 200;
const SYMMETRY_TOL: f64 = 1e-8;
const SCALING_TOL: f64 = 1e-8;
const P2_BACKEND_TOL: f64 = 1e-7;
const GENERAL_BACKEND_TOL: f64 = 1e-6;
const WIDEN: f64 = 0.15;
const AR_DIMENSION_RANGE: (f64, f64) = (1.4307, 1.8917);

const COUNT_BUDGET: Duration = Duration::from_secs(1);
const D2_BUDGET: Duration = Duration::from_secs(5 * 60);
const D3_SLOW_BUDGET: Duration = Duration::from_secs(30 * 60);
const ORACLE_BUDGET: Duration = Duration::from_secs(2 * 60);

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn slow_enabled() -> bool {
    std::env::var("FRACCOND_ALLOW_SLOW").is_ok_and(|v| v == "1")
}

fn tight() -> SolverConfig {
    SolverConfig {
        rel_tolerance: 1e-12,
        ..SolverConfig::default()
    }
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Corner/centre scans shared by criteria 2-4.
struct Scans {
    d2: Vec<(f64, Vec<RatioRow>)>,
    d2_time: Duration,
    d3: Vec<(f64, Vec<RatioRow>)>,
    d3_time: Duration,
}

fn run_scans() -> Result<Scans, String> {
    let config = LabConfig::default();
    let start = Instant::now();
    let mut d2 = Vec::new();
    for p in [1.1, 1.2, 1.3, 2.0] {
        d2.push((p, lab::ratio_scan(2, p, &[1, 2, 3], &config).map_err(|e| e.to_string())?));
    }
    let d2_time = start.elapsed();
    let ms: &[u32] = if slow_enabled() { &[1, 2] } else { &[1] };
    let start = Instant::now();
    let mut d3 = Vec::new();
    for p in [1.2, 2.0] {
        d3.push((p, lab::ratio_scan(3, p, ms, &config).map_err(|e| e.to_string())?));
    }
    Ok(Scans {
        d2,
        d2_time,
        d3,
        d3_time: start.elapsed(),
    })
}

fn counting() -> Outcome {
    let start = Instant::now();
    let f2 = builtin_spec("F2").unwrap();
    let f3 = builtin_spec("F3").unwrap();
    let mut bad = Vec::new();
    for (level, want) in [(1, 21), (2, 441), (3, 9261)] {
        let got = f2.cells_at_level(level).unwrap().len();
        if got != want {
            bad.push(format!("F2 L{level}: {got}"));
        }
    }
    for (level, want) in [(1, 119), (2, 14161)] {
        let got = f3.cells_at_level(level).unwrap().len();
        if got != want {
            bad.push(format!("F3 L{level}: {got}"));
        }
    }
    for m in 1..=4 {
        let got = lab::boundary_strip_count(2, m).unwrap();
        if got != 1 << m {
            bad.push(format!("strips d=2 m={m}: {got}"));
        }
    }
    for m in 1..=2 {
        let got = lab::boundary_strip_count(3, m).unwrap();
        if got != 16usize.pow(m) {
            bad.push(format!("strips d=3 m={m}: {got}"));
        }
    }
    let elapsed = start.elapsed();
    check(
        bad.is_empty() && elapsed <= COUNT_BUDGET,
        format!("mismatches {bad:?}, {:.3}s", elapsed.as_secs_f64()),
    )
}

fn lower_bounds(scans: &Scans) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut bad = Vec::new();
    let rows = scans
        .d2
        .iter()
        .filter(|(p, _)| [1.1, 1.3, 2.0].contains(p))
        .chain(&scans.d3)
        .flat_map(|(_, rows)| rows);
    let mut count = 0;
    for row in rows {
        let c = &row.corner;
        let bound = c.lower.expect("corner carries a lower bound");
        worst = worst.min(c.computed - bound);
        count += 1;
        if c.computed < bound - BOUND_TOL || !c.converged {
            bad.push(format!("d={} p={} m={}: {} < {bound}", c.d, c.p, c.m, c.computed));
        }
    }
    let within = scans.d2_time <= D2_BUDGET && scans.d3_time <= D3_SLOW_BUDGET;
    check(
        bad.is_empty() && within,
        format!(
            "{count} cases, min slack {worst:.3e}, d=2 {:.1}s, d=3 {:.1}s{} {bad:?}",
            scans.d2_time.as_secs_f64(),
            scans.d3_time.as_secs_f64(),
            if slow_enabled() { "" } else { " (d=3 m=2 skipped; FRACCOND_ALLOW_SLOW=1)" },
        ),
    )
}

fn upper_bounds(scans: &Scans) -> Outcome {
    let mut bad = Vec::new();
    let mut count = 0;
    let mut worst = f64::INFINITY;
    let rows = scans
        .d2
        .iter()
        .filter(|(p, _)| [1.1, 1.3, 2.0].contains(p))
        .chain(&scans.d3)
        .flat_map(|(_, rows)| rows);
    for row in rows {
        let c = &row.center;
        let bound = c.upper.expect("centre carries an upper bound");
        let tol = BOUND_TOL + c.residual;
        worst = worst.min(bound - c.computed);
        count += 1;
        if c.computed > bound + tol || !c.converged {
            bad.push(format!("d={} p={} m={}: {} > {bound}", c.d, c.p, c.m, c.computed));
        }
    }
    check(bad.is_empty(), format!("{count} cases, min slack {worst:.3e} {bad:?}"))
}

fn ratio_divergence(scans: &Scans) -> Outcome {
    let (_, rows) = scans.d2.iter().find(|(p, _)| *p == 1.2).unwrap();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
    let above_floor = rows.iter().all(|r| r.ratio > r.floor);
    let mut detail = format!("d=2 ratios {ratios:.4?}");
    let mut ok = increasing && above_floor;
    if slow_enabled() {
        let (_, rows3) = scans.d3.iter().find(|(p, _)| *p == 1.2).unwrap();
        let r3: Vec<f64> = rows3.iter().map(|r| r.ratio).collect();
        ok &= r3.len() == 2 && r3[1] > r3[0];
        detail.push_str(&format!(", d=3 ratios {r3:.4?}"));
    } else {
        detail.push_str(", d=3 m=2 skipped");
    }
    check(ok, detail)
}

fn closed_forms() -> Outcome {
    let f2 = builtin_spec("F2").unwrap();
    let graph = CellGraph::build(&f2, 1, AdjacencyMode::NonemptyIntersection).unwrap();
    let center = CellIndex::new(1, vec![3, 3]).unwrap();
    let solved = lab::cell_conductance_on_graph(&graph, &center, 2.0, &LabConfig::default()).unwrap();
    let gamma = graph.gamma_complement(&center).unwrap();
    let mut fixed = vec![None; graph.vertex_count()];
    fixed[graph.index_of(&center).unwrap()] = Some(1.0);
    for c in gamma.cells() {
        fixed[graph.index_of(&c).unwrap()] = Some(0.0);
    }
    let problem = DirichletProblem::new(graph.adjacency(), fixed, 2.0).unwrap();
    let oracle = brute_solve(&problem, &OracleConfig::default()).unwrap();
    let center_err = (solved.value - 10.0 / 3.0).abs().max((oracle.value - 10.0 / 3.0).abs());

    let mut path_err: f64 = 0.0;
    for k in 1..=100usize {
        let g = Adjacency::path(k);
        for p in [1.1, 1.5, 2.0, 3.0] {
            let problem = DirichletProblem::from_pairs(&g, &[(0, 1.0), (k, 0.0)], p).unwrap();
            let r = solve_dirichlet(&problem, &tight()).unwrap();
            path_err = path_err.max((r.value - (k as f64).powf(1.0 - p)).abs());
        }
    }
    check(
        center_err <= CENTER_CLOSED_FORM_TOL && path_err <= PATH_TOL,
        format!("centre |E - 10/3| {center_err:.2e} (solver and oracle), paths max err {path_err:.2e}"),
    )
}

fn random_problem(rng: &mut StdRng) -> (usize, Vec<(usize, usize)>, Vec<Option<f64>>) {
    let n = rng.random_range(2..=12);
    let density = rng.random_range(0.15..0.8);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(density) {
                edges.push((u, v));
            }
        }
    }
    let mut fixed = vec![None; n];
    // Random boundary sets: at least one vertex at 1 and one at 0.
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let ones = rng.random_range(1..n);
    let zeros = rng.random_range(1..=n - ones);
    for &v in &order[..ones] {
        fixed[v] = Some(1.0);
    }
    for &v in &order[ones..ones + zeros] {
        fixed[v] = Some(0.0);
    }
    (n, edges, fixed)
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..ORACLE_GRAPHS {
        let (n, edges, fixed) = random_problem(&mut rng);
        let g = Adjacency::from_edges(n, &edges).unwrap();
        for p in [1.1, 1.5, 2.0, 3.0] {
            let problem = DirichletProblem::new(&g, fixed.clone(), p).unwrap();
            let a = solve_dirichlet(&problem, &tight()).unwrap().value;
            let b = brute_solve(&problem, &OracleConfig::default()).unwrap().value;
            // Disconnected data: both should report (numerically) zero.
            let gap = if a.max(b) < 1e-10 { 0.0 } else { rel_gap(a, b) };
            worst = worst.max(gap);
            if gap > ORACLE_REL_TOL {
                failures += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        failures == 0 && elapsed <= ORACLE_BUDGET,
        format!(
            "{ORACLE_GRAPHS} graphs x 4 exponents, max rel gap {worst:.2e}, {failures} failures, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn critical_bracket() -> Outcome {
    let spec = builtin_spec("F2").unwrap();
    let start = Instant::now();
    let reps = lab::representative_cells(&spec, 1).unwrap();
    let b = lab::critical_p_bracket(&spec, &reps, 3, 1.05, 2.5, &LabConfig::default()).map_err(|e| e.to_string())?;
    let (lo, hi) = (b.p_low - WIDEN, b.p_high + WIDEN);
    let overlaps = lo <= AR_DIMENSION_RANGE.1 && hi >= AR_DIMENSION_RANGE.0;
    check(
        overlaps,
        format!(
            "bracket [{:.4}, {:.4}] (sigma {:.4}, {:.4}), widened [{lo:.4}, {hi:.4}] vs [{}, {}], {:.1}s",
            b.p_low,
            b.p_high,
            b.sigma_low,
            b.sigma_high,
            AR_DIMENSION_RANGE.0,
            AR_DIMENSION_RANGE.1,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn invariants() -> Outcome {
    let mut problems = Vec::new();
    let mut rng = StdRng::seed_from_u64(0xacce);
    let (mut max_principle, mut monotone, mut scaling, mut p2, mut general) = (0usize, 0usize, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..40 {
        let (n, edges, fixed) = random_problem(&mut rng);
        let g = Adjacency::from_edges(n, &edges).unwrap();
        let mut more = edges.clone();
        for u in 0..n {
            for v in u + 1..n {
                if !edges.contains(&(u, v)) && rng.random_bool(0.3) {
                    more.push((u, v));
                }
            }
        }
        let big = Adjacency::from_edges(n, &more).unwrap();
        let c = rng.random_range(0.1..10.0);
        for p in [1.1, 1.5, 2.0, 3.0] {
            let problem = DirichletProblem::new(&g, fixed.clone(), p).unwrap();
            let r = solve_dirichlet(&problem, &tight()).unwrap();
            let range = r.solution.iter().all(|x| (-1e-9..=1.0 + 1e-9).contains(x));
            max_principle += usize::from(!range);
            let rb = solve_dirichlet(&DirichletProblem::new(&big, fixed.clone(), p).unwrap(), &tight()).unwrap();
            monotone += usize::from(rb.value < r.value * (1.0 - 1e-7) - 1e-11);
            let rs = solve_dirichlet(&problem.scaled(c).unwrap(), &tight()).unwrap();
            if r.value > 1e-10 {
                scaling = scaling.max(rel_gap(rs.value, c.powf(p) * r.value));
            }
            if r.value > 1e-10 {
                if p == 2.0 {
                    let cg = SolverConfig {
                        rel_tolerance: 1e-12,
                        ..SolverConfig::iterative()
                    };
                    p2 = p2.max(rel_gap(solve_dirichlet(&problem, &cg).unwrap().value, r.value));
                } else {
                    let irls = SolverConfig {
                        general_backend: GeneralBackend::Irls,
                        ..tight()
                    };
                    general = general.max(rel_gap(solve_dirichlet(&problem, &irls).unwrap().value, r.value));
                }
            }
        }
    }
    if max_principle > 0 {
        problems.push(format!("{max_principle} maximum-principle violations"));
    }
    if monotone > 0 {
        problems.push(format!("{monotone} edge-monotonicity violations"));
    }
    if scaling > SCALING_TOL {
        problems.push(format!("scaling gap {scaling:.2e}"));
    }
    if p2 > P2_BACKEND_TOL || general > GENERAL_BACKEND_TOL {
        problems.push(format!("backend gaps {p2:.2e} / {general:.2e}"));
    }

    // Cube symmetry on F2 at level 3, full graph.
    let plain = LabConfig {
        use_symmetry: false,
        ..LabConfig::default()
    };
    let f2 = builtin_spec("F2").unwrap();
    let graph = CellGraph::build(&f2, 3, AdjacencyMode::NonemptyIntersection).unwrap();
    let mut symmetry: f64 = 0.0;
    for base in [vec![1, 1], vec![1, 2]] {
        let base = CellIndex::new(1, base).unwrap();
        let reference = lab::cell_conductance_on_graph(&graph, &base, 1.5, &plain).unwrap().value;
        for g in cube_symmetries(2) {
            let v = lab::cell_conductance_on_graph(&graph, &g.apply_cell(&base), 1.5, &plain)
                .unwrap()
                .value;
            symmetry = symmetry.max(rel_gap(v, reference));
        }
    }
    if symmetry > SYMMETRY_TOL {
        problems.push(format!("symmetry gap {symmetry:.2e}"));
    }

    let mut subgraph = Vec::new();
    for p in [1.3, 2.0] {
        for row in lab::subgraph_comparison(&[1, 2], p, &LabConfig::default()).map_err(|e| e.to_string())? {
            if !row.satisfied {
                problems.push(format!("F < F~ at m={} p={p}", row.m));
            }
            subgraph.push(format!("{:.4}>={:.4}", row.outer, row.inner));
        }
    }
    check(
        problems.is_empty(),
        format!(
            "scaling {scaling:.1e}, backends {p2:.1e}/{general:.1e}, symmetry {symmetry:.1e}, subgraph [{}] {problems:?}",
            subgraph.join(" ")
        ),
    )
}

fn main() {
    let scans = run_scans();
    let with_scans = |f: fn(&Scans) -> Outcome| -> Outcome {
        match &scans {
            Ok(s) => f(s),
            Err(e) => Err(format!("scan failed: {e}")),
        }
    };
    let results = [
        ("1 counting identities", counting()),
        ("2 corner lower bound", with_scans(lower_bounds)),
        ("3 centre upper bound", with_scans(upper_bounds)),
        ("4 ratio growth", with_scans(ratio_divergence)),
        ("5 closed forms", closed_forms()),
        ("6 oracle equivalence", oracle_equivalence()),
        ("7 critical exponent bracket", critical_bracket()),
        ("8 invariant suites", invariants()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

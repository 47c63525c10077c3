//! `fraccond`: generate carpet graphs, compute conductances, run scans and
//! render approximations.

mod manifest;
mod svg;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fraccond::lab::{self, LabConfig, ReportRow};
use fraccond::lattice::resolve_spec;
use fraccond::{AdjacencyMode, CellGraph, CellIndex, Error, FractalSpec, GeneralBackend, LinearBackend, SolverConfig};

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "fraccond", version, about = "Effective p-conductances on 5-adic carpets")]
struct Cli {
    /// Directory for every written file.
    #[arg(long, global = true, env = "FRACCOND_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the cell list and edge list of one level.
    Generate {
        /// Built-in name (F2, F3, tildeF2, G1, G2) or a spec in text form.
        spec: String,
        #[arg(long)]
        level: u32,
        #[arg(long, default_value = "intersection")]
        mode: AdjacencyMode,
        /// Also write the p = 2 Laplacian in MatrixMarket form.
        #[arg(long)]
        matrix_market: bool,
        #[command(flatten)]
        budget: Budget,
    },
    /// E_{p,m}(Q, Γ(Q)^c) for one cell, with analytic bounds when they apply.
    Conductance {
        spec: String,
        /// Cell coordinates, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        cell: Vec<u32>,
        /// Level of the cell.
        #[arg(long, default_value_t = 1)]
        level: u32,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value = "intersection")]
        mode: AdjacencyMode,
        /// Also write the minimizer as CSV.
        #[arg(long)]
        solution: bool,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        budget: Budget,
    },
    /// Corner/centre ratio table over m for each p, plus an optional
    /// critical-exponent bisection.
    Scan {
        #[arg(long)]
        d: usize,
        /// Exponents, comma separated.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        p: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        m_min: u32,
        #[arg(long)]
        m_max: u32,
        /// Bisect for the exponent where the fitted decay crosses 1.
        #[arg(long)]
        critical_p: bool,
        #[arg(long, default_value_t = 1.05)]
        p_lo: f64,
        #[arg(long, default_value_t = 2.5)]
        p_hi: f64,
        #[command(flatten)]
        solver: SolverFlags,
        #[command(flatten)]
        budget: Budget,
    },
    /// SVG of the retained cells of a planar spec.
    Render {
        spec: String,
        #[arg(long)]
        level: u32,
    },
}

#[derive(Args, Debug)]
struct SolverFlags {
    /// Linear solver: direct or conjugate-gradient.
    #[arg(long, default_value = "direct")]
    backend: LinearBackend,
    /// Scheme for p != 2: damped-newton or irls.
    #[arg(long, default_value = "damped-newton")]
    general: GeneralBackend,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    /// Solve on the full graph instead of its symmetry quotient.
    #[arg(long)]
    no_symmetry: bool,
}

impl SolverFlags {
    fn config(&self, cell_cap: usize) -> LabConfig {
        LabConfig {
            solver: SolverConfig {
                rel_tolerance: self.tol,
                max_iterations: self.max_iterations,
                p2_backend: self.backend,
                inner_backend: self.backend,
                general_backend: self.general,
                ..SolverConfig::default()
            },
            cell_cap,
            use_symmetry: !self.no_symmetry,
        }
    }
}

#[derive(Args, Debug)]
struct Budget {
    /// Permit the long runs (d = 3 beyond level 2, d = 2 beyond level 4).
    #[arg(long)]
    allow_slow: bool,
    /// Largest number of cells in any graph.
    #[arg(long, default_value_t = fraccond::lattice::DEFAULT_CELL_CAP)]
    cell_cap: usize,
}

impl Budget {
    fn check(&self, dimension: usize, level: u32) -> Result<(), Failure> {
        let slow = match dimension {
            1 => false,
            2 => level > 4,
            _ => level > 2,
        };
        if slow && !self.allow_slow {
            return Err(Failure::Budget(format!(
                "level {level} in dimension {dimension} is a long run; pass --allow-slow"
            )));
        }
        Ok(())
    }
}

enum Failure {
    Usage(String),
    Budget(String),
    NotConverged(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BudgetExceeded { .. } | Error::LevelTooDeep(_) => Failure::Budget(e.to_string()),
            Error::UnknownSpec(_)
            | Error::InvalidSpec(_)
            | Error::Parse(_)
            | Error::DimensionMismatch { .. }
            | Error::CoordinateOutOfRange { .. }
            | Error::CellNotInGraph(_)
            | Error::CellNotInFractal(_)
            | Error::InvalidExponent(_)
            | Error::UnsupportedDimension(_) => Failure::Usage(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (code, msg) = match self {
            Failure::Usage(m) => (2, m),
            Failure::Budget(m) => (3, m),
            Failure::NotConverged(m) => (4, m),
            Failure::Other(m) => (1, m),
        };
        eprintln!("error: {msg}");
        ExitCode::from(code)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return Failure::Usage(e.to_string()).exit();
        }
    }
    let argv: Vec<String> = std::env::args().collect();
    match run(&cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.exit(),
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, Failure> {
        let path = self.dir.join(name);
        let file = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), Failure> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn spec_arg(s: &str) -> Result<FractalSpec, Failure> {
    Ok(resolve_spec(s)?)
}

/// File-name friendly number: `1.2` → `1.2`, `2` → `2`.
fn tag(x: f64) -> String {
    format!("{x}")
}

fn run(cli: &Cli, argv: Vec<String>) -> Result<(), Failure> {
    let started = Instant::now();
    let mut out = Outputs::new(&cli.out_dir)?;
    let (name, stem, params) = match &cli.command {
        Command::Generate {
            spec,
            level,
            mode,
            matrix_market,
            budget,
        } => {
            let spec = spec_arg(spec)?;
            budget.check(spec.dimension(), *level)?;
            let graph = CellGraph::build_capped(&spec, *level, *mode, budget.cell_cap)?;
            let stem = format!("{}_L{}_{}", spec.name(), level, mode);
            let mut w = out.create(&format!("{stem}_cells.csv"))?;
            graph.write_cells_csv(&mut w)?;
            w.flush()?;
            let mut w = out.create(&format!("{stem}.edges"))?;
            graph.write_edge_list(&mut w)?;
            w.flush()?;
            if *matrix_market {
                let mut w = out.create(&format!("{stem}.mtx"))?;
                graph.write_matrix_market(&mut w)?;
                w.flush()?;
            }
            println!("{} cells, {} edges", graph.vertex_count(), graph.edge_count());
            let params = json!({
                "spec": spec.to_text(),
                "name": spec.name(),
                "level": level,
                "mode": mode.as_str(),
                "matrix_market": matrix_market,
                "cell_cap": budget.cell_cap,
            });
            ("generate", stem, params)
        }
        Command::Conductance {
            spec,
            cell,
            level,
            m,
            p,
            mode,
            solution,
            solver,
            budget,
        } => {
            let spec = spec_arg(spec)?;
            let cell = CellIndex::new(*level, cell.clone())?;
            if !spec.contains_cell(&cell)? {
                return Err(Failure::Usage(format!("{cell} is not a cell of {}", spec.name())));
            }
            budget.check(spec.dimension(), level + m)?;
            let config = solver.config(budget.cell_cap);
            let graph = CellGraph::build_capped(&spec, level + m, *mode, budget.cell_cap)?;
            let result = lab::cell_conductance_on_graph(&graph, &cell, *p, &config)?;
            let report = lab::bound_report(&spec, &cell, *m, *p, &result)?;
            let row = ReportRow::from(&report);
            let coords: Vec<String> = cell.coords().iter().map(u32::to_string).collect();
            let stem = format!("conductance_{}_{}_m{}_p{}", spec.name(), coords.join("-"), m, tag(*p));
            let mut stdout = std::io::stdout().lock();
            lab::write_report_csv(std::slice::from_ref(&row), &mut stdout)?;
            let doc = json!({
                "report": report,
                "diagnostics": serde_json::from_str::<serde_json::Value>(&result.diagnostics_json())
                    .expect("diagnostics are JSON"),
            });
            out.text(&format!("{stem}.json"), &serde_json::to_string_pretty(&doc).expect("json"))?;
            if *solution {
                let mut w = out.create(&format!("{stem}_solution.csv"))?;
                lab::write_solution_csv(&graph, &result.solution, &mut w)?;
                w.flush()?;
            }
            let params = json!({
                "spec": spec.to_text(),
                "name": spec.name(),
                "cell": cell.coords(),
                "level": level,
                "m": m,
                "p": p,
                "mode": mode.as_str(),
                "solver": config,
                "cell_cap": budget.cell_cap,
            });
            let converged = result.converged;
            finish(&mut out, "conductance", &stem, params, argv, started)?;
            if !converged {
                return Err(Failure::NotConverged(format!(
                    "solver stopped after {} iterations, residual {:.3e}",
                    result.iterations, result.residual
                )));
            }
            return Ok(());
        }
        Command::Scan {
            d,
            p,
            m_min,
            m_max,
            critical_p,
            p_lo,
            p_hi,
            solver,
            budget,
        } => {
            if p.is_empty() {
                return Err(Failure::Usage("--p needs at least one exponent".into()));
            }
            if m_min > m_max {
                return Err(Failure::Usage(format!("--m-min {m_min} exceeds --m-max {m_max}")));
            }
            if *d != 2 && *d != 3 {
                return Err(Failure::Usage(format!("--d must be 2 or 3, got {d}")));
            }
            budget.check(*d, m_max + 1)?;
            let config = solver.config(budget.cell_cap);
            let ms: Vec<u32> = (*m_min..=*m_max).collect();
            let stem = format!("scan_d{d}");
            let mut ratio_rows = Vec::new();
            let mut report_rows = Vec::new();
            let mut series = Vec::new();
            let mut unconverged = 0;
            for &pv in p {
                let rows = lab::ratio_scan(*d, pv, &ms, &config)?;
                let mut points = Vec::new();
                for r in &rows {
                    unconverged += usize::from(!r.corner.converged) + usize::from(!r.center.converged);
                    report_rows.push(ReportRow::from(&r.corner));
                    report_rows.push(ReportRow::from(&r.center));
                    points.push((r.m as f64, r.ratio.ln()));
                    ratio_rows.push(RatioCsvRow {
                        d: *d,
                        p: pv,
                        m: r.m,
                        corner: r.corner.computed,
                        center: r.center.computed,
                        ratio: r.ratio,
                        floor: r.floor,
                        increasing: None,
                    });
                }
                series.push((format!("p = {pv}"), points));
            }
            mark_increasing(&mut ratio_rows);
            print_ratio_table(&ratio_rows);
            write_ratio_csv(&mut out, &format!("{stem}_ratios.csv"), &ratio_rows)?;
            let mut w = out.create(&format!("{stem}_report.csv"))?;
            lab::write_report_csv(&report_rows, &mut w)?;
            w.flush()?;
            out.text(&format!("{stem}_report.json"), &lab::report_json(&report_rows))?;
            out.text(
                &format!("{stem}_ratios.svg"),
                &svg::line_plot("log E(Q1)/E(Q2) against m", "m", "log ratio", &series),
            )?;
            if *critical_p {
                let spec = FractalSpec::unconstrained_carpet(*d)?;
                let reps = lab::representative_cells(&spec, 1)?;
                let doc = match lab::critical_p_bracket(&spec, &reps, *m_max, *p_lo, *p_hi, &config) {
                    Ok(b) => {
                        println!(
                            "critical p estimate: [{:.4}, {:.4}] (sigma {:.4} .. {:.4}, m <= {})",
                            b.p_low, b.p_high, b.sigma_low, b.sigma_high, b.m_max
                        );
                        json!({"estimate": true, "bracket": b})
                    }
                    Err(e @ Error::NoSignChange { .. }) => {
                        println!("critical p: {e}");
                        json!({"estimate": true, "error": e.to_string()})
                    }
                    Err(e) => return Err(e.into()),
                };
                out.text(&format!("{stem}_critical.json"), &serde_json::to_string_pretty(&doc).expect("json"))?;
            }
            let params = json!({
                "d": d,
                "p": p,
                "m_min": m_min,
                "m_max": m_max,
                "critical_p": critical_p,
                "p_lo": p_lo,
                "p_hi": p_hi,
                "solver": config.solver,
                "cell_cap": budget.cell_cap,
                "allow_slow": budget.allow_slow,
            });
            finish(&mut out, "scan", &stem, params, argv, started)?;
            if unconverged > 0 {
                return Err(Failure::NotConverged(format!("{unconverged} solves did not converge")));
            }
            return Ok(());
        }
        Command::Render { spec, level } => {
            let spec = spec_arg(spec)?;
            if spec.dimension() != 2 {
                return Err(Failure::Usage(format!("render needs a planar spec, got dimension {}", spec.dimension())));
            }
            if *level > svg::MAX_RENDER_LEVEL {
                return Err(Failure::Budget(format!(
                    "render level {level} exceeds {}",
                    svg::MAX_RENDER_LEVEL
                )));
            }
            let cells = spec.cells_at_level(*level)?;
            let stem = format!("{}_L{}", spec.name(), level);
            out.text(&format!("{stem}.svg"), &svg::carpet(&cells))?;
            println!("{} squares", cells.len());
            let params = json!({"spec": spec.to_text(), "name": spec.name(), "level": level});
            ("render", stem, params)
        }
    };
    finish(&mut out, name, &stem, params, argv, started)
}

fn finish(
    out: &mut Outputs,
    command: &str,
    stem: &str,
    parameters: serde_json::Value,
    argv: Vec<String>,
    started: Instant,
) -> Result<(), Failure> {
    let manifest = RunManifest {
        command: command.to_string(),
        argv,
        parameters,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: out.written.clone(),
    };
    let path = out.dir.join(format!("{stem}.manifest.json"));
    fs::write(&path, manifest.to_json())?;
    Ok(())
}

#[derive(serde::Serialize)]
struct RatioCsvRow {
    d: usize,
    p: f64,
    m: u32,
    corner: f64,
    center: f64,
    ratio: f64,
    floor: f64,
    /// Ratio above the previous `m` at the same `p`; empty on the first row.
    increasing: Option<bool>,
}

fn mark_increasing(rows: &mut [RatioCsvRow]) {
    for i in 1..rows.len() {
        if rows[i].p == rows[i - 1].p {
            rows[i].increasing = Some(rows[i].ratio > rows[i - 1].ratio);
        }
    }
}

fn print_ratio_table(rows: &[RatioCsvRow]) {
    println!("{:>6} {:>3} {:>16} {:>16} {:>14} {:>14}", "p", "m", "E(Q1)", "E(Q2)", "ratio", "floor");
    for r in rows {
        println!(
            "{:>6} {:>3} {:>16.10} {:>16.10} {:>14.8} {:>14.8}",
            r.p, r.m, r.corner, r.center, r.ratio, r.floor
        );
    }
}

fn write_ratio_csv(out: &mut Outputs, name: &str, rows: &[RatioCsvRow]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out.create(name)?);
    for r in rows {
        w.serialize(r).map_err(|e| Failure::Other(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown fractal specification `{0}` (expected one of F2, F3, tildeF2, G1, G2)")]
    UnknownSpec(String),

    #[error("invalid fractal specification: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("coordinate {coord} out of range 1..={max} at level {level}")]
    CoordinateOutOfRange { coord: u32, max: u32, level: u32 },

    #[error("level {0} exceeds the supported maximum of {max}", max = crate::lattice::MAX_LEVEL)]
    LevelTooDeep(u32),

    #[error("enumeration of {requested} cells exceeds the cap of {cap}")]
    BudgetExceeded { requested: u128, cap: usize },

    #[error("cell {0} is not a vertex of the graph")]
    CellNotInGraph(String),

    #[error("cell {0} does not belong to the fractal")]
    CellNotInFractal(String),

    #[error("cell sets must share level {expected}, found level {found}")]
    LevelMismatch { expected: u32, found: u32 },

    #[error("boundary sets overlap at cell {0}")]
    OverlappingSets(String),

    #[error("exponent p = {0} must be a finite number greater than 1")]
    InvalidExponent(f64),

    #[error("invalid Dirichlet data: {0}")]
    InvalidProblem(String),

    #[error("function has {found} values but the graph has {expected} vertices")]
    MissingValues { expected: usize, found: usize },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("unsupported dimension {0} (only d = 2 and d = 3 are covered)")]
    UnsupportedDimension(usize),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no crossing of sigma = 1 on [{p_lo}, {p_hi}] (sigma = {sigma_lo} .. {sigma_hi})")]
    NoSignChange {
        p_lo: f64,
        p_hi: f64,
        sigma_lo: f64,
        sigma_hi: f64,
    },

    #[error("free-vertex count {found} exceeds the oracle cap of {cap}")]
    OracleCap { found: usize, cap: usize },

    #[error("parse error: {0}")]
    Parse(String),
}

//! Base-5 cube partitions of `[0,1]^d` and the digit-defined self-similar sets
//! living on them.
//!
//! A level-`n` cell is the closed cube `∏ [(l_i - 1)/5^n, l_i/5^n]` with
//! 1-based integer coordinates `l_i ∈ {1, …, 5^n}`. A [`FractalSpec`] keeps a
//! subset of the 5^d level-1 cells; a level-`n` cell belongs to the fractal
//! iff each of its `n` base-5 digit tuples (most significant first) is one of
//! the retained level-1 cells. Removed cells are open in the construction, so
//! the digit test coincides with "the interior of the cell meets the set".

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BASE: u32 = 5;

/// Deepest level whose side count `5^n` still fits a `u32` coordinate.
pub const MAX_LEVEL: u32 = 13;

/// Default cap on the number of cells a single enumeration may produce.
pub const DEFAULT_CELL_CAP: usize = 10_000_000;

/// Number of cells along one axis at `level`.
pub fn side(level: u32) -> u32 {
    BASE.pow(level)
}

fn check_level(level: u32) -> Result<()> {
    if level > MAX_LEVEL {
        return Err(Error::LevelTooDeep(level));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    level: u32,
    coords: Vec<u32>,
}

impl CellIndex {
    pub fn new(level: u32, coords: Vec<u32>) -> Result<Self> {
        check_level(level)?;
        let max = side(level);
        if let Some(&bad) = coords.iter().find(|&&c| c == 0 || c > max) {
            return Err(Error::CoordinateOutOfRange {
                coord: bad,
                max,
                level,
            });
        }
        Ok(Self { level, coords })
    }

    /// The root cube `[0,1]^d`.
    pub fn root(dimension: usize) -> Self {
        Self {
            level: 0,
            coords: vec![1; dimension],
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn dimension(&self) -> usize {
        self.coords.len()
    }

    /// Ancestor of this cell `up` levels higher.
    pub fn ancestor(&self, up: u32) -> CellIndex {
        let up = up.min(self.level);
        let scale = side(up);
        CellIndex {
            level: self.level - up,
            coords: self.coords.iter().map(|&c| (c - 1) / scale + 1).collect(),
        }
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}(", self.level)?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Cells of a single level in canonical (lexicographic) order, stored flat.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    level: u32,
    dimension: usize,
    coords: Vec<u32>,
}

impl CellSet {
    pub fn empty(level: u32, dimension: usize) -> Self {
        Self {
            level,
            dimension,
            coords: Vec::new(),
        }
    }

    /// Sorts and deduplicates; every cell must have the given level and dimension.
    pub fn from_cells<I>(level: u32, dimension: usize, cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = CellIndex>,
    {
        let mut coords = Vec::new();
        for cell in cells {
            if cell.level != level {
                return Err(Error::LevelMismatch {
                    expected: level,
                    found: cell.level,
                });
            }
            if cell.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: cell.dimension(),
                });
            }
            coords.extend_from_slice(&cell.coords);
        }
        Ok(Self::from_flat_unsorted(level, dimension, coords))
    }

    pub(crate) fn from_flat_unsorted(level: u32, dimension: usize, coords: Vec<u32>) -> Self {
        let mut set = Self {
            level,
            dimension,
            coords,
        };
        set.canonicalize();
        set
    }

    fn canonicalize(&mut self) {
        let d = self.dimension;
        if d == 0 || self.coords.is_empty() {
            return;
        }
        let n = self.coords.len() / d;
        let mut order: Vec<usize> = (0..n).collect();
        let coords = &self.coords;
        order.par_sort_unstable_by(|&a, &b| coords[a * d..(a + 1) * d].cmp(&coords[b * d..(b + 1) * d]));
        let mut sorted = Vec::with_capacity(coords.len());
        for i in order {
            let cell = &coords[i * d..(i + 1) * d];
            if sorted.len() >= d && &sorted[sorted.len() - d..] == cell {
                continue;
            }
            sorted.extend_from_slice(cell);
        }
        self.coords = sorted;
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        if self.dimension == 0 {
            0
        } else {
            self.coords.len() / self.dimension
        }
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Coordinates of the `i`-th cell.
    pub fn get(&self, i: usize) -> &[u32] {
        &self.coords[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn cell(&self, i: usize) -> CellIndex {
        CellIndex {
            level: self.level,
            coords: self.get(i).to_vec(),
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[u32]> + '_ {
        self.coords.chunks_exact(self.dimension.max(1))
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        self.iter().map(move |c| CellIndex {
            level: self.level,
            coords: c.to_vec(),
        })
    }

    /// Canonical position of the cell with these coordinates, if present.
    pub fn index_of(&self, coords: &[u32]) -> Option<usize> {
        if coords.len() != self.dimension {
            return None;
        }
        let d = self.dimension;
        let (mut lo, mut hi) = (0usize, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.coords[mid * d..(mid + 1) * d].cmp(coords) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    pub fn contains(&self, cell: &CellIndex) -> bool {
        cell.level == self.level && self.index_of(&cell.coords).is_some()
    }

    /// Cells of `self` that are not in `other`.
    pub fn difference(&self, other: &CellSet) -> CellSet {
        let mut coords = Vec::new();
        for c in self.iter() {
            if other.level != self.level || other.index_of(c).is_none() {
                coords.extend_from_slice(c);
            }
        }
        CellSet {
            level: self.level,
            dimension: self.dimension,
            coords,
        }
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        self.first_common(other).is_none()
    }

    pub(crate) fn first_common(&self, other: &CellSet) -> Option<CellIndex> {
        if self.level != other.level {
            return None;
        }
        self.iter()
            .find(|c| other.index_of(c).is_some())
            .map(|c| CellIndex {
                level: self.level,
                coords: c.to_vec(),
            })
    }
}

/// A self-similar subset of `[0,1]^d` given by its retained level-1 cells.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FractalSpec {
    name: String,
    dimension: usize,
    retained: Vec<Vec<u32>>,
    #[serde(skip)]
    mask: Vec<bool>,
}

fn digit_slot(digits: &[u32]) -> usize {
    digits
        .iter()
        .fold(0usize, |acc, &g| acc * BASE as usize + (g - 1) as usize)
}

/// All tuples in `{1, …, 5}^d`, lexicographic.
fn all_level_one(dimension: usize) -> impl Iterator<Item = Vec<u32>> {
    let total = (BASE as usize).pow(dimension as u32);
    (0..total).map(move |mut k| {
        let mut t = vec![0u32; dimension];
        for slot in t.iter_mut().rev() {
            *slot = (k % BASE as usize) as u32 + 1;
            k /= BASE as usize;
        }
        t
    })
}

impl FractalSpec {
    pub fn new(name: impl Into<String>, dimension: usize, retained: Vec<Vec<u32>>) -> Result<Self> {
        if dimension == 0 || dimension > 6 {
            return Err(Error::InvalidSpec(format!(
                "dimension must be between 1 and 6, got {dimension}"
            )));
        }
        if retained.is_empty() {
            return Err(Error::InvalidSpec("retained set is empty".into()));
        }
        let mut mask = vec![false; (BASE as usize).pow(dimension as u32)];
        for t in &retained {
            if t.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: t.len(),
                });
            }
            if t.iter().any(|&g| g == 0 || g > BASE) {
                return Err(Error::InvalidSpec(format!(
                    "retained tuple {t:?} has an entry outside 1..=5"
                )));
            }
            mask[digit_slot(t)] = true;
        }
        let retained = all_level_one(dimension)
            .filter(|t| mask[digit_slot(t)])
            .collect();
        Ok(Self {
            name: name.into(),
            dimension,
            retained,
            mask,
        })
    }

    /// `F^(d)`: the cube minus the `2d` face-neighbours of the centre cell.
    pub fn unconstrained_carpet(dimension: usize) -> Result<Self> {
        let retained = all_level_one(dimension)
            .filter(|t| !is_center_face_neighbour(t))
            .collect();
        Self::new(format!("F{dimension}"), dimension, retained)
    }

    /// `G^(d)`: the cells of `F_1^(d)` that touch the boundary of the cube.
    pub fn boundary_carpet(dimension: usize) -> Result<Self> {
        let retained = all_level_one(dimension)
            .filter(|t| !is_center_face_neighbour(t) && t.iter().any(|&g| g == 1 || g == BASE))
            .collect();
        Self::new(format!("G{dimension}"), dimension, retained)
    }

    /// The planar carpet with the centre cross of five cells removed.
    pub fn cross_carpet() -> Self {
        let removed = [[3, 2], [3, 3], [3, 4], [2, 3], [4, 3]];
        let retained = all_level_one(2)
            .filter(|t| !removed.iter().any(|r| r[..] == t[..]))
            .collect();
        Self::new("tildeF2", 2, retained).expect("cross carpet is well formed")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Retained level-1 cells in lexicographic order.
    pub fn retained(&self) -> &[Vec<u32>] {
        &self.retained
    }

    pub fn retained_count(&self) -> usize {
        self.retained.len()
    }

    /// Same retained pattern, regardless of name.
    pub fn same_pattern(&self, other: &FractalSpec) -> bool {
        self.dimension == other.dimension && self.retained == other.retained
    }

    fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Digit test without range or dimension checks.
    pub(crate) fn contains_coords(&self, level: u32, coords: &[u32]) -> bool {
        let mask = self.mask();
        let mut scale = side(level);
        for _ in 0..level {
            scale /= BASE;
            let mut slot = 0usize;
            for &c in coords {
                slot = slot * BASE as usize + (((c - 1) / scale) % BASE) as usize;
            }
            if !mask[slot] {
                return false;
            }
        }
        true
    }

    pub fn contains_cell(&self, cell: &CellIndex) -> Result<bool> {
        if cell.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: cell.dimension(),
            });
        }
        Ok(self.contains_coords(cell.level, &cell.coords))
    }

    /// Number of level-`n` cells, `|retained|^n`, without overflow.
    pub fn cell_count(&self, level: u32) -> u128 {
        (self.retained.len() as u128).saturating_pow(level)
    }

    pub fn cells_at_level(&self, level: u32) -> Result<CellSet> {
        self.cells_at_level_capped(level, DEFAULT_CELL_CAP)
    }

    pub fn cells_at_level_capped(&self, level: u32, cap: usize) -> Result<CellSet> {
        let root = CellSet {
            level: 0,
            dimension: self.dimension,
            coords: vec![1; self.dimension],
        };
        self.subdivide_capped(&root, level, cap)
    }

    /// `S^m(A)`: the level `n + m` cells of the fractal inside cells of `A`.
    pub fn subdivide(&self, cells: &CellSet, m: u32) -> Result<CellSet> {
        self.subdivide_capped(cells, m, DEFAULT_CELL_CAP)
    }

    pub fn subdivide_capped(&self, cells: &CellSet, m: u32, cap: usize) -> Result<CellSet> {
        if cells.dimension != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: cells.dimension,
            });
        }
        check_level(cells.level + m)?;
        let requested = (cells.len() as u128).saturating_mul(self.cell_count(m));
        if requested > cap as u128 {
            return Err(Error::BudgetExceeded { requested, cap });
        }
        let d = self.dimension;
        let mut current = cells.coords.clone();
        for _ in 0..m {
            let mut next = Vec::with_capacity(current.len() * self.retained.len());
            for parent in current.chunks_exact(d) {
                for digits in &self.retained {
                    next.extend(parent.iter().zip(digits).map(|(&p, &g)| (p - 1) * BASE + g));
                }
            }
            current = next;
        }
        Ok(CellSet::from_flat_unsorted(cells.level + m, d, current))
    }

    pub fn hausdorff_dimension(&self) -> f64 {
        (self.retained.len() as f64).ln() / (BASE as f64).ln()
    }

    /// Serialized as `dimension=<d>; base=5; retained=<t1>;<t2>;…` with
    /// comma-separated tuples.
    pub fn to_text(&self) -> String {
        let tuples: Vec<String> = self
            .retained
            .iter()
            .map(|t| t.iter().map(u32::to_string).collect::<Vec<_>>().join(","))
            .collect();
        format!(
            "dimension={}; base={}; retained={}",
            self.dimension,
            BASE,
            tuples.join(";")
        )
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut dimension = None;
        let mut name = String::from("custom");
        let mut retained = Vec::new();
        let mut in_retained = false;
        for token in text.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (key, value) = match token.split_once('=') {
                Some((k, v)) => (Some(k.trim()), v.trim()),
                None => (None, token),
            };
            match key {
                Some("dimension") => {
                    in_retained = false;
                    dimension = Some(value.parse::<usize>().map_err(|e| {
                        Error::Parse(format!("bad dimension `{value}`: {e}"))
                    })?);
                }
                Some("base") => {
                    in_retained = false;
                    if value != "5" {
                        return Err(Error::Parse(format!("only base 5 is supported, got `{value}`")));
                    }
                }
                Some("name") => {
                    in_retained = false;
                    name = value.to_string();
                }
                Some("retained") => {
                    in_retained = true;
                    if !value.is_empty() {
                        retained.push(parse_tuple(value)?);
                    }
                }
                Some(other) => return Err(Error::Parse(format!("unknown key `{other}`"))),
                None if in_retained => retained.push(parse_tuple(value)?),
                None => return Err(Error::Parse(format!("unexpected token `{token}`"))),
            }
        }
        let dimension = dimension.ok_or_else(|| Error::Parse("missing `dimension=`".into()))?;
        Self::new(name, dimension, retained)
    }

    /// Whether the retained set is invariant under every symmetry of the cube.
    pub fn is_cube_symmetric(&self) -> bool {
        let level_one = CellSet::from_flat_unsorted(1, self.dimension, self.retained.concat());
        cube_symmetries(self.dimension)
            .iter()
            .all(|g| level_one.iter().all(|c| self.mask()[digit_slot(&g.apply(1, c))]))
    }
}

fn is_center_face_neighbour(t: &[u32]) -> bool {
    let off_center: Vec<_> = t.iter().filter(|&&g| g != 3).collect();
    off_center.len() == 1 && matches!(off_center[0], 2 | 4)
}

fn parse_tuple(s: &str) -> Result<Vec<u32>> {
    s.trim_matches(|c| c == '(' || c == ')')
        .split(',')
        .map(|x| {
            x.trim()
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("bad tuple entry `{x}` in `{s}`: {e}")))
        })
        .collect()
}

impl fmt::Display for FractalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for FractalSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse_text(s)
    }
}

/// Built-in specifications: `F2`, `F3`, `tildeF2`, `G1`, `G2`.
pub fn builtin_spec(name: &str) -> Result<FractalSpec> {
    match name {
        "F2" => FractalSpec::unconstrained_carpet(2),
        "F3" => FractalSpec::unconstrained_carpet(3),
        "tildeF2" => Ok(FractalSpec::cross_carpet()),
        "G1" => FractalSpec::boundary_carpet(1),
        "G2" => FractalSpec::boundary_carpet(2),
        other => Err(Error::UnknownSpec(other.to_string())),
    }
}

/// Names accepted by [`builtin_spec`].
pub const BUILTIN_NAMES: [&str; 5] = ["F2", "F3", "tildeF2", "G1", "G2"];

/// Resolve either a built-in name or the text serialization.
pub fn resolve_spec(name_or_text: &str) -> Result<FractalSpec> {
    if name_or_text.contains('=') {
        FractalSpec::parse_text(name_or_text)
    } else {
        builtin_spec(name_or_text)
    }
}

/// A symmetry of the cube: output axis `i` reads input axis `perm[i]`,
/// reflected (`l ↦ 5^n + 1 - l`) when `flip[i]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CubeSymmetry {
    perm: Vec<usize>,
    flip: Vec<bool>,
}

impl CubeSymmetry {
    pub fn apply(&self, level: u32, coords: &[u32]) -> Vec<u32> {
        let top = side(level) + 1;
        self.perm
            .iter()
            .zip(&self.flip)
            .map(|(&axis, &flip)| {
                let c = coords[axis];
                if flip {
                    top - c
                } else {
                    c
                }
            })
            .collect()
    }

    /// [`CubeSymmetry::apply`] writing into `out`.
    pub fn apply_into(&self, level: u32, coords: &[u32], out: &mut Vec<u32>) {
        let top = side(level) + 1;
        out.clear();
        out.extend(self.perm.iter().zip(&self.flip).map(|(&axis, &flip)| {
            let c = coords[axis];
            if flip {
                top - c
            } else {
                c
            }
        }));
    }

    pub fn apply_cell(&self, cell: &CellIndex) -> CellIndex {
        CellIndex {
            level: cell.level,
            coords: self.apply(cell.level, &cell.coords),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &a)| i == a) && self.flip.iter().all(|f| !f)
    }
}

/// The full hyperoctahedral group, `2^d d!` elements.
pub fn cube_symmetries(dimension: usize) -> Vec<CubeSymmetry> {
    fn permutations(items: Vec<usize>) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.clone();
            let head = rest.remove(i);
            for mut tail in permutations(rest) {
                tail.insert(0, head);
                out.push(tail);
            }
        }
        out
    }
    let mut group = Vec::new();
    for perm in permutations((0..dimension).collect()) {
        for bits in 0..(1u32 << dimension) {
            let flip = (0..dimension).map(|i| bits & (1 << i) != 0).collect();
            group.push(CubeSymmetry {
                perm: perm.clone(),
                flip,
            });
        }
    }
    group
}

/// Partition of `cells` into orbits of the cube symmetry group; each orbit is
/// listed with its lexicographically smallest member first. Orbits are ordered
/// by that representative.
pub fn symmetry_orbits(cells: &CellSet) -> Vec<Vec<CellIndex>> {
    let group = cube_symmetries(cells.dimension());
    let mut seen = vec![false; cells.len()];
    let mut orbits = Vec::new();
    for i in 0..cells.len() {
        if seen[i] {
            continue;
        }
        let mut orbit: Vec<CellIndex> = Vec::new();
        for g in &group {
            let image = g.apply(cells.level(), cells.get(i));
            if let Some(j) = cells.index_of(&image) {
                if !seen[j] {
                    seen[j] = true;
                    orbit.push(cells.cell(j));
                }
            }
        }
        orbit.sort();
        orbits.push(orbit);
    }
    orbits
}

//! Adjacency graphs on the level-`n` cells of a fractal.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{side, CellIndex, CellSet, FractalSpec, DEFAULT_CELL_CAP};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AdjacencyMode {
    /// `Q ∩ Q' ≠ ∅`.
    NonemptyIntersection,
    /// `#(Q ∩ Q') > 1`: the intersection is at least a segment.
    SharedAtLeastEdge,
    /// Codimension-one contact.
    SharedFace,
}

impl AdjacencyMode {
    pub const ALL: [AdjacencyMode; 3] = [
        AdjacencyMode::NonemptyIntersection,
        AdjacencyMode::SharedAtLeastEdge,
        AdjacencyMode::SharedFace,
    ];

    /// Decides adjacency from the per-axis coordinate offsets of two cells.
    pub fn admits_offset(self, offset: &[i64]) -> bool {
        if offset.iter().any(|o| o.abs() > 1) {
            return false;
        }
        let moved = offset.iter().filter(|o| **o != 0).count();
        if moved == 0 {
            return false;
        }
        match self {
            AdjacencyMode::NonemptyIntersection => true,
            AdjacencyMode::SharedAtLeastEdge => moved < offset.len(),
            AdjacencyMode::SharedFace => moved == 1,
        }
    }

    pub fn admits(self, a: &[u32], b: &[u32]) -> bool {
        let offset: Vec<i64> = a.iter().zip(b).map(|(&x, &y)| x as i64 - y as i64).collect();
        self.admits_offset(&offset)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AdjacencyMode::NonemptyIntersection => "intersection",
            AdjacencyMode::SharedAtLeastEdge => "edge",
            AdjacencyMode::SharedFace => "face",
        }
    }
}

impl fmt::Display for AdjacencyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdjacencyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "intersection" | "nonempty" | "nonemptyintersection" => {
                Ok(AdjacencyMode::NonemptyIntersection)
            }
            "edge" | "sharedatleastedge" => Ok(AdjacencyMode::SharedAtLeastEdge),
            "face" | "sharedface" => Ok(AdjacencyMode::SharedFace),
            _ => Err(Error::Parse(format!(
                "unknown adjacency mode `{s}` (expected intersection, edge or face)"
            ))),
        }
    }
}

/// Symmetric adjacency in compressed sparse row form. Neighbour lists are
/// sorted and contain no self-loops or duplicates. Edges carry an optional
/// positive weight (1 when absent).
#[derive(Clone, Debug, PartialEq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<u32>,
    weights: Option<Vec<f64>>,
}

impl Adjacency {
    /// Builds from an undirected edge list; duplicates are merged.
    pub fn from_edges(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut lists: Vec<Vec<u32>> = vec![Vec::new(); vertex_count];
        for &(u, v) in edges {
            if u >= vertex_count || v >= vertex_count {
                return Err(Error::InvalidProblem(format!(
                    "edge ({u}, {v}) references a vertex outside 0..{vertex_count}"
                )));
            }
            if u == v {
                return Err(Error::InvalidProblem(format!("self-loop at vertex {u}")));
            }
            lists[u].push(v as u32);
            lists[v].push(u as u32);
        }
        Ok(Self::from_lists(lists))
    }

    /// Weighted undirected edges; weights of repeated edges add up.
    pub fn from_weighted_edges(vertex_count: usize, edges: &[(usize, usize)], weights: &[f64]) -> Result<Self> {
        if weights.len() != edges.len() {
            return Err(Error::MissingValues {
                expected: edges.len(),
                found: weights.len(),
            });
        }
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); vertex_count];
        for (&(u, v), &w) in edges.iter().zip(weights) {
            if u >= vertex_count || v >= vertex_count || u == v {
                return Err(Error::InvalidProblem(format!(
                    "edge ({u}, {v}) is a self-loop or leaves 0..{vertex_count}"
                )));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidProblem(format!("edge ({u}, {v}) has weight {w}")));
            }
            lists[u].push((v as u32, w));
            lists[v].push((u as u32, w));
        }
        let mut offsets = Vec::with_capacity(vertex_count + 1);
        offsets.push(0);
        let (mut targets, mut merged) = (Vec::new(), Vec::new());
        for list in &mut lists {
            list.sort_unstable_by_key(|e| e.0);
            for &(t, w) in list.iter() {
                if targets.len() > *offsets.last().unwrap() && targets.last() == Some(&t) {
                    *merged.last_mut().unwrap() += w;
                } else {
                    targets.push(t);
                    merged.push(w);
                }
            }
            offsets.push(targets.len());
        }
        Ok(Self {
            offsets,
            targets,
            weights: Some(merged),
        })
    }

    fn from_lists(mut lists: Vec<Vec<u32>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut targets = Vec::new();
        for list in &mut lists {
            list.sort_unstable();
            list.dedup();
            targets.extend_from_slice(list);
            offsets.push(targets.len());
        }
        Self {
            offsets,
            targets,
            weights: None,
        }
    }

    /// Path `0 - 1 - … - k`.
    pub fn path(edge_count: usize) -> Self {
        let edges: Vec<_> = (0..edge_count).map(|i| (i, i + 1)).collect();
        Self::from_edges(edge_count + 1, &edges).expect("path edges are valid")
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    /// Weights parallel to [`Adjacency::neighbors`]; `None` for an
    /// unweighted graph.
    pub fn neighbor_weights(&self, v: usize) -> Option<&[f64]> {
        self.weights
            .as_deref()
            .map(|w| &w[self.offsets[v]..self.offsets[v + 1]])
    }

    pub fn is_weighted(&self) -> bool {
        self.weights.is_some()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as u32)).is_ok()
    }

    /// Undirected edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(|&v| v as usize)
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    /// As [`Adjacency::edges`] with each edge's weight.
    pub fn weighted_edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            let ws = self.neighbor_weights(u);
            self.neighbors(u)
                .iter()
                .enumerate()
                .filter(move |&(_, &v)| v as usize > u)
                .map(move |(k, &v)| (u, v as usize, ws.map_or(1.0, |w| w[k])))
        })
    }
}

/// Cell adjacency graph of one level of a fractal.
#[derive(Clone, Debug)]
pub struct CellGraph {
    spec: FractalSpec,
    level: u32,
    mode: AdjacencyMode,
    vertices: CellSet,
    adjacency: Adjacency,
}

fn nonzero_offsets(dimension: usize) -> Vec<Vec<i64>> {
    let total = 3usize.pow(dimension as u32);
    (0..total)
        .map(|mut k| {
            let mut o = vec![0i64; dimension];
            for slot in o.iter_mut().rev() {
                *slot = (k % 3) as i64 - 1;
                k /= 3;
            }
            o
        })
        .filter(|o| o.iter().any(|&x| x != 0))
        .collect()
}

fn shifted(coords: &[u32], offset: &[i64], max: u32, out: &mut Vec<u32>) -> bool {
    out.clear();
    for (&c, &o) in coords.iter().zip(offset) {
        let v = c as i64 + o;
        if v < 1 || v > max as i64 {
            return false;
        }
        out.push(v as u32);
    }
    true
}

impl CellGraph {
    pub fn build(spec: &FractalSpec, level: u32, mode: AdjacencyMode) -> Result<Self> {
        Self::build_capped(spec, level, mode, DEFAULT_CELL_CAP)
    }

    pub fn build_capped(spec: &FractalSpec, level: u32, mode: AdjacencyMode, cap: usize) -> Result<Self> {
        let vertices = spec.cells_at_level_capped(level, cap)?;
        let offsets: Vec<Vec<i64>> = nonzero_offsets(spec.dimension())
            .into_iter()
            .filter(|o| mode.admits_offset(o))
            .collect();
        let max = side(level);
        const CHUNK: usize = 4096;
        let lists: Vec<Vec<u32>> = (0..vertices.len())
            .into_par_iter()
            .with_min_len(CHUNK)
            .map_init(Vec::new, |scratch, v| {
                let here = vertices.get(v);
                let mut list = Vec::with_capacity(offsets.len());
                for o in &offsets {
                    if shifted(here, o, max, scratch) && spec.contains_coords(level, scratch) {
                        let w = vertices
                            .index_of(scratch)
                            .expect("digit-test members are enumerated");
                        list.push(w as u32);
                    }
                }
                list
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            level,
            mode,
            vertices,
            adjacency: Adjacency::from_lists(lists),
        })
    }

    pub fn spec(&self) -> &FractalSpec {
        &self.spec
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn mode(&self) -> AdjacencyMode {
        self.mode
    }

    pub fn vertices(&self) -> &CellSet {
        &self.vertices
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.edge_count()
    }

    pub fn index_of(&self, cell: &CellIndex) -> Result<usize> {
        if cell.level() != self.level {
            return Err(Error::CellNotInGraph(cell.to_string()));
        }
        self.vertices
            .index_of(cell.coords())
            .ok_or_else(|| Error::CellNotInGraph(cell.to_string()))
    }

    /// `Γ(Q)`: `Q` and every cell of the level meeting it. Uses the
    /// intersection relation whatever the graph's own mode is.
    pub fn gamma(&self, cell: &CellIndex) -> Result<CellSet> {
        self.index_of(cell)?;
        let max = side(self.level);
        let mut coords = cell.coords().to_vec();
        let mut scratch = Vec::new();
        for o in nonzero_offsets(self.spec.dimension()) {
            if shifted(cell.coords(), &o, max, &mut scratch) && self.vertices.index_of(&scratch).is_some() {
                coords.extend_from_slice(&scratch);
            }
        }
        Ok(CellSet::from_flat_unsorted(self.level, self.spec.dimension(), coords))
    }

    /// `Γ(Q)^c` within the vertex set.
    pub fn gamma_complement(&self, cell: &CellIndex) -> Result<CellSet> {
        let gamma = self.gamma(cell)?;
        Ok(self.vertices.difference(&gamma))
    }

    /// Header `<level> <mode>` then one `u v` line per edge, `u < v`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.level, self.mode)?;
        for (u, v) in self.adjacency.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    /// Graph Laplacian (`p = 2`) in MatrixMarket symmetric coordinate form,
    /// lower triangle, 1-based.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.vertex_count();
        writeln!(out, "%%MatrixMarket matrix coordinate real symmetric")?;
        writeln!(out, "% graph Laplacian, level {} {} adjacency", self.level, self.mode)?;
        writeln!(out, "{n} {n} {}", n + self.edge_count())?;
        for v in 0..n {
            writeln!(out, "{} {} {}", v + 1, v + 1, self.adjacency.degree(v))?;
            for &u in self.adjacency.neighbors(v) {
                if (u as usize) < v {
                    writeln!(out, "{} {} -1", v + 1, u + 1)?;
                }
            }
        }
        Ok(())
    }

    /// CSV of the vertex coordinates in canonical order: `index,l1,…,ld`.
    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend((1..=self.spec.dimension()).map(|i| format!("l{i}")));
        w.write_record(&header).map_err(csv_err)?;
        for (i, c) in self.vertices.iter().enumerate() {
            let mut row = vec![i.to_string()];
            row.extend(c.iter().map(u32::to_string));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::builtin_spec;

    fn cell(level: u32, coords: &[u32]) -> CellIndex {
        CellIndex::new(level, coords.to_vec()).unwrap()
    }

    #[test]
    fn level_one_edge_counts() {
        let f2 = builtin_spec("F2").unwrap();
        let g = CellGraph::build(&f2, 1, AdjacencyMode::NonemptyIntersection).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (21, 44));
        let g = CellGraph::build(&f2, 1, AdjacencyMode::SharedFace).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (21, 24));
        // In the plane "more than a point" is the same as sharing a side.
        let g = CellGraph::build(&f2, 1, AdjacencyMode::SharedAtLeastEdge).unwrap();
        assert_eq!(g.edge_count(), 24);
        let g1 = builtin_spec("G1").unwrap();
        let g = CellGraph::build(&g1, 1, AdjacencyMode::NonemptyIntersection).unwrap();
        assert_eq!((g.vertex_count(), g.edge_count()), (2, 0));
    }

    #[test]
    fn gamma_examples() {
        let f2 = builtin_spec("F2").unwrap();
        let g = CellGraph::build(&f2, 1, AdjacencyMode::SharedFace).unwrap();
        let center = g.gamma(&cell(1, &[3, 3])).unwrap();
        let expected =
            CellSet::from_cells(1, 2, [[3, 3], [2, 2], [2, 4], [4, 2], [4, 4]].map(|c| cell(1, &c))).unwrap();
        assert_eq!(center, expected);
        let corner = g.gamma(&cell(1, &[1, 1])).unwrap();
        assert_eq!(corner.len(), 4);
        assert!(corner.contains(&cell(1, &[2, 2])));
        assert_eq!(g.gamma_complement(&cell(1, &[3, 3])).unwrap().len(), 16);
        assert_eq!(g.gamma_complement(&cell(1, &[1, 1])).unwrap().len(), 17);
        assert!(matches!(g.gamma(&cell(1, &[3, 2])), Err(Error::CellNotInGraph(_))));

        let f3 = builtin_spec("F3").unwrap();
        let g = CellGraph::build(&f3, 1, AdjacencyMode::NonemptyIntersection).unwrap();
        assert_eq!(g.gamma(&cell(1, &[3, 3, 3])).unwrap().len(), 21);

        let g1 = builtin_spec("G1").unwrap();
        let g = CellGraph::build(&g1, 1, AdjacencyMode::NonemptyIntersection).unwrap();
        let rest = g.gamma_complement(&cell(1, &[1])).unwrap();
        assert_eq!(rest.cells().collect::<Vec<_>>(), vec![cell(1, &[5])]);
    }

    #[test]
    fn mode_predicates_in_three_dimensions() {
        let m = AdjacencyMode::SharedAtLeastEdge;
        assert!(m.admits(&[1, 1, 1], &[2, 1, 1]));
        assert!(m.admits(&[1, 1, 1], &[2, 2, 1]));
        assert!(!m.admits(&[1, 1, 1], &[2, 2, 2]));
        assert!(AdjacencyMode::NonemptyIntersection.admits(&[1, 1, 1], &[2, 2, 2]));
        assert!(!AdjacencyMode::SharedFace.admits(&[1, 1, 1], &[2, 2, 1]));
        assert!(!AdjacencyMode::NonemptyIntersection.admits(&[1, 1, 1], &[1, 1, 1]));
        assert!(!AdjacencyMode::NonemptyIntersection.admits(&[1, 1, 1], &[3, 1, 1]));
    }

    #[test]
    fn modes_parse() {
        for m in AdjacencyMode::ALL {
            assert_eq!(m.as_str().parse::<AdjacencyMode>().unwrap(), m);
        }
        assert!("diagonal".parse::<AdjacencyMode>().is_err());
    }

    #[test]
    fn adjacency_from_edges_validates() {
        assert!(Adjacency::from_edges(2, &[(0, 2)]).is_err());
        assert!(Adjacency::from_edges(2, &[(1, 1)]).is_err());
        let a = Adjacency::from_edges(3, &[(0, 1), (1, 0), (2, 1)]).unwrap();
        assert_eq!(a.edge_count(), 2);
        assert_eq!(a.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        assert_eq!(Adjacency::path(4).edge_count(), 4);
    }

    #[test]
    fn exports() {
        let f2 = builtin_spec("F2").unwrap();
        let g = CellGraph::build(&f2, 1, AdjacencyMode::NonemptyIntersection).unwrap();
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("1 intersection"));
        assert_eq!(lines.count(), 44);

        let mut buf = Vec::new();
        g.write_matrix_market(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
        assert!(text.contains("\n21 21 65\n"));

        let mut buf = Vec::new();
        g.write_cells_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("index,l1,l2"));
        assert_eq!(text.lines().count(), 22);
    }
}

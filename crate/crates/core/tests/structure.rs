use fraccond::lattice::{cube_symmetries, side, BUILTIN_NAMES};
use fraccond::oracle::{enumerate_cells, exhaustive_adjacency};
use fraccond::{builtin_spec, AdjacencyMode, CellGraph, CellIndex};
use std::collections::BTreeSet;

fn edge_set(graph: &CellGraph) -> BTreeSet<(usize, usize)> {
    graph.adjacency().edges().collect()
}

#[test]
fn digit_membership_matches_similitude_construction() {
    for name in BUILTIN_NAMES {
        let spec = builtin_spec(name).unwrap();
        for level in 0..=3 {
            let cells = spec.cells_at_level(level).unwrap();
            let listed: Vec<Vec<u32>> = cells.iter().map(<[u32]>::to_vec).collect();
            assert_eq!(listed, enumerate_cells(&spec, level), "{name} level {level}");
            assert_eq!(cells.len() as u128, (spec.retained_count() as u128).pow(level));
        }
    }
}

#[test]
fn subdivision_commutes_with_levels() {
    for name in BUILTIN_NAMES {
        let spec = builtin_spec(name).unwrap();
        for (n, m) in [(0, 2), (1, 1), (1, 2), (2, 1)] {
            let coarse = spec.cells_at_level(n).unwrap();
            assert_eq!(spec.subdivide(&coarse, m).unwrap(), spec.cells_at_level(n + m).unwrap());
        }
    }
}

#[test]
fn exhaustive_adjacency_matches_build() {
    for name in BUILTIN_NAMES {
        let spec = builtin_spec(name).unwrap();
        for level in 1..=2 {
            for mode in AdjacencyMode::ALL {
                let graph = CellGraph::build(&spec, level, mode).unwrap();
                let expected: BTreeSet<_> = exhaustive_adjacency(&spec, level, mode).unwrap().into_iter().collect();
                assert_eq!(edge_set(&graph), expected, "{name} level {level} {mode}");
            }
        }
    }
}

#[test]
fn modes_are_nested() {
    for name in ["F2", "F3", "tildeF2", "G2"] {
        let spec = builtin_spec(name).unwrap();
        let [inter, edge, face] =
            AdjacencyMode::ALL.map(|mode| edge_set(&CellGraph::build(&spec, 2, mode).unwrap()));
        assert!(face.is_subset(&edge), "{name}");
        assert!(edge.is_subset(&inter), "{name}");
    }
}

#[test]
fn adjacency_is_symmetric_and_irreflexive() {
    let graph = CellGraph::build(&builtin_spec("F2").unwrap(), 3, AdjacencyMode::NonemptyIntersection).unwrap();
    let adj = graph.adjacency();
    for v in 0..adj.vertex_count() {
        for &w in adj.neighbors(v) {
            assert_ne!(v, w as usize);
            assert!(adj.has_edge(w as usize, v));
        }
    }
}

#[test]
fn construction_is_deterministic() {
    let spec = builtin_spec("F2").unwrap();
    let dump = || {
        let mut out = Vec::new();
        CellGraph::build(&spec, 3, AdjacencyMode::NonemptyIntersection)
            .unwrap()
            .write_edge_list(&mut out)
            .unwrap();
        out
    };
    assert_eq!(dump(), dump());
}

#[test]
fn graphs_are_cube_symmetric() {
    for (name, level) in [("F2", 1), ("F2", 2), ("F2", 3), ("F3", 1), ("F3", 2)] {
        let spec = builtin_spec(name).unwrap();
        let graph = CellGraph::build(&spec, level, AdjacencyMode::NonemptyIntersection).unwrap();
        let vertices = graph.vertices();
        for g in cube_symmetries(spec.dimension()) {
            let image: Vec<usize> = vertices
                .iter()
                .map(|c| vertices.index_of(&g.apply(level, c)).expect("image is a vertex"))
                .collect();
            for (u, v) in graph.adjacency().edges() {
                assert!(graph.adjacency().has_edge(image[u], image[v]), "{name} level {level} {g:?}");
            }
        }
    }
}

/// Paths from `S^m(Q₁)` to `S^m(Γ(Q₁)^c)` across the strip `[0,1] × G`.
#[test]
fn boundary_strip_paths_exist() {
    let spec = builtin_spec("F2").unwrap();
    let g1 = builtin_spec("G1").unwrap();
    let q1 = CellIndex::new(1, vec![1, 1]).unwrap();
    let far = CellGraph::build(&spec, 1, AdjacencyMode::NonemptyIntersection)
        .unwrap()
        .gamma_complement(&q1)
        .unwrap();
    for m in 0..=4u32 {
        let graph = CellGraph::build(&spec, m + 1, AdjacencyMode::NonemptyIntersection).unwrap();
        let strips = g1.cells_at_level(m + 1).unwrap();
        let mut count = 0;
        for t in strips.iter().filter(|t| t[0] <= side(m)) {
            count += 1;
            let path: Vec<usize> = (0..=side(m) + 1)
                .map(|i| {
                    let cell = CellIndex::new(m + 1, vec![side(m) + i, t[0]]).unwrap();
                    graph.index_of(&cell).expect("path cell is retained")
                })
                .collect();
            for pair in path.windows(2) {
                assert!(graph.adjacency().has_edge(pair[0], pair[1]), "m={m}");
            }
            let first = graph.vertices().cell(path[0]);
            assert_eq!(first.ancestor(m), q1);
            let last = graph.vertices().cell(*path.last().unwrap());
            assert!(far.contains(&last.ancestor(m)), "m={m}");
        }
        assert_eq!(count, 1 << m);
    }
}

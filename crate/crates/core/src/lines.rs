//! Coupling graph and extraction of implicit solver lines.
//!
//! Lines follow couplings that dominate the other couplings of the cells they
//! join, so they run along the stiff direction of stretched grids and stop
//! where the grid becomes nearly isotropic. Every cell ends up in exactly one
//! line; cells not picked up by a multi-cell line become singletons, which
//! the preconditioner treats as plain block-diagonal entries.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::block::BlockVector;
use crate::error::{Error, Result};
use crate::system::NonlinearSystem;

/// Default ratio separating anisotropic cells from nearly isotropic ones.
pub const DEFAULT_ANISOTROPY_THRESHOLD: f64 = 4.0;

/// Undirected weighted graph of cell couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingGraph {
    n_cells: usize,
    edges: Vec<(usize, usize, f64)>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl CouplingGraph {
    /// Duplicate pairs keep the larger weight; `(i, j)` and `(j, i)` are the same edge.
    pub fn new(
        n_cells: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut unique: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (i, j, w) in edges {
            if i == j || i >= n_cells || j >= n_cells {
                return Err(Error::InvalidConfig(format!(
                    "invalid edge ({i}, {j}) for {n_cells} cells"
                )));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "edge ({i}, {j}) has weight {w}"
                )));
            }
            let key = (i.min(j), i.max(j));
            let slot = unique.entry(key).or_insert(w);
            *slot = slot.max(w);
        }
        let edges: Vec<_> = unique.into_iter().map(|((i, j), w)| (i, j, w)).collect();
        let mut adjacency = vec![Vec::new(); n_cells];
        for &(i, j, w) in &edges {
            adjacency[i].push((j, w));
            adjacency[j].push((i, w));
        }
        for adj in &mut adjacency {
            adj.sort_by_key(|&(j, _)| j);
        }
        Ok(Self {
            n_cells,
            edges,
            adjacency,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Edges as `(i, j, weight)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(n, _)| n)
            .ok()
            .map(|k| self.adjacency[i][k].1)
    }

    /// Max over min incident weight; 1 for cells with fewer than two edges.
    pub fn anisotropy(&self, i: usize) -> f64 {
        let adj = &self.adjacency[i];
        if adj.len() < 2 {
            return 1.0;
        }
        let (lo, hi) = adj
            .iter()
            .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &(_, w)| {
                (lo.min(w), hi.max(w))
            });
        if hi == 0.0 {
            1.0
        } else if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}

/// Coupling graph of the first-order Jacobian at `w`; edge weight is
/// `max(|O_ij|_F, |O_ji|_F)`.
pub fn build_coupling_graph<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
) -> Result<CouplingGraph> {
    let blocks = system.first_order_blocks(w)?;
    let n = blocks.layout().n_cells();
    let edges: Vec<_> = blocks
        .off_blocks()
        .map(|(i, j, o)| (i, j, o.frobenius_norm()))
        .collect();
    CouplingGraph::new(n, edges)
}

/// A partition of the cells into simple paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineSet {
    n_cells: usize,
    lines: Vec<Vec<usize>>,
}

impl LineSet {
    pub fn new(n_cells: usize, lines: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; n_cells];
        for line in &lines {
            if line.is_empty() {
                return Err(Error::InvalidConfig("empty line".into()));
            }
            for &c in line {
                if c >= n_cells || seen[c] {
                    return Err(Error::InvalidConfig(format!(
                        "cell {c} out of range or repeated in line set"
                    )));
                }
                seen[c] = true;
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidConfig(format!("cell {c} is not on any line")));
        }
        Ok(Self { n_cells, lines })
    }

    pub fn singletons(n_cells: usize) -> Self {
        Self {
            n_cells,
            lines: (0..n_cells).map(|c| vec![c]).collect(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn lines(&self) -> &[Vec<usize>] {
        &self.lines
    }

    pub fn multi_cell_lines(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.lines.iter().filter(|l| l.len() > 1)
    }

    /// Number of cells that sit on lines of two or more cells.
    pub fn multi_cell_membership(&self) -> usize {
        self.multi_cell_lines().map(Vec::len).sum()
    }

    /// Consecutive cells of every line share a graph edge.
    pub fn follows_graph(&self, graph: &CouplingGraph) -> bool {
        graph.n_cells() == self.n_cells
            && self
                .lines
                .iter()
                .all(|l| l.windows(2).all(|p| graph.weight(p[0], p[1]).is_some()))
    }

    /// One line per row, cell indices separated by spaces.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            let mut first = true;
            for c in line {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(n_cells: usize, text: &str) -> Result<Self> {
        let lines = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_whitespace()
                    .map(|t| {
                        t.parse::<usize>()
                            .map_err(|e| Error::InvalidConfig(format!("bad cell index {t:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_cells, lines)
    }
}

/// Line extraction.
///
/// Every cell nominates its two strongest neighbours (ties by index), and
/// mutual nominations link cells into chains. Along a chain, an edge is scored
/// by the best ratio, over chain cells `k` it can reach, of the weakest chain
/// edge on the way to `k` (itself included) over the weakest coupling
/// touching `k`. The walk only passes through cells whose chain couplings
/// exceed their other couplings by `threshold`. Edges scoring at least
/// `threshold` become line edges, so a line runs from an anisotropic cell
/// along dominant couplings and ends at the first nearly isotropic cell.
/// Cells have at most two line edges; a cycle is cut at its weakest edge.
/// Raising `threshold` only removes line edges.
pub fn extract_lines(graph: &CouplingGraph, threshold: f64) -> Result<LineSet> {
    if !(threshold > 1.0) {
        return Err(Error::InvalidConfig(format!(
            "anisotropy threshold must exceed 1, got {threshold}"
        )));
    }
    let n = graph.n_cells();
    let nominated: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut adj = graph.neighbors(i).to_vec();
            adj.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            adj.into_iter().take(2).map(|(j, _)| j).collect()
        })
        .collect();
    let mut chains: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(i, j, w) in graph.edges() {
        if w > 0.0 && nominated[i].contains(&j) && nominated[j].contains(&i) {
            chains[i].push((j, w));
            chains[j].push((i, w));
        }
    }
    let weakest: Vec<f64> = (0..n)
        .map(|i| {
            graph
                .neighbors(i)
                .iter()
                .map(|&(_, w)| w)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();

    // a line may pass through a cell only if its chain couplings dominate
    // every other coupling it has
    let pass_through: Vec<bool> = (0..n)
        .map(|i| {
            let along = chains[i]
                .iter()
                .map(|&(_, w)| w)
                .fold(f64::INFINITY, f64::min);
            let across = graph
                .neighbors(i)
                .iter()
                .filter(|&&(j, _)| !chains[i].iter().any(|&(c, _)| c == j))
                .map(|&(_, w)| w)
                .fold(0.0, f64::max);
            chains[i].len() == 2 && along >= threshold * across
        })
        .collect();
    // best ratio reachable walking away from `from` through `to`
    let reach = |from: usize, to: usize, w: f64| {
        let (mut prev, mut at, mut bottleneck) = (from, to, w);
        let mut best = bottleneck / weakest[at];
        while let Some(&(next, wn)) = chains[at]
            .iter()
            .find(|&&(j, _)| j != prev && pass_through[at])
        {
            if next == from || next == to {
                break;
            }
            bottleneck = bottleneck.min(wn);
            best = best.max(bottleneck / weakest[next]);
            prev = at;
            at = next;
        }
        best
    };
    let mut links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, w) in &chains[i] {
            if i < j && reach(j, i, w).max(reach(i, j, w)) >= threshold {
                links[i].push((j, w));
                links[j].push((i, w));
            }
        }
    }

    let mut visited = vec![false; n];
    let mut lines: Vec<Vec<usize>> = Vec::new();
    // open paths, walked from their lower-numbered end
    for start in 0..n {
        if visited[start] || links[start].len() != 1 {
            continue;
        }
        lines.push(walk(&links, &mut visited, start, None));
    }
    // what is left with links lies on cycles
    for start in 0..n {
        if visited[start] || links[start].is_empty() {
            continue;
        }
        let cycle = walk(&links, &mut visited, start, None);
        let len = cycle.len();
        let cut = (0..len)
            .min_by(|&a, &b| {
                let wa = weight_between(&links, cycle[a], cycle[(a + 1) % len]);
                let wb = weight_between(&links, cycle[b], cycle[(b + 1) % len]);
                wa.total_cmp(&wb).then(a.cmp(&b))
            })
            .expect("cycles are not empty");
        lines.push((0..len).map(|k| cycle[(cut + 1 + k) % len]).collect());
    }
    for c in 0..n {
        if !visited[c] {
            lines.push(vec![c]);
        }
    }
    LineSet::new(n, lines)
}

fn walk(
    links: &[Vec<(usize, f64)>],
    visited: &mut [bool],
    start: usize,
    from: Option<usize>,
) -> Vec<usize> {
    let mut path = vec![start];
    visited[start] = true;
    let (mut prev, mut at) = (from, start);
    while let Some(&(next, _)) = links[at]
        .iter()
        .find(|&&(j, _)| Some(j) != prev && !visited[j])
    {
        visited[next] = true;
        path.push(next);
        prev = Some(at);
        at = next;
    }
    path
}

fn weight_between(links: &[Vec<(usize, f64)>], a: usize, b: usize) -> f64 {
    links[a]
        .iter()
        .find(|&&(j, _)| j == b)
        .map_or(f64::INFINITY, |&(_, w)| w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path_graph(weights: &[f64]) -> CouplingGraph {
        CouplingGraph::new(
            weights.len() + 1,
            weights.iter().enumerate().map(|(i, &w)| (i, i + 1, w)),
        )
        .unwrap()
    }

    fn grid_graph(nx: usize, ny: usize, wx: f64, wy: f64) -> CouplingGraph {
        let idx = |i: usize, j: usize| j * nx + i;
        let mut edges = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if i + 1 < nx {
                    edges.push((idx(i, j), idx(i + 1, j), wx));
                }
                if j + 1 < ny {
                    edges.push((idx(i, j), idx(i, j + 1), wy));
                }
            }
        }
        CouplingGraph::new(nx * ny, edges).unwrap()
    }

    #[test]
    fn isotropic_graph_gives_singletons() {
        let g = grid_graph(6, 5, 1.0, 1.0);
        let lines = extract_lines(&g, 4.0).unwrap();
        assert_eq!(lines.lines().len(), 30);
        assert_eq!(lines.multi_cell_membership(), 0);
    }

    #[test]
    fn strong_region_of_chain_becomes_one_line() {
        // cells 7..=12 joined by strong edges, weak elsewhere
        let mut w = vec![1.0; 19];
        for e in 7..12 {
            w[e] = 1e3;
        }
        let g = path_graph(&w);
        let lines = extract_lines(&g, 4.0).unwrap();
        let multi: Vec<_> = lines.multi_cell_lines().cloned().collect();
        assert_eq!(multi, vec![vec![7, 8, 9, 10, 11, 12]]);
        assert_eq!(lines.lines().len(), 20 - 6 + 1);
    }

    #[test]
    fn disjoint_strips() {
        let mut w = vec![1.0; 29];
        for e in 3..6 {
            w[e] = 500.0;
        }
        for e in 18..22 {
            w[e] = 800.0;
        }
        let g = path_graph(&w);
        let lines = extract_lines(&g, 4.0).unwrap();
        let multi: Vec<_> = lines.multi_cell_lines().cloned().collect();
        assert_eq!(multi.len(), 2);
        assert!(multi.iter().all(|l| l.len() >= 4));
        assert!(lines.follows_graph(&g));
    }

    #[test]
    fn stretched_grid_lines_follow_strong_direction() {
        let (nx, ny) = (5, 7);
        let g = grid_graph(nx, ny, 1.0, 1e4);
        let lines = extract_lines(&g, 4.0).unwrap();
        for line in lines.multi_cell_lines() {
            let col = line[0] % nx;
            assert!(line.iter().all(|c| c % nx == col));
        }
        assert_eq!(lines.multi_cell_membership(), nx * ny);
    }

    #[test]
    fn threshold_must_exceed_one() {
        let g = path_graph(&[1.0]);
        assert!(extract_lines(&g, 1.0).is_err());
    }

    #[test]
    fn text_round_trip() {
        let set = LineSet::new(5, vec![vec![3, 1, 0], vec![2], vec![4]]).unwrap();
        let text = set.to_text();
        assert_eq!(text, "3 1 0\n2\n4\n");
        assert_eq!(LineSet::from_text(5, &text).unwrap(), set);
        assert!(LineSet::from_text(5, "0 1\n2 3\n").is_err());
    }

    #[test]
    fn line_set_must_partition() {
        assert!(LineSet::new(3, vec![vec![0, 1], vec![1, 2]]).is_err());
        assert!(LineSet::new(3, vec![vec![0, 1]]).is_err());
        assert!(LineSet::new(3, vec![vec![0, 1], vec![], vec![2]]).is_err());
    }

    #[test]
    fn anisotropy_of_sparse_cells() {
        let g = CouplingGraph::new(3, vec![(0, 1, 2.0), (1, 2, 0.0)]).unwrap();
        assert_eq!(g.anisotropy(0), 1.0);
        assert_eq!(g.anisotropy(1), f64::INFINITY);
        assert!(CouplingGraph::new(2, vec![(0, 1, f64::NAN)]).is_err());
    }
}

//! Hidden weighted graphs over random points on the unit sphere.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};

use crate::error::{Error, Result};

/// Minimum separation below which a new point counts as a duplicate.
const MIN_SEPARATION: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeMode {
    /// Each node links to its `k` nearest neighbours.
    Knn,
    /// `n · k` distinct directed edges between uniformly chosen node pairs.
    Random,
}

/// Node positions plus directed edges weighted by Euclidean distance.
#[derive(Clone, Debug, PartialEq)]
pub struct PathGraph {
    pub positions: Vec<[f64; 3]>,
    /// Outgoing `(target, weight)` lists sorted by target id.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl PathGraph {
    /// Builds a graph from explicit positions and edges; weights are the
    /// Euclidean distances between endpoints.
    pub fn from_edges(positions: Vec<[f64; 3]>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = positions.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::contract("PathGraph::from_edges", format!("bad edge {u} -> {v}")));
            }
            adjacency[u].push((v, distance(&positions[u], &positions[v])));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(v, _)| v);
            list.dedup_by_key(|&mut (v, _)| v);
        }
        Ok(PathGraph { positions, adjacency })
    }

    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().map(move |&(v, w)| (u, v, w)))
    }

    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(t, _)| t).ok().map(|i| list[i].1)
    }

    /// Total weight of `path`, or `None` if an id is unknown or a hop is
    /// not an edge.
    pub fn path_cost(&self, path: &[usize]) -> Option<f64> {
        if path.iter().any(|&v| v >= self.num_nodes()) {
            return None;
        }
        path.windows(2).map(|w| self.edge_weight(w[0], w[1])).sum()
    }

    /// Single-source shortest paths.
    pub fn dijkstra(&self, source: usize) -> ShortestPaths {
        let n = self.num_nodes();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: source });
        while let Some(HeapItem { dist: d, node: u }) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for &(v, w) in &self.adjacency[u] {
                let nd = d + w;
                if nd < dist[v] {
                    dist[v] = nd;
                    pred[v] = Some(u);
                    heap.push(HeapItem { dist: nd, node: v });
                }
            }
        }
        ShortestPaths { source, dist, pred }
    }
}

#[derive(Clone, Debug)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pred: Vec<Option<usize>>,
}

impl ShortestPaths {
    /// Node sequence from the source to `target`, both included.
    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut path = vec![target];
        let mut v = target;
        while let Some(u) = self.pred[v] {
            path.push(u);
            v = u;
        }
        path.reverse();
        Some(path)
    }
}

#[derive(PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // Min-heap on distance, then on node id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn sphere_points<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<[f64; 3]> {
    let mut pts: Vec<[f64; 3]> = Vec::with_capacity(n);
    while pts.len() < n {
        let p: [f64; 3] = UnitSphere.sample(rng);
        if pts.iter().all(|q| distance(&p, q) > MIN_SEPARATION) {
            pts.push(p);
        }
    }
    pts
}

/// `n_nodes` uniform points on the unit sphere joined by `mode` edges.
pub fn generate_world(n_nodes: usize, k: usize, seed: u64, mode: EdgeMode) -> Result<PathGraph> {
    if k == 0 || n_nodes <= k {
        return Err(Error::contract(
            "generate_world",
            format!("need n_nodes > k >= 1, got n_nodes {n_nodes}, k {k}"),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sphere_points(n_nodes, &mut rng);
    let mut edges = Vec::with_capacity(n_nodes * k);
    match mode {
        EdgeMode::Knn => {
            for u in 0..n_nodes {
                let mut others: Vec<(f64, usize)> = (0..n_nodes)
                    .filter(|&v| v != u)
                    .map(|v| (distance(&positions[u], &positions[v]), v))
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                edges.extend(others[..k].iter().map(|&(_, v)| (u, v)));
            }
        }
        EdgeMode::Random => {
            let mut seen = std::collections::HashSet::new();
            while edges.len() < n_nodes * k {
                let u = rng.random_range(0..n_nodes);
                let v = rng.random_range(0..n_nodes);
                if u != v && seen.insert((u, v)) {
                    edges.push((u, v));
                }
            }
        }
    }
    PathGraph::from_edges(positions, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_nodes_three_neighbours_is_complete() {
        let g = generate_world(4, 3, 7, EdgeMode::Knn).unwrap();
        assert_eq!(g.num_edges(), 12);
        for u in 0..4 {
            for v in 0..4 {
                assert_eq!(g.edge_weight(u, v).is_some(), u != v);
            }
        }
    }

    #[test]
    fn positions_unit_and_weights_symmetric() {
        let g = generate_world(60, 6, 3, EdgeMode::Knn).unwrap();
        for p in &g.positions {
            assert!((distance(p, &[0.0; 3]) - 1.0).abs() < 1e-12);
        }
        for (u, v, w) in g.edges() {
            assert_eq!(w, distance(&g.positions[u], &g.positions[v]));
            if let Some(back) = g.edge_weight(v, u) {
                assert_eq!(back, w);
            }
        }
        assert!(g.adjacency.iter().all(|l| l.len() == 6));
    }

    #[test]
    fn random_mode_edge_count() {
        let g = generate_world(30, 4, 1, EdgeMode::Random).unwrap();
        assert_eq!(g.num_edges(), 120);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(generate_world(3, 3, 0, EdgeMode::Knn).is_err());
        assert!(generate_world(3, 0, 0, EdgeMode::Knn).is_err());
    }

    #[test]
    fn dijkstra_matches_floyd_warshall() {
        let g = generate_world(40, 3, 11, EdgeMode::Knn).unwrap();
        let n = g.num_nodes();
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for (u, v, w) in g.edges() {
            d[u][v] = w;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        for (s, row) in d.iter().enumerate() {
            let sp = g.dijkstra(s);
            for (t, &want) in row.iter().enumerate() {
                if want.is_finite() {
                    assert!((sp.dist[t] - want).abs() < 1e-12);
                    let p = sp.path_to(t).unwrap();
                    assert_eq!((p[0], *p.last().unwrap()), (s, t));
                    assert!((g.path_cost(&p).unwrap() - want).abs() < 1e-12);
                } else {
                    assert!(sp.path_to(t).is_none());
                }
            }
        }
    }

    #[test]
    fn path_cost_rejects_non_edges_and_unknown_ids() {
        let g = PathGraph::from_edges(vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], &[(0, 1), (1, 2)])
            .unwrap();
        assert!((g.path_cost(&[0, 1, 2]).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(g.path_cost(&[0, 2]).is_none());
        assert!(g.path_cost(&[0, 7]).is_none());
    }
}

//! Shortest-path instances with the sub-path/super-path exclusion rule,
//! the unweighted breadth-first baseline and path scoring.

use std::collections::{HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::world::PathGraph;
use crate::error::{Error, Result};
use crate::kgdata::shuffle;

/// Cost tolerance for counting a prediction as optimal.
pub const COST_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    pub start: usize,
    pub end: usize,
    /// Gold node sequence from `start` to `end` inclusive.
    pub path: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSizes {
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl DatasetSizes {
    pub fn total(&self) -> usize {
        self.train + self.valid + self.test
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathSplits {
    pub train: Vec<Instance>,
    pub valid: Vec<Instance>,
    pub test: Vec<Instance>,
}

impl PathSplits {
    pub fn split(&self, name: &str) -> Option<&[Instance]> {
        match name {
            "train" => Some(&self.train),
            "valid" => Some(&self.valid),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &Instance> {
        self.train.iter().chain(&self.valid).chain(&self.test)
    }
}

/// Every ordered pair `(s, e)` with `s ≠ e`, in the seeded order that
/// [`build_dataset`] visits them.
pub fn pair_order(n_nodes: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = (0..n_nodes)
        .flat_map(|s| (0..n_nodes).filter(move |&e| e != s).map(move |e| (s, e)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut pairs, &mut rng);
    pairs
}

fn windows_of(path: &[usize]) -> impl Iterator<Item = &[usize]> {
    (2..=path.len()).flat_map(move |len| path.windows(len))
}

/// Accepted set under the rule that no path is a contiguous sub-path of
/// another.
#[derive(Debug, Default)]
pub struct SubPathFilter {
    accepted: HashSet<Vec<usize>>,
    covered: HashSet<Vec<usize>>,
}

impl SubPathFilter {
    /// Accepts `path` unless it is a sub-path or super-path of an
    /// accepted one.
    pub fn try_accept(&mut self, path: &[usize]) -> bool {
        if self.covered.contains(path) || windows_of(path).any(|w| self.accepted.contains(w)) {
            return false;
        }
        for w in windows_of(path) {
            self.covered.insert(w.to_vec());
        }
        self.accepted.insert(path.to_vec());
        true
    }
}

/// Visits pairs in [`pair_order`], keeps reachable ones whose shortest path
/// is neither a contiguous sub-path nor a super-path of an already kept
/// path, and fills train, valid and test in that order.
pub fn build_dataset(graph: &PathGraph, sizes: DatasetSizes, seed: u64) -> Result<PathSplits> {
    let n = graph.num_nodes();
    let trees: Vec<_> = (0..n).into_par_iter().map(|s| graph.dijkstra(s)).collect();
    let target = sizes.total();
    let mut accepted: Vec<Instance> = Vec::with_capacity(target);
    let mut filter = SubPathFilter::default();
    for (s, e) in pair_order(n, seed) {
        if accepted.len() == target {
            break;
        }
        let Some(path) = trees[s].path_to(e) else {
            continue;
        };
        if filter.try_accept(&path) {
            accepted.push(Instance { start: s, end: e, path });
        }
    }
    if accepted.len() < target {
        return Err(Error::Exhausted(format!(
            "found {} of {} instances ({} train, {} valid, {} test requested)",
            accepted.len(),
            target,
            sizes.train,
            sizes.valid,
            sizes.test
        )));
    }
    let test = accepted.split_off(sizes.train + sizes.valid);
    let valid = accepted.split_off(sizes.train);
    Ok(PathSplits {
        train: accepted,
        valid,
        test,
    })
}

/// Accepts every available instance in [`pair_order`] and splits them
/// 2 : 1 : 1 into train, valid and test.
pub fn build_dataset_all(graph: &PathGraph, seed: u64) -> Result<PathSplits> {
    let n = graph.num_nodes();
    let trees: Vec<_> = (0..n).into_par_iter().map(|s| graph.dijkstra(s)).collect();
    let mut filter = SubPathFilter::default();
    let mut accepted = Vec::new();
    for (s, e) in pair_order(n, seed) {
        if let Some(path) = trees[s].path_to(e) {
            if filter.try_accept(&path) {
                accepted.push(Instance { start: s, end: e, path });
            }
        }
    }
    if accepted.is_empty() {
        return Err(Error::Exhausted("graph supplies no instances".into()));
    }
    let total = accepted.len();
    let n_test = total / 4;
    let n_valid = total / 4;
    let test = accepted.split_off(total - n_test);
    let valid = accepted.split_off(total - n_test - n_valid);
    Ok(PathSplits {
        train: accepted,
        valid,
        test,
    })
}

/// Hop-minimal paths over the edges seen in `train`, ignoring weights.
/// Unreachable queries get an empty prediction.
pub fn dp_baseline(n_nodes: usize, train: &[Instance], queries: &[Instance]) -> Vec<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
    for inst in train {
        for w in inst.path.windows(2) {
            adj[w[0]].push(w[1]);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    queries
        .iter()
        .map(|q| bfs(&adj, q.start, q.end).unwrap_or_default())
        .collect()
}

fn bfs(adj: &[Vec<usize>], s: usize, e: usize) -> Option<Vec<usize>> {
    if s >= adj.len() || e >= adj.len() {
        return None;
    }
    let mut pred = vec![usize::MAX; adj.len()];
    pred[s] = s;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        if u == e {
            let mut path = vec![e];
            let mut v = e;
            while v != s {
                v = pred[v];
                path.push(v);
            }
            path.reverse();
            return Some(path);
        }
        for &v in &adj[u] {
            if pred[v] == usize::MAX {
                pred[v] = u;
                queue.push_back(v);
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub valid: bool,
    pub correct: bool,
}

/// Valid: starts at `start`, ends at `end` and every hop is an edge.
/// Correct: valid with cost equal to the optimum.
pub fn judge(graph: &PathGraph, inst: &Instance, optimum: f64, pred: &[usize]) -> Verdict {
    let endpoints = pred.first() == Some(&inst.start) && pred.last() == Some(&inst.end) && pred.len() >= 2;
    match graph.path_cost(pred) {
        Some(c) if endpoints => Verdict {
            valid: true,
            correct: (c - optimum).abs() <= COST_TOLERANCE,
        },
        _ => Verdict {
            valid: false,
            correct: false,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathEval {
    pub instances: usize,
    pub valid: usize,
    pub correct: usize,
    pub valid_rate: f64,
    pub correct_rate: f64,
}

/// Scores `predictions[i]` against `instances[i]` using the hidden graph.
pub fn evaluate_paths(graph: &PathGraph, instances: &[Instance], predictions: &[Vec<usize>]) -> Result<PathEval> {
    if instances.len() != predictions.len() {
        return Err(Error::contract(
            "evaluate_paths",
            format!("{} instances but {} predictions", instances.len(), predictions.len()),
        ));
    }
    if instances.is_empty() {
        return Err(Error::Empty("path instances".into()));
    }
    let verdicts: Vec<Verdict> = instances
        .par_iter()
        .zip(predictions)
        .map(|(inst, pred)| {
            let optimum = graph.path_cost(&inst.path).unwrap_or(f64::NAN);
            judge(graph, inst, optimum, pred)
        })
        .collect();
    let valid = verdicts.iter().filter(|v| v.valid).count();
    let correct = verdicts.iter().filter(|v| v.correct).count();
    let n = instances.len();
    Ok(PathEval {
        instances: n,
        valid,
        correct,
        valid_rate: valid as f64 / n as f64,
        correct_rate: correct as f64 / n as f64,
    })
}

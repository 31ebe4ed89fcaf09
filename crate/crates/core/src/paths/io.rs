//! Text files for worlds and splits.
//!
//! A world directory holds three tab-separated tables, each with a `#`
//! header line:
//!
//! * `nodes.tsv`: `id x y z`
//! * `edges.tsv`: `u v weight`
//! * `instances.tsv`: `split start end path` where `path` is
//!   space-separated node ids
//!
//! Floats are written in shortest round-trip form, so reading a world back
//! reproduces it exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::{Instance, PathSplits};
use super::world::PathGraph;
use crate::error::{Error, Result};

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const INSTANCES_FILE: &str = "instances.tsv";

pub fn write_world(dir: impl AsRef<Path>, graph: &PathGraph, splits: &PathSplits) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut nodes = String::from("# id\tx\ty\tz\n");
    for (i, p) in graph.positions.iter().enumerate() {
        let _ = writeln!(nodes, "{i}\t{}\t{}\t{}", p[0], p[1], p[2]);
    }
    let mut edges = String::from("# u\tv\tweight\n");
    for (u, v, w) in graph.edges() {
        let _ = writeln!(edges, "{u}\t{v}\t{w}");
    }
    let mut inst = String::from("# split\tstart\tend\tpath\n");
    for (name, list) in [("train", &splits.train), ("valid", &splits.valid), ("test", &splits.test)] {
        for i in list {
            let path: Vec<String> = i.path.iter().map(usize::to_string).collect();
            let _ = writeln!(inst, "{name}\t{}\t{}\t{}", i.start, i.end, path.join(" "));
        }
    }
    for (file, text) in [(NODES_FILE, nodes), (EDGES_FILE, edges), (INSTANCES_FILE, inst)] {
        let p = dir.join(file);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

struct Table {
    path: PathBuf,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(path: PathBuf, columns: usize) -> Result<Table> {
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split('\t').map(str::to_owned).collect();
        if fields.len() != columns {
            return Err(Error::Parse {
                path,
                line: i + 1,
                msg: format!("expected {columns} fields, found {}", fields.len()),
            });
        }
        rows.push((i + 1, fields));
    }
    Ok(Table { path, rows })
}

impl Table {
    fn parse<T: std::str::FromStr>(&self, line: usize, field: &str) -> Result<T> {
        field.trim().parse().map_err(|_| Error::Parse {
            path: self.path.clone(),
            line,
            msg: format!("cannot parse `{field}`"),
        })
    }
}

pub fn read_world(dir: impl AsRef<Path>) -> Result<(PathGraph, PathSplits)> {
    let dir = dir.as_ref();
    let nodes = read_table(dir.join(NODES_FILE), 4)?;
    let mut positions = Vec::with_capacity(nodes.rows.len());
    for (line, f) in &nodes.rows {
        let id: usize = nodes.parse(*line, &f[0])?;
        if id != positions.len() {
            return Err(Error::Parse {
                path: nodes.path.clone(),
                line: *line,
                msg: format!("node ids must be consecutive from 0, found {id}"),
            });
        }
        positions.push([
            nodes.parse(*line, &f[1])?,
            nodes.parse(*line, &f[2])?,
            nodes.parse(*line, &f[3])?,
        ]);
    }
    if positions.is_empty() {
        return Err(Error::Empty(format!("node table {}", nodes.path.display())));
    }
    let n = positions.len();

    let edges = read_table(dir.join(EDGES_FILE), 3)?;
    let mut list = Vec::with_capacity(edges.rows.len());
    let mut weights = Vec::with_capacity(edges.rows.len());
    for (line, f) in &edges.rows {
        let u: usize = edges.parse(*line, &f[0])?;
        let v: usize = edges.parse(*line, &f[1])?;
        if u >= n || v >= n || u == v {
            return Err(Error::Parse {
                path: edges.path.clone(),
                line: *line,
                msg: format!("bad edge {u} -> {v}"),
            });
        }
        list.push((u, v));
        weights.push((*line, edges.parse::<f64>(*line, &f[2])?));
    }
    let graph = PathGraph::from_edges(positions, &list)?;
    for (&(u, v), &(line, w)) in list.iter().zip(&weights) {
        if graph.edge_weight(u, v) != Some(w) {
            return Err(Error::Parse {
                path: edges.path.clone(),
                line,
                msg: format!("weight {w} does not match node positions"),
            });
        }
    }

    let inst = read_table(dir.join(INSTANCES_FILE), 4)?;
    let mut splits = PathSplits::default();
    for (line, f) in &inst.rows {
        let path = f[3]
            .split_whitespace()
            .map(|t| inst.parse::<usize>(*line, t))
            .collect::<Result<Vec<_>>>()?;
        let i = Instance {
            start: inst.parse(*line, &f[1])?,
            end: inst.parse(*line, &f[2])?,
            path,
        };
        if i.path.first() != Some(&i.start) || i.path.last() != Some(&i.end) || i.path.iter().any(|&v| v >= n) {
            return Err(Error::Parse {
                path: inst.path.clone(),
                line: *line,
                msg: "path does not join start to end over known nodes".into(),
            });
        }
        match f[0].as_str() {
            "train" => splits.train.push(i),
            "valid" => splits.valid.push(i),
            "test" => splits.test.push(i),
            other => {
                return Err(Error::Parse {
                    path: inst.path.clone(),
                    line: *line,
                    msg: format!("unknown split `{other}`"),
                })
            }
        }
    }
    Ok((graph, splits))
}

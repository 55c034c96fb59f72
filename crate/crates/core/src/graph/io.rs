//! JSON-Lines graph files.
//!
//! One graph per line: `{"n": 3, "nodes": [[1.0], ...], "edges": [[0, 1, 0], ...], "class": 0}`.
//! Undirected edges are listed once with `i < j`; the third entry is the
//! edge channel. An optional first line `{"meta": {...}}` carries file
//! metadata (generation settings, `"kind": "molecule"`, `"edge_dim"`).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::molecule;
use crate::graph::Graph;

/// How undirected edges appear in a record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EdgeListing {
    /// Each edge once with `i < j` (the written format).
    #[default]
    UpperTriangle,
    /// Both `(i, j)` and `(j, i)` listed; a missing mirror is a validation error.
    BothDirections,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphRecord {
    pub graph: Graph,
    pub class: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GraphFile {
    pub meta: Option<Map<String, Value>>,
    pub records: Vec<GraphRecord>,
}

impl GraphFile {
    pub fn is_molecular(&self) -> bool {
        self.meta
            .as_ref()
            .and_then(|m| m.get("kind"))
            .and_then(Value::as_str)
            == Some("molecule")
    }

    pub fn graphs(&self) -> Vec<Graph> {
        self.records.iter().map(|r| r.graph.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    n: usize,
    nodes: Vec<Vec<f64>>,
    edges: Vec<(usize, usize, usize)>,
    #[serde(default)]
    class: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeta {
    meta: Map<String, Value>,
}

pub fn read_graphs<R: BufRead>(reader: R, listing: EdgeListing) -> Result<GraphFile> {
    let mut meta = None;
    let mut raws = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if idx == 0 {
            if let Ok(m) = serde_json::from_str::<RawMeta>(&line) {
                meta = Some(m.meta);
                continue;
            }
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        raws.push((lineno, raw));
    }
    let molecular = meta
        .as_ref()
        .and_then(|m| m.get("kind"))
        .and_then(Value::as_str)
        == Some("molecule");
    let declared_f = meta
        .as_ref()
        .and_then(|m| m.get("edge_dim"))
        .and_then(Value::as_u64)
        .map(|v| v as usize);
    let f = if molecular {
        molecule::BOND_CHANNELS
    } else {
        let seen = raws
            .iter()
            .flat_map(|(_, r)| r.edges.iter().map(|e| e.2 + 1))
            .max()
            .unwrap_or(1);
        declared_f.unwrap_or(seen).max(seen)
    };

    let mut records = Vec::with_capacity(raws.len());
    let mut node_dim = None;
    for (lineno, raw) in raws {
        let graph = record_to_graph(&raw, f, listing, molecular).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        match node_dim {
            None => node_dim = Some(graph.node_dim()),
            Some(d) if d != graph.node_dim() => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("node feature width {} differs from {d}", graph.node_dim()),
                })
            }
            _ => {}
        }
        records.push(GraphRecord {
            graph,
            class: raw.class,
        });
    }
    Ok(GraphFile { meta, records })
}

fn record_to_graph(raw: &RawRecord, f: usize, listing: EdgeListing, molecular: bool) -> Result<Graph> {
    let n = raw.n;
    if raw.nodes.len() != n {
        return Err(Error::InvalidGraph(format!("n = {n} but {} node rows", raw.nodes.len())));
    }
    let d = raw.nodes.first().map_or(0, Vec::len);
    if raw.nodes.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidGraph("ragged node feature rows".into()));
    }
    if molecular && d != molecule::ATOM_TYPES.len() {
        return Err(Error::InvalidGraph(format!(
            "molecular nodes need {} atom-type columns, got {d}",
            molecule::ATOM_TYPES.len()
        )));
    }
    let mut e = vec![0.0; n * n * f];
    for &(i, j, c) in &raw.edges {
        if i >= n || j >= n || c >= f {
            return Err(Error::InvalidGraph(format!("edge ({i},{j},{c}) out of range")));
        }
        if i == j {
            return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
        }
        match listing {
            EdgeListing::UpperTriangle => {
                if i > j {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({i},{j}) must be listed once with i < j"
                    )));
                }
                e[(i * n + j) * f + c] = 1.0;
                e[(j * n + i) * f + c] = 1.0;
            }
            EdgeListing::BothDirections => e[(i * n + j) * f + c] = 1.0,
        }
    }
    let nodes: Vec<f64> = raw.nodes.iter().flatten().copied().collect();
    let one_hot = raw.nodes.iter().all(|r| {
        r.iter().filter(|&&v| v == 1.0).count() == 1 && r.iter().all(|&v| v == 0.0 || v == 1.0)
    });
    if molecular && !one_hot {
        return Err(Error::InvalidGraph("molecular nodes must be one-hot atom types".into()));
    }
    Graph::new(n, d, f, nodes, e, true, one_hot)
}

pub fn load_graph_file(path: impl AsRef<Path>) -> Result<Vec<(Graph, usize)>> {
    Ok(read_graph_file(path, EdgeListing::UpperTriangle)?
        .records
        .into_iter()
        .map(|r| (r.graph, r.class))
        .collect())
}

pub fn read_graph_file(path: impl AsRef<Path>, listing: EdgeListing) -> Result<GraphFile> {
    let file = std::fs::File::open(path)?;
    read_graphs(BufReader::new(file), listing)
}

/// Serialise one record (no trailing newline).
pub fn record_line(g: &Graph, class: usize) -> Result<String> {
    let n = g.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for (c, &v) in g.edge(i, j).iter().enumerate() {
                if v != 0.0 {
                    edges.push((i, j, c));
                }
            }
        }
    }
    let raw = RawRecord {
        n,
        nodes: (0..n).map(|i| g.node_row(i).to_vec()).collect(),
        edges,
        class,
    };
    Ok(serde_json::to_string(&raw)?)
}

pub fn write_graphs<W: Write>(
    mut w: W,
    meta: Option<&Map<String, Value>>,
    graphs: &[(Graph, usize)],
) -> Result<()> {
    if let Some(m) = meta {
        let line = serde_json::to_string(&RawMeta { meta: m.clone() })?;
        writeln!(w, "{line}")?;
    }
    for (g, c) in graphs {
        writeln!(w, "{}", record_line(g, *c)?)?;
    }
    Ok(())
}

pub fn save_graph_file(
    path: impl AsRef<Path>,
    meta: Option<&Map<String, Value>>,
    graphs: &[(Graph, usize)],
) -> Result<()> {
    let mut buf = Vec::new();
    write_graphs(&mut buf, meta, graphs)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<GraphFile> {
        read_graphs(s.as_bytes(), EdgeListing::UpperTriangle)
    }

    #[test]
    fn path_record() {
        let f = parse(r#"{"n": 3, "nodes": [[1.0],[1.0],[1.0]], "edges": [[0,1,0],[1,2,0]], "class": 0}"#)
            .unwrap();
        let g = &f.records[0].graph;
        assert_eq!(g.n(), 3);
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(1, 0));
    }

    #[test]
    fn missing_mirror_is_rejected() {
        let line = r#"{"n": 3, "nodes": [[1.0],[1.0],[1.0]], "edges": [[0,1,0],[2,1,0],[1,2,0]], "class": 0}"#;
        let err = read_graphs(line.as_bytes(), EdgeListing::BothDirections).unwrap_err();
        assert!(err.to_string().contains("asymmetric"), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");
        // upper-triangle listings may not contain i > j
        assert!(parse(line).is_err());
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "{\"n\": 1, \"nodes\": [[1.0]], \"edges\": [], \"class\": 0}\n{\"n\": 2, oops}\n";
        let err = parse(text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn meta_line_is_kept() {
        let text = "{\"meta\": {\"seed\": 3}}\n{\"n\": 1, \"nodes\": [[1.0]], \"edges\": [], \"class\": 2}\n";
        let f = parse(text).unwrap();
        assert_eq!(f.meta.unwrap()["seed"], 3);
        assert_eq!(f.records[0].class, 2);
    }

    #[test]
    fn molecule_file_uses_bond_channels() {
        let text = "{\"meta\": {\"kind\": \"molecule\"}}\n{\"n\": 2, \"nodes\": [[1,0,0,0],[0,0,1,0]], \"edges\": [[0,1,1]], \"class\": 0}\n";
        let f = parse(text).unwrap();
        assert!(f.is_molecular());
        let g = &f.records[0].graph;
        assert_eq!(g.edge_dim(), 3);
        assert_eq!(g.edge_class(0, 1), 2);
    }
}

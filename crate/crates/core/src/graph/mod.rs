//! Graph data model, datasets and canonical hashing.

mod batch;
mod community;
mod dataset;
mod hash;
mod io;
pub mod molecule;

pub use batch::{batch_and_pad, GraphBatch};
pub use community::{generate_community_small, CommunityParams};
pub use dataset::{build_community_dataset, DatasetSpec, Split};
pub use hash::{is_isomorphic, wl_canonical_hash, IsoClasses, DEFAULT_WL_ITERATIONS, EXACT_ISO_MAX_NODES};
pub use io::{load_graph_file, read_graph_file, read_graphs, record_line, save_graph_file, write_graphs, EdgeListing, GraphFile, GraphRecord};

use crate::error::{Error, Result};

/// Attributed graph: `N` nodes with `D`-dimensional features and an
/// `N×N×F` edge tensor.
///
/// An entry `(i, j)` whose `F` channels are all zero means "no edge"; a
/// nonzero channel `c` means an edge of category `c`. The decoder therefore
/// classifies each pair into `F + 1` classes with class 0 reserved for
/// absence. Node features of categorical datasets are one-hot rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    d: usize,
    f: usize,
    node_features: Vec<f64>,
    edge_attrs: Vec<f64>,
    undirected: bool,
    categorical: bool,
}

impl Graph {
    /// Validating constructor.
    pub fn new(
        n: usize,
        d: usize,
        f: usize,
        node_features: Vec<f64>,
        edge_attrs: Vec<f64>,
        undirected: bool,
        categorical: bool,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if d == 0 || f == 0 {
            return Err(Error::InvalidGraph(format!("feature widths must be positive (D={d}, F={f})")));
        }
        if node_features.len() != n * d {
            return Err(Error::InvalidGraph(format!(
                "node features: expected {} values, got {}",
                n * d,
                node_features.len()
            )));
        }
        if edge_attrs.len() != n * n * f {
            return Err(Error::InvalidGraph(format!(
                "edge attributes: expected {} values, got {}",
                n * n * f,
                edge_attrs.len()
            )));
        }
        let g = Self {
            n,
            d,
            f,
            node_features,
            edge_attrs,
            undirected,
            categorical,
        };
        g.validate()?;
        Ok(g)
    }

    /// Unattributed undirected graph: all-ones node feature, one edge channel.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut e = vec![0.0; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!("edge ({i},{j}) out of range for {n} nodes")));
            }
            e[i * n + j] = 1.0;
            e[j * n + i] = 1.0;
        }
        Self::new(n, 1, 1, vec![1.0; n], e, true, true)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, f) = (self.n, self.f);
        if !self.node_features.iter().chain(&self.edge_attrs).all(|v| v.is_finite()) {
            return Err(Error::InvalidGraph("non-finite feature".into()));
        }
        for i in 0..n {
            if self.edge(i, i).iter().any(|&v| v != 0.0) {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            if self.undirected {
                for j in (i + 1)..n {
                    if self.edge(i, j) != self.edge(j, i) {
                        return Err(Error::InvalidGraph(format!(
                            "asymmetric edge ({i},{j}) in undirected graph"
                        )));
                    }
                }
            }
        }
        if self.categorical {
            for i in 0..n {
                let row = self.node_row(i);
                let ones = row.iter().filter(|&&v| v == 1.0).count();
                let zeros = row.iter().filter(|&&v| v == 0.0).count();
                if ones != 1 || ones + zeros != self.d {
                    return Err(Error::InvalidGraph(format!("node {i} features are not one-hot")));
                }
            }
            for k in 0..n * n {
                let ch = &self.edge_attrs[k * f..(k + 1) * f];
                if ch.iter().any(|&v| v != 0.0 && v != 1.0) || ch.iter().filter(|&&v| v == 1.0).count() > 1 {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({},{}) channels are not one-hot",
                        k / n,
                        k % n
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_dim(&self) -> usize {
        self.d
    }

    pub fn edge_dim(&self) -> usize {
        self.f
    }

    /// Number of edge classes including "absent".
    pub fn edge_classes(&self) -> usize {
        self.f + 1
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    pub fn is_categorical(&self) -> bool {
        self.categorical
    }

    pub fn node_features(&self) -> &[f64] {
        &self.node_features
    }

    pub fn edge_attrs(&self) -> &[f64] {
        &self.edge_attrs
    }

    pub fn node_row(&self, i: usize) -> &[f64] {
        &self.node_features[i * self.d..(i + 1) * self.d]
    }

    pub fn edge(&self, i: usize, j: usize) -> &[f64] {
        let k = (i * self.n + j) * self.f;
        &self.edge_attrs[k..k + self.f]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edge(i, j).iter().any(|&v| v != 0.0)
    }

    /// 0 for no edge, otherwise `1 + argmax channel`.
    pub fn edge_class(&self, i: usize, j: usize) -> usize {
        let e = self.edge(i, j);
        if e.iter().all(|&v| v == 0.0) {
            0
        } else {
            1 + argmax(e)
        }
    }

    /// Index of the largest node feature.
    pub fn node_class(&self, i: usize) -> usize {
        argmax(self.node_row(i))
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| j != i && (self.has_edge(i, j) || self.has_edge(j, i)))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Simple undirected adjacency (row-major `N×N` booleans).
    pub fn adjacency(&self) -> Vec<bool> {
        let n = self.n;
        let mut a = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && (self.has_edge(i, j) || self.has_edge(j, i)) {
                    a[i * n + j] = true;
                }
            }
        }
        a
    }

    /// Undirected edges `(i, j, class)` with `i < j`.
    pub fn edge_list(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let c = self.edge_class(i, j);
                if c > 0 {
                    out.push((i, j, c));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.edge_list().len()
    }

    /// Relabel nodes so that old node `i` becomes node `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n;
        check_permutation(perm, n)?;
        let (d, f) = (self.d, self.f);
        let mut nodes = vec![0.0; n * d];
        let mut edges = vec![0.0; n * n * f];
        for i in 0..n {
            nodes[perm[i] * d..(perm[i] + 1) * d].copy_from_slice(self.node_row(i));
            for j in 0..n {
                let k = (perm[i] * n + perm[j]) * f;
                edges[k..k + f].copy_from_slice(self.edge(i, j));
            }
        }
        Ok(Self {
            node_features: nodes,
            edge_attrs: edges,
            ..self.clone()
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::InvalidArgument(format!("permutation of length {} for {n} nodes", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument("not a permutation".into()));
        }
        seen[p] = true;
    }
    Ok(())
}

/// First index of the maximum; ties go to the lowest index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

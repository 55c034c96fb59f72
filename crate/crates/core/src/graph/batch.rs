use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::schedule::{build_scale_schedule, ScaleSchedule};

/// Graphs zero-padded to a common node count.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub n_max: usize,
    pub node_dim: usize,
    pub edge_dim: usize,
    /// Per graph, `n_max × D`.
    pub node_features: Vec<Vec<f64>>,
    /// Per graph, `n_max × n_max × F`.
    pub edge_attrs: Vec<Vec<f64>>,
    /// Per graph, `n_max` flags marking real nodes.
    pub node_mask: Vec<Vec<bool>>,
    /// Per graph, the schedule truncated to its own size.
    pub schedules: Vec<ScaleSchedule>,
    undirected: Vec<bool>,
    categorical: Vec<bool>,
}

pub const PAD_VALUE: f64 = 0.0;

pub fn batch_and_pad(graphs: &[Graph], base_set: &[usize], growth: usize) -> Result<GraphBatch> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot batch an empty list of graphs".into()))?;
    let (d, f) = (first.node_dim(), first.edge_dim());
    if graphs.iter().any(|g| g.node_dim() != d || g.edge_dim() != f) {
        return Err(Error::InvalidArgument("graphs in a batch must share feature widths".into()));
    }
    let n_max = graphs.iter().map(Graph::n).max().expect("non-empty");
    let mut batch = GraphBatch {
        n_max,
        node_dim: d,
        edge_dim: f,
        node_features: Vec::with_capacity(graphs.len()),
        edge_attrs: Vec::with_capacity(graphs.len()),
        node_mask: Vec::with_capacity(graphs.len()),
        schedules: Vec::with_capacity(graphs.len()),
        undirected: Vec::with_capacity(graphs.len()),
        categorical: Vec::with_capacity(graphs.len()),
    };
    for g in graphs {
        let n = g.n();
        let mut nodes = vec![PAD_VALUE; n_max * d];
        nodes[..n * d].copy_from_slice(g.node_features());
        let mut edges = vec![PAD_VALUE; n_max * n_max * f];
        for i in 0..n {
            for j in 0..n {
                let k = (i * n_max + j) * f;
                edges[k..k + f].copy_from_slice(g.edge(i, j));
            }
        }
        batch.node_features.push(nodes);
        batch.edge_attrs.push(edges);
        batch.node_mask.push((0..n_max).map(|i| i < n).collect());
        batch.schedules.push(build_scale_schedule(n, base_set, growth)?);
        batch.undirected.push(g.is_undirected());
        batch.categorical.push(g.is_categorical());
    }
    Ok(batch)
}

impl GraphBatch {
    pub fn len(&self) -> usize {
        self.node_mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_mask.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.node_mask.iter().map(|m| m.iter().filter(|&&b| b).count()).collect()
    }

    /// Drop padding and rebuild the original graphs.
    pub fn unpad(&self) -> Result<Vec<Graph>> {
        let (d, f, m) = (self.node_dim, self.edge_dim, self.n_max);
        self.sizes()
            .into_iter()
            .enumerate()
            .map(|(b, n)| {
                let nodes = self.node_features[b][..n * d].to_vec();
                let mut edges = Vec::with_capacity(n * n * f);
                for i in 0..n {
                    for j in 0..n {
                        let k = (i * m + j) * f;
                        edges.extend_from_slice(&self.edge_attrs[b][k..k + f]);
                    }
                }
                Graph::new(n, d, f, nodes, edges, self.undirected[b], self.categorical[b])
            })
            .collect()
    }
}

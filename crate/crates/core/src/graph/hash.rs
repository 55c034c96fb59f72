//! Weisfeiler-Leman colour-refinement hashing with an exact isomorphism
//! fallback for small graphs.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::graph::Graph;

pub const DEFAULT_WL_ITERATIONS: usize = 3;
/// Hash collisions between graphs up to this size are settled by an exact
/// isomorphism search.
pub const EXACT_ISO_MAX_NODES: usize = 12;

fn digest64(bytes: &[u8]) -> u64 {
    let d = Sha256::digest(bytes);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn initial_colors(g: &Graph) -> Vec<u64> {
    (0..g.n())
        .map(|i| {
            let mut buf = Vec::with_capacity(8 * g.node_dim());
            for v in g.node_row(i) {
                buf.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            digest64(&buf)
        })
        .collect()
}

/// Colours after each refinement round; entry 0 is the initial colouring.
fn refine(g: &Graph, iterations: usize) -> Vec<Vec<u64>> {
    let n = g.n();
    let mut rounds = vec![initial_colors(g)];
    for _ in 0..iterations {
        let prev = rounds.last().expect("initial round");
        let next = (0..n)
            .map(|i| {
                let mut sig: Vec<(usize, usize, u64)> = (0..n)
                    .filter(|&j| j != i)
                    .filter_map(|j| {
                        let out = g.edge_class(i, j);
                        let inc = g.edge_class(j, i);
                        (out > 0 || inc > 0).then_some((out, inc, prev[j]))
                    })
                    .collect();
                sig.sort_unstable();
                let mut buf = prev[i].to_le_bytes().to_vec();
                for (a, b, c) in sig {
                    buf.extend_from_slice(&(a as u64).to_le_bytes());
                    buf.extend_from_slice(&(b as u64).to_le_bytes());
                    buf.extend_from_slice(&c.to_le_bytes());
                }
                digest64(&buf)
            })
            .collect();
        rounds.push(next);
    }
    rounds
}

/// Hex digest of the per-round colour histograms. Isomorphic graphs always
/// hash equal; distinct hashes prove non-isomorphism.
pub fn wl_canonical_hash(g: &Graph, iterations: usize) -> String {
    let iterations = iterations.max(1);
    let mut h = Sha256::new();
    h.update((g.n() as u64).to_le_bytes());
    h.update((g.node_dim() as u64).to_le_bytes());
    h.update((g.edge_dim() as u64).to_le_bytes());
    for round in refine(g, iterations) {
        let mut sorted = round;
        sorted.sort_unstable();
        for c in sorted {
            h.update(c.to_le_bytes());
        }
        h.update(b"|");
    }
    hex::encode(h.finalize())
}

/// Exact isomorphism test (node features and edge classes preserved).
/// Backtracking constrained by refined colours; intended for small graphs.
pub fn is_isomorphic(a: &Graph, b: &Graph) -> bool {
    if a.n() != b.n() || a.node_dim() != b.node_dim() || a.edge_dim() != b.edge_dim() {
        return false;
    }
    let n = a.n();
    let ca = refine(a, n.max(1));
    let cb = refine(b, n.max(1));
    let (la, lb) = (ca.last().expect("round"), cb.last().expect("round"));
    let mut sa = la.clone();
    let mut sb = lb.clone();
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        return false;
    }
    // visit a's nodes rarest colour first
    let mut freq: BTreeMap<u64, usize> = BTreeMap::new();
    for &c in la {
        *freq.entry(c).or_default() += 1;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (freq[&la[i]], la[i]));
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    extend(a, b, la, lb, &order, 0, &mut map, &mut used)
}

#[allow(clippy::too_many_arguments)]
fn extend(
    a: &Graph,
    b: &Graph,
    la: &[u64],
    lb: &[u64],
    order: &[usize],
    depth: usize,
    map: &mut [usize],
    used: &mut [bool],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let u = order[depth];
    for v in 0..b.n() {
        if used[v] || la[u] != lb[v] || a.node_row(u) != b.node_row(v) {
            continue;
        }
        let consistent = order[..depth].iter().all(|&w| {
            let x = map[w];
            a.edge_class(u, w) == b.edge_class(v, x) && a.edge_class(w, u) == b.edge_class(x, v)
        });
        if !consistent {
            continue;
        }
        map[u] = v;
        used[v] = true;
        if extend(a, b, la, lb, order, depth + 1, map, used) {
            return true;
        }
        used[v] = false;
        map[u] = usize::MAX;
    }
    false
}

/// Isomorphism classes keyed by WL hash; colliding graphs with at most
/// [`EXACT_ISO_MAX_NODES`] nodes are separated by an exact check.
#[derive(Clone, Debug, Default)]
pub struct IsoClasses {
    iterations: usize,
    buckets: BTreeMap<String, Vec<(usize, Graph)>>,
    count: usize,
}

impl IsoClasses {
    pub fn new(iterations: usize) -> Self {
        Self {
            iterations: iterations.max(1),
            buckets: BTreeMap::new(),
            count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    fn find_in(&self, hash: &str, g: &Graph) -> Option<usize> {
        let bucket = self.buckets.get(hash)?;
        if g.n() > EXACT_ISO_MAX_NODES {
            return bucket.first().map(|(id, _)| *id);
        }
        bucket.iter().find(|(_, r)| is_isomorphic(g, r)).map(|(id, _)| *id)
    }

    pub fn class_of(&self, g: &Graph) -> Option<usize> {
        self.find_in(&wl_canonical_hash(g, self.iterations), g)
    }

    /// Class id of `g` and whether it was newly created.
    pub fn insert(&mut self, g: &Graph) -> (usize, bool) {
        let hash = wl_canonical_hash(g, self.iterations);
        if let Some(id) = self.find_in(&hash, g) {
            return (id, false);
        }
        let id = self.count;
        self.count += 1;
        self.buckets.entry(hash).or_default().push((id, g.clone()));
        (id, true)
    }
}

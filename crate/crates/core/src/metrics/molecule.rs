use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::molecule::{Bond, ATOM_TYPES, MAX_VALENCE};
use crate::graph::{Graph, IsoClasses, DEFAULT_WL_ITERATIONS};

/// Valid iff every atom's bond-order sum is within its valence and the
/// heavy-atom graph is connected. Hydrogens are implicit.
pub fn molecule_validity(g: &Graph) -> Result<bool> {
    if g.node_dim() != ATOM_TYPES.len() {
        return Err(Error::InvalidGraph(format!(
            "molecules need {} atom types, graph has {}",
            ATOM_TYPES.len(),
            g.node_dim()
        )));
    }
    let n = g.n();
    for i in 0..n {
        let row = g.node_row(i);
        if row.iter().filter(|&&v| v != 0.0).count() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidGraph(format!("atom {i} has no single type")));
        }
        let atom = g.node_class(i);
        let mut valence = 0;
        for j in 0..n {
            if j != i {
                if let Some(b) = Bond::from_class(g.edge_class(i, j)) {
                    valence += b.order();
                }
            }
        }
        if valence > MAX_VALENCE[atom] {
            return Ok(false);
        }
    }
    Ok(is_connected(g))
}

pub fn is_connected(g: &Graph) -> bool {
    let n = g.n();
    if n == 0 {
        return false;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Percentages in `[0, 100]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoleculeReport {
    pub validity: f64,
    pub uniqueness: f64,
    pub novelty: f64,
    pub samples: usize,
    pub valid: usize,
    /// Set when no sample was valid; uniqueness and novelty are then 0.
    pub no_valid_samples: bool,
}

/// Validity over all samples; uniqueness over valid ones; novelty as the
/// share of distinct valid samples absent from `training`.
pub fn molecule_report(samples: &[Graph], training: &[Graph]) -> Result<MoleculeReport> {
    let mut valid = Vec::new();
    for g in samples {
        if molecule_validity(g)? {
            valid.push(g);
        }
    }
    let validity = if samples.is_empty() {
        0.0
    } else {
        100.0 * valid.len() as f64 / samples.len() as f64
    };
    if valid.is_empty() {
        return Ok(MoleculeReport {
            validity,
            uniqueness: 0.0,
            novelty: 0.0,
            samples: samples.len(),
            valid: 0,
            no_valid_samples: true,
        });
    }
    let (uniqueness, novelty) = uniqueness_novelty(&valid, training);
    Ok(MoleculeReport {
        validity,
        uniqueness,
        novelty,
        samples: samples.len(),
        valid: valid.len(),
        no_valid_samples: false,
    })
}

/// `(uniqueness, novelty)` percentages of `samples` against `training`.
pub fn uniqueness_novelty(samples: &[&Graph], training: &[Graph]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let mut train = IsoClasses::new(DEFAULT_WL_ITERATIONS);
    for g in training {
        train.insert(g);
    }
    let mut seen = IsoClasses::new(DEFAULT_WL_ITERATIONS);
    let mut distinct = 0;
    let mut novel = 0;
    for g in samples {
        if seen.insert(g).1 {
            distinct += 1;
            if train.class_of(g).is_none() {
                novel += 1;
            }
        }
    }
    (
        100.0 * distinct as f64 / samples.len() as f64,
        100.0 * novel as f64 / distinct as f64,
    )
}

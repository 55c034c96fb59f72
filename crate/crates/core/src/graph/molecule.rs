//! Heavy-atom molecule vocabulary (hydrogens implicit, bonds kekulized).

use crate::error::{Error, Result};
use crate::graph::Graph;

pub const ATOM_TYPES: [&str; 4] = ["C", "N", "O", "F"];
pub const MAX_VALENCE: [u32; 4] = [4, 3, 2, 1];

/// Bond channels: single, double, triple. Absence is the all-zero entry.
pub const BOND_CHANNELS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bond {
    Single,
    Double,
    Triple,
}

impl Bond {
    pub fn order(self) -> u32 {
        match self {
            Bond::Single => 1,
            Bond::Double => 2,
            Bond::Triple => 3,
        }
    }

    pub fn channel(self) -> usize {
        self.order() as usize - 1
    }

    /// From an edge class (`1 + channel`).
    pub fn from_class(class: usize) -> Option<Self> {
        match class {
            1 => Some(Bond::Single),
            2 => Some(Bond::Double),
            3 => Some(Bond::Triple),
            _ => None,
        }
    }
}

pub fn atom_index(symbol: &str) -> Result<usize> {
    ATOM_TYPES
        .iter()
        .position(|&a| a == symbol)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown atom type {symbol}")))
}

/// Build a molecular graph from atom symbols and `(i, j, bond)` triples.
pub fn molecule(atoms: &[&str], bonds: &[(usize, usize, Bond)]) -> Result<Graph> {
    let n = atoms.len();
    let d = ATOM_TYPES.len();
    let mut nodes = vec![0.0; n * d];
    for (i, a) in atoms.iter().enumerate() {
        nodes[i * d + atom_index(a)?] = 1.0;
    }
    let f = BOND_CHANNELS;
    let mut e = vec![0.0; n * n * f];
    for &(i, j, b) in bonds {
        if i >= n || j >= n {
            return Err(Error::InvalidGraph(format!("bond ({i},{j}) out of range")));
        }
        e[(i * n + j) * f + b.channel()] = 1.0;
        e[(j * n + i) * f + b.channel()] = 1.0;
    }
    Graph::new(n, d, f, nodes, e, true, true)
}

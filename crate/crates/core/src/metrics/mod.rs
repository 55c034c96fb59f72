//! Sample-quality statistics, molecule checks and attention-cost counting.

pub mod complexity;
pub mod mmd;
pub mod modularity;
pub mod molecule;
pub mod stats;

pub use complexity::{
    count_attention_pairs, fit_scaling_exponent, node_wise_pairs_by_summation, CostCurve, CostPoint, Regime,
};
pub use mmd::{gaussian_tv_kernel, mmd_report, mmd_squared, total_variation, MmdConfig, MmdReport};
pub use modularity::{modularity, spectral_bisection, two_way_modularity};
pub use molecule::{is_connected, molecule_report, molecule_validity, uniqueness_novelty, MoleculeReport};
pub use stats::{
    clustering_histogram, clustering_stats, degree_stats, orbit_profile, orbit_stats, ORBITS, ORBIT_MAX_NODES,
};

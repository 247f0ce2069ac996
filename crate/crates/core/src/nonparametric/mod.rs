//! Nonparametric constructions on top of contextualized fits: overfitted
//! linear atoms clustered and smoothed into transmission functions, and
//! outcome densities from pseudo-sampled noise context.

mod atoms;
mod kmeans;
mod pseudo;
mod stitch;

pub use atoms::{atoms_from_model, choose_anchors, fit_atoms, fit_atoms_with, AtomSet, ATOM_HIDDEN};
pub use kmeans::{adjusted_rand_index, cluster_atoms, kmeans, Clustering, KMeansOptions};
pub use pseudo::{
    adaptive_grid, fit_pseudo, pseudo_components, pseudo_density, pseudo_names, total_variation, trapezoid, Coupling,
    Density, PseudoConfig, PseudoContext,
};
pub use stitch::{linspace, stitch_transmission, ComponentModel};

//! Long-range percolation on the hierarchical lattice.
//!
//! The crate samples bond and mixed site-bond configurations on finite blocks
//! `Λ_n`, labels their clusters, applies the renormalization maps between
//! scales, enumerates tiny blocks exactly, and estimates susceptibilities,
//! correlation lengths and scaling laws.

pub mod clusters;
pub mod error;
pub mod estimators;
pub mod json;
pub mod lattice;
pub mod oracle;
pub mod renorm;
pub mod report;
pub mod sampler;
pub mod stats;

pub use clusters::{kmax, kmax_all, label, ClusterLabeling, KmaxRecord};
pub use error::{Error, Result};
pub use estimators::{Budget, EstimateReport};
pub use lattice::{BlockId, Lattice, Params, VertexId};
pub use report::CheckReport;
pub use sampler::{edge_prob, sample_bonds, sample_mixed, sprinkle, BondConfig, ClassEdges, MixedConfig, SeedSpec, SiteSet};

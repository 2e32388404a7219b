//! Invariant Riemannian metrics on bounded planar domains with compact
//! automorphism groups.
//!
//! The pipeline averages a base metric over the Haar measure of the group,
//! blends it with the Bergman metric away from the boundary and with a
//! boundary product metric near it, and offers geometric probes (geodesics,
//! curvature, distances, metric balls, fixed points) to check the result.

// `!(x < y)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod automorphism;
pub mod bergman;
pub mod blend;
pub mod cli;
pub mod domain;
pub mod error;
pub mod geometry;
pub mod metric;
pub mod output;
pub mod quadrature;
pub mod sym2;

pub use automorphism::{Automorphism, CompactGroup, GroupStructure, HaarNode, Mobius};
pub use domain::{BoundaryCircle, DefiningForm, Disc, DomainKind, GridSpec, PlanarDomain};
pub use error::{Error, Result};
pub use metric::{MetricField, Provenance};
pub use sym2::Sym2;

use num_complex::Complex64;
use thiserror::Error;

use crate::geometry::GeodesicPath;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("point {0} lies outside the domain")]
    OutsideDomain(Complex64),

    #[error("point {0} is equidistant from boundary components {1} and {2}")]
    AmbiguousComponent(Complex64, usize, usize),

    #[error("no grid node satisfies the sampling margin {0}")]
    EmptySample(f64),

    #[error("invalid automorphism: {0}")]
    InvalidAutomorphism(String),

    #[error("invalid group: {0}")]
    InvalidGroup(String),

    #[error("numerical breakdown at {at}: {detail}")]
    NumericalBreakdown { at: Complex64, detail: String },

    #[error(
        "kernel value K(z, p) vanishes numerically (|K| = {modulus:e}, threshold {threshold:e})"
    )]
    KernelZero { modulus: f64, threshold: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("point {0} lies outside the boundary tube")]
    OutsideTube(Complex64),

    #[error("projection breakdown at {at}: condition number {condition:e}")]
    ProjectionBreakdown { at: Complex64, condition: f64 },

    #[error("geodesic left the domain after {} of the requested samples", .0.points.len())]
    PathExited(Box<GeodesicPath>),

    #[error("points {0} and {1} are not connected in the grid graph")]
    Unreachable(Complex64, Complex64),

    #[error("at least {needed} boundary points are required, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

//! Bottom-up ("reciprocal") visibility mapping for forest-occluded ground
//! regions, and greedy planning of aerial synthetic-aperture sampling
//! positions from the resulting maps.
//!
//! The pipeline is:
//!
//! 1. [`scene`] — procedural forest point clouds and ground points of
//!    interest (rectangular grids or sampled paths).
//! 2. [`projection`] — binary visibility masks: registered top-down masks
//!    per aperture pose, bottom-up masks per ground point, and an exact
//!    ray-segment oracle for verification.
//! 3. [`visibility`] — integral visibility (forward and reciprocal) and the
//!    coded visibility map, a raster of K-bit words over the aperture plane
//!    where bit k marks visibility of ground point k.
//! 4. [`sampler`] — greedy selection of aperture positions maximizing
//!    bit-averaged visibility under a uniformity constraint, plus baselines
//!    and an exhaustive oracle.
//! 5. [`route`] — visiting order for a single drone or batched assignments
//!    for a swarm.

pub mod formats;
pub mod projection;
pub mod raster;
pub mod rng;
pub mod route;
pub mod sampler;
pub mod scene;
pub mod verify;
pub mod visibility;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// An index or coordinate fell outside its valid range.
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    /// Two inputs that must agree in shape did not.
    #[error("size mismatch: {0}")]
    SizeMismatch(String),
    /// Malformed input file.
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

//! Compactly supported maps on a grid, near-identity checks, factorization
//! into single-coordinate transforms and their padded coupling realization.

pub mod factor;
pub mod grid;
pub mod map;
pub mod padded;
pub mod root;
pub mod split;
pub mod testmaps;

pub use factor::{compose_factors, SingleCoordinateFactor};
pub use grid::{BoxBounds, GridSpec};
pub use map::{pointwise_deviation, SmoothMap};
pub use padded::{approximate_single_coordinate, AnalyticPadded, PaddedConfig, PaddedReport, PaddedSingleCoordinate};
pub use root::{solve_increasing, solve_increasing_unbracketed, ROOT_TOL};
pub use split::{
    decompose_near_identity, near_identity_delta, practical_threshold, reconstruction_error, split_coordinate,
    split_last_coordinate, Factorization, FactorizationReport, LevelReport, Split,
};

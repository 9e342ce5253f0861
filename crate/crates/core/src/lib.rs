//! Deterministic probability-flow-ODE sampling laboratory.
//!
//! Simulates PF-ODE trajectories under closed-form denoising oracles
//! (empirical KDE, low-rank Gaussian, Gaussian mixture), measures their
//! geometric regularity (deviation profiles, PCA subspaces, curvature and
//! torsion), and searches sampling time schedules by dynamic programming
//! over local truncation errors.
//!
//! All numerics are generic over the scalar type via [`scalar::Scalar`]
//! (`f32` or `f64`); the `*64` aliases at the crate root pin the
//! double-precision instantiations used by the file formats and the CLI.

// validations use `!(x > y)` so NaN parameters fail closed
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod scalar;
pub mod vecmath;

pub mod schedules;

pub mod oracles;

pub mod gaussian_exact;

pub mod solvers;

pub mod geometry;

pub mod gits;

pub mod synth;

pub mod io;

pub mod experiment;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases for the main domain types.
pub type TimeGrid64 = schedules::TimeGrid<f64>;
pub type NoiseProcess64 = schedules::NoiseProcess<f64>;
pub type Dataset64 = oracles::Dataset<f64>;
pub type LowRankGaussian64 = oracles::LowRankGaussian<f64>;
pub type GaussianMixture64 = oracles::GaussianMixture<f64>;
pub type Trajectory64 = solvers::Trajectory<f64>;
pub type CostMatrix64 = gits::CostMatrix<f64>;
pub type GaussianTrajectoryModel64 = gaussian_exact::GaussianTrajectoryModel<f64>;

/// Single-precision aliases for the core math types.
pub type TimeGrid32 = schedules::TimeGrid<f32>;
pub type NoiseProcess32 = schedules::NoiseProcess<f32>;
pub type Dataset32 = oracles::Dataset<f32>;
pub type LowRankGaussian32 = oracles::LowRankGaussian<f32>;
pub type GaussianMixture32 = oracles::GaussianMixture<f32>;
pub type Trajectory32 = solvers::Trajectory<f32>;

//! Coresets for k-means when only a noisy copy of the data is observed.
//!
//! Everything is generic over the scalar type `T: Real` (`f32` or `f64`);
//! the aliases below fix `f64`, which the benchmarks use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assumptions;
pub mod coreset;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod noise;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod solver;
pub mod synthetic;

pub use coreset::{build_cn, build_cn_alpha, build_cn_alpha_with, Algorithm, CnAlphaParams, RadiusRule};
pub use error::{Error, Result};
pub use geometry::{assign, cost, kmeans_cost, CenterSet, Dataset, PointSource, PowerZ, WeightedPointSet};
pub use metrics::{CandidateCenters, QualityReport};
pub use noise::{perturb, Covariance, NoiseFamily, NoiseModel, NoiseSpec};
pub use scalar::Real;
pub use solver::{solve, Solution, SolveConfig};

pub type Dataset64 = Dataset<f64>;
pub type CenterSet64 = CenterSet<f64>;
pub type WeightedPointSet64 = WeightedPointSet<f64>;
pub type Solution64 = Solution<f64>;

pub type Dataset32 = Dataset<f32>;
pub type CenterSet32 = CenterSet<f32>;
pub type WeightedPointSet32 = WeightedPointSet<f32>;

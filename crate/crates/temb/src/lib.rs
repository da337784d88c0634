//! Nonlinear terminal embeddings of finite point sets.
//!
//! A linear random projection `Π : ℝ^N → ℝ^m` preserves pairwise distances
//! on a fixed set `X` with high probability, but says nothing about
//! distances from `X` to points it has never seen. A *terminal* embedding
//! extends the map outward: every train point keeps its image `(Πx, 0)`
//! exactly, while an arbitrary query `u` is placed by a small constrained
//! optimization so that distances from `u` to all of `X` survive into
//! dimension `m + 1`.
//!
//! The crate provides
//! - seeded Gaussian maps and distortion audits ([`jl`]),
//! - the constrained solver that places queries ([`solver`]),
//! - the four embedding strategies used for benchmarking ([`embed`]),
//! - manifold-complexity and Gaussian-width calculators ([`theory`]),
//! - dataset generation, IDX/CSV/PGM ingestion, splits ([`data`]),
//! - the classification / distortion / tube experiment harness ([`bench`]).
//!
//! All randomness flows through [`rng`], which fixes the generator and the
//! normal sampler bit-for-bit so identical seeds give identical results on
//! every platform.

pub mod bench;
pub mod data;
pub mod embed;
pub mod error;
pub mod jl;
pub mod rng;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};

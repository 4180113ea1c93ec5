//! Doubly stochastic graph shift operators.
//!
//! Build a weighted directed graph, balance its weight matrix into a doubly
//! stochastic operator with Sinkhorn-Knopp, shift and filter graph signals
//! with it, decompose it into permutations, and check the bias, variance and
//! power bounds of a shifted locally stationary random signal.

pub mod balance;
pub mod birkhoff;
pub mod bounds;
pub mod demo;
pub mod error;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod shift;

pub use balance::{sinkhorn_knopp, verify_doubly_stochastic, BalanceResult, DSOperator};
pub use birkhoff::{birkhoff_decompose, reconstruct, BirkhoffDecomposition, Permutation};
pub use error::{Error, Result};
pub use graph::{build_weight_matrix, incoming_neighborhood, validate_weights, Graph, Neighborhood, VertexGeometry};
pub use matrix::{Matrix, Storage};
pub use shift::{apply_filter, apply_shift, diffuse, matrix_norm, wss_check, FilterSpec, GraphSignal, Norm};

//! Laakso-type doubling subsets of ℓ_p and distortion lower-bound audits.
//!
//! * [`instance`] builds the recursive point set `A_k(eps)` with its leveled
//!   edges and diagonals.
//! * [`metric`] has the ℓ_p primitives and distortion of finite embeddings.
//! * [`certify`] audits an embedding with the edge-potential argument and
//!   computes the resulting certified distortion lower bound.
//! * [`lab`] produces candidate embeddings (random projection, stress
//!   minimization) and sweeps them over parameter grids.
//! * [`doubling`] estimates the doubling constant by greedy packings and
//!   checks the descendant envelope of every edge.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod doubling;
pub mod error;
pub mod instance;
pub mod lab;
pub mod metric;
pub mod report;

pub use error::{ErrorKind, LabError, Result};
pub use instance::{build_instance, Instance, Params};
pub use metric::{distortion, DistortionReport, Embedding};

//! Exact ReLU constructions for piecewise linear functions on the Kuhn
//! triangulation, and residual networks that track Euler schemes of ODE flows.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod harness;
pub mod linalg;
pub mod network;
pub mod ode;
pub mod pwl;
pub mod resnet;

pub use error::{Error, Result};
pub use grid::{KuhnGrid, SimplexRef, VertexRef};
pub use network::{complexity, AffineMap, ComplexityReport, FreeMask, NetworkParams};
pub use ode::{euler_solve, reference_solve, Partition, RhsSpec, Trajectory};
pub use pwl::{approximate_lipschitz, compile_pwl, LipschitzTarget, PwlFunction};
pub use resnet::{build_resnet, build_shared_resnet, eval_resnet, resnet_as_rhs, ResNetParams};

//! Discrepancy minimization toolkit.
//!
//! Implements SDP-guided random-walk coloring algorithms for the Beck-Fiala
//! and Komlos problems (basic, multi-scale, multi-layered, adaptive size-class),
//! classical baselines, a structured SDP feasibility solver, instance
//! generators, and a verification/analysis harness.

pub mod adaptive;
pub mod analysis;
pub mod baselines;
pub mod bf;
pub mod engine;
pub mod generators;
pub mod instance;
pub mod io;
pub mod komlos;
pub mod linalg;
pub mod multilayer;
pub mod sdp;
pub mod walk;

pub use instance::{Coloring, DiscrepancyReport, FullColoring, InstanceMatrix, MatrixKind};
pub use io::RunReport;

/// Version string embedded in run reports.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

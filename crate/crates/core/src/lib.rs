//! Streaming estimation of single-index models `Y = f(theta'X) + eps`.
//!
//! The index direction is estimated by two-slice sliced inverse regression,
//! updated recursively one observation at a time ([`sir`], [`moments`]). The
//! link function is estimated by a recursive Nadaraya-Watson smoother on the
//! projections along the evolving direction ([`nw`]). [`engine`] wires both
//! together in the canonical update order, [`cv`] selects the bandwidth
//! exponent, and [`study`] runs the Monte-Carlo experiments.

pub mod config;
pub mod cv;
pub mod engine;
pub mod error;
pub mod io;
pub mod kernel;
pub mod moments;
pub mod nw;
pub mod quadrature;
pub mod sim;
pub mod sir;
pub mod stats;
pub mod study;

pub use engine::{Engine, EngineOptions, FitSummary, Step};
pub use error::{Error, Result};
pub use kernel::{epanechnikov, BandwidthSchedule, KernelSpec};
pub use moments::{batch_moments, MomentState, SliceId, Slicer};
pub use nw::{theoretical_std, GridAccumulator, ProjectionLog};
pub use sim::{model_m, Sample, SingleIndexModel};
pub use sir::{batch_sir, direction_distance, SirState};

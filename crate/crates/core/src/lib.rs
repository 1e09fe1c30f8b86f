//! Coherent-state simulation of quantum pre-measurement.
//!
//! A qubit observable is coupled to an apparatus (a harmonic mode or a
//! spin-J). Each measurement branch moves along a classical trajectory on the
//! apparatus coherent-state manifold; decoherence is detected as the
//! separation of the branches' Husimi supports, and outcomes are produced by
//! seeded sampling over the branch masses of the ECS density. Every
//! coherent-state claim is cross-checked against exact evolution in the
//! apparatus Hilbert space ([`oracle`]).
//!
//! Per-cell, per-time and per-run work goes through [`par`], which uses rayon
//! when the `parallel` feature is enabled (default) and runs sequentially
//! otherwise. Results are bit-identical in both modes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod io;
pub mod manifold;
pub mod oracle;
pub mod outcome;
pub mod par;
pub mod precs;

pub use dynamics::{BranchLabel, BranchSpec, ModelSpec, Trajectory};
pub use error::{PrecsError, Result};
pub use manifold::{Grid, ManifoldKind, ManifoldSpec, PhasePoint, SpinMagnitude};
pub use precs::{DistributionGrid, SupportSet};

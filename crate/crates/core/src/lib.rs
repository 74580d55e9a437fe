//! Stochastic quantum trajectories of a radiatively damped two-level atom
//! observed by time-resolved balanced homodyne detection, with
//! measurement-based coherent feedback.
//!
//! The simulation advances in discrete measurement windows of length `tau`
//! (short against the lifetime `1/gamma`). Each window the atom entangles
//! weakly with the outgoing field, the detector reports a photon-number
//! difference `dn`, and the conditioned state takes a diffusion step of
//! order `sqrt(gamma tau) dn/alpha` plus drift terms of order `gamma tau`.
//! Feeding the outcome back as a coherent drive cancels the diffusion at a
//! chosen target state; the drift then decides which targets are actually
//! stable.
//!
//! Modules:
//! - [`state`]: amplitude and Bloch representations, conversions.
//! - [`config`]: run parameters and validity constraints.
//! - [`measurement`]: outcome distributions and sampling.
//! - [`statevec`]: exact conditional amplitude update (reference path).
//! - [`diffusion`]: Bloch-step fast path and decay analytics.
//! - [`feedback`]: gain/kick laws, stability analysis, delay and signal
//!   correction.
//! - [`ensemble`]: seeded trajectory runner and parallel statistics.
//! - [`analysis`]: rate fits and empirical diffusion constants.
//!
//! With the default `parallel` feature, ensembles run on rayon; disabling it
//! leaves a sequential fallback with bit-identical results.

pub mod analysis;
pub mod config;
pub mod diffusion;
pub mod ensemble;
pub mod error;
pub mod feedback;
pub mod measurement;
pub mod state;
pub mod statevec;

pub use config::{DnSampling, Mode, SimConfig};
pub use ensemble::{
    run_ensemble, run_ensemble_partial, run_ensemble_seq, run_trajectory, EnsembleStats,
    InitialState, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use feedback::FeedbackPolicy;
pub use state::{bloch_from_state, state_from_bloch, AtomState, BlochVector, Vec3};

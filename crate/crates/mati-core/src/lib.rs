//! Certified transmission-interval analysis for networked control loops.
//!
//! The crate answers one question from several independent directions: how
//! long may a control loop go between network transmissions before stability
//! guarantees are lost?
//!
//! * [`bound`] — closed-form guaranteed intervals from (L, γ, λ) gain triples,
//!   with a Riccati-clock transit oracle that reproduces them numerically.
//! * [`sdp`] — dense symmetric eigensystems and a deterministic feasibility
//!   solver for affine matrix inequalities, by smoothed spectral descent.
//! * [`lmi`] — gain certification for linear loops: the L_k growth bound, the
//!   block inequality in (P, γ), bisection for the smallest certifiable γ, and
//!   the k-grid sweep that trades L against γ to maximize the interval.
//! * [`protocol`] — scheduling protocol models (try-once-discard, round-robin,
//!   sampled-data) and their jump maps.
//! * [`sim`] — hybrid flow/jump simulation with trace export and a Lyapunov
//!   monitor for the composite function U = V + γφW².
//! * [`oracle`] — exact monodromy radius for round-robin on linear loops,
//!   empirical interval-boundary search, and protocol contraction estimation.
//! * [`cert`] — numerical verification of polynomial certificates for the
//!   shipped scalar plant, and their conversion to interval bounds.
//! * [`schema`] — JSON/CSV ingestion and export shared with the CLI.

pub mod bound;
pub mod cert;
pub mod error;
pub mod lmi;
pub mod oracle;
pub mod protocol;
pub mod schema;
pub mod sdp;
pub mod sim;

pub use error::{Error, Result};

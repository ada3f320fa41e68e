//! Set-based learning of safe state-feedback controllers for uncertain
//! discrete-time linear systems.
//!
//! The toolkit represents every closed-loop system consistent with measured
//! data, disturbance bounds, and prior model knowledge as a constrained
//! matrix zonotope, refines that prior with zonotopic set-membership
//! identification, and synthesizes λ-contractive controllers by linear
//! programming. Everything reduces to LP feasibility: no semidefinite
//! programming is involved anywhere.
//!
//! Module map:
//! - [`sets`] — zonotopes, constrained (matrix) zonotopes, polytopes,
//!   matrix intervals, and their algebra (Minkowski sums, intersections,
//!   transforms, inclusion certificates, membership and sampling).
//! - [`lp`] — the single linear-programming contract every solve goes
//!   through, backed by a pluggable solver adapter.
//! - [`data`] — plant simulation, data-matrix assembly, disturbance-sequence
//!   concatenation, numerical rank and right annihilators.
//! - [`closed_loop`] — the data-consistent family of closed-loop systems
//!   parametrized by a gain decision variable.
//! - [`sysid`] — set-membership identification and prior refinement.
//! - [`synthesis`] — contractive controller synthesis for constrained
//!   zonotope and polytope safe sets, plus empirical verification.
//! - [`harness`] — experiment configuration, Monte Carlo sweeps, and CSV
//!   emission used by the `zonosafe` CLI.

pub mod closed_loop;
pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod sets;
pub mod synthesis;
pub mod sysid;

pub use error::{Error, Result};

/// Default tolerance for equality residuals.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Default tolerance for membership decisions.
pub const MEMBERSHIP_TOL: f64 = 1e-6;

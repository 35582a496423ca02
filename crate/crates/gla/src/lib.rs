//! Greedy lattice animals on `Z^d`: geometry primitives, exact and heuristic
//! maximum-weight connected-subset solvers, site percolation machinery,
//! coarse-grained (block) renormalization, and Monte Carlo estimation of the
//! limiting constants of the model.
//!
//! The model assigns each lattice site an i.i.d. real score and asks for the
//! connected set of sites (a lattice animal) maximising the total score,
//! under one of three constraint regimes:
//!
//! * `N_n` — animals of exactly `n` sites containing the origin;
//! * `G_n` / `L_n` — animals contained in the `n`-box, free size, with the
//!   minimal size among maximisers breaking ties;
//! * `G~_n(alpha)` — animals in the `n`-box of exactly `floor(alpha * n^d)` sites.
//!
//! The `verify` module turns finite-scale checkable statements about these
//! quantities into pass/fail verdicts.

pub mod coarse;
pub mod error;
pub mod estimate;
pub mod field;
pub mod lattice;
pub mod percolation;
pub mod solver;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};

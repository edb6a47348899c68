//! Limiting spectral distributions of sample covariance matrices whose data
//! matrix is a sum of separable-covariance components.
//!
//! The model: `S = (1/n) X X*` with `X = sum_{r=1}^K A_r^{1/2} Z_r B_r^{1/2}`,
//! where the `A_r` commute among themselves, the `B_r` commute among
//! themselves, and their joint spectral laws converge to K-dimensional
//! measures H and G as `p/n -> c`. The crate
//!
//! * solves the coupled fixed-point system for the transform vectors
//!   `(h(z), g(z))` on the upper half-plane ([`solver`]),
//! * assembles the Stieltjes transform of the limit law three equivalent
//!   ways and inverts it to a density with point masses handled analytically
//!   ([`lsd`]),
//! * carries exact closed forms for proportional-to-identity and
//!   scale-multiple models as oracles ([`closedform`]),
//! * simulates finite-size ensembles with exactly commuting scalings and
//!   reproducible seeded streams ([`simulator`]),
//! * and quantifies empirical-vs-predicted agreement ([`metrics`]).
//!
//! Grid sweeps, density inversion and Monte Carlo batches data-parallelize on
//! rayon; building with `--no-default-features` swaps in a sequential
//! fallback with bitwise-identical results.

// `!(x > 0.0)` style checks are deliberate: they reject NaN along with the
// out-of-range sign, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod accum;
mod parallel;

pub mod closedform;
pub mod kernel;
pub mod lsd;
pub mod measure;
pub mod metrics;
pub mod simulator;
pub mod solver;

pub use kernel::{HalfPlanePoint, UpperVectorK, C64};
pub use measure::{DiscreteMeasureK, ModelSpec};
pub use solver::{FixedPointSolution, SolverConfig};

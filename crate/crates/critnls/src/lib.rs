//! Numerical laboratory for the energy-critical stochastic nonlinear
//! Schrödinger equation in dimensions n = 3, 4, 5, with additive or real
//! multiplicative (Stratonovich) Q-Wiener forcing.
//!
//! The crate is organized around the quantities the quantitative theory of
//! the equation consumes:
//!
//! * [`exponents`] — the critical exponent bundle and admissible pairs,
//!   kept in exact rational arithmetic;
//! * [`ground_state`] — the explicit ground state Q, the sharp Sobolev
//!   constant it attains, and the trapping function that controls gradient
//!   confinement below it;
//! * [`noise`] — the driving operator as a finite family of spatial modes,
//!   its derived constants, increment sampling, and frozen paths for
//!   refinement studies;
//! * [`solver`] — structure-preserving Strang splitting with a blow-up
//!   detector and gradient-tracking adaptive steps;
//! * [`diagnostics`] — conserved/monitored quantities and the pathwise
//!   evolution-identity residuals for energy, variance and virial;
//! * [`thresholds`] — existence-time lower bounds, blow-up smallness
//!   conditions, and the fixed-point parameter budget;
//! * [`ensemble`] — reproducible parallel Monte Carlo with Wilson score
//!   intervals;
//! * [`config`] / [`cli`] — strict JSON experiment configs and the
//!   `critnls` command-line front end.
//!
//! The `examples/` directory carries one runnable study per capability and
//! is the quickest way to see the pieces working together.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod dim;
pub mod ensemble;
pub mod error;
pub mod exponents;
pub mod grid;
pub mod ground_state;
pub mod noise;
pub mod quad;
pub mod rng;
pub mod solver;
pub mod thresholds;

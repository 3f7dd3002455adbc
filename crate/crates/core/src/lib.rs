//! Backward self-similar blow-up profiles for the radial parabolic-elliptic
//! Keller-Segel system in dimensions 3 to 9.
//!
//! The pipeline works on the reduced mass Φ(r) = (1/2r^d) ∫₀ʳ U s^{d−1} ds,
//! which turns the nonlocal profile equation into the local ODE
//! Φ'' + (d+1)/r Φ' − Φ − rΦ'/2 + 2dΦ² + 2rΦΦ' = 0.
//! Profiles are built by gluing an interior solution (a rescaled steady state)
//! to an exterior perturbation of Φ* = 1/r² at a matching radius r₀.

pub mod error;
pub mod radial;
pub mod equation;
pub mod steady;
pub mod linear_ops;
pub mod kummer;
pub mod exterior;
pub mod interior;
pub mod matching;
pub mod evolution;

pub use error::{Error, Result};
pub use steady::Dimension;

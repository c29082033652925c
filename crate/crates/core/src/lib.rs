//! Numerical laboratory for Maz'ya-type Φ-inequalities.
//!
//! The crate evaluates homogeneous kernels `K(x) = |x|^{α−d} K̃(x/|x|)` split
//! into dyadic bands, positively p-homogeneous functionals Φ with their sphere
//! cancellation integrals, dyadic cube energies with the telescoping identity,
//! and the M_p calculus, and assembles them into measurable inequality reports
//! of the form `lhs ≲ rhs` with empirical constants.
//!
//! Modules map onto the main objects:
//!
//! * [`kernel`] — kernel evaluation, dyadic bands, banded convolution with
//!   grid functions (direct and FFT-backed).
//! * [`phi`] — p-homogeneous functionals and sphere quadrature, including the
//!   cancellation residuals that decide whether the main inequality can hold.
//! * [`gridfn`] — compactly supported grid functions: norms, moments,
//!   zero-mean projection, dipole and random-bump generators.
//! * [`dyadic`] — dyadic cubes, energies `E_{Q,n}[f]`, greedy mass chains,
//!   shifted-lattice covers, and the `M_p` function family.
//! * [`verify`] — the inequality checks themselves, each returning an
//!   [`verify::InequalityReport`].
//! * [`extremize`] — derivative-free search for the largest observed ratio in
//!   the main inequality over parameterized bump families.

pub mod dyadic;
pub mod error;
pub mod extremize;
pub mod gridfn;
pub mod kernel;
pub mod phi;
pub mod verify;

pub use error::{Error, Result};

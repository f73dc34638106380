//! Quantitative wavepacket-spreading bounds for one-dimensional Jacobi matrices.
//!
//! The library builds half-line and whole-line Jacobi operators
//! `(Hu)(n) = a(n)u(n+1) + a(n-1)u(n-1) + b(n)u(n)`, computes the fundamental
//! solutions and transfer matrices at real and complex energies, and from them
//! the Hilbert–Schmidt length scales, Weyl m-functions and spectral data that
//! control time-averaged transport.  On top of that sit the dynamical bounds
//! themselves (resolvent- and propagation-route moments, upper/lower bound
//! reports, growth exponents), a complete trace-map analysis of the Fibonacci
//! Hamiltonian, and the Lanczos reduction of multidimensional lattice models
//! to half-line Jacobi form.
//!
//! Numerical conventions used throughout:
//! * sequences that can leave the f64 range are stored as `mantissa × 2^exp`
//!   pairs ([`scaled`]),
//! * trace-map band structure is resolved in compensated double-double
//!   arithmetic ([`dd`]),
//! * every randomized routine takes an explicit 64-bit seed and is
//!   deterministic across thread counts.

pub mod dd;
pub mod dynamics;
pub mod error;
pub mod fibonacci;
pub mod multidim;
pub mod norms;
pub mod operator;
pub mod rng;
pub mod scaled;
pub mod scales;
pub mod tridiag;
pub mod weyl;

pub use error::{Error, Result};
pub use operator::{JacobiOperator, OperatorSpec, Side, SolutionPair, TransferChain};
pub use scaled::Scaled;

/// Library version, embedded in output provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

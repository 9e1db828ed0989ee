//! Numerical laboratory for Schramm-Loewner evolution.
//!
//! - [`driver`]: Brownian driving functions with reproducible substreams.
//! - [`loewner`]: forward/inverse slit-map composition, reverse flows,
//!   derivative moduli, traces, and the `v` integral.
//! - [`field`]: the joint trace field `γ(t, κ)` from one shared Brownian path
//!   and its two-parameter Hölder constant.
//! - [`exponents`]: moment-exponent calculus and GRR exponent selection.
//! - [`grr`]: GRR integrals and certificates, Slobodeckij, Hölder and
//!   p-variation norms.
//! - [`verify`]: Monte Carlo and pathwise checks of moment and comparison bounds.

pub mod driver;
pub mod exponents;
pub mod field;
pub mod grr;
pub mod loewner;
pub mod quad;
pub mod rng;
pub mod stats;
pub mod verify;

pub use num_complex::Complex64;

/// Version tag written into every JSON/CSV artifact.
pub const SCHEMA_VERSION: u32 = 1;

//! Quantum Brownian motion of a harmonic oscillator coupled to a Drude-Ohmic
//! bath, computed three ways: exact Heisenberg-Langevin closed forms,
//! Born-Markov moment equations and Born-non-Markov (memory) moment equations.

// negated comparisons deliberately reject NaN inputs
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compare;
pub mod error;
pub mod exact;
pub mod greens;
pub mod markov;
pub mod nonmarkov;
pub mod ode;
pub mod oracle;
pub mod params;
pub mod quad;
pub mod specialfn;
pub mod sysbath;

pub use error::{QbmError, Result};
pub use params::{BathKind, BathSpectrum, ModelParams};

//! Simulation of a trapped-ion single-photon source driven by a
//! spontaneous Raman transition in ⁴⁰Ca⁺.
//!
//! Time is in ns and angular frequencies in rad/ns throughout the numerical
//! core. Scenario files and user-facing outputs use MHz and ns.

pub mod atom;
pub mod correlator;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod photostream;
pub mod pipeline;
pub mod scenario;
pub mod sequence;
pub mod units;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type Mat8 = nalgebra::SMatrix<C64, 8, 8>;
pub type Vec8 = nalgebra::SVector<C64, 8>;

/// The guide's chapters, compiled so that their snippets run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    pub mod dynamics {}
    #[doc = include_str!("../../../book/src/wavepackets.md")]
    pub mod wavepackets {}
    #[doc = include_str!("../../../book/src/correlations.md")]
    pub mod correlations {}
    #[doc = include_str!("../../../book/src/interference.md")]
    pub mod interference {}
}

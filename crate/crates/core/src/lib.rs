//! Dissipative preparation of dark target states.
//!
//! [`lindblad`] integrates the master equation, [`dsp`] evaluates the
//! initial-state-dependent speed limit and dissipated heat, and
//! [`optimizer`] searches population permutations for the fastest, coolest
//! preparation. [`rydberg`] builds the two-atom Bell-state model.

pub mod dsp;
pub mod lindblad;
pub mod optimizer;
pub mod qmat;
pub mod rydberg;

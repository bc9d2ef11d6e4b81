//! Ro-translational decoherence of a nanoparticle caused by the emission of
//! surface adsorbates.
//!
//! The crate evaluates the observables that follow from the desorption master
//! equation for a rigid body whose surface emits atoms with a known spectral
//! flux density `Φ(n, s, E)`:
//!
//! * [`moments`]: the 6×6 momentum diffusion tensor and the thermophoresis-like
//!   force/torque in the diffusive limit, plus closed-form cross checks;
//! * [`decoherence`]: the complex localization rate for pairs of poses;
//! * [`amplitudes`]: amplitudes of emission, jump-operator normalization and
//!   the transparent-emitter closed form;
//! * [`montecarlo`]: a classical emission-event simulator used as a brute-force
//!   oracle for the moment predictions.
//!
//! Everything is expressed in SI units.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amplitudes;
pub mod decoherence;
pub mod error;
pub mod flux;
pub mod geometry;
pub mod moments;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod types;

pub use error::{Error, Result};
pub use types::{Pose, Rotation, SmallAngle};

//! Jump diffusion for variable-length spectrogram generation.
//!
//! The forward process deletes frames along a length schedule while noising
//! the survivors toward a phone-level prior; the reverse process re-inserts
//! frames at learned locations while denoising with a score function.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod forward;
pub mod io;
pub mod predictors;
pub mod reverse;
pub mod rng;
pub mod schedule;
pub mod state;

pub use error::{Error, Result};
pub use schedule::{schedule_length, KernelCoeffs, NoiseSchedule, DEFAULT_T_MIN};
pub use state::{
    Alignment, DiffusionTime, ProtectedSet, Provenance, ProvenanceMask, Span, Spectrogram,
};

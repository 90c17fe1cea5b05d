//! Fourier phase retrieval toolkit.
//!
//! Recovers a complex-valued image from its oversampled Fourier intensity
//! `Y = |F(X)|^2`. The main solver reparameterizes the unknown image as the
//! output of an untrained deep-decoder-style generator and fits the weights
//! to the single measurement ([`optimize::solve_sidgp`]). A plain
//! hybrid input-output baseline ([`hio`]), simulated crystal / toy data
//! generators ([`simulate`]) and symmetry-resolved evaluation ([`metrics`])
//! round out the toolkit.
//!
//! All numerics are f64 and deterministic for a fixed configuration. With
//! the `parallel` feature (default) the data-parallel inner loops run on
//! rayon; results are bitwise identical to the sequential fallback.

pub mod decoder;
pub mod error;
pub mod fft;
pub mod field;
pub mod hio;
pub mod metrics;
pub mod optimize;
pub mod simulate;

pub use error::PrError;
pub use field::{ComplexImage, DiffractionPattern, SupportMask};

pub type Result<T> = std::result::Result<T, PrError>;

//! Link-level simulation of multi-user MIMO FBMC-OQAM transmission with
//! single-tap per-subcarrier precoding and decoding under strongly
//! frequency-selective channels.
//!
//! The library is organized as a bottom-up stack:
//!
//! ```text
//!   pulse      prototype pulses, derivative sampling, eta tables
//!   channel    ITU vehicular tapped-delay channels, frequency responses
//!   modem      OQAM staggering, synthesis/analysis filterbanks
//!   design     per-subcarrier precoder/decoder constructions (ZF, MMSE)
//!   mse_theory asymptotic per-subcarrier MSE predictions
//!   harness    seeded Monte Carlo experiments, CSV/JSON/SVG reporting
//! ```
//!
//! All per-subcarrier quantities live on the grid `omega_m = 2*pi*m / (2M)`,
//! `m = 0..2M-1`. Complex-symbol power is fixed at 1 (real symbols carry
//! variance 1/2), and the prototype pulse is normalized so that a perfect
//! reconstruction filterbank has unit end-to-end gain; together these make
//! the theoretical formulas directly comparable with simulated averages.

pub mod channel;
pub mod design;
pub mod error;
pub mod linalg;
pub mod modem;
pub mod mse_theory;
pub mod pulse;

pub mod harness;

pub use error::FbmcError;

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, FbmcError>;

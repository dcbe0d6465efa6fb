//! Digital self-interference cancellation (SIC) workbench for full-duplex radios.
//!
//! The crate simulates a nonlinear, time-varying self-interference path and runs
//! eight cancellers against it:
//!
//! * model-based polynomial filters: WH-LMS, WH-RLS with offline whitening,
//!   WIH-LMS (Itô-Hermite basis) and AOP-LMS (adaptive orthonormal basis),
//! * data-driven cancellers: kernel LMS, random-feature kernel LMS, a static
//!   MLP and an MLP fed with a running linear channel estimate.
//!
//! Data flows `signal_gen` → `si_channel` → [`canceller::Canceller`] implementations,
//! orchestrated by [`harness`].

pub mod adaptive;
pub mod basis;
pub mod canceller;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod neural;
pub mod rng;
pub mod si_channel;
pub mod signal_gen;

pub use num_complex::Complex64;

pub use crate::canceller::{Algorithm, Canceller, DistributionChange, StepResult};
pub use crate::error::{Result, SicError};

/// Length of the transmit delay line feeding every canceller.
pub const REGRESSOR_LEN: usize = 21;

/// Number of odd-order nonlinear branches (orders 1, 3, 5).
pub const NUM_BRANCHES: usize = 3;

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power in watts to dBm. Zero power maps to negative infinity.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Mean of `|x|^2` over the slice; zero for an empty slice.
pub fn mean_power(samples: &[Complex64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / samples.len() as f64
}

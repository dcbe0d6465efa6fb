//! The common step interface shared by every canceller.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SicError};
use crate::Complex64;

/// Output of one cancellation step; `e + y_hat == d` exactly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub y_hat: Complex64,
    pub e: Complex64,
}

impl StepResult {
    pub fn new(d: Complex64, y_hat: Complex64) -> Self {
        StepResult { y_hat, e: d - y_hat }
    }
}

/// Raised at a transmit-distribution change (modulation switch or stream start).
///
/// `upcoming` holds the transmit samples queued from this step on; the
/// transmitter knows them before they are sent. It may be shorter than a
/// canceller's estimation window near the end of a stream.
#[derive(Clone, Copy, Debug)]
pub struct DistributionChange<'a> {
    pub upcoming: &'a [Complex64],
}

/// Identifiers of the implemented cancellers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Pass-through, `y_hat = 0`.
    None,
    WhLms,
    WhRlsOrth,
    WihLms,
    AopLms,
    Klms,
    RfkLms,
    Dnn,
    AdaptiveDnn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 9] = [
        Algorithm::None,
        Algorithm::WhLms,
        Algorithm::WhRlsOrth,
        Algorithm::WihLms,
        Algorithm::AopLms,
        Algorithm::Klms,
        Algorithm::RfkLms,
        Algorithm::Dnn,
        Algorithm::AdaptiveDnn,
    ];

    /// The eight compared cancellers, in reporting order.
    pub const COMPARED: [Algorithm; 8] = [
        Algorithm::WhLms,
        Algorithm::WhRlsOrth,
        Algorithm::WihLms,
        Algorithm::AopLms,
        Algorithm::Klms,
        Algorithm::RfkLms,
        Algorithm::Dnn,
        Algorithm::AdaptiveDnn,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Algorithm::None => "none",
            Algorithm::WhLms => "wh-lms",
            Algorithm::WhRlsOrth => "wh-rls-orth",
            Algorithm::WihLms => "wih-lms",
            Algorithm::AopLms => "aop-lms",
            Algorithm::Klms => "klms",
            Algorithm::RfkLms => "rfk-lms",
            Algorithm::Dnn => "dnn",
            Algorithm::AdaptiveDnn => "adaptive-dnn",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Algorithm {
    type Err = SicError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL.into_iter().find(|a| a.id() == s).ok_or_else(|| {
            let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.id()).collect();
            SicError::Config(format!("unknown algorithm '{s}', expected one of {known:?}"))
        })
    }
}

/// A sample-by-sample canceller.
///
/// `tx` is the newest transmit sample (the canceller keeps its own delay line),
/// `d` the received sample to cancel.
pub trait Canceller {
    fn algorithm(&self) -> Algorithm;

    fn step(&mut self, tx: Complex64, d: Complex64, change: Option<DistributionChange<'_>>) -> Result<StepResult>;

    /// Model complexity as reported in summaries.
    fn param_count(&self) -> usize;

    /// Non-fatal events (e.g. a retained basis) accumulated so far.
    fn warnings(&self) -> &[String] {
        &[]
    }
}

/// Digital cancellation disabled.
#[derive(Clone, Debug, Default)]
pub struct PassThrough;

impl Canceller for PassThrough {
    fn algorithm(&self) -> Algorithm {
        Algorithm::None
    }

    fn step(&mut self, _tx: Complex64, d: Complex64, _change: Option<DistributionChange<'_>>) -> Result<StepResult> {
        Ok(StepResult::new(d, Complex64::default()))
    }

    fn param_count(&self) -> usize {
        0
    }
}

pub(crate) fn check_finite(step: usize, values: &[Complex64]) -> Result<()> {
    if values.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(SicError::NumericFault {
            step,
            reason: "non-finite input".into(),
        })
    }
}

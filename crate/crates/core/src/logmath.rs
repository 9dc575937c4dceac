//! Natural-log probability arithmetic.
//!
//! All masses in the crate are carried as natural logarithms. Negative
//! infinity is the zero-mass sentinel; NaN is never a valid mass.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A log-domain probability mass (natural log).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct LogMass(f64);

impl LogMass {
    /// Zero probability mass.
    pub const ZERO: LogMass = LogMass(f64::NEG_INFINITY);
    /// Unit probability mass.
    pub const ONE: LogMass = LogMass(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() {
            return Err(Error::InvalidMass);
        }
        Ok(LogMass(value))
    }

    /// Log of a linear-domain probability.
    pub fn from_prob(p: f64) -> Result<Self> {
        if p.is_nan() || p < 0.0 {
            return Err(Error::InvalidMass);
        }
        Ok(LogMass(p.ln()))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn prob(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

impl Eq for LogMass {}

impl PartialOrd for LogMass {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogMass {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl TryFrom<f64> for LogMass {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        LogMass::new(value)
    }
}

impl From<LogMass> for f64 {
    fn from(m: LogMass) -> f64 {
        m.0
    }
}

impl fmt::Display for LogMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// `ln(exp(a) + exp(b))` on raw log values.
#[inline]
pub fn log_add_raw(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(exp(a) + exp(b))`, stable for any finite inputs.
pub fn log_add(a: LogMass, b: LogMass) -> LogMass {
    LogMass(log_add_raw(a.0, b.0))
}

/// Log-sum-exp over raw log values. Empty input gives negative infinity.
pub fn log_sum_raw(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-sum-exp over masses. Empty input is zero mass.
pub fn log_sum(values: &[LogMass]) -> LogMass {
    let raw: Vec<f64> = values.iter().map(|m| m.0).collect();
    LogMass(log_sum_raw(&raw))
}

/// In-place log-softmax. Returns the log normalizer.
pub fn log_softmax_in_place(logits: &mut [f64]) -> f64 {
    let lse = log_sum_raw(logits);
    for v in logits.iter_mut() {
        *v -= lse;
    }
    lse
}

/// Linear-domain softmax of a log-score vector.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_raw(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

//! Shared domain types and the closed-form QoS/utility math.
//!
//! Every per-slice vector in the crate (shares, observations, gradients) is
//! aligned with the declaration order of a cell's `active_slices`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the sum of a partition's shares.
pub const PARTITION_SUM_TOLERANCE: f64 = 1e-9;

/// Identity and QoS requirements of one slice type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SliceSpec {
    pub slice_id: u32,
    /// Required average user throughput in Mbit/s.
    pub throughput_req: f64,
    /// Required delay in milliseconds.
    pub delay_req: f64,
}

impl SliceSpec {
    pub fn new(slice_id: u32, throughput_req: f64, delay_req: f64) -> Result<Self> {
        let spec = SliceSpec {
            slice_id,
            throughput_req,
            delay_req,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidSlice {
            slice_id: self.slice_id,
            reason: reason.to_string(),
        };
        if !(self.throughput_req.is_finite() && self.throughput_req > 0.0) {
            return Err(bad("throughput requirement must be positive and finite"));
        }
        if !(self.delay_req.is_finite() && self.delay_req > 0.0) {
            return Err(bad("delay requirement must be positive and finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTopology {
    pub cell_id: u32,
    /// Carrier bandwidth in MHz.
    pub bandwidth: f64,
    pub active_slices: Vec<SliceSpec>,
}

impl CellTopology {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(Error::Config(format!(
                "cell {} bandwidth must be positive",
                self.cell_id
            )));
        }
        validate_slice_set(&self.active_slices)
    }
}

/// Checks a non-empty slice list with valid specs and unique ids.
pub fn validate_slice_set(slices: &[SliceSpec]) -> Result<()> {
    if slices.is_empty() {
        return Err(Error::Empty("active slice set"));
    }
    for (i, s) in slices.iter().enumerate() {
        s.validate()?;
        if slices[..i].iter().any(|o| o.slice_id == s.slice_id) {
            return Err(Error::InvalidSlice {
                slice_id: s.slice_id,
                reason: "duplicate slice id in active set".into(),
            });
        }
    }
    Ok(())
}

/// Which feasibility clause a partition broke.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionViolation {
    NonFinite { index: usize },
    NegativeShare { index: usize, value: f64 },
    ShareAboveOne { index: usize, value: f64 },
    SumExceeded { sum: f64 },
}

impl fmt::Display for PartitionViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionViolation::NonFinite { index } => write!(f, "share {index} is not finite"),
            PartitionViolation::NegativeShare { index, value } => {
                write!(f, "share {index} is negative ({value})")
            }
            PartitionViolation::ShareAboveOne { index, value } => {
                write!(f, "share {index} exceeds 1 ({value})")
            }
            PartitionViolation::SumExceeded { sum } => write!(f, "sum of shares {sum} > 1"),
        }
    }
}

impl std::error::Error for PartitionViolation {}

/// Per-cell resource shares over the active slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionVector(Vec<f64>);

impl PartitionVector {
    /// Builds a partition, rejecting anything outside the feasible set.
    pub fn new(shares: Vec<f64>) -> std::result::Result<Self, PartitionViolation> {
        validate_partition(&shares)?;
        Ok(PartitionVector(shares))
    }

    /// Wraps shares without checking them; pair with [`PartitionVector::validate`].
    pub fn from_raw(shares: Vec<f64>) -> Self {
        PartitionVector(shares)
    }

    pub fn validate(&self) -> std::result::Result<(), PartitionViolation> {
        validate_partition(&self.0)
    }

    pub fn shares(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for PartitionVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Accepts iff every share is in [0, 1] and the sum is at most 1 + 1e-9.
pub fn validate_partition(shares: &[f64]) -> std::result::Result<(), PartitionViolation> {
    for (index, &value) in shares.iter().enumerate() {
        if !value.is_finite() {
            return Err(PartitionViolation::NonFinite { index });
        }
        if value < 0.0 {
            return Err(PartitionViolation::NegativeShare { index, value });
        }
        if value > 1.0 {
            return Err(PartitionViolation::ShareAboveOne { index, value });
        }
    }
    let sum: f64 = shares.iter().sum();
    if sum > 1.0 + PARTITION_SUM_TOLERANCE {
        return Err(PartitionViolation::SumExceeded { sum });
    }
    Ok(())
}

/// Rescales onto the simplex when the sum exceeds one; feasible input is
/// returned untouched. An all-zero vector becomes an equal split.
pub fn normalize_to_simplex(raw: &[f64]) -> Result<PartitionVector> {
    if raw.is_empty() {
        return Err(Error::Empty("share vector"));
    }
    if let Some(v) = raw.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shares must be finite and nonnegative, got {v}"
        )));
    }
    let sum: f64 = raw.iter().sum();
    if sum == 0.0 {
        return Ok(equal_shares(raw.len()));
    }
    if sum <= 1.0 && raw.iter().all(|&v| v <= 1.0) {
        return Ok(PartitionVector(raw.to_vec()));
    }
    let mut shares: Vec<f64> = raw.iter().map(|v| (v / sum).min(1.0)).collect();
    // Division can leave the sum a few ulps above one.
    let total: f64 = shares.iter().sum();
    if total > 1.0 {
        let excess = total - 1.0;
        if let Some(max) = shares
            .iter_mut()
            .max_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal))
        {
            *max = (*max - excess).max(0.0);
        }
    }
    Ok(PartitionVector(shares))
}

pub(crate) fn equal_shares(n: usize) -> PartitionVector {
    PartitionVector(vec![1.0 / n as f64; n])
}

/// Achieved slice-aggregate QoS in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QosOutcome {
    /// Average user throughput in Mbit/s.
    pub throughput: f64,
    /// Delay in milliseconds.
    pub delay: f64,
}

/// QoS satisfaction level in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SatisfactionLevel(f64);

impl SatisfactionLevel {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(SatisfactionLevel(value))
        } else {
            Err(Error::InvalidArgument(format!(
                "satisfaction level {value} outside [0, 1]"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_satisfied(self) -> bool {
        self.0 >= 1.0
    }
}

/// `min(throughput / throughput_req, delay_req / delay, 1)`.
///
/// A zero delay counts as an infinite delay ratio, so it is capped at 1.
pub fn satisfaction(outcome: QosOutcome, spec: &SliceSpec) -> Result<SatisfactionLevel> {
    spec.validate()?;
    if !(outcome.throughput.is_finite() && outcome.throughput >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "throughput must be finite and nonnegative, got {}",
            outcome.throughput
        )));
    }
    if !(outcome.delay >= 0.0) || outcome.delay.is_nan() {
        return Err(Error::InvalidArgument(format!(
            "delay must be nonnegative, got {}",
            outcome.delay
        )));
    }
    let tput_ratio = outcome.throughput / spec.throughput_req;
    let delay_ratio = if outcome.delay == 0.0 {
        f64::INFINITY
    } else {
        spec.delay_req / outcome.delay
    };
    Ok(SatisfactionLevel(tput_ratio.min(delay_ratio).min(1.0)))
}

/// Network utility `Σ ln(r + 1)`.
pub fn log_utility(levels: &[SatisfactionLevel]) -> f64 {
    levels.iter().map(|r| r.0.ln_1p()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(t: f64, d: f64) -> SliceSpec {
        SliceSpec::new(1, t, d).unwrap()
    }

    fn sat(tp: f64, d: f64, s: &SliceSpec) -> f64 {
        satisfaction(
            QosOutcome {
                throughput: tp,
                delay: d,
            },
            s,
        )
        .unwrap()
        .value()
    }

    #[test]
    fn satisfaction_examples() {
        assert_eq!(sat(2.0, 5.0, &spec(2.0, 10.0)), 1.0);
        assert_eq!(sat(1.0, 5.0, &spec(2.0, 10.0)), 0.5);
        assert_eq!(sat(3.0, 20.0, &spec(1.5, 10.0)), 0.5);
        assert_eq!(sat(0.0, 5.0, &spec(7.0, 3.0)), 0.0);
    }

    #[test]
    fn zero_delay_is_capped() {
        assert_eq!(sat(5.0, 0.0, &spec(2.0, 10.0)), 1.0);
        assert_eq!(sat(1.0, 0.0, &spec(2.0, 10.0)), 0.5);
    }

    #[test]
    fn rejects_bad_requirements() {
        assert!(SliceSpec::new(1, 0.0, 1.0).is_err());
        assert!(SliceSpec::new(1, 1.0, -2.0).is_err());
        let bogus = SliceSpec {
            slice_id: 3,
            throughput_req: -1.0,
            delay_req: 1.0,
        };
        let out = QosOutcome {
            throughput: 1.0,
            delay: 1.0,
        };
        assert!(satisfaction(out, &bogus).is_err());
    }

    #[test]
    fn log_utility_examples() {
        let one = SatisfactionLevel::new(1.0).unwrap();
        let zero = SatisfactionLevel::new(0.0).unwrap();
        assert_abs_diff_eq!(log_utility(&[one, one, one]), 3.0 * 2f64.ln(), epsilon = 1e-15);
        assert_eq!(log_utility(&[zero, zero]), 0.0);
        let half = SatisfactionLevel::new(0.5).unwrap();
        assert_abs_diff_eq!(log_utility(&[half]), 0.405_465_108_108_164_4, epsilon = 1e-15);
    }

    #[test]
    fn validate_examples() {
        assert!(validate_partition(&[0.3, 0.3, 0.4]).is_ok());
        assert!(matches!(
            validate_partition(&[0.6, 0.6]),
            Err(PartitionViolation::SumExceeded { .. })
        ));
        assert!(matches!(
            validate_partition(&[-0.1, 0.5]),
            Err(PartitionViolation::NegativeShare { index: 0, .. })
        ));
        assert!(matches!(
            validate_partition(&[f64::NAN]),
            Err(PartitionViolation::NonFinite { index: 0 })
        ));
        assert!(validate_partition(&[0.5, 0.5 + 0.5e-9]).is_ok());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_to_simplex(&[0.5, 0.3]).unwrap().shares(), &[0.5, 0.3]);
        assert_eq!(normalize_to_simplex(&[0.8, 0.8]).unwrap().shares(), &[0.5, 0.5]);
        let eq = normalize_to_simplex(&[0.0, 0.0, 0.0]).unwrap();
        for s in eq.shares() {
            assert_abs_diff_eq!(*s, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(normalize_to_simplex(&[]).is_err());
        assert!(normalize_to_simplex(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn slice_set_rejects_duplicates() {
        let a = spec(1.0, 1.0);
        assert!(validate_slice_set(&[a, a]).is_err());
        assert!(validate_slice_set(&[]).is_err());
    }

    proptest! {
        #[test]
        fn satisfaction_in_unit_interval(tp in 0.0..100.0f64, d in 0.0..100.0f64,
                                         rt in 0.01..10.0f64, rd in 0.01..100.0f64) {
            let s = spec(rt, rd);
            let r = sat(tp, d, &s);
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn satisfaction_monotone(tp in 0.0..10.0f64, dtp in 0.0..5.0f64,
                                 d in 0.01..100.0f64, dd in 0.0..50.0f64,
                                 rt in 0.01..10.0f64, rd in 0.01..100.0f64) {
            let s = spec(rt, rd);
            prop_assert!(sat(tp + dtp, d, &s) >= sat(tp, d, &s));
            prop_assert!(sat(tp, d + dd, &s) <= sat(tp, d, &s));
        }

        #[test]
        fn log_utility_monotone(levels in prop::collection::vec(0.0..=1.0f64, 1..8),
                                idx in 0usize..8, bump in 0.0..1.0f64) {
            let base: Vec<_> = levels.iter().map(|&v| SatisfactionLevel::new(v).unwrap()).collect();
            let mut raised = base.clone();
            let i = idx % raised.len();
            raised[i] = SatisfactionLevel::new((levels[i] + bump).min(1.0)).unwrap();
            prop_assert!(log_utility(&raised) >= log_utility(&base));
        }

        #[test]
        fn normalized_is_feasible(raw in prop::collection::vec(0.0..10.0f64, 1..12)) {
            let p = normalize_to_simplex(&raw).unwrap();
            prop_assert!(validate_partition(p.shares()).is_ok());
        }
    }
}

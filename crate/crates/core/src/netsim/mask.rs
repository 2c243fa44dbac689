use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest period accepted by [`default_traffic_mask`].
pub const MIN_MASK_PERIOD: usize = 24;

const MASK_MEAN: f64 = 0.55;
const MASK_AMPLITUDE: f64 = 0.4;
const MASK_NOISE: f64 = 0.05;

/// Periodic per-slice traffic scaling in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficMask {
    values: Vec<f64>,
}

impl TrafficMask {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("traffic mask"));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("traffic mask values must lie in [0, 1]".into()));
        }
        Ok(TrafficMask { values })
    }

    pub fn period(&self) -> usize {
        self.values.len()
    }

    pub fn at(&self, t: u64) -> f64 {
        self.values[(t % self.values.len() as u64) as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Synthetic diurnal profile: a sinusoid with a slice-specific phase plus
/// bounded noise seeded from the slice id, clamped to [0, 1].
pub fn default_traffic_mask(slice_id: u32, period: usize) -> Result<TrafficMask> {
    if period < MIN_MASK_PERIOD {
        return Err(Error::Config(format!(
            "mask period must be at least {MIN_MASK_PERIOD} steps, got {period}"
        )));
    }
    // Golden-ratio spacing keeps phases of consecutive ids well apart.
    let phase = std::f64::consts::TAU * (slice_id as f64 * 0.618_033_988_749_895).fract();
    let mut rng = ChaCha8Rng::seed_from_u64(0x6d61_736b_0000_0000 ^ u64::from(slice_id));
    let values = (0..period)
        .map(|t| {
            let angle = std::f64::consts::TAU * t as f64 / period as f64 + phase;
            let noise = rng.random_range(-MASK_NOISE..=MASK_NOISE);
            (MASK_MEAN + MASK_AMPLITUDE * angle.sin() + noise).clamp(0.0, 1.0)
        })
        .collect();
    Ok(TrafficMask { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_in_unit_interval() {
        for id in 1..=6 {
            let m = default_traffic_mask(id, 96).unwrap();
            assert!(m.values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn periodic() {
        let m = default_traffic_mask(2, 96).unwrap();
        for t in 0..300 {
            assert_eq!(m.at(t), m.at(t + 96));
        }
    }

    #[test]
    fn distinct_slices_differ() {
        let a = default_traffic_mask(1, 96).unwrap();
        let b = default_traffic_mask(2, 96).unwrap();
        assert_ne!(a.values(), b.values());
    }

    #[test]
    fn short_period_rejected() {
        assert!(default_traffic_mask(1, 23).is_err());
        assert!(TrafficMask::new(vec![]).is_err());
        assert!(TrafficMask::new(vec![1.5]).is_err());
    }
}

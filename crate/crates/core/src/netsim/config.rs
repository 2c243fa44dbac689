use serde::{Deserialize, Serialize};

use crate::domain::{validate_slice_set, SliceSpec};
use crate::error::{Error, Result};
use crate::netsim::mask::MIN_MASK_PERIOD;

/// Spectral efficiency in bit/s/Hz for CQI indices 1..=15 (4-bit CQI table,
/// 64QAM).
pub const DEFAULT_SPECTRAL_EFFICIENCY: [f64; 15] = [
    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547,
];

/// One entry of the slice catalog: requirements plus traffic and channel
/// parameters of the users that slice type serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceProfile {
    pub spec: SliceSpec,
    /// Mean number of active users per cell when the traffic mask is 1.
    pub mean_users: f64,
    /// Offered load of one active user in Mbit/s.
    pub per_user_demand: f64,
    /// Centre of the CQI random walk.
    pub cqi_base: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelProcess {
    /// Maximum deviation of the CQI walk from `cqi_base`.
    pub cqi_spread: u8,
    /// Probability of a ±1 CQI move per step.
    pub step_prob: f64,
}

impl Default for ChannelProcess {
    fn default() -> Self {
        ChannelProcess {
            cqi_spread: 2,
            step_prob: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub num_cells: usize,
    pub bandwidth_mhz: f64,
    pub slice_catalog: Vec<SliceProfile>,
    /// Slice ids active in every cell after `init`.
    pub initial_slices: Vec<u32>,
    /// Steps per traffic-mask period (one day at 15-minute steps).
    pub mask_period: usize,
    pub channel: ChannelProcess,
    /// Capacity discount per unit of mean neighbour PRB load, in [0, 1).
    pub coupling: f64,
    pub seed: u64,
    pub step_minutes: f64,
    /// History length H of the user-count and CQI observations.
    pub history_len: usize,
    pub base_delay_ms: f64,
    /// Load headroom ε_d of the queueing delay model.
    pub delay_headroom: f64,
    /// Poisson sub-samples averaged into one reported user count.
    pub user_subsamples: u32,
    pub spectral_efficiency: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_cells: 12,
            bandwidth_mhz: 20.0,
            slice_catalog: default_catalog(),
            initial_slices: vec![1, 2, 4],
            mask_period: 96,
            channel: ChannelProcess::default(),
            coupling: 0.1,
            seed: 0,
            step_minutes: 15.0,
            history_len: 5,
            base_delay_ms: 2.0,
            delay_headroom: 0.02,
            user_subsamples: 15,
            spectral_efficiency: DEFAULT_SPECTRAL_EFFICIENCY.to_vec(),
        }
    }
}

/// Four service types with throughput requirements {2, 1, 1.5, 0.5} Mbit/s.
pub fn default_catalog() -> Vec<SliceProfile> {
    let p = |id, tput, delay, users, cqi| SliceProfile {
        spec: SliceSpec {
            slice_id: id,
            throughput_req: tput,
            delay_req: delay,
        },
        mean_users: users,
        per_user_demand: tput,
        cqi_base: cqi,
    };
    vec![
        p(1, 2.0, 10.0, 5.0, 9),
        p(2, 1.0, 20.0, 8.0, 7),
        p(3, 1.5, 15.0, 8.0, 8),
        p(4, 0.5, 50.0, 12.0, 6),
    ]
}

impl SimConfig {
    /// Three-cell variant for quick runs.
    pub fn desk() -> Self {
        SimConfig {
            num_cells: 3,
            ..SimConfig::default()
        }
    }

    pub fn profile(&self, slice_id: u32) -> Option<&SliceProfile> {
        self.slice_catalog.iter().find(|p| p.spec.slice_id == slice_id)
    }

    pub fn specs_for(&self, ids: &[u32]) -> Result<Vec<SliceSpec>> {
        ids.iter()
            .map(|&id| {
                self.profile(id)
                    .map(|p| p.spec)
                    .ok_or_else(|| Error::Config(format!("slice {id} is not in the catalog")))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.num_cells == 0 {
            return cfg("num_cells must be at least 1".into());
        }
        if !(self.bandwidth_mhz.is_finite() && self.bandwidth_mhz > 0.0) {
            return cfg("bandwidth_mhz must be positive".into());
        }
        if !(0.0..1.0).contains(&self.coupling) {
            return cfg(format!("coupling must lie in [0, 1), got {}", self.coupling));
        }
        if self.mask_period < MIN_MASK_PERIOD {
            return cfg(format!("mask_period must be at least {MIN_MASK_PERIOD}"));
        }
        if self.history_len == 0 {
            return cfg("history_len must be at least 1".into());
        }
        if !(self.base_delay_ms > 0.0) {
            return cfg("base_delay_ms must be positive".into());
        }
        if !(self.delay_headroom > 0.0 && self.delay_headroom < 1.0) {
            return cfg("delay_headroom must lie in (0, 1)".into());
        }
        if self.user_subsamples == 0 {
            return cfg("user_subsamples must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.channel.step_prob) {
            return cfg("channel.step_prob must lie in [0, 1]".into());
        }
        if self.spectral_efficiency.len() != 15
            || self.spectral_efficiency.windows(2).any(|w| w[1] < w[0])
            || self.spectral_efficiency.iter().any(|v| !(*v > 0.0))
        {
            return cfg("spectral_efficiency must be 15 positive nondecreasing values".into());
        }
        let specs: Vec<SliceSpec> = self.slice_catalog.iter().map(|p| p.spec).collect();
        validate_slice_set(&specs)?;
        for p in &self.slice_catalog {
            if !(p.mean_users >= 0.0 && p.mean_users.is_finite()) {
                return cfg(format!("slice {}: mean_users must be >= 0", p.spec.slice_id));
            }
            if !(p.per_user_demand > 0.0 && p.per_user_demand.is_finite()) {
                return cfg(format!("slice {}: per_user_demand must be > 0", p.spec.slice_id));
            }
            if !(1..=15).contains(&p.cqi_base) {
                return cfg(format!("slice {}: cqi_base must be in 1..=15", p.spec.slice_id));
            }
        }
        validate_slice_set(&self.specs_for(&self.initial_slices)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.num_cells, 12);
        assert_eq!(c.slice_catalog.len(), 4);
        let reqs: Vec<f64> = c.slice_catalog.iter().map(|p| p.spec.throughput_req).collect();
        assert_eq!(reqs, vec![2.0, 1.0, 1.5, 0.5]);
        assert_eq!(c.step_minutes, 15.0);
    }

    #[test]
    fn rejects_bad_values() {
        let mut c = SimConfig::desk();
        c.coupling = 1.0;
        assert!(c.validate().is_err());
        let mut c = SimConfig::desk();
        c.initial_slices = vec![9];
        assert!(c.validate().is_err());
        let mut c = SimConfig::desk();
        c.initial_slices = vec![];
        assert!(c.validate().is_err());
    }

    #[test]
    fn toml_partial_override() {
        let c: SimConfig = toml::from_str("num_cells = 2\nseed = 7\n").unwrap();
        assert_eq!(c.num_cells, 2);
        assert_eq!(c.seed, 7);
        assert_eq!(c.bandwidth_mhz, 20.0);
    }
}

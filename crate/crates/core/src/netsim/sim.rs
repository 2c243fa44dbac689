use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::domain::{equal_shares, validate_slice_set, PartitionVector, SliceSpec};
use crate::error::{Error, Result};
use crate::netsim::config::{SimConfig, SliceProfile};
use crate::netsim::kpi::KpiRecord;
use crate::netsim::mask::{default_traffic_mask, TrafficMask};

/// Exogenous processes of one (cell, catalog slice) pair. Streams advance
/// every step whether or not the slice is active, so the realisation never
/// depends on the partitions a scheme chooses.
#[derive(Debug, Clone, PartialEq)]
struct SliceStream {
    rng: ChaCha8Rng,
    cqi: u8,
    /// Realisation for the step about to be simulated.
    next_users: f64,
    next_cqi: u8,
    user_history: VecDeque<f64>,
    cqi_history: VecDeque<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct CellState {
    cell_id: u32,
    active: Vec<SliceSpec>,
    /// Indexed like `SimConfig::slice_catalog`.
    streams: Vec<SliceStream>,
}

/// Discrete-time synthetic ground-truth network.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorState {
    config: SimConfig,
    masks: Vec<TrafficMask>,
    t: u64,
    cells: Vec<CellState>,
    /// Total PRB utilisation per cell in the previous step.
    prev_cell_load: Vec<f64>,
}

fn stream_seed(seed: u64, cell: u32, slice: u32) -> u64 {
    // splitmix64 finaliser over the packed key
    let mut z = seed ^ (u64::from(cell) << 32 | u64::from(slice)).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SliceStream {
    fn new(seed: u64, cell: u32, profile: &SliceProfile, history_len: usize) -> Self {
        SliceStream {
            rng: ChaCha8Rng::seed_from_u64(stream_seed(seed, cell, profile.spec.slice_id)),
            cqi: profile.cqi_base,
            next_users: 0.0,
            next_cqi: profile.cqi_base,
            user_history: VecDeque::from(vec![0.0; history_len]),
            cqi_history: VecDeque::from(vec![0.0; history_len]),
        }
    }

    /// Draws the realisation for step `t`.
    fn advance(&mut self, t: u64, profile: &SliceProfile, mask: &TrafficMask, config: &SimConfig) {
        let k = f64::from(config.user_subsamples);
        let mean = profile.mean_users * mask.at(t) * k;
        self.next_users = if mean > 0.0 {
            let draw: f64 = Poisson::new(mean).map(|p| p.sample(&mut self.rng)).unwrap_or(mean);
            draw / k
        } else {
            0.0
        };

        let spread = config.channel.cqi_spread;
        let lo = profile.cqi_base.saturating_sub(spread).max(1);
        let hi = profile.cqi_base.saturating_add(spread).min(15);
        if self.rng.random_bool(config.channel.step_prob) {
            let up = self.rng.random_bool(0.5);
            let moved = if up { self.cqi.saturating_add(1) } else { self.cqi.saturating_sub(1) };
            self.cqi = moved.clamp(lo, hi);
        }
        self.next_cqi = self.cqi;
    }

    fn record(&mut self) {
        self.user_history.pop_front();
        self.user_history.push_back(self.next_users);
        self.cqi_history.pop_front();
        self.cqi_history.push_back(f64::from(self.next_cqi));
    }

    fn reset_history(&mut self) {
        self.user_history.iter_mut().for_each(|v| *v = 0.0);
        self.cqi_history.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Outcome of one slice under a given share; the analytic ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct SliceOutcome {
    pub throughput: f64,
    pub delay: f64,
    pub prb_utilization: f64,
}

/// Capacity-share throughput plus single-queue delay.
pub(crate) fn slice_outcome(
    share: f64,
    users: f64,
    demand_per_user: f64,
    effective_capacity: f64,
    base_delay: f64,
    headroom: f64,
) -> SliceOutcome {
    let slice_capacity = share * effective_capacity;
    let offered = users * demand_per_user;
    let max_delay = base_delay / headroom;
    if slice_capacity <= 0.0 {
        return SliceOutcome {
            throughput: 0.0,
            delay: max_delay,
            prb_utilization: 0.0,
        };
    }
    // A fractional average below one user still cannot exceed the slice.
    let throughput = demand_per_user.min(slice_capacity / users.max(1.0));
    let load = offered / slice_capacity;
    let rho = load.clamp(0.0, 1.0 - headroom);
    SliceOutcome {
        throughput,
        delay: base_delay / (1.0 - rho).max(headroom),
        prb_utilization: share * load.min(1.0),
    }
}

impl SimulatorState {
    /// Builds the initial state and runs `history_len` warm-up steps under
    /// equal-split partitions so every observation history is filled.
    pub fn init(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let masks = config
            .slice_catalog
            .iter()
            .map(|p| default_traffic_mask(p.spec.slice_id, config.mask_period))
            .collect::<Result<Vec<_>>>()?;
        let active = config.specs_for(&config.initial_slices)?;
        let cells = (0..config.num_cells as u32)
            .map(|cell_id| CellState {
                cell_id,
                active: active.clone(),
                streams: config
                    .slice_catalog
                    .iter()
                    .map(|p| SliceStream::new(config.seed, cell_id, p, config.history_len))
                    .collect(),
            })
            .collect();
        let mut state = SimulatorState {
            prev_cell_load: vec![0.0; config.num_cells],
            masks,
            t: 0,
            cells,
            config,
        };
        state.draw_next();
        for _ in 0..state.config.history_len {
            let partitions = state.equal_partitions();
            state.step(&partitions)?;
        }
        Ok(state)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    /// Index of the next step to be simulated.
    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_ids(&self) -> Vec<u32> {
        self.cells.iter().map(|c| c.cell_id).collect()
    }

    pub fn active_slices(&self, cell: usize) -> &[SliceSpec] {
        &self.cells[cell].active
    }

    pub fn mask(&self, slice_id: u32) -> Option<&TrafficMask> {
        let idx = self.catalog_index(slice_id)?;
        Some(&self.masks[idx])
    }

    pub fn equal_partitions(&self) -> Vec<PartitionVector> {
        self.cells.iter().map(|c| equal_shares(c.active.len())).collect()
    }

    fn catalog_index(&self, slice_id: u32) -> Option<usize> {
        self.config
            .slice_catalog
            .iter()
            .position(|p| p.spec.slice_id == slice_id)
    }

    fn draw_next(&mut self) {
        let t = self.t;
        let config = &self.config;
        let masks = &self.masks;
        for cell in &mut self.cells {
            for (k, stream) in cell.streams.iter_mut().enumerate() {
                stream.advance(t, &config.slice_catalog[k], &masks[k], config);
            }
        }
    }

    /// Offered load (Mbit/s) per active slice for the upcoming step. This is
    /// ground truth: only baselines granted perfect traffic knowledge use it.
    pub fn upcoming_offered_load(&self, cell: usize) -> Vec<f64> {
        let c = &self.cells[cell];
        c.active
            .iter()
            .map(|s| {
                let k = self.catalog_index(s.slice_id).expect("active slice in catalog");
                c.streams[k].next_users * self.config.slice_catalog[k].per_user_demand
            })
            .collect()
    }

    /// Observation z for an active slice: user history, CQI history (both
    /// oldest first, covering [t-H, t-1]) then throughput and delay
    /// requirements.
    pub fn observation(&self, cell: usize, slot: usize) -> Vec<f64> {
        let c = &self.cells[cell];
        let spec = c.active[slot];
        let k = self.catalog_index(spec.slice_id).expect("active slice in catalog");
        let stream = &c.streams[k];
        let mut z = Vec::with_capacity(2 * self.config.history_len + 2);
        z.extend(stream.user_history.iter().copied());
        z.extend(stream.cqi_history.iter().copied());
        z.push(spec.throughput_req);
        z.push(spec.delay_req);
        z
    }

    pub fn observations(&self, cell: usize) -> Vec<Vec<f64>> {
        (0..self.cells[cell].active.len())
            .map(|s| self.observation(cell, s))
            .collect()
    }

    /// Advances one slot under the given per-cell partitions.
    ///
    /// Neighbour coupling uses the cell loads of the previous step, so cells
    /// are evaluated independently (and in parallel) within a step.
    pub fn step(&mut self, partitions: &[PartitionVector]) -> Result<Vec<KpiRecord>> {
        if partitions.len() != self.cells.len() {
            return Err(Error::Dimension {
                expected: self.cells.len(),
                actual: partitions.len(),
            });
        }
        for (cell, p) in self.cells.iter().zip(partitions) {
            if p.len() != cell.active.len() {
                return Err(Error::Dimension {
                    expected: cell.active.len(),
                    actual: p.len(),
                });
            }
            p.validate()?;
        }

        let n = self.cells.len();
        let total_prev: f64 = self.prev_cell_load.iter().sum();
        let t = self.t;
        let config = &self.config;
        let per_cell: Vec<(Vec<KpiRecord>, f64)> = self
            .cells
            .par_iter()
            .zip(partitions.par_iter())
            .enumerate()
            .map(|(ci, (cell, partition))| {
                let neighbor_load = if n > 1 {
                    (total_prev - self.prev_cell_load[ci]) / (n - 1) as f64
                } else {
                    0.0
                };
                let discount = 1.0 - config.coupling * neighbor_load;
                let mut records = Vec::with_capacity(cell.active.len());
                let mut load = 0.0;
                for (spec, &share) in cell.active.iter().zip(partition.shares()) {
                    let k = self.catalog_index(spec.slice_id).expect("active slice in catalog");
                    let profile = &config.slice_catalog[k];
                    let stream = &cell.streams[k];
                    let se = config.spectral_efficiency[usize::from(stream.next_cqi) - 1];
                    let capacity = config.bandwidth_mhz * se * discount;
                    let out = slice_outcome(
                        share,
                        stream.next_users,
                        profile.per_user_demand,
                        capacity,
                        config.base_delay_ms,
                        config.delay_headroom,
                    );
                    load += out.prb_utilization;
                    records.push(KpiRecord {
                        t,
                        cell_id: cell.cell_id,
                        slice_id: spec.slice_id,
                        share,
                        prb_utilization: out.prb_utilization,
                        active_users: stream.next_users,
                        channel_quality: stream.next_cqi,
                        throughput: out.throughput,
                        delay: out.delay,
                    });
                }
                (records, load)
            })
            .collect();

        let mut out = Vec::new();
        for (ci, (records, load)) in per_cell.into_iter().enumerate() {
            self.prev_cell_load[ci] = load;
            out.extend(records);
        }
        for cell in &mut self.cells {
            for spec in &cell.active {
                let k = self
                    .config
                    .slice_catalog
                    .iter()
                    .position(|p| p.spec.slice_id == spec.slice_id)
                    .expect("active slice in catalog");
                cell.streams[k].record();
            }
        }
        self.t += 1;
        self.draw_next();
        Ok(out)
    }

    /// Replaces a cell's active slice set from the next step on. Newly added
    /// slices start with zero-filled histories.
    pub fn reconfigure_slices(&mut self, cell_id: u32, new_active: &[u32]) -> Result<()> {
        let specs = self.config.specs_for(new_active)?;
        validate_slice_set(&specs)?;
        let idx = self
            .cells
            .iter()
            .position(|c| c.cell_id == cell_id)
            .ok_or(Error::UnknownCell(cell_id))?;
        let catalog: Vec<u32> = self.config.slice_catalog.iter().map(|p| p.spec.slice_id).collect();
        let cell = &mut self.cells[idx];
        for spec in &specs {
            if !cell.active.iter().any(|s| s.slice_id == spec.slice_id) {
                let k = catalog.iter().position(|&id| id == spec.slice_id).expect("validated");
                cell.streams[k].reset_history();
            }
        }
        cell.active = specs;
        Ok(())
    }

    /// FNV-1a digest over the full dynamic state.
    pub fn digest(&self) -> u64 {
        let mut h = Fnv::default();
        h.u64(self.t);
        for v in &self.prev_cell_load {
            h.u64(v.to_bits());
        }
        for cell in &self.cells {
            h.u64(u64::from(cell.cell_id));
            for s in &cell.active {
                h.u64(u64::from(s.slice_id));
            }
            for st in &cell.streams {
                h.u64(st.next_users.to_bits());
                h.u64(u64::from(st.next_cqi));
                h.u64(u64::from(st.cqi));
                st.user_history.iter().for_each(|v| h.u64(v.to_bits()));
                st.cqi_history.iter().for_each(|v| h.u64(v.to_bits()));
                h.u64(st.rng.get_word_pos() as u64);
            }
        }
        h.0
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
}

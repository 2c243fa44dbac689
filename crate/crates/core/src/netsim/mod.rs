//! Synthetic multi-cell ground truth: capacity-share throughput, a single
//! queue delay model, diurnal traffic masks and one-step-lagged inter-cell
//! coupling.

mod config;
mod kpi;
mod mask;
mod sim;

pub use config::{default_catalog, ChannelProcess, SimConfig, SliceProfile, DEFAULT_SPECTRAL_EFFICIENCY};
pub use kpi::{read_kpi_csv, write_kpi_csv, KpiRecord, KPI_CSV_HEADER};
pub use mask::{default_traffic_mask, TrafficMask, MIN_MASK_PERIOD};
pub use sim::SimulatorState;

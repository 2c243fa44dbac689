use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::domain::QosOutcome;
use crate::error::{Error, Result};

/// Stable header of the KPI CSV export.
pub const KPI_CSV_HEADER: [&str; 9] = [
    "t",
    "cell_id",
    "slice_id",
    "share",
    "prb_util",
    "users",
    "cqi",
    "throughput_mbps",
    "delay_ms",
];

/// Ground truth for one (step, cell, slice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub t: u64,
    pub cell_id: u32,
    pub slice_id: u32,
    /// Share the slice was allocated.
    pub share: f64,
    #[serde(rename = "prb_util")]
    pub prb_utilization: f64,
    #[serde(rename = "users")]
    pub active_users: f64,
    #[serde(rename = "cqi")]
    pub channel_quality: u8,
    /// Average user throughput in Mbit/s.
    #[serde(rename = "throughput_mbps")]
    pub throughput: f64,
    #[serde(rename = "delay_ms")]
    pub delay: f64,
}

impl KpiRecord {
    pub fn outcome(&self) -> QosOutcome {
        QosOutcome {
            throughput: self.throughput,
            delay: self.delay,
        }
    }
}

pub fn write_kpi_csv<W: Write>(writer: W, records: &[KpiRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(KPI_CSV_HEADER)?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<kpi csv>", e))?;
    Ok(())
}

pub fn read_kpi_csv<R: Read>(reader: R) -> Result<Vec<KpiRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(KPI_CSV_HEADER) {
        return Err(Error::Parse {
            line: 1,
            reason: format!("unexpected KPI header: {header:?}"),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    H0,
    H1,
    H2,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::H0 => "H0",
            Phase::H1 => "H1",
            Phase::H2 => "H2",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H0" => Ok(Phase::H0),
            "H1" => Ok(Phase::H1),
            "H2" => Ok(Phase::H2),
            other => Err(Error::InvalidArgument(format!("unknown phase `{other}`"))),
        }
    }
}

/// One (scheme, slot, cell, slice) row of the per-slot log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotLog {
    pub scheme: String,
    pub slot: u64,
    pub phase: Phase,
    pub t: u64,
    pub cell_id: u32,
    pub slice_id: u32,
    pub share: f64,
    pub prb_util: f64,
    pub users: f64,
    pub cqi: u8,
    pub throughput_mbps: f64,
    pub delay_ms: f64,
    pub tput_req: f64,
    pub delay_req: f64,
    pub satisfaction: f64,
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

pub fn compute_cdf(values: &[f64]) -> Result<EmpiricalCdf> {
    if values.is_empty() {
        return Err(Error::Empty("satisfaction series"));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument("satisfaction values must lie in [0, 1]".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(EmpiricalCdf { sorted })
}

impl EmpiricalCdf {
    /// `P(V ≤ v)`.
    pub fn eval(&self, v: f64) -> f64 {
        self.sorted.partition_point(|&s| s <= v) as f64 / self.sorted.len() as f64
    }

    /// `(value, P(V ≤ value))` at every distinct observed value.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.sorted.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
                _ => out.push((v, (i + 1) as f64 / n)),
            }
        }
        out
    }

    /// Fraction of values equal to 1.
    pub fn p_satisfied(&self) -> f64 {
        let below = self.sorted.partition_point(|&s| s < 1.0);
        (self.sorted.len() - below) as f64 / self.sorted.len() as f64
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: String,
    pub phase: Phase,
    pub window_start_slot: u64,
    pub window_slots: u64,
    pub mean_satisfaction: f64,
    pub p_satisfied: f64,
    pub mean_norm_throughput: f64,
    pub mean_utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub scheme: String,
    pub phase: Phase,
    pub slice_id: u32,
    pub mean_norm_throughput: f64,
    pub mean_satisfaction: f64,
    pub p_satisfied: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub scheme: String,
    pub phase: Phase,
    pub value: f64,
    pub cdf: f64,
}

/// Network utility of one slot: total `Σ ln(1 + r)` over cells and slices,
/// and the same divided by the number of (cell, slice) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub scheme: String,
    pub slot: u64,
    pub phase: Phase,
    pub utility_total: f64,
    pub utility_mean: f64,
}

/// Per-slot throughput of one slice, normalized by its requirement and
/// averaged over cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub scheme: String,
    pub slot: u64,
    pub phase: Phase,
    pub slice_id: u32,
    pub norm_throughput: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub summary: Vec<SummaryRow>,
    pub slices: Vec<SliceRow>,
    pub cdfs: Vec<CdfRow>,
    pub utility: Vec<UtilityRow>,
    pub throughput: Vec<ThroughputRow>,
}

impl MetricsTable {
    pub fn summary_for(&self, scheme: &str, phase: Phase) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.scheme == scheme && r.phase == phase)
    }

    pub fn utility_series(&self, scheme: &str) -> Vec<&UtilityRow> {
        self.utility.iter().filter(|r| r.scheme == scheme).collect()
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Aggregates a slot log. Phase statistics use the last
/// `convergence_fraction` of each phase's slots.
pub fn compute_metrics(logs: &[SlotLog], convergence_fraction: f64) -> Result<MetricsTable> {
    if !(convergence_fraction > 0.0 && convergence_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "convergence fraction must lie in (0, 1], got {convergence_fraction}"
        )));
    }
    let mut groups: BTreeMap<(&str, Phase), Vec<&SlotLog>> = BTreeMap::new();
    for r in logs {
        groups.entry((r.scheme.as_str(), r.phase)).or_default().push(r);
    }
    let mut table = MetricsTable::default();
    for ((scheme, phase), rows) in &groups {
        let first = rows.iter().map(|r| r.slot).min().unwrap_or(0);
        let last = rows.iter().map(|r| r.slot).max().unwrap_or(0);
        let span = last - first + 1;
        let window = ((span as f64 * convergence_fraction).ceil() as u64).clamp(1, span);
        let start = last + 1 - window;
        let in_window: Vec<&&SlotLog> = rows.iter().filter(|r| r.slot >= start).collect();
        let sats: Vec<f64> = in_window.iter().map(|r| r.satisfaction).collect();
        let cdf = compute_cdf(&sats)?;

        let mut per_slot: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        let mut per_slot_slice: BTreeMap<(u64, u32), (f64, usize)> = BTreeMap::new();
        for r in rows.iter() {
            let e = per_slot.entry(r.slot).or_insert((0.0, 0));
            e.0 += r.satisfaction.ln_1p();
            e.1 += 1;
            let e = per_slot_slice.entry((r.slot, r.slice_id)).or_insert((0.0, 0));
            e.0 += r.throughput_mbps / r.tput_req;
            e.1 += 1;
        }
        for (&(slot, slice_id), &(total, n)) in &per_slot_slice {
            table.throughput.push(ThroughputRow {
                scheme: scheme.to_string(),
                slot,
                phase: *phase,
                slice_id,
                norm_throughput: total / n as f64,
            });
        }
        for (&slot, &(total, n)) in &per_slot {
            table.utility.push(UtilityRow {
                scheme: scheme.to_string(),
                slot,
                phase: *phase,
                utility_total: total,
                utility_mean: total / n as f64,
            });
        }

        table.summary.push(SummaryRow {
            scheme: scheme.to_string(),
            phase: *phase,
            window_start_slot: start,
            window_slots: window,
            mean_satisfaction: mean(sats.iter().copied()),
            p_satisfied: cdf.p_satisfied(),
            mean_norm_throughput: mean(in_window.iter().map(|r| r.throughput_mbps / r.tput_req)),
            mean_utility: mean(
                per_slot
                    .range(start..)
                    .map(|(_, &(total, n))| total / n as f64),
            ),
        });

        let mut by_slice: BTreeMap<u32, Vec<&SlotLog>> = BTreeMap::new();
        for r in &in_window {
            by_slice.entry(r.slice_id).or_default().push(r);
        }
        for (slice_id, rs) in by_slice {
            let sat: Vec<f64> = rs.iter().map(|r| r.satisfaction).collect();
            table.slices.push(SliceRow {
                scheme: scheme.to_string(),
                phase: *phase,
                slice_id,
                mean_norm_throughput: mean(rs.iter().map(|r| r.throughput_mbps / r.tput_req)),
                mean_satisfaction: mean(sat.iter().copied()),
                p_satisfied: compute_cdf(&sat)?.p_satisfied(),
            });
        }

        for (value, p) in cdf.points() {
            table.cdfs.push(CdfRow {
                scheme: scheme.to_string(),
                phase: *phase,
                value,
                cdf: p,
            });
        }
    }
    Ok(table)
}

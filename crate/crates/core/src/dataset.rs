//! Estimator training sets built from KPI streams.
//!
//! Dataset files are CSV with a version line followed by the columns
//! `x, v_1..v_H, q_1..q_H, tput_req, delay_req, label, provenance, parent,
//! tput_achieved, delay_achieved`. The last three columns keep the parent
//! link used by [`split`] and the achieved QoS used by [`augment`], so a
//! saved dataset round-trips without loss.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{satisfaction, QosOutcome, SliceSpec};
use crate::error::{Error, Result};
use crate::netsim::KpiRecord;

pub const DATASET_FORMAT_VERSION: u32 = 1;
const VERSION_PREFIX: &str = "# netslice-dataset v";

/// Estimator input: resource input `x` plus local features
/// `z = [v_1..v_H, q_1..q_H, tput_req, delay_req]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationVector {
    pub x: f64,
    pub z: Vec<f64>,
}

impl ObservationVector {
    pub fn history_len(&self) -> usize {
        self.z.len().saturating_sub(2) / 2
    }

    pub fn throughput_req(&self) -> f64 {
        self.z[self.z.len() - 2]
    }

    pub fn delay_req(&self) -> f64 {
        self.z[self.z.len() - 1]
    }

    /// Total width `2H + 3`.
    pub fn dim(&self) -> usize {
        self.z.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Raw,
    AugmentedRule1,
    AugmentedRule2,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Raw => "raw",
            Provenance::AugmentedRule1 => "augmented_rule1",
            Provenance::AugmentedRule2 => "augmented_rule2",
        }
    }
}

impl FromStr for Provenance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "raw" => Ok(Provenance::Raw),
            "augmented_rule1" => Ok(Provenance::AugmentedRule1),
            "augmented_rule2" => Ok(Provenance::AugmentedRule2),
            other => Err(format!("unknown provenance `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: ObservationVector,
    /// Satisfaction level in [0, 1].
    pub label: f64,
    pub provenance: Provenance,
    /// Id of the raw sample this one derives from (its own id when raw).
    pub parent: u64,
    /// QoS the slice achieved in the parent's slot.
    pub achieved: QosOutcome,
}

/// Which KPI feeds the resource input `x`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceInput {
    /// The share the slice was allocated.
    #[default]
    Share,
    /// The PRB utilisation ratio the slice actually occupied.
    PrbUtilization,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assembled {
    pub samples: Vec<Sample>,
    /// Records dropped for lack of a contiguous H-step history.
    pub skipped: usize,
}

/// One raw sample per (t, cell, slice) with a full history over
/// [t-H, t-1]; the label is the satisfaction achieved at t.
pub fn assemble_samples(
    stream: &[KpiRecord],
    history_len: usize,
    catalog: &[SliceSpec],
    resource_input: ResourceInput,
) -> Result<Assembled> {
    if history_len == 0 {
        return Err(Error::InvalidArgument("history length must be at least 1".into()));
    }
    let mut series: BTreeMap<(u32, u32), Vec<&KpiRecord>> = BTreeMap::new();
    for r in stream {
        series.entry((r.cell_id, r.slice_id)).or_default().push(r);
    }
    let specs: HashMap<u32, &SliceSpec> = catalog.iter().map(|s| (s.slice_id, s)).collect();

    // Emit in stream order so ids follow time.
    let mut position: HashMap<(u32, u32), usize> = HashMap::new();
    let mut samples = Vec::new();
    let mut skipped = 0;
    for r in stream {
        let key = (r.cell_id, r.slice_id);
        let idx = position.entry(key).or_insert(0);
        let i = *idx;
        *idx += 1;
        let s = &series[&key];
        let contiguous = i >= history_len
            && r.t >= history_len as u64
            && s[i - history_len].t == r.t - history_len as u64;
        if !contiguous {
            skipped += 1;
            continue;
        }
        let spec = specs.get(&r.slice_id).ok_or_else(|| {
            Error::InvalidArgument(format!("slice {} missing from catalog", r.slice_id))
        })?;
        let hist = &s[i - history_len..i];
        let mut z = Vec::with_capacity(2 * history_len + 2);
        z.extend(hist.iter().map(|h| h.active_users));
        z.extend(hist.iter().map(|h| f64::from(h.channel_quality)));
        z.push(spec.throughput_req);
        z.push(spec.delay_req);
        let x = match resource_input {
            ResourceInput::Share => r.share,
            ResourceInput::PrbUtilization => r.prb_utilization,
        };
        let label = satisfaction(r.outcome(), spec)?.value();
        let id = samples.len() as u64;
        samples.push(Sample {
            input: ObservationVector { x, z },
            label,
            provenance: Provenance::Raw,
            parent: id,
            achieved: r.outcome(),
        });
    }
    Ok(Assembled { samples, skipped })
}

/// Keeps every sample and appends one augmented copy per raw sample:
/// rule 1 (r < 1) swaps the requirements for the achieved QoS and sets the
/// label to 1; rule 2 (r = 1) redraws `x` uniformly on [x, 1].
pub fn augment(samples: &[Sample], seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples.len() * 2);
    for s in samples {
        out.push(s.clone());
        if s.provenance != Provenance::Raw {
            continue;
        }
        let mut copy = s.clone();
        copy.label = 1.0;
        if s.label < 1.0 {
            let n = copy.input.z.len();
            copy.input.z[n - 2] = s.achieved.throughput;
            copy.input.z[n - 1] = s.achieved.delay;
            copy.provenance = Provenance::AugmentedRule1;
        } else {
            let x = s.input.x;
            copy.input.x = if x >= 1.0 { x } else { rng.random_range(x..=1.0) };
            copy.provenance = Provenance::AugmentedRule2;
        }
        out.push(copy);
    }
    out
}

/// Seeded shuffle-and-split over parent groups, so augmented copies land on
/// the same side as their raw parent.
pub fn split(samples: &[Sample], train_fraction: f64, seed: u64) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if samples.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let mut groups: BTreeMap<u64, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        groups.entry(s.parent).or_default().push(s);
    }
    let mut order: Vec<u64> = groups.keys().copied().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = (train_fraction * samples.len() as f64).round() as usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for key in order {
        let side = if train.len() < target { &mut train } else { &mut test };
        side.extend(groups[&key].iter().map(|s| (*s).clone()));
    }
    Ok((train, test))
}

fn header(history_len: usize) -> Vec<String> {
    let mut h = vec!["x".to_string()];
    h.extend((1..=history_len).map(|i| format!("v_{i}")));
    h.extend((1..=history_len).map(|i| format!("q_{i}")));
    for c in [
        "tput_req",
        "delay_req",
        "label",
        "provenance",
        "parent",
        "tput_achieved",
        "delay_achieved",
    ] {
        h.push(c.to_string());
    }
    h
}

pub fn save(samples: &[Sample], history_len: usize, path: &Path) -> Result<()> {
    if let Some(s) = samples.iter().find(|s| s.input.history_len() != history_len) {
        return Err(Error::Dimension {
            expected: 2 * history_len + 2,
            actual: s.input.z.len(),
        });
    }
    let mut buf = Vec::new();
    writeln!(buf, "{VERSION_PREFIX}{DATASET_FORMAT_VERSION} history={history_len}")
        .expect("write to vec");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header(history_len))?;
        for s in samples {
            let mut row: Vec<String> = Vec::with_capacity(2 * history_len + 10);
            row.push(s.input.x.to_string());
            row.extend(s.input.z.iter().map(f64::to_string));
            row.push(s.label.to_string());
            row.push(s.provenance.as_str().to_string());
            row.push(s.parent.to_string());
            row.push(s.achieved.throughput.to_string());
            row.push(s.achieved.delay.to_string());
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a dataset file, returning its samples and history length.
pub fn load(path: &Path) -> Result<(Vec<Sample>, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

fn parse(text: &str) -> Result<(Vec<Sample>, usize)> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let bad = |line: u64, reason: String| Error::Parse { line, reason };
    let meta = first
        .trim_end()
        .strip_prefix(VERSION_PREFIX)
        .ok_or_else(|| bad(1, "missing dataset version line".into()))?;
    let (version, hist) = meta
        .split_once(" history=")
        .ok_or_else(|| bad(1, "malformed version line".into()))?;
    let version: u32 = version.parse().map_err(|_| bad(1, "bad version".into()))?;
    if version != DATASET_FORMAT_VERSION {
        return Err(bad(1, format!("unsupported dataset version {version}")));
    }
    let history_len: usize = hist.parse().map_err(|_| bad(1, "bad history length".into()))?;
    let expected = header(history_len);

    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(rest.as_bytes());
    let mut records = rdr.records();
    match records.next() {
        None => return Ok((Vec::new(), history_len)),
        Some(h) => {
            let h = h?;
            if h.iter().ne(expected.iter().map(String::as_str)) {
                return Err(bad(2, "column header does not match the dataset schema".into()));
            }
        }
    }
    let mut out = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line()) + 1;
        if rec.len() != expected.len() {
            return Err(bad(
                line,
                format!("expected {} columns, found {}", expected.len(), rec.len()),
            ));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| bad(line, format!("column `{}` is not a number", expected[i])))
        };
        let x = num(0)?;
        let z = (1..=2 * history_len + 2).map(num).collect::<Result<Vec<_>>>()?;
        let base = 2 * history_len + 3;
        let label = num(base)?;
        if !(0.0..=1.0).contains(&label) {
            return Err(bad(line, format!("label {label} outside [0, 1]")));
        }
        let provenance = rec[base + 1].parse::<Provenance>().map_err(|e| bad(line, e))?;
        let parent = rec[base + 2]
            .parse::<u64>()
            .map_err(|_| bad(line, "parent is not an integer".into()))?;
        out.push(Sample {
            input: ObservationVector { x, z },
            label,
            provenance,
            parent,
            achieved: QosOutcome {
                throughput: num(base + 3)?,
                delay: num(base + 4)?,
            },
        });
    }
    Ok((out, history_len))
}

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

use super::metrics::{MetricsTable, Phase, SlotLog};

/// Writes `rows` as CSV with a header, even when empty.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
    let mut out = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        out.push(row.map_err(|e| Error::Parse {
            line: i as u64 + 2,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_slot_log(logs: &[SlotLog], path: &Path) -> Result<()> {
    write_csv(path, logs)
}

pub fn read_slot_log(path: &Path) -> Result<Vec<SlotLog>> {
    read_csv(path)
}

/// Metrics CSVs written by [`emit_outputs`].
pub const METRICS_FILES: [&str; 5] = [
    "metrics_summary.csv",
    "metrics_slices.csv",
    "cdf.csv",
    "utility.csv",
    "throughput.csv",
];

/// Writes the metrics CSVs and the SVG figures; returns every path written.
pub fn emit_outputs(metrics: &MetricsTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths: Vec<PathBuf> = METRICS_FILES.iter().map(|f| dir.join(f)).collect();
    write_csv(&paths[0], &metrics.summary)?;
    write_csv(&paths[1], &metrics.slices)?;
    write_csv(&paths[2], &metrics.cdfs)?;
    write_csv(&paths[3], &metrics.utility)?;
    write_csv(&paths[4], &metrics.throughput)?;
    let mut written = paths;
    written.extend(emit_plots(metrics, &dir.join("plots"))?);
    Ok(written)
}

/// One throughput-vs-time figure per (scheme, slice) and one CDF figure per
/// scheme. The exploration policy of the collection phase is not plotted.
pub fn emit_plots(metrics: &MetricsTable, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schemes: BTreeSet<&str> = metrics
        .summary
        .iter()
        .filter(|r| r.phase != Phase::H0)
        .map(|r| r.scheme.as_str())
        .collect();
    let slices: BTreeSet<u32> = metrics.throughput.iter().map(|r| r.slice_id).collect();
    let mut written = Vec::new();
    for scheme in &schemes {
        for &slice in &slices {
            let pts: Vec<(f64, f64)> = metrics
                .throughput
                .iter()
                .filter(|r| r.scheme == *scheme && r.slice_id == slice)
                .map(|r| (r.slot as f64, r.norm_throughput))
                .collect();
            let chart = Chart {
                title: format!("{scheme}: slice {slice} throughput / requirement"),
                x_label: "slot".into(),
                y_label: "normalized throughput".into(),
                series: vec![(format!("slice {slice}"), pts)],
                reference: Some(1.0),
                step: false,
            };
            let path = dir.join(format!("{scheme}_slice{slice}_throughput.svg"));
            write_svg(&path, &chart.render())?;
            written.push(path);
        }
        let mut by_phase: BTreeMap<Phase, Vec<(f64, f64)>> = BTreeMap::new();
        for r in metrics.cdfs.iter().filter(|r| r.scheme == *scheme) {
            by_phase.entry(r.phase).or_default().push((r.value, r.cdf));
        }
        let chart = Chart {
            title: format!("{scheme}: converged satisfaction CDF"),
            x_label: "satisfaction".into(),
            y_label: "CDF".into(),
            series: by_phase
                .into_iter()
                .map(|(p, mut pts)| {
                    pts.insert(0, (0.0, 0.0));
                    (p.to_string(), pts)
                })
                .collect(),
            reference: None,
            step: true,
        };
        let path = dir.join(format!("{scheme}_cdf.svg"));
        write_svg(&path, &chart.render())?;
        written.push(path);
    }
    Ok(written)
}

fn write_svg(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 110.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<(String, Vec<(f64, f64)>)>,
    /// Dashed horizontal line.
    reference: Option<f64>,
    /// Draw as a right-continuous staircase.
    step: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self.series.iter().flat_map(|(_, p)| p.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64, 1.0f64);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if x1 <= x0 {
            x1 = x0 + 1.0;
        }
        (x0, x1, y0, y1 * 1.05)
    }

    fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
        );
        for i in 0..=5 {
            let fx = x0 + (x1 - x0) * i as f64 / 5.0;
            let fy = y0 + (y1 - y0) * i as f64 / 5.0;
            let _ = writeln!(
                s,
                r##"<line x1="{0:.1}" y1="{1:.1}" x2="{0:.1}" y2="{2:.1}" stroke="#444"/><text x="{0:.1}" y="{3:.1}" text-anchor="middle">{4}</text>"##,
                sx(fx),
                MARGIN_T + ph,
                MARGIN_T + ph + 5.0,
                MARGIN_T + ph + 18.0,
                tick(fx)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="#444"/><text x="{3:.1}" y="{4:.1}" text-anchor="end">{5}</text>"##,
                MARGIN_L - 5.0,
                sy(fy),
                MARGIN_L,
                MARGIN_L - 8.0,
                sy(fy) + 4.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{0:.1}" text-anchor="middle" transform="rotate(-90 18 {0:.1})">{1}</text>"#,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        if let Some(r) = self.reference {
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{2:.1}" x2="{:.1}" y2="{2:.1}" stroke="#888" stroke-dasharray="6 4"/>"##,
                MARGIN_L,
                MARGIN_L + pw,
                sy(r)
            );
        }
        for (i, (name, pts)) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mut d = String::new();
            let mut prev_y = None;
            for &(x, y) in pts {
                if self.step {
                    if let Some(py) = prev_y {
                        let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(py));
                    }
                    prev_y = Some(y);
                }
                let _ = write!(d, "{:.2},{:.2} ", sx(x), sy(y));
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                d.trim_end()
            );
            let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
            let lx = WIDTH - MARGIN_R + 10.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 20.0,
                lx + 25.0,
                ly + 4.0,
                escape(name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

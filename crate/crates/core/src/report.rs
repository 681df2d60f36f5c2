//! Run reports and their CSV / JSON / plotdata renderings.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::instrument::OpCounts;
use crate::metrics::{self, aggregate, AggregateResult, BandwidthResult, Metric, MetricsError};
use crate::record::{Phase, TimingRecord};

pub const CSV_HEADER: &str = "pattern,mode,backend,object_size_bytes,nodes,workers_per_node,iterations,repetition,phase,metric,bytes_total,wall_seconds,bandwidth_bytes_per_sec";

/// Identifies the configuration a report belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunLabel {
    pub pattern: String,
    pub mode: String,
    pub backend: String,
    pub object_size_bytes: u64,
    pub nodes: u32,
    pub workers_per_node: u32,
    pub iterations: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRelease {
    pub phase: Phase,
    pub release: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerOps {
    pub worker_id: u32,
    pub phase: Phase,
    pub counts: OpCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub label: RunLabel,
    pub repetition: u32,
    pub records: Vec<TimingRecord>,
    pub releases: Vec<PhaseRelease>,
    pub worker_ops: Vec<WorkerOps>,
    pub bandwidths: Vec<BandwidthResult>,
}

impl RunReport {
    pub fn new(label: RunLabel, repetition: u32) -> Self {
        Self {
            label,
            repetition,
            records: Vec::new(),
            releases: Vec::new(),
            worker_ops: Vec::new(),
            bandwidths: Vec::new(),
        }
    }

    pub fn phase_records(&self, phase: Phase) -> Vec<TimingRecord> {
        self.records.iter().filter(|r| r.phase == phase).cloned().collect()
    }

    pub fn release(&self, phase: Phase) -> Option<f64> {
        self.releases.iter().find(|r| r.phase == phase).map(|r| r.release)
    }

    /// (Re)computes both bandwidth metrics for every phase.
    pub fn compute_bandwidths(&mut self) -> Result<(), MetricsError> {
        let releases: Vec<_> = self.releases.iter().map(|r| (r.phase, r.release)).collect();
        self.bandwidths = metrics::phase_bandwidths(&self.records, &releases)?;
        Ok(())
    }

    pub fn bandwidth(&self, phase: Phase, metric: Metric) -> Option<&BandwidthResult> {
        self.bandwidths.iter().find(|b| b.phase == phase && b.metric == metric)
    }

    /// `REC` lines plus one `RELEASE phase=<c> at=<f64>` line per phase, the
    /// input format of replay.
    pub fn record_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.releases {
            out.push_str(&format!("RELEASE phase={} at={}\n", r.phase.code(), r.release));
        }
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }
}

/// All reports as text: a `REPORT rep=<n> <label json>` line followed by the
/// report's [`record_lines`](RunReport::record_lines).
pub fn render_records(reports: &[RunReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let label = serde_json::to_string(&r.label).expect("label serializes");
        out.push_str(&format!("REPORT rep={} {label}\n", r.repetition));
        out.push_str(&r.record_lines());
    }
    out
}

/// Parses [`render_records`] output back into reports, with bandwidths
/// recomputed from the records.
pub fn parse_records(text: &str) -> Result<Vec<RunReport>, String> {
    let mut blocks: Vec<(RunReport, String)> = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("REPORT ") {
            let (rep, label) = rest.split_once(' ').ok_or_else(|| format!("bad REPORT line {line:?}"))?;
            let rep = rep
                .strip_prefix("rep=")
                .and_then(|r| r.parse().ok())
                .ok_or_else(|| format!("bad repetition in {line:?}"))?;
            let label = serde_json::from_str(label).map_err(|e| format!("bad label in {line:?}: {e}"))?;
            blocks.push((RunReport::new(label, rep), String::new()));
        } else if let Some((_, body)) = blocks.last_mut() {
            body.push_str(line);
            body.push('\n');
        } else if !line.trim().is_empty() {
            return Err(format!("{line:?} before the first REPORT line"));
        }
    }
    blocks
        .into_iter()
        .map(|(mut report, body)| {
            let (releases, records) = parse_record_lines(&body)?;
            report.releases = releases;
            report.records = records;
            report.compute_bandwidths().map_err(|e| e.to_string())?;
            Ok(report)
        })
        .collect()
}

/// Parses the output of [`RunReport::record_lines`]. Unknown lines are skipped.
pub fn parse_record_lines(text: &str) -> Result<(Vec<PhaseRelease>, Vec<TimingRecord>), String> {
    let mut releases = Vec::new();
    let mut records = Vec::new();
    for line in text.lines().map(str::trim) {
        if line.starts_with("REC ") {
            records.push(TimingRecord::parse_line(line)?);
        } else if let Some(rest) = line.strip_prefix("RELEASE ") {
            let mut it = rest.split_ascii_whitespace();
            let phase = it
                .next()
                .and_then(|f| f.strip_prefix("phase="))
                .and_then(Phase::from_code)
                .ok_or_else(|| format!("bad RELEASE line {line:?}"))?;
            let release = it
                .next()
                .and_then(|f| f.strip_prefix("at="))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| format!("bad RELEASE line {line:?}"))?;
            releases.push(PhaseRelease { phase, release });
        }
    }
    Ok((releases, records))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub pattern: String,
    pub mode: String,
    pub backend: String,
    pub object_size_bytes: u64,
    pub nodes: u32,
    pub workers_per_node: u32,
    pub iterations: u64,
    pub repetition: u32,
    pub phase: Phase,
    pub metric: Metric,
    pub bytes_total: u64,
    pub wall_seconds: f64,
    pub bandwidth_bytes_per_sec: f64,
}

pub fn csv_rows(reports: &[RunReport]) -> Vec<CsvRow> {
    let mut rows = Vec::new();
    for rep in reports {
        for b in &rep.bandwidths {
            let l = &rep.label;
            rows.push(CsvRow {
                pattern: l.pattern.clone(),
                mode: l.mode.clone(),
                backend: l.backend.clone(),
                object_size_bytes: l.object_size_bytes,
                nodes: l.nodes,
                workers_per_node: l.workers_per_node,
                iterations: l.iterations,
                repetition: rep.repetition,
                phase: b.phase,
                metric: b.metric,
                bytes_total: b.bytes_total,
                wall_seconds: b.wall_seconds,
                bandwidth_bytes_per_sec: b.bandwidth,
            });
        }
    }
    rows
}

pub fn write_csv(rows: &[CsvRow]) -> io::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(io::Error::other)?;
    }
    if rows.is_empty() {
        return Ok(format!("{CSV_HEADER}\n"));
    }
    let bytes = w.into_inner().map_err(|e| io::Error::other(e.to_string()))?;
    String::from_utf8(bytes).map_err(io::Error::other)
}

pub fn parse_csv(text: &str) -> io::Result<Vec<CsvRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(io::Error::other)?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "unexpected CSV header"));
    }
    r.deserialize().collect::<Result<_, _>>().map_err(io::Error::other)
}

/// One plotted line: `x mean min max` points for a
/// (pattern, mode, metric, phase) combination. Values are MiB/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub pattern: String,
    pub mode: String,
    pub metric: Metric,
    pub phase: Phase,
    pub axis: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

type SeriesKey = (String, String, Metric, Phase);

/// Aggregates per-repetition bandwidths of one configuration, keyed by
/// (pattern, mode, metric, phase).
pub fn aggregate_reports(reports: &[RunReport]) -> Result<BTreeMap<SeriesKey, AggregateResult>, MetricsError> {
    let mut values: BTreeMap<SeriesKey, Vec<f64>> = BTreeMap::new();
    for rep in reports {
        for b in &rep.bandwidths {
            values
                .entry((rep.label.pattern.clone(), rep.label.mode.clone(), b.metric, b.phase))
                .or_default()
                .push(b.bandwidth);
        }
    }
    values.into_iter().map(|(k, v)| Ok((k, aggregate(&v)?))).collect()
}

/// Builds series from `(x, reports for that x)` groups.
pub fn build_series(axis: &str, groups: &[(f64, Vec<RunReport>)]) -> Result<Vec<Series>, MetricsError> {
    let mut series: BTreeMap<SeriesKey, Vec<SeriesPoint>> = BTreeMap::new();
    for (x, reports) in groups {
        for (key, agg) in aggregate_reports(reports)? {
            series.entry(key).or_default().push(SeriesPoint {
                x: *x,
                mean: metrics::mib_per_sec(agg.mean),
                min: metrics::mib_per_sec(agg.min),
                max: metrics::mib_per_sec(agg.max),
            });
        }
    }
    Ok(series
        .into_iter()
        .map(|((pattern, mode, metric, phase), mut points)| {
            points.sort_by(|a, b| a.x.total_cmp(&b.x));
            Series {
                pattern,
                mode,
                metric,
                phase,
                axis: axis.to_owned(),
                points,
            }
        })
        .collect())
}

pub fn render_plotdata(series: &[Series]) -> String {
    series
        .iter()
        .map(|s| {
            let mut block = format!(
                "# pattern={} mode={} metric={} phase={} x={} unit=MiB/s\n",
                s.pattern, s.mode, s.metric, s.phase, s.axis
            );
            for p in &s.points {
                block.push_str(&format!("{} {} {} {}\n", p.x, p.mean, p.min, p.max));
            }
            block
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn parse_plotdata(text: &str) -> Result<Vec<Series>, String> {
    let mut out = Vec::new();
    for block in text.split("\n\n").filter(|b| !b.trim().is_empty()) {
        let mut lines = block.lines();
        let header = lines
            .next()
            .and_then(|h| h.strip_prefix("# "))
            .ok_or_else(|| format!("block without header: {block:?}"))?;
        let fields: BTreeMap<&str, &str> = header.split_ascii_whitespace().filter_map(|f| f.split_once('=')).collect();
        let field = |k: &str| fields.get(k).copied().ok_or_else(|| format!("missing {k} in {header:?}"));
        let mut points = Vec::new();
        for line in lines {
            let nums: Vec<f64> = line
                .split_ascii_whitespace()
                .map(|v| v.parse().map_err(|_| format!("bad number in {line:?}")))
                .collect::<Result<_, _>>()?;
            let [x, mean, min, max] = nums[..] else {
                return Err(format!("expected 4 columns in {line:?}"));
            };
            points.push(SeriesPoint { x, mean, min, max });
        }
        out.push(Series {
            pattern: field("pattern")?.to_owned(),
            mode: field("mode")?.to_owned(),
            metric: field("metric")?.parse()?,
            phase: field("phase")?.parse()?,
            axis: field("x")?.to_owned(),
            points,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Plotdata,
}

/// Writes `results.csv`, `results.json` and/or `results.plotdata` into `dir`,
/// plus `records.txt` with the raw timing records.
/// `config` is echoed verbatim into the JSON document and `config.txt`.
pub fn emit(
    dir: &Path,
    reports: &[RunReport],
    series: &[Series],
    config: &[(String, String)],
    formats: &[Format],
) -> io::Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "no results to emit"));
    }
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let echo: String = config.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    let path = dir.join("config.txt");
    fs::write(&path, echo)?;
    written.push(path);
    let path = dir.join("records.txt");
    fs::write(&path, render_records(reports))?;
    written.push(path);
    for format in formats {
        let (name, content) = match format {
            Format::Csv => ("results.csv", write_csv(&csv_rows(reports))?),
            Format::Plotdata => ("results.plotdata", render_plotdata(series)),
            Format::Json => {
                let config: BTreeMap<_, _> = config.iter().cloned().collect();
                let doc = serde_json::json!({
                    "config": config,
                    "reports": reports,
                    "series": series,
                });
                ("results.json", serde_json::to_string_pretty(&doc).map_err(io::Error::other)? + "\n")
            }
        };
        let path = dir.join(name);
        fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}

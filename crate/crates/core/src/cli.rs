//! Command-line front end.
//!
//! Every run option can come from a flat `key = value` file (`--config`),
//! with flags taking precedence. The effective settings are echoed into
//! `config.txt` and `results.json` in the output directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::fieldio::FieldioMode;
use crate::harness::config::{format_size, parse_size, BackendKind, BenchmarkConfig, Launcher, Pattern};
use crate::harness::{run_pattern, worker, HarnessError};
use crate::report::{self, build_series, Format, RunReport, Series};
use crate::segments::{self, SegmentsConfig};
use crate::sweep::{run_sweep, SweepAxis, SweepPlan};
use crate::verify::{run_verify, VerifyOptions};

pub const ROOT_ENV: &str = "FIELDSTORE_ROOT";

#[derive(Debug, Parser)]
#[command(name = "fieldstore", version, about = "Field I/O and segments benchmarks over an object-store API")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run access pattern A or B with fieldio workers.
    Fieldio(FieldioArgs),
    /// Run the segments-mode bulk benchmark.
    Segments(SegmentsArgs),
    /// Repeat a fieldio run over several values of one parameter.
    Sweep(SweepArgs),
    /// Differential fuzz, layout, op-count and integrity checks.
    Verify(VerifyArgs),
    /// Recompute metrics and outputs from a records.txt file.
    Replay(ReplayArgs),
    #[command(hide = true)]
    Worker {
        #[arg(long)]
        task: String,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// key = value file with defaults for any of the flags
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// posix or memory
    #[arg(long)]
    backend: Option<String>,
    /// Store root for the posix backend (default: $FIELDSTORE_ROOT)
    #[arg(long, value_name = "PATH")]
    root: Option<String>,
    #[arg(long)]
    reps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// auto, threads or processes (auto: processes for posix)
    #[arg(long)]
    launcher: Option<String>,
    /// Seconds to wait for all workers at a barrier
    #[arg(long, value_name = "SECS")]
    barrier_timeout: Option<String>,
    /// Keep the last repetition's data in the store
    #[arg(long)]
    keep: bool,
    /// Comma-separated subset of csv,json,plotdata
    #[arg(long)]
    format: Option<String>,
}

#[derive(Debug, Args)]
struct Shape {
    /// a or b
    #[arg(long)]
    pattern: Option<String>,
    /// full or no-containers
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    nodes: Option<String>,
    #[arg(long)]
    workers_per_node: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    /// e.g. 1MiB
    #[arg(long, value_name = "SIZE")]
    object_size: Option<String>,
}

#[derive(Debug, Args)]
struct FieldioArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    shape: Shape,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    shape: Shape,
    /// object-size, workers or nodes
    #[arg(long)]
    axis: Option<String>,
    /// Comma-separated axis values
    #[arg(long)]
    values: Option<String>,
    /// Keep only the best workers-per-node count per point
    #[arg(long)]
    best_of: bool,
    /// Workers-per-node candidates for --best-of on other axes
    #[arg(long)]
    candidates: Option<String>,
}

#[derive(Debug, Args)]
struct SegmentsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    segment_count: Option<String>,
    #[arg(long, value_name = "SIZE")]
    segment_size: Option<String>,
    #[arg(long)]
    workers: Option<String>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Directory to check and to use for scratch data (default: $FIELDSTORE_ROOT or the temp dir)
    #[arg(long, value_name = "PATH")]
    root: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    ops: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// records.txt written by an earlier run
    #[arg(long, value_name = "FILE")]
    records: PathBuf,
    #[arg(long, value_name = "DIR", default_value = "results")]
    out: PathBuf,
    #[arg(long)]
    format: Option<String>,
}

/// Bad flags, config files or configurations. Exit code 2.
#[derive(Debug)]
struct Usage(String);

enum Failure {
    Usage(String),
    Run(String),
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Config(c) => Failure::Usage(c.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

const COMMON_KEYS: &[&str] = &[
    "backend",
    "root",
    "reps",
    "seed",
    "out",
    "launcher",
    "barrier-timeout",
    "keep",
    "format",
];
const SHAPE_KEYS: &[&str] = &["pattern", "mode", "nodes", "workers-per-node", "iterations", "object-size"];
const SWEEP_KEYS: &[&str] = &["axis", "values", "best-of", "candidates"];
const SEGMENT_KEYS: &[&str] = &["segment-count", "segment-size", "workers"];

/// Effective settings: defaults, then `$FIELDSTORE_ROOT`, then the config
/// file, then flags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Settings(BTreeMap<String, String>);

impl Settings {
    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn require(&self, key: &str) -> Result<&str, Usage> {
        self.get(key).ok_or_else(|| Usage(format!("{key} is not set")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, Usage>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.require(key)?;
        v.parse().map_err(|e| Usage(format!("invalid {key} {v:?}: {e}")))
    }

    fn size(&self, key: &str) -> Result<u64, Usage> {
        parse_size(self.require(key)?).map_err(|e| Usage(format!("{key}: {e}")))
    }

    fn flag(&self, key: &str) -> Result<bool, Usage> {
        match self.get(key) {
            None | Some("false") | Some("no") | Some("0") => Ok(false),
            Some("true") | Some("yes") | Some("1") => Ok(true),
            Some(v) => Err(Usage(format!("invalid {key} {v:?} (expected true or false)"))),
        }
    }

    pub fn pairs(&self) -> Vec<(String, String)> {
        self.0.iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }
}

/// Parses a `key = value` config file. Blank lines and `#` comments are
/// ignored; keys use the long flag names.
pub fn parse_config_file(text: &str, allowed: &[&str]) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        let k = k.trim().replace('_', "-");
        if !allowed.contains(&k.as_str()) {
            return Err(format!("line {}: unknown setting {k:?}", n + 1));
        }
        out.push((k, v.trim().to_owned()));
    }
    Ok(out)
}

fn merge(
    defaults: &[(&str, &str)],
    file: Option<&Path>,
    allowed: &[&str],
    flags: Vec<(&str, Option<String>)>,
) -> Result<Settings, Usage> {
    let mut map: BTreeMap<String, String> = defaults.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    if allowed.contains(&"root") {
        if let Some(root) = std::env::var_os(ROOT_ENV).filter(|r| !r.is_empty()) {
            map.insert("root".into(), root.to_string_lossy().into_owned());
        }
    }
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Usage(format!("config file {}: {e}", path.display())))?;
        let pairs = parse_config_file(&text, allowed).map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        map.extend(pairs);
    }
    for (k, v) in flags {
        if let Some(v) = v {
            map.insert(k.to_owned(), v);
        }
    }
    Ok(Settings(map))
}

fn common_flags(c: &Common) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("backend", c.backend.clone()),
        ("root", c.root.clone()),
        ("reps", c.reps.clone()),
        ("seed", c.seed.clone()),
        ("out", c.out.clone()),
        ("launcher", c.launcher.clone()),
        ("barrier-timeout", c.barrier_timeout.clone()),
        ("keep", c.keep.then(|| "true".to_owned())),
        ("format", c.format.clone()),
    ]
}

fn shape_flags(s: &Shape) -> Vec<(&'static str, Option<String>)> {
    vec![
        ("pattern", s.pattern.clone()),
        ("mode", s.mode.clone()),
        ("nodes", s.nodes.clone()),
        ("workers-per-node", s.workers_per_node.clone()),
        ("iterations", s.iterations.clone()),
        ("object-size", s.object_size.clone()),
    ]
}

const COMMON_DEFAULTS: &[(&str, &str)] = &[
    ("backend", "posix"),
    ("reps", "5"),
    ("seed", "0"),
    ("out", "results"),
    ("launcher", "auto"),
    ("barrier-timeout", "60"),
    ("keep", "false"),
    ("format", "csv,json,plotdata"),
];

const SHAPE_DEFAULTS: &[(&str, &str)] = &[
    ("pattern", "a"),
    ("mode", "full"),
    ("nodes", "2"),
    ("workers-per-node", "24"),
    ("iterations", "2000"),
    ("object-size", "1MiB"),
];

fn launcher(s: &Settings, backend: BackendKind) -> Result<Launcher, Usage> {
    let processes = || {
        std::env::current_exe()
            .map(|exe| Launcher::Processes { exe })
            .map_err(|e| Usage(format!("cannot locate own executable for process workers: {e}")))
    };
    match s.require("launcher")? {
        "threads" => Ok(Launcher::Threads),
        "processes" => processes(),
        "auto" if backend == BackendKind::Posix => processes(),
        "auto" => Ok(Launcher::Threads),
        other => Err(Usage(format!("invalid launcher {other:?} (expected auto, threads or processes)"))),
    }
}

fn formats(s: &Settings) -> Result<Vec<Format>, Usage> {
    s.require("format")?
        .split(',')
        .map(|f| match f.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "plotdata" => Ok(Format::Plotdata),
            other => Err(Usage(format!("unknown format {other:?}"))),
        })
        .collect()
}

fn benchmark_config(s: &Settings) -> Result<BenchmarkConfig, Usage> {
    let backend: BackendKind = s.parse("backend")?;
    let config = BenchmarkConfig {
        pattern: s.parse::<Pattern>("pattern")?,
        mode: s.parse::<FieldioMode>("mode")?,
        backend,
        root: s.get("root").map(PathBuf::from),
        nodes: s.parse("nodes")?,
        workers_per_node: s.parse("workers-per-node")?,
        iterations: s.parse("iterations")?,
        object_size: s.size("object-size")?,
        repetitions: s.parse("reps")?,
        seed: s.parse("seed")?,
        launcher: launcher(s, backend)?,
        barrier_timeout: Duration::from_secs(s.parse("barrier-timeout")?),
        keep_data: s.flag("keep")?,
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(config)
}

fn print_summary(reports: &[RunReport]) {
    let mut groups: BTreeMap<String, Vec<RunReport>> = BTreeMap::new();
    for r in reports {
        let l = &r.label;
        let key = format!(
            "pattern={} mode={} backend={} object-size={} nodes={} workers-per-node={}",
            l.pattern,
            l.mode,
            l.backend,
            format_size(l.object_size_bytes),
            l.nodes,
            l.workers_per_node
        );
        groups.entry(key).or_default().push(r.clone());
    }
    for (key, reps) in groups {
        println!("{key} ({} repetitions)", reps.len());
        if let Ok(aggs) = report::aggregate_reports(&reps) {
            for ((_, _, metric, phase), agg) in aggs {
                println!(
                    "  {:8} {:13} mean {:10.1} MiB/s  min {:10.1}  max {:10.1}",
                    phase.as_str(),
                    metric.as_str(),
                    crate::metrics::mib_per_sec(agg.mean),
                    crate::metrics::mib_per_sec(agg.min),
                    crate::metrics::mib_per_sec(agg.max)
                );
            }
        }
    }
}

fn write_outputs(s: &Settings, reports: &[RunReport], series: &[Series]) -> Result<(), Failure> {
    let out = PathBuf::from(s.require("out")?);
    let files = report::emit(&out, reports, series, &s.pairs(), &formats(s)?)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn single_point_series(reports: &[RunReport]) -> Result<Vec<Series>, Failure> {
    let mut by_nodes: BTreeMap<u32, Vec<RunReport>> = BTreeMap::new();
    for r in reports {
        by_nodes.entry(r.label.nodes).or_default().push(r.clone());
    }
    let groups: Vec<(f64, Vec<RunReport>)> = by_nodes.into_iter().map(|(n, r)| (f64::from(n), r)).collect();
    build_series("nodes", &groups).map_err(|e| Failure::Run(e.to_string()))
}

fn cmd_fieldio(args: FieldioArgs) -> Result<(), Failure> {
    let allowed: Vec<&str> = [COMMON_KEYS, SHAPE_KEYS].concat();
    let mut flags = common_flags(&args.common);
    flags.extend(shape_flags(&args.shape));
    let defaults = [COMMON_DEFAULTS, SHAPE_DEFAULTS].concat();
    let s = merge(&defaults, args.common.config.as_deref(), &allowed, flags)?;
    formats(&s)?;
    let config = benchmark_config(&s)?;
    let reports = run_pattern(&config)?;
    print_summary(&reports);
    write_outputs(&s, &reports, &single_point_series(&reports)?)
}

fn parse_list<T>(text: &str, one: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, Usage> {
    text.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| one(v).map_err(Usage))
        .collect()
}

fn cmd_sweep(args: SweepArgs) -> Result<(), Failure> {
    let allowed: Vec<&str> = [COMMON_KEYS, SHAPE_KEYS, SWEEP_KEYS].concat();
    let mut flags = common_flags(&args.common);
    flags.extend(shape_flags(&args.shape));
    flags.push(("axis", args.axis.clone()));
    flags.push(("values", args.values.clone()));
    flags.push(("best-of", args.best_of.then(|| "true".to_owned())));
    flags.push(("candidates", args.candidates.clone()));
    let defaults = [COMMON_DEFAULTS, SHAPE_DEFAULTS, &[("best-of", "false")]].concat();
    let s = merge(&defaults, args.common.config.as_deref(), &allowed, flags)?;
    formats(&s)?;
    let axis: SweepAxis = s.parse("axis")?;
    let values = match axis {
        SweepAxis::ObjectSize => parse_list(s.require("values")?, parse_size)?,
        _ => parse_list(s.require("values")?, |v| v.parse::<u64>().map_err(|e| format!("{v:?}: {e}")))?,
    };
    if values.is_empty() {
        return Err(Failure::Usage("--values must list at least one value".into()));
    }
    let candidates = match s.get("candidates") {
        Some(c) => parse_list(c, |v| v.parse::<u32>().map_err(|e| format!("{v:?}: {e}")))?,
        None => Vec::new(),
    };
    let plan = SweepPlan {
        axis,
        values,
        best_of: s.flag("best-of")?,
        candidates,
    };
    let config = benchmark_config(&s)?;
    let outcome = run_sweep(&config, &plan)?;
    print_summary(&outcome.reports);
    for (metric, phase, x, workers) in &outcome.chosen {
        if plan.best_of {
            println!("best of: {phase} {metric} at {x}: {workers} workers per node");
        }
    }
    write_outputs(&s, &outcome.reports, &outcome.series)
}

fn cmd_segments(args: SegmentsArgs) -> Result<(), Failure> {
    let allowed: Vec<&str> = [COMMON_KEYS, SEGMENT_KEYS].concat();
    let mut flags = common_flags(&args.common);
    flags.push(("segment-count", args.segment_count.clone()));
    flags.push(("segment-size", args.segment_size.clone()));
    flags.push(("workers", args.workers.clone()));
    let defaults = [
        COMMON_DEFAULTS,
        &[("segment-count", "100"), ("segment-size", "1MiB"), ("workers", "2")],
    ]
    .concat();
    let s = merge(&defaults, args.common.config.as_deref(), &allowed, flags)?;
    formats(&s)?;
    let backend: BackendKind = s.parse("backend")?;
    let config = SegmentsConfig {
        segment_count: s.parse("segment-count")?,
        segment_size: s.size("segment-size")?,
        workers: s.parse("workers")?,
        repetitions: s.parse("reps")?,
        backend,
        root: s.get("root").map(PathBuf::from),
        seed: s.parse("seed")?,
        launcher: launcher(&s, backend)?,
        barrier_timeout: Duration::from_secs(s.parse("barrier-timeout")?),
        keep_data: s.flag("keep")?,
    };
    config.validate().map_err(|e| Usage(e.to_string()))?;
    let reports = segments::run_segments(&config)?;
    for r in &reports {
        segments::audit_single_array_op(r).map_err(Failure::Run)?;
    }
    println!(
        "object size {} bytes ({} × {})",
        config.object_size().unwrap_or(0),
        config.segment_count,
        format_size(config.segment_size)
    );
    print_summary(&reports);
    write_outputs(&s, &reports, &single_point_series(&reports)?)
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let root = args
        .root
        .or_else(|| std::env::var_os(ROOT_ENV).filter(|r| !r.is_empty()).map(PathBuf::from))
        .unwrap_or_else(std::env::temp_dir);
    if !root.is_dir() {
        return Err(Failure::Usage(format!("root {} is not a directory", root.display())));
    }
    let checks = run_verify(&VerifyOptions {
        root,
        ops: args.ops,
        seed: args.seed,
    })?;
    for c in &checks {
        println!("{c}");
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Run(format!("failed checks: {}", failed.join(", "))))
    }
}

fn cmd_replay(args: ReplayArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.records)
        .map_err(|e| Failure::Usage(format!("{}: {e}", args.records.display())))?;
    let reports = report::parse_records(&text).map_err(|e| Failure::Usage(format!("{}: {e}", args.records.display())))?;
    if reports.is_empty() {
        return Err(Failure::Usage(format!("{} holds no reports", args.records.display())));
    }
    let mut s = Settings::default();
    s.0.insert("records".into(), args.records.display().to_string());
    s.0.insert("out".into(), args.out.display().to_string());
    s.0.insert("format".into(), args.format.unwrap_or_else(|| "csv,json,plotdata".into()));
    print_summary(&reports);
    write_outputs(&s, &reports, &single_point_series(&reports)?)
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Worker { task } => return worker::process_main(&task),
        Command::Fieldio(a) => cmd_fieldio(a),
        Command::Segments(a) => cmd_segments(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Replay(a) => cmd_replay(a),
    };
    match result {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("fieldstore: {msg}");
            2
        }
        Err(Failure::Run(msg)) => {
            eprintln!("fieldstore: {msg}");
            1
        }
    }
}

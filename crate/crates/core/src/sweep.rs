//! Parameter sweeps over one configuration axis, with optional best-of
//! selection across worker counts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::harness::config::{BenchmarkConfig, ConfigInvalid, MIB};
use crate::harness::{run_pattern, HarnessError};
use crate::metrics::{self, best_of, AggregateResult, Candidate, Metric};
use crate::record::Phase;
use crate::report::{aggregate_reports, RunReport, Series, SeriesPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    ObjectSize,
    Workers,
    Nodes,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::ObjectSize => "object-size",
            SweepAxis::Workers => "workers",
            SweepAxis::Nodes => "nodes",
        }
    }

    /// Label of the x column in plotdata.
    pub fn x_label(self) -> &'static str {
        match self {
            SweepAxis::ObjectSize => "object_size_mib",
            SweepAxis::Workers => "workers_per_node",
            SweepAxis::Nodes => "nodes",
        }
    }

    fn apply(self, config: &mut BenchmarkConfig, value: u64) -> Result<(), ConfigInvalid> {
        let small = |v: u64| u32::try_from(v).map_err(|_| ConfigInvalid(format!("{v} is too large for {self}")));
        match self {
            SweepAxis::ObjectSize => config.object_size = value,
            SweepAxis::Workers => config.workers_per_node = small(value)?,
            SweepAxis::Nodes => config.nodes = small(value)?,
        }
        Ok(())
    }

    fn x(self, value: u64) -> f64 {
        match self {
            SweepAxis::ObjectSize => value as f64 / MIB as f64,
            _ => value as f64,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "object-size" | "object_size" => Ok(SweepAxis::ObjectSize),
            "workers" | "workers-per-node" => Ok(SweepAxis::Workers),
            "nodes" => Ok(SweepAxis::Nodes),
            other => Err(format!("unknown sweep axis {other:?} (expected object-size, workers or nodes)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub axis: SweepAxis,
    pub values: Vec<u64>,
    /// Pick the best workers-per-node count at every point.
    pub best_of: bool,
    /// Worker counts to try with `best_of`. On the workers axis the values
    /// themselves are the candidates and collapse into a single point.
    pub candidates: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub series: Vec<Series>,
    pub reports: Vec<RunReport>,
    /// Chosen workers-per-node per (metric, phase) and point.
    pub chosen: Vec<(Metric, Phase, f64, u32)>,
}

type Key = (String, String, Metric, Phase);

/// Runs `base` once per sweep value (and candidate) and assembles one
/// series per (pattern, mode, metric, phase).
pub fn run_sweep(base: &BenchmarkConfig, plan: &SweepPlan) -> Result<SweepOutcome, HarnessError> {
    run_sweep_with(base, plan, run_pattern)
}

/// Like [`run_sweep`] with a custom runner, which lets callers supply their
/// own store.
pub fn run_sweep_with(
    base: &BenchmarkConfig,
    plan: &SweepPlan,
    mut run: impl FnMut(&BenchmarkConfig) -> Result<Vec<RunReport>, HarnessError>,
) -> Result<SweepOutcome, HarnessError> {
    if plan.values.is_empty() {
        return Err(ConfigInvalid("the sweep needs at least one value".into()).into());
    }
    let (anchors, candidates): (Vec<(f64, Option<u64>)>, Vec<Option<u32>>) = match (plan.best_of, plan.axis) {
        (true, SweepAxis::Workers) => {
            let cands = plan
                .values
                .iter()
                .map(|&v| u32::try_from(v).map(Some).map_err(|_| ConfigInvalid(format!("bad worker count {v}"))))
                .collect::<Result<_, _>>()?;
            (vec![(f64::from(base.nodes), None)], cands)
        }
        (true, _) if plan.candidates.is_empty() => {
            return Err(ConfigInvalid("best-of needs worker-count candidates".into()).into());
        }
        (true, axis) => (
            plan.values.iter().map(|&v| (axis.x(v), Some(v))).collect(),
            plan.candidates.iter().map(|&c| Some(c)).collect(),
        ),
        (false, axis) => (plan.values.iter().map(|&v| (axis.x(v), Some(v))).collect(), vec![None]),
    };

    let mut reports = Vec::new();
    let mut results: BTreeMap<Key, Vec<(usize, u32, AggregateResult)>> = BTreeMap::new();
    for (point, &(_, value)) in anchors.iter().enumerate() {
        for &candidate in &candidates {
            let mut config = base.clone();
            if let Some(v) = value {
                plan.axis.apply(&mut config, v)?;
            }
            if let Some(w) = candidate {
                config.workers_per_node = w;
            }
            config.validate()?;
            let run = run(&config)?;
            for (key, agg) in aggregate_reports(&run)? {
                results.entry(key).or_default().push((point, config.workers_per_node, agg));
            }
            reports.extend(run);
        }
    }

    let mut series = Vec::new();
    let mut chosen = Vec::new();
    for ((pattern, mode, metric, phase), entries) in results {
        let cands: Vec<Candidate> = entries
            .iter()
            .map(|(p, w, agg)| Candidate {
                point: *p as u64,
                workers: *w,
                mean: agg.mean,
            })
            .collect();
        let mut points = Vec::new();
        for best in best_of(&cands)? {
            let (_, _, agg) = entries
                .iter()
                .find(|(p, w, _)| *p as u64 == best.point && *w == best.workers)
                .expect("selected candidate exists");
            let x = anchors[best.point as usize].0;
            chosen.push((metric, phase, x, best.workers));
            points.push(SeriesPoint {
                x,
                mean: metrics::mib_per_sec(agg.mean),
                min: metrics::mib_per_sec(agg.min),
                max: metrics::mib_per_sec(agg.max),
            });
        }
        points.sort_by(|a, b| a.x.total_cmp(&b.x));
        let axis = if plan.best_of && plan.axis == SweepAxis::Workers {
            SweepAxis::Nodes.x_label()
        } else {
            plan.axis.x_label()
        };
        series.push(Series {
            pattern,
            mode,
            metric,
            phase,
            axis: axis.to_owned(),
            points,
        });
    }
    Ok(SweepOutcome {
        series,
        reports,
        chosen,
    })
}

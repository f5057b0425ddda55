//! Stream benchmarks: dataset ingestion, one shared session across task
//! segments, an in-process vanilla baseline, and JSON/CSV reports.

mod ingest;
mod metrics;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use ingest::{apply_template, build_request, ingest_jsonl, RequestDefaults};
pub use metrics::{expected_speedup, MetricsReport, StageShares};

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::session::{generate_vanilla, DecodeMode, GenerationRequest, PhaseEvent, Session, SessionTrace, SwiftConfig};

fn default_template() -> String {
    "{prompt}".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub dataset: PathBuf,
    /// First `instances` records; all of them when absent.
    #[serde(default)]
    pub instances: Option<usize>,
    #[serde(default = "default_template")]
    pub template: String,
}

/// Ordered task segments concatenated into one input stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub segments: Vec<Segment>,
}

impl StreamSpec {
    /// Reads YAML; relative dataset paths resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec: StreamSpec =
            serde_yaml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for seg in &mut spec.segments {
            if seg.dataset.is_relative() {
                seg.dataset = base.join(&seg.dataset);
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("stream needs at least one segment".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub swift: SwiftConfig,
    pub requests: RequestDefaults,
    /// Also decode every request with the plain target for wall-clock speedup.
    pub vanilla_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub dataset: PathBuf,
    pub instances: usize,
    pub metrics: MetricsReport,
    pub events: Vec<PhaseEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub global: MetricsReport,
    pub segments: Vec<SegmentReport>,
    /// Greedy runs with a baseline: every output equals the vanilla output.
    pub matches_vanilla: Option<bool>,
    pub final_skip_ratio: f64,
    /// Generated tokens per request, in stream order.
    pub outputs: Vec<Vec<u32>>,
    pub trace: SessionTrace,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Long-form CSV with a header, one row per verify call.
    pub fn write_csv(&self, out: impl std::io::Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        let segment_of = |instance: usize| {
            let mut start = 0;
            for (i, seg) in self.segments.iter().enumerate() {
                if instance < start + seg.instances {
                    return i;
                }
                start += seg.instances;
            }
            self.segments.len().saturating_sub(1)
        };
        for rec in &self.trace.records {
            w.write_record([
                segment_of(rec.instance).to_string(),
                rec.instance.to_string(),
                serde_json::to_value(rec.phase)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                rec.mask.clone(),
                rec.skip_ratio.to_string(),
                rec.spine_len.to_string(),
                rec.accepted_drafts.to_string(),
                rec.emitted.to_string(),
                rec.draft_ns.to_string(),
                rec.verify_ns.to_string(),
                rec.optimize_ns.to_string(),
                rec.matchness.map(|m| m.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Dataset(e.to_string()))
    }
}

pub const CSV_HEADER: [&str; 12] = [
    "segment",
    "instance",
    "phase",
    "mask",
    "skip_ratio",
    "spine_len",
    "accepted_drafts",
    "emitted",
    "draft_ns",
    "verify_ns",
    "optimize_ns",
    "matchness",
];

fn csv_err(e: csv::Error) -> Error {
    Error::Dataset(e.to_string())
}

pub fn save_csv(report: &BenchReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    report.write_csv(file)
}

/// Loads each segment's requests in stream order.
pub fn load_stream(
    bundle: &ModelBundle,
    stream: &StreamSpec,
    defaults: &RequestDefaults,
) -> Result<Vec<(PathBuf, Vec<GenerationRequest>)>> {
    stream.validate()?;
    stream
        .segments
        .iter()
        .map(|seg| {
            let mut reqs = ingest_jsonl(&seg.dataset, &seg.template, &bundle.tokenizer, defaults)?;
            if let Some(n) = seg.instances {
                if reqs.len() < n {
                    return Err(Error::Dataset(format!(
                        "{} has {} records, segment wants {n}",
                        seg.dataset.display(),
                        reqs.len()
                    )));
                }
                reqs.truncate(n);
            }
            Ok((seg.dataset.clone(), reqs))
        })
        .collect()
}

/// Runs pre-built request segments through one session.
pub fn run_segments(
    bundle: &ModelBundle,
    segments: &[(PathBuf, Vec<GenerationRequest>)],
    config: &BenchConfig,
) -> Result<BenchReport> {
    let mut session = Session::new(bundle, config.swift.clone())?;
    let mut outputs = Vec::new();
    let mut seg_ns = Vec::new();
    for (_, reqs) in segments {
        let t = Instant::now();
        for req in reqs {
            outputs.push(session.run(req)?.tokens);
        }
        seg_ns.push(t.elapsed().as_nanos() as u64);
    }

    let mut vanilla_ns = Vec::new();
    let mut matches = true;
    if config.vanilla_baseline {
        let mut i = 0;
        for (_, reqs) in segments {
            let t = Instant::now();
            for req in reqs {
                let v = generate_vanilla(bundle, req)?;
                matches &= v.tokens == outputs[i];
                i += 1;
            }
            vanilla_ns.push(t.elapsed().as_nanos() as u64);
        }
    }

    let trace = session.trace().clone();
    let mut reports = Vec::new();
    let mut first = 0;
    for (k, (dataset, reqs)) in segments.iter().enumerate() {
        let range = first..first + reqs.len();
        let mut metrics = MetricsReport::from_records(
            trace.records.iter().filter(|r| range.contains(&r.instance)),
            seg_ns[k],
        );
        if let Some(&v) = vanilla_ns.get(k) {
            metrics = metrics.with_vanilla(v);
        }
        reports.push(SegmentReport {
            dataset: dataset.clone(),
            instances: reqs.len(),
            metrics,
            events: trace.events.iter().filter(|e| range.contains(&e.instance)).cloned().collect(),
        });
        first = range.end;
    }
    let mut global = MetricsReport::from_records(&trace.records, seg_ns.iter().sum());
    if config.vanilla_baseline {
        global = global.with_vanilla(vanilla_ns.iter().sum());
    }
    let greedy = segments.iter().flat_map(|(_, r)| r).all(|r| r.mode == DecodeMode::Greedy);
    Ok(BenchReport {
        global,
        segments: reports,
        matches_vanilla: (config.vanilla_baseline && greedy).then_some(matches),
        final_skip_ratio: session.state().skip_ratio(),
        outputs,
        trace,
    })
}

pub fn run_benchmark(bundle: &ModelBundle, stream: &StreamSpec, config: &BenchConfig) -> Result<BenchReport> {
    let segments = load_stream(bundle, stream, &config.requests)?;
    run_segments(bundle, &segments, config)
}

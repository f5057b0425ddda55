mod common;

use std::fs;
use std::path::PathBuf;

use common::*;
use swift_core::bench::{ingest_jsonl, run_benchmark, BenchConfig, MetricsReport, RequestDefaults, StreamSpec, CSV_HEADER};
use swift_core::model::Tokenizer;
use swift_core::optimizer::OptimizerConfig;
use swift_core::session::SwiftConfig;
use swift_core::Error;

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn ingest_keeps_order_and_applies_template() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "d.jsonl", "{\"prompt\":\"a\"}\n\n{\"prompt\":\"bc\",\"id\":2}\n{\"prompt\":\"d\"}\n");
    let tok = Tokenizer::default_for_vocab(260);
    let defaults = RequestDefaults::default();
    let reqs = ingest_jsonl(&path, "<{prompt}>", &tok, &defaults).unwrap();
    let texts: Vec<String> = reqs.iter().map(|r| tok.decode(&r.prompt[1..])).collect();
    assert_eq!(texts, ["<a>", "<bc>", "<d>"]);
    assert_eq!(reqs.iter().map(|r| r.seed).collect::<Vec<_>>(), [0, 1, 2]);
    assert!(reqs.iter().all(|r| r.prompt[0] == tok.bos()));
}

#[test]
fn ingest_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let tok = Tokenizer::default_for_vocab(260);
    let d = RequestDefaults::default();
    let empty = write(&dir, "empty.jsonl", "");
    assert!(ingest_jsonl(&empty, "{prompt}", &tok, &d).unwrap().is_empty());
    let missing = write(&dir, "m.jsonl", "{\"prompt\":\"ok\"}\n{\"text\":\"no\"}\n");
    match ingest_jsonl(&missing, "{prompt}", &tok, &d) {
        Err(Error::MalformedRecord { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let garbage = write(&dir, "g.jsonl", "not json\n");
    assert!(matches!(ingest_jsonl(&garbage, "{prompt}", &tok, &d), Err(Error::MalformedRecord { line: 1, .. })));
}

fn stream(dir: &tempfile::TempDir) -> PathBuf {
    let lower: String = LOWER_PROMPTS.iter().map(|p| format!("{{\"prompt\":\"{p}\"}}\n")).collect();
    let upper: String = UPPER_PROMPTS.iter().map(|p| format!("{{\"prompt\":\"{p}\"}}\n")).collect();
    write(dir, "lower.jsonl", &lower);
    write(dir, "upper.jsonl", &upper);
    write(
        dir,
        "stream.yaml",
        "segments:\n  - dataset: lower.jsonl\n    instances: 3\n  - dataset: upper.jsonl\n    template: \"Q: {prompt}\"\n",
    )
}

#[test]
fn benchmark_matches_vanilla_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let spec = StreamSpec::load(stream(&dir)).unwrap();
    let config = BenchConfig {
        swift: SwiftConfig {
            optimizer: OptimizerConfig {
                skip_ratio: 0.5,
                gamma: 16,
                ..OptimizerConfig::default()
            },
            ..SwiftConfig::default()
        },
        requests: RequestDefaults {
            max_new_tokens: 48,
            ..RequestDefaults::default()
        },
        vanilla_baseline: true,
    };
    let report = run_benchmark(&gated_model(), &spec, &config).unwrap();
    assert_eq!(report.matches_vanilla, Some(true));
    assert_eq!(report.outputs.len(), 6);
    assert_eq!(report.segments.iter().map(|s| s.instances).collect::<Vec<_>>(), [3, 3]);
    let replay = MetricsReport::from_records(&report.trace.records, report.global.total_ns);
    assert_eq!(replay.m, report.global.m);
    assert_eq!(replay.alpha, report.global.alpha);
    assert_eq!(replay.emitted, 6 * 48);

    let mut csv = Vec::new();
    report.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(text.lines().count(), 1 + report.trace.records.len());
    let back: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(back["segments"].as_array().unwrap().len(), 2);
}

#[test]
fn short_dataset_is_a_dataset_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir, "one.jsonl", "{\"prompt\":\"x\"}\n");
    let yaml = write(&dir, "s.yaml", "segments:\n  - dataset: one.jsonl\n    instances: 2\n");
    let spec = StreamSpec::load(yaml).unwrap();
    let err = run_benchmark(&gated_model(), &spec, &BenchConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Dataset(_)));
    let empty = write(&dir, "e.yaml", "segments: []\n");
    assert!(matches!(StreamSpec::load(empty), Err(Error::Config(_))));
}

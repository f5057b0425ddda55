use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use swift_core::bench::{build_request, ingest_jsonl, run_segments, save_csv, BenchConfig, BenchReport, RequestDefaults, StreamSpec};
use swift_core::error::ErrorKind;
use swift_core::model::{load_bundle, make_synthetic_model, save_bundle, ArchConfig};
use swift_core::session::{DecodeMode, SwiftConfig};
use swift_core::transformer::LayerMask;
use swift_core::{Error, Result};

#[derive(Parser)]
#[command(name = "swift", version, about = "Self-speculative decoding with on-the-fly layer skipping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create or describe model bundles.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Generate from a prompt or a JSONL dataset.
    Run(RunArgs),
    /// Run a multi-segment stream and write JSON and CSV reports.
    Bench(BenchArgs),
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write a seeded synthetic model.
    Gen(GenArgs),
    /// Print architecture and tensor manifest as JSON.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 128)]
    d_ff: usize,
    #[arg(long, default_value_t = 260)]
    vocab: usize,
    #[arg(long, default_value_t = 512)]
    max_seq: usize,
    /// Comma-separated sublayer indices made exact no-ops.
    #[arg(long, value_delimiter = ',')]
    planted: Vec<usize>,
}

/// Settings accepted both as flags and as flat keys in `--config`.
#[derive(Args, Default, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct Knobs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    stop_at_eos: Option<bool>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_draft: Option<usize>,
    #[arg(long)]
    gamma: Option<usize>,
    #[arg(long)]
    max_opt_steps: Option<usize>,
    #[arg(long)]
    bayes_interval: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    score_target: Option<f64>,
    #[arg(long)]
    skip_ratio: Option<f64>,
    #[arg(long)]
    alpha_tolerance: Option<f64>,
    #[arg(long)]
    protect_endpoints: Option<bool>,
    /// Draft with this fixed bitstring mask (e.g. 0110) and never optimize.
    #[arg(long)]
    fixed_mask: Option<String>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )*
    };
}

impl Knobs {
    fn overlay(mut self, top: &Knobs) -> Knobs {
        overlay!(
            self, top, seed, mode, max_new_tokens, temperature, top_p, stop_at_eos, epsilon, max_draft, gamma,
            max_opt_steps, bayes_interval, patience, score_target, skip_ratio, alpha_tolerance, protect_endpoints,
            fixed_mask
        );
        self
    }

    /// Config file, then flags, then `SWIFT_SEED`.
    fn resolve(cli: &Knobs, config: Option<&Path>) -> Result<Knobs> {
        let base = match config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_yaml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => Knobs::default(),
        };
        let mut knobs = base.overlay(cli);
        if let Ok(v) = std::env::var("SWIFT_SEED") {
            let seed = v.trim().parse().map_err(|_| Error::Config(format!("SWIFT_SEED is not an integer: {v:?}")))?;
            knobs.seed = Some(seed);
        }
        Ok(knobs)
    }

    fn bench_config(&self, sublayers: usize, vanilla_baseline: bool) -> Result<BenchConfig> {
        let mut swift = SwiftConfig::default();
        let mut req = RequestDefaults::default();
        let o = &mut swift.optimizer;
        if let Some(v) = self.seed {
            swift.seed = v;
            req.seed = v;
        }
        if let Some(m) = &self.mode {
            req.mode = match m.as_str() {
                "greedy" => DecodeMode::Greedy,
                "sample" => DecodeMode::Sample,
                other => return Err(Error::Config(format!("mode must be greedy or sample, got {other:?}"))),
            };
        }
        overlay_into(&mut req.max_new_tokens, self.max_new_tokens);
        overlay_into(&mut req.temperature, self.temperature);
        overlay_into(&mut req.top_p, self.top_p);
        overlay_into(&mut req.stop_at_eos, self.stop_at_eos);
        overlay_into(&mut swift.epsilon, self.epsilon);
        overlay_into(&mut swift.max_draft, self.max_draft);
        overlay_into(&mut o.gamma, self.gamma);
        overlay_into(&mut o.max_opt_steps, self.max_opt_steps);
        overlay_into(&mut o.bayes_interval, self.bayes_interval);
        overlay_into(&mut o.patience, self.patience);
        overlay_into(&mut o.score_target, self.score_target);
        overlay_into(&mut o.skip_ratio, self.skip_ratio);
        overlay_into(&mut o.alpha_tolerance, self.alpha_tolerance);
        overlay_into(&mut o.protect_endpoints, self.protect_endpoints);
        if let Some(bits) = &self.fixed_mask {
            let parsed: Option<Vec<bool>> = bits
                .chars()
                .map(|c| match c {
                    '0' => Some(false),
                    '1' => Some(true),
                    _ => None,
                })
                .collect();
            let parsed = parsed.ok_or_else(|| Error::Config(format!("fixed-mask must be a 0/1 string, got {bits:?}")))?;
            if parsed.len() != sublayers {
                return Err(Error::Config(format!(
                    "fixed-mask has {} bits, model has {sublayers} sublayers",
                    parsed.len()
                )));
            }
            swift.fixed_mask = Some(LayerMask::from_bits(parsed));
        }
        swift.validate()?;
        Ok(BenchConfig {
            swift,
            requests: req,
            vanilla_baseline,
        })
    }
}

fn overlay_into<T: Copy>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    model: PathBuf,
    /// YAML or JSON file with flat keys named like the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    knobs: Knobs,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the per-verify-call CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the searched masks as JSON bit vectors here.
    #[arg(long)]
    mask_dump: Option<PathBuf>,
    /// Skip the vanilla baseline (no wall-clock speedup).
    #[arg(long)]
    no_baseline: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
    prompt: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "{prompt}")]
    template: String,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    stream: PathBuf,
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_outputs(common: &Common, report: &BenchReport) -> Result<()> {
    if let Some(p) = &common.report {
        write_file(p, report.to_json())?;
    }
    if let Some(p) = &common.csv {
        save_csv(report, p)?;
    }
    if let Some(p) = &common.mask_dump {
        let searched: Vec<_> = report
            .trace
            .optimize
            .iter()
            .map(|(instance, rec)| json!({"instance": instance, "step": rec.step, "mask": rec.mask, "score": rec.score}))
            .collect();
        let drafting: Vec<_> = report.trace.records.iter().map(|r| r.mask.as_str()).collect();
        let dump = json!({"searched": searched, "drafting_masks": drafting, "final_skip_ratio": report.final_skip_ratio});
        write_file(p, serde_json::to_string_pretty(&dump).expect("json"))?;
    }
    let g = &report.global;
    eprintln!(
        "M {:.3}  alpha {:.3}  r {:.3}  E(speedup) {}  wall speedup {}  tokens/s {:.1}",
        g.m,
        g.alpha,
        g.r,
        g.expected_speedup.map_or("n/a".into(), |v| format!("{v:.3}")),
        g.wall_speedup.map_or("n/a".into(), |v| format!("{v:.3}")),
        g.tokens_per_sec
    );
    if report.matches_vanilla == Some(false) {
        return Err(Error::Diverged);
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let common = &args.common;
    let bundle = load_bundle(&common.model)?;
    let knobs = Knobs::resolve(&common.knobs, common.config.as_deref())?;
    let config = knobs.bench_config(bundle.sublayers(), !common.no_baseline)?;
    let (source, requests) = match (&args.prompt, &args.dataset) {
        (Some(prompt), _) => {
            let req = build_request(prompt, &args.template, &bundle.tokenizer, &config.requests, 0)?;
            (PathBuf::from("<prompt>"), vec![req])
        }
        (None, Some(path)) => (path.clone(), ingest_jsonl(path, &args.template, &bundle.tokenizer, &config.requests)?),
        (None, None) => return Err(Error::Config("either --prompt or --dataset is required".into())),
    };
    let report = run_segments(&bundle, &[(source, requests)], &config)?;
    for tokens in &report.outputs {
        println!("{}", bundle.tokenizer.decode(tokens));
    }
    write_outputs(common, &report)
}

fn bench(args: BenchArgs) -> Result<()> {
    let common = &args.common;
    let bundle = load_bundle(&common.model)?;
    let knobs = Knobs::resolve(&common.knobs, common.config.as_deref())?;
    let config = knobs.bench_config(bundle.sublayers(), !common.no_baseline)?;
    let stream = StreamSpec::load(&args.stream)?;
    let report = swift_core::bench::run_benchmark(&bundle, &stream, &config)?;
    for (i, seg) in report.segments.iter().enumerate() {
        eprintln!(
            "segment {i} ({}): M {:.3} alpha {:.3} events {}",
            seg.dataset.display(),
            seg.metrics.m,
            seg.metrics.alpha,
            seg.events.len()
        );
    }
    write_outputs(common, &report)
}

fn model(cmd: ModelCommand) -> Result<()> {
    match cmd {
        ModelCommand::Gen(a) => {
            let cfg = ArchConfig::new(a.blocks, a.d_model, a.heads, a.d_ff, a.vocab, a.max_seq);
            let bundle = make_synthetic_model(a.seed, cfg, &a.planted)?;
            save_bundle(&bundle, &a.out)?;
            eprintln!("wrote {} ({} parameters)", a.out.display(), bundle.parameter_count());
            Ok(())
        }
        ModelCommand::Inspect { model } => {
            let bundle = load_bundle(&model)?;
            let tensors: Vec<_> = bundle.tensors().iter().map(|(n, t)| json!({"name": n, "shape": t.shape})).collect();
            let info = json!({
                "config": bundle.config,
                "sublayers": bundle.sublayers(),
                "parameters": bundle.parameter_count(),
                "tokenizer": {"vocab_size": bundle.tokenizer.vocab_size(), "bos": bundle.tokenizer.bos(), "eos": bundle.tokenizer.eos()},
                "tensors": tensors,
            });
            println!("{}", serde_json::to_string_pretty(&info).expect("json"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Model(cmd) => model(cmd),
        Command::Run(args) => run(args),
        Command::Bench(args) => bench(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Engine => 4,
            })
        }
    }
}

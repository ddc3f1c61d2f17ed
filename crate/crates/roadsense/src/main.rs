use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use roadsense::commands;
use roadsense::config::{self, EvalConfig, RunConfig, SynthConfig};
use roadsense::error::{exit, CliError, Result};
use roadsense::format;

/// Road-anomaly detection from a tracked preceding vehicle.
///
/// Exit codes: 0 success, 1 other failure, 2 invalid configuration or usage,
/// 3 I/O error or malformed input file, 4 misaligned inputs, 5 label errors,
/// 6 degenerate model fit.
#[derive(Parser, Debug)]
#[command(name = "roadsense", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
    /// Run pitch estimation, compensation and detection on a dataset.
    Detect(DetectArgs),
    /// Score labelled events on one or more detect runs.
    Eval(EvalArgs),
    /// Fit the response-distance law to a table of (distance, response).
    FitModel(FitArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Overrides the base seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory; one subdirectory per sequence.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    calibration: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    no_compensation: bool,
    /// Detection threshold in pixels.
    #[arg(long)]
    threshold: Option<f64>,
    /// Window length in frames.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// A detect output directory, as NAME=DIR; repeatable.
    #[arg(long = "run", value_parser = parse_run)]
    runs: Vec<(String, PathBuf)>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Seed of the fold assignment.
    #[arg(long)]
    seed: Option<u64>,
    /// Scoring window in frames.
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    /// Focal length in pixels.
    #[arg(long)]
    focal: f64,
    /// Anomaly height in metres.
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_run(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, dir)) if !name.is_empty() && !dir.is_empty() => Ok((name.to_string(), PathBuf::from(dir))),
        _ => Err(format!("expected NAME=DIR, got `{s}`")),
    }
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    value.ok_or_else(|| CliError::config("command line", format!("missing {what}")))
}

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let cfg: SynthConfig = config::load(args.config.as_deref())?;
    let summary = commands::synth(&cfg, args.seed, &args.output)?;
    let mut text = String::from("sequence,frames,anomalies\n");
    for s in &summary {
        text.push_str(&format!("{},{},{}\n", s.id, s.frames, s.anomalies));
    }
    print(&text)?;
    eprintln!("wrote {} sequence(s) to {}", summary.len(), args.output.display());
    Ok(())
}

fn run_detect(args: DetectArgs) -> Result<()> {
    let mut cfg: RunConfig = config::load(args.config.as_deref())?;
    if args.no_compensation {
        cfg.pipeline.compensation = false;
    }
    if let Some(th) = args.threshold {
        cfg.pipeline.threshold = th;
    }
    if let Some(w) = args.window {
        cfg.pipeline.window = w;
    }
    cfg.validate()?;
    let dataset = required(args.input.or(cfg.dataset), "--input")?;
    let output = required(args.output.or(cfg.output), "--output")?;
    let calibration = args.calibration.or(cfg.calibration);
    let summary = commands::detect(&dataset, calibration.as_deref(), &cfg.pipeline, &output)?;
    let mut text = String::from("sequence,frame,response\n");
    for s in &summary {
        for w in &s.warnings {
            eprintln!("warning: sequence {}: {w}", s.id);
        }
        for d in &s.detections {
            text.push_str(&format!("{},{},{}\n", s.id, d.frame, format::pixel(d.response)));
        }
    }
    print(&text)?;
    let total: usize = summary.iter().map(|s| s.detections.len()).sum();
    eprintln!("{} sequence(s), {total} detection(s)", summary.len());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let mut cfg: EvalConfig = config::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(w) = args.window {
        cfg.window = w;
    }
    let labels = required(args.labels.or(cfg.labels.clone()), "--labels")?;
    let output = required(args.output.or(cfg.output.clone()), "--output")?;
    let runs: Vec<(String, PathBuf)> = if args.runs.is_empty() {
        cfg.run.iter().map(|r| (r.name.clone(), r.path.clone())).collect()
    } else {
        args.runs
    };
    let results = commands::eval(&labels, &runs, &cfg, &output)?;
    let mut text = String::from("run,auc,balanced_accuracy_mean,balanced_accuracy_std,f_score_mean,f_score_std\n");
    for r in &results {
        let m = &r.report;
        text.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            r.name, m.auc, m.balanced_accuracy.mean, m.balanced_accuracy.std, m.f_score.mean, m.f_score.std
        ));
    }
    print(&text)
}

fn run_fit(args: FitArgs) -> Result<()> {
    let (_, text) = commands::fit_model(&args.input, args.focal, args.delta)?;
    if let Some(path) = &args.output {
        format::write_file(path, &text)?;
    }
    print(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Detect(a) => run_detect(a),
        Command::Eval(a) => run_eval(a),
        Command::FitModel(a) => run_fit(a),
    };
    match result {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

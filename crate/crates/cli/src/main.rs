//! Command-line pipeline: synthesize data, train model bundles, run k-fold
//! evaluation, and recognize gestures in continuous recordings.
//!
//! Every command is deterministic for a fixed `--seed`; on failure, files
//! written by the failing run are removed. Set `BIMANUAL_LOG` to control log
//! verbosity.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bimanual_core::comparison::Method;
use bimanual_core::error::{Error, Result};
use bimanual_core::evaluation::{
    kfold_evaluate_with, read_annotations, score_timeline, FoldStrategy, MetricsReport,
};
use bimanual_core::features::Approach;
use bimanual_core::pipeline::{load_dataset, train_models};
use bimanual_core::preprocess::{design_cheby1_lowpass, FilterSpec, IirFilter};
use bimanual_core::recognizer::{
    calibrate_thresholds, load_models, recognize_stream, save_models, ModelBundle,
    RecognizerConfig, ThresholdMargins,
};
use bimanual_core::signal::{load_recording, LengthNormalization};
use bimanual_core::synth::{
    builtin_scenario, builtin_templates, generate_dataset, generate_scenario, write_scenario,
    JitterSpec, ScenarioEntry, ScenarioScript,
};

#[derive(Parser)]
#[command(
    name = "bimanual",
    about = "Bimanual gesture modelling and recognition from dual-wrist accelerometer data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset or a scripted scenario recording.
    Synth(SynthArgs),
    /// Train gesture models from a dataset directory into a model bundle.
    Train(TrainArgs),
    /// k-fold cross-validation producing confusion matrices and metrics.
    Eval(EvalArgs),
    /// Recognize gestures in a continuous recording using a model bundle.
    Recognize(RecognizeArgs),
}

#[derive(Args)]
struct JitterArgs {
    /// Per-axis amplitude noise, m/s².
    #[arg(long, default_value_t = 0.25)]
    sigma: f64,
    /// Execution speed factor range, min:max.
    #[arg(long, default_value = "0.9:1.1", value_parser = parse_speed_range)]
    speed_range: (f64, f64),
    /// Maximum inter-hand phase shift, seconds.
    #[arg(long, default_value_t = 0.08)]
    phase_jitter: f64,
}

impl JitterArgs {
    fn to_spec(&self) -> JitterSpec {
        JitterSpec {
            amplitude_sigma: self.sigma,
            speed_range: self.speed_range,
            phase_jitter_s: self.phase_jitter,
        }
    }
}

fn parse_speed_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected min:max, got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|_| format!("bad number {a:?}"))?;
    let hi: f64 = b.trim().parse().map_err(|_| format!("bad number {b:?}"))?;
    Ok((lo, hi))
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Trials per gesture (dataset mode).
    #[arg(long, default_value_t = 60)]
    trials: usize,
    /// Generate the given scripted scenario (1 or 2) instead of a dataset.
    #[arg(long)]
    scenario: Option<u32>,
    /// Rest gap between scripted gestures, seconds (scenario mode).
    #[arg(long, default_value_t = 5.0)]
    gap: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    jitter: JitterArgs,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory (CSV pairs plus .meta sidecars).
    #[arg(long)]
    data: PathBuf,
    /// Output bundle file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "4x4d")]
    approach: Approach,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// key=value file overriding the gravity filter design.
    #[arg(long)]
    filter_spec: Option<PathBuf>,
    /// Normalize trial lengths by truncation instead of resampling.
    #[arg(long)]
    truncate: bool,
    /// Distance threshold margin (× worst training self-distance).
    #[arg(long, default_value_t = 1.5)]
    distance_margin: f64,
    /// Log-density threshold margin (subtracted from the worst self-score).
    #[arg(long, default_value_t = 2.0)]
    probability_margin: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Output directory for reports.
    #[arg(long)]
    out: PathBuf,
    /// Run all four approach×method combinations.
    #[arg(long)]
    all: bool,
    #[arg(long)]
    approach: Option<Approach>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long, default_value_t = 6)]
    folds: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    filter_spec: Option<PathBuf>,
    /// Assign whole subjects to folds (requires subject= in .meta files).
    #[arg(long)]
    subject_disjoint: bool,
    #[arg(long, default_value_t = 1.5)]
    distance_margin: f64,
    #[arg(long, default_value_t = 2.0)]
    probability_margin: f64,
}

#[derive(Args)]
struct RecognizeArgs {
    /// Trained model bundle.
    #[arg(long)]
    bundle: PathBuf,
    /// Left-wrist recording CSV.
    #[arg(long)]
    left: PathBuf,
    /// Right-wrist recording CSV.
    #[arg(long)]
    right: PathBuf,
    /// Output directory for timeline files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "prob")]
    method: Method,
    /// Must match the bundle when given.
    #[arg(long)]
    approach: Option<Approach>,
    /// Window-start step in samples.
    #[arg(long, default_value_t = 10)]
    stride: usize,
    /// Ground-truth annotations for TP/FP/FN scoring.
    #[arg(long)]
    truth: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BIMANUAL_LOG", "error"))
        .init();
    let cli = Cli::parse();
    let mut written: Vec<PathBuf> = Vec::new();
    let outcome = match cli.command {
        Command::Synth(args) => cmd_synth(args, &mut written),
        Command::Train(args) => cmd_train(args, &mut written),
        Command::Eval(args) => cmd_eval(args, &mut written),
        Command::Recognize(args) => cmd_recognize(args, &mut written),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // best-effort removal of partial outputs from this run
            for path in written.iter().rev() {
                let _ = fs::remove_file(path);
            }
            ExitCode::FAILURE
        }
    }
}

fn filter_from(path: &Option<PathBuf>) -> Result<(FilterSpec, IirFilter)> {
    let spec = match path {
        Some(p) => FilterSpec::with_overrides_from(p)?,
        None => FilterSpec::default(),
    };
    let filter = design_cheby1_lowpass(&spec)?;
    Ok((spec, filter))
}

fn ensure_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, content: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))?;
    written.push(path.to_path_buf());
    Ok(())
}

fn cmd_synth(args: SynthArgs, written: &mut Vec<PathBuf>) -> Result<()> {
    if args.out.exists() && !args.force {
        let non_empty = fs::read_dir(&args.out)
            .map_err(|e| Error::io(&args.out, e))?
            .next()
            .is_some();
        if non_empty {
            return Err(Error::Parameter(format!(
                "output directory {} is not empty; pass --force to write anyway",
                args.out.display()
            )));
        }
    }
    let templates = builtin_templates();
    let jitter = args.jitter.to_spec();
    let files = match args.scenario {
        None => generate_dataset(&templates, args.trials, &jitter, args.seed, &args.out)?,
        Some(n) => {
            let base = builtin_scenario(n)?;
            let script = ScenarioScript {
                entries: base
                    .entries
                    .into_iter()
                    .map(|e| ScenarioEntry {
                        rest_before_s: args.gap,
                        ..e
                    })
                    .collect(),
                trailing_rest_s: args.gap,
            };
            let scenario = generate_scenario(&templates, &script, &jitter, args.seed)?;
            write_scenario(&scenario, &args.out, &format!("scenario{n}"))?
        }
    };
    written.extend(files.iter().cloned());
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}

fn margins_of(distance: f64, probability: f64) -> ThresholdMargins {
    ThresholdMargins {
        distance_factor: distance,
        log_density_offset: probability,
    }
}

fn cmd_train(args: TrainArgs, written: &mut Vec<PathBuf>) -> Result<()> {
    let (spec, filter) = filter_from(&args.filter_spec)?;
    let mode = if args.truncate {
        LengthNormalization::Truncate
    } else {
        LengthNormalization::Resample
    };
    let dataset = load_dataset(&args.data)?;
    let trained = train_models(&dataset, args.approach, args.seed, &filter, mode)?;
    let margins = margins_of(args.distance_margin, args.probability_margin);
    let thresholds = calibrate_thresholds(&trained, &filter, margins)?;

    for (training, model) in &trained {
        let counts: Vec<String> = model
            .info
            .component_counts
            .iter()
            .map(|(f, k)| format!("{f}={k}"))
            .collect();
        println!(
            "{}: K_m={} S_m={} components [{}]",
            model.gesture_id,
            model.k_m,
            training.trial_count(),
            counts.join(" ")
        );
    }

    let models = trained.into_iter().map(|(_, m)| m).collect();
    let bundle = ModelBundle::new(args.approach, spec, margins, args.seed, models, thresholds);
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    save_models(&args.out, &bundle)?;
    written.push(args.out.clone());
    println!("bundle written to {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct ComboSummary {
    approach: String,
    method: String,
    accuracy: f64,
    fold_accuracies: Vec<f64>,
    per_gesture: Vec<GestureSummary>,
}

#[derive(Serialize)]
struct GestureSummary {
    gesture: String,
    precision: Option<f64>,
    recall: Option<f64>,
}

fn combo_summary(
    approach: Approach,
    method: Method,
    report: &MetricsReport,
) -> ComboSummary {
    ComboSummary {
        approach: approach.to_string(),
        method: method.to_string(),
        accuracy: report.accuracy,
        fold_accuracies: report.fold_accuracies.clone(),
        per_gesture: report
            .per_gesture
            .iter()
            .map(|g| GestureSummary {
                gesture: g.gesture.clone(),
                precision: g.precision,
                recall: g.recall,
            })
            .collect(),
    }
}

fn cmd_eval(args: EvalArgs, written: &mut Vec<PathBuf>) -> Result<()> {
    let combos: Vec<(Approach, Method)> = if args.all {
        vec![
            (Approach::FourX4D, Method::Probability),
            (Approach::FourX4D, Method::Distance),
            (Approach::TwoX7D, Method::Probability),
            (Approach::TwoX7D, Method::Distance),
        ]
    } else {
        match (args.approach, args.method) {
            (Some(a), Some(m)) => vec![(a, m)],
            _ => {
                return Err(Error::Parameter(
                    "pass --all, or both --approach and --method".into(),
                ))
            }
        }
    };
    let (_, filter) = filter_from(&args.filter_spec)?;
    let margins = margins_of(args.distance_margin, args.probability_margin);
    let strategy = if args.subject_disjoint {
        FoldStrategy::SubjectDisjoint
    } else {
        FoldStrategy::Random
    };
    let dataset = load_dataset(&args.data)?;
    ensure_dir(&args.out)?;

    let mut summaries = Vec::with_capacity(combos.len());
    for (approach, method) in combos {
        let (confusion, report) = kfold_evaluate_with(
            &dataset,
            args.folds,
            approach,
            method,
            args.seed,
            &filter,
            margins,
            strategy,
            LengthNormalization::Resample,
        )?;
        let tag = format!("{approach}_{method}");
        write_file(
            &args.out.join(format!("confusion_{tag}.csv")),
            &confusion.to_csv(),
            written,
        )?;
        write_file(
            &args.out.join(format!("metrics_{tag}.txt")),
            &report.to_text(),
            written,
        )?;
        println!("{tag}: accuracy {:.4}", report.accuracy);
        summaries.push(combo_summary(approach, method, &report));
    }
    let json = serde_json::to_string_pretty(&summaries)
        .map_err(|e| Error::Numeric(format!("summary serialization failed: {e}")))?;
    write_file(&args.out.join("summary.json"), &json, written)?;
    Ok(())
}

fn cmd_recognize(args: RecognizeArgs, written: &mut Vec<PathBuf>) -> Result<()> {
    let bundle = load_models(&args.bundle)?;
    if let Some(a) = args.approach {
        if a != bundle.approach {
            return Err(Error::Parameter(format!(
                "bundle was trained with approach {} but --approach {a} was given",
                bundle.approach
            )));
        }
    }
    let filter = design_cheby1_lowpass(&bundle.filter_spec)?;
    let trial = load_recording(&args.left, &args.right)?;
    let config = RecognizerConfig::from_thresholds(
        args.method,
        bundle.approach,
        args.stride,
        &bundle.thresholds,
    );
    let timeline = recognize_stream(&trial.left, &trial.right, &bundle.models, &config, &filter)?;

    ensure_dir(&args.out)?;
    write_file(&args.out.join("events.csv"), &timeline.events_csv(), written)?;
    write_file(&args.out.join("traces.csv"), &timeline.traces_csv(), written)?;
    for e in &timeline.events {
        println!("{:8.3} .. {:8.3}  {}  (score {})", e.t_start, e.t_end, e.label, e.score);
    }

    if let Some(truth_path) = &args.truth {
        let truth = read_annotations(truth_path)?;
        let score = score_timeline(&timeline, &truth);
        let mut text = String::new();
        let _ = writeln!(text, "tp={}", score.true_positives);
        let _ = writeln!(text, "fp={}", score.false_positives);
        let _ = writeln!(text, "fn={}", score.false_negatives);
        write_file(&args.out.join("timeline_score.txt"), &text, written)?;
        print!("{text}");
    }
    Ok(())
}

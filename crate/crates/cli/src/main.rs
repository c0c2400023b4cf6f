//! `etchforge`: stage-wise driver for the maintenance pipeline.
//!
//! Exit codes: 0 success, 1 runtime or data error, 2 usage error.

mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use etchforge::config::PipelineConfig;
use etchforge::evalbench::{
    interval_table_csv, plot_csv, regression_table_csv, summary_csv, EvalTask,
};
use etchforge::features::FeatureSetName;
use etchforge::ingest::{parse_event_log, parse_stream, validate, write_event_log, write_stream, STREAM_FILES};
use etchforge::labeling::{compute_interval_labels, CleaningReport, LabeledRun, Segment};
use etchforge::pipeline::{self, LabeledLog, PipelineError};
use etchforge::sim::{planted_truth, simulate};

use manifest::{hash_file, read_manifest, verify_outputs, StageWriter};

const LABELS_FILE: &str = "labels.jsonl";
const SEGMENTS_FILE: &str = "segments.json";
const CLEANING_FILE: &str = "cleaning.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
    #[error("upstream artifact mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "etchforge", version, about = "Time-to-failure pipeline for chamber event logs")]
struct Cli {
    /// Pipeline config (TOML, or JSON by extension). Flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct OutArg {
    /// Directory receiving this stage's outputs and manifest.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct InputArg {
    /// Event log directory (JSONL streams).
    #[arg(long, value_name = "DIR")]
    input: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct LabelsArg {
    /// Output directory of the `label` stage.
    #[arg(long, value_name = "DIR")]
    labels: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct FeatureArgs {
    /// Comma-separated feature sets, e.g. FS1,FS7.
    #[arg(long, value_delimiter = ',')]
    feature_sets: Option<Vec<FeatureSetName>>,
    #[arg(long)]
    window_runs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic event log.
    Simulate {
        #[command(flatten)]
        out: OutArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_chambers: Option<usize>,
        #[arg(long)]
        horizon_hours: Option<f64>,
    },
    /// Check an event log for structural problems.
    Validate {
        #[command(flatten)]
        input: InputArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Segment chambers and compute TTF, health and interval labels.
    Label {
        #[command(flatten)]
        input: InputArg,
        #[command(flatten)]
        out: OutArg,
        #[arg(long)]
        min_segment_hours: Option<f64>,
        /// Comma-separated interval bounds in hours.
        #[arg(long, value_delimiter = ',')]
        bounds: Option<Vec<f64>>,
    },
    /// Per-code occurrence count, median TTF and penalty.
    Penalties {
        #[command(flatten)]
        input: InputArg,
        #[command(flatten)]
        labels: LabelsArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Fit feature state on labeled runs and write feature tables.
    Features {
        #[command(flatten)]
        input: InputArg,
        #[command(flatten)]
        labels: LabelsArg,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Fit the configured model grid on all labeled runs.
    Train {
        #[command(flatten)]
        input: InputArg,
        #[command(flatten)]
        labels: LabelsArg,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        features: FeatureArgs,
        /// ttf, health or interval.
        #[arg(long)]
        task: Option<EvalTask>,
        /// Interval bound (hours) for the interval task.
        #[arg(long)]
        bound: Option<f64>,
    },
    /// Grouped k-fold evaluation against the benchmarks.
    Evaluate {
        #[command(flatten)]
        input: InputArg,
        #[command(flatten)]
        labels: LabelsArg,
        #[command(flatten)]
        out: OutArg,
        #[command(flatten)]
        features: FeatureArgs,
        /// ttf, health or interval.
        #[arg(long)]
        task: Option<EvalTask>,
        #[arg(long, value_delimiter = ',')]
        bounds: Option<Vec<f64>>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Simulate {
            out,
            seed,
            n_chambers,
            horizon_hours,
        } => {
            set(&mut config.sim.seed, seed);
            set(&mut config.sim.n_chambers, n_chambers);
            set(&mut config.sim.horizon_hours, horizon_hours);
            cmd_simulate(&config, &out_dir(&config, &out)?)
        }
        Command::Validate { input, out } => {
            cmd_validate(&config, &input_dir(&config, &input)?, &out_dir(&config, &out)?)
        }
        Command::Label {
            input,
            out,
            min_segment_hours,
            bounds,
        } => {
            set(&mut config.labeling.min_segment_hours, min_segment_hours);
            set(&mut config.labeling.bounds, bounds);
            cmd_label(&config, &input_dir(&config, &input)?, &out_dir(&config, &out)?)
        }
        Command::Penalties { input, labels, out } => {
            let input = input_dir(&config, &input)?;
            let out = out_dir(&config, &out)?;
            cmd_penalties(&config, &input, &labels.labels, &out)
        }
        Command::Features {
            input,
            labels,
            out,
            features,
        } => {
            apply_features(&mut config, features);
            let input = input_dir(&config, &input)?;
            let out = out_dir(&config, &out)?;
            cmd_features(&config, &input, &labels.labels, &out)
        }
        Command::Train {
            input,
            labels,
            out,
            features,
            task,
            bound,
        } => {
            apply_features(&mut config, features);
            set(&mut config.evaluation.task, task);
            if let Some(b) = bound {
                config.evaluation.bounds = Some(vec![b]);
            }
            let input = input_dir(&config, &input)?;
            let out = out_dir(&config, &out)?;
            cmd_train(&config, &input, &labels.labels, &out)
        }
        Command::Evaluate {
            input,
            labels,
            out,
            features,
            task,
            bounds,
            k,
            seed,
        } => {
            apply_features(&mut config, features);
            set(&mut config.evaluation.task, task);
            if bounds.is_some() {
                config.evaluation.bounds = bounds;
            }
            set(&mut config.evaluation.k, k);
            set(&mut config.evaluation.seed, seed);
            let input = input_dir(&config, &input)?;
            let out = out_dir(&config, &out)?;
            cmd_evaluate(&config, &input, &labels.labels, &out)
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_features(config: &mut PipelineConfig, f: FeatureArgs) {
    set(&mut config.features.feature_sets, f.feature_sets);
    set(&mut config.features.params.window_runs, f.window_runs);
}

fn out_dir(config: &PipelineConfig, arg: &OutArg) -> Result<PathBuf, CliError> {
    arg.out
        .clone()
        .or_else(|| config.paths.output.clone())
        .ok_or_else(|| CliError::Usage("--out DIR is required".into()))
}

fn input_dir(config: &PipelineConfig, arg: &InputArg) -> Result<PathBuf, CliError> {
    arg.input
        .clone()
        .or_else(|| config.paths.input.clone())
        .ok_or_else(|| CliError::Usage("--input DIR is required".into()))
}

fn json_pretty<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

fn log_hashes(dir: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for name in STREAM_FILES {
        let p = dir.join(name);
        if p.exists() {
            out.insert(format!("log/{name}"), hash_file(&p)?);
        }
    }
    Ok(out)
}

fn cmd_simulate(config: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let log = simulate(&config.sim).map_err(PipelineError::from)?;
    let truth = planted_truth(&config.sim).map_err(PipelineError::from)?;
    let mut w = StageWriter::new(out)?;
    write_event_log(&log, out).map_err(PipelineError::from)?;
    for name in STREAM_FILES {
        if out.join(name).exists() {
            w.record(name)?;
        }
    }
    w.write("planted_truth.json", &json_pretty(&truth))?;
    w.finish("simulate", config, BTreeMap::new())?;
    println!(
        "simulated {} runs on {} chambers into {}",
        log.runs.len(),
        config.sim.n_chambers,
        out.display()
    );
    Ok(())
}

fn cmd_validate(config: &PipelineConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let log = parse_event_log(input).map_err(PipelineError::from)?;
    let issues = validate(&log);
    let mut w = StageWriter::new(out)?;
    w.write("validation.json", &json_pretty(&issues))?;
    w.finish("validate", config, log_hashes(input)?)?;
    if issues.is_empty() {
        println!("{} runs, no issues", log.runs.len());
        Ok(())
    } else {
        for i in &issues {
            eprintln!("{}", serde_json::to_string(i).expect("serializable"));
        }
        Err(CliError::Data(format!("{} validation issue(s)", issues.len())))
    }
}

fn cmd_label(config: &PipelineConfig, input: &Path, out: &Path) -> Result<(), CliError> {
    let log = parse_event_log(input).map_err(PipelineError::from)?;
    let data = pipeline::label_stage(&log, config)?;
    let mut w = StageWriter::new(out)?;
    write_stream(&out.join(LABELS_FILE), &data.labeled).map_err(PipelineError::from)?;
    w.record(LABELS_FILE)?;
    w.write(SEGMENTS_FILE, &json_pretty(&data.segments))?;
    w.write(CLEANING_FILE, &json_pretty(&data.cleaning))?;
    w.finish("label", config, log_hashes(input)?)?;
    let complete = data.segments.iter().filter(|s| s.is_complete()).count();
    println!(
        "labeled {} runs, {} complete segments ({} removed as short)",
        data.labeled.len(),
        complete,
        data.cleaning.removed.len()
    );
    Ok(())
}

/// Loads the labeling stage's outputs after checking that they are intact and
/// were produced from the log in `input`. Labeling settings (recipe filter)
/// come from the label manifest so row indices stay consistent.
fn load_labeled(
    config: &PipelineConfig,
    input: &Path,
    labels: &Path,
) -> Result<(LabeledLog, BTreeMap<String, String>), CliError> {
    let m = read_manifest(labels)?;
    if m.stage != "label" {
        return Err(CliError::Mismatch(format!(
            "{} holds `{}` output, expected `label`",
            labels.display(),
            m.stage
        )));
    }
    verify_outputs(labels, &m)?;
    let current = log_hashes(input)?;
    let recorded: BTreeMap<&String, &String> =
        m.inputs.iter().filter(|(k, _)| k.starts_with("log/")).collect();
    if recorded != current.iter().collect() {
        return Err(CliError::Mismatch(format!(
            "labels in {} were not computed from the log in {}",
            labels.display(),
            input.display()
        )));
    }

    let raw = parse_event_log(input).map_err(PipelineError::from)?;
    let log = pipeline::filter_log(&raw, &m.config)?;
    let read = |name: &str| {
        let p = labels.join(name);
        std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
    };
    let labeled: Vec<LabeledRun> =
        parse_stream(LABELS_FILE, &read(LABELS_FILE)?).map_err(PipelineError::from)?;
    let bad = |e: serde_json::Error| CliError::Data(format!("{}: {e}", labels.display()));
    let segments: Vec<Segment> = serde_json::from_str(&read(SEGMENTS_FILE)?).map_err(bad)?;
    let cleaning: CleaningReport = serde_json::from_str(&read(CLEANING_FILE)?).map_err(bad)?;
    if labeled.iter().any(|l| l.run >= log.runs.len())
        || segments.iter().flat_map(|s| &s.runs).any(|&r| r >= log.runs.len())
    {
        return Err(CliError::Mismatch(format!(
            "labels in {} reference runs outside the log",
            labels.display()
        )));
    }
    // Interval labels follow from TTF, so any requested bound can be served.
    let labeled = compute_interval_labels(&labeled, &config.eval_config().bounds)
        .map_err(PipelineError::from)?;

    let mut inputs = current;
    for (name, h) in &m.outputs {
        inputs.insert(format!("labels/{name}"), h.clone());
    }
    Ok((
        LabeledLog {
            log,
            labeled,
            segments,
            cleaning,
        },
        inputs,
    ))
}

fn cmd_penalties(config: &PipelineConfig, input: &Path, labels: &Path, out: &Path) -> Result<(), CliError> {
    let (data, inputs) = load_labeled(config, input, labels)?;
    let rows = pipeline::penalty_report(&data, config)?;
    let mut csv = String::from("source,code,occurrences,median_ttf,penalty\n");
    for (source, c) in &rows {
        let src = serde_json::to_value(source).expect("serializable");
        writeln!(
            csv,
            "{},{},{},{},{}",
            src.as_str().unwrap_or_default(),
            c.code,
            c.occurrences,
            c.median_ttf,
            c.penalty
        )
        .expect("string write");
    }
    let mut w = StageWriter::new(out)?;
    w.write("penalties.csv", csv.as_bytes())?;
    w.finish("penalties", config, inputs)?;
    println!("{} codes with occurrences", rows.len());
    Ok(())
}

fn cmd_features(config: &PipelineConfig, input: &Path, labels: &Path, out: &Path) -> Result<(), CliError> {
    let (data, inputs) = load_labeled(config, input, labels)?;
    let (engineer, ids, tables) = pipeline::feature_tables(&data, config)?;
    let mut w = StageWriter::new(out)?;
    w.write("engineer.json", &json_pretty(&engineer))?;
    for (name, x) in &tables {
        w.write(&format!("features_{name}.csv"), x.to_csv(Some(&ids)).as_bytes())?;
    }
    w.finish("features", config, inputs)?;
    println!("{} feature tables over {} runs", tables.len(), ids.len());
    Ok(())
}

fn cmd_train(config: &PipelineConfig, input: &Path, labels: &Path, out: &Path) -> Result<(), CliError> {
    let (data, inputs) = load_labeled(config, input, labels)?;
    let task = config.evaluation.task;
    let bound = config.evaluation.bounds.as_ref().and_then(|b| b.first().copied());
    let (engineer, models) = pipeline::train_all(&data, config, task, bound)?;
    let mut w = StageWriter::new(out)?;
    w.write("engineer.json", &json_pretty(&engineer))?;
    for (name, m) in &models {
        let mut json = m.to_json();
        json.push('\n');
        w.write(&format!("models/{name}.json"), json.as_bytes())?;
    }
    w.finish("train", config, inputs)?;
    println!("trained {} models for {task}", models.len());
    Ok(())
}

fn cmd_evaluate(config: &PipelineConfig, input: &Path, labels: &Path, out: &Path) -> Result<(), CliError> {
    let (data, inputs) = load_labeled(config, input, labels)?;
    let task = config.evaluation.task;
    let outcome = pipeline::evaluate(&data, config, task)?;
    let report = &outcome.report;
    let mut w = StageWriter::new(out)?;
    let mut json = report.to_json();
    json.push('\n');
    w.write("report.json", json.as_bytes())?;
    let table = match task {
        EvalTask::IntervalClassification => ("interval_table.csv", interval_table_csv(report)),
        _ => ("regression_table.csv", regression_table_csv(report)),
    };
    w.write(table.0, table.1.as_bytes())?;
    w.write("summary.csv", summary_csv(report).as_bytes())?;
    w.write("plot.csv", plot_csv(&outcome, &data.eval_data()).as_bytes())?;
    w.finish("evaluate", config, inputs)?;
    println!(
        "{task}: {} runs in {} segments, {} report rows",
        report.n_runs,
        report.n_segments,
        report.rows.len()
    );
    Ok(())
}

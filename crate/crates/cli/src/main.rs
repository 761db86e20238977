use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use treefuse::bench::{
    load_dataset, run_experiment, synth_generate, to_canonical_string, write_dataset,
    ExperimentConfig, SyntheticSpec,
};
use treefuse::{
    ClassificationResult, Classifier, ClassifySettings, Error, FusionSettings, Method,
    TreeGroupStructure,
};

#[derive(Parser)]
#[command(
    name = "treefuse",
    version,
    about = "Multimodal sparse representation classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify every test sample of a dataset.
    Classify(ClassifyArgs),
    /// Run an experiment config and write one report per point plus summary.json.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic dataset (manifest plus CSV tables).
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(clap::Args)]
struct ClassifyArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// SRC_PER_MODALITY, HSRC, JSRC, MTSRC, JSRC_W or MTSRC_W.
    #[arg(long)]
    method: String,
    #[arg(long, allow_negative_numbers = true)]
    lambda: f64,
    /// Tree JSON with 1-based modality indices; required for MTSRC methods.
    #[arg(long)]
    tree: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    weighted_alternations: usize,
    #[arg(long, default_value_t = 2.0)]
    fuzzifier: f64,
    /// Multiplies the weight of every non-singleton tree group.
    #[arg(long)]
    weight_scale: Option<f64>,
    /// Recorded in the output; classification itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_config(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct SampleRecord {
    index: usize,
    predicted: usize,
    truth: usize,
    class_residuals: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mu: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ClassifyOutput {
    method: Method,
    lambda: f64,
    seed: u64,
    weighted_alternations: usize,
    fuzzifier: f64,
    ccr: f64,
    predictions: Vec<usize>,
    samples: Vec<SampleRecord>,
}

fn classify(args: ClassifyArgs) -> CliResult<()> {
    let method: Method = args.method.parse().map_err(Failure::from)?;
    if method.needs_tree() && args.tree.is_none() {
        return Err(Failure::Config(format!(
            "tree required for {method} (pass --tree)"
        )));
    }
    let dataset = load_dataset(&args.manifest)?;
    let num_modalities = dataset.num_modalities();
    let tree = match &args.tree {
        Some(path) => {
            let tree = TreeGroupStructure::from_json(&read_config(path)?, num_modalities)?;
            Some(match args.weight_scale {
                Some(scale) => tree.scale_nonsingleton_weights(scale)?,
                None => tree,
            })
        }
        None => None,
    };
    let settings = ClassifySettings {
        lambda: args.lambda,
        tree,
        fusion: FusionSettings {
            alternations: args.weighted_alternations,
            fuzzifier: args.fuzzifier,
            ..Default::default()
        },
    };
    let dictionary = dataset.dictionary()?;
    let classifier = Classifier::new(&dictionary, method, &settings)?;
    let results: Vec<ClassificationResult> = dataset
        .test
        .samples
        .par_iter()
        .map(|s| classifier.classify(s))
        .collect::<treefuse::Result<_>>()?;

    let samples: Vec<SampleRecord> = results
        .iter()
        .zip(&dataset.test.labels)
        .enumerate()
        .map(|(i, (r, &truth))| SampleRecord {
            index: i + 1,
            predicted: r.predicted + 1,
            truth: truth + 1,
            class_residuals: r.class_residuals.clone(),
            mu: r.weights.as_ref().map(|w| w.mu.clone()),
        })
        .collect();
    let correct = samples.iter().filter(|s| s.predicted == s.truth).count();
    let output = ClassifyOutput {
        method,
        lambda: args.lambda,
        seed: args.seed,
        weighted_alternations: args.weighted_alternations,
        fuzzifier: args.fuzzifier,
        ccr: correct as f64 / samples.len().max(1) as f64,
        predictions: samples.iter().map(|s| s.predicted).collect(),
        samples,
    };
    let text = to_canonical_string(&output)?;
    match &args.out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    config: &'a ExperimentConfig,
    points: Vec<String>,
    summary: &'a [treefuse::bench::SummaryEntry],
}

fn experiment(config_path: &Path, out_dir: &Path) -> CliResult<()> {
    let text = read_config(config_path)?;
    let mut config: ExperimentConfig = parse_json(config_path, &text)?;
    config.validate()?;
    config.resolve_paths(config_path.parent().unwrap_or(Path::new(".")));
    let outcome = run_experiment(&config)?;

    create_dir(out_dir)?;
    let mut names = Vec::with_capacity(outcome.points.len());
    for point in &outcome.points {
        let name = format!(
            "point_{}_level{}_fold{}.json",
            point.method.as_str().to_lowercase(),
            point.level_index + 1,
            point.fold + 1
        );
        write_file(&out_dir.join(&name), &to_canonical_string(point)?)?;
        names.push(name);
    }
    let summary = SummaryFile {
        config: &config,
        points: names,
        summary: &outcome.summary,
    };
    write_file(
        &out_dir.join("summary.json"),
        &to_canonical_string(&summary)?,
    )
}

fn synth(spec_path: &Path, out_dir: &Path) -> CliResult<()> {
    let text = read_config(spec_path)?;
    let spec: SyntheticSpec = parse_json(spec_path, &text)?;
    let dataset = synth_generate(&spec)?;
    create_dir(out_dir)?;
    let manifest = write_dataset(&dataset, out_dir)?;
    println!("{}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Classify(args) => classify(args),
        Command::Experiment { config, out_dir } => experiment(&config, &out_dir),
        Command::Synth { spec, out_dir } => synth(&spec, &out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (code, message) = match failure {
                Failure::Config(m) => (2, m),
                Failure::Data(m) => (3, m),
            };
            eprintln!("error: {}", message.replace('\n', " "));
            ExitCode::from(code)
        }
    }
}

//! Command-line driver: corpus stats, engine runs, F1 evaluation, and
//! comparison against the shipped published reference scores.
//!
//! Exit codes: 0 success, 2 input error, 3 backend auth error.

mod files;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use assertctl_core::backend::{Backend, BackendError, HttpBackend, MockBackend, MockScript};
use assertctl_core::corpus::{corpus_stats, parse_corpus, Corpus};
use assertctl_core::eval::{build_confusion, compare_report, MetricReport, ReferenceTable};
use assertctl_core::lexicon::{load_lexicon, Dimension, Lexicon};
use assertctl_core::strategies::{run_engine, Exemplar, StrategyConfig, StrategyError};
use assertctl_core::types::EngineKind;

#[derive(Parser)]
#[command(name = "assertctl", version, about = "Clinical assertion classification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the gold-label distribution of a corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Run an engine over a corpus, writing predictions and traces.
    Predict(PredictArgs),
    /// Score a predictions file against a corpus and write a report.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for report.json.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare a report against the shipped published scores.
    Compare {
        /// Path to a report.json written by `evaluate`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        model: String,
        #[arg(long, default_value = "-")]
        method: String,
    },
    /// Validate a lexicon file and print its coverage.
    LexiconCheck {
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// One of: rule, simple, cot, sc, tot.
    #[arg(long)]
    engine: String,
    /// Trigger lexicon file; the embedded default is used when absent.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// OpenAI-compatible endpoint base URL (credential from ASSERTCTL_API_KEY).
    #[arg(long)]
    backend_url: Option<String>,
    /// Model name sent on the wire.
    #[arg(long, default_value = "gpt-3.5-turbo")]
    model: String,
    /// Scripted mock backend file (offline runs).
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Self-consistency path count.
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Tree branching factor.
    #[arg(long, default_value_t = 2)]
    branching: usize,
    /// Tree depth.
    #[arg(long, default_value_t = 2)]
    depth: usize,
    /// Self-consistency sampling temperature.
    #[arg(long, default_value_t = 0.7)]
    temperature: f64,
    /// Corpus of gold-labeled exemplars to prepend as worked examples.
    #[arg(long)]
    few_shot: Option<PathBuf>,
    #[arg(long, default_value_t = assertctl_core::backend::DEFAULT_MAX_IN_FLIGHT)]
    max_in_flight: usize,
    /// Base seed for sampled paths.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

enum CliError {
    /// Unusable input: missing files, parse failures, bad flags. Exit 2.
    Input(String),
    /// The backend rejected our credential. Exit 3.
    Auth(String),
}

impl CliError {
    fn input(e: impl std::fmt::Display) -> CliError {
        CliError::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Auth(message)) => {
            eprintln!("auth error: {message}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Stats { corpus } => cmd_stats(&corpus),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate { predictions, corpus, out } => cmd_evaluate(&predictions, &corpus, &out),
        Command::Compare { report, dataset, model, method } => {
            cmd_compare(&report, &dataset, &model, &method)
        }
        Command::LexiconCheck { lexicon } => cmd_lexicon_check(lexicon.as_deref()),
    }
}

fn load_corpus(path: &Path) -> Result<Corpus, CliError> {
    parse_corpus(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_stats(corpus_path: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(corpus_path)?;
    let stats = corpus_stats(&corpus).map_err(CliError::input)?;
    print!("{}", stats.render_text());
    Ok(())
}

fn resolve_lexicon(path: Option<&Path>) -> Result<Lexicon, CliError> {
    match path {
        Some(path) => load_lexicon(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display()))),
        None => Ok(Lexicon::default_embedded()),
    }
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    let engine: EngineKind = args.engine.parse().map_err(CliError::input)?;
    if args.max_in_flight == 0 {
        return Err(CliError::Input("--max-in-flight must be at least 1".to_string()));
    }
    let corpus = load_corpus(&args.corpus)?;
    let lexicon = resolve_lexicon(args.lexicon.as_deref())?;

    let mut config = StrategyConfig::new(engine);
    config.sc_paths = args.m;
    config.branching = args.branching;
    config.depth = args.depth;
    config.temperature_sc = args.temperature;
    config.seed_base = args.seed;
    if let Some(few_shot_path) = &args.few_shot {
        let exemplars = load_corpus(few_shot_path)?;
        config.few_shot = exemplars
            .instances
            .into_iter()
            .map(|instance| {
                let label = instance.gold.ok_or_else(|| {
                    CliError::Input(format!("few-shot instance {} has no gold label", instance.id))
                })?;
                Ok(Exemplar { instance, label })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
    }
    config.validate().map_err(CliError::input)?;

    let backend: Option<Box<dyn Backend>> = if engine == EngineKind::Rule {
        None
    } else {
        match (&args.backend_url, &args.mock_script) {
            (Some(url), None) => Some(Box::new(HttpBackend::new(url, &args.model))),
            (None, Some(script_path)) => {
                let script = MockScript::from_path(script_path).map_err(CliError::input)?;
                Some(Box::new(MockBackend::new(script)))
            }
            _ => {
                return Err(CliError::Input(
                    "exactly one of --backend-url or --mock-script is required for LLM engines"
                        .to_string(),
                ))
            }
        }
    };

    let canonical = format!(
        "predict engine={engine} corpus={} lexicon={} backend={} model={} m={} branching={} depth={} temperature={} seed={} max_in_flight={} few_shot={}",
        args.corpus.display(),
        args.lexicon.as_ref().map_or("builtin".to_string(), |p| p.display().to_string()),
        args.backend_url.clone().or_else(|| args.mock_script.as_ref().map(|p| format!("mock:{}", p.display()))).unwrap_or_else(|| "none".to_string()),
        args.model,
        args.m,
        args.branching,
        args.depth,
        args.temperature,
        args.seed,
        args.max_in_flight,
        args.few_shot.as_ref().map_or("none".to_string(), |p| p.display().to_string()),
    );
    let fingerprint = files::fingerprint(&canonical);

    let results = run_engine(&corpus, &config, &lexicon, backend.as_deref(), args.max_in_flight)
        .map_err(CliError::input)?;
    let ids: Vec<String> = corpus.instances.iter().map(|i| i.id.clone()).collect();
    let (ok, failed) =
        files::write_outputs(&args.out, &fingerprint, &ids, &results).map_err(CliError::input)?;
    println!(
        "{ok} predictions, {failed} errors -> {}/predictions.jsonl (fingerprint {fingerprint})",
        args.out.display()
    );

    let auth_failure = results.iter().find_map(|r| match r {
        Err(StrategyError::Backend(BackendError::AuthFailure(detail))) => Some(detail.clone()),
        _ => None,
    });
    if let Some(detail) = auth_failure {
        return Err(CliError::Auth(detail));
    }
    if ok == 0 && !corpus.is_empty() {
        return Err(CliError::Input("no instance produced a prediction".to_string()));
    }
    Ok(())
}

fn cmd_evaluate(predictions_path: &Path, corpus_path: &Path, out: &Path) -> Result<(), CliError> {
    let corpus = load_corpus(corpus_path)?;
    let (predictions, error_records) =
        files::read_predictions(predictions_path).map_err(CliError::Input)?;
    let scored = build_confusion(&predictions, &corpus).map_err(CliError::input)?;
    let report = MetricReport::from_matrix(&scored.matrix).map_err(CliError::input)?;

    std::fs::create_dir_all(out).map_err(CliError::input)?;
    let report_path = out.join("report.json");
    let mut rendered = serde_json::to_string_pretty(&report).map_err(CliError::input)?;
    rendered.push('\n');
    std::fs::write(&report_path, rendered).map_err(CliError::input)?;

    print!("{}", report.render_text());
    if scored.skipped_missing_gold > 0 {
        println!("skipped (no gold): {}", scored.skipped_missing_gold);
    }
    if error_records > 0 {
        println!("prediction error records ignored: {error_records}");
    }
    println!("report written to {}", report_path.display());
    Ok(())
}

fn cmd_compare(report_path: &Path, dataset: &str, model: &str, method: &str) -> Result<(), CliError> {
    let raw = std::fs::read_to_string(report_path)
        .map_err(|e| CliError::Input(format!("{}: {e}", report_path.display())))?;
    let report: MetricReport = serde_json::from_str(&raw)
        .map_err(|e| CliError::Input(format!("{}: {e}", report_path.display())))?;
    let reference = ReferenceTable::embedded();
    let rendered =
        compare_report(&report, &reference, dataset, model, method).map_err(CliError::input)?;
    print!("{rendered}");
    Ok(())
}

fn cmd_lexicon_check(path: Option<&Path>) -> Result<(), CliError> {
    let lexicon = resolve_lexicon(path)?;
    println!("lexicon version: {}", lexicon.version);
    println!("triggers: {}", lexicon.len());
    for dimension in Dimension::ALL {
        println!("  {dimension}: {}", lexicon.count_for(dimension));
    }
    println!("  terminators: {}", lexicon.termination_count());
    Ok(())
}

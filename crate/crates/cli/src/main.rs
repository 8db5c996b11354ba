//! Command-line front end for the opinion-exclusion audit.
//!
//! Subcommands: `validate` (ingest and check invariants), `stats`
//! (disagreement tables), `synth` (seeded synthetic dataset), `audit`
//! (train and evaluate model configurations, emit report and heatmap) and
//! `compare` (re-render two saved reports side by side).
//!
//! Exit codes: 0 success, 1 usage error, 2 data or evaluation error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opinion_audit::fairness::default_bin_edges;
use opinion_audit::heatmap::render_heatmap;
use opinion_audit::ingest::write_jsonl;
use opinion_audit::quality::annotator_quality;
use opinion_audit::report::render_comparison;
use opinion_audit::stats::{compute_adr, sample_stats, tie_annotation_fraction};
use opinion_audit::synth::expected_stats;
use opinion_audit::{
    generate, ingest, parse_report, render_report, run_audit, AuditError, AuditOptions,
    DatasetManifest, FileFormat, GroupingStrategy, MetricKind, ModelKind, ReportFormat,
    SynthConfig, TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "opinion-audit",
    version,
    about = "Audit classifiers on multi-annotator datasets for opinion exclusion"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Annotation file (JSONL or CSV).
    #[arg(long)]
    data: PathBuf,
    /// Manifest declaring labels and demographic vocabularies.
    #[arg(long)]
    manifest: PathBuf,
    /// File format; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a dataset and check every invariant.
    Validate(DataArgs),
    /// Print majority-vote, ADR, ambiguity and quality tables.
    Stats(DataArgs),
    /// Generate a seeded synthetic dataset with planted opinion clusters.
    Synth {
        /// Generator config JSON; a built-in default is used when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for data.jsonl, manifest.json and truth.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate model configurations, emit report and heatmap.
    Audit {
        #[command(flatten)]
        data: DataArgs,
        /// Model configuration to audit (repeatable): mv, annotator, oracle.
        #[arg(long = "model", required = true)]
        models: Vec<String>,
        /// Grouping: adr, popularity, ambiguity or demographic:<attribute>.
        #[arg(long, default_value = "adr")]
        group: String,
        /// Comma-separated bin edges spanning [0,1].
        #[arg(long)]
        bins: Option<String>,
        /// Performance metric (repeatable, averaged): accuracy, precision,
        /// recall, f1.
        #[arg(long = "metric")]
        metrics: Vec<String>,
        /// Remove annotators scoring below this leave-one-out agreement.
        #[arg(long)]
        quality_threshold: Option<f64>,
        /// Minimum evaluation annotations per scored user.
        #[arg(long, default_value_t = 3)]
        min_support: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Hashed text feature buckets (power of two).
        #[arg(long, default_value_t = 1 << 18)]
        buckets: usize,
        /// Skip the l2_lambda grid search.
        #[arg(long)]
        no_tune: bool,
        /// Output directory for report.json and heatmap.svg.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render two saved reports side by side.
    Compare {
        report_a: PathBuf,
        report_b: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    configure_threads();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(Failure::Data(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

/// Cap rayon parallelism via OPINION_AUDIT_THREADS. Outputs never depend
/// on the thread count; this only limits resource use.
fn configure_threads() {
    if let Ok(value) = std::env::var("OPINION_AUDIT_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

enum Failure {
    /// Bad flag values: exit 1.
    Usage(String),
    /// Bad data or failed evaluation: exit 2.
    Data(AuditError),
}

impl From<AuditError> for Failure {
    fn from(err: AuditError) -> Self {
        Failure::Data(err)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(data) => {
            let dataset = load(&data)?;
            println!(
                "ok: {} samples, {} annotators, {} annotations, labels {:?}",
                dataset.samples().len(),
                dataset.annotators().len(),
                dataset.annotations().len(),
                dataset.label_set(),
            );
            println!("fingerprint: {}", dataset.fingerprint());
            Ok(())
        }
        Command::Stats(data) => {
            let dataset = load(&data)?;
            print_stats(&dataset);
            Ok(())
        }
        Command::Synth { config, out } => {
            let config = match config {
                Some(path) => {
                    let raw = fs::read_to_string(&path).map_err(AuditError::from)?;
                    serde_json::from_str::<SynthConfig>(&raw).map_err(AuditError::from)?
                }
                None => SynthConfig::default(),
            };
            let (dataset, truth) = generate(&config)?;
            fs::create_dir_all(&out).map_err(AuditError::from)?;
            write_jsonl(&dataset, &out.join("data.jsonl"))?;
            DatasetManifest {
                labels: dataset.label_set().to_vec(),
                demographics: dataset.demographic_vocab().clone(),
            }
            .save(&out.join("manifest.json"))?;
            fs::write(
                out.join("truth.json"),
                serde_json::to_string_pretty(&truth).map_err(AuditError::from)?,
            )
            .map_err(AuditError::from)?;
            let expectation = expected_stats(&config)?;
            println!(
                "wrote {} samples x {} annotations to {}",
                dataset.samples().len(),
                dataset.annotations().len(),
                out.display()
            );
            println!(
                "expected cluster ADR {:?}, spammer quality {:.3}",
                expectation
                    .per_cluster_adr
                    .iter()
                    .map(|v| (v * 1000.0).round() / 1000.0)
                    .collect::<Vec<_>>(),
                expectation.spammer_quality
            );
            Ok(())
        }
        Command::Audit {
            data,
            models,
            group,
            bins,
            metrics,
            quality_threshold,
            min_support,
            seed,
            buckets,
            no_tune,
            out,
        } => {
            let dataset = load(&data)?;
            let models = models
                .iter()
                .map(|m| m.parse::<ModelKind>())
                .collect::<opinion_audit::Result<Vec<_>>>()
                .map_err(|e| Failure::Usage(e.to_string()))?;
            let metrics = if metrics.is_empty() {
                vec![MetricKind::Accuracy]
            } else {
                metrics
                    .iter()
                    .map(|m| m.parse::<MetricKind>())
                    .collect::<opinion_audit::Result<Vec<_>>>()
                    .map_err(|e| Failure::Usage(e.to_string()))?
            };
            let edges = match bins {
                Some(spec) => parse_edges(&spec)?,
                None => default_bin_edges(),
            };
            let grouping = parse_grouping(&group, edges)?;
            let options = AuditOptions {
                models,
                grouping,
                metrics,
                quality_threshold,
                min_support,
                seed,
                n_text_buckets: buckets,
                train_config: TrainConfig {
                    seed,
                    ..Default::default()
                },
                tune: !no_tune,
                k_folds: 5,
            };
            let report = run_audit(&dataset, &options)?;

            fs::create_dir_all(&out).map_err(AuditError::from)?;
            fs::write(
                out.join("report.json"),
                render_report(&report, ReportFormat::Json)?,
            )
            .map_err(AuditError::from)?;
            let columns: Vec<(String, &opinion_audit::GroupedEvaluation)> = report
                .models
                .iter()
                .map(|m| (m.kind.name().to_string(), &m.grouped[0]))
                .collect();
            fs::write(out.join("heatmap.svg"), render_heatmap(&columns)?)
                .map_err(AuditError::from)?;
            print!(
                "{}",
                String::from_utf8_lossy(&render_report(&report, ReportFormat::Text)?)
            );
            println!("\nwrote report.json and heatmap.svg to {}", out.display());
            Ok(())
        }
        Command::Compare { report_a, report_b } => {
            let a = parse_report(&fs::read(&report_a).map_err(AuditError::from)?)?;
            let b = parse_report(&fs::read(&report_b).map_err(AuditError::from)?)?;
            print!("{}", render_comparison(&a, &b));
            Ok(())
        }
    }
}

fn load(args: &DataArgs) -> Result<opinion_audit::AnnotatedDataset, Failure> {
    let format = match args.format.as_deref() {
        None => FileFormat::from_path(&args.data),
        Some("jsonl") => FileFormat::Jsonl,
        Some("csv") => FileFormat::Csv,
        Some(other) => {
            return Err(Failure::Usage(format!(
                "unknown format {other:?} (expected jsonl or csv)"
            )))
        }
    };
    let manifest = DatasetManifest::load(&args.manifest)?;
    Ok(ingest(&args.data, format, &manifest)?)
}

fn parse_edges(spec: &str) -> Result<Vec<f64>, Failure> {
    spec.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Usage(format!("bad bin edge {part:?}")))
        })
        .collect()
}

fn parse_grouping(group: &str, edges: Vec<f64>) -> Result<GroupingStrategy, Failure> {
    let strategy = match group {
        "adr" => GroupingStrategy::adr_bins(edges),
        "popularity" => GroupingStrategy::popularity_bins(edges),
        "ambiguity" => GroupingStrategy::ambiguity_bins(edges),
        other => match other.strip_prefix("demographic:") {
            Some(attribute) if !attribute.is_empty() => {
                return Ok(GroupingStrategy::demographic(attribute))
            }
            _ => {
                return Err(Failure::Usage(format!(
                    "unknown grouping {other:?} (expected adr, popularity, ambiguity \
                     or demographic:<attribute>)"
                )))
            }
        },
    };
    strategy.map_err(|e| Failure::Usage(e.to_string()))
}

fn print_stats(dataset: &opinion_audit::AnnotatedDataset) {
    let stats = sample_stats(dataset.annotations(), dataset.label_set());
    let profiles = compute_adr(dataset.annotations(), &stats);
    let quality = annotator_quality(dataset);

    println!(
        "{} samples, {} annotators, {} annotations",
        dataset.samples().len(),
        dataset.annotators().len(),
        dataset.annotations().len()
    );
    println!(
        "annotations on tied samples: {:.2}%",
        tie_annotation_fraction(&stats) * 100.0
    );

    println!("\nsample stats:");
    println!("{:<12} {:>6} {:<10} {:>5} {:>10}", "sample", "n", "majority", "tie", "ambiguity");
    for s in stats.values() {
        println!(
            "{:<12} {:>6} {:<10} {:>5} {:>10.4}",
            s.sample_id,
            s.n_annotations,
            s.majority_label,
            if s.is_tie { "yes" } else { "" },
            s.ambiguity
        );
    }

    println!("\nannotator stats:");
    println!("{:<12} {:>8} {:>8} {:>9}", "annotator", "n", "adr", "quality");
    for p in profiles.values() {
        let q = quality
            .get(&p.annotator_id)
            .map(|q| format!("{:.4}", q.score))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{:<12} {:>8} {:>8.4} {:>9}",
            p.annotator_id, p.n_annotations, p.adr, q
        );
    }
}


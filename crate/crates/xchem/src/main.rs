use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use xchem::config::{BackendKind, PipelineConfig, Workspace};
use xchem::embed::{descriptor_texts, service_for};
use xchem::harness::{run_evaluate, run_train};
use xchem::ingest::{ingest, read_dataset, write_dataset};
use xchem::report::run_report;
use xchem::select::run_select;
use xchem::synth::{write_corpus, SynthConfig};
use xchem_core::model::Variant;
use xchem_core::TargetProperty;

const DEFAULT_CONFIG: &str = "xchem.toml";

/// Physics-vetted descriptor selection and gated multimodal property prediction.
#[derive(Parser, Debug)]
#[command(name = "xchem", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Pipeline configuration (TOML). Defaults to ./xchem.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated targets, e.g. `homo,lumo,gap`.
    #[arg(long, global = true, value_delimiter = ',')]
    targets: Option<Vec<TargetProperty>>,
    /// Model variant to train or evaluate; both when omitted.
    #[arg(long, global = true)]
    variant: Option<Variant>,
    /// Chat endpoint for the selector and validator; switches them to HTTP.
    #[arg(long, global = true)]
    backend_url: Option<String>,
    /// Text-embedding endpoint; switches the encoder to HTTP.
    #[arg(long, global = true)]
    embedding_url: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Recompute cached results.
    #[arg(long, global = true)]
    force: bool,
    /// Fixed ordering and no timestamps in outputs.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    deterministic: Option<bool>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse XYZ records and metadata into the canonical dataset.
    Ingest,
    /// Embed every descriptor string into the cache.
    Embed,
    /// Run the selector/validator dialogue per molecule and target.
    Select,
    /// k-fold training; writes checkpoints and metrics.
    Train,
    /// Score saved checkpoints on their test folds.
    Evaluate,
    /// Write the MAE table, JSON summary, selection statistics and chart.
    Report,
    /// Print the effective configuration as TOML.
    Config,
    /// Write a synthetic QM9-format corpus to the configured input paths.
    Synth {
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 0.0)]
        missing_rate: f64,
    },
}

fn workspace(g: &Global) -> Result<Workspace> {
    let (mut config, base) = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None if std::path::Path::new(DEFAULT_CONFIG).exists() => PipelineConfig::load(DEFAULT_CONFIG.as_ref())?,
        None => (PipelineConfig::default(), PathBuf::new()),
    };
    config.apply_env();
    if let Some(t) = &g.targets {
        config.targets = t.clone();
    }
    if let Some(url) = &g.backend_url {
        config.backends.chat = BackendKind::Http;
        config.backends.chat_url = Some(url.clone());
    }
    if let Some(url) = &g.embedding_url {
        config.backends.embedding = BackendKind::Http;
        config.backends.embedding_url = Some(url.clone());
    }
    if let Some(s) = g.seed {
        config.seed = s;
    }
    if let Some(j) = g.jobs {
        config.jobs = j;
    }
    if let Some(d) = g.deterministic {
        config.deterministic = d;
    }
    config.validate()?;
    Ok(Workspace::new(config, base))
}

fn variants(g: &Global) -> Vec<Variant> {
    g.variant.map_or_else(|| Variant::ALL.to_vec(), |v| vec![v])
}

fn run(cli: Cli) -> Result<ExitCode> {
    let ws = workspace(&cli.global)?;
    if ws.config.jobs > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(ws.config.jobs).build_global().context("starting worker pool")?;
    }
    let targets: Vec<TargetProperty> = ws.config.targets.clone();
    match cli.command {
        Command::Ingest => {
            let out = ingest(&ws.xyz_dir(), &ws.metadata())?;
            write_dataset(&ws.dataset(), &out.retained)?;
            for id in &out.dropped {
                log::info!("dropped {id}: incomplete descriptors");
            }
            println!("retained {}, dropped {}", out.retained.len(), out.dropped.len());
        }
        Command::Embed => {
            let entries = read_dataset(&ws.dataset())?;
            let texts = descriptor_texts(&entries);
            let stats = service_for(&ws)?.ensure(&texts)?;
            println!("embedded {} texts ({} cached, {} computed)", texts.len(), stats.cached, stats.computed);
        }
        Command::Select => {
            let entries = read_dataset(&ws.dataset())?;
            let r = run_select(&ws, &entries, &targets, cli.global.force)?;
            println!(
                "dialogues: {} new, {} cached, {} rounds, {} fallbacks, {} failed",
                r.completed,
                r.cached,
                r.rounds,
                r.fallbacks,
                r.failed.len()
            );
            if !r.failed.is_empty() {
                for (id, target, err) in &r.failed {
                    eprintln!("failed: {id} {target}: {err}");
                }
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Train => {
            let entries = read_dataset(&ws.dataset())?;
            run_train(&ws, &entries, &targets, &variants(&cli.global))?;
        }
        Command::Evaluate => {
            let entries = read_dataset(&ws.dataset())?;
            for e in run_evaluate(&ws, &entries, &targets, &variants(&cli.global))? {
                let folds: Vec<String> = e.fold_mae.iter().map(|m| format!("{m:.6}")).collect();
                println!("{}\t{}\tmean MAE {:.6} {}\tfolds [{}]", e.target, e.variant, e.mean_mae, e.target.unit(), folds.join(", "));
            }
        }
        Command::Report => {
            let out = run_report(&ws)?;
            for p in &out.written {
                println!("wrote {}", p.display());
            }
            if out.skipped_transcript_lines > 0 {
                println!("skipped {} malformed transcript line(s)", out.skipped_transcript_lines);
            }
        }
        Command::Config => print!("{}", ws.config.to_toml()),
        Command::Synth { count, missing_rate } => {
            let cfg = SynthConfig { count, seed: ws.config.seed, missing_rate };
            let n = write_corpus(&ws.xyz_dir(), &ws.metadata(), &cfg)?;
            println!("wrote {n} molecules to {}", ws.xyz_dir().display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

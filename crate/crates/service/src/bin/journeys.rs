use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use journeys_core::engagement::HaikuCorpus;
use journeys_core::identity::Lexicon;
use journeys_core::store::Store;
use journeys_service::api::Api;
use journeys_service::config::Config;
use journeys_service::http::router;
use journeys_service::report::mode_share_report;
use journeys_service::seed::ingest_seed_notes;
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Smallest namespace the shipped word lists are allowed to produce.
const MIN_NAMESPACE: u64 = 1_000_000;

#[derive(Parser)]
#[command(version, about = "Journeys and notes server and admin tools")]
struct Cli {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve,
    /// Import seed notes from a line-delimited JSON file.
    Seed { file: PathBuf },
    Report {
        #[command(subcommand)]
        report: Report,
    },
    Lexicon {
        #[command(subcommand)]
        action: LexiconAction,
    },
}

#[derive(Subcommand)]
enum Report {
    /// Check-ins per transit mode.
    ModeShare {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum LexiconAction {
    /// Validate the pseudonym word lists and the haiku corpus.
    Check,
}

fn open_store(config: &Config) -> Result<Store, String> {
    let path = config
        .store
        .path
        .as_ref()
        .ok_or("store.path is not set; nothing to read or write")?;
    Store::open(path, config.policy()).map_err(|e| format!("opening {}: {e}", path.display()))
}

fn seed(config: &Config, file: &PathBuf) -> Result<(), String> {
    let store = open_store(config)?;
    let input = File::open(file).map_err(|e| format!("{}: {e}", file.display()))?;
    let mut rng = match config.rng_seed {
        Some(s) => StdRng::seed_from_u64(s),
        None => StdRng::from_os_rng(),
    };
    let summary = ingest_seed_notes(&store, BufReader::new(input), &mut rng);
    println!(
        "ingested {}, already present {}, failed {}",
        summary.ingested,
        summary.already_present,
        summary.failures.len()
    );
    for f in &summary.failures {
        eprintln!("{}:{}: {}", file.display(), f.line, f.reason);
    }
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(format!("{} records failed", summary.failures.len()))
    }
}

fn lexicon_check() -> Result<(), String> {
    let lexicon = Lexicon::shipped();
    let sizes = lexicon.sizes();
    let n = lexicon.namespace_size();
    println!(
        "attributes {}, geographic {}, habitats {}, families {}",
        sizes.attributes, sizes.geographic, sizes.habitats, sizes.families
    );
    println!("namespace {n}");
    if n < MIN_NAMESPACE {
        return Err(format!("namespace {n} is below {MIN_NAMESPACE}"));
    }
    let corpus = HaikuCorpus::shipped();
    corpus.check_coverage().map_err(|e| e.to_string())?;
    println!("haiku corpus {} entries", corpus.len());
    Ok(())
}

async fn serve(config: Config) -> Result<(), String> {
    tracing_subscriber::fmt::init();
    let api = Api::from_config(&config).map_err(|e| e.to_string())?;
    let listener = tokio::net::TcpListener::bind(config.server.bind)
        .await
        .map_err(|e| format!("binding {}: {e}", config.server.bind))?;
    tracing::info!(addr = %config.server.bind, "listening");
    axum::serve(
        listener,
        router(Arc::new(api)).into_make_service_with_connect_info::<SocketAddr>(),
    )
    .with_graceful_shutdown(async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
    .map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), String> {
    let config = match &cli.config {
        Some(path) => Config::load(path).map_err(|e| e.to_string())?,
        None => Config::default(),
    };
    match cli.command {
        Command::Serve => tokio::runtime::Runtime::new()
            .map_err(|e| e.to_string())?
            .block_on(serve(config)),
        Command::Seed { file } => seed(&config, &file),
        Command::Report {
            report: Report::ModeShare { json },
        } => {
            let report = open_store(&config)?.read(mode_share_report);
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{}", report.to_table());
            }
            Ok(())
        }
        Command::Lexicon {
            action: LexiconAction::Check,
        } => lexicon_check(),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

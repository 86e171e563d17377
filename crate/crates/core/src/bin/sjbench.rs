use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sjbench::harness::pipeline::{evaluate, generate, sanity};
use sjbench::harness::report::AggregateTable;
use sjbench::harness::{EvaluateConfig, GenerateConfig, ModelConfig};
use sjbench::model::protocol::{serve, serve_tcp};
use sjbench::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SCORER: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "sjbench", version, about = "Saliency map faithfulness benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate RISE / occlusion maps for every dataset image.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score saved maps with the configured metrics.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        maps: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Internal-consistency and inter-method tables from evaluate reports.
    Sanity {
        #[arg(long, num_args = 1.., required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a report's aggregate table.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Serve a built-in model over the scorer protocol.
    Serve {
        /// JSON file holding a model description (region_mean or constant).
        #[arg(long)]
        model: PathBuf,
        /// Listen on this TCP address; prints the bound address first.
        #[arg(long, conflicts_with = "stdio", required_unless_present = "stdio")]
        listen: Option<String>,
        /// Speak the protocol over stdin/stdout.
        #[arg(long)]
        stdio: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Ingest { .. } => EXIT_CONFIG,
        Error::ScorerUnavailable(_) => EXIT_SCORER,
        _ => EXIT_FAILURE,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Generate { config, out } => {
            let cfg = GenerateConfig::load(&config)?;
            let res = generate(&cfg, &out)?;
            log::info!("wrote {} maps to {}", res.written.len(), out.display());
            Ok(if res.exclusions.is_empty() { 0 } else { EXIT_PARTIAL })
        }
        Command::Evaluate { config, maps, out } => {
            let cfg = EvaluateConfig::load(&config)?;
            let res = evaluate(&cfg, &maps, &out)?;
            log::info!("{} records, {} excluded", res.records.len(), res.exclusions.len());
            Ok(if res.has_failures() { EXIT_PARTIAL } else { 0 })
        }
        Command::Sanity { reports, out } => {
            let written = sanity(&reports, &out)?;
            for w in written {
                println!("{w}");
            }
            Ok(0)
        }
        Command::Report { input, format } => {
            let path = input.join("aggregate.json");
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            let table: AggregateTable = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            match format {
                Format::Csv => print!("{}", table.to_csv()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&table).unwrap()),
            }
            Ok(0)
        }
        Command::Serve { model, listen, stdio } => {
            let text = std::fs::read_to_string(&model)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", model.display())))?;
            let cfg: ModelConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", model.display())))?;
            if matches!(cfg, ModelConfig::Remote { .. }) {
                return Err(Error::Config("serve needs a built-in model".into()));
            }
            let adapter = cfg.build()?;
            if stdio {
                let (stdin, stdout) = (std::io::stdin(), std::io::stdout());
                serve(adapter.as_ref(), &mut stdin.lock(), &mut stdout.lock())?;
            } else if let Some(addr) = listen {
                let listener = TcpListener::bind(&addr)?;
                println!("{}", listener.local_addr()?);
                std::io::stdout().flush()?;
                serve_tcp(adapter, listener)?;
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("sjbench: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

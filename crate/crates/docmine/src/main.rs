use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use docmine::adapters::Adapters;
use docmine::config::Config;
use docmine::fixture::{generate_corpus, DEFAULT_COUNT, DEFAULT_SEED};
use docmine::store::{DirStorage, Store, SystemClock};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "docmine", version, about = "Human-in-the-loop extraction of tables, maps and entities from scientific PDFs")]
struct Cli {
    /// TOML configuration file; DOCMINE_* variables override it.
    #[arg(long, short, global = true, env = "DOCMINE_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve,
    /// Parse a PDF and print its page models as JSON.
    Parse { pdf: PathBuf },
    /// Write the synthetic fixture corpus with ground-truth sidecars.
    Fixtures {
        dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_COUNT)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Manage users.
    User {
        #[command(subcommand)]
        command: UserCommand,
    },
    /// Write a project's correction log as newline-delimited JSON.
    ExportCorrections {
        project: String,
        /// Output file; standard output when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum UserCommand {
    /// Add a user. The password is read from standard input.
    Add {
        user_id: String,
        #[arg(long, default_value = "")]
        name: String,
    },
    /// List users.
    List,
}

fn open_store(cfg: &Config, adapters: Adapters) -> Result<Store, String> {
    let storage = DirStorage::open(&cfg.store_path).map_err(|e| format!("{}: {e}", cfg.store_path.display()))?;
    Store::open(Box::new(storage), Box::new(SystemClock), cfg.store_settings(), adapters).map_err(|e| e.to_string())
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<(), String> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| format!("{}: {e}", p.display())),
        None => std::io::stdout().write_all(bytes).map_err(|e| e.to_string()),
    }
}

fn run(cli: Cli) -> Result<(), String> {
    let cfg = Config::load(cli.config.as_deref()).map_err(|e| e.to_string())?;
    match cli.command {
        Command::Serve => {
            let store = Arc::new(open_store(&cfg, cfg.adapters())?);
            let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
            rt.block_on(docmine::api::serve(store, &cfg.bind)).map_err(|e| format!("{}: {e}", cfg.bind))
        }
        Command::Parse { pdf } => {
            let bytes = std::fs::read(&pdf).map_err(|e| format!("{}: {e}", pdf.display()))?;
            let pages = docmine::ingest::parse_pdf(&bytes).map_err(|e| e.to_string())?;
            let json = serde_json::to_vec_pretty(&pages).map_err(|e| e.to_string())?;
            write_out(None, &json)
        }
        Command::Fixtures { dir, count, seed } => {
            std::fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            let corpus = generate_corpus(seed, count);
            for f in &corpus {
                f.write_to(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            }
            eprintln!("wrote {} fixtures to {}", corpus.len(), dir.display());
            Ok(())
        }
        Command::User { command: UserCommand::Add { user_id, name } } => {
            let mut password = String::new();
            std::io::stdin().read_to_string(&mut password).map_err(|e| e.to_string())?;
            let password = password.trim_end_matches(['\r', '\n']);
            let store = open_store(&cfg, Adapters::default())?;
            let display = if name.is_empty() { user_id.clone() } else { name };
            store.add_user(&user_id, &display, password).map_err(|e| e.to_string())?;
            eprintln!("added user {user_id}");
            Ok(())
        }
        Command::User { command: UserCommand::List } => {
            let store = open_store(&cfg, Adapters::default())?;
            for u in store.list_users().map_err(|e| e.to_string())? {
                println!("{}\t{}", u.user_id.as_str(), u.display_name);
            }
            Ok(())
        }
        Command::ExportCorrections { project, out } => {
            let store = open_store(&cfg, Adapters::default())?;
            let bytes = store.export_corrections(&project).map_err(|e| e.to_string())?;
            write_out(out.as_deref(), &bytes)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info"))).with_writer(std::io::stderr).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

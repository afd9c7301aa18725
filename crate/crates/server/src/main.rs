use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use parley::config::ProviderSettings;
use parley::{router, AppState};
use parley_core::gateway::{Fixtures, Gateway, HttpProvider, MockProvider, RecordingProvider};
use parley_core::samples;
use parley_core::session::SessionStore;
use parley_core::workflow::Workflow;

#[derive(Parser)]
#[command(name = "parley", version, about = "Conflict-resolution training service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        /// Port to bind; 0 picks a free port.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value = "parley-data")]
        data_dir: PathBuf,
        /// JSON file selecting the provider; the environment is used otherwise.
        #[arg(long)]
        provider_config: Option<PathBuf>,
    },
    /// Inspect or move stored sessions.
    Session {
        #[command(subcommand)]
        command: SessionCommand,
    },
    /// Capture or check mock fixtures.
    Fixtures {
        #[command(subcommand)]
        command: FixturesCommand,
    },
}

#[derive(Subcommand)]
enum SessionCommand {
    /// Print a session's event log as JSON lines.
    Export {
        id: String,
        #[arg(long, default_value = "parley-data")]
        data_dir: PathBuf,
    },
    /// Store an exported event log as a session ("-" reads stdin).
    Import {
        file: PathBuf,
        #[arg(long, default_value = "parley-data")]
        data_dir: PathBuf,
    },
    /// List stored session ids.
    List {
        #[arg(long, default_value = "parley-data")]
        data_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum FixturesCommand {
    /// Run the scripted flow against a live provider and save its replies.
    Record {
        #[arg(long)]
        provider_config: Option<PathBuf>,
        /// Screenshot files to upload (PNG or JPEG).
        #[arg(long = "screenshot", required = true)]
        screenshots: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled demo fixture set.
    Demo {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the scripted flow against a fixture file and report the outcome.
    Replay {
        #[arg(long)]
        fixtures: PathBuf,
        /// Screenshot files; a generated placeholder image otherwise.
        #[arg(long = "screenshot")]
        screenshots: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Serve {
            port,
            host,
            data_dir,
            provider_config,
        } => {
            let settings = ProviderSettings::resolve(provider_config.as_deref())?;
            let gateway = settings.gateway()?;
            let store = SessionStore::open(&data_dir)
                .with_context(|| format!("opening data dir {}", data_dir.display()))?;
            let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid host or port")?;
            serve(addr, Workflow::new(Arc::new(gateway), store))
        }
        Command::Session { command } => session_command(command),
        Command::Fixtures { command } => fixtures_command(command),
    }
}

fn serve(addr: SocketAddr, workflow: Workflow) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let bound = listener.local_addr()?;
        println!("listening on http://{bound}");
        tracing::info!(%bound, "serving");
        axum::serve(listener, router(AppState::new(workflow)))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

fn open_store(data_dir: &Path) -> anyhow::Result<SessionStore> {
    SessionStore::open(data_dir).with_context(|| format!("opening data dir {}", data_dir.display()))
}

fn session_command(command: SessionCommand) -> anyhow::Result<()> {
    match command {
        SessionCommand::Export { id, data_dir } => {
            let store = open_store(&data_dir)?;
            print!("{}", store.export(&id)?);
        }
        SessionCommand::Import { file, data_dir } => {
            let text = if file.as_os_str() == "-" {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s)?;
                s
            } else {
                std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?
            };
            let session = open_store(&data_dir)?.import(&text)?;
            println!("{}", session.session_id);
        }
        SessionCommand::List { data_dir } => {
            for id in open_store(&data_dir)?.list()? {
                println!("{id}");
            }
        }
    }
    Ok(())
}

fn read_images(paths: &[PathBuf]) -> anyhow::Result<Vec<Vec<u8>>> {
    if paths.is_empty() {
        return Ok(vec![samples::png_bytes()]);
    }
    paths
        .iter()
        .map(|p| std::fs::read(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn scratch_workflow(gateway: Gateway) -> anyhow::Result<(Workflow, tempfile::TempDir)> {
    let dir = tempfile::tempdir()?;
    let store = SessionStore::open(dir.path())?;
    Ok((Workflow::new(Arc::new(gateway), store), dir))
}

fn fixtures_command(command: FixturesCommand) -> anyhow::Result<()> {
    match command {
        FixturesCommand::Record {
            provider_config,
            screenshots,
            out,
        } => {
            let settings = ProviderSettings::resolve(provider_config.as_deref())?;
            let Some(config) = settings.http_config() else {
                bail!("recording needs an http provider");
            };
            let images = read_images(&screenshots)?;
            let budget = config.retry_budget;
            let recorder = Arc::new(RecordingProvider::new(Arc::new(HttpProvider::new(config))));
            let (workflow, dir) = scratch_workflow(Gateway::new(recorder.clone()).with_retry_budget(budget))?;
            let outcome = samples::run_happy_path(&workflow, &images);
            std::fs::write(&out, recorder.fixtures().to_json_pretty())
                .with_context(|| format!("writing {}", out.display()))?;
            drop(dir);
            let session = outcome.context("scripted flow failed; partial fixtures were written")?;
            println!("recorded {} provider calls to {}", workflow.gateway().log().len(), out.display());
            println!("final state: {}", session.state);
        }
        FixturesCommand::Demo { out } => {
            std::fs::write(&out, samples::demo_fixtures().to_json_pretty())
                .with_context(|| format!("writing {}", out.display()))?;
        }
        FixturesCommand::Replay { fixtures, screenshots } => {
            let fixtures = Fixtures::load(&fixtures).with_context(|| format!("loading {}", fixtures.display()))?;
            let images = read_images(&screenshots)?;
            let (workflow, dir) = scratch_workflow(Gateway::new(Arc::new(MockProvider::new(fixtures))))?;
            let outcome = samples::run_happy_path(&workflow, &images);
            drop(dir);
            let session = outcome.context("scripted flow failed against the fixtures")?;
            println!("replayed {} provider calls", workflow.gateway().log().len());
            println!("final state: {}", session.state);
        }
    }
    Ok(())
}

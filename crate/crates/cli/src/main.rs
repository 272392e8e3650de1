use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use uupl_service::{router, AppState, SessionStore};
use uupl_sim::export::{to_csv, to_json};
use uupl_sim::{
    default_oracle_seed, export_results, run_experiment, ExperimentSummary, ExportFormat, GroundTruthTask,
    MethodConfig, MethodVariant, TaskKind, TaskProfile,
};

#[derive(Parser)]
#[command(name = "uupl", version, about = "Preference learning with graded human uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials of one method against a simulated human.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "full")]
        method: MethodVariant,
    },
    /// Run all four method variants on the same seeds.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Serve the elicitation API.
    Serve {
        /// Overridden by UUPL_PORT.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Overridden by UUPL_DATA_DIR.
        #[arg(long, default_value = "sessions")]
        data_dir: PathBuf,
        /// Origin allowed to call the API from a browser; `*` for any.
        #[arg(long)]
        cors_origin: Option<String>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: TaskKind,
    #[arg(long, default_value_t = 6)]
    trials: usize,
    /// Defaults to 50, or 100 for driving.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seed of the simulated human; derived from --seed when absent.
    #[arg(long)]
    oracle_seed: Option<u64>,
    /// Written to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the extension of --out, else csv.
    #[arg(long)]
    format: Option<ExportFormat>,
}

impl RunArgs {
    fn format(&self) -> ExportFormat {
        self.format.unwrap_or_else(|| match self.out.as_deref().and_then(Path::extension).and_then(|e| e.to_str()) {
            Some("json") => ExportFormat::Json,
            _ => ExportFormat::Csv,
        })
    }

    fn run(&self, variants: &[MethodVariant]) -> Result<()> {
        let profile = TaskProfile::for_task(self.task);
        let task = GroundTruthTask::new(self.task)?;
        let methods = variants.iter().map(|&v| MethodConfig::new(&profile, v)).collect::<uupl_sim::Result<Vec<_>>>()?;
        let oracle = profile.oracle(&task, self.oracle_seed.unwrap_or_else(|| default_oracle_seed(self.seed)))?;
        let iters = self.iters.unwrap_or(profile.iterations);
        log::info!(
            "{}: {} trial(s) x {iters} iterations, methods {}",
            self.task,
            self.trials,
            variants.iter().map(|v| v.name()).collect::<Vec<_>>().join(",")
        );
        let summary = run_experiment(&task, &methods, &oracle, self.trials, iters, self.seed)?;
        self.write(&summary)?;
        for m in &summary.methods {
            eprintln!("{:<14} {:.4} +/- {:.4}", m.method, m.final_mean, m.final_std);
        }
        Ok(())
    }

    fn write(&self, summary: &ExperimentSummary) -> Result<()> {
        let format = self.format();
        if let Some(path) = &self.out {
            return Ok(export_results(summary, path, format)?);
        }
        let bytes = match format {
            ExportFormat::Csv => to_csv(summary)?,
            ExportFormat::Json => to_json(summary)?,
        };
        std::io::stdout().lock().write_all(&bytes)?;
        Ok(())
    }
}

/// An environment variable wins over the flag when set.
fn env_override<T: std::str::FromStr>(name: &str, flag: T) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    match std::env::var(name) {
        Ok(v) if !v.is_empty() => v.parse().with_context(|| format!("invalid {name} `{v}`")),
        _ => Ok(flag),
    }
}

async fn serve(addr: SocketAddr, data_dir: PathBuf, cors_origin: Option<String>) -> Result<()> {
    let store = SessionStore::open(&data_dir).with_context(|| format!("opening {}", data_dir.display()))?;
    let mut app = router(AppState::new(store));
    if let Some(origin) = cors_origin {
        app = app.layer(uupl_service::cors(&origin)?);
    }
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    log::info!("serving on http://{} with sessions in {}", listener.local_addr()?, data_dir.display());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Simulate { run, method } => run.run(&[method]),
        Command::Ablation { run } => run.run(&MethodVariant::ALL),
        Command::Serve { port, host, data_dir, cors_origin } => {
            let port = env_override("UUPL_PORT", port)?;
            let data_dir = env_override("UUPL_DATA_DIR", data_dir)?;
            if data_dir.as_os_str().is_empty() {
                bail!("data directory must not be empty");
            }
            tokio::runtime::Runtime::new()?.block_on(serve(SocketAddr::new(host, port), data_dir, cors_origin))
        }
    }
}

//! `teleop` command line. Every command goes through the HTTP service: pass
//! `--server` to use a running one, otherwise an embedded server is started
//! on a free local port for the duration of the command.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use teleop_client::{Client, ClientError};
use teleop_core::api::{MetricsRequest, RunRequest, RunResponse};
use teleop_core::scenario::{read_log, LogFormat, Metrics, ScenarioConfig};
use teleop_server::{start, Mode, ServerHandle};

#[derive(Debug, Parser)]
#[command(name = "teleop", version, about = "Teleoperation workbench")]
struct Cli {
    /// Base URL of a running server (for example http://127.0.0.1:8080).
    #[arg(long, global = true)]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scripted scenario and print its metrics.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// One-way link delay override (s).
        #[arg(long)]
        delay: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the per-tick log.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Log encoding; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<LogFormat>,
    },
    /// Print metrics of a recorded log.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        format: Option<LogFormat>,
        /// Tracking tolerance (m). Defaults to the scenario's replica
        /// saturation error when --scenario is given, else 0.05.
        #[arg(long)]
        x_b: Option<f64>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Serve a live session for operator UIs.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Stream a recorded log to UIs as if it were live.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long)]
        format: Option<LogFormat>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            message: e.to_string(),
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("teleop: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

async fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            scenario,
            delay,
            seed,
            log,
            format,
        } => {
            let cfg = ScenarioConfig::from_file(&scenario)?;
            let format = log
                .as_deref()
                .map(|p| format.unwrap_or_else(|| LogFormat::from_path(p)));
            let req = RunRequest {
                scenario: cfg,
                delay,
                seed,
                format,
            };
            with_client(cli.server, |c| async move {
                run(&c, &req, log.as_deref()).await
            })
            .await
        }
        Command::Metrics {
            log,
            format,
            x_b,
            scenario,
        } => {
            let format = format.unwrap_or_else(|| LogFormat::from_path(&log));
            let text =
                std::fs::read_to_string(&log).map_err(|e| format!("{}: {e}", log.display()))?;
            let x_b = match (x_b, scenario) {
                (Some(x), _) => Some(x),
                (None, Some(s)) => Some(ScenarioConfig::from_file(s)?.replica_fic.x_b()),
                (None, None) => None,
            };
            let req = MetricsRequest {
                log: text,
                format,
                x_b,
            };
            with_client(cli.server, |c| async move {
                let m = c.metrics(&req).await?;
                print_metrics(&m);
                Ok(())
            })
            .await
        }
        Command::Serve {
            scenario,
            port,
            host,
        } => {
            if cli.server.is_some() {
                return Err("serve starts its own server; drop --server".into());
            }
            let cfg = ScenarioConfig::from_file(&scenario)?;
            if !cfg.is_live() {
                return Err(format!(
                    "{} has a scripted operator; serve needs `\"operator\": {{\"kind\": \"live\"}}` (use `run` instead)",
                    scenario.display()
                )
                .into());
            }
            host_until_ctrl_c(&host, port, Mode::Live(cfg)).await
        }
        Command::Replay {
            log,
            port,
            format,
            host,
        } => {
            if cli.server.is_some() {
                return Err("replay starts its own server; drop --server".into());
            }
            let format = format.unwrap_or_else(|| LogFormat::from_path(&log));
            let rows = read_log(&log, format)?;
            if rows.is_empty() {
                return Err(format!("{}: log has no rows", log.display()).into());
            }
            host_until_ctrl_c(&host, port, Mode::Replay(rows)).await
        }
    }
}

/// Runs `f` against `server`, or against an embedded server on a free port.
async fn with_client<F, Fut>(server: Option<String>, f: F) -> Result<(), Failure>
where
    F: FnOnce(Client) -> Fut,
    Fut: std::future::Future<Output = Result<(), Failure>>,
{
    match server {
        Some(url) => f(Client::new(url)).await,
        None => {
            let handle = start(SocketAddr::from(([127, 0, 0, 1], 0)), Mode::Idle).await?;
            let result = f(Client::new(handle.url())).await;
            handle.shutdown().await?;
            result
        }
    }
}

async fn run(c: &Client, req: &RunRequest, log: Option<&Path>) -> Result<(), Failure> {
    match c.run(req).await {
        Ok(resp) => {
            report(&resp, log)?;
            Ok(())
        }
        Err(ClientError::Aborted(resp)) => {
            report(&resp, log)?;
            Err(Failure {
                code: 2,
                message: resp.aborted.clone().unwrap_or_default(),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn report(resp: &RunResponse, log: Option<&Path>) -> Result<(), Failure> {
    let m = &resp.meta;
    println!("scenario          {}", m.scenario);
    println!("config_hash       {}", m.config_hash);
    println!("seed              {}", m.seed);
    println!("version           {}", m.version);
    if let Some(metrics) = &resp.metrics {
        print_metrics(metrics);
    }
    for e in &resp.events {
        println!("event             {:?} at {} s", e.kind, e.t);
    }
    for (name, s) in [("m2r", &resp.m2r), ("r2m", &resp.r2m)] {
        println!(
            "{name}               sent {} delivered {} dropped {} stale {} dead_link {} in_flight {}",
            s.sent, s.delivered, s.dropped, s.stale, s.dead_link, s.in_flight
        );
    }
    if let (Some(path), Some(body)) = (log, &resp.log) {
        std::fs::write(path, body).map_err(|e| format!("{}: {e}", path.display()))?;
        println!("log               {}", path.display());
    }
    Ok(())
}

fn print_metrics(m: &Metrics) {
    let v = |a: [f64; 3]| format!("{:.6e} {:.6e} {:.6e}", a[0], a[1], a[2]);
    println!("rows              {}", m.rows);
    println!("duration          {} s", m.duration);
    println!("max_abs_err       {} m", v(m.max_abs_err));
    println!("max_err_norm      {:.6e} m", m.max_err_norm);
    println!("free_ticks        {}", m.free_ticks);
    println!("free_motion       {:.6}", m.free_motion_fraction);
    println!("max_abs_fcmd      {} N", v(m.max_abs_fcmd));
    println!("max_fext          {:.6e} N", m.max_fext);
    println!("controller_work   {:.6e} J", m.controller_work);
    match m.bond_break_time {
        Some(t) => println!("bond_break_time   {t} s"),
        None => println!("bond_break_time   none"),
    }
}

async fn host_until_ctrl_c(host: &str, port: u16, mode: Mode) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| format!("bad address {host}:{port}: {e}"))?;
    let handle: ServerHandle = start(addr, mode).await?;
    let health = Client::new(handle.url()).health().await?;
    println!("listening on {} ({})", handle.url(), health.mode);
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await?;
    Ok(())
}

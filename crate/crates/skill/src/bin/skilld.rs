use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skill::{Daemon, DaemonConfig};
use skill_core::acquisition::{SourceConfig, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "skilld", version, about = "Local biosignal daemon")]
struct Args {
    /// TOML config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    bind: Option<IpAddr>,
    #[arg(long)]
    port: Option<u16>,
    /// Do not advertise over mDNS.
    #[arg(long)]
    no_mdns: bool,
    /// IANA zone for night detection.
    #[arg(long)]
    tz: Option<String>,
    /// Stream a paced synthetic headset for this many seconds.
    #[arg(long, value_name = "SECONDS", conflicts_with_all = ["replay", "socket"])]
    synthetic: Option<f64>,
    /// Replay a recorded stream at its recorded pace.
    #[arg(long, conflicts_with = "socket")]
    replay: Option<PathBuf>,
    /// Read frames from a TCP frame server.
    #[arg(long, value_name = "HOST:PORT")]
    socket: Option<String>,
    /// Directory of extra protocol recipes.
    #[arg(long)]
    recipes: Option<PathBuf>,
    /// Multiply timed protocol steps by this factor.
    #[arg(long)]
    time_scale: Option<f64>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write the eight-session demo store into an empty DIR.
    SeedFixture { dir: PathBuf },
}

fn config(args: &Args) -> Result<DaemonConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => DaemonConfig::load(p).map_err(|e| e.to_string())?,
        None => DaemonConfig::default(),
    };
    cfg.apply_env().map_err(|e| e.to_string())?;
    if let Some(v) = &args.store {
        cfg.store = v.clone();
    }
    if let Some(v) = args.bind {
        cfg.bind = v;
    }
    if let Some(v) = args.port {
        cfg.port = v;
    }
    if args.no_mdns {
        cfg.mdns = false;
    }
    if let Some(v) = &args.tz {
        cfg.tz = v.clone();
    }
    if let Some(v) = &args.recipes {
        cfg.recipes = Some(v.clone());
    }
    if let Some(v) = args.time_scale {
        cfg.time_scale = v;
    }
    if let Some(secs) = args.synthetic {
        cfg.source = Some(SourceConfig::Synthetic { spec: SynthSpec::muse_like(secs, 256.0, 0.0), seed: 1, pace: true });
    } else if let Some(path) = &args.replay {
        cfg.source = Some(SourceConfig::Replay { path: path.clone(), pace: true });
    } else if let Some(address) = &args.socket {
        cfg.source = Some(SourceConfig::Socket { address: address.clone(), timeout_ms: 2000 });
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    if let Some(Cmd::SeedFixture { dir }) = &args.command {
        return match skill_core::fixture::build_fixture(dir) {
            Ok(_) => {
                println!("fixture written to {}", dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }
    let cfg = match config(&args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(4);
        }
    };
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    rt.block_on(async move {
        let daemon = match Daemon::start(cfg).await {
            Ok(d) => d,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
        };
        log::info!("ready on {}", daemon.addr);
        let _ = tokio::signal::ctrl_c().await;
        log::info!("shutting down");
        daemon.shutdown().await;
        ExitCode::SUCCESS
    })
}

//! Daemon assembly: store, command API, server, mDNS and the acquisition pipeline.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use skill_core::acquisition::{open_source, AcquisitionError, SourceConfig};
use skill_core::api::{run_pipeline, Api, ApiConfig, ApiError, PipelineConfig, PipelineReport, DEFAULT_PORT};
use skill_core::protocols::{now_unix, EngineOptions, ProtocolError};
use skill_core::store::{Store, StoreConfig, StoreError};

use crate::mdns::{Advertisement, DEFAULT_PROBE};
use crate::server::{serve, BroadcastEvents, ServerHandle};

#[derive(Debug, thiserror::Error)]
pub enum DaemonError {
    #[error("config {0}: {1}")]
    Config(PathBuf, String),
    #[error("{0}")]
    Invalid(String),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("cannot listen on {0}: {1}")]
    Bind(SocketAddr, #[source] std::io::Error),
    #[error("source: {0}")]
    Source(#[from] AcquisitionError),
    #[error("recipes: {0}")]
    Recipes(#[from] ProtocolError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DaemonConfig {
    /// Store directory; created on first start.
    pub store: PathBuf,
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub mdns: bool,
    /// How long to listen for other instances before choosing a name.
    pub mdns_probe_ms: u64,
    /// IANA zone for night detection.
    pub tz: String,
    /// Extra recipe files (`*.json`) next to the bundled ones.
    pub recipes: Option<PathBuf>,
    /// Scales every timed protocol step; 1.0 is real time.
    pub time_scale: f64,
    pub source: Option<SourceConfig>,
    pub pipeline: PipelineConfig,
}

fn default_store() -> PathBuf {
    std::env::var_os("HOME").map_or_else(|| PathBuf::from(".skill"), |h| Path::new(&h).join(".skill"))
}

impl Default for DaemonConfig {
    fn default() -> Self {
        Self {
            store: default_store(),
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            mdns: true,
            mdns_probe_ms: DEFAULT_PROBE.as_millis() as u64,
            tz: "UTC".into(),
            recipes: None,
            time_scale: 1.0,
            source: None,
            pipeline: PipelineConfig { embed_every: 4, ..PipelineConfig::default() },
        }
    }
}

impl DaemonConfig {
    pub fn load(path: &Path) -> Result<Self, DaemonError> {
        let text = std::fs::read_to_string(path).map_err(|e| DaemonError::Config(path.into(), e.to_string()))?;
        toml::from_str(&text).map_err(|e| DaemonError::Config(path.into(), e.to_string()))
    }

    /// Applies `SKILL_BIND` and `SKILL_PORT`.
    pub fn apply_env(&mut self) -> Result<(), DaemonError> {
        if let Ok(v) = std::env::var("SKILL_BIND") {
            self.bind = v.parse().map_err(|_| DaemonError::Invalid(format!("SKILL_BIND: `{v}` is not an address")))?;
        }
        if let Ok(v) = std::env::var("SKILL_PORT") {
            self.port = v.parse().map_err(|_| DaemonError::Invalid(format!("SKILL_PORT: `{v}` is not a port")))?;
        }
        Ok(())
    }

    pub fn bind_addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}

/// A running daemon. Call [`Daemon::shutdown`] to stop it cleanly.
pub struct Daemon {
    pub api: Arc<Api>,
    pub addr: SocketAddr,
    /// The advertised mDNS instance name, when advertising.
    pub instance: Option<String>,
    server: ServerHandle,
    advert: Option<Advertisement>,
    stop: Arc<AtomicBool>,
    pipeline: Option<JoinHandle<Result<PipelineReport, ApiError>>>,
}

impl Daemon {
    pub async fn start(config: DaemonConfig) -> Result<Self, DaemonError> {
        let tz = config.tz.parse().map_err(|_| DaemonError::Invalid(format!("unknown time zone `{}`", config.tz)))?;
        if !(config.time_scale > 0.0) {
            return Err(DaemonError::Invalid("time_scale must be positive".into()));
        }
        let store = Arc::new(Store::open(&config.store, StoreConfig::default())?);
        let events = BroadcastEvents::new();
        let tx = events.0.clone();
        let api_config = ApiConfig {
            tz,
            protocol: EngineOptions { time_scale: config.time_scale, ..EngineOptions::default() },
            ..ApiConfig::default()
        };
        let api = Arc::new(Api::new(store, Arc::new(events), api_config));
        if let Some(dir) = &config.recipes {
            let loaded = api.protocols().load_dir(dir)?;
            log::info!("loaded {} recipe(s) from {}", loaded.len(), dir.display());
        }

        // Open the source before binding so a bad source fails the start.
        let source = match &config.source {
            Some(cfg) => Some(open_source(&live_source(cfg))?),
            None => None,
        };

        let bind = config.bind_addr();
        let server = serve(api.clone(), tx, bind).await.map_err(|e| DaemonError::Bind(bind, e))?;
        let addr = server.addr;

        let advert = if config.mdns {
            let probe = Duration::from_millis(config.mdns_probe_ms);
            let ip = addr.ip();
            match tokio::task::spawn_blocking(move || Advertisement::start(ip, addr.port(), probe)).await {
                Ok(Ok(a)) => Some(a),
                Ok(Err(e)) => {
                    log::warn!("{e}; reachable only by explicit address");
                    None
                }
                Err(e) => {
                    log::warn!("mDNS: {e}");
                    None
                }
            }
        } else {
            None
        };
        let instance = advert.as_ref().map(|a| a.instance.clone());

        let stop = Arc::new(AtomicBool::new(false));
        let pipeline = source.map(|source| {
            let (api, stop, cfg) = (api.clone(), stop.clone(), config.pipeline.clone());
            std::thread::Builder::new()
                .name("pipeline".into())
                .spawn(move || {
                    let r = run_pipeline(&api, source, &cfg, &stop);
                    match &r {
                        Ok(rep) => log::info!("source ended: {} frames, {} epochs", rep.frames, rep.epochs),
                        Err(e) => log::error!("pipeline: {e}"),
                    }
                    r
                })
                .expect("spawn pipeline thread")
        });

        Ok(Self { api, addr, instance, server, advert, stop, pipeline })
    }

    /// True once the source has ended (or when there is none).
    pub fn source_finished(&self) -> bool {
        self.pipeline.as_ref().is_none_or(|p| p.is_finished())
    }

    /// Withdraws the mDNS record, stops serving and joins the pipeline.
    pub async fn shutdown(mut self) -> Option<Result<PipelineReport, ApiError>> {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(mut a) = self.advert.take() {
            let _ = tokio::task::spawn_blocking(move || a.withdraw()).await;
        }
        self.server.stop().await;
        let p = self.pipeline.take()?;
        tokio::task::spawn_blocking(move || p.join().ok()).await.ok().flatten()
    }
}

/// A synthetic source without a start time starts now.
fn live_source(cfg: &SourceConfig) -> SourceConfig {
    let mut cfg = cfg.clone();
    if let SourceConfig::Synthetic { spec, .. } = &mut cfg {
        if spec.start_t == 0.0 {
            spec.start_t = now_unix().floor();
        }
    }
    cfg
}

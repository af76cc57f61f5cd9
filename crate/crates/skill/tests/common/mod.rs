#![allow(dead_code)]

use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;
use std::process::{Command, Output};

use skill::{Daemon, DaemonConfig};
use skill_core::acquisition::SourceConfig;
use tokio::runtime::Runtime;

/// A daemon on its own runtime, shut down on drop.
pub struct TestDaemon {
    pub rt: Runtime,
    pub daemon: Option<Daemon>,
    pub dir: tempfile::TempDir,
}

impl TestDaemon {
    pub fn addr(&self) -> String {
        self.daemon.as_ref().unwrap().addr.to_string()
    }

    pub fn daemon(&self) -> &Daemon {
        self.daemon.as_ref().unwrap()
    }

    pub fn stop(&mut self) {
        if let Some(d) = self.daemon.take() {
            self.rt.block_on(d.shutdown());
        }
    }
}

impl Drop for TestDaemon {
    fn drop(&mut self) {
        self.stop();
    }
}

pub fn config(store: &Path) -> DaemonConfig {
    DaemonConfig {
        store: store.to_path_buf(),
        bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
        port: 0,
        mdns: false,
        tz: "America/New_York".into(),
        time_scale: 0.01,
        ..DaemonConfig::default()
    }
}

pub fn start_with(dir: tempfile::TempDir, edit: impl FnOnce(&mut DaemonConfig)) -> TestDaemon {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build().unwrap();
    let mut cfg = config(dir.path());
    edit(&mut cfg);
    let daemon = rt.block_on(Daemon::start(cfg)).expect("daemon starts");
    TestDaemon { rt, daemon: Some(daemon), dir }
}

/// A daemon over a fresh copy of the fixture store.
pub fn fixture_daemon() -> TestDaemon {
    let dir = tempfile::tempdir().unwrap();
    skill_core::fixture::build_fixture(dir.path()).unwrap();
    start_with(dir, |_| {})
}

pub fn empty_daemon() -> TestDaemon {
    start_with(tempfile::tempdir().unwrap(), |_| {})
}

pub fn synthetic_daemon(seconds: f64) -> TestDaemon {
    let spec = skill_core::acquisition::SynthSpec::muse_like(seconds, 256.0, 0.0);
    start_with(tempfile::tempdir().unwrap(), |c| c.source = Some(SourceConfig::Synthetic { spec, seed: 3, pace: true }))
}

/// Runs the `skill` binary with a clean environment for address and zone.
pub fn skill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skill"))
        .args(args)
        .env_remove("SKILL_ADDR")
        .env_remove("SKILL_TZ")
        .env("TZ", "UTC")
        .output()
        .expect("run skill")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn core_golden(name: &str) -> String {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden").join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

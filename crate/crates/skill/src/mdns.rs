//! mDNS advertisement of the daemon and discovery from the client.

use std::collections::BTreeSet;
use std::net::{IpAddr, Ipv4Addr};
use std::time::{Duration, Instant};

use mdns_sd::{IfKind, ServiceDaemon, ServiceEvent, ServiceInfo};
use skill_core::api::API_FORMAT_VERSION;

pub const SERVICE_TYPE: &str = "_neuroskill._tcp.local.";
pub const INSTANCE: &str = "skill";
pub const HOSTNAME: &str = "skill.local.";
/// How long the advertiser listens for existing instances before picking a name.
pub const DEFAULT_PROBE: Duration = Duration::from_millis(1500);

#[derive(Debug, thiserror::Error)]
pub enum MdnsError {
    #[error("mDNS: {0}")]
    Daemon(#[from] mdns_sd::Error),
}

/// A found daemon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Found {
    pub instance: String,
    /// Without the trailing dot, e.g. `skill.local`.
    pub host: String,
    pub port: u16,
    pub addr: IpAddr,
    pub format_version: Option<String>,
}

fn instance_of(fullname: &str) -> String {
    fullname.strip_suffix(&format!(".{SERVICE_TYPE}")).unwrap_or(fullname).to_string()
}

/// `skill`, then `skill (2)`, `skill (3)`, ... skipping names in use.
pub fn free_instance_name(taken: &BTreeSet<String>) -> String {
    if !taken.contains(INSTANCE) {
        return INSTANCE.to_string();
    }
    (2..).map(|n| format!("{INSTANCE} ({n})")).find(|n| !taken.contains(n)).expect("unbounded")
}

fn client_daemon() -> Result<ServiceDaemon, MdnsError> {
    let d = ServiceDaemon::new()?;
    d.enable_interface(IfKind::LoopbackV4)?;
    d.disable_interface(IfKind::IPv6)?;
    Ok(d)
}

/// Instance names currently answering for the service type.
fn instances(d: &ServiceDaemon, window: Duration) -> Result<BTreeSet<String>, MdnsError> {
    let rx = d.browse(SERVICE_TYPE)?;
    let deadline = Instant::now() + window;
    let mut names = BTreeSet::new();
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        match rx.recv_timeout(left) {
            Ok(ServiceEvent::ServiceFound(_, full)) => {
                names.insert(instance_of(&full));
            }
            Ok(ServiceEvent::ServiceResolved(info)) => {
                names.insert(instance_of(info.get_fullname()));
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
    let _ = d.stop_browse(SERVICE_TYPE);
    Ok(names)
}

/// A registered service; withdrawn by [`Advertisement::withdraw`] or on drop.
pub struct Advertisement {
    daemon: Option<ServiceDaemon>,
    fullname: String,
    pub instance: String,
}

impl Advertisement {
    /// Registers the daemon at `ip:port`. A loopback `ip` keeps the
    /// announcement on the loopback interface.
    pub fn start(ip: IpAddr, port: u16, probe: Duration) -> Result<Self, MdnsError> {
        let d = ServiceDaemon::new()?;
        let loopback = ip.is_loopback() || ip.is_unspecified();
        if ip.is_loopback() {
            d.disable_interface(IfKind::All)?;
        }
        d.enable_interface(IfKind::LoopbackV4)?;
        d.disable_interface(IfKind::IPv6)?;
        let taken = if probe.is_zero() { BTreeSet::new() } else { instances(&d, probe)? };
        let instance = free_instance_name(&taken);
        let version = API_FORMAT_VERSION.to_string();
        let props = [("format_version", version.as_str())];
        let info = if ip.is_unspecified() {
            ServiceInfo::new(SERVICE_TYPE, &instance, HOSTNAME, IpAddr::V4(Ipv4Addr::LOCALHOST), port, &props[..])?.enable_addr_auto()
        } else {
            ServiceInfo::new(SERVICE_TYPE, &instance, HOSTNAME, ip, port, &props[..])?
        };
        let fullname = info.get_fullname().to_string();
        d.register(info)?;
        log::info!("mDNS: advertising \"{instance}\" on port {port}{}", if loopback { " (loopback)" } else { "" });
        Ok(Self { daemon: Some(d), fullname, instance })
    }

    /// Sends goodbye packets and stops the responder.
    pub fn withdraw(&mut self) {
        let Some(d) = self.daemon.take() else { return };
        if let Ok(rx) = d.unregister(&self.fullname) {
            let _ = rx.recv_timeout(Duration::from_secs(1));
        }
        if let Ok(rx) = d.shutdown() {
            let _ = rx.recv_timeout(Duration::from_secs(1));
        }
    }
}

impl Drop for Advertisement {
    fn drop(&mut self) {
        self.withdraw();
    }
}

/// Browses for up to `timeout`, returning as soon as the plain `skill`
/// instance resolves; otherwise the first other instance seen.
pub fn discover(timeout: Duration) -> Result<Option<Found>, MdnsError> {
    let d = client_daemon()?;
    let rx = d.browse(SERVICE_TYPE)?;
    let deadline = Instant::now() + timeout;
    let mut fallback = None;
    while let Some(left) = deadline.checked_duration_since(Instant::now()) {
        let Ok(ev) = rx.recv_timeout(left) else { break };
        let ServiceEvent::ServiceResolved(info) = ev else { continue };
        let Some(addr) = preferred_addr(&info) else { continue };
        let found = Found {
            instance: instance_of(info.get_fullname()),
            host: info.get_hostname().trim_end_matches('.').to_string(),
            port: info.get_port(),
            addr,
            format_version: info.get_property_val_str("format_version").map(String::from),
        };
        if found.instance == INSTANCE {
            fallback = Some(found);
            break;
        }
        fallback.get_or_insert(found);
    }
    let _ = d.stop_browse(SERVICE_TYPE);
    let _ = d.shutdown();
    Ok(fallback)
}

/// Lists every instance seen within `window`.
pub fn browse_instances(window: Duration) -> Result<BTreeSet<String>, MdnsError> {
    let d = client_daemon()?;
    let names = instances(&d, window);
    let _ = d.shutdown();
    names
}

fn preferred_addr(info: &ServiceInfo) -> Option<IpAddr> {
    let v4 = info.get_addresses_v4();
    v4.iter().find(|a| a.is_loopback()).or_else(|| v4.iter().next()).map(|a| IpAddr::V4(**a))
}

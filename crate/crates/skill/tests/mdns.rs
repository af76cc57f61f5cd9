//! Runs against real multicast on the loopback interface, so it is one test:
//! instances from parallel tests would be visible to each other.

mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use mdns_sd::{IfKind, ServiceDaemon, ServiceEvent};
use skill::mdns::{browse_instances, discover, SERVICE_TYPE};
use skill_core::api::DEFAULT_PORT;

use common::*;

fn browser() -> (ServiceDaemon, mdns_sd::Receiver<ServiceEvent>) {
    let d = ServiceDaemon::new().unwrap();
    d.enable_interface(IfKind::LoopbackV4).unwrap();
    d.disable_interface(IfKind::IPv6).unwrap();
    let rx = d.browse(SERVICE_TYPE).unwrap();
    (d, rx)
}

#[test]
fn advertise_discover_collide_withdraw() {
    let dir = tempfile::tempdir().unwrap();
    skill_core::fixture::build_fixture(dir.path()).unwrap();
    let mut first = start_with(dir, |c| {
        c.port = DEFAULT_PORT;
        c.mdns = true;
    });
    assert_eq!(first.daemon().instance.as_deref(), Some("skill"));
    let (watch, events) = browser();

    let names = browse_instances(Duration::from_secs(2)).unwrap();
    assert_eq!(names, BTreeSet::from(["skill".to_string()]));
    let found = discover(Duration::from_secs(3)).unwrap().expect("found");
    assert_eq!((found.instance.as_str(), found.host.as_str(), found.port), ("skill", "skill.local", DEFAULT_PORT));
    assert_eq!(found.format_version.as_deref(), Some("1"));

    // The CLI with no address flags prints the discovery preamble.
    let t0 = Instant::now();
    let o = skill(&["--tz", "America/New_York", "sessions"]);
    let elapsed = t0.elapsed();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let want = format!(
        "discovering Skill via mDNS...\nfound: skill @ skill.local:{DEFAULT_PORT}\nauto-transport: probing WebSocket...\ntransport: WebSocket ws://127.0.0.1:{DEFAULT_PORT}\n"
    );
    assert_eq!(stdout(&o), format!("{want}{}", core_golden("sessions.txt")));
    assert!(elapsed < Duration::from_secs(3), "{elapsed:?}");

    // A second daemon on the same host takes the next name.
    let mut second = start_with(tempfile::tempdir().unwrap(), |c| c.mdns = true);
    assert_eq!(second.daemon().instance.as_deref(), Some("skill (2)"));
    second.stop();

    // Stopping withdraws the record from a browser that had seen it.
    while let Ok(ev) = events.try_recv() {
        drop(ev);
    }
    let stopped = Instant::now();
    first.stop();
    let mut removed = None;
    while stopped.elapsed() < Duration::from_secs(5) {
        if let Ok(ServiceEvent::ServiceRemoved(_, full)) = events.recv_timeout(Duration::from_millis(200)) {
            if full.starts_with("skill.") {
                removed = Some(stopped.elapsed());
                break;
            }
        }
    }
    let _ = watch.shutdown();
    let removed = removed.expect("withdrawn within 5 s");
    assert!(removed < Duration::from_secs(5));
}

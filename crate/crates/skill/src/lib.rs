//! Daemon, network transports, mDNS discovery and the command-line client.

pub mod cli;
pub mod client;
pub mod daemon;
pub mod mdns;
pub mod server;

pub use client::{BlockingClient, Client, ClientError, ConnectOptions};
pub use daemon::{Daemon, DaemonConfig, DaemonError};

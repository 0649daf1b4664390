//! The origin-side reverse proxy: serves the handshake path, opens sealed
//! requests on private routes, forwards plaintext to the origin and seals
//! the answers. Everything else is passed through untouched.

mod config;
pub mod cookie;
mod server;

pub use config::{parse_matcher, ConfigError, ProxyConfig, SESSION_FOOTPRINT};
pub use server::{ProxyServer, ProxyStats, StatsSnapshot, MAX_SEALED_BODY, REJECT_BODY, UNKNOWN_SESSION_BODY};

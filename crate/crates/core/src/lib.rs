//! InviCloak: an end-to-end encryption channel between a client agent and
//! an origin-side reverse proxy, tunneled as opaque HTTP bodies through a
//! CDN that holds the outer TLS keys.
//!
//! Module map:
//!
//! * [`crypto`]: P-256 ECDH, HKDF, AES-256-GCM, Ed25519/ECDSA signatures
//! * [`wire`]: every byte layout that crosses the CDN
//! * [`session`]: handshake, sessions, nonces, replay window, session store
//! * [`keydist`]: TLSA records over DNS-over-HTTPS, with a stub resolver
//! * [`proxy`]: the origin-side reverse proxy
//! * [`agent`]: the client-side agent
//! * [`integrity`]: offline signing and verification of executable objects
//! * [`cdn`]: a caching CDN stand-in with adversarial modes and scenarios
//! * [`bench`]: load generator for the throughput comparison

pub mod agent;
pub mod bench;
pub mod cdn;
pub mod clock;
pub mod crypto;
pub mod integrity;
pub mod keydist;
pub mod proxy;
pub mod net;
pub mod rng;
pub mod route;
pub mod session;
pub mod wire;

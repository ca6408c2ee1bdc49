//! Certificate-gated Sybil detection for vehicular ad-hoc networks.
//!
//! - [`crypto`]: keyed digests and sealed identity envelopes.
//! - [`pki`]: home CA registrations, local-CA regions, group-key gating and key escrow.
//! - [`protocol`]: message construction, RSU integrity check, envelope opening and the verdict.
//! - [`sim`]: a deterministic discrete-event simulator measuring per-phase delays.

pub mod crypto;
pub mod fixtures;
pub mod pki;
pub mod protocol;
pub mod sim;

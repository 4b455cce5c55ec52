//! Protocol library and deterministic simulator for witness presence:
//! geofenced crowd-sensing, blockchain-style consensus over location and
//! social proofs, and gossip-based real-time collective measurements.
//!
//! The crate is organized around six subsystems:
//!
//! - [`geo`]: geodesic primitives, geofence containment, geohash encoding
//! - [`crowdsense`]: projects, assets, tasks, assignments and the
//!   localization-triggered question dispatch
//! - [`proofs`]: location claims (GPS-oracle or beacon trilateration with
//!   Byzantine clock faults), social proofs and their local verification
//! - [`consensus`]: staked validators, hash-chained blocks, slashing and
//!   the entry/existence/exit token economy
//! - [`aggregate`]: gossip aggregation with Bloom-filter memory and
//!   corrective rollback
//! - [`harness`]: scenario I/O, the discrete-event loop, statistics,
//!   reporting and the CLI plumbing
//!
//! All randomness is drawn from seeded ChaCha20 streams; two runs of the
//! same scenario with the same seed produce byte-identical ledgers and
//! reports.

pub mod aggregate;
pub mod bloom;
pub mod consensus;
pub mod crowdsense;
pub mod crypto;
pub mod geo;
pub mod harness;
pub mod proofs;

//! Two-party secure computation engine for relational training data.
//!
//! The engine obliviously computes foreign-key-acyclic joins over tables
//! split between two parties, replaces the dummy rows of the secret-shared
//! join result with balanced duplicates of real rows, and trains linear or
//! logistic regression models on the result via shared-value minibatch SGD,
//! optionally with differentially private gradient perturbation.
//!
//! Module map:
//!
//! * [`ring`]      — arithmetic in `Z_{2^64}` and fixed-point encoding.
//! * [`transport`] — two-party channels (in-process or TCP) with byte and
//!   round accounting, plus the protocol harness.
//! * [`ledger`]    — per-stage cost accounting and JSON export.
//! * [`sharing`]   — additive/XOR sharing, the correlated-randomness dealer,
//!   Beaver multiplication, comparison circuits, shared fixed-point ops.
//! * [`oblivious`] — data-oblivious sequence primitives: permutation
//!   networks, shuffles, PSI with payload, bitonic sort, stable compaction,
//!   the duplication circuit and the half-copy network.
//! * [`relational`] — the schema graph and the secure join engine.
//! * [`purify`]    — join-result purification.
//! * [`train`]     — shared-value SGD, the DP noise machinery, model reveal.
//! * [`pipeline`]  — config parsing, CSV ingestion and the end-to-end driver.

pub mod ledger;
pub mod oblivious;
pub mod par;
pub mod pipeline;
pub mod purify;
pub mod relational;
pub mod ring;
pub mod sharing;
pub mod train;
pub mod transport;

mod error;

pub use error::{Error, Result};

//! Vertically federated gradient tree boosting.
//!
//! Several parties hold disjoint feature columns for an overlapping set of
//! entities; exactly one of them (the *active* party) also holds the binary
//! labels. The crates in this workspace let those parties first discover
//! their common entities without revealing the rest of their ID lists
//! ([`alignment`]), then jointly fit a gradient-boosted tree ensemble in
//! which gradient statistics cross party boundaries only under additively
//! homomorphic encryption ([`paillier`], [`federation`]). The resulting
//! ensemble is split across the parties: the shared model file records only
//! which party owns each decision node, while the owning party keeps the
//! actual feature and threshold in a private lookup table.
//!
//! [`boosting`] contains the plaintext core (quantile binning, histogram
//! aggregation, split scoring, a centralized trainer) that the federated
//! protocol is built from and checked against, and [`analysis`] quantifies
//! what the first tree's leaf weights give away about label composition.

pub mod alignment;
pub mod analysis;
pub mod bigmath;
pub mod boosting;
pub mod data;
pub mod error;
pub mod federation;
pub mod paillier;

pub use error::{Error, Result};

//! The federated training protocol: message format, transports, party
//! state machines, the distributed model representation, and traffic
//! accounting.
//!
//! One *active* party holds the labels, generates the Paillier key pair,
//! and coordinates; every other party is *passive* and contributes only
//! features. Parties first align on their shared entities, then train
//! boosted trees where gradient statistics cross party boundaries only
//! under encryption and each split's feature/threshold stays private to
//! the party that owns it.

pub mod active;
pub mod bitset;
pub mod cost;
pub mod model;
pub mod passive;
pub mod session;
pub mod transport;
pub mod wire;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::time::Duration;

use crate::boosting::BoostParams;
use crate::error::{Error, Result};
use crate::paillier;

/// The labeled, coordinating party. Passive parties number upward from 2.
pub const ACTIVE_PARTY_ID: u32 = 1;

/// Standard training reveals the active party's own split thresholds to
/// no one but still lets the active party hold plaintext gradients; the
/// completely-secure variant additionally grows the first tree from the
/// active party's features alone, so later trees' gradients — which
/// passives see only encrypted but could otherwise relate to the raw
/// labels through the base score — already mix in learned structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    Standard,
    CompletelySecure,
}

impl Default for TrainingMode {
    fn default() -> Self {
        TrainingMode::Standard
    }
}

impl std::fmt::Display for TrainingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrainingMode::Standard => write!(f, "standard"),
            TrainingMode::CompletelySecure => write!(f, "completely-secure"),
        }
    }
}

/// One party's local slice of the vertical partition: its entity IDs and
/// feature columns. Only the active party also holds labels, passed
/// separately.
#[derive(Debug, Clone)]
pub struct PartyData {
    pub party_id: u32,
    pub ids: Vec<String>,
    pub feature_names: Vec<String>,
    /// Column-major: `columns[j][i]` is feature j of row i.
    pub columns: Vec<Vec<f64>>,
}

impl PartyData {
    pub fn validate(&self) -> Result<()> {
        if self.party_id == 0 {
            return Err(Error::config("party IDs start at 1"));
        }
        if self.ids.is_empty() {
            return Err(Error::validation("party has no rows"));
        }
        if self.columns.is_empty() {
            return Err(Error::validation("party has no feature columns"));
        }
        if self.feature_names.len() != self.columns.len() {
            return Err(Error::validation(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.columns.len()
            )));
        }
        for (j, col) in self.columns.iter().enumerate() {
            if col.len() != self.ids.len() {
                return Err(Error::validation(format!(
                    "column {j} has {} values for {} rows",
                    col.len(),
                    self.ids.len()
                )));
            }
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::validation(format!(
                    "column {j} row {i} is not finite"
                )));
            }
        }
        Ok(())
    }

    /// Rows re-ordered to the aligned index: row k of the result is the
    /// row whose ID is `shared_ids[k]`.
    pub fn reindex(&self, local_rows: &[usize]) -> Result<Vec<Vec<f64>>> {
        for &r in local_rows {
            if r >= self.ids.len() {
                return Err(Error::invariant(format!(
                    "aligned row {r} out of range for {} local rows",
                    self.ids.len()
                )));
            }
        }
        Ok(self
            .columns
            .iter()
            .map(|col| local_rows.iter().map(|&r| col[r]).collect())
            .collect())
    }
}

/// Everything all parties must agree on before training starts. The
/// checksum of this struct (minus the timeout, which is deployment
/// detail) is exchanged in the opening handshake so mismatched
/// configurations fail fast instead of desynchronizing mid-protocol.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub params: BoostParams,
    pub paillier_bits: u32,
    pub rsa_bits: u32,
    pub seed: u64,
    pub mode: TrainingMode,
    /// Fraction of aligned rows used for training; the rest are held out.
    pub train_fraction: f64,
    pub party_count: u32,
    #[serde(with = "duration_secs")]
    pub timeout: Duration,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            params: BoostParams::default(),
            paillier_bits: 512,
            rsa_bits: 1024,
            seed: 0,
            mode: TrainingMode::Standard,
            train_fraction: 2.0 / 3.0,
            party_count: 2,
            timeout: Duration::from_secs(120),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.paillier_bits < paillier::MIN_KEY_BITS {
            return Err(Error::config(format!(
                "paillier_bits {} is below the minimum of {}",
                self.paillier_bits,
                paillier::MIN_KEY_BITS
            )));
        }
        if self.rsa_bits < crate::alignment::MIN_RSA_BITS {
            return Err(Error::config(format!(
                "rsa_bits {} is below the minimum of {}",
                self.rsa_bits,
                crate::alignment::MIN_RSA_BITS
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return Err(Error::config(format!(
                "train_fraction {} must be in (0, 1]",
                self.train_fraction
            )));
        }
        if self.party_count < 1 {
            return Err(Error::config("party_count must be at least 1"));
        }
        if self.timeout.is_zero() {
            return Err(Error::config("timeout must be positive"));
        }
        Ok(())
    }

    /// First eight bytes of a SHA-256 over a canonical rendering of every
    /// field the parties must share. Floats render through `{:?}` so any
    /// bit difference changes the text.
    pub fn checksum(&self) -> u64 {
        let p = &self.params;
        let canonical = format!(
            "trees={};max_depth={};learning_rate={:?};lambda={:?};gamma={:?};\
             subsample={:?};bins={};base_score={:?};min_child={};scale_bits={};\
             paillier_bits={};rsa_bits={};seed={};mode={};\
             train_fraction={:?};party_count={}",
            p.trees,
            p.max_depth,
            p.learning_rate,
            p.lambda,
            p.gamma,
            p.subsample,
            p.bins,
            p.base_score,
            p.min_child,
            p.scale_bits,
            self.paillier_bits,
            self.rsa_bits,
            self.seed,
            self.mode,
            self.train_fraction,
            self.party_count,
        );
        let digest = Sha256::digest(canonical.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
    }
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        d.as_secs_f64().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !(secs.is_finite() && secs > 0.0) {
            return Err(serde::de::Error::custom("timeout must be a positive number of seconds"));
        }
        Ok(Duration::from_secs_f64(secs))
    }
}

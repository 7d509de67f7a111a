//! The jointly trained model and the per-party lookup tables.
//!
//! An internal node of a federated tree stores only *who* owns the split
//! and an opaque record number: `[party, record]`. The owning party's
//! private lookup table maps that record to the actual (feature,
//! threshold) pair. Leaves carry plaintext weights and live only in the
//! active party's copy. Inference therefore requires the cooperation of
//! every party that owns at least one node on the path — no single party
//! can run the model alone, and none can read another's split logic.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boosting::tree::{PlainModel, PlainNode, PlainTree};
use crate::error::{Error, Result};
use crate::federation::TrainingMode;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Node of a federated tree. Flat indices into the tree's node vector,
/// root at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FedNode {
    Split {
        party: u32,
        record: u64,
        left: u32,
        right: u32,
    },
    Leaf {
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedTree {
    pub nodes: Vec<FedNode>,
}

impl FedTree {
    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, FedNode::Leaf { .. }))
            .count()
    }
}

/// The active party's model file: tree structure, leaf weights, and the
/// scoring constants. Contains no feature indices and no thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedModel {
    pub format_version: u32,
    pub mode: TrainingMode,
    pub learning_rate: f64,
    pub base_score: f64,
    /// Every party that participated, ascending.
    pub parties: Vec<u32>,
    pub trees: Vec<FedTree>,
}

impl FedModel {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::persist(format!(
                "model format version {} (this build reads {})",
                self.format_version, MODEL_FORMAT_VERSION
            )));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.nodes.is_empty() {
                return Err(Error::persist(format!("tree {t} has no nodes")));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                if let FedNode::Split {
                    party, left, right, ..
                } = node
                {
                    if !self.parties.contains(party) {
                        return Err(Error::persist(format!(
                            "tree {t} node {i} names unknown party {party}"
                        )));
                    }
                    for &child in [left, right] {
                        if child as usize >= tree.nodes.len() || child as usize <= i {
                            return Err(Error::persist(format!(
                                "tree {t} node {i} child {child} out of order"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::persist(format!("model serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: FedModel = serde_json::from_str(&text)
            .map_err(|e| Error::persist(format!("model file {}: {e}", path.display())))?;
        model.validate()?;
        Ok(model)
    }
}

/// One private split: which local feature, and the threshold value.
/// Rows with `value < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupRecord {
    pub feature: u32,
    pub threshold: f64,
}

/// A party's private record table. Record IDs are dense: record k is
/// `records[k]`, appended in the order splits were won.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub format_version: u32,
    pub party_id: u32,
    pub records: Vec<LookupRecord>,
}

impl LookupTable {
    pub fn new(party_id: u32) -> Self {
        LookupTable {
            format_version: MODEL_FORMAT_VERSION,
            party_id,
            records: Vec::new(),
        }
    }

    /// Appends a record, returning its ID.
    pub fn append(&mut self, feature: u32, threshold: f64) -> u64 {
        self.records.push(LookupRecord { feature, threshold });
        (self.records.len() - 1) as u64
    }

    pub fn get(&self, record: u64) -> Result<&LookupRecord> {
        self.records.get(record as usize).ok_or_else(|| {
            Error::protocol(format!(
                "party {} has no record {record} (table holds {})",
                self.party_id,
                self.records.len()
            ))
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::persist(format!("lookup serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let table: LookupTable = serde_json::from_str(&text)
            .map_err(|e| Error::persist(format!("lookup file {}: {e}", path.display())))?;
        if table.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::persist(format!(
                "lookup format version {} (this build reads {})",
                table.format_version, MODEL_FORMAT_VERSION
            )));
        }
        Ok(table)
    }
}

/// Joins a federated model with every party's lookup table into a plain
/// single-machine model over the concatenated feature space. `offsets`
/// maps each party to where its features start in the global column
/// order (parties concatenated in ascending ID order).
///
/// This is the "all parties open their tables" view — the tool for
/// verifying the federated result against a centralized run, not part of
/// the protocol itself.
pub fn resolve_to_plain(
    model: &FedModel,
    tables: &BTreeMap<u32, LookupTable>,
    offsets: &BTreeMap<u32, usize>,
) -> Result<PlainModel> {
    let mut trees = Vec::with_capacity(model.trees.len());
    for (t, fed) in model.trees.iter().enumerate() {
        let mut nodes = Vec::with_capacity(fed.nodes.len());
        for node in &fed.nodes {
            nodes.push(match node {
                FedNode::Leaf { weight } => PlainNode::Leaf { weight: *weight },
                FedNode::Split {
                    party,
                    record,
                    left,
                    right,
                } => {
                    let table = tables.get(party).ok_or_else(|| {
                        Error::protocol(format!("no lookup table for party {party} (tree {t})"))
                    })?;
                    if table.party_id != *party {
                        return Err(Error::protocol(format!(
                            "lookup table labeled party {} supplied for party {party}",
                            table.party_id
                        )));
                    }
                    let rec = table.get(*record)?;
                    let offset = offsets.get(party).ok_or_else(|| {
                        Error::protocol(format!("no feature offset for party {party}"))
                    })?;
                    PlainNode::Split {
                        feature: offset + rec.feature as usize,
                        threshold: rec.threshold,
                        left: *left as usize,
                        right: *right as usize,
                    }
                }
            });
        }
        trees.push(PlainTree { nodes });
    }
    Ok(PlainModel {
        trees,
        learning_rate: model.learning_rate,
        base_score: model.base_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> FedModel {
        FedModel {
            format_version: MODEL_FORMAT_VERSION,
            mode: TrainingMode::Standard,
            learning_rate: 0.3,
            base_score: 0.5,
            parties: vec![1, 2],
            trees: vec![FedTree {
                nodes: vec![
                    FedNode::Split {
                        party: 2,
                        record: 0,
                        left: 1,
                        right: 2,
                    },
                    FedNode::Leaf { weight: -0.4 },
                    FedNode::Split {
                        party: 1,
                        record: 0,
                        left: 3,
                        right: 4,
                    },
                    FedNode::Leaf { weight: 0.2 },
                    FedNode::Leaf { weight: 0.7 },
                ],
            }],
        }
    }

    #[test]
    fn model_file_roundtrip_is_bit_exact() {
        let model = sample_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = FedModel::load(&path).unwrap();
        assert_eq!(loaded, model);
        loaded.save(&path).unwrap();
        let second = std::fs::read(&path).unwrap();
        assert_eq!(first, second, "save/load/save must be byte-stable");
    }

    #[test]
    fn validation_rejects_malformed_trees() {
        let mut m = sample_model();
        m.trees[0].nodes[0] = FedNode::Split {
            party: 7,
            record: 0,
            left: 1,
            right: 2,
        };
        assert!(m.validate().is_err(), "unknown party");

        let mut m = sample_model();
        m.trees[0].nodes[2] = FedNode::Split {
            party: 1,
            record: 0,
            left: 2, // points at itself
            right: 4,
        };
        assert!(m.validate().is_err(), "child must come after parent");

        let mut m = sample_model();
        m.format_version = 99;
        assert!(m.validate().is_err(), "format version");
    }

    #[test]
    fn lookup_table_appends_dense_ids() {
        let mut t = LookupTable::new(2);
        assert_eq!(t.append(3, 1.5), 0);
        assert_eq!(t.append(0, -2.0), 1);
        assert_eq!(t.get(1).unwrap().threshold, -2.0);
        assert!(t.get(2).is_err());
    }

    #[test]
    fn lookup_file_roundtrip() {
        let mut t = LookupTable::new(3);
        t.append(1, 0.25);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lookup.json");
        t.save(&path).unwrap();
        assert_eq!(LookupTable::load(&path).unwrap(), t);
    }

    #[test]
    fn resolve_joins_tables_with_offsets() {
        let model = sample_model();
        let mut tables = BTreeMap::new();
        let mut t1 = LookupTable::new(1);
        t1.append(2, 8.0); // active's local feature 2
        tables.insert(1, t1);
        let mut t2 = LookupTable::new(2);
        t2.append(0, 3.0); // passive's local feature 0
        tables.insert(2, t2);
        // Active holds 4 features (global 0..4), passive's start at 4.
        let offsets = BTreeMap::from([(1, 0usize), (2, 4usize)]);

        let plain = resolve_to_plain(&model, &tables, &offsets).unwrap();
        match plain.trees[0].nodes[0] {
            PlainNode::Split {
                feature, threshold, ..
            } => {
                assert_eq!(feature, 4);
                assert_eq!(threshold, 3.0);
            }
            _ => panic!("root should be a split"),
        }
        match plain.trees[0].nodes[2] {
            PlainNode::Split { feature, .. } => assert_eq!(feature, 2),
            _ => panic!("node 2 should be a split"),
        }
        // Row with passive feature 2.5 (global 4) goes left, then active
        // feature 9.0 (global 2) ... only reachable via right branch; walk
        // a concrete row through instead.
        let row = vec![0.0, 0.0, 9.0, 0.0, 5.0];
        // global4=5.0 >= 3.0 -> right (node 2); global2=9.0 >= 8.0 -> right (node 4).
        let raw = plain.predict_raw(&|j: usize| row[j]).unwrap();
        let base = crate::boosting::base_raw(0.5);
        assert!((raw - (base + 0.3 * 0.7)).abs() < 1e-12);
    }

    #[test]
    fn resolve_fails_without_table() {
        let model = sample_model();
        let tables = BTreeMap::new();
        let offsets = BTreeMap::from([(1, 0usize), (2, 4usize)]);
        assert!(resolve_to_plain(&model, &tables, &offsets).is_err());
    }
}

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use secureboost_core::boosting::BoostParams;
use secureboost_core::data::{synth, vertical_split};
use secureboost_core::federation::active::{ActiveInputs, ActiveOutcome};
use secureboost_core::federation::model::LookupTable;
use secureboost_core::federation::passive::PassiveOutcome;
use secureboost_core::federation::{PartyData, SessionConfig};

/// Small keys and few trees: fast enough to run many sessions per test.
pub fn fast_config(parties: u32, trees: usize, seed: u64) -> SessionConfig {
    SessionConfig {
        params: BoostParams {
            trees,
            max_depth: 3,
            bins: 16,
            ..BoostParams::default()
        },
        paillier_bits: 256,
        rsa_bits: 512,
        seed,
        party_count: parties,
        timeout: Duration::from_secs(60),
        ..SessionConfig::default()
    }
}

/// A labeled synthetic dataset split vertically: active inputs plus the
/// passive parties. `row_keep < 1` gives each party only a subset of the
/// rows, so the parties must align on the overlap first.
pub fn split_fixture(
    n: usize,
    d: usize,
    parties: u32,
    row_keep: f64,
    seed: u64,
) -> (ActiveInputs, Vec<PartyData>) {
    let data = synth(n, d, 0.4, 0.5, seed).expect("synth");
    let (mut all, labels) = vertical_split(&data, parties, row_keep, seed ^ 0x5a5a).expect("split");
    let active_data = all.remove(0);
    (
        ActiveInputs {
            data: active_data,
            labels,
        },
        all,
    )
}

/// Joins every party's columns into one matrix over the aligned rows,
/// parties in ascending ID order — the feature layout a centralized
/// trainer would see.
pub fn merged_columns(aligned_ids: &[String], parties: &[&PartyData]) -> Vec<Vec<f64>> {
    let mut sorted: Vec<&&PartyData> = parties.iter().collect();
    sorted.sort_by_key(|p| p.party_id);
    let mut merged = Vec::new();
    for party in sorted {
        let index: HashMap<&str, usize> = party
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let local_rows: Vec<usize> = aligned_ids
            .iter()
            .map(|id| *index.get(id.as_str()).expect("aligned id missing"))
            .collect();
        merged.extend(party.reindex(&local_rows).expect("reindex"));
    }
    merged
}

/// Lookup tables and global feature offsets for opening a distributed
/// model into its centralized equivalent.
pub fn tables_and_offsets(
    active: &ActiveOutcome,
    active_features: usize,
    passives: &[(&PartyData, &PassiveOutcome)],
) -> (BTreeMap<u32, LookupTable>, BTreeMap<u32, usize>) {
    let mut tables = BTreeMap::new();
    let mut offsets = BTreeMap::new();
    tables.insert(1u32, active.lookup.clone());
    offsets.insert(1u32, 0usize);
    let mut sorted: Vec<&(&PartyData, &PassiveOutcome)> = passives.iter().collect();
    sorted.sort_by_key(|(p, _)| p.party_id);
    let mut offset = active_features;
    for (party, outcome) in sorted {
        assert_eq!(party.party_id, outcome.party_id);
        tables.insert(party.party_id, outcome.lookup.clone());
        offsets.insert(party.party_id, offset);
        offset += party.columns.len();
    }
    (tables, offsets)
}

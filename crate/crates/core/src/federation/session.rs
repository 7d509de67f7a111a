//! Session drivers: wire the party state machines together, either
//! in-process over channel transports (one thread per passive party) or
//! across TCP sockets.

use std::time::Duration;

use crate::error::{Error, Result};
use crate::federation::active::{
    run_active, run_active_predict, ActiveInputs, ActiveLink, ActiveOutcome, PredictOutcome,
};
use crate::federation::model::{FedModel, LookupTable};
use crate::federation::passive::{run_passive, serve_predict, PassiveOutcome};
use crate::federation::transport::{
    channel_pair, new_transcript_log, RecordingTransport, TcpTransport, TranscriptEntry,
};
use crate::federation::{PartyData, SessionConfig};

pub struct InProcessResult {
    pub active: ActiveOutcome,
    pub passives: Vec<PassiveOutcome>,
    /// Per passive party: every frame the active side sent or received on
    /// that link, in order. Populated when recording was requested.
    pub transcripts: Vec<(u32, Vec<TranscriptEntry>)>,
}

/// Trains across in-process parties: each passive runs on its own thread,
/// the active party on the calling thread, all over channel transports.
/// With `record` set, the active side of every link is wrapped in a
/// recording transport so tests can audit the raw traffic afterwards.
pub fn train_in_process(
    active: &ActiveInputs,
    passives: &[PartyData],
    config: &SessionConfig,
    record: bool,
) -> Result<InProcessResult> {
    let mut links = Vec::with_capacity(passives.len());
    let mut passive_ends = Vec::with_capacity(passives.len());
    let mut logs = Vec::with_capacity(passives.len());
    for p in passives {
        let (ours, theirs) = channel_pair(config.timeout);
        let transport: Box<dyn crate::federation::transport::Transport> = if record {
            let log = new_transcript_log();
            logs.push((p.party_id, log.clone()));
            Box::new(RecordingTransport::new(ours, log))
        } else {
            Box::new(ours)
        };
        links.push(ActiveLink {
            party_id: p.party_id,
            transport,
        });
        passive_ends.push(theirs);
    }

    let (active_result, passive_results) = std::thread::scope(|scope| {
        let handles: Vec<_> = passives
            .iter()
            .zip(passive_ends)
            .map(|(data, mut transport)| {
                scope.spawn(move || run_passive(&mut transport, data, config))
            })
            .collect();
        let active_result = run_active(links, active, config);
        let passive_results: Vec<Result<PassiveOutcome>> = handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::invariant("a passive party panicked")))
            })
            .collect();
        (active_result, passive_results)
    });

    let active_outcome = active_result?;
    let mut outcomes = Vec::with_capacity(passive_results.len());
    for r in passive_results {
        outcomes.push(r?);
    }
    let transcripts = logs
        .into_iter()
        .map(|(party_id, log)| {
            let entries = log.lock().expect("transcript log poisoned").clone();
            (party_id, entries)
        })
        .collect();
    Ok(InProcessResult {
        active: active_outcome,
        passives: outcomes,
        transcripts,
    })
}

/// Scores query IDs across in-process parties holding a trained model.
pub fn predict_in_process(
    model: &FedModel,
    active_lookup: &LookupTable,
    active_data: &PartyData,
    passives: &[(&PartyData, &LookupTable)],
    query_ids: &[String],
    config: &SessionConfig,
) -> Result<PredictOutcome> {
    let mut links = Vec::with_capacity(passives.len());
    let mut passive_ends = Vec::with_capacity(passives.len());
    for (data, _) in passives {
        let (ours, theirs) = channel_pair(config.timeout);
        links.push(ActiveLink {
            party_id: data.party_id,
            transport: Box::new(ours),
        });
        passive_ends.push(theirs);
    }
    let (outcome, server_results) = std::thread::scope(|scope| {
        let handles: Vec<_> = passives
            .iter()
            .zip(passive_ends)
            .map(|((data, lookup), mut transport)| {
                scope.spawn(move || serve_predict(&mut transport, data, lookup, config))
            })
            .collect();
        let outcome = run_active_predict(links, model, active_lookup, active_data, query_ids, config);
        let server_results: Vec<Result<()>> = handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::invariant("a scoring server panicked")))
            })
            .collect();
        (outcome, server_results)
    });
    let outcome = outcome?;
    for r in server_results {
        r?;
    }
    Ok(outcome)
}

/// Connects to every passive party's listener, ascending by party ID.
/// Each address is retried until it accepts or the timeout lapses.
pub fn connect_links(addrs: &[(u32, String)], timeout: Duration) -> Result<Vec<ActiveLink>> {
    let mut sorted: Vec<&(u32, String)> = addrs.iter().collect();
    sorted.sort_by_key(|(id, _)| *id);
    sorted
        .into_iter()
        .map(|(party_id, addr)| {
            let transport = TcpTransport::connect(addr, timeout)?;
            Ok(ActiveLink {
                party_id: *party_id,
                transport: Box::new(transport),
            })
        })
        .collect()
}

/// Accepts one inbound connection for a passive party's session.
pub fn accept_link(bind: &str, timeout: Duration) -> Result<TcpTransport> {
    let (transport, _peer) = TcpTransport::accept_one(bind, timeout)?;
    Ok(transport)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosting::BoostParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    /// Two-party data with a signal split across both parties.
    fn two_party_fixture(n: usize, seed: u64) -> (ActiveInputs, PartyData) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut a0 = Vec::with_capacity(n);
        let mut a1 = Vec::with_capacity(n);
        let mut b0 = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        for i in 0..n {
            let x0: f64 = rng.gen_range(-1.0..1.0);
            let x1: f64 = rng.gen_range(-1.0..1.0);
            let x2: f64 = rng.gen_range(-1.0..1.0);
            ids.push(format!("row{i:04}"));
            a0.push(x0);
            a1.push(x1);
            b0.push(x2);
            labels.push(u8::from(x0 + x2 > 0.0));
        }
        let active = ActiveInputs {
            data: PartyData {
                party_id: 1,
                ids: ids.clone(),
                feature_names: vec!["a0".into(), "a1".into()],
                columns: vec![a0, a1],
            },
            labels,
        };
        let passive = PartyData {
            party_id: 2,
            ids,
            feature_names: vec!["b0".into()],
            columns: vec![b0],
        };
        (active, passive)
    }

    fn small_config(trees: usize) -> SessionConfig {
        SessionConfig {
            params: BoostParams {
                trees,
                ..BoostParams::default()
            },
            paillier_bits: 256,
            rsa_bits: 512,
            seed: 11,
            ..SessionConfig::default()
        }
    }

    #[test]
    fn two_party_session_trains_and_scores() {
        let (active, passive) = two_party_fixture(60, 3);
        let config = small_config(3);
        let result = train_in_process(&active, std::slice::from_ref(&passive), &config, false)
            .expect("session failed");

        let n = result.active.aligned_ids.len();
        assert_eq!(n, 60);
        assert_eq!(result.active.model.trees.len(), 3);
        assert_eq!(result.active.leaf_assignments.len(), 3);
        assert_eq!(result.active.raw_scores.len(), n);
        assert_eq!(
            result.active.train_rows.len() + result.active.test_rows.len(),
            n
        );
        assert_eq!(result.active.trace.train_loss.len(), 3);
        assert_eq!(result.passives.len(), 1);
        // The loss should move on a learnable signal.
        assert!(
            result.active.trace.train_loss[2] < result.active.trace.train_loss[0],
            "{:?}",
            result.active.trace.train_loss
        );

        // Scoring the training IDs must reproduce the training-time raw
        // scores exactly: same splits, same rows, same weights.
        let outcome = predict_in_process(
            &result.active.model,
            &result.active.lookup,
            &active.data,
            &[(&passive, &result.passives[0].lookup)],
            &result.active.aligned_ids,
            &config,
        )
        .expect("scoring failed");
        for (q, raw) in outcome.raw.iter().enumerate() {
            assert!(
                (raw - result.active.raw_scores[q]).abs() < 1e-12,
                "query {q}: {raw} vs {}",
                result.active.raw_scores[q]
            );
        }
        // And the leaves reached must match the training assignments.
        for (q, leaves) in outcome.leaf_nodes.iter().enumerate() {
            for (t, &leaf) in leaves.iter().enumerate() {
                assert_eq!(leaf, result.active.leaf_assignments[t][q]);
            }
        }
    }

    #[test]
    fn single_party_session_runs_without_links() {
        let (active, _) = two_party_fixture(40, 5);
        let mut config = small_config(2);
        config.party_count = 1;
        let result = train_in_process(&active, &[], &config, false).expect("session failed");
        assert_eq!(result.active.model.parties, vec![1]);
        assert!(result.passives.is_empty());
        assert_eq!(result.active.cost.total().messages, 0);
    }

    #[test]
    fn partial_overlap_narrows_to_shared_rows() {
        let (mut active, mut passive) = two_party_fixture(30, 7);
        // Passive misses the last 10 IDs; active misses the first 5.
        passive.ids.truncate(20);
        for c in &mut passive.columns {
            c.truncate(20);
        }
        active.data.ids.drain(0..5);
        for c in &mut active.data.columns {
            c.drain(0..5);
        }
        active.labels.drain(0..5);
        let config = small_config(2);
        let result = train_in_process(&active, std::slice::from_ref(&passive), &config, false)
            .expect("session failed");
        assert_eq!(result.active.aligned_ids.len(), 15);
        assert!(result
            .active
            .aligned_ids
            .windows(2)
            .all(|w| w[0] < w[1]));
        assert_eq!(result.passives[0].aligned_ids, result.active.aligned_ids);
    }
}

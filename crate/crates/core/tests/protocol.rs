//! What actually crosses the wire: every frame of a recorded session is
//! decoded and checked against the protocol's privacy obligations.

mod common;

use std::collections::BTreeSet;

use secureboost_core::alignment::transcript_audit;
use secureboost_core::federation::active::{ActiveLink, run_active};
use secureboost_core::federation::passive::run_passive;
use secureboost_core::federation::session::train_in_process;
use secureboost_core::federation::transport::{channel_pair, Direction, TranscriptEntry};
use secureboost_core::federation::wire::{decode, Message};
use secureboost_core::federation::TrainingMode;
use secureboost_core::paillier::PaillierPublicKey;

/// Decodes a transcript in order, picking up the encryption key's
/// fingerprint when it is announced so later ciphertext-bearing frames
/// parse.
fn decode_all(transcript: &[TranscriptEntry]) -> Vec<(Direction, Message)> {
    let mut fingerprint = 0u64;
    let mut out = Vec::new();
    for entry in transcript {
        let (_, msg) = decode(&entry.frame, fingerprint).expect("transcript frame must parse");
        if let Message::PaillierKey { key } = &msg {
            let pk = PaillierPublicKey::from_bytes(key).expect("announced key must parse");
            fingerprint = pk.fingerprint();
        }
        out.push((entry.direction, msg));
    }
    out
}

#[test]
fn traffic_to_passives_is_limited_to_protocol_kinds() {
    let (active, passives) = common::split_fixture(120, 6, 2, 0.9, 101);
    let config = common::fast_config(2, 3, 101);
    let result = train_in_process(&active, &passives, &config, true).expect("training");
    let (party, transcript) = &result.transcripts[0];
    assert_eq!(*party, 2);
    let messages = decode_all(transcript);

    let allowed_sent: BTreeSet<&str> = [
        "hello",
        "align-blinded",
        "align-intersection",
        "aligned-rows",
        "paillier-key",
        "tree-start",
        "enc-gradients",
        "hist-request",
        "split-announce",
        "partition-query",
        "tree-done",
        "train-done",
    ]
    .into_iter()
    .collect();
    let allowed_received: BTreeSet<&str> = [
        "hello-ack",
        "align-key",
        "align-signed",
        "align-confirm",
        "hist-reply",
        "split-reply",
        "partition-reply",
    ]
    .into_iter()
    .collect();
    for (direction, msg) in &messages {
        match direction {
            Direction::Sent => assert!(
                allowed_sent.contains(msg.kind()),
                "unexpected message to passive: {}",
                msg.kind()
            ),
            Direction::Received => assert!(
                allowed_received.contains(msg.kind()),
                "unexpected message from passive: {}",
                msg.kind()
            ),
        }
    }
}

#[test]
fn equal_gradients_encrypt_to_different_ciphertexts() {
    let (active, passives) = common::split_fixture(120, 6, 2, 1.0, 103);
    let config = common::fast_config(2, 2, 103);
    let result = train_in_process(&active, &passives, &config, true).expect("training");
    let out = &result.active;
    let messages = decode_all(&result.transcripts[0].1);

    // In the first round every row carries the same base probability, so
    // two rows with the same label have bit-identical gradient pairs.
    // Their ciphertexts must still be distinct, or the passive party
    // could group rows by label. This is precisely the randomization of
    // the encryption; a deterministic scheme would fail here.
    let first_grads = messages
        .iter()
        .find_map(|(d, m)| match (d, m) {
            (Direction::Sent, Message::EncGradients { tree: 0, rows, g, .. }) => {
                Some((rows.clone(), g.clone()))
            }
            _ => None,
        })
        .expect("first tree must broadcast gradients");
    let (rows, g) = first_grads;
    let row_indices = rows.ones();
    assert_eq!(row_indices.len(), g.len());

    let mut seen_labels = std::collections::HashMap::new();
    let mut pairs_checked = 0;
    for (slot, &row) in row_indices.iter().enumerate() {
        let label = out.labels[row];
        if let Some(&other_slot) = seen_labels.get(&label) {
            let other: &secureboost_core::paillier::Ciphertext = &g[other_slot];
            assert_ne!(
                &g[slot], other,
                "rows {row} and {} share a label; identical ciphertexts leak it",
                row_indices[other_slot]
            );
            pairs_checked += 1;
        }
        seen_labels.insert(label, slot);
    }
    assert!(pairs_checked > 10, "fixture should have many same-label pairs");
}

#[test]
fn completely_secure_first_tree_sends_only_control_frames() {
    let (active, passives) = common::split_fixture(150, 6, 2, 1.0, 107);
    let mut config = common::fast_config(2, 3, 107);
    config.mode = TrainingMode::CompletelySecure;
    let result = train_in_process(&active, &passives, &config, true).expect("training");
    let messages = decode_all(&result.transcripts[0].1);

    let mut inside_tree0 = false;
    let mut tree0_frames = Vec::new();
    for (_, msg) in &messages {
        match msg {
            Message::TreeStart { tree: 0, local_only } => {
                assert!(*local_only, "first tree must be marked local");
                inside_tree0 = true;
            }
            Message::TreeDone { tree: 0 } => inside_tree0 = false,
            other if inside_tree0 => {
                tree0_frames.push(other.kind());
            }
            _ => {}
        }
    }
    assert!(
        tree0_frames.is_empty(),
        "first tree leaked protocol traffic: {tree0_frames:?}"
    );
    // The later trees do exchange encrypted material.
    assert!(messages
        .iter()
        .any(|(_, m)| matches!(m, Message::EncGradients { tree, .. } if *tree > 0)));
}

#[test]
fn alignment_leaves_non_shared_ids_unreferenced() {
    let (active, passives) = common::split_fixture(140, 6, 2, 0.75, 109);
    let config = common::fast_config(2, 2, 109);
    let result = train_in_process(&active, &passives, &config, true).expect("training");

    // The two parties hold different row subsets; roughly 40% of all ids
    // are private to one side. None of them may appear in any frame.
    let report = transcript_audit(
        &result.transcripts[0].1,
        &active.data.ids,
        &passives[0].ids,
    )
    .expect("audit");
    assert!(report.messages_checked > 0);
    assert!(
        report.is_clean(),
        "non-shared ids leaked: {:?}",
        report.findings
    );
    assert_ne!(
        active.data.ids, passives[0].ids,
        "fixture must not fully overlap or the audit is vacuous"
    );
}

#[test]
fn mismatched_configs_abort_the_handshake() {
    let (active, passives) = common::split_fixture(60, 4, 2, 1.0, 113);
    let config_a = common::fast_config(2, 2, 113);
    let mut config_b = config_a.clone();
    config_b.params.lambda = 2.0; // disagreement the checksum must catch

    let (ours, mut theirs) = channel_pair(config_a.timeout);
    std::thread::scope(|scope| {
        let passive_data = &passives[0];
        let passive = scope.spawn(move || run_passive(&mut theirs, passive_data, &config_b));
        let links = vec![ActiveLink {
            party_id: 2,
            transport: Box::new(ours),
        }];
        let active_result = run_active(links, &active, &config_a);
        let passive_result = passive.join().expect("no panic");
        assert!(passive_result.is_err(), "passive must reject the session");
        let msg = match active_result {
            Err(e) => e.to_string(),
            Ok(_) => panic!("active must reject the session"),
        };
        assert!(
            msg.contains("config") || msg.contains("checksum") || msg.contains("abort"),
            "unhelpful error: {msg}"
        );
    });
}

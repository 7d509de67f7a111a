//! A passive party: contributes feature columns and nothing else. It
//! never sees labels, gradients (except under encryption), other
//! parties' features, or the tree structure beyond the split decisions
//! it is asked to make on its own records.

use std::collections::BTreeMap;

use crate::alignment;
use crate::boosting::bins::BinThresholds;
use crate::boosting::histogram::aggregate_histogram;
use crate::error::{Error, Result};
use crate::federation::bitset::Bitset;
use crate::federation::model::LookupTable;
use crate::federation::transport::Transport;
use crate::federation::wire::{self, abort_code_for, Message};
use crate::federation::{PartyData, SessionConfig, ACTIVE_PARTY_ID};
use crate::paillier::{Ciphertext, PaillierPublicKey};

pub struct PassiveOutcome {
    pub party_id: u32,
    pub lookup: LookupTable,
    pub aligned_ids: Vec<String>,
}

/// Encrypted gradients for one tree, indexed by aligned row.
struct GradStore {
    rows: Bitset,
    g: Vec<Ciphertext>,
    h: Vec<Ciphertext>,
    /// Aligned row -> position in `g`/`h`.
    rank: Vec<Option<usize>>,
}

impl GradStore {
    fn pair(&self, row: usize) -> Result<(Ciphertext, Ciphertext)> {
        let pos = self.rank[row]
            .ok_or_else(|| Error::invariant(format!("no gradients for row {row}")))?;
        Ok((self.g[pos].clone(), self.h[pos].clone()))
    }
}

struct TreeState {
    tree: u32,
    local_only: bool,
    grads: Option<GradStore>,
    /// Node -> the instance rows its histograms were computed over.
    instances: BTreeMap<u32, Vec<usize>>,
}

fn send(transport: &mut dyn Transport, session: u64, msg: &Message) -> Result<()> {
    transport.send_frame(wire::encode(session, msg))
}

fn recv(transport: &mut dyn Transport, session: u64, fingerprint: u64) -> Result<Message> {
    let frame = transport.recv_frame()?;
    let (got, msg) = wire::decode(&frame, fingerprint)?;
    if got != session {
        return Err(Error::protocol(format!(
            "frame for session {got:#x} arrived in session {session:#x}"
        )));
    }
    if let Message::Abort { code, reason } = msg {
        return Err(Error::abort(format!(
            "active party aborted (code {code}): {reason}"
        )));
    }
    Ok(msg)
}

/// Opening-exchange receive: the session id is the configuration checksum,
/// so a peer running different parameters tags its frames with a different
/// session. The handshake must still read such frames — it exists to turn
/// that mismatch into a config error rather than cross-talk noise. Every
/// later phase goes through the strict [`recv`].
fn recv_opening(transport: &mut dyn Transport) -> Result<Message> {
    let frame = transport.recv_frame()?;
    let (_, msg) = wire::decode(&frame, 0)?;
    if let Message::Abort { code, reason } = msg {
        return Err(Error::abort(format!(
            "active party aborted (code {code}): {reason}"
        )));
    }
    Ok(msg)
}

fn handshake(transport: &mut dyn Transport, data: &PartyData, config: &SessionConfig) -> Result<u64> {
    let checksum = config.checksum();
    let session = checksum;
    match recv_opening(transport)? {
        Message::Hello {
            protocol_version,
            party_id,
            config_checksum,
        } => {
            if protocol_version != wire::PROTOCOL_VERSION {
                return Err(Error::protocol(format!(
                    "peer speaks protocol version {protocol_version}, this build speaks {}",
                    wire::PROTOCOL_VERSION
                )));
            }
            if party_id != ACTIVE_PARTY_ID {
                return Err(Error::protocol(format!(
                    "hello from party {party_id}; only party {ACTIVE_PARTY_ID} coordinates"
                )));
            }
            if config_checksum != checksum {
                return Err(Error::config(format!(
                    "active party runs a different configuration \
                     (checksum {config_checksum:#018x} != {checksum:#018x})"
                )));
            }
        }
        other => {
            return Err(Error::protocol(format!(
                "expected hello, got {}",
                other.kind()
            )))
        }
    }
    send(
        transport,
        session,
        &Message::HelloAck {
            party_id: data.party_id,
            config_checksum: checksum,
        },
    )?;
    Ok(session)
}

/// Runs one full training session as a passive party. On local failure
/// an abort notice is sent before the error returns.
pub fn run_passive(
    transport: &mut dyn Transport,
    data: &PartyData,
    config: &SessionConfig,
) -> Result<PassiveOutcome> {
    config.validate()?;
    data.validate()?;
    if data.party_id == ACTIVE_PARTY_ID {
        return Err(Error::config(format!(
            "party {ACTIVE_PARTY_ID} is the active party; passive IDs start at 2"
        )));
    }
    let session = config.checksum();
    match passive_inner(transport, data, config, session) {
        Ok(outcome) => Ok(outcome),
        Err(err) => {
            if !matches!(err, Error::Abort(_)) {
                let notice = Message::Abort {
                    code: abort_code_for(&err),
                    reason: err.to_string(),
                };
                let _ = transport.send_frame(wire::encode(session, &notice));
            }
            Err(err)
        }
    }
}

fn passive_inner(
    transport: &mut dyn Transport,
    data: &PartyData,
    config: &SessionConfig,
    session: u64,
) -> Result<PassiveOutcome> {
    handshake(transport, data, config)?;
    alignment::respond(
        transport,
        session,
        data.ids.clone(),
        config.rsa_bits,
        &mut rand::thread_rng(),
    )?;

    // The final aligned set, narrowed across every party, arrives after
    // the active party has finished all pairwise rounds.
    let aligned_ids = match recv(transport, session, 0)? {
        Message::AlignedRows { ids } => ids,
        other => {
            return Err(Error::protocol(format!(
                "expected the aligned row list, got {}",
                other.kind()
            )))
        }
    };
    if aligned_ids.is_empty() {
        return Err(Error::protocol("aligned row list is empty"));
    }
    let row_of: BTreeMap<&str, usize> = data
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let local_rows: Vec<usize> = aligned_ids
        .iter()
        .map(|id| {
            row_of.get(id.as_str()).copied().ok_or_else(|| {
                Error::protocol(format!("aligned ID {id:?} has no local row"))
            })
        })
        .collect::<Result<_>>()?;
    let columns = data.reindex(&local_rows)?;
    let n = aligned_ids.len();
    let all_rows: Vec<usize> = (0..n).collect();
    let bins = BinThresholds::propose(&columns, &all_rows, config.params.bins)?;

    let pk = match recv(transport, session, 0)? {
        Message::PaillierKey { key } => PaillierPublicKey::from_bytes(&key)?,
        other => {
            return Err(Error::protocol(format!(
                "expected the homomorphic key, got {}",
                other.kind()
            )))
        }
    };
    if pk.bits() != config.paillier_bits {
        return Err(Error::config(format!(
            "received a {}-bit key, configured for {} bits",
            pk.bits(),
            config.paillier_bits
        )));
    }
    let fingerprint = pk.fingerprint();

    let mut lookup = LookupTable::new(data.party_id);
    let mut state: Option<TreeState> = None;
    let mut next_tree: u32 = 0;

    loop {
        match recv(transport, session, fingerprint)? {
            Message::TreeStart { tree, local_only } => {
                if tree != next_tree {
                    return Err(Error::protocol(format!(
                        "tree {tree} started, expected tree {next_tree}"
                    )));
                }
                next_tree += 1;
                state = Some(TreeState {
                    tree,
                    local_only,
                    grads: None,
                    instances: BTreeMap::new(),
                });
            }
            Message::EncGradients { tree, rows, g, h } => {
                let st = tree_state(&mut state, tree)?;
                if st.local_only {
                    return Err(Error::protocol(format!(
                        "gradients arrived for local-only tree {tree}"
                    )));
                }
                if rows.len() != n {
                    return Err(Error::protocol(format!(
                        "gradient row set covers {} rows, session has {n}",
                        rows.len()
                    )));
                }
                let count = rows.count_ones();
                if g.len() != count || h.len() != count {
                    return Err(Error::protocol(format!(
                        "{} rows flagged but {} g / {} h ciphertexts sent",
                        count,
                        g.len(),
                        h.len()
                    )));
                }
                let mut rank = vec![None; n];
                for (pos, row) in rows.ones().into_iter().enumerate() {
                    rank[row] = Some(pos);
                }
                st.grads = Some(GradStore { rows, g, h, rank });
            }
            Message::HistRequest {
                tree,
                node,
                instances,
            } => {
                let st = tree_state(&mut state, tree)?;
                let grads = st.grads.as_ref().ok_or_else(|| {
                    Error::protocol(format!("histogram request for tree {tree} before gradients"))
                })?;
                if instances.len() != n {
                    return Err(Error::protocol(format!(
                        "instance set covers {} rows, session has {n}",
                        instances.len()
                    )));
                }
                if !instances.is_subset_of(&grads.rows) {
                    return Err(Error::protocol(
                        "instance set includes rows without gradients",
                    ));
                }
                let instance_rows = instances.ones();
                let hist = aggregate_histogram::<Ciphertext, _>(
                    &bins,
                    &columns,
                    &instance_rows,
                    |i| grads.pair(i),
                    &pk,
                )?;
                st.instances.insert(node, instance_rows);
                send(
                    transport,
                    session,
                    &Message::HistReply {
                        tree,
                        node,
                        g: hist.g,
                        h: hist.h,
                    },
                )?;
            }
            Message::SplitAnnounce {
                tree,
                node,
                feature,
                bucket,
            } => {
                let st = tree_state(&mut state, tree)?;
                let instance_rows = st.instances.get(&node).ok_or_else(|| {
                    Error::protocol(format!(
                        "split announced for node {node} without a histogram request"
                    ))
                })?;
                let f = feature as usize;
                if f >= bins.feature_count() {
                    return Err(Error::protocol(format!(
                        "announced feature {feature} of {}",
                        bins.feature_count()
                    )));
                }
                if bucket as usize >= bins.bucket_count(f) {
                    return Err(Error::protocol(format!(
                        "announced bucket {bucket} of {} for feature {feature}",
                        bins.bucket_count(f)
                    )));
                }
                let threshold = bins.thresholds(f)[bucket as usize];
                let record_id = lookup.append(feature, threshold);
                let left_rows: Vec<usize> = instance_rows
                    .iter()
                    .copied()
                    .filter(|&i| columns[f][i] <= threshold)
                    .collect();
                send(
                    transport,
                    session,
                    &Message::SplitReply {
                        tree,
                        node,
                        record_id,
                        left: Bitset::from_indices(n, &left_rows)?,
                    },
                )?;
            }
            Message::PartitionQuery { record_id, rows } => {
                let rec = lookup.get(record_id)?;
                if rows.len() != n {
                    return Err(Error::protocol(format!(
                        "partition query covers {} rows, session has {n}",
                        rows.len()
                    )));
                }
                let left_rows: Vec<usize> = rows
                    .ones()
                    .into_iter()
                    .filter(|&i| columns[rec.feature as usize][i] <= rec.threshold)
                    .collect();
                send(
                    transport,
                    session,
                    &Message::PartitionReply {
                        record_id,
                        left: Bitset::from_indices(n, &left_rows)?,
                    },
                )?;
            }
            Message::TreeDone { tree } => {
                tree_state(&mut state, tree)?;
                state = None;
            }
            Message::TrainDone => break,
            other => {
                return Err(Error::protocol(format!(
                    "unexpected {} during training",
                    other.kind()
                )))
            }
        }
    }
    Ok(PassiveOutcome {
        party_id: data.party_id,
        lookup,
        aligned_ids,
    })
}

fn tree_state(state: &mut Option<TreeState>, tree: u32) -> Result<&mut TreeState> {
    match state.as_ref().map(|st| st.tree) {
        Some(t) if t == tree => Ok(state.as_mut().unwrap()),
        Some(t) => Err(Error::protocol(format!(
            "message for tree {tree} while tree {t} is active"
        ))),
        None => Err(Error::protocol(format!(
            "message for tree {tree} outside any tree"
        ))),
    }
}

/// Serves scoring requests against a previously trained lookup table.
/// `data` is this party's full local dataset (any row order); queried
/// IDs are matched against it directly.
pub fn serve_predict(
    transport: &mut dyn Transport,
    data: &PartyData,
    lookup: &LookupTable,
    config: &SessionConfig,
) -> Result<()> {
    config.validate()?;
    data.validate()?;
    if lookup.party_id != data.party_id {
        return Err(Error::config(format!(
            "lookup table belongs to party {}, data to party {}",
            lookup.party_id, data.party_id
        )));
    }
    let session = config.checksum();
    match serve_predict_inner(transport, data, lookup, config, session) {
        Ok(()) => Ok(()),
        Err(err) => {
            if !matches!(err, Error::Abort(_)) {
                let notice = Message::Abort {
                    code: abort_code_for(&err),
                    reason: err.to_string(),
                };
                let _ = transport.send_frame(wire::encode(session, &notice));
            }
            Err(err)
        }
    }
}

fn serve_predict_inner(
    transport: &mut dyn Transport,
    data: &PartyData,
    lookup: &LookupTable,
    config: &SessionConfig,
    session: u64,
) -> Result<()> {
    handshake(transport, data, config)?;
    let row_of: BTreeMap<&str, usize> = data
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let query_rows: Vec<Option<usize>> = match recv(transport, session, 0)? {
        Message::PredictBegin { ids } => {
            let rows: Vec<Option<usize>> = ids
                .iter()
                .map(|id| row_of.get(id.as_str()).copied())
                .collect();
            let missing: Vec<String> = ids
                .iter()
                .zip(&rows)
                .filter(|(_, r)| r.is_none())
                .map(|(id, _)| id.clone())
                .collect();
            send(transport, session, &Message::PredictAck { missing })?;
            rows
        }
        other => {
            return Err(Error::protocol(format!(
                "expected a scoring request, got {}",
                other.kind()
            )))
        }
    };
    loop {
        match recv(transport, session, 0)? {
            Message::InferQuery { query, record_id } => {
                let row = query_rows
                    .get(query as usize)
                    .copied()
                    .flatten()
                    .ok_or_else(|| {
                        Error::protocol(format!("routing asked about unknown query {query}"))
                    })?;
                let rec = lookup.get(record_id)?;
                let go_left = data.columns[rec.feature as usize][row] <= rec.threshold;
                send(
                    transport,
                    session,
                    &Message::InferReply { query, go_left },
                )?;
            }
            Message::PredictDone => return Ok(()),
            other => {
                return Err(Error::protocol(format!(
                    "unexpected {} during scoring",
                    other.kind()
                )))
            }
        }
    }
}

//! The active party: holds the labels, owns the Paillier key pair, and
//! coordinates every phase — handshake, alignment, key distribution,
//! tree growth, row routing, and scoring.
//!
//! Tree growth is breadth-first. At each node the active party computes
//! its own candidate splits from plaintext gradients, asks every passive
//! party for encrypted gradient histograms over the node's instance set,
//! decrypts them, and scores all candidates in one global order: its own
//! features first, then each passive party's in ascending party order.
//! If a passive candidate wins, the active party announces only the
//! (feature index, bucket index) pair; the winner records the actual
//! threshold privately and answers with its new lookup-record ID plus
//! the left-hand instance set. The model therefore never contains a
//! passive party's feature index or threshold — just `[party, record]`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::alignment::{self, Blinding};
use crate::bigmath::mix_seed;
use crate::boosting::histogram::{quantized_histogram, Histogram};
use crate::boosting::split::{best_split, BestSplit, HistogramBlock};
use crate::boosting::tree::{
    split_is_acceptable, stop_before_split, TrainTrace,
};
use crate::boosting::{
    base_raw, bins::BinThresholds, clamped_prob, leaf_weight, logistic_grad, metrics, sigmoid,
    subsample_rows, tree_rng, GradPair,
};
use crate::error::{Error, Result};
use crate::federation::bitset::Bitset;
use crate::federation::cost::{
    CostReport, CostTracker, Direction, GradientRecord, NodeHistRecord,
};
use crate::federation::model::{FedModel, FedNode, FedTree, LookupTable, MODEL_FORMAT_VERSION};
use crate::federation::transport::{frame_wire_bytes, Transport};
use crate::federation::wire::{self, abort_code_for, Message};
use crate::federation::{PartyData, SessionConfig, TrainingMode, ACTIVE_PARTY_ID};
use crate::paillier::{keygen, Ciphertext, FixedPointCodec, PaillierPrivateKey};

/// Seed-stream tag for the train/holdout partition.
const SPLIT_TAG: u64 = 0x7370_6c69_7400_0001;

pub struct ActiveLink {
    pub party_id: u32,
    pub transport: Box<dyn Transport>,
}

pub struct ActiveInputs {
    pub data: PartyData,
    /// One binary label per local row, in the same order as `data.ids`.
    pub labels: Vec<u8>,
}

/// Everything the active party walks away with after training.
pub struct ActiveOutcome {
    pub model: FedModel,
    pub lookup: LookupTable,
    /// Aligned IDs in canonical order; every vector below indexed by it.
    pub aligned_ids: Vec<String>,
    /// Labels reordered to the aligned index.
    pub labels: Vec<u8>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub trace: TrainTrace,
    /// Per tree, per aligned row: the leaf node index the row landed in.
    pub leaf_assignments: Vec<Vec<u32>>,
    /// Final raw (pre-sigmoid) score per aligned row.
    pub raw_scores: Vec<f64>,
    pub cost: CostReport,
}

/// Scoring result over explicit query IDs.
pub struct PredictOutcome {
    pub ids: Vec<String>,
    pub raw: Vec<f64>,
    pub probabilities: Vec<f64>,
    /// Per query, per tree: the leaf node index reached.
    pub leaf_nodes: Vec<Vec<u32>>,
    pub cost: CostReport,
}

struct Ctx {
    links: Vec<ActiveLink>,
    session: u64,
    fingerprint: u64,
    tracker: CostTracker,
}

impl Ctx {
    /// Sends one message on link `idx`, metering it. Returns wire bytes.
    fn send(&mut self, idx: usize, msg: &Message) -> Result<u64> {
        let frame = wire::encode(self.session, msg);
        let bytes = frame_wire_bytes(frame.len()) as u64;
        self.tracker
            .record(self.links[idx].party_id, Direction::Sent, msg, bytes);
        self.links[idx].transport.send_frame(frame)?;
        Ok(bytes)
    }

    /// Receives one message on link `idx`, metering it. A peer abort
    /// becomes an error.
    fn recv(&mut self, idx: usize) -> Result<(Message, u64)> {
        let frame = self.links[idx].transport.recv_frame()?;
        let (session, msg) = wire::decode(&frame, self.fingerprint)?;
        if session != self.session {
            return Err(Error::protocol(format!(
                "frame for session {session:#x} arrived in session {:#x}",
                self.session
            )));
        }
        self.accept(idx, frame.len(), msg)
    }

    /// Receive for the opening exchange only: a peer whose configuration
    /// disagrees tags its frames (including its abort notice) with a
    /// different session id, since the id is the config checksum. Reading
    /// the frame anyway lets the handshake report the actual mismatch.
    fn recv_opening(&mut self, idx: usize) -> Result<(Message, u64)> {
        let frame = self.links[idx].transport.recv_frame()?;
        let (_, msg) = wire::decode(&frame, self.fingerprint)?;
        self.accept(idx, frame.len(), msg)
    }

    fn accept(&mut self, idx: usize, frame_len: usize, msg: Message) -> Result<(Message, u64)> {
        let bytes = frame_wire_bytes(frame_len) as u64;
        self.tracker
            .record(self.links[idx].party_id, Direction::Received, &msg, bytes);
        if let Message::Abort { code, reason } = &msg {
            return Err(Error::abort(format!(
                "party {} aborted (code {code}): {reason}",
                self.links[idx].party_id
            )));
        }
        Ok((msg, bytes))
    }

    fn broadcast(&mut self, msg: &Message) -> Result<()> {
        for idx in 0..self.links.len() {
            self.send(idx, msg)?;
        }
        Ok(())
    }

    /// Best-effort abort notice to every peer.
    fn abort_all(&mut self, err: &Error) {
        let msg = Message::Abort {
            code: abort_code_for(err),
            reason: err.to_string(),
        };
        let frame = wire::encode(self.session, &msg);
        for link in &mut self.links {
            let _ = link.transport.send_frame(frame.clone());
        }
    }
}

/// Transport adapter that meters alignment traffic into the cost report.
struct MeteredLink<'a> {
    inner: &'a mut dyn Transport,
    tracker: &'a mut CostTracker,
    party_id: u32,
}

impl Transport for MeteredLink<'_> {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        if let Ok((_, msg)) = wire::decode(&frame, 0) {
            self.tracker.record(
                self.party_id,
                Direction::Sent,
                &msg,
                frame_wire_bytes(frame.len()) as u64,
            );
        }
        self.inner.send_frame(frame)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let frame = self.inner.recv_frame()?;
        if let Ok((_, msg)) = wire::decode(&frame, 0) {
            self.tracker.record(
                self.party_id,
                Direction::Received,
                &msg,
                frame_wire_bytes(frame.len()) as u64,
            );
        }
        Ok(frame)
    }
}

fn validate_active_inputs(inputs: &ActiveInputs, config: &SessionConfig) -> Result<()> {
    config.validate()?;
    inputs.data.validate()?;
    if inputs.data.party_id != ACTIVE_PARTY_ID {
        return Err(Error::config(format!(
            "active party must be party {ACTIVE_PARTY_ID}, got {}",
            inputs.data.party_id
        )));
    }
    if inputs.labels.len() != inputs.data.ids.len() {
        return Err(Error::validation(format!(
            "{} labels for {} rows",
            inputs.labels.len(),
            inputs.data.ids.len()
        )));
    }
    if inputs.labels.iter().any(|&y| y > 1) {
        return Err(Error::validation("labels must be 0 or 1"));
    }
    Ok(())
}

fn validate_links(links: &[ActiveLink], config: &SessionConfig) -> Result<()> {
    if links.len() + 1 != config.party_count as usize {
        return Err(Error::config(format!(
            "{} links for a {}-party session",
            links.len(),
            config.party_count
        )));
    }
    let expected: Vec<u32> = (2..=config.party_count).collect();
    let got: Vec<u32> = links.iter().map(|l| l.party_id).collect();
    if got != expected {
        return Err(Error::config(format!(
            "links must cover parties {expected:?} in order, got {got:?}"
        )));
    }
    Ok(())
}

/// Runs a full training session against the given passive-party links.
/// On error, peers are sent an abort notice before the error returns.
pub fn run_active(
    links: Vec<ActiveLink>,
    inputs: &ActiveInputs,
    config: &SessionConfig,
) -> Result<ActiveOutcome> {
    validate_active_inputs(inputs, config)?;
    validate_links(&links, config)?;
    let passive_ids: Vec<u32> = links.iter().map(|l| l.party_id).collect();
    let mut ctx = Ctx {
        links,
        session: config.checksum(),
        fingerprint: 0,
        tracker: CostTracker::new(
            &passive_ids,
            config.params.trees as u32,
            config.params.bins as u32,
            config.paillier_bits,
        ),
    };
    match train_active(&mut ctx, inputs, config) {
        Ok(outcome) => Ok(outcome),
        Err(err) => {
            ctx.abort_all(&err);
            Err(err)
        }
    }
}

fn handshake(ctx: &mut Ctx, config: &SessionConfig) -> Result<()> {
    let checksum = config.checksum();
    for idx in 0..ctx.links.len() {
        let expected = ctx.links[idx].party_id;
        ctx.send(
            idx,
            &Message::Hello {
                protocol_version: wire::PROTOCOL_VERSION,
                party_id: ACTIVE_PARTY_ID,
                config_checksum: checksum,
            },
        )?;
        match ctx.recv_opening(idx)?.0 {
            Message::HelloAck {
                party_id,
                config_checksum,
            } => {
                if party_id != expected {
                    return Err(Error::protocol(format!(
                        "link to party {expected} answered as party {party_id}"
                    )));
                }
                if config_checksum != checksum {
                    return Err(Error::config(format!(
                        "party {party_id} runs a different configuration \
                         (checksum {config_checksum:#018x} != {checksum:#018x})"
                    )));
                }
            }
            other => {
                return Err(Error::protocol(format!(
                    "expected hello-ack, got {}",
                    other.kind()
                )))
            }
        }
    }
    Ok(())
}

/// Pairwise-aligns with every passive in ascending party order, narrowing
/// the shared set each round, then broadcasts the final canonical list.
/// Returns the aligned IDs and the active party's own row for each.
fn align_all(ctx: &mut Ctx, inputs: &ActiveInputs) -> Result<(Vec<String>, Vec<usize>)> {
    let row_of: BTreeMap<&str, usize> = inputs
        .data
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut current: Vec<String> = inputs.data.ids.clone();
    let mut rng = rand::thread_rng();
    for idx in 0..ctx.links.len() {
        if current.is_empty() {
            return Err(Error::input("no entities shared by every party"));
        }
        let party_id = ctx.links[idx].party_id;
        let session = ctx.session;
        let mut metered = MeteredLink {
            inner: ctx.links[idx].transport.as_mut(),
            tracker: &mut ctx.tracker,
            party_id,
        };
        let result = alignment::initiate(&mut metered, session, current, Blinding::Fresh, &mut rng)?;
        current = result.shared_ids;
    }
    if current.is_empty() {
        return Err(Error::input("no entities shared by every party"));
    }
    ctx.broadcast(&Message::AlignedRows {
        ids: current.clone(),
    })?;
    let local_rows: Vec<usize> = current
        .iter()
        .map(|id| {
            row_of
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::invariant(format!("aligned ID {id:?} is not ours")))
        })
        .collect::<Result<_>>()?;
    Ok((current, local_rows))
}

/// Per-party decoded histogram plus the reply's accounting numbers.
struct PassiveHistogram {
    party_id: u32,
    hist: Histogram<f64>,
    buckets_used: u32,
    features: u32,
    bytes: u64,
}

/// Requests, collects, decrypts, and decodes every passive party's
/// histograms for one node.
fn collect_histograms(
    ctx: &mut Ctx,
    sk: &PaillierPrivateKey,
    codec: &FixedPointCodec,
    shapes: &mut BTreeMap<u32, Vec<usize>>,
    tree: u32,
    node: u32,
    instances: &Bitset,
) -> Result<Vec<PassiveHistogram>> {
    let request = Message::HistRequest {
        tree,
        node,
        instances: instances.clone(),
    };
    for idx in 0..ctx.links.len() {
        ctx.send(idx, &request)?;
    }
    let mut out = Vec::with_capacity(ctx.links.len());
    for idx in 0..ctx.links.len() {
        let party_id = ctx.links[idx].party_id;
        let (msg, bytes) = ctx.recv(idx)?;
        let (got_tree, got_node, g, h) = match msg {
            Message::HistReply { tree, node, g, h } => (tree, node, g, h),
            other => {
                return Err(Error::protocol(format!(
                    "expected histograms from party {party_id}, got {}",
                    other.kind()
                )))
            }
        };
        if (got_tree, got_node) != (tree, node) {
            return Err(Error::protocol(format!(
                "party {party_id} answered for tree {got_tree} node {got_node}, \
                 asked about tree {tree} node {node}"
            )));
        }
        if g.len() != h.len() || g.is_empty() {
            return Err(Error::protocol(format!(
                "party {party_id} sent {} g-columns and {} h-columns",
                g.len(),
                h.len()
            )));
        }
        let shape: Vec<usize> = g.iter().map(Vec::len).collect();
        if h.iter().map(Vec::len).collect::<Vec<_>>() != shape {
            return Err(Error::protocol(format!(
                "party {party_id} g/h histogram shapes disagree"
            )));
        }
        match shapes.get(&party_id) {
            None => {
                if shape.iter().any(|&b| b == 0 || b > 65_535) {
                    return Err(Error::protocol(format!(
                        "party {party_id} reported a degenerate bucket layout"
                    )));
                }
                shapes.insert(party_id, shape.clone());
            }
            Some(known) if *known != shape => {
                return Err(Error::protocol(format!(
                    "party {party_id} changed its histogram shape mid-session"
                )))
            }
            Some(_) => {}
        }
        let decode_all = |enc: Vec<Vec<Ciphertext>>| -> Result<Vec<Vec<f64>>> {
            enc.into_iter()
                .map(|col| {
                    col.into_iter()
                        .map(|ct| codec.decode(&sk.decrypt(&ct)?))
                        .collect()
                })
                .collect()
        };
        let buckets_used: usize = shape.iter().sum();
        out.push(PassiveHistogram {
            party_id,
            hist: Histogram {
                g: decode_all(g)?,
                h: decode_all(h)?,
            },
            buckets_used: buckets_used as u32,
            features: shape.len() as u32,
            bytes,
        });
    }
    Ok(out)
}

enum WonSplit {
    /// The active party's own candidate: partition locally.
    Active { feature: usize, threshold: f64 },
    /// A passive party's candidate: announce and await its partition.
    Passive { link_idx: usize, best: BestSplit },
}

struct GrowOutput {
    nodes: Vec<FedNode>,
    /// Leaf assignment for every row the tree was grown on.
    in_sample: Vec<(usize, u32)>,
}

/// Grows one tree over the wire. Mirrors the centralized grower exactly:
/// same stopping rules, same candidate order, same tie-breaking. Passive
/// candidates arrive as decrypted histogram sums and passive partitions as
/// bitsets, but since both growers score every block from the same
/// fixed-point grid, the numbers — and therefore the trees — are
/// bit-identical.
#[allow(clippy::too_many_arguments)]
fn grow_fed_tree(
    ctx: &mut Ctx,
    sk: Option<&PaillierPrivateKey>,
    codec: Option<&FixedPointCodec>,
    shapes: &mut BTreeMap<u32, Vec<usize>>,
    next_record: &mut BTreeMap<u32, u64>,
    lookup: &mut LookupTable,
    columns: &[Vec<f64>],
    bins: &BinThresholds,
    grads: &[GradPair],
    root_rows: Vec<usize>,
    tree_index: u32,
    n_aligned: usize,
    config: &SessionConfig,
    local_only: bool,
) -> Result<GrowOutput> {
    struct Work {
        node: u32,
        rows: Vec<usize>,
        depth: usize,
    }
    let params = &config.params;
    let mut nodes = vec![FedNode::Leaf { weight: 0.0 }];
    let mut in_sample: Vec<(usize, u32)> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(Work {
        node: 0,
        rows: root_rows,
        depth: 0,
    });
    while let Some(work) = queue.pop_front() {
        let g_total: f64 = work.rows.iter().map(|&i| grads[i].g).sum();
        let h_total: f64 = work.rows.iter().map(|&i| grads[i].h).sum();
        let finish_leaf =
            |nodes: &mut Vec<FedNode>, in_sample: &mut Vec<(usize, u32)>| -> Result<()> {
                nodes[work.node as usize] = FedNode::Leaf {
                    weight: leaf_weight(g_total, h_total, params.lambda)?,
                };
                in_sample.extend(work.rows.iter().map(|&r| (r, work.node)));
                Ok(())
            };
        if stop_before_split(work.depth, work.rows.len(), params) {
            finish_leaf(&mut nodes, &mut in_sample)?;
            continue;
        }
        // Same fixed-point grid as the wire encodings: the sums in this
        // block are bit-identical to what decrypting them would give, so
        // own candidates and decrypted passive candidates are comparable
        // without representation bias.
        let own_hist: Histogram<f64> =
            quantized_histogram(bins, columns, &work.rows, grads, params.scale_bits)?;
        let passive_hists = if local_only {
            Vec::new()
        } else {
            let instances = Bitset::from_indices(n_aligned, &work.rows)?;
            let hists = collect_histograms(
                ctx,
                sk.expect("key exists when passives participate"),
                codec.expect("codec exists when passives participate"),
                shapes,
                tree_index,
                work.node,
                &instances,
            )?;
            for ph in &hists {
                ctx.tracker.record_histogram(NodeHistRecord {
                    tree: tree_index,
                    node: work.node,
                    party_id: ph.party_id,
                    instances: work.rows.len() as u32,
                    features: ph.features,
                    buckets_used: ph.buckets_used,
                    ciphertexts: 2 * u64::from(ph.buckets_used),
                    bytes: ph.bytes,
                });
            }
            hists
        };
        let mut blocks = vec![HistogramBlock {
            party_id: ACTIVE_PARTY_ID,
            hist: &own_hist,
        }];
        blocks.extend(passive_hists.iter().map(|ph| HistogramBlock {
            party_id: ph.party_id,
            hist: &ph.hist,
        }));
        let best = match best_split(&blocks, g_total, h_total, params.lambda, params.gamma) {
            Some(b) if b.gain > 0.0 => b,
            _ => {
                finish_leaf(&mut nodes, &mut in_sample)?;
                continue;
            }
        };
        let won = if best.block_index == 0 {
            WonSplit::Active {
                feature: best.feature,
                threshold: bins.thresholds(best.feature)[best.bucket],
            }
        } else {
            WonSplit::Passive {
                link_idx: best.block_index - 1,
                best,
            }
        };
        let (party, record, left_rows, right_rows) = match won {
            WonSplit::Active { feature, threshold } => {
                let record = lookup.append(feature as u32, threshold);
                let (l, r): (Vec<usize>, Vec<usize>) = work
                    .rows
                    .iter()
                    .partition(|&&i| columns[feature][i] <= threshold);
                (ACTIVE_PARTY_ID, record, l, r)
            }
            WonSplit::Passive { link_idx, best } => {
                let party_id = ctx.links[link_idx].party_id;
                ctx.send(
                    link_idx,
                    &Message::SplitAnnounce {
                        tree: tree_index,
                        node: work.node,
                        feature: best.feature as u32,
                        bucket: best.bucket as u32,
                    },
                )?;
                let (msg, _) = ctx.recv(link_idx)?;
                let (got_tree, got_node, record_id, left) = match msg {
                    Message::SplitReply {
                        tree,
                        node,
                        record_id,
                        left,
                    } => (tree, node, record_id, left),
                    other => {
                        return Err(Error::protocol(format!(
                            "expected split reply from party {party_id}, got {}",
                            other.kind()
                        )))
                    }
                };
                if (got_tree, got_node) != (tree_index, work.node) {
                    return Err(Error::protocol(format!(
                        "party {party_id} replied for tree {got_tree} node {got_node}"
                    )));
                }
                let expected = next_record.entry(party_id).or_insert(0);
                if record_id != *expected {
                    return Err(Error::protocol(format!(
                        "party {party_id} assigned record {record_id}, expected {expected}"
                    )));
                }
                *expected += 1;
                let instances = Bitset::from_indices(n_aligned, &work.rows)?;
                if left.len() != n_aligned || !left.is_subset_of(&instances) {
                    return Err(Error::protocol(format!(
                        "party {party_id} returned a left set outside the node's instances"
                    )));
                }
                let l = left.ones();
                let lset = left;
                let r: Vec<usize> = work
                    .rows
                    .iter()
                    .copied()
                    .filter(|&i| !lset.get(i))
                    .collect();
                (party_id, record_id, l, r)
            }
        };
        if !split_is_acceptable(left_rows.len(), right_rows.len(), params.min_child) {
            finish_leaf(&mut nodes, &mut in_sample)?;
            continue;
        }
        let left_node = nodes.len() as u32;
        nodes.push(FedNode::Leaf { weight: 0.0 });
        let right_node = nodes.len() as u32;
        nodes.push(FedNode::Leaf { weight: 0.0 });
        nodes[work.node as usize] = FedNode::Split {
            party,
            record,
            left: left_node,
            right: right_node,
        };
        queue.push_back(Work {
            node: left_node,
            rows: left_rows,
            depth: work.depth + 1,
        });
        queue.push_back(Work {
            node: right_node,
            rows: right_rows,
            depth: work.depth + 1,
        });
    }
    Ok(GrowOutput { nodes, in_sample })
}

/// Routes `rows` from the root of a finished tree to leaves, asking the
/// owning party to evaluate each passive split. Returns (row, leaf) pairs.
fn route_rows(
    ctx: &mut Ctx,
    nodes: &[FedNode],
    lookup: &LookupTable,
    columns: &[Vec<f64>],
    rows: Vec<usize>,
    n_aligned: usize,
) -> Result<Vec<(usize, u32)>> {
    let mut assigned = Vec::with_capacity(rows.len());
    if rows.is_empty() {
        return Ok(assigned);
    }
    let mut queue = std::collections::VecDeque::new();
    queue.push_back((0u32, rows));
    while let Some((node, rows)) = queue.pop_front() {
        match &nodes[node as usize] {
            FedNode::Leaf { .. } => {
                assigned.extend(rows.into_iter().map(|r| (r, node)));
            }
            FedNode::Split {
                party,
                record,
                left,
                right,
            } => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = if *party
                    == ACTIVE_PARTY_ID
                {
                    let rec = lookup.get(*record)?;
                    rows.iter()
                        .partition(|&&i| columns[rec.feature as usize][i] <= rec.threshold)
                } else {
                    let link_idx = ctx
                        .links
                        .iter()
                        .position(|l| l.party_id == *party)
                        .ok_or_else(|| {
                            Error::protocol(format!("no link to party {party} for routing"))
                        })?;
                    let query = Bitset::from_indices(n_aligned, &rows)?;
                    ctx.send(
                        link_idx,
                        &Message::PartitionQuery {
                            record_id: *record,
                            rows: query.clone(),
                        },
                    )?;
                    let (msg, _) = ctx.recv(link_idx)?;
                    let (got_record, leftset) = match msg {
                        Message::PartitionReply { record_id, left } => (record_id, left),
                        other => {
                            return Err(Error::protocol(format!(
                                "expected partition reply from party {party}, got {}",
                                other.kind()
                            )))
                        }
                    };
                    if got_record != *record {
                        return Err(Error::protocol(format!(
                            "party {party} answered for record {got_record}, asked {record}"
                        )));
                    }
                    if leftset.len() != n_aligned || !leftset.is_subset_of(&query) {
                        return Err(Error::protocol(format!(
                            "party {party} returned a left set outside the queried rows"
                        )));
                    }
                    let l = leftset.ones();
                    let r: Vec<usize> =
                        rows.iter().copied().filter(|&i| !leftset.get(i)).collect();
                    (l, r)
                };
                if !left_rows.is_empty() {
                    queue.push_back((*left, left_rows));
                }
                if !right_rows.is_empty() {
                    queue.push_back((*right, right_rows));
                }
            }
        }
    }
    Ok(assigned)
}

fn leaf_weight_of(nodes: &[FedNode], node: u32) -> Result<f64> {
    match &nodes[node as usize] {
        FedNode::Leaf { weight } => Ok(*weight),
        _ => Err(Error::invariant("row assigned to a non-leaf node")),
    }
}

fn train_active(
    ctx: &mut Ctx,
    inputs: &ActiveInputs,
    config: &SessionConfig,
) -> Result<ActiveOutcome> {
    let params = &config.params;
    handshake(ctx, config)?;

    let (aligned_ids, local_rows) = align_all(ctx, inputs)?;
    let n = aligned_ids.len();
    ctx.tracker.set_aligned_rows(n as u32);
    let columns = inputs.data.reindex(&local_rows)?;
    let labels: Vec<u8> = local_rows.iter().map(|&r| inputs.labels[r]).collect();

    // Key material only matters when someone else must aggregate for us.
    let (sk, codec) = if ctx.links.is_empty() {
        (None, None)
    } else {
        let (pk, sk) = keygen(config.paillier_bits, &mut rand::thread_rng())?;
        let codec = FixedPointCodec::new(config.params.scale_bits, &pk)?;
        codec.check_capacity(n)?;
        ctx.fingerprint = pk.fingerprint();
        ctx.broadcast(&Message::PaillierKey { key: pk.to_bytes() })?;
        (Some(sk), Some(codec))
    };

    let mut split_rng = ChaCha20Rng::seed_from_u64(mix_seed(config.seed, SPLIT_TAG));
    let train_rows = subsample_rows(n, config.train_fraction, &mut split_rng);
    let train_set: Vec<bool> = {
        let mut s = vec![false; n];
        for &r in &train_rows {
            s[r] = true;
        }
        s
    };
    let test_rows: Vec<usize> = (0..n).filter(|&r| !train_set[r]).collect();

    let all_rows: Vec<usize> = (0..n).collect();
    let bins = BinThresholds::propose(&columns, &all_rows, params.bins)?;

    let mut raw = vec![base_raw(params.base_score); n];
    let mut lookup = LookupTable::new(ACTIVE_PARTY_ID);
    let mut shapes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut next_record: BTreeMap<u32, u64> = BTreeMap::new();
    let mut trees: Vec<FedTree> = Vec::with_capacity(params.trees);
    let mut leaf_assignments: Vec<Vec<u32>> = Vec::with_capacity(params.trees);
    let mut trace = TrainTrace::default();

    for t in 0..params.trees {
        let local_only =
            config.mode == TrainingMode::CompletelySecure && t == 0 || ctx.links.is_empty();
        ctx.broadcast(&Message::TreeStart {
            tree: t as u32,
            local_only,
        })?;

        let mut rng = tree_rng(config.seed, t);
        let picked = subsample_rows(train_rows.len(), params.subsample, &mut rng);
        let root_rows: Vec<usize> = picked.iter().map(|&p| train_rows[p]).collect();
        let mut grads = vec![GradPair::default(); n];
        for &i in &root_rows {
            grads[i] = logistic_grad(labels[i], clamped_prob(raw[i]))?;
        }

        if !local_only {
            let rows_bits = Bitset::from_indices(n, &root_rows)?;
            let mut enc_rng = rand::thread_rng();
            let codec = codec.as_ref().expect("codec exists with passives");
            let pk = sk.as_ref().expect("key exists with passives").public();
            let mut enc_g = Vec::with_capacity(root_rows.len());
            let mut enc_h = Vec::with_capacity(root_rows.len());
            for &i in &root_rows {
                enc_g.push(pk.encrypt(&codec.encode(grads[i].g)?, &mut enc_rng)?);
                enc_h.push(pk.encrypt(&codec.encode(grads[i].h)?, &mut enc_rng)?);
            }
            let msg = Message::EncGradients {
                tree: t as u32,
                rows: rows_bits,
                g: enc_g,
                h: enc_h,
            };
            for idx in 0..ctx.links.len() {
                let bytes = ctx.send(idx, &msg)?;
                let party_id = ctx.links[idx].party_id;
                ctx.tracker.record_gradient(GradientRecord {
                    tree: t as u32,
                    party_id,
                    rows: root_rows.len() as u32,
                    ciphertexts: 2 * root_rows.len() as u64,
                    bytes,
                });
            }
        }

        let grown = grow_fed_tree(
            ctx,
            sk.as_ref(),
            codec.as_ref(),
            &mut shapes,
            &mut next_record,
            &mut lookup,
            &columns,
            &bins,
            &grads,
            root_rows.clone(),
            t as u32,
            n,
            config,
            local_only,
        )?;

        // In-sample rows got their leaves during growth; everything else
        // (held-out rows plus rows the subsample skipped) is routed now.
        let mut assignment = vec![u32::MAX; n];
        for &(row, node) in &grown.in_sample {
            assignment[row] = node;
        }
        let in_tree: Vec<bool> = {
            let mut s = vec![false; n];
            for &r in &root_rows {
                s[r] = true;
            }
            s
        };
        let rest: Vec<usize> = (0..n).filter(|&r| !in_tree[r]).collect();
        for (row, node) in route_rows(ctx, &grown.nodes, &lookup, &columns, rest, n)? {
            assignment[row] = node;
        }
        if assignment.iter().any(|&a| a == u32::MAX) {
            return Err(Error::invariant("a row was never assigned a leaf"));
        }
        for (i, r) in raw.iter_mut().enumerate() {
            *r += params.learning_rate * leaf_weight_of(&grown.nodes, assignment[i])?;
        }
        trees.push(FedTree { nodes: grown.nodes });
        leaf_assignments.push(assignment);

        let loss_over = |rows: &[usize]| -> Result<f64> {
            let probs: Vec<f64> = rows.iter().map(|&i| sigmoid(raw[i])).collect();
            let ys: Vec<u8> = rows.iter().map(|&i| labels[i]).collect();
            metrics::log_loss(&ys, &probs)
        };
        trace.train_loss.push(loss_over(&train_rows)?);
        if !test_rows.is_empty() {
            trace.test_loss.push(loss_over(&test_rows)?);
        }
        ctx.broadcast(&Message::TreeDone { tree: t as u32 })?;
    }
    ctx.broadcast(&Message::TrainDone)?;

    let mut parties = vec![ACTIVE_PARTY_ID];
    parties.extend(ctx.links.iter().map(|l| l.party_id));
    let model = FedModel {
        format_version: MODEL_FORMAT_VERSION,
        mode: config.mode,
        learning_rate: params.learning_rate,
        base_score: params.base_score,
        parties,
        trees,
    };
    model.validate()?;
    Ok(ActiveOutcome {
        model,
        lookup,
        aligned_ids,
        labels,
        train_rows,
        test_rows,
        trace,
        leaf_assignments,
        raw_scores: raw,
        cost: std::mem::replace(
            &mut ctx.tracker,
            CostTracker::new(&[], 0, 0, 0),
        )
        .finish(),
    })
}

/// Scores explicit query IDs through a trained model, asking the owning
/// party for each passive routing decision. Every queried ID must exist
/// at every party. The peers must be running their scoring servers.
pub fn run_active_predict(
    links: Vec<ActiveLink>,
    model: &FedModel,
    lookup: &LookupTable,
    data: &PartyData,
    query_ids: &[String],
    config: &SessionConfig,
) -> Result<PredictOutcome> {
    model.validate()?;
    data.validate()?;
    config.validate()?;
    validate_links(&links, config)?;
    if query_ids.is_empty() {
        return Err(Error::input("no IDs to score"));
    }
    let passive_ids: Vec<u32> = links.iter().map(|l| l.party_id).collect();
    let mut ctx = Ctx {
        links,
        session: config.checksum(),
        fingerprint: 0,
        tracker: CostTracker::new(&passive_ids, 0, config.params.bins as u32, 0),
    };
    match predict_inner(&mut ctx, model, lookup, data, query_ids, config) {
        Ok(outcome) => Ok(outcome),
        Err(err) => {
            ctx.abort_all(&err);
            Err(err)
        }
    }
}

fn predict_inner(
    ctx: &mut Ctx,
    model: &FedModel,
    lookup: &LookupTable,
    data: &PartyData,
    query_ids: &[String],
    config: &SessionConfig,
) -> Result<PredictOutcome> {
    handshake(ctx, config)?;
    let row_of: BTreeMap<&str, usize> = data
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let own_missing: Vec<&String> = query_ids
        .iter()
        .filter(|id| !row_of.contains_key(id.as_str()))
        .collect();
    if !own_missing.is_empty() {
        return Err(Error::input(format!(
            "{} queried IDs have no local row (first: {:?})",
            own_missing.len(),
            own_missing[0]
        )));
    }
    ctx.broadcast(&Message::PredictBegin {
        ids: query_ids.to_vec(),
    })?;
    for idx in 0..ctx.links.len() {
        let party_id = ctx.links[idx].party_id;
        match ctx.recv(idx)?.0 {
            Message::PredictAck { missing } if missing.is_empty() => {}
            Message::PredictAck { missing } => {
                return Err(Error::input(format!(
                    "party {party_id} has no rows for {} queried IDs (first: {:?})",
                    missing.len(),
                    missing[0]
                )))
            }
            other => {
                return Err(Error::protocol(format!(
                    "expected scoring ack from party {party_id}, got {}",
                    other.kind()
                )))
            }
        }
    }

    let base = base_raw(model.base_score);
    let mut raw = vec![base; query_ids.len()];
    let mut leaf_nodes = vec![Vec::with_capacity(model.trees.len()); query_ids.len()];
    for (q, id) in query_ids.iter().enumerate() {
        let row = row_of[id.as_str()];
        for tree in &model.trees {
            let mut at = 0u32;
            loop {
                match &tree.nodes[at as usize] {
                    FedNode::Leaf { weight } => {
                        raw[q] += model.learning_rate * weight;
                        leaf_nodes[q].push(at);
                        break;
                    }
                    FedNode::Split {
                        party,
                        record,
                        left,
                        right,
                    } => {
                        let go_left = if *party == ACTIVE_PARTY_ID {
                            let rec = lookup.get(*record)?;
                            data.columns[rec.feature as usize][row] <= rec.threshold
                        } else {
                            let link_idx = ctx
                                .links
                                .iter()
                                .position(|l| l.party_id == *party)
                                .ok_or_else(|| {
                                    Error::protocol(format!("no link to party {party}"))
                                })?;
                            ctx.send(
                                link_idx,
                                &Message::InferQuery {
                                    query: q as u32,
                                    record_id: *record,
                                },
                            )?;
                            match ctx.recv(link_idx)?.0 {
                                Message::InferReply { query, go_left } => {
                                    if query != q as u32 {
                                        return Err(Error::protocol(format!(
                                            "party {party} answered query {query}, asked {q}"
                                        )));
                                    }
                                    go_left
                                }
                                other => {
                                    return Err(Error::protocol(format!(
                                        "expected routing answer from party {party}, got {}",
                                        other.kind()
                                    )))
                                }
                            }
                        };
                        at = if go_left { *left } else { *right };
                    }
                }
            }
        }
    }
    ctx.broadcast(&Message::PredictDone)?;
    let probabilities = raw.iter().map(|&r| sigmoid(r)).collect();
    Ok(PredictOutcome {
        ids: query_ids.to_vec(),
        raw,
        probabilities,
        leaf_nodes,
        cost: std::mem::replace(&mut ctx.tracker, CostTracker::new(&[], 0, 0, 0)).finish(),
    })
}

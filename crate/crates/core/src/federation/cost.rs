//! Communication accounting. The active party meters every frame it
//! exchanges with each passive party — message counts, wire bytes
//! (payload plus the 4-byte length prefix every transport charges), and
//! ciphertext counts — broken down by protocol phase, plus a per-node
//! record of histogram traffic for checking the bucketed-aggregation
//! bound: a node's histogram reply carries at most `2 * bins * features`
//! ciphertexts regardless of how many rows sit at that node, where
//! row-level aggregation would cost `2 * rows * features`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::wire::Message;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Control,
    Alignment,
    KeyDistribution,
    GradientBroadcast,
    Histograms,
    Splits,
    Routing,
    Inference,
}

pub const ALL_PHASES: [Phase; 8] = [
    Phase::Control,
    Phase::Alignment,
    Phase::KeyDistribution,
    Phase::GradientBroadcast,
    Phase::Histograms,
    Phase::Splits,
    Phase::Routing,
    Phase::Inference,
];

pub fn phase_of(msg: &Message) -> Phase {
    match msg {
        Message::Hello { .. }
        | Message::HelloAck { .. }
        | Message::TreeStart { .. }
        | Message::TreeDone { .. }
        | Message::TrainDone
        | Message::Abort { .. } => Phase::Control,
        Message::AlignKey { .. }
        | Message::AlignBlinded { .. }
        | Message::AlignSigned { .. }
        | Message::AlignIntersection { .. }
        | Message::AlignConfirm { .. }
        | Message::AlignedRows { .. } => Phase::Alignment,
        Message::PaillierKey { .. } => Phase::KeyDistribution,
        Message::EncGradients { .. } => Phase::GradientBroadcast,
        Message::HistRequest { .. } | Message::HistReply { .. } => Phase::Histograms,
        Message::SplitAnnounce { .. } | Message::SplitReply { .. } => Phase::Splits,
        Message::PartitionQuery { .. } | Message::PartitionReply { .. } => Phase::Routing,
        Message::PredictBegin { .. }
        | Message::PredictAck { .. }
        | Message::InferQuery { .. }
        | Message::InferReply { .. }
        | Message::PredictDone => Phase::Inference,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counter {
    pub messages: u64,
    pub bytes: u64,
    pub ciphertexts: u64,
}

impl Counter {
    pub fn add(&mut self, bytes: u64, ciphertexts: u64) {
        self.messages += 1;
        self.bytes += bytes;
        self.ciphertexts += ciphertexts;
    }

    pub fn merge(&mut self, other: &Counter) {
        self.messages += other.messages;
        self.bytes += other.bytes;
        self.ciphertexts += other.ciphertexts;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub phase: Phase,
    pub sent: Counter,
    pub received: Counter,
}

/// Traffic on one active↔passive link, as seen from the active party.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinkCost {
    pub party_id: u32,
    pub phases: Vec<PhaseEntry>,
}

impl LinkCost {
    fn new(party_id: u32) -> Self {
        LinkCost {
            party_id,
            phases: ALL_PHASES
                .iter()
                .map(|&phase| PhaseEntry {
                    phase,
                    sent: Counter::default(),
                    received: Counter::default(),
                })
                .collect(),
        }
    }

    fn entry_mut(&mut self, phase: Phase) -> &mut PhaseEntry {
        self.phases
            .iter_mut()
            .find(|e| e.phase == phase)
            .expect("all phases preallocated")
    }

    pub fn entry(&self, phase: Phase) -> &PhaseEntry {
        self.phases
            .iter()
            .find(|e| e.phase == phase)
            .expect("all phases preallocated")
    }

    pub fn total(&self) -> Counter {
        let mut t = Counter::default();
        for e in &self.phases {
            t.merge(&e.sent);
            t.merge(&e.received);
        }
        t
    }
}

/// One histogram reply: what it actually cost versus the bucket bound
/// and the row-level alternative.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeHistRecord {
    pub tree: u32,
    pub node: u32,
    pub party_id: u32,
    /// Rows at this node (the instance-space size the reply aggregated).
    pub instances: u32,
    /// Feature columns the replying party holds.
    pub features: u32,
    /// Sum over that party's features of their per-feature bucket counts.
    pub buckets_used: u32,
    pub ciphertexts: u64,
    pub bytes: u64,
}

impl NodeHistRecord {
    /// Hard cap from the binning config: g and h per bucket, every
    /// feature at the maximum bucket count.
    pub fn bucket_cap(&self, max_bins: u32) -> u64 {
        2 * u64::from(max_bins) * u64::from(self.features)
    }

    /// What per-row aggregation would have shipped for this node.
    pub fn naive_ciphertexts(&self) -> u64 {
        2 * u64::from(self.instances) * u64::from(self.features)
    }
}

/// One per-tree encrypted gradient broadcast to one passive party.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientRecord {
    pub tree: u32,
    pub party_id: u32,
    pub rows: u32,
    pub ciphertexts: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostReport {
    pub party_count: u32,
    pub aligned_rows: u32,
    pub trees: u32,
    pub max_bins: u32,
    pub paillier_bits: u32,
    pub links: Vec<LinkCost>,
    pub gradients: Vec<GradientRecord>,
    pub histograms: Vec<NodeHistRecord>,
}

impl CostReport {
    pub fn total(&self) -> Counter {
        let mut t = Counter::default();
        for link in &self.links {
            t.merge(&link.total());
        }
        t
    }

    /// Histogram records whose ciphertext count exceeds the bucket cap.
    /// An empty result means the bound held everywhere.
    pub fn histogram_bound_violations(&self) -> Vec<&NodeHistRecord> {
        self.histograms
            .iter()
            .filter(|h| h.ciphertexts > h.bucket_cap(self.max_bins))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::persist(format!("cost report serialization: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::persist(format!("cost report {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Incremental meter the active party drives during a session.
#[derive(Debug)]
pub struct CostTracker {
    report: CostReport,
}

impl CostTracker {
    pub fn new(
        passive_ids: &[u32],
        trees: u32,
        max_bins: u32,
        paillier_bits: u32,
    ) -> Self {
        CostTracker {
            report: CostReport {
                party_count: passive_ids.len() as u32 + 1,
                aligned_rows: 0,
                trees,
                max_bins,
                paillier_bits,
                links: passive_ids.iter().map(|&p| LinkCost::new(p)).collect(),
                gradients: Vec::new(),
                histograms: Vec::new(),
            },
        }
    }

    pub fn set_aligned_rows(&mut self, n: u32) {
        self.report.aligned_rows = n;
    }

    /// Meters one frame on one link. `wire_bytes` must include framing
    /// overhead so that channel and socket transports account alike.
    pub fn record(&mut self, party_id: u32, direction: Direction, msg: &Message, wire_bytes: u64) {
        let link = self
            .report
            .links
            .iter_mut()
            .find(|l| l.party_id == party_id)
            .expect("link registered at construction");
        let entry = link.entry_mut(phase_of(msg));
        let counter = match direction {
            Direction::Sent => &mut entry.sent,
            Direction::Received => &mut entry.received,
        };
        counter.add(wire_bytes, msg.ciphertext_count() as u64);
    }

    pub fn record_gradient(&mut self, rec: GradientRecord) {
        self.report.gradients.push(rec);
    }

    pub fn record_histogram(&mut self, rec: NodeHistRecord) {
        self.report.histograms.push(rec);
    }

    pub fn finish(self) -> CostReport {
        self.report
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::bitset::Bitset;

    #[test]
    fn every_message_kind_has_a_phase() {
        // Spot-check the mapping at its boundaries.
        assert_eq!(phase_of(&Message::TrainDone), Phase::Control);
        assert_eq!(
            phase_of(&Message::AlignConfirm { count: 0 }),
            Phase::Alignment
        );
        assert_eq!(
            phase_of(&Message::PaillierKey { key: vec![] }),
            Phase::KeyDistribution
        );
        assert_eq!(
            phase_of(&Message::HistRequest {
                tree: 0,
                node: 0,
                instances: Bitset::new(8).unwrap(),
            }),
            Phase::Histograms
        );
        assert_eq!(
            phase_of(&Message::PartitionReply {
                record_id: 0,
                left: Bitset::new(8).unwrap(),
            }),
            Phase::Routing
        );
        assert_eq!(phase_of(&Message::PredictDone), Phase::Inference);
    }

    #[test]
    fn tracker_accumulates_per_link_and_phase() {
        let mut t = CostTracker::new(&[2, 3], 5, 32, 512);
        t.record(2, Direction::Sent, &Message::TrainDone, 14);
        t.record(2, Direction::Sent, &Message::TrainDone, 14);
        t.record(3, Direction::Received, &Message::PredictDone, 14);
        let report = t.finish();
        let link2 = report.links.iter().find(|l| l.party_id == 2).unwrap();
        assert_eq!(link2.entry(Phase::Control).sent.messages, 2);
        assert_eq!(link2.entry(Phase::Control).sent.bytes, 28);
        let link3 = report.links.iter().find(|l| l.party_id == 3).unwrap();
        assert_eq!(link3.entry(Phase::Inference).received.messages, 1);
        assert_eq!(report.total().messages, 3);
    }

    #[test]
    fn bucket_cap_and_naive_cost() {
        let rec = NodeHistRecord {
            tree: 0,
            node: 0,
            party_id: 2,
            instances: 1000,
            features: 5,
            buckets_used: 150,
            ciphertexts: 300,
            bytes: 0,
        };
        assert_eq!(rec.bucket_cap(32), 320);
        assert_eq!(rec.naive_ciphertexts(), 10_000);
    }

    #[test]
    fn bound_violations_detected() {
        let mut t = CostTracker::new(&[2], 1, 32, 512);
        t.record_histogram(NodeHistRecord {
            tree: 0,
            node: 0,
            party_id: 2,
            instances: 10,
            features: 1,
            buckets_used: 32,
            ciphertexts: 64, // exactly at cap: fine
            bytes: 0,
        });
        t.record_histogram(NodeHistRecord {
            tree: 0,
            node: 1,
            party_id: 2,
            instances: 10,
            features: 1,
            buckets_used: 33,
            ciphertexts: 66, // over cap
            bytes: 0,
        });
        let report = t.finish();
        let bad = report.histogram_bound_violations();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].node, 1);
    }

    #[test]
    fn report_json_roundtrip() {
        let mut t = CostTracker::new(&[2], 3, 16, 512);
        t.set_aligned_rows(100);
        t.record(2, Direction::Sent, &Message::TrainDone, 14);
        t.record_gradient(GradientRecord {
            tree: 0,
            party_id: 2,
            rows: 80,
            ciphertexts: 160,
            bytes: 21_000,
        });
        let report = t.finish();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cost.json");
        report.save(&path).unwrap();
        let back = CostReport::load(&path).unwrap();
        assert_eq!(back.total(), report.total());
        assert_eq!(back.gradients.len(), 1);
        assert_eq!(back.aligned_rows, 100);
    }
}

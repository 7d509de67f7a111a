//! Binary message encoding. Every frame is `[tag: u8][session id: u64 BE]
//! [payload]`; transports prepend a 4-byte big-endian frame length when
//! they put frames on a byte stream. Integers are big-endian throughout,
//! variable-length integers carry a 4-byte length prefix, bitsets carry an
//! explicit bit count, and ciphertexts are length-prefixed minimal
//! big-endian byte strings (their key fingerprint travels out of band: the
//! receiver attaches the fingerprint of the session key).

use num_bigint::BigUint;

use super::bitset::Bitset;
use crate::error::{Error, Result};
use crate::paillier::Ciphertext;

pub const PROTOCOL_VERSION: u16 = 1;

/// Upper bound on a decoded frame; anything larger is rejected before
/// allocation. Generous enough for 1M-element alignment batches.
pub const MAX_FRAME_BYTES: usize = 256 * 1024 * 1024;

const MAX_COUNT: usize = 1 << 24;

/// Abort cause codes carried in [`Message::Abort`].
pub mod abort_code {
    pub const CONFIG: u8 = 1;
    pub const INPUT: u8 = 2;
    pub const PROTOCOL: u8 = 3;
    pub const CRYPTO: u8 = 4;
    pub const INTERNAL: u8 = 5;
}

/// The abort code a party reports for a local failure.
pub fn abort_code_for(err: &crate::error::Error) -> u8 {
    use crate::error::Error;
    match err {
        Error::Config(_) => abort_code::CONFIG,
        Error::Validation(_) | Error::Input(_) | Error::Domain(_) => abort_code::INPUT,
        Error::Protocol(_) | Error::Abort(_) | Error::Wire(_) | Error::Transport(_) => {
            abort_code::PROTOCOL
        }
        Error::Key(_) => abort_code::CRYPTO,
        Error::Invariant(_) | Error::Persist(_) | Error::Io(_) => abort_code::INTERNAL,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Session opener, active -> passive.
    Hello {
        protocol_version: u16,
        party_id: u32,
        config_checksum: u64,
    },
    /// Passive's answer; checksum mismatch aborts the session.
    HelloAck {
        party_id: u32,
        config_checksum: u64,
    },
    /// Signer's RSA public key for blind intersection.
    AlignKey { bits: u32, n: BigUint, e: BigUint },
    /// Blinded hashes from the initiator, one per local ID.
    AlignBlinded { items: Vec<BigUint> },
    /// Signatures on the blinded batch plus the signer's own signed-hash
    /// tags (sorted, so their order reveals nothing about the ID list).
    AlignSigned {
        signed: Vec<BigUint>,
        signer_tags: Vec<[u8; 32]>,
    },
    /// The intersection, sent back to the signer.
    AlignIntersection { ids: Vec<String> },
    /// Signer's acknowledgement, echoing the intersection size.
    AlignConfirm { count: u32 },
    /// Final aligned ID list in canonical order (multi-party sessions
    /// narrow the set below any single pairwise intersection).
    AlignedRows { ids: Vec<String> },
    /// Serialized Paillier public key.
    PaillierKey { key: Vec<u8> },
    TreeStart { tree: u32, local_only: bool },
    /// Per-tree gradient broadcast: ciphertext pairs for exactly the rows
    /// set in `rows`, in ascending row order.
    EncGradients {
        tree: u32,
        rows: Bitset,
        g: Vec<Ciphertext>,
        h: Vec<Ciphertext>,
    },
    /// Ask a passive party for encrypted histograms over an instance set.
    HistRequest {
        tree: u32,
        node: u32,
        instances: Bitset,
    },
    /// Encrypted histograms: per local feature, per bucket.
    HistReply {
        tree: u32,
        node: u32,
        g: Vec<Vec<Ciphertext>>,
        h: Vec<Vec<Ciphertext>>,
    },
    /// Tells the winning party which of its candidates was chosen. Only
    /// the (feature, bucket) index pair crosses the wire — never the
    /// threshold value.
    SplitAnnounce {
        tree: u32,
        node: u32,
        feature: u32,
        bucket: u32,
    },
    /// The winner's answer: its new lookup-record id and the left set.
    SplitReply {
        tree: u32,
        node: u32,
        record_id: u64,
        left: Bitset,
    },
    /// Route extra rows (out-of-sample and held-out) through a recorded
    /// split after the tree is grown.
    PartitionQuery { record_id: u64, rows: Bitset },
    PartitionReply { record_id: u64, left: Bitset },
    TreeDone { tree: u32 },
    TrainDone,
    /// Scoring session opener: the IDs about to be scored, in order.
    PredictBegin { ids: Vec<String> },
    /// IDs the party cannot score (missing rows); empty means ready.
    PredictAck { missing: Vec<String> },
    /// One routing decision: evaluate lookup record `record_id` for the
    /// query at position `query` in the PredictBegin list.
    InferQuery { query: u32, record_id: u64 },
    InferReply { query: u32, go_left: bool },
    PredictDone,
    Abort { code: u8, reason: String },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Hello { .. } => 0x01,
            Message::HelloAck { .. } => 0x02,
            Message::AlignKey { .. } => 0x03,
            Message::AlignBlinded { .. } => 0x04,
            Message::AlignSigned { .. } => 0x05,
            Message::AlignIntersection { .. } => 0x06,
            Message::AlignConfirm { .. } => 0x07,
            Message::AlignedRows { .. } => 0x08,
            Message::PaillierKey { .. } => 0x09,
            Message::TreeStart { .. } => 0x0a,
            Message::EncGradients { .. } => 0x0b,
            Message::HistRequest { .. } => 0x0c,
            Message::HistReply { .. } => 0x0d,
            Message::SplitAnnounce { .. } => 0x0e,
            Message::SplitReply { .. } => 0x0f,
            Message::PartitionQuery { .. } => 0x10,
            Message::PartitionReply { .. } => 0x11,
            Message::TreeDone { .. } => 0x12,
            Message::TrainDone => 0x13,
            Message::PredictBegin { .. } => 0x14,
            Message::PredictAck { .. } => 0x15,
            Message::InferQuery { .. } => 0x16,
            Message::InferReply { .. } => 0x17,
            Message::PredictDone => 0x18,
            Message::Abort { .. } => 0x19,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Hello { .. } => "hello",
            Message::HelloAck { .. } => "hello-ack",
            Message::AlignKey { .. } => "align-key",
            Message::AlignBlinded { .. } => "align-blinded",
            Message::AlignSigned { .. } => "align-signed",
            Message::AlignIntersection { .. } => "align-intersection",
            Message::AlignConfirm { .. } => "align-confirm",
            Message::AlignedRows { .. } => "aligned-rows",
            Message::PaillierKey { .. } => "paillier-key",
            Message::TreeStart { .. } => "tree-start",
            Message::EncGradients { .. } => "enc-gradients",
            Message::HistRequest { .. } => "hist-request",
            Message::HistReply { .. } => "hist-reply",
            Message::SplitAnnounce { .. } => "split-announce",
            Message::SplitReply { .. } => "split-reply",
            Message::PartitionQuery { .. } => "partition-query",
            Message::PartitionReply { .. } => "partition-reply",
            Message::TreeDone { .. } => "tree-done",
            Message::TrainDone => "train-done",
            Message::PredictBegin { .. } => "predict-begin",
            Message::PredictAck { .. } => "predict-ack",
            Message::InferQuery { .. } => "infer-query",
            Message::InferReply { .. } => "infer-reply",
            Message::PredictDone => "predict-done",
            Message::Abort { .. } => "abort",
        }
    }

    /// Number of ciphertexts the message carries (for cost accounting).
    pub fn ciphertext_count(&self) -> u64 {
        match self {
            Message::EncGradients { g, h, .. } => (g.len() + h.len()) as u64,
            Message::HistReply { g, h, .. } => {
                let gs: usize = g.iter().map(Vec::len).sum();
                let hs: usize = h.iter().map(Vec::len).sum();
                (gs + hs) as u64
            }
            _ => 0,
        }
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new(tag: u8, session: u64) -> Self {
        let mut buf = Vec::with_capacity(64);
        buf.push(tag);
        buf.extend_from_slice(&session.to_be_bytes());
        Writer { buf }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }
    fn bool(&mut self, v: bool) {
        self.buf.push(u8::from(v));
    }

    fn biguint(&mut self, v: &BigUint) {
        let bytes = v.to_bytes_be();
        self.u32(bytes.len() as u32);
        self.buf.extend_from_slice(&bytes);
    }

    fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.buf.extend_from_slice(b);
    }

    fn bitset(&mut self, b: &Bitset) {
        let (len, bytes) = b.wire_parts();
        self.u32(len);
        self.buf.extend_from_slice(bytes);
    }

    fn ciphertext(&mut self, c: &Ciphertext) {
        self.buf.extend_from_slice(&c.to_bytes());
    }

    fn ciphertexts(&mut self, cs: &[Ciphertext]) {
        self.u32(cs.len() as u32);
        for c in cs {
            self.ciphertext(c);
        }
    }

    fn nested_ciphertexts(&mut self, rows: &[Vec<Ciphertext>]) {
        self.u32(rows.len() as u32);
        for row in rows {
            self.ciphertexts(row);
        }
    }

    fn strings(&mut self, items: &[String]) {
        self.u32(items.len() as u32);
        for s in items {
            self.string(s);
        }
    }

    fn biguints(&mut self, items: &[BigUint]) {
        self.u32(items.len() as u32);
        for v in items {
            self.biguint(v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    fingerprint: u64,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::wire(format!(
                "frame truncated: wanted {n} bytes at offset {}, frame has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::wire(format!("boolean byte {v}"))),
        }
    }

    fn count(&mut self) -> Result<usize> {
        let n = self.u32()? as usize;
        if n > MAX_COUNT {
            return Err(Error::wire(format!("count {n} exceeds limit {MAX_COUNT}")));
        }
        Ok(n)
    }

    fn biguint(&mut self) -> Result<BigUint> {
        let len = self.count()?;
        Ok(BigUint::from_bytes_be(self.take(len)?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.count()?;
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::wire("string field is not valid UTF-8"))
    }

    fn bytes(&mut self) -> Result<Vec<u8>> {
        let len = self.count()?;
        Ok(self.take(len)?.to_vec())
    }

    fn bitset(&mut self) -> Result<Bitset> {
        let len = self.u32()?;
        let bytes = self.take((len as usize).div_ceil(8))?.to_vec();
        Bitset::from_wire(len, bytes)
    }

    fn ciphertext(&mut self) -> Result<Ciphertext> {
        let (c, used) = Ciphertext::from_bytes(&self.buf[self.pos..], self.fingerprint)?;
        self.pos += used;
        Ok(c)
    }

    fn ciphertexts(&mut self) -> Result<Vec<Ciphertext>> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            out.push(self.ciphertext()?);
        }
        Ok(out)
    }

    fn nested_ciphertexts(&mut self) -> Result<Vec<Vec<Ciphertext>>> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            out.push(self.ciphertexts()?);
        }
        Ok(out)
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            out.push(self.string()?);
        }
        Ok(out)
    }

    fn biguints(&mut self) -> Result<Vec<BigUint>> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            out.push(self.biguint()?);
        }
        Ok(out)
    }

    fn digests(&mut self) -> Result<Vec<[u8; 32]>> {
        let n = self.count()?;
        let mut out = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            out.push(self.take(32)?.try_into().unwrap());
        }
        Ok(out)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::wire(format!(
                "{} trailing bytes after message payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

/// Encodes a message into a frame (tag, session id, payload — without the
/// stream-level length prefix).
pub fn encode(session: u64, msg: &Message) -> Vec<u8> {
    let mut w = Writer::new(msg.tag(), session);
    match msg {
        Message::Hello {
            protocol_version,
            party_id,
            config_checksum,
        } => {
            w.u16(*protocol_version);
            w.u32(*party_id);
            w.u64(*config_checksum);
        }
        Message::HelloAck {
            party_id,
            config_checksum,
        } => {
            w.u32(*party_id);
            w.u64(*config_checksum);
        }
        Message::AlignKey { bits, n, e } => {
            w.u32(*bits);
            w.biguint(n);
            w.biguint(e);
        }
        Message::AlignBlinded { items } => w.biguints(items),
        Message::AlignSigned {
            signed,
            signer_tags,
        } => {
            w.biguints(signed);
            w.u32(signer_tags.len() as u32);
            for t in signer_tags {
                w.buf.extend_from_slice(t);
            }
        }
        Message::AlignIntersection { ids } => w.strings(ids),
        Message::AlignConfirm { count } => w.u32(*count),
        Message::AlignedRows { ids } => w.strings(ids),
        Message::PaillierKey { key } => w.bytes(key),
        Message::TreeStart { tree, local_only } => {
            w.u32(*tree);
            w.bool(*local_only);
        }
        Message::EncGradients { tree, rows, g, h } => {
            w.u32(*tree);
            w.bitset(rows);
            w.ciphertexts(g);
            w.ciphertexts(h);
        }
        Message::HistRequest {
            tree,
            node,
            instances,
        } => {
            w.u32(*tree);
            w.u32(*node);
            w.bitset(instances);
        }
        Message::HistReply { tree, node, g, h } => {
            w.u32(*tree);
            w.u32(*node);
            w.nested_ciphertexts(g);
            w.nested_ciphertexts(h);
        }
        Message::SplitAnnounce {
            tree,
            node,
            feature,
            bucket,
        } => {
            w.u32(*tree);
            w.u32(*node);
            w.u32(*feature);
            w.u32(*bucket);
        }
        Message::SplitReply {
            tree,
            node,
            record_id,
            left,
        } => {
            w.u32(*tree);
            w.u32(*node);
            w.u64(*record_id);
            w.bitset(left);
        }
        Message::PartitionQuery { record_id, rows } => {
            w.u64(*record_id);
            w.bitset(rows);
        }
        Message::PartitionReply { record_id, left } => {
            w.u64(*record_id);
            w.bitset(left);
        }
        Message::TreeDone { tree } => w.u32(*tree),
        Message::TrainDone => {}
        Message::PredictBegin { ids } => w.strings(ids),
        Message::PredictAck { missing } => w.strings(missing),
        Message::InferQuery { query, record_id } => {
            w.u32(*query);
            w.u64(*record_id);
        }
        Message::InferReply { query, go_left } => {
            w.u32(*query);
            w.bool(*go_left);
        }
        Message::PredictDone => {}
        Message::Abort { code, reason } => {
            w.u8(*code);
            w.string(reason);
        }
    }
    w.buf
}

/// Decodes a frame. `fingerprint` is attached to any ciphertext fields;
/// pass the session key's fingerprint (or 0 outside the encrypted phases).
pub fn decode(frame: &[u8], fingerprint: u64) -> Result<(u64, Message)> {
    if frame.len() > MAX_FRAME_BYTES {
        return Err(Error::wire(format!("frame of {} bytes too large", frame.len())));
    }
    if frame.len() < 9 {
        return Err(Error::wire("frame shorter than tag and session id"));
    }
    let tag = frame[0];
    let session = u64::from_be_bytes(frame[1..9].try_into().unwrap());
    let mut r = Reader {
        buf: &frame[9..],
        pos: 0,
        fingerprint,
    };
    let msg = match tag {
        0x01 => Message::Hello {
            protocol_version: r.u16()?,
            party_id: r.u32()?,
            config_checksum: r.u64()?,
        },
        0x02 => Message::HelloAck {
            party_id: r.u32()?,
            config_checksum: r.u64()?,
        },
        0x03 => Message::AlignKey {
            bits: r.u32()?,
            n: r.biguint()?,
            e: r.biguint()?,
        },
        0x04 => Message::AlignBlinded {
            items: r.biguints()?,
        },
        0x05 => Message::AlignSigned {
            signed: r.biguints()?,
            signer_tags: r.digests()?,
        },
        0x06 => Message::AlignIntersection { ids: r.strings()? },
        0x07 => Message::AlignConfirm { count: r.u32()? },
        0x08 => Message::AlignedRows { ids: r.strings()? },
        0x09 => Message::PaillierKey { key: r.bytes()? },
        0x0a => Message::TreeStart {
            tree: r.u32()?,
            local_only: r.bool()?,
        },
        0x0b => Message::EncGradients {
            tree: r.u32()?,
            rows: r.bitset()?,
            g: r.ciphertexts()?,
            h: r.ciphertexts()?,
        },
        0x0c => Message::HistRequest {
            tree: r.u32()?,
            node: r.u32()?,
            instances: r.bitset()?,
        },
        0x0d => Message::HistReply {
            tree: r.u32()?,
            node: r.u32()?,
            g: r.nested_ciphertexts()?,
            h: r.nested_ciphertexts()?,
        },
        0x0e => Message::SplitAnnounce {
            tree: r.u32()?,
            node: r.u32()?,
            feature: r.u32()?,
            bucket: r.u32()?,
        },
        0x0f => Message::SplitReply {
            tree: r.u32()?,
            node: r.u32()?,
            record_id: r.u64()?,
            left: r.bitset()?,
        },
        0x10 => Message::PartitionQuery {
            record_id: r.u64()?,
            rows: r.bitset()?,
        },
        0x11 => Message::PartitionReply {
            record_id: r.u64()?,
            left: r.bitset()?,
        },
        0x12 => Message::TreeDone { tree: r.u32()? },
        0x13 => Message::TrainDone,
        0x14 => Message::PredictBegin { ids: r.strings()? },
        0x15 => Message::PredictAck {
            missing: r.strings()?,
        },
        0x16 => Message::InferQuery {
            query: r.u32()?,
            record_id: r.u64()?,
        },
        0x17 => Message::InferReply {
            query: r.u32()?,
            go_left: r.bool()?,
        },
        0x18 => Message::PredictDone,
        0x19 => Message::Abort {
            code: r.u8()?,
            reason: r.string()?,
        },
        other => return Err(Error::wire(format!("unknown message tag 0x{other:02x}"))),
    };
    r.finish()?;
    Ok((session, msg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paillier::{keygen, FixedPointCodec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn roundtrip(msg: Message, fingerprint: u64) {
        let frame = encode(0xdead_beef_0102_0304, &msg);
        let (session, back) = decode(&frame, fingerprint).unwrap();
        assert_eq!(session, 0xdead_beef_0102_0304);
        assert_eq!(back, msg, "kind {}", msg.kind());
    }

    #[test]
    fn plain_messages_roundtrip() {
        roundtrip(
            Message::Hello {
                protocol_version: PROTOCOL_VERSION,
                party_id: 1,
                config_checksum: 42,
            },
            0,
        );
        roundtrip(
            Message::HelloAck {
                party_id: 3,
                config_checksum: 42,
            },
            0,
        );
        roundtrip(
            Message::AlignKey {
                bits: 512,
                n: BigUint::from(12345u32),
                e: BigUint::from(65537u32),
            },
            0,
        );
        roundtrip(
            Message::AlignBlinded {
                items: vec![BigUint::from(7u32), BigUint::from(0u32)],
            },
            0,
        );
        roundtrip(
            Message::AlignSigned {
                signed: vec![BigUint::from(9u32)],
                signer_tags: vec![[7u8; 32], [1u8; 32]],
            },
            0,
        );
        roundtrip(
            Message::AlignIntersection {
                ids: vec!["u1".into(), "u2".into()],
            },
            0,
        );
        roundtrip(Message::AlignConfirm { count: 2 }, 0);
        roundtrip(Message::AlignedRows { ids: vec![] }, 0);
        roundtrip(
            Message::TreeStart {
                tree: 3,
                local_only: true,
            },
            0,
        );
        roundtrip(
            Message::HistRequest {
                tree: 1,
                node: 2,
                instances: Bitset::from_indices(10, &[0, 9]).unwrap(),
            },
            0,
        );
        roundtrip(
            Message::SplitAnnounce {
                tree: 0,
                node: 4,
                feature: 2,
                bucket: 31,
            },
            0,
        );
        roundtrip(
            Message::SplitReply {
                tree: 0,
                node: 4,
                record_id: 17,
                left: Bitset::from_indices(5, &[1, 2]).unwrap(),
            },
            0,
        );
        roundtrip(
            Message::PartitionQuery {
                record_id: 3,
                rows: Bitset::from_indices(12, &[11]).unwrap(),
            },
            0,
        );
        roundtrip(
            Message::PartitionReply {
                record_id: 3,
                left: Bitset::new(12).unwrap(),
            },
            0,
        );
        roundtrip(Message::TreeDone { tree: 9 }, 0);
        roundtrip(Message::TrainDone, 0);
        roundtrip(
            Message::PredictBegin {
                ids: vec!["a".into()],
            },
            0,
        );
        roundtrip(Message::PredictAck { missing: vec![] }, 0);
        roundtrip(
            Message::InferQuery {
                query: 5,
                record_id: 2,
            },
            0,
        );
        roundtrip(
            Message::InferReply {
                query: 5,
                go_left: false,
            },
            0,
        );
        roundtrip(Message::PredictDone, 0);
        roundtrip(
            Message::Abort {
                code: abort_code::PROTOCOL,
                reason: "unexpected message".into(),
            },
            0,
        );
    }

    #[test]
    fn ciphertext_messages_roundtrip() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let codec = FixedPointCodec::new(40, &pk).unwrap();
        let enc = |x: f64, rng: &mut ChaCha20Rng| {
            pk.encrypt(&codec.encode(x).unwrap(), rng).unwrap()
        };
        let g = vec![enc(0.5, &mut rng), enc(-0.25, &mut rng)];
        let h = vec![enc(0.25, &mut rng), enc(0.1, &mut rng)];
        roundtrip(
            Message::PaillierKey { key: pk.to_bytes() },
            pk.fingerprint(),
        );
        roundtrip(
            Message::EncGradients {
                tree: 0,
                rows: Bitset::from_indices(4, &[0, 2]).unwrap(),
                g: g.clone(),
                h: h.clone(),
            },
            pk.fingerprint(),
        );
        roundtrip(
            Message::HistReply {
                tree: 0,
                node: 1,
                g: vec![g.clone(), vec![pk.zero()]],
                h: vec![h, vec![pk.zero()]],
            },
            pk.fingerprint(),
        );
    }

    #[test]
    fn malformed_frames_rejected() {
        assert!(decode(&[], 0).is_err());
        assert!(decode(&[0x01], 0).is_err());
        // Unknown tag.
        let mut frame = vec![0x7f];
        frame.extend_from_slice(&0u64.to_be_bytes());
        assert!(decode(&frame, 0).is_err());
        // Truncated payload.
        let good = encode(1, &Message::TreeDone { tree: 2 });
        assert!(decode(&good[..good.len() - 1], 0).is_err());
        // Trailing garbage.
        let mut padded = good.clone();
        padded.push(0);
        assert!(decode(&padded, 0).is_err());
        // Invalid bool byte.
        let mut ts = encode(1, &Message::TreeStart { tree: 0, local_only: false });
        *ts.last_mut().unwrap() = 7;
        assert!(decode(&ts, 0).is_err());
    }

    #[test]
    fn ciphertext_counts() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (pk, _) = keygen(256, &mut rng).unwrap();
        let c = pk.zero();
        let m = Message::EncGradients {
            tree: 0,
            rows: Bitset::from_indices(3, &[0, 1, 2]).unwrap(),
            g: vec![c.clone(); 3],
            h: vec![c.clone(); 3],
        };
        assert_eq!(m.ciphertext_count(), 6);
        let m = Message::HistReply {
            tree: 0,
            node: 0,
            g: vec![vec![c.clone(); 4], vec![c.clone(); 2]],
            h: vec![vec![c.clone(); 4], vec![c; 2]],
        };
        assert_eq!(m.ciphertext_count(), 12);
        assert_eq!(Message::TrainDone.ciphertext_count(), 0);
    }
}

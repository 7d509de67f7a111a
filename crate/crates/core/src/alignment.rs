//! Privacy-preserving entity alignment: two parties discover which entity
//! IDs they share without revealing any ID outside the intersection.
//!
//! The construction is RSA-based blind signing. The signer holds an RSA
//! key (n, e, d). The initiator hashes each of its IDs into Z_n, blinds
//! the hash with a fresh random factor (`r^e * H(u) mod n`), and sends the
//! batch over. The signer raises each element to `d` — learning nothing,
//! since each is uniformly random under the blinding — and also publishes
//! the outer hash H'(H(v)^d) of every one of its own IDs, sorted. The
//! initiator unblinds (`z * r^-1`), applies the same outer hash, and
//! intersects tag sets; it then reports the shared IDs back so both sides
//! finish with the same canonical (lexicographically sorted) list.
//!
//! What crosses the wire is therefore: one public key, uniformly blinded
//! group elements, their signatures, an unlinkable sorted tag list, and
//! the intersection itself. [`transcript_audit`] checks recorded traffic
//! for exactly this shape and flags any appearance of a non-shared ID or
//! of its unblinded hash image.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::One;
use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha256};

use crate::bigmath;
use crate::error::{Error, Result};
use crate::federation::transport::{Transport, TranscriptEntry};
use crate::federation::wire::{self, Message};

pub const MIN_RSA_BITS: u32 = 512;
const RSA_PUBLIC_EXPONENT: u32 = 65_537;

/// Hash of an ID into Z_n: the SHA-256 digest of its bytes, interpreted
/// as a big-endian integer and reduced mod n.
pub fn hash_to_modulus(id: &str, n: &BigUint) -> BigUint {
    let digest = Sha256::digest(id.as_bytes());
    BigUint::from_bytes_be(&digest) % n
}

/// Outer hash applied to signed values before comparison, so the tags the
/// signer publishes cannot be reused as signatures.
pub fn outer_hash(value: &BigUint) -> [u8; 32] {
    Sha256::digest(value.to_bytes_be()).into()
}

/// RSA key pair with CRT signing acceleration.
pub struct RsaKeyPair {
    n: BigUint,
    e: BigUint,
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    q_inv_p: BigUint,
    bits: u32,
}

impl RsaKeyPair {
    pub fn generate<R: Rng + CryptoRng>(bits: u32, rng: &mut R) -> Result<Self> {
        if bits < MIN_RSA_BITS {
            return Err(Error::key(format!(
                "RSA key size {bits} is below the minimum of {MIN_RSA_BITS} bits"
            )));
        }
        if bits % 2 != 0 {
            return Err(Error::key(format!("RSA key size {bits} must be even")));
        }
        let e = BigUint::from(RSA_PUBLIC_EXPONENT);
        loop {
            let p = bigmath::gen_prime(u64::from(bits / 2), rng)?;
            let q = bigmath::gen_prime(u64::from(bits / 2), rng)?;
            if p == q {
                continue;
            }
            let phi = (&p - BigUint::one()) * (&q - BigUint::one());
            if !phi.gcd(&e).is_one() {
                continue;
            }
            let d = bigmath::modinv(&e, &phi).expect("gcd checked above");
            let dp = &d % (&p - BigUint::one());
            let dq = &d % (&q - BigUint::one());
            let q_inv_p = bigmath::modinv(&(&q % &p), &p)
                .ok_or_else(|| Error::key("RSA CRT setup: q not invertible mod p"))?;
            return Ok(RsaKeyPair {
                n: &p * &q,
                e,
                p,
                q,
                dp,
                dq,
                q_inv_p,
                bits,
            });
        }
    }

    pub fn n(&self) -> &BigUint {
        &self.n
    }

    pub fn e(&self) -> &BigUint {
        &self.e
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    /// m^d mod n via the CRT: two half-width exponentiations.
    pub fn sign(&self, m: &BigUint) -> Result<BigUint> {
        if m >= &self.n {
            return Err(Error::domain("value to sign is not reduced mod n"));
        }
        let sp = (m % &self.p).modpow(&self.dp, &self.p);
        let sq = (m % &self.q).modpow(&self.dq, &self.q);
        // s = sq + q * ((sp - sq) * q^-1 mod p)
        let diff = if sp >= sq {
            (&sp - &sq) % &self.p
        } else {
            &self.p - ((&sq - &sp) % &self.p)
        };
        let t = (diff * &self.q_inv_p) % &self.p;
        Ok((sq + &self.q * t) % &self.n)
    }
}

fn validate_ids(ids: &[String]) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::validation("ID list is empty"));
    }
    let mut seen = BTreeSet::new();
    for id in ids {
        if id.is_empty() {
            return Err(Error::validation("empty ID string"));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::validation(format!("duplicate ID {id:?}")));
        }
    }
    Ok(())
}

/// Whether the initiator blinds its hashes. `Disabled` exists solely as a
/// negative control for [`transcript_audit`]: with blinding off, the raw
/// hash images cross the wire and the audit must catch them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blinding {
    Fresh,
    Disabled,
}

/// What each side holds when alignment finishes: the shared IDs in
/// canonical (lexicographic) order, and for each one this party's own
/// original row index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentResult {
    pub shared_ids: Vec<String>,
    pub local_rows: Vec<usize>,
}

impl AlignmentResult {
    fn for_party(shared: &BTreeSet<String>, own_ids: &[String]) -> Self {
        let index: BTreeMap<&str, usize> = own_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let shared_ids: Vec<String> = shared.iter().cloned().collect();
        let local_rows = shared_ids
            .iter()
            .map(|id| *index.get(id.as_str()).expect("shared id is ours"))
            .collect();
        AlignmentResult {
            shared_ids,
            local_rows,
        }
    }
}

/// Initiator-side state machine, message-level (no transport).
pub struct Initiator {
    ids: Vec<String>,
    blinding: Blinding,
}

pub struct BlindedBatch {
    pub items: Vec<BigUint>,
    unblinders: Vec<BigUint>,
    n: BigUint,
}

impl Initiator {
    pub fn new(ids: Vec<String>, blinding: Blinding) -> Result<Self> {
        validate_ids(&ids)?;
        Ok(Initiator { ids, blinding })
    }

    /// Consumes the signer's public key, producing the blinded batch.
    /// Fresh blinding factors are drawn per element on every call, so two
    /// runs over the same IDs produce unrelated traffic.
    pub fn blind<R: Rng + CryptoRng>(
        &self,
        n: &BigUint,
        e: &BigUint,
        rng: &mut R,
    ) -> Result<BlindedBatch> {
        if n.bits() < u64::from(MIN_RSA_BITS) {
            return Err(Error::key(format!(
                "signer's modulus has only {} bits",
                n.bits()
            )));
        }
        let mut items = Vec::with_capacity(self.ids.len());
        let mut unblinders = Vec::with_capacity(self.ids.len());
        for id in &self.ids {
            let hashed = hash_to_modulus(id, n);
            let r = match self.blinding {
                Blinding::Fresh => bigmath::random_coprime_below(n, rng),
                Blinding::Disabled => BigUint::one(),
            };
            let blinded = (r.modpow(e, n) * &hashed) % n;
            let r_inv = bigmath::modinv(&r, n).ok_or_else(|| Error::key("blinding factor not invertible"))?;
            items.push(blinded);
            unblinders.push(r_inv);
        }
        Ok(BlindedBatch {
            items,
            unblinders,
            n: n.clone(),
        })
    }

    /// Unblinds the signatures, intersects tag sets, and returns the
    /// result for this side.
    pub fn intersect(
        &self,
        batch: &BlindedBatch,
        signed: &[BigUint],
        signer_tags: &[[u8; 32]],
    ) -> Result<AlignmentResult> {
        if signed.len() != self.ids.len() {
            return Err(Error::protocol(format!(
                "signer returned {} signatures for {} blinded items",
                signed.len(),
                self.ids.len()
            )));
        }
        let signer_set: BTreeSet<[u8; 32]> = signer_tags.iter().copied().collect();
        let mut shared = BTreeSet::new();
        for (i, z) in signed.iter().enumerate() {
            if z >= &batch.n {
                return Err(Error::protocol("signature not reduced mod n"));
            }
            let unblinded = (z * &batch.unblinders[i]) % &batch.n;
            if signer_set.contains(&outer_hash(&unblinded)) {
                shared.insert(self.ids[i].clone());
            }
        }
        Ok(AlignmentResult::for_party(&shared, &self.ids))
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Signer-side state machine, message-level.
pub struct Signer {
    ids: Vec<String>,
    key: RsaKeyPair,
}

impl Signer {
    pub fn new<R: Rng + CryptoRng>(ids: Vec<String>, key_bits: u32, rng: &mut R) -> Result<Self> {
        validate_ids(&ids)?;
        Ok(Signer {
            ids,
            key: RsaKeyPair::generate(key_bits, rng)?,
        })
    }

    pub fn key(&self) -> &RsaKeyPair {
        &self.key
    }

    /// Signs the blinded batch and returns it together with this side's
    /// own tags, sorted so their order is independent of the ID order.
    pub fn sign_batch(&self, items: &[BigUint]) -> Result<(Vec<BigUint>, Vec<[u8; 32]>)> {
        let signed: Result<Vec<BigUint>> = items
            .iter()
            .map(|m| {
                if m >= &self.key.n {
                    return Err(Error::protocol("blinded item not reduced mod n"));
                }
                self.key.sign(m)
            })
            .collect();
        let mut tags: Vec<[u8; 32]> = self
            .ids
            .iter()
            .map(|id| {
                let h = hash_to_modulus(id, &self.key.n);
                Ok(outer_hash(&self.key.sign(&h)?))
            })
            .collect::<Result<_>>()?;
        tags.sort_unstable();
        Ok((signed?, tags))
    }

    /// Accepts the intersection the initiator reports: every claimed ID
    /// must be one of ours.
    pub fn accept_intersection(&self, ids: &[String]) -> Result<AlignmentResult> {
        let own: BTreeSet<&str> = self.ids.iter().map(String::as_str).collect();
        let mut shared = BTreeSet::new();
        for id in ids {
            if !own.contains(id.as_str()) {
                return Err(Error::protocol(format!(
                    "intersection contains {id:?}, which is not ours"
                )));
            }
            if !shared.insert(id.clone()) {
                return Err(Error::protocol(format!("intersection repeats {id:?}")));
            }
        }
        Ok(AlignmentResult::for_party(&shared, &self.ids))
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Runs the initiator's side of one pairwise alignment over a transport.
/// The peer must run [`respond`]. Message framing and session IDs follow
/// the protocol wire format.
pub fn initiate<R: Rng + CryptoRng>(
    transport: &mut dyn Transport,
    session: u64,
    ids: Vec<String>,
    blinding: Blinding,
    rng: &mut R,
) -> Result<AlignmentResult> {
    let initiator = Initiator::new(ids, blinding)?;
    let (n, e) = match recv(transport, session)? {
        Message::AlignKey { bits, n, e } => {
            if n.bits() as u32 != bits {
                return Err(Error::protocol("alignment key header disagrees with modulus"));
            }
            (n, e)
        }
        other => return Err(unexpected("align-key", &other)),
    };
    let batch = initiator.blind(&n, &e, rng)?;
    send(
        transport,
        session,
        &Message::AlignBlinded {
            items: batch.items.clone(),
        },
    )?;
    let (signed, signer_tags) = match recv(transport, session)? {
        Message::AlignSigned {
            signed,
            signer_tags,
        } => (signed, signer_tags),
        other => return Err(unexpected("align-signed", &other)),
    };
    let result = initiator.intersect(&batch, &signed, &signer_tags)?;
    send(
        transport,
        session,
        &Message::AlignIntersection {
            ids: result.shared_ids.clone(),
        },
    )?;
    match recv(transport, session)? {
        Message::AlignConfirm { count } if count as usize == result.shared_ids.len() => Ok(result),
        Message::AlignConfirm { count } => Err(Error::protocol(format!(
            "peer confirmed {count} shared IDs, expected {}",
            result.shared_ids.len()
        ))),
        other => Err(unexpected("align-confirm", &other)),
    }
}

/// Runs the signer's side of one pairwise alignment over a transport.
pub fn respond<R: Rng + CryptoRng>(
    transport: &mut dyn Transport,
    session: u64,
    ids: Vec<String>,
    key_bits: u32,
    rng: &mut R,
) -> Result<AlignmentResult> {
    let signer = Signer::new(ids, key_bits, rng)?;
    send(
        transport,
        session,
        &Message::AlignKey {
            bits: signer.key.bits(),
            n: signer.key.n().clone(),
            e: signer.key.e().clone(),
        },
    )?;
    let items = match recv(transport, session)? {
        Message::AlignBlinded { items } => items,
        other => return Err(unexpected("align-blinded", &other)),
    };
    let (signed, signer_tags) = signer.sign_batch(&items)?;
    send(
        transport,
        session,
        &Message::AlignSigned {
            signed,
            signer_tags,
        },
    )?;
    let shared = match recv(transport, session)? {
        Message::AlignIntersection { ids } => ids,
        other => return Err(unexpected("align-intersection", &other)),
    };
    let result = signer.accept_intersection(&shared)?;
    send(
        transport,
        session,
        &Message::AlignConfirm {
            count: result.shared_ids.len() as u32,
        },
    )?;
    Ok(result)
}

fn send(transport: &mut dyn Transport, session: u64, msg: &Message) -> Result<()> {
    transport.send_frame(wire::encode(session, msg))
}

fn recv(transport: &mut dyn Transport, session: u64) -> Result<Message> {
    let frame = transport.recv_frame()?;
    let (got_session, msg) = wire::decode(&frame, 0)?;
    if got_session != session {
        return Err(Error::protocol(format!(
            "frame for session {got_session:#x} arrived in session {session:#x}"
        )));
    }
    if let Message::Abort { code, reason } = msg {
        return Err(Error::abort(format!("peer aborted (code {code}): {reason}")));
    }
    Ok(msg)
}

fn unexpected(wanted: &str, got: &Message) -> Error {
    Error::protocol(format!("expected {wanted}, got {}", got.kind()))
}

// --- Transcript audit -----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeakKind {
    /// A non-shared ID appeared verbatim as a string field.
    IdAsField,
    /// A field equals the unblinded hash image H(id) mod n of a
    /// non-shared ID (what blinding is supposed to hide).
    UnblindedHash,
    /// A non-shared ID's raw bytes appeared inside a payload.
    IdBytesInPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakFinding {
    pub message_index: usize,
    pub id: String,
    pub kind: LeakKind,
}

#[derive(Debug, Clone, Default)]
pub struct AuditReport {
    pub messages_checked: usize,
    pub findings: Vec<LeakFinding>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

/// Minimum ID length for the raw byte-substring scan. Shorter IDs would
/// produce chance hits inside uniformly random group elements; they are
/// still covered by the exact field checks.
const SUBSTRING_SCAN_MIN_LEN: usize = 5;

/// Audits a recorded alignment transcript against both parties' ID lists:
/// no ID outside the intersection may appear in any message, verbatim or
/// as its unblinded hash image. An honest run is clean; a run with
/// blinding disabled is flagged through the hash-image check.
pub fn transcript_audit(
    transcript: &[TranscriptEntry],
    ids_a: &[String],
    ids_b: &[String],
) -> Result<AuditReport> {
    let set_a: BTreeSet<&str> = ids_a.iter().map(String::as_str).collect();
    let set_b: BTreeSet<&str> = ids_b.iter().map(String::as_str).collect();
    let non_shared: Vec<&str> = set_a
        .symmetric_difference(&set_b)
        .copied()
        .collect();

    // The modulus comes from the transcript itself.
    let mut modulus: Option<BigUint> = None;
    for entry in transcript {
        if let Ok((_, Message::AlignKey { n, .. })) = wire::decode(&entry.frame, 0) {
            modulus = Some(n);
            break;
        }
    }
    let hash_images: Vec<(usize, BigUint)> = match &modulus {
        Some(n) => non_shared
            .iter()
            .enumerate()
            .map(|(i, id)| (i, hash_to_modulus(id, n)))
            .collect(),
        None => Vec::new(),
    };

    let mut report = AuditReport::default();
    for (msg_idx, entry) in transcript.iter().enumerate() {
        let (_, msg) = wire::decode(&entry.frame, 0)?;
        report.messages_checked += 1;

        let mut strings: Vec<&str> = Vec::new();
        let mut biguints: Vec<&BigUint> = Vec::new();
        match &msg {
            Message::AlignKey { n, e, .. } => biguints.extend([n, e]),
            Message::AlignBlinded { items } => biguints.extend(items.iter()),
            Message::AlignSigned { signed, .. } => biguints.extend(signed.iter()),
            Message::AlignIntersection { ids } | Message::AlignedRows { ids } => {
                strings.extend(ids.iter().map(String::as_str))
            }
            Message::Abort { reason, .. } => strings.push(reason),
            _ => {}
        }

        for (i, id) in non_shared.iter().enumerate() {
            if strings.contains(id) {
                report.findings.push(LeakFinding {
                    message_index: msg_idx,
                    id: (*id).to_string(),
                    kind: LeakKind::IdAsField,
                });
            }
            if let Some((_, image)) = hash_images.iter().find(|(j, _)| *j == i) {
                if biguints.iter().any(|v| *v == image) {
                    report.findings.push(LeakFinding {
                        message_index: msg_idx,
                        id: (*id).to_string(),
                        kind: LeakKind::UnblindedHash,
                    });
                }
            }
            if id.len() >= SUBSTRING_SCAN_MIN_LEN
                && entry
                    .frame
                    .windows(id.len())
                    .any(|w| w == id.as_bytes())
            {
                report.findings.push(LeakFinding {
                    message_index: msg_idx,
                    id: (*id).to_string(),
                    kind: LeakKind::IdBytesInPayload,
                });
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::transport::{
        channel_pair, new_transcript_log, RecordingTransport,
    };
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use std::time::Duration;

    fn rng(seed: u64) -> ChaCha20Rng {
        ChaCha20Rng::seed_from_u64(seed)
    }

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Runs a full pairwise alignment over in-process transports,
    /// returning both results and the initiator-side transcript.
    fn run_pair(
        a: Vec<String>,
        b: Vec<String>,
        blinding: Blinding,
        seed: u64,
    ) -> Result<(AlignmentResult, AlignmentResult, Vec<TranscriptEntry>)> {
        let (ta, tb) = channel_pair(Duration::from_secs(10));
        let log = new_transcript_log();
        let mut ta = RecordingTransport::new(ta, log.clone());
        let handle = std::thread::spawn(move || {
            let mut tb = tb;
            let mut r = rng(seed ^ 0xb);
            respond(&mut tb, 77, b, 512, &mut r)
        });
        let mut r = rng(seed ^ 0xa);
        let res_a = initiate(&mut ta, 77, a, blinding, &mut r);
        let res_b = handle.join().expect("responder panicked");
        let transcript = log.lock().unwrap().clone();
        Ok((res_a?, res_b?, transcript))
    }

    #[test]
    fn small_overlap() {
        let (ra, rb, _) = run_pair(
            ids(&["u1", "u2", "u3"]),
            ids(&["u2", "u3", "u4"]),
            Blinding::Fresh,
            1,
        )
        .unwrap();
        assert_eq!(ra.shared_ids, ids(&["u2", "u3"]));
        assert_eq!(ra.shared_ids, rb.shared_ids);
        // Initiator's rows: u2 at 1, u3 at 2. Responder's: u2 at 0, u3 at 1.
        assert_eq!(ra.local_rows, vec![1, 2]);
        assert_eq!(rb.local_rows, vec![0, 1]);
    }

    #[test]
    fn identical_sets() {
        let list = ids(&["alpha", "beta", "gamma"]);
        let (ra, rb, _) = run_pair(list.clone(), list.clone(), Blinding::Fresh, 2).unwrap();
        let mut want = list;
        want.sort();
        assert_eq!(ra.shared_ids, want);
        assert_eq!(rb.shared_ids, want);
    }

    #[test]
    fn empty_intersection_is_valid() {
        let (ra, rb, transcript) = run_pair(
            ids(&["only-a-1", "only-a-2"]),
            ids(&["only-b-1", "only-b-2"]),
            Blinding::Fresh,
            3,
        )
        .unwrap();
        assert!(ra.shared_ids.is_empty());
        assert!(rb.shared_ids.is_empty());
        let report = transcript_audit(
            &transcript,
            &ids(&["only-a-1", "only-a-2"]),
            &ids(&["only-b-1", "only-b-2"]),
        )
        .unwrap();
        assert!(report.is_clean(), "{:?}", report.findings);
    }

    #[test]
    fn against_set_oracle() {
        use rand::Rng as _;
        let mut r = rng(4);
        for trial in 0..5 {
            let a: Vec<String> = (0..r.gen_range(1..120))
                .map(|_| format!("ent{:05}", r.gen_range(0..200u32)))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let b: Vec<String> = (0..r.gen_range(1..120))
                .map(|_| format!("ent{:05}", r.gen_range(0..200u32)))
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let oracle: Vec<String> = a
                .iter()
                .filter(|id| b.contains(*id))
                .cloned()
                .collect();
            let (ra, rb, _) = run_pair(a.clone(), b.clone(), Blinding::Fresh, 100 + trial).unwrap();
            assert_eq!(ra.shared_ids, oracle, "trial {trial}");
            assert_eq!(rb.shared_ids, oracle, "trial {trial}");
        }
    }

    #[test]
    fn blinding_is_fresh_per_run() {
        let list = ids(&["repeat-1", "repeat-2"]);
        let peer = ids(&["repeat-1", "zzz-9"]);
        let (_, _, t1) = run_pair(list.clone(), peer.clone(), Blinding::Fresh, 5).unwrap();
        let (_, _, t2) = run_pair(list, peer, Blinding::Fresh, 6).unwrap();
        let blinded = |t: &[TranscriptEntry]| -> Vec<BigUint> {
            t.iter()
                .find_map(|e| match wire::decode(&e.frame, 0) {
                    Ok((_, Message::AlignBlinded { items })) => Some(items),
                    _ => None,
                })
                .unwrap()
        };
        assert_ne!(blinded(&t1), blinded(&t2));
    }

    #[test]
    fn honest_transcript_is_clean() {
        let a = ids(&["alice-01", "brian-02", "carol-03"]);
        let b = ids(&["brian-02", "diana-04"]);
        let (_, _, transcript) = run_pair(a.clone(), b.clone(), Blinding::Fresh, 7).unwrap();
        let report = transcript_audit(&transcript, &a, &b).unwrap();
        assert!(report.is_clean(), "{:?}", report.findings);
        assert!(report.messages_checked >= 5);
    }

    #[test]
    fn disabled_blinding_is_flagged() {
        let a = ids(&["alice-01", "brian-02", "carol-03"]);
        let b = ids(&["brian-02", "diana-04"]);
        let (_, _, transcript) = run_pair(a.clone(), b.clone(), Blinding::Disabled, 8).unwrap();
        let report = transcript_audit(&transcript, &a, &b).unwrap();
        assert!(!report.is_clean());
        assert!(report
            .findings
            .iter()
            .any(|f| f.kind == LeakKind::UnblindedHash));
    }

    #[test]
    fn duplicate_and_empty_ids_rejected() {
        assert!(Initiator::new(ids(&["x", "x"]), Blinding::Fresh).is_err());
        assert!(Initiator::new(vec![], Blinding::Fresh).is_err());
        assert!(Initiator::new(ids(&[""]), Blinding::Fresh).is_err());
        let mut r = rng(9);
        assert!(Signer::new(ids(&["a", "a"]), 512, &mut r).is_err());
    }

    #[test]
    fn signer_rejects_foreign_intersection_claims() {
        let mut r = rng(10);
        let signer = Signer::new(ids(&["s1", "s2"]), 512, &mut r).unwrap();
        assert!(signer.accept_intersection(&ids(&["s1", "intruder"])).is_err());
        assert!(signer.accept_intersection(&ids(&["s1", "s1"])).is_err());
    }

    #[test]
    fn undersized_rsa_key_rejected() {
        let mut r = rng(11);
        assert!(matches!(
            RsaKeyPair::generate(256, &mut r),
            Err(Error::Key(_))
        ));
    }

    #[test]
    fn signature_roundtrip() {
        let mut r = rng(12);
        let key = RsaKeyPair::generate(512, &mut r).unwrap();
        use num_bigint::RandBigInt;
        for _ in 0..8 {
            let m = r.gen_biguint_below(key.n());
            let s = key.sign(&m).unwrap();
            // Verify: s^e == m (mod n).
            assert_eq!(s.modpow(key.e(), key.n()), m);
        }
    }
}

//! The four-phase detection pipeline as pure functions.
//!
//! A sender broadcasts `{M, H_AK(M), CA_h, OBU_ID}` where `OBU_ID` seals
//! `ID || H_SK(ID || H_AK(M))` to the local CA. The RSU recomputes the outer
//! digest with the region group key; the local CA opens the envelope, fetches
//! the claimed vehicle's key from the home CA and recomputes the inner digest.
//! A mismatch on the inner digest means the sender does not hold the claimed
//! identity's key: a Sybil identity.

use thiserror::Error;

use crate::crypto::{
    self, keyed_digest, Ciphertext, CryptoError, Digest, PublicKey, SecretKey, SymmetricKey, DIGEST_LEN,
};
use crate::pki::{CaId, PkiError, VehicleId};

/// Largest payload the wire format can frame (2-byte length).
pub const MAX_PAYLOAD: usize = u16::MAX as usize;
/// `ID || inner digest`.
pub const OBU_PLAIN_LEN: usize = VehicleId::LEN + DIGEST_LEN;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("payload of {len} bytes exceeds the {max}-byte limit")]
    MessageTooLarge { len: usize, max: usize },
    #[error("envelope could not be decrypted")]
    DecryptionFailed,
    #[error("decrypted envelope is {len} bytes, expected {OBU_PLAIN_LEN}")]
    MalformedPlaintext { len: usize },
    #[error("malformed message: {0}")]
    MalformedMessage(&'static str),
}

impl From<CryptoError> for ProtocolError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::MessageTooLarge { len, max } => ProtocolError::MessageTooLarge { len, max },
            _ => ProtocolError::DecryptionFailed,
        }
    }
}

impl ProtocolError {
    pub fn code(&self) -> &'static str {
        match self {
            ProtocolError::MessageTooLarge { .. } => "message_too_large",
            ProtocolError::DecryptionFailed => "decryption_failed",
            ProtocolError::MalformedPlaintext { .. } => "malformed_plaintext",
            ProtocolError::MalformedMessage(_) => "malformed_message",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SafetyMessage {
    pub payload: Vec<u8>,
    pub outer_digest: Digest,
    pub home_ca: CaId,
    pub obu_id: Ciphertext,
}

/// Decrypted contents of the identity envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObuIdPlain {
    pub vehicle: VehicleId,
    pub inner_digest: Digest,
}

impl ObuIdPlain {
    pub fn to_bytes(&self) -> [u8; OBU_PLAIN_LEN] {
        let mut out = [0u8; OBU_PLAIN_LEN];
        out[..VehicleId::LEN].copy_from_slice(self.vehicle.as_bytes());
        out[VehicleId::LEN..].copy_from_slice(self.inner_digest.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ProtocolError> {
        if bytes.len() != OBU_PLAIN_LEN {
            return Err(ProtocolError::MalformedPlaintext { len: bytes.len() });
        }
        let (id, digest) = bytes.split_at(VehicleId::LEN);
        Ok(Self {
            vehicle: VehicleId::from_bytes(id.try_into().expect("16 bytes")),
            inner_digest: Digest::from_bytes(digest.try_into().expect("32 bytes")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RsuVerdict {
    IntegrityOk,
    Fault,
}

impl RsuVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            RsuVerdict::IntegrityOk => "integrity_ok",
            RsuVerdict::Fault => "fault",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Legitimate,
    SybilDetected,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Legitimate => "legitimate",
            Verdict::SybilDetected => "sybil_detected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionResult {
    pub verdict: Verdict,
    pub vehicle: VehicleId,
    /// (carried inner digest, recomputed inner digest)
    pub evidence: (Digest, Digest),
}

/// `ID || outer digest`, the input of the inner keyed digest.
pub fn identity_binding(vehicle: VehicleId, outer_digest: &Digest) -> [u8; OBU_PLAIN_LEN] {
    ObuIdPlain {
        vehicle,
        inner_digest: *outer_digest,
    }
    .to_bytes()
}

fn inner_digest(key: &SymmetricKey, vehicle: VehicleId, outer_digest: &Digest) -> Digest {
    keyed_digest(key, &identity_binding(vehicle, outer_digest)).expect("48-byte input is under the digest cap")
}

pub fn build_obu_id(
    vehicle: VehicleId,
    vehicle_key: &SymmetricKey,
    outer_digest: &Digest,
    local_ca_public: &PublicKey,
    nonce_seed: &[u8; 32],
) -> Ciphertext {
    let plain = ObuIdPlain {
        vehicle,
        inner_digest: inner_digest(vehicle_key, vehicle, outer_digest),
    };
    crypto::encrypt(local_ca_public, &plain.to_bytes(), nonce_seed).expect("48-byte envelope is under the seal cap")
}

/// Phase 1: an honest sender signs the payload with the group key and binds
/// its own identity with its own key.
pub fn build_safety_message(
    payload: &[u8],
    group_key: &SymmetricKey,
    vehicle: VehicleId,
    vehicle_key: &SymmetricKey,
    home_ca: CaId,
    local_ca_public: &PublicKey,
    nonce_seed: &[u8; 32],
) -> Result<SafetyMessage, ProtocolError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::MessageTooLarge {
            len: payload.len(),
            max: MAX_PAYLOAD,
        });
    }
    let outer_digest = keyed_digest(group_key, payload)?;
    let obu_id = build_obu_id(vehicle, vehicle_key, &outer_digest, local_ca_public, nonce_seed);
    Ok(SafetyMessage {
        payload: payload.to_vec(),
        outer_digest,
        home_ca,
        obu_id,
    })
}

/// An insider holding the region group key claims `claimed_vehicle` but can
/// only key the inner digest with a key it owns.
///
/// `attacker_key` must differ from the claimed vehicle's registered key.
pub fn forge_sybil_message(
    payload: &[u8],
    group_key: &SymmetricKey,
    claimed_vehicle: VehicleId,
    attacker_key: &SymmetricKey,
    home_ca: CaId,
    local_ca_public: &PublicKey,
    nonce_seed: &[u8; 32],
) -> Result<SafetyMessage, ProtocolError> {
    build_safety_message(
        payload,
        group_key,
        claimed_vehicle,
        attacker_key,
        home_ca,
        local_ca_public,
        nonce_seed,
    )
}

/// Phase 2 at the RSU.
pub fn rsu_check(msg: &SafetyMessage, group_key: &SymmetricKey) -> RsuVerdict {
    match keyed_digest(group_key, &msg.payload) {
        Ok(d) if d == msg.outer_digest => RsuVerdict::IntegrityOk,
        _ => RsuVerdict::Fault,
    }
}

/// Phase 3 at the local CA.
pub fn open_obu_id(ct: &Ciphertext, local_ca_secret: &SecretKey) -> Result<ObuIdPlain, ProtocolError> {
    let plain = crypto::decrypt(local_ca_secret, ct).map_err(|_| ProtocolError::DecryptionFailed)?;
    ObuIdPlain::from_bytes(&plain)
}

/// Phase 4: recompute the inner digest with the escrowed key. Any mismatch
/// is a Sybil detection.
pub fn detect_sybil(plain: &ObuIdPlain, outer_digest: &Digest, escrowed_key: &SymmetricKey) -> DetectionResult {
    let recomputed = inner_digest(escrowed_key, plain.vehicle, outer_digest);
    let verdict = if recomputed == plain.inner_digest {
        Verdict::Legitimate
    } else {
        Verdict::SybilDetected
    };
    DetectionResult {
        verdict,
        vehicle: plain.vehicle,
        evidence: (plain.inner_digest, recomputed),
    }
}

/// Wire layout, all integers big-endian:
///
/// ```text
/// u16 payload_len | payload | outer_digest[32] | home_ca[8] | u16 ct_len | ct
/// ```
///
/// where `ct` is the recipient hint followed by the sealed body.
pub fn encode_message(msg: &SafetyMessage) -> Vec<u8> {
    let ct = msg.obu_id.to_bytes();
    let payload_len = u16::try_from(msg.payload.len()).expect("payload bounded by MAX_PAYLOAD");
    let ct_len = u16::try_from(ct.len()).expect("ciphertext bounded by seal cap");
    let mut out = Vec::with_capacity(4 + msg.payload.len() + DIGEST_LEN + CaId::LEN + ct.len());
    out.extend_from_slice(&payload_len.to_be_bytes());
    out.extend_from_slice(&msg.payload);
    out.extend_from_slice(msg.outer_digest.as_bytes());
    out.extend_from_slice(msg.home_ca.as_bytes());
    out.extend_from_slice(&ct_len.to_be_bytes());
    out.extend_from_slice(&ct);
    out
}

pub fn encoded_len(msg: &SafetyMessage) -> usize {
    4 + msg.payload.len() + DIGEST_LEN + CaId::LEN + msg.obu_id.encoded_len()
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ProtocolError> {
        if self.buf.len() < n {
            return Err(ProtocolError::MalformedMessage(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u16(&mut self, what: &'static str) -> Result<usize, ProtocolError> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]) as usize)
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<SafetyMessage, ProtocolError> {
    let mut r = Reader { buf: bytes };
    let payload_len = r.u16("truncated payload length")?;
    let payload = r.take(payload_len, "truncated payload")?.to_vec();
    let outer_digest = Digest::from_bytes(r.take(DIGEST_LEN, "truncated digest")?.try_into().expect("32 bytes"));
    let home_ca = CaId::from_bytes(r.take(CaId::LEN, "truncated home CA")?.try_into().expect("8 bytes"));
    let ct_len = r.u16("truncated ciphertext length")?;
    let ct = r.take(ct_len, "truncated ciphertext")?;
    if !r.buf.is_empty() {
        return Err(ProtocolError::MalformedMessage("trailing bytes"));
    }
    let obu_id =
        Ciphertext::from_bytes(ct).map_err(|_| ProtocolError::MalformedMessage("ciphertext shorter than hint"))?;
    Ok(SafetyMessage {
        payload,
        outer_digest,
        home_ca,
        obu_id,
    })
}

/// Where a message stopped in the reference pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum PipelineOutcome {
    Fault,
    OpenFailed(ProtocolError),
    EscrowFailed(PkiError),
    Verdict(DetectionResult),
}

/// Runs phases 2 to 4 back to back. A faulted message never reaches the
/// local CA and `escrow` is only called after the envelope opens.
pub fn run_pipeline<F>(
    msg: &SafetyMessage,
    group_key: &SymmetricKey,
    local_ca_secret: &SecretKey,
    escrow: F,
) -> PipelineOutcome
where
    F: FnOnce(VehicleId) -> Result<SymmetricKey, PkiError>,
{
    if rsu_check(msg, group_key) == RsuVerdict::Fault {
        return PipelineOutcome::Fault;
    }
    let plain = match open_obu_id(&msg.obu_id, local_ca_secret) {
        Ok(p) => p,
        Err(e) => return PipelineOutcome::OpenFailed(e),
    };
    match escrow(plain.vehicle) {
        Ok(key) => PipelineOutcome::Verdict(detect_sybil(&plain, &msg.outer_digest, &key)),
        Err(e) => PipelineOutcome::EscrowFailed(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{generate_keypair, KeyPair};
    use proptest::prelude::*;

    struct Fixture {
        ak: SymmetricKey,
        ca: KeyPair,
        victim: VehicleId,
        victim_key: SymmetricKey,
        home: CaId,
    }

    fn fixture() -> Fixture {
        Fixture {
            ak: SymmetricKey::from_seed(&[1; 32]),
            ca: generate_keypair(&[2; 32]),
            victim: VehicleId::from_index(7),
            victim_key: SymmetricKey::from_seed(&[3; 32]),
            home: CaId::from_u64(0),
        }
    }

    fn honest(f: &Fixture, payload: &[u8]) -> SafetyMessage {
        build_safety_message(payload, &f.ak, f.victim, &f.victim_key, f.home, &f.ca.public, &[4; 32]).unwrap()
    }

    #[test]
    fn honest_message_passes_every_phase() {
        let f = fixture();
        let msg = honest(&f, b"accident at km 12");
        assert_eq!(rsu_check(&msg, &f.ak), RsuVerdict::IntegrityOk);
        let plain = open_obu_id(&msg.obu_id, &f.ca.secret).unwrap();
        assert_eq!(plain.vehicle, f.victim);
        let result = detect_sybil(&plain, &msg.outer_digest, &f.victim_key);
        assert_eq!(result.verdict, Verdict::Legitimate);
        assert_eq!(result.evidence.0, result.evidence.1);
    }

    #[test]
    fn empty_payload() {
        let f = fixture();
        let msg = honest(&f, b"");
        let outcome = run_pipeline(&msg, &f.ak, &f.ca.secret, |_| Ok(f.victim_key.clone()));
        assert!(matches!(outcome, PipelineOutcome::Verdict(r) if r.verdict == Verdict::Legitimate));
    }

    #[test]
    fn oversize_payload() {
        let f = fixture();
        let big = vec![0u8; MAX_PAYLOAD + 1];
        assert!(matches!(
            build_safety_message(&big, &f.ak, f.victim, &f.victim_key, f.home, &f.ca.public, &[0; 32]),
            Err(ProtocolError::MessageTooLarge { .. })
        ));
    }

    #[test]
    fn obu_id_is_deterministic() {
        let f = fixture();
        let d = keyed_digest(&f.ak, b"m").unwrap();
        let a = build_obu_id(f.victim, &f.victim_key, &d, &f.ca.public, &[9; 32]);
        let b = build_obu_id(f.victim, &f.victim_key, &d, &f.ca.public, &[9; 32]);
        assert_eq!(a, b);
    }

    #[test]
    fn tampered_payload_and_wrong_region_fault() {
        let f = fixture();
        let mut msg = honest(&f, b"payload");
        assert_eq!(rsu_check(&msg, &SymmetricKey::from_seed(&[99; 32])), RsuVerdict::Fault);
        msg.payload[0] ^= 1;
        assert_eq!(rsu_check(&msg, &f.ak), RsuVerdict::Fault);
        let outcome = run_pipeline(&msg, &f.ak, &f.ca.secret, |_| panic!("fault must stop before escrow"));
        assert_eq!(outcome, PipelineOutcome::Fault);
    }

    #[test]
    fn forged_message_passes_rsu_and_is_detected() {
        let f = fixture();
        let attacker_key = SymmetricKey::from_seed(&[5; 32]);
        let msg = forge_sybil_message(
            b"fake jam",
            &f.ak,
            f.victim,
            &attacker_key,
            f.home,
            &f.ca.public,
            &[6; 32],
        )
        .unwrap();
        assert_eq!(rsu_check(&msg, &f.ak), RsuVerdict::IntegrityOk);
        let plain = open_obu_id(&msg.obu_id, &f.ca.secret).unwrap();
        let result = detect_sybil(&plain, &msg.outer_digest, &f.victim_key);
        assert_eq!(result.verdict, Verdict::SybilDetected);
        assert_eq!(result.vehicle, f.victim);
        assert_ne!(result.evidence.0, result.evidence.1);
    }

    #[test]
    fn zeroed_evidence_is_detected() {
        let f = fixture();
        let msg = honest(&f, b"m");
        let mut plain = open_obu_id(&msg.obu_id, &f.ca.secret).unwrap();
        plain.inner_digest = Digest::from_bytes([0; 32]);
        assert_eq!(
            detect_sybil(&plain, &msg.outer_digest, &f.victim_key).verdict,
            Verdict::SybilDetected
        );
    }

    #[test]
    fn open_errors() {
        let f = fixture();
        let msg = honest(&f, b"m");
        let other = generate_keypair(&[8; 32]);
        assert_eq!(
            open_obu_id(&msg.obu_id, &other.secret),
            Err(ProtocolError::DecryptionFailed)
        );
        let short = crypto::encrypt(&f.ca.public, &[0; 10], &[1; 32]).unwrap();
        assert_eq!(
            open_obu_id(&short, &f.ca.secret),
            Err(ProtocolError::MalformedPlaintext { len: 10 })
        );
    }

    #[test]
    fn escrow_failure_surfaces() {
        let f = fixture();
        let msg = honest(&f, b"m");
        let outcome = run_pipeline(&msg, &f.ak, &f.ca.secret, |v| Err(PkiError::NotRegistered(v)));
        assert_eq!(
            outcome,
            PipelineOutcome::EscrowFailed(PkiError::NotRegistered(f.victim))
        );
    }

    #[test]
    fn decode_rejects_bad_framing() {
        let f = fixture();
        let wire = encode_message(&honest(&f, b"hello"));
        assert_eq!(wire.len(), encoded_len(&honest(&f, b"hello")));
        assert!(matches!(decode_message(&[]), Err(ProtocolError::MalformedMessage(_))));

        let mut inflated = wire.clone();
        let len = u16::from_be_bytes([inflated[0], inflated[1]]) + 1;
        inflated[..2].copy_from_slice(&len.to_be_bytes());
        assert!(matches!(
            decode_message(&inflated),
            Err(ProtocolError::MalformedMessage(_))
        ));

        let mut trailing = wire.clone();
        trailing.push(0);
        assert_eq!(
            decode_message(&trailing),
            Err(ProtocolError::MalformedMessage("trailing bytes"))
        );
        for cut in 0..wire.len() {
            assert!(decode_message(&wire[..cut]).is_err(), "cut at {cut}");
        }
    }

    fn arb_message() -> impl Strategy<Value = SafetyMessage> {
        (
            proptest::collection::vec(any::<u8>(), 0..600),
            any::<[u8; 32]>(),
            any::<[u8; 8]>(),
            proptest::collection::vec(any::<u8>(), 32..300),
        )
            .prop_map(|(payload, digest, ca, ct)| SafetyMessage {
                payload,
                outer_digest: Digest::from_bytes(digest),
                home_ca: CaId::from_bytes(ca),
                obu_id: Ciphertext::from_bytes(&ct).unwrap(),
            })
    }

    proptest! {
        #[test]
        fn codec_roundtrip(msg in arb_message()) {
            let wire = encode_message(&msg);
            prop_assert_eq!(decode_message(&wire).unwrap(), msg);
        }

        #[test]
        fn codec_is_injective_on_decodable_bytes(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            if let Ok(msg) = decode_message(&bytes) {
                prop_assert_eq!(encode_message(&msg), bytes);
            }
        }
    }
}

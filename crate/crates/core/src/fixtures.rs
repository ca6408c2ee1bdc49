//! Deterministic fixture sets for keyed digests and the message wire format.
//!
//! Inputs come from a SHA-256 counter stream so that an external generator
//! (see `tests/fixtures/gen_golden.py`) can rebuild them without this crate.

use sha2::{Digest as _, Sha256};

use crate::crypto::{keyed_digest, Ciphertext, Digest, SymmetricKey};
use crate::pki::CaId;
use crate::protocol::{encode_message, SafetyMessage};

pub const KEYED_DIGEST_FILE: &str = "keyed_digest_vectors.txt";
pub const WIRE_FILE: &str = "wire_messages.txt";

const DIGEST_MESSAGE_LENGTHS: [usize; 12] = [1, 31, 32, 55, 63, 64, 65, 127, 128, 1000, 4096, 65536];
/// (payload length, ciphertext length)
const WIRE_SHAPES: [(usize, usize); 5] = [(0, 32), (1, 125), (32, 125), (300, 200), (4096, 33)];

/// First `n` bytes of `SHA256(label || u32be(0)) || SHA256(label || u32be(1)) || ...`.
pub fn derive_bytes(label: &str, n: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(n + 32);
    let mut counter = 0u32;
    while out.len() < n {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        h.update(counter.to_be_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(n);
    out
}

fn key_from(bytes: &[u8]) -> SymmetricKey {
    SymmetricKey::from_bytes(bytes.try_into().expect("32-byte key"))
}

pub fn keyed_digest_vectors() -> Vec<(SymmetricKey, Vec<u8>, Digest)> {
    let mut inputs = vec![
        (SymmetricKey::from_bytes([0; 32]), Vec::new()),
        (SymmetricKey::from_bytes([0x0b; 32]), b"Hi There".to_vec()),
    ];
    for (i, n) in DIGEST_MESSAGE_LENGTHS.iter().enumerate() {
        inputs.push((
            key_from(&derive_bytes(&format!("keyed-digest/key/{i}"), 32)),
            derive_bytes(&format!("keyed-digest/message/{i}"), *n),
        ));
    }
    inputs
        .into_iter()
        .map(|(k, m)| {
            let d = keyed_digest(&k, &m).expect("fixture inputs are under the cap");
            (k, m, d)
        })
        .collect()
}

/// `hex(key),hex(message),hex(digest)` per line.
pub fn keyed_digest_vectors_text() -> String {
    keyed_digest_vectors()
        .iter()
        .map(|(k, m, d)| format!("{},{},{}\n", hex::encode(k.as_bytes()), hex::encode(m), d))
        .collect()
}

/// Messages with opaque ciphertext bytes; only the framing is under test.
pub fn wire_fixtures() -> Vec<SafetyMessage> {
    WIRE_SHAPES
        .iter()
        .enumerate()
        .map(|(i, &(plen, clen))| SafetyMessage {
            payload: derive_bytes(&format!("wire/payload/{i}"), plen),
            outer_digest: Digest::from_bytes(
                derive_bytes(&format!("wire/digest/{i}"), 32)
                    .try_into()
                    .expect("32 bytes"),
            ),
            home_ca: CaId::from_bytes(
                derive_bytes(&format!("wire/home-ca/{i}"), 8)
                    .try_into()
                    .expect("8 bytes"),
            ),
            obu_id: Ciphertext::from_bytes(&derive_bytes(&format!("wire/ciphertext/{i}"), clen))
                .expect("fixture ciphertexts carry a full hint"),
        })
        .collect()
}

/// `hex(payload),hex(outer_digest),hex(home_ca),hex(ciphertext),hex(wire)` per line.
pub fn wire_fixtures_text() -> String {
    wire_fixtures()
        .iter()
        .map(|m| {
            format!(
                "{},{},{},{},{}\n",
                hex::encode(&m.payload),
                m.outer_digest,
                m.home_ca,
                hex::encode(m.obu_id.to_bytes()),
                hex::encode(encode_message(m))
            )
        })
        .collect()
}

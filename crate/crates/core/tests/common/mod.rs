#![allow(dead_code)]

use std::path::PathBuf;

use sha2::{Digest as _, Sha256};
use vanet_sybil::crypto::{keyed_digest, Digest, SymmetricKey};
use vanet_sybil::protocol::{decode_message, encode_message, SafetyMessage};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

fn unhex(s: &str) -> Vec<u8> {
    hex::decode(s).unwrap_or_else(|e| panic!("bad hex {s:.16}: {e}"))
}

/// HMAC-SHA256 written out by hand, independent of the `hmac` crate.
pub fn reference_hmac(key: &[u8; 32], msg: &[u8]) -> [u8; 32] {
    let mut block = [0u8; 64];
    block[..32].copy_from_slice(key);
    let ipad: Vec<u8> = block.iter().map(|b| b ^ 0x36).collect();
    let opad: Vec<u8> = block.iter().map(|b| b ^ 0x5c).collect();
    let inner = Sha256::new().chain_update(&ipad).chain_update(msg).finalize();
    Sha256::new().chain_update(&opad).chain_update(inner).finalize().into()
}

pub struct DigestVector {
    pub key: [u8; 32],
    pub message: Vec<u8>,
    pub digest: [u8; 32],
}

pub fn digest_vectors() -> Vec<DigestVector> {
    read_fixture(vanet_sybil::fixtures::KEYED_DIGEST_FILE)
        .lines()
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 3, "malformed vector line");
            DigestVector {
                key: unhex(f[0]).try_into().unwrap(),
                message: unhex(f[1]),
                digest: unhex(f[2]).try_into().unwrap(),
            }
        })
        .collect()
}

pub struct WireVector {
    pub payload: Vec<u8>,
    pub digest: [u8; 32],
    pub home_ca: [u8; 8],
    pub ciphertext: Vec<u8>,
    pub wire: Vec<u8>,
}

pub fn wire_vectors() -> Vec<WireVector> {
    read_fixture(vanet_sybil::fixtures::WIRE_FILE)
        .lines()
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f.len(), 5, "malformed wire line");
            WireVector {
                payload: unhex(f[0]),
                digest: unhex(f[1]).try_into().unwrap(),
                home_ca: unhex(f[2]).try_into().unwrap(),
                ciphertext: unhex(f[3]),
                wire: unhex(f[4]),
            }
        })
        .collect()
}

/// Number of digest vectors checked, or the first mismatch.
pub fn check_digest_vectors() -> Result<usize, String> {
    let vectors = digest_vectors();
    for (i, v) in vectors.iter().enumerate() {
        let got = keyed_digest(&SymmetricKey::from_bytes(v.key), &v.message).map_err(|e| format!("vector {i}: {e}"))?;
        if got != Digest::from_bytes(v.digest) {
            return Err(format!("vector {i}: keyed_digest gave {got}"));
        }
        if reference_hmac(&v.key, &v.message) != v.digest {
            return Err(format!("vector {i}: reference HMAC disagrees with the fixture"));
        }
    }
    Ok(vectors.len())
}

/// Number of wire fixtures checked, or the first mismatch.
pub fn check_wire_vectors() -> Result<usize, String> {
    let vectors = wire_vectors();
    for (i, v) in vectors.iter().enumerate() {
        let msg: SafetyMessage = decode_message(&v.wire).map_err(|e| format!("fixture {i}: {e}"))?;
        if msg.payload != v.payload
            || *msg.outer_digest.as_bytes() != v.digest
            || *msg.home_ca.as_bytes() != v.home_ca
            || msg.obu_id.to_bytes() != v.ciphertext
        {
            return Err(format!("fixture {i}: decoded fields differ"));
        }
        if encode_message(&msg) != v.wire {
            return Err(format!("fixture {i}: re-encoding differs"));
        }
    }
    Ok(vectors.len())
}

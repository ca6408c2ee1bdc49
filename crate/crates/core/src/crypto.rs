//! Keyed digests and sealed envelopes.
//!
//! Keyed digests are HMAC-SHA256. Envelopes are a hybrid scheme over P-224:
//! an ephemeral ECDH exchange with the recipient key, HKDF-SHA256 to derive a
//! ChaCha20-Poly1305 key and nonce, and the recipient's key fingerprint bound
//! in as associated data. Every source of randomness is a caller-supplied
//! 32-byte seed, so identical inputs always give identical outputs.

use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::ChaCha20Poly1305;
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use p224::elliptic_curve::sec1::ToEncodedPoint;
use p224::{FieldBytes, NonZeroScalar};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

pub const KEY_LEN: usize = 32;
pub const DIGEST_LEN: usize = 32;
/// SEC1 compressed P-224 point.
pub const PUBLIC_KEY_LEN: usize = 29;
pub const FINGERPRINT_LEN: usize = 32;
/// Largest message accepted by [`keyed_digest`].
pub const MAX_DIGEST_INPUT: usize = 1 << 16;
/// Largest plaintext accepted by [`encrypt`].
pub const MAX_SEAL_INPUT: usize = 1 << 12;

const TAG_LEN: usize = 16;
const SEAL_INFO: &[u8] = b"vanet-sybil/seal/v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("message of {len} bytes exceeds the {max}-byte limit")]
    MessageTooLarge { len: usize, max: usize },
    #[error("decryption failed")]
    DecryptionFailed,
    #[error("invalid public key encoding")]
    InvalidPublicKey,
    #[error("ciphertext shorter than the {FINGERPRINT_LEN}-byte recipient hint")]
    MalformedCiphertext,
}

/// 32-byte secret used for keyed digests (region group keys and per-vehicle keys).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymmetricKey([u8; KEY_LEN]);

impl SymmetricKey {
    pub const fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        Self(bytes)
    }

    /// Derives a key from a seed. Distinct seeds give distinct keys.
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        let mut h = Sha256::new();
        h.update(b"vanet-sybil/symmetric-key");
        h.update(seed);
        Self(h.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // fingerprint only; never print key material
        let fp = Sha256::digest(self.0);
        write!(f, "SymmetricKey(#{})", hex::encode(&fp[..4]))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Digest([u8; DIGEST_LEN]);

impl Digest {
    pub const fn from_bytes(bytes: [u8; DIGEST_LEN]) -> Self {
        Self(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; DIGEST_LEN] {
        &self.0
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", hex::encode(self.0))
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

/// HMAC-SHA256 of `message` under `key`.
pub fn keyed_digest(key: &SymmetricKey, message: &[u8]) -> Result<Digest, CryptoError> {
    if message.len() > MAX_DIGEST_INPUT {
        return Err(CryptoError::MessageTooLarge {
            len: message.len(),
            max: MAX_DIGEST_INPUT,
        });
    }
    let mut mac = <Hmac<Sha256> as Mac>::new_from_slice(&key.0).expect("hmac accepts any key length");
    mac.update(message);
    Ok(Digest(mac.finalize().into_bytes().into()))
}

/// A validated, compressed P-224 public key.
#[derive(Clone, PartialEq, Eq)]
pub struct PublicKey {
    bytes: [u8; PUBLIC_KEY_LEN],
    point: p224::PublicKey,
}

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let point = p224::PublicKey::from_sec1_bytes(bytes).map_err(|_| CryptoError::InvalidPublicKey)?;
        Ok(Self::from_point(point))
    }

    fn from_point(point: p224::PublicKey) -> Self {
        let encoded = point.to_encoded_point(true);
        let mut bytes = [0u8; PUBLIC_KEY_LEN];
        bytes.copy_from_slice(encoded.as_bytes());
        Self { bytes, point }
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.bytes
    }

    /// SHA-256 of the compressed encoding; used as the envelope's recipient hint.
    pub fn fingerprint(&self) -> [u8; FINGERPRINT_LEN] {
        Sha256::digest(self.bytes).into()
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(self.bytes))
    }
}

/// Secret half of a [`KeyPair`]. Carries the public encoding it belongs to so
/// that opening an envelope costs a single scalar multiplication.
#[derive(Clone)]
pub struct SecretKey {
    scalar: NonZeroScalar,
    public: [u8; PUBLIC_KEY_LEN],
    fingerprint: [u8; FINGERPRINT_LEN],
}

impl SecretKey {
    pub fn to_bytes(&self) -> [u8; 28] {
        self.scalar.to_bytes().into()
    }

    pub fn fingerprint(&self) -> [u8; FINGERPRINT_LEN] {
        self.fingerprint
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey(for #{})", hex::encode(&self.fingerprint[..4]))
    }
}

#[derive(Clone, Debug)]
pub struct KeyPair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

/// Deterministic key pair derivation.
pub fn generate_keypair(seed: &[u8; 32]) -> KeyPair {
    let scalar = hash_to_scalar(b"vanet-sybil/keypair", &[seed]);
    let public = PublicKey::from_point(p224::PublicKey::from_secret_scalar(&scalar));
    let secret = SecretKey {
        scalar,
        public: public.bytes,
        fingerprint: public.fingerprint(),
    };
    KeyPair { public, secret }
}

/// Sealed payload addressed to one public key.
#[derive(Clone, PartialEq, Eq)]
pub struct Ciphertext {
    recipient_hint: [u8; FINGERPRINT_LEN],
    body: Vec<u8>,
}

impl Ciphertext {
    pub fn recipient_hint(&self) -> &[u8; FINGERPRINT_LEN] {
        &self.recipient_hint
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    pub fn body_mut(&mut self) -> &mut Vec<u8> {
        &mut self.body
    }

    pub fn set_recipient_hint(&mut self, hint: [u8; FINGERPRINT_LEN]) {
        self.recipient_hint = hint;
    }

    /// Serialized length: hint followed by body.
    pub fn encoded_len(&self) -> usize {
        FINGERPRINT_LEN + self.body.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.recipient_hint);
        out.extend_from_slice(&self.body);
        out
    }

    /// Splits hint and body. Does not check that the body is a valid seal.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() < FINGERPRINT_LEN {
            return Err(CryptoError::MalformedCiphertext);
        }
        let (hint, body) = bytes.split_at(FINGERPRINT_LEN);
        Ok(Self {
            recipient_hint: hint.try_into().expect("split at hint length"),
            body: body.to_vec(),
        })
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Ciphertext")
            .field("recipient_hint", &hex::encode(&self.recipient_hint[..4]))
            .field("body_len", &self.body.len())
            .finish()
    }
}

/// Seals `plaintext` to `public`. The ephemeral scalar is derived from
/// `nonce_seed`, the recipient and the plaintext, so reusing a seed for a
/// different plaintext never reuses an AEAD key.
pub fn encrypt(public: &PublicKey, plaintext: &[u8], nonce_seed: &[u8; 32]) -> Result<Ciphertext, CryptoError> {
    if plaintext.len() > MAX_SEAL_INPUT {
        return Err(CryptoError::MessageTooLarge {
            len: plaintext.len(),
            max: MAX_SEAL_INPUT,
        });
    }
    let plaintext_hash = Sha256::digest(plaintext);
    let ephemeral = hash_to_scalar(
        b"vanet-sybil/seal/ephemeral",
        &[nonce_seed, &public.bytes, &plaintext_hash],
    );
    let ephemeral_public = PublicKey::from_point(p224::PublicKey::from_secret_scalar(&ephemeral));
    let shared = p224::ecdh::diffie_hellman(ephemeral, public.point.as_affine());
    let cipher = envelope_cipher(shared.raw_secret_bytes(), &ephemeral_public.bytes, &public.bytes);

    let recipient_hint = public.fingerprint();
    let sealed = cipher
        .0
        .encrypt(
            &cipher.1.into(),
            Payload {
                msg: plaintext,
                aad: &recipient_hint,
            },
        )
        .expect("chacha20poly1305 seal cannot fail for bounded input");

    let mut body = Vec::with_capacity(PUBLIC_KEY_LEN + sealed.len());
    body.extend_from_slice(&ephemeral_public.bytes);
    body.extend_from_slice(&sealed);
    Ok(Ciphertext { recipient_hint, body })
}

/// Opens an envelope sealed by [`encrypt`]. Any mismatch in recipient, key or
/// content yields [`CryptoError::DecryptionFailed`].
pub fn decrypt(secret: &SecretKey, ct: &Ciphertext) -> Result<Vec<u8>, CryptoError> {
    if ct.recipient_hint != secret.fingerprint || ct.body.len() < PUBLIC_KEY_LEN + TAG_LEN {
        return Err(CryptoError::DecryptionFailed);
    }
    let (ephemeral_bytes, sealed) = ct.body.split_at(PUBLIC_KEY_LEN);
    let ephemeral = p224::PublicKey::from_sec1_bytes(ephemeral_bytes).map_err(|_| CryptoError::DecryptionFailed)?;
    let shared = p224::ecdh::diffie_hellman(secret.scalar, ephemeral.as_affine());
    let cipher = envelope_cipher(shared.raw_secret_bytes(), ephemeral_bytes, &secret.public);
    cipher
        .0
        .decrypt(
            &cipher.1.into(),
            Payload {
                msg: sealed,
                aad: &ct.recipient_hint,
            },
        )
        .map_err(|_| CryptoError::DecryptionFailed)
}

fn envelope_cipher(shared: &FieldBytes, ephemeral: &[u8], recipient: &[u8]) -> (ChaCha20Poly1305, [u8; 12]) {
    let mut salt = Vec::with_capacity(2 * PUBLIC_KEY_LEN);
    salt.extend_from_slice(ephemeral);
    salt.extend_from_slice(recipient);
    let hk = Hkdf::<Sha256>::new(Some(&salt), shared);
    let mut okm = [0u8; 44];
    hk.expand(SEAL_INFO, &mut okm).expect("44 bytes is a valid hkdf length");
    let cipher = ChaCha20Poly1305::new_from_slice(&okm[..32]).expect("32-byte key");
    let nonce: [u8; 12] = okm[32..].try_into().expect("12-byte nonce");
    (cipher, nonce)
}

/// Rejection-samples a non-zero scalar from SHA-256(domain || parts || counter).
fn hash_to_scalar(domain: &[u8], parts: &[&[u8]]) -> NonZeroScalar {
    for counter in 0u32.. {
        let mut h = Sha256::new();
        h.update(domain);
        for part in parts {
            h.update(part);
        }
        h.update(counter.to_be_bytes());
        let digest = h.finalize();
        let repr = FieldBytes::clone_from_slice(&digest[..28]);
        if let Some(scalar) = Option::<NonZeroScalar>::from(NonZeroScalar::from_repr(repr)) {
            return scalar;
        }
    }
    unreachable!("counter space exhausted")
}

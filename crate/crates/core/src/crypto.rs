//! Digests, signing keys and the canonical byte encoding used for
//! signatures and block hashes.
//!
//! Digests are SHA-256 and signatures are Ed25519 throughout; both scheme
//! names are echoed in the run report header. Structures are encoded
//! canonically (fields in declaration order, variable-length payloads
//! length-prefixed) so signatures and hashes are bit-reproducible.

use ed25519_dalek::{Signer, Verifier};
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

/// Name of the digest scheme, echoed in report headers.
pub const HASH_SCHEME: &str = "sha-256";
/// Name of the signature scheme, echoed in report headers.
pub const SIGNATURE_SCHEME: &str = "ed25519";

/// A 256-bit digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);

    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = decode_canonical_hex(s)?;
        let arr: [u8; 32] = bytes
            .as_slice()
            .try_into()
            .map_err(|_| CryptoError::BadHex)?;
        Ok(Digest(arr))
    }
}

impl std::fmt::Debug for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

pub fn sha256(bytes: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(bytes);
    Digest(h.finalize().into())
}

/// Canonical hex is strictly lowercase: exactly one textual form per
/// byte string, so re-encoded values always match their wire form.
fn decode_canonical_hex(s: &str) -> Result<Vec<u8>, CryptoError> {
    if !s
        .bytes()
        .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
    {
        return Err(CryptoError::BadHex);
    }
    hex::decode(s).map_err(|_| CryptoError::BadHex)
}

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("malformed hex string")]
    BadHex,
    #[error("malformed public key")]
    BadKey,
    #[error("malformed signature")]
    BadSignature,
    #[error("signature does not verify")]
    VerifyFailed,
}

/// An Ed25519 public key acting as an opaque identity.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl PublicKey {
    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = decode_canonical_hex(s)?;
        let arr: [u8; 32] = bytes
            .as_slice()
            .try_into()
            .map_err(|_| CryptoError::BadHex)?;
        Ok(PublicKey(arr))
    }

    pub fn verify(&self, message: &[u8], sig: &SignatureBytes) -> Result<(), CryptoError> {
        let vk =
            ed25519_dalek::VerifyingKey::from_bytes(&self.0).map_err(|_| CryptoError::BadKey)?;
        let sig = ed25519_dalek::Signature::from_bytes(&sig.0);
        vk.verify(message, &sig)
            .map_err(|_| CryptoError::VerifyFailed)
    }
}

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl std::fmt::Display for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        PublicKey::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// A detached Ed25519 signature.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct SignatureBytes(pub [u8; 64]);

impl SignatureBytes {
    pub fn to_hex(self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CryptoError> {
        let bytes = decode_canonical_hex(s)?;
        let arr: [u8; 64] = bytes
            .as_slice()
            .try_into()
            .map_err(|_| CryptoError::BadHex)?;
        Ok(SignatureBytes(arr))
    }
}

impl std::fmt::Debug for SignatureBytes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for SignatureBytes {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for SignatureBytes {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        SignatureBytes::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// A signing identity. Key material derives deterministically from the
/// scenario seed and a role-qualified name, so replays are reproducible.
#[derive(Clone)]
pub struct KeyPair {
    signing: ed25519_dalek::SigningKey,
    public: PublicKey,
}

impl KeyPair {
    pub fn from_seed_bytes(seed: [u8; 32]) -> Self {
        let signing = ed25519_dalek::SigningKey::from_bytes(&seed);
        let public = PublicKey(signing.verifying_key().to_bytes());
        KeyPair { signing, public }
    }

    /// Derive the keypair for `label` under run seed `seed`.
    pub fn derive(seed: u64, label: &str) -> Self {
        let mut enc = CanonicalBuf::new();
        enc.put_u64(seed);
        enc.put_str(label);
        Self::from_seed_bytes(sha256(enc.as_bytes()).0)
    }

    pub fn public(&self) -> PublicKey {
        self.public
    }

    pub fn sign(&self, message: &[u8]) -> SignatureBytes {
        SignatureBytes(self.signing.sign(message).to_bytes())
    }
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyPair({})", self.public.to_hex())
    }
}

/// Canonical byte encoder. Fixed-width integers are little-endian,
/// floats are IEEE-754 bit patterns, variable-length payloads carry a
/// u32 length prefix. Encoding order is always struct field order.
#[derive(Default)]
pub struct CanonicalBuf {
    bytes: Vec<u8>,
}

impl CanonicalBuf {
    pub fn new() -> Self {
        CanonicalBuf { bytes: Vec::new() }
    }

    pub fn put_u8(&mut self, v: u8) {
        self.bytes.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_i64(&mut self, v: i64) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f64(&mut self, v: f64) {
        self.bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }

    pub fn put_bool(&mut self, v: bool) {
        self.bytes.push(v as u8);
    }

    pub fn put_bytes(&mut self, v: &[u8]) {
        self.put_u32(v.len() as u32);
        self.bytes.extend_from_slice(v);
    }

    pub fn put_str(&mut self, v: &str) {
        self.put_bytes(v.as_bytes());
    }

    pub fn put_digest(&mut self, v: &Digest) {
        self.bytes.extend_from_slice(&v.0);
    }

    pub fn put_key(&mut self, v: &PublicKey) {
        self.bytes.extend_from_slice(&v.0);
    }

    pub fn put_signature(&mut self, v: &SignatureBytes) {
        self.bytes.extend_from_slice(&v.0);
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn digest(&self) -> Digest {
        sha256(&self.bytes)
    }
}

/// Types that define their own canonical encoding.
pub trait CanonicalEncode {
    fn encode(&self, buf: &mut CanonicalBuf);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut buf = CanonicalBuf::new();
        self.encode(&mut buf);
        buf.bytes
    }

    fn digest(&self) -> Digest {
        sha256(&self.canonical_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_keys_are_deterministic_and_distinct() {
        let a1 = KeyPair::derive(7, "participant:alice");
        let a2 = KeyPair::derive(7, "participant:alice");
        let b = KeyPair::derive(7, "participant:bob");
        let a_other_seed = KeyPair::derive(8, "participant:alice");
        assert_eq!(a1.public(), a2.public());
        assert_ne!(a1.public(), b.public());
        assert_ne!(a1.public(), a_other_seed.public());
    }

    #[test]
    fn sign_verify_roundtrip() {
        let kp = KeyPair::derive(1, "validator:v0");
        let msg = b"witness";
        let sig = kp.sign(msg);
        assert!(kp.public().verify(msg, &sig).is_ok());
        assert!(kp.public().verify(b"tampered", &sig).is_err());
    }

    #[test]
    fn signing_is_deterministic() {
        let kp = KeyPair::derive(1, "validator:v0");
        assert_eq!(kp.sign(b"m").0.to_vec(), kp.sign(b"m").0.to_vec());
    }

    #[test]
    fn length_prefix_separates_fields() {
        // ("ab", "c") and ("a", "bc") must encode differently.
        let mut x = CanonicalBuf::new();
        x.put_str("ab");
        x.put_str("c");
        let mut y = CanonicalBuf::new();
        y.put_str("a");
        y.put_str("bc");
        assert_ne!(x.as_bytes(), y.as_bytes());
    }

    #[test]
    fn digest_hex_roundtrip() {
        let d = sha256(b"block");
        assert_eq!(Digest::from_hex(&d.to_hex()).unwrap(), d);
    }

    #[test]
    fn hex_must_be_canonical_lowercase() {
        let d = sha256(b"block");
        let upper = d.to_hex().to_uppercase();
        assert!(matches!(Digest::from_hex(&upper), Err(CryptoError::BadHex)));
        assert!(matches!(
            SignatureBytes::from_hex("zz"),
            Err(CryptoError::BadHex)
        ));
    }
}

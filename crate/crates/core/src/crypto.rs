//! Algorithm-pinned cryptographic primitives.
//!
//! * key agreement: ECDH on NIST P-256, SEC1 uncompressed shares
//! * key derivation: HKDF (SHA-384 for session keys)
//! * symmetric encryption: AES-256-GCM with caller-supplied 96-bit nonces
//! * signatures: Ed25519 (signing and verification), ECDSA P-256/SHA-256
//!   (verification, and signing for interop fixtures)
//!
//! Nothing here picks nonces. Counter-based nonce assignment lives in
//! [`crate::session`].

use ed25519_dalek::pkcs8::spki::der::pem::LineEnding;
use ed25519_dalek::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey};
use ed25519_dalek::Signer as _;
use p256::ecdsa::signature::Verifier as _;
use p256::elliptic_curve::sec1::ToEncodedPoint;
use p256::NonZeroScalar;
use rand::{CryptoRng, RngCore};
use ring::aead::{self, Aad, LessSafeKey, UnboundKey};
use sha2::{Digest, Sha384};
use thiserror::Error;
use zeroize::{Zeroize, Zeroizing};

/// Length of a SEC1 uncompressed P-256 point.
pub const POINT_LEN: usize = 65;
pub const SHARED_SECRET_LEN: usize = 32;
pub const KEY_LEN: usize = 32;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;

/// HKDF info label prefix for session keys. The SHA-384 hash of the
/// handshake transcript is appended.
pub const SESSION_KEY_LABEL: &[u8] = b"invicloak v1 session";

pub type Nonce = [u8; NONCE_LEN];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid curve point")]
    InvalidPoint,
    #[error("authentication failed")]
    AuthenticationFailed,
    #[error("invalid key encoding")]
    InvalidKey,
    #[error("entropy source failure")]
    Entropy,
    #[error("output too long for key derivation")]
    DerivationLength,
}

/// An ephemeral ECDH key pair. The scalar is wiped on drop and has no
/// accessor; the pair is consumed by the handshake and then discarded.
pub struct EphemeralKeyPair {
    secret: NonZeroScalar,
    public: [u8; POINT_LEN],
}

impl EphemeralKeyPair {
    /// Builds a pair from a fixed big-endian scalar. Used for published test
    /// vectors; production code goes through [`generate_ephemeral`].
    pub fn from_scalar_bytes(bytes: &[u8; 32]) -> Result<Self, CryptoError> {
        let secret = Option::<NonZeroScalar>::from(NonZeroScalar::from_repr((*bytes).into()))
            .ok_or(CryptoError::InvalidKey)?;
        Ok(Self::from_scalar(secret))
    }

    fn from_scalar(secret: NonZeroScalar) -> Self {
        let point = p256::PublicKey::from_secret_scalar(&secret)
            .as_affine()
            .to_encoded_point(false);
        let mut public = [0u8; POINT_LEN];
        public.copy_from_slice(point.as_bytes());
        Self { secret, public }
    }

    pub fn public_point(&self) -> &[u8; POINT_LEN] {
        &self.public
    }
}

impl Drop for EphemeralKeyPair {
    fn drop(&mut self) {
        self.secret.zeroize();
    }
}

impl std::fmt::Debug for EphemeralKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EphemeralKeyPair")
            .field("public", &hex(&self.public))
            .finish_non_exhaustive()
    }
}

/// Draws a fresh P-256 key pair by rejection sampling the scalar.
pub fn generate_ephemeral<R: RngCore + CryptoRng>(rng: &mut R) -> Result<EphemeralKeyPair, CryptoError> {
    let mut bytes = Zeroizing::new([0u8; 32]);
    loop {
        rng.try_fill_bytes(bytes.as_mut())
            .map_err(|_| CryptoError::Entropy)?;
        if let Some(secret) = Option::<NonZeroScalar>::from(NonZeroScalar::from_repr((*bytes).into())) {
            return Ok(EphemeralKeyPair::from_scalar(secret));
        }
    }
}

/// Raw ECDH output (the shared x-coordinate).
pub struct SharedSecret([u8; SHARED_SECRET_LEN]);

impl SharedSecret {
    pub fn as_bytes(&self) -> &[u8; SHARED_SECRET_LEN] {
        &self.0
    }
}

impl Drop for SharedSecret {
    fn drop(&mut self) {
        self.0.zeroize();
    }
}

impl std::fmt::Debug for SharedSecret {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SharedSecret(..)")
    }
}

/// Validates a peer share: uncompressed SEC1, on the curve, not the identity.
pub fn validate_point(point: &[u8]) -> Result<p256::PublicKey, CryptoError> {
    if point.len() != POINT_LEN || point[0] != 0x04 {
        return Err(CryptoError::InvalidPoint);
    }
    p256::PublicKey::from_sec1_bytes(point).map_err(|_| CryptoError::InvalidPoint)
}

pub fn ecdh(mine: &EphemeralKeyPair, theirs: &[u8]) -> Result<SharedSecret, CryptoError> {
    let peer = validate_point(theirs)?;
    let shared = p256::ecdh::diffie_hellman(mine.secret, peer.as_affine());
    let mut out = [0u8; SHARED_SECRET_LEN];
    out.copy_from_slice(shared.raw_secret_bytes());
    Ok(SharedSecret(out))
}

pub fn hkdf_sha256(ikm: &[u8], salt: &[u8], info: &[u8], out: &mut [u8]) -> Result<(), CryptoError> {
    hkdf::Hkdf::<sha2::Sha256>::new(Some(salt), ikm)
        .expand(info, out)
        .map_err(|_| CryptoError::DerivationLength)
}

pub fn hkdf_sha384(ikm: &[u8], salt: &[u8], info: &[u8], out: &mut [u8]) -> Result<(), CryptoError> {
    hkdf::Hkdf::<Sha384>::new(Some(salt), ikm)
        .expand(info, out)
        .map_err(|_| CryptoError::DerivationLength)
}

/// HKDF-SHA384 from an ECDH secret to a 32-byte AEAD key.
pub fn hkdf(secret: &SharedSecret, salt: &[u8], info: &[u8]) -> SymmetricKey {
    let mut okm = Zeroizing::new([0u8; KEY_LEN]);
    hkdf_sha384(secret.as_bytes(), salt, info, okm.as_mut()).expect("32 bytes is within HKDF-SHA384 range");
    SymmetricKey::from_raw(*okm)
}

/// Session key schedule: zero salt, info = label || SHA-384(transcript).
pub fn derive_session_key(secret: &SharedSecret, transcript: &[u8]) -> SymmetricKey {
    let mut info = Vec::with_capacity(SESSION_KEY_LABEL.len() + 48);
    info.extend_from_slice(SESSION_KEY_LABEL);
    info.extend_from_slice(&Sha384::digest(transcript));
    hkdf(secret, &[0u8; 32], &info)
}

pub fn sha384(data: &[u8]) -> [u8; 48] {
    Sha384::digest(data).into()
}

/// AES-256-GCM key.
pub struct SymmetricKey {
    raw: Zeroizing<[u8; KEY_LEN]>,
    aead: LessSafeKey,
}

impl SymmetricKey {
    pub const ALGORITHM: &'static str = "AES-256-GCM";

    /// Wraps raw key bytes. Session keys come from [`derive_session_key`];
    /// this exists for persisted-session restore and known-answer tests.
    pub fn from_raw(raw: [u8; KEY_LEN]) -> Self {
        let unbound = UnboundKey::new(&aead::AES_256_GCM, &raw).expect("AES-256 key is 32 bytes");
        Self {
            raw: Zeroizing::new(raw),
            aead: LessSafeKey::new(unbound),
        }
    }

    pub(crate) fn raw_bytes(&self) -> &[u8; KEY_LEN] {
        &self.raw
    }
}

impl Clone for SymmetricKey {
    fn clone(&self) -> Self {
        Self::from_raw(*self.raw)
    }
}

impl PartialEq for SymmetricKey {
    fn eq(&self, other: &Self) -> bool {
        self.raw
            .iter()
            .zip(other.raw.iter())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }
}

impl Eq for SymmetricKey {}

impl std::fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SymmetricKey(AES-256-GCM, ..)")
    }
}

pub fn aead_seal(key: &SymmetricKey, nonce: &Nonce, aad: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(plaintext.len() + TAG_LEN);
    buf.extend_from_slice(plaintext);
    seal_in_place(key, nonce, aad, &mut buf, 0);
    buf
}

pub fn aead_open(key: &SymmetricKey, nonce: &Nonce, aad: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    let mut buf = ciphertext.to_vec();
    let len = open_in_place(key, nonce, aad, &mut buf)?;
    buf.truncate(len);
    Ok(buf)
}

/// Encrypts `buf[from..]` in place and appends the tag.
pub fn seal_in_place(key: &SymmetricKey, nonce: &Nonce, aad: &[u8], buf: &mut Vec<u8>, from: usize) {
    let tag = key
        .aead
        .seal_in_place_separate_tag(aead::Nonce::assume_unique_for_key(*nonce), Aad::from(aad), &mut buf[from..])
        .expect("plaintext within AES-GCM length limit");
    buf.extend_from_slice(tag.as_ref());
}

/// Decrypts `buf` (ciphertext || tag) in place; returns the plaintext length.
/// On failure the buffer contents are unspecified and must be discarded.
pub fn open_in_place(key: &SymmetricKey, nonce: &Nonce, aad: &[u8], buf: &mut [u8]) -> Result<usize, CryptoError> {
    if buf.len() < TAG_LEN {
        return Err(CryptoError::AuthenticationFailed);
    }
    key.aead
        .open_in_place(aead::Nonce::assume_unique_for_key(*nonce), Aad::from(aad), buf)
        .map(|pt| pt.len())
        .map_err(|_| CryptoError::AuthenticationFailed)
}

/// Signature algorithm identifiers carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum SigAlg {
    Ed25519 = 0x01,
    EcdsaP256Sha256 = 0x02,
}

impl SigAlg {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0x01 => Some(Self::Ed25519),
            0x02 => Some(Self::EcdsaP256Sha256),
            _ => None,
        }
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }

    /// Both algorithms use fixed 64-byte signatures (ECDSA as r || s).
    pub fn signature_len(self) -> usize {
        64
    }
}

/// A long-term signing key. Ed25519 is the default for both handshake and
/// object signing.
#[derive(Clone)]
pub enum SigningKeyPair {
    Ed25519(ed25519_dalek::SigningKey),
    EcdsaP256(p256::ecdsa::SigningKey),
}

impl SigningKeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::Ed25519(ed25519_dalek::SigningKey::generate(rng))
    }

    pub fn generate_ecdsa_p256<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self::EcdsaP256(p256::ecdsa::SigningKey::random(rng))
    }

    pub fn from_ed25519_seed(seed: &[u8; 32]) -> Self {
        Self::Ed25519(ed25519_dalek::SigningKey::from_bytes(seed))
    }

    pub fn alg(&self) -> SigAlg {
        match self {
            Self::Ed25519(_) => SigAlg::Ed25519,
            Self::EcdsaP256(_) => SigAlg::EcdsaP256Sha256,
        }
    }

    pub fn from_pkcs8_der(der: &[u8]) -> Result<Self, CryptoError> {
        if let Ok(k) = ed25519_dalek::SigningKey::from_pkcs8_der(der) {
            return Ok(Self::Ed25519(k));
        }
        p256::ecdsa::SigningKey::from_pkcs8_der(der)
            .map(Self::EcdsaP256)
            .map_err(|_| CryptoError::InvalidKey)
    }

    pub fn to_pkcs8_der(&self) -> Zeroizing<Vec<u8>> {
        let doc = match self {
            Self::Ed25519(k) => k.to_pkcs8_der(),
            Self::EcdsaP256(k) => p256::pkcs8::EncodePrivateKey::to_pkcs8_der(k),
        }
        .expect("in-memory key encodes");
        Zeroizing::new(doc.as_bytes().to_vec())
    }

    pub fn from_pkcs8_pem(pem: &str) -> Result<Self, CryptoError> {
        if let Ok(k) = ed25519_dalek::SigningKey::from_pkcs8_pem(pem) {
            return Ok(Self::Ed25519(k));
        }
        p256::ecdsa::SigningKey::from_pkcs8_pem(pem)
            .map(Self::EcdsaP256)
            .map_err(|_| CryptoError::InvalidKey)
    }

    pub fn to_pkcs8_pem(&self) -> Zeroizing<String> {
        let pem = match self {
            Self::Ed25519(k) => k.to_pkcs8_pem(LineEnding::LF),
            Self::EcdsaP256(k) => p256::pkcs8::EncodePrivateKey::to_pkcs8_pem(k, LineEnding::LF),
        }
        .expect("in-memory key encodes");
        Zeroizing::new(pem.to_string())
    }

    /// Accepts a PKCS#8 key as PEM or raw DER.
    pub fn from_pkcs8_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        match std::str::from_utf8(bytes) {
            Ok(text) if text.trim_start().starts_with("-----BEGIN") => Self::from_pkcs8_pem(text),
            _ => Self::from_pkcs8_der(bytes),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        match self {
            Self::Ed25519(k) => PublicKey::Ed25519(k.verifying_key()),
            Self::EcdsaP256(k) => PublicKey::EcdsaP256(*k.verifying_key()),
        }
    }

    /// SubjectPublicKeyInfo DER of the verification key, exactly the bytes
    /// published in the TLSA record.
    pub fn public_spki(&self) -> Vec<u8> {
        self.public_key().to_spki_der()
    }
}

impl std::fmt::Debug for SigningKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SigningKeyPair({:?}, ..)", self.alg())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublicKey {
    Ed25519(ed25519_dalek::VerifyingKey),
    EcdsaP256(p256::ecdsa::VerifyingKey),
}

impl PublicKey {
    pub fn from_spki_der(der: &[u8]) -> Result<Self, CryptoError> {
        if let Ok(k) = ed25519_dalek::VerifyingKey::from_public_key_der(der) {
            return Ok(Self::Ed25519(k));
        }
        p256::ecdsa::VerifyingKey::from_public_key_der(der)
            .map(Self::EcdsaP256)
            .map_err(|_| CryptoError::InvalidKey)
    }

    pub fn to_spki_der(&self) -> Vec<u8> {
        match self {
            Self::Ed25519(k) => k.to_public_key_der(),
            Self::EcdsaP256(k) => p256::pkcs8::EncodePublicKey::to_public_key_der(k),
        }
        .expect("in-memory key encodes")
        .into_vec()
    }

    pub fn alg(&self) -> SigAlg {
        match self {
            Self::Ed25519(_) => SigAlg::Ed25519,
            Self::EcdsaP256(_) => SigAlg::EcdsaP256Sha256,
        }
    }

    pub fn to_spki_pem(&self) -> String {
        match self {
            Self::Ed25519(k) => k.to_public_key_pem(LineEnding::LF),
            Self::EcdsaP256(k) => p256::pkcs8::EncodePublicKey::to_public_key_pem(k, LineEnding::LF),
        }
        .expect("in-memory key encodes")
    }

    /// Accepts an SPKI as PEM or raw DER.
    pub fn from_spki_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        match std::str::from_utf8(bytes) {
            Ok(text) if text.trim_start().starts_with("-----BEGIN") => {
                if let Ok(k) = ed25519_dalek::VerifyingKey::from_public_key_pem(text) {
                    return Ok(Self::Ed25519(k));
                }
                p256::ecdsa::VerifyingKey::from_public_key_pem(text)
                    .map(Self::EcdsaP256)
                    .map_err(|_| CryptoError::InvalidKey)
            }
            _ => Self::from_spki_der(bytes),
        }
    }
}

pub fn sign(key: &SigningKeyPair, message: &[u8]) -> Vec<u8> {
    match key {
        SigningKeyPair::Ed25519(k) => k.sign(message).to_bytes().to_vec(),
        SigningKeyPair::EcdsaP256(k) => {
            let sig: p256::ecdsa::Signature = k.sign(message);
            sig.to_bytes().to_vec()
        }
    }
}

/// Returns true only if `alg` matches the key type and the signature
/// verifies. Malformed encodings are plain rejections.
pub fn verify(public_key: &PublicKey, alg: SigAlg, message: &[u8], signature: &[u8]) -> bool {
    match (public_key, alg) {
        (PublicKey::Ed25519(k), SigAlg::Ed25519) => ed25519_dalek::Signature::from_slice(signature)
            .map(|sig| k.verify_strict(message, &sig).is_ok())
            .unwrap_or(false),
        (PublicKey::EcdsaP256(k), SigAlg::EcdsaP256Sha256) => p256::ecdsa::Signature::from_slice(signature)
            .map(|sig| k.verify(message, &sig).is_ok())
            .unwrap_or(false),
        _ => false,
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    use std::fmt::Write;
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub(crate) fn unhex(s: &str) -> Option<Vec<u8>> {
    let s = s.trim();
    if s.len() % 2 != 0 || !s.is_ascii() {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&s[i..i + 2], 16).ok())
        .collect()
}

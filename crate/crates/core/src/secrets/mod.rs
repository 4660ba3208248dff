//! Master-key ceremony and threshold custody.
//!
//! Eleven participants each contribute 23 random bytes. The contributions are
//! concatenated in participant order and tagged with a two-byte version
//! suffix to fill the 255-byte RC5 key. Custody is byte-wise Shamir sharing
//! over GF(2^8): any six of eleven shares rebuild the key, five reveal
//! nothing about it.

pub mod gf256;

use std::fmt;

use rand::{CryptoRng, RngCore};
use thiserror::Error;
use zeroize::Zeroize;

use crate::wire;

pub const PARTICIPANTS: usize = 11;
pub const THRESHOLD: usize = 6;
pub const CONTRIBUTION_LEN: usize = 23;
pub const MASTER_KEY_LEN: usize = 255;
/// Appended after the 253 contributed bytes.
pub const KEY_VERSION_TAG: [u8; 2] = [0x01, 0x00];

pub const SHARE_MAGIC: &[u8; 4] = b"GKSH";
pub const SHARE_VERSION: u8 = 1;
pub const SHARE_FILE_LEN: usize = 4 + 1 + 16 + 1 + MASTER_KEY_LEN + 4;
pub const CONTRIBUTION_MAGIC: &[u8; 4] = b"GKCT";
pub const CONTRIBUTION_FILE_LEN: usize = 4 + 1 + 1 + 4 + CONTRIBUTION_LEN + 4;
pub const MASTER_KEY_MAGIC: &[u8; 4] = b"GKMK";
pub const MASTER_KEY_FILE_LEN: usize = 4 + 1 + 16 + 4 + 1 + MASTER_KEY_LEN + 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SecretsError {
    #[error("expected {PARTICIPANTS} contributions, got {0}")]
    WrongContributionCount(usize),
    #[error("participant id {0} outside 1..={PARTICIPANTS}")]
    InvalidParticipant(u8),
    #[error("participant {0} contributed more than once")]
    DuplicateParticipant(u8),
    #[error("contribution material must be {CONTRIBUTION_LEN} bytes, got {0}")]
    WrongMaterialLength(usize),
    #[error("invalid threshold parameters k={k}, n={n}")]
    InvalidThreshold { k: usize, n: usize },
    #[error("threshold not met: {have} shares, {need} required")]
    ThresholdNotMet { have: usize, need: usize },
    #[error("invalid shares: {0}")]
    InvalidShares(&'static str),
    #[error("share {0} is inconsistent with the others")]
    Integrity(u8),
    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: &'static str },
}

/// Opaque 16-byte ceremony identifier carried by every share.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CeremonyId(pub [u8; 16]);

impl CeremonyId {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut id = [0u8; 16];
        rng.fill_bytes(&mut id);
        Self(id)
    }

    /// Uses an operator-supplied ceremony nonce as the identifier. The nonce
    /// never enters key material.
    pub fn from_nonce(nonce: [u8; 16]) -> Self {
        Self(nonce)
    }
}

impl fmt::Debug for CeremonyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CeremonyId({})", hex::encode(self.0))
    }
}

impl fmt::Display for CeremonyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Contribution {
    participant_id: u8,
    material: [u8; CONTRIBUTION_LEN],
    declared_entropy_bits: u32,
}

impl Drop for Contribution {
    fn drop(&mut self) {
        self.material.zeroize();
    }
}

impl fmt::Debug for Contribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Contribution")
            .field("participant_id", &self.participant_id)
            .field("declared_entropy_bits", &self.declared_entropy_bits)
            .finish_non_exhaustive()
    }
}

impl Contribution {
    pub fn new(participant_id: u8, material: &[u8], declared_entropy_bits: u32) -> Result<Self, SecretsError> {
        if !(1..=PARTICIPANTS as u8).contains(&participant_id) {
            return Err(SecretsError::InvalidParticipant(participant_id));
        }
        let material = material
            .try_into()
            .map_err(|_| SecretsError::WrongMaterialLength(material.len()))?;
        Ok(Self {
            participant_id,
            material,
            declared_entropy_bits,
        })
    }

    /// Draws fresh material from `rng`.
    pub fn generate<R: RngCore + CryptoRng>(
        participant_id: u8,
        declared_entropy_bits: u32,
        rng: &mut R,
    ) -> Result<Self, SecretsError> {
        let mut material = [0u8; CONTRIBUTION_LEN];
        rng.fill_bytes(&mut material);
        let c = Self::new(participant_id, &material, declared_entropy_bits);
        material.zeroize();
        c
    }

    pub fn participant_id(&self) -> u8 {
        self.participant_id
    }

    pub fn declared_entropy_bits(&self) -> u32 {
        self.declared_entropy_bits
    }

    /// `GKCT | version | participant | entropy (u32 BE) | material | crc32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(CONTRIBUTION_FILE_LEN);
        buf.extend_from_slice(CONTRIBUTION_MAGIC);
        buf.push(SHARE_VERSION);
        buf.push(self.participant_id);
        buf.extend_from_slice(&self.declared_entropy_bits.to_be_bytes());
        buf.extend_from_slice(&self.material);
        wire::seal(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SecretsError> {
        let body = open_file(bytes, "contribution", CONTRIBUTION_MAGIC, CONTRIBUTION_FILE_LEN)?;
        let entropy = u32::from_be_bytes(body[6..10].try_into().expect("4 bytes"));
        Self::new(body[5], &body[10..], entropy)
    }
}

fn open_file<'a>(bytes: &'a [u8], kind: &'static str, magic: &[u8; 4], len: usize) -> Result<&'a [u8], SecretsError> {
    let fail = |reason| SecretsError::Format { kind, reason };
    if bytes.len() != len {
        return Err(fail("wrong length"));
    }
    let body = wire::unseal(bytes).ok_or_else(|| fail("checksum mismatch"))?;
    if &body[..4] != magic {
        return Err(fail("bad magic"));
    }
    if body[4] != SHARE_VERSION {
        return Err(fail("unsupported version"));
    }
    Ok(body)
}

/// The 2040-bit master key. Zeroized on drop; `Debug` never prints it.
#[derive(Clone)]
pub struct MasterKey {
    key: [u8; MASTER_KEY_LEN],
    ceremony_id: CeremonyId,
    total_entropy_bits: Option<u32>,
}

impl Drop for MasterKey {
    fn drop(&mut self) {
        self.key.zeroize();
    }
}

impl fmt::Debug for MasterKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterKey")
            .field("ceremony_id", &self.ceremony_id)
            .field("total_entropy_bits", &self.total_entropy_bits)
            .finish_non_exhaustive()
    }
}

impl PartialEq for MasterKey {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key && self.ceremony_id == other.ceremony_id
    }
}

impl Eq for MasterKey {}

impl MasterKey {
    pub fn from_bytes(key: [u8; MASTER_KEY_LEN], ceremony_id: CeremonyId) -> Self {
        Self {
            key,
            ceremony_id,
            total_entropy_bits: None,
        }
    }

    pub fn as_bytes(&self) -> &[u8; MASTER_KEY_LEN] {
        &self.key
    }

    pub fn ceremony_id(&self) -> CeremonyId {
        self.ceremony_id
    }

    /// Sum of declared contribution entropy; unknown once rebuilt from shares.
    pub fn total_entropy_bits(&self) -> Option<u32> {
        self.total_entropy_bits
    }

    /// `GKMK | version | ceremony | entropy (u32 BE, 0xFFFFFFFF = unknown) |
    /// key length | key | crc32`.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(MASTER_KEY_FILE_LEN);
        buf.extend_from_slice(MASTER_KEY_MAGIC);
        buf.push(SHARE_VERSION);
        buf.extend_from_slice(&self.ceremony_id.0);
        buf.extend_from_slice(&self.total_entropy_bits.unwrap_or(u32::MAX).to_be_bytes());
        buf.push(MASTER_KEY_LEN as u8);
        buf.extend_from_slice(&self.key);
        wire::seal(buf)
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self, SecretsError> {
        let body = open_file(bytes, "master key", MASTER_KEY_MAGIC, MASTER_KEY_FILE_LEN)?;
        let ceremony_id = CeremonyId(body[5..21].try_into().expect("16 bytes"));
        let entropy = u32::from_be_bytes(body[21..25].try_into().expect("4 bytes"));
        if body[25] as usize != MASTER_KEY_LEN {
            return Err(SecretsError::Format {
                kind: "master key",
                reason: "unsupported key length",
            });
        }
        Ok(Self {
            key: body[26..].try_into().expect("255 bytes"),
            ceremony_id,
            total_entropy_bits: (entropy != u32::MAX).then_some(entropy),
        })
    }
}

/// Concatenates the eleven contributions in participant order.
pub fn assemble_master_key(contribs: &[Contribution], ceremony_id: CeremonyId) -> Result<MasterKey, SecretsError> {
    if contribs.len() != PARTICIPANTS {
        return Err(SecretsError::WrongContributionCount(contribs.len()));
    }
    let mut slots: [Option<&Contribution>; PARTICIPANTS] = [None; PARTICIPANTS];
    for c in contribs {
        let slot = &mut slots[c.participant_id as usize - 1];
        if slot.is_some() {
            return Err(SecretsError::DuplicateParticipant(c.participant_id));
        }
        *slot = Some(c);
    }
    let mut key = [0u8; MASTER_KEY_LEN];
    let mut total = 0u32;
    for (i, c) in slots.iter().enumerate() {
        let c = c.expect("eleven distinct ids in 1..=11 fill every slot");
        key[i * CONTRIBUTION_LEN..(i + 1) * CONTRIBUTION_LEN].copy_from_slice(&c.material);
        total = total.saturating_add(c.declared_entropy_bits);
    }
    key[PARTICIPANTS * CONTRIBUTION_LEN..].copy_from_slice(&KEY_VERSION_TAG);
    Ok(MasterKey {
        key,
        ceremony_id,
        total_entropy_bits: Some(total),
    })
}

/// One custody share of the master key.
#[derive(Clone, PartialEq, Eq)]
pub struct Share {
    x: u8,
    y: [u8; MASTER_KEY_LEN],
    ceremony_id: CeremonyId,
}

impl Drop for Share {
    fn drop(&mut self) {
        self.y.zeroize();
    }
}

impl fmt::Debug for Share {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Share")
            .field("x", &self.x)
            .field("ceremony_id", &self.ceremony_id)
            .finish_non_exhaustive()
    }
}

impl Share {
    pub fn new(x: u8, y: [u8; MASTER_KEY_LEN], ceremony_id: CeremonyId) -> Result<Self, SecretsError> {
        if x == 0 {
            return Err(SecretsError::InvalidShares("share index 0 would expose the secret"));
        }
        Ok(Self { x, y, ceremony_id })
    }

    pub fn x(&self) -> u8 {
        self.x
    }

    pub fn y(&self) -> &[u8; MASTER_KEY_LEN] {
        &self.y
    }

    pub fn ceremony_id(&self) -> CeremonyId {
        self.ceremony_id
    }

    /// `GKSH | version | ceremony_id | x | y | crc32 (BE)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(SHARE_FILE_LEN);
        buf.extend_from_slice(SHARE_MAGIC);
        buf.push(SHARE_VERSION);
        buf.extend_from_slice(&self.ceremony_id.0);
        buf.push(self.x);
        buf.extend_from_slice(&self.y);
        wire::seal(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SecretsError> {
        let body = open_file(bytes, "share", SHARE_MAGIC, SHARE_FILE_LEN)?;
        let ceremony_id = CeremonyId(body[5..21].try_into().expect("16 bytes"));
        Self::new(body[21], body[22..].try_into().expect("255 bytes"), ceremony_id)
    }
}

/// Splits `mk` into `n` shares, any `k` of which rebuild it.
pub fn split<R: RngCore + CryptoRng>(
    mk: &MasterKey,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Share>, SecretsError> {
    if !(2 <= k && k <= n && n <= 255) {
        return Err(SecretsError::InvalidThreshold { k, n });
    }
    let mut ys = vec![[0u8; MASTER_KEY_LEN]; n];
    let mut coeffs = vec![0u8; k];
    for (pos, &secret) in mk.key.iter().enumerate() {
        coeffs[0] = secret;
        rng.fill_bytes(&mut coeffs[1..]);
        for (i, y) in ys.iter_mut().enumerate() {
            y[pos] = gf256::eval(&coeffs, (i + 1) as u8);
        }
    }
    coeffs.zeroize();
    let shares = ys
        .iter()
        .enumerate()
        .map(|(i, y)| Share {
            x: (i + 1) as u8,
            y: *y,
            ceremony_id: mk.ceremony_id,
        })
        .collect();
    for y in ys.iter_mut() {
        y.zeroize();
    }
    Ok(shares)
}

/// Rebuilds the master key from at least `k` shares. Shares beyond the
/// first `k` must lie on the same polynomials.
pub fn combine(shares: &[Share], k: usize) -> Result<MasterKey, SecretsError> {
    if k < 2 {
        return Err(SecretsError::InvalidThreshold { k, n: shares.len() });
    }
    if shares.len() < k {
        return Err(SecretsError::ThresholdNotMet {
            have: shares.len(),
            need: k,
        });
    }
    let ceremony_id = shares[0].ceremony_id;
    if shares.iter().any(|s| s.ceremony_id != ceremony_id) {
        return Err(SecretsError::InvalidShares("shares come from different ceremonies"));
    }
    let mut seen = [false; 256];
    for s in shares {
        if s.x == 0 {
            return Err(SecretsError::InvalidShares("share index 0"));
        }
        if std::mem::replace(&mut seen[s.x as usize], true) {
            return Err(SecretsError::InvalidShares("duplicate share index"));
        }
    }
    let (basis, extra) = shares.split_at(k);
    let xs: Vec<u8> = basis.iter().map(|s| s.x).collect();
    let mut ys = vec![0u8; k];
    let mut key = [0u8; MASTER_KEY_LEN];
    for pos in 0..MASTER_KEY_LEN {
        for (y, s) in ys.iter_mut().zip(basis) {
            *y = s.y[pos];
        }
        key[pos] = gf256::interpolate(&xs, &ys, 0);
        for s in extra {
            if gf256::interpolate(&xs, &ys, s.x) != s.y[pos] {
                key.zeroize();
                ys.zeroize();
                return Err(SecretsError::Integrity(s.x));
            }
        }
    }
    ys.zeroize();
    Ok(MasterKey {
        key,
        ceremony_id,
        total_entropy_bits: None,
    })
}

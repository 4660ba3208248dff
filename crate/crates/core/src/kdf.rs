//! Geosecured temporary keys: the padded `(geocode, interval)` plaintext
//! encrypted under the master key with RC5-32/20/255 in zero-IV CBC.
//!
//! Plaintext layout, 32 bytes:
//!
//! ```text
//! 0      version 0x01
//! 1..7   geocode, ASCII
//! 7..11  start day, u32 BE (days since 1970-01-01 UTC)
//! 11..15 end day, u32 BE, exclusive
//! 15..32 zero
//! ```
//!
//! Longer derived keys append zero blocks to the plaintext, so every derived
//! length shares the same 256-bit prefix.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroize;

use crate::cipher::{cbc_encrypt_in_place, key_schedule, Rc5Params, RoundKeys, BLOCK_LEN};
use crate::geocell::Geocode;
use crate::secrets::MasterKey;

/// Longest interval a single key may cover.
pub const MAX_EPOCH_DAYS: u32 = 60;
pub const PLAINTEXT_LEN: usize = 32;
pub const PLAINTEXT_VERSION: u8 = 0x01;
pub const GEOKEY_LEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KdfError {
    #[error("empty interval [{start}, {end})")]
    EmptyInterval { start: u32, end: u32 },
    #[error("interval [{start}, {end}) exceeds the {MAX_EPOCH_DAYS}-day epoch limit")]
    EpochTooLong { start: u32, end: u32 },
    #[error("derived length must be a multiple of 64 bits in 256..=2048, got {0}")]
    InvalidLength(u32),
}

/// A key validity window in epoch days, end exclusive, at most 60 days long.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "(u32, u32)", into = "(u32, u32)")]
pub struct TimeInterval {
    start_day: u32,
    end_day: u32,
}

impl TimeInterval {
    pub fn new(start_day: u32, end_day: u32) -> Result<Self, KdfError> {
        if start_day >= end_day {
            return Err(KdfError::EmptyInterval {
                start: start_day,
                end: end_day,
            });
        }
        if end_day - start_day > MAX_EPOCH_DAYS {
            return Err(KdfError::EpochTooLong {
                start: start_day,
                end: end_day,
            });
        }
        Ok(Self { start_day, end_day })
    }

    pub fn start_day(&self) -> u32 {
        self.start_day
    }

    pub fn end_day(&self) -> u32 {
        self.end_day
    }

    pub fn len_days(&self) -> u32 {
        self.end_day - self.start_day
    }

    pub fn contains(&self, day: u32) -> bool {
        self.start_day <= day && day < self.end_day
    }
}

impl TryFrom<(u32, u32)> for TimeInterval {
    type Error = KdfError;

    fn try_from((s, e): (u32, u32)) -> Result<Self, KdfError> {
        Self::new(s, e)
    }
}

impl From<TimeInterval> for (u32, u32) {
    fn from(t: TimeInterval) -> Self {
        (t.start_day, t.end_day)
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start_day, self.end_day)
    }
}

/// The padded derivation input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyPlaintext([u8; PLAINTEXT_LEN]);

impl KeyPlaintext {
    pub fn new(geocode: &Geocode, interval: &TimeInterval) -> Self {
        let mut b = [0u8; PLAINTEXT_LEN];
        b[0] = PLAINTEXT_VERSION;
        b[1..7].copy_from_slice(geocode.as_bytes());
        b[7..11].copy_from_slice(&interval.start_day.to_be_bytes());
        b[11..15].copy_from_slice(&interval.end_day.to_be_bytes());
        Self(b)
    }

    pub fn as_bytes(&self) -> &[u8; PLAINTEXT_LEN] {
        &self.0
    }
}

/// Derived key length in bits: a multiple of 64 between 256 and 2048.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DerivedLength(u32);

impl DerivedLength {
    pub const DEFAULT: DerivedLength = DerivedLength(256);

    pub fn bits(bits: u32) -> Result<Self, KdfError> {
        if !bits.is_multiple_of(64) || !(256..=2048).contains(&bits) {
            return Err(KdfError::InvalidLength(bits));
        }
        Ok(Self(bits))
    }

    pub fn bytes(&self) -> usize {
        self.0 as usize / 8
    }
}

impl Default for DerivedLength {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// A key bound to one cell and one interval.
#[derive(Clone, PartialEq, Eq)]
pub struct GeoKey {
    pub geocode: Geocode,
    pub interval: TimeInterval,
    material: Vec<u8>,
}

impl Drop for GeoKey {
    fn drop(&mut self) {
        self.material.zeroize();
    }
}

impl fmt::Debug for GeoKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeoKey")
            .field("geocode", &self.geocode)
            .field("interval", &self.interval)
            .field("bits", &(self.material.len() * 8))
            .finish_non_exhaustive()
    }
}

impl GeoKey {
    /// Wraps stored key bytes, e.g. from a keystore record.
    pub fn from_parts(geocode: Geocode, interval: TimeInterval, key: [u8; GEOKEY_LEN]) -> Self {
        Self {
            geocode,
            interval,
            material: key.to_vec(),
        }
    }

    pub fn material(&self) -> &[u8] {
        &self.material
    }

    pub fn key(&self) -> [u8; GEOKEY_LEN] {
        tub_key(self)
    }
}

/// The first 256 bits of the derived material, the form consumed by 256-bit
/// block ciphers and stored in keystores.
pub fn tub_key(g: &GeoKey) -> [u8; GEOKEY_LEN] {
    g.material[..GEOKEY_LEN]
        .try_into()
        .expect("material is at least 256 bits")
}

/// The master key schedule, computed once and shared read-only.
#[derive(Debug, Clone)]
pub struct KeyDeriver {
    rk: RoundKeys,
    length: DerivedLength,
}

impl KeyDeriver {
    pub fn new(mk: &MasterKey) -> Self {
        let rk = key_schedule(mk.as_bytes(), &Rc5Params::master()).expect("master key length matches RC5-32/20/255");
        Self {
            rk,
            length: DerivedLength::DEFAULT,
        }
    }

    pub fn with_length(mut self, length: DerivedLength) -> Self {
        self.length = length;
        self
    }

    pub fn length(&self) -> DerivedLength {
        self.length
    }

    pub fn derive(&self, geocode: &Geocode, interval: &TimeInterval) -> GeoKey {
        let len = self.length.bytes();
        let mut material = vec![0u8; len];
        material[..PLAINTEXT_LEN].copy_from_slice(KeyPlaintext::new(geocode, interval).as_bytes());
        debug_assert_eq!(len % BLOCK_LEN, 0);
        cbc_encrypt_in_place(&mut material, &self.rk);
        GeoKey {
            geocode: *geocode,
            interval: *interval,
            material,
        }
    }

    /// Allocation-free 256-bit derivation for bulk work.
    pub fn derive_into(&self, geocode: &Geocode, interval: &TimeInterval, out: &mut [u8; GEOKEY_LEN]) {
        *out = *KeyPlaintext::new(geocode, interval).as_bytes();
        cbc_encrypt_in_place(out, &self.rk);
    }
}

/// One-shot derivation; schedules the master key on every call.
pub fn derive_geokey(mk: &MasterKey, geocode: &Geocode, interval: &TimeInterval) -> GeoKey {
    KeyDeriver::new(mk).derive(geocode, interval)
}

/// Splits `[start_day, end_day)` into consecutive epochs of 60 days aligned
/// to `start_day`; the last epoch may be shorter.
pub fn epochs_for(start_day: u32, end_day: u32) -> Result<Vec<TimeInterval>, KdfError> {
    if start_day >= end_day {
        return Err(KdfError::EmptyInterval {
            start: start_day,
            end: end_day,
        });
    }
    let mut out = Vec::with_capacity(((end_day - start_day) / MAX_EPOCH_DAYS + 1) as usize);
    let mut s = start_day;
    while s < end_day {
        let e = s.saturating_add(MAX_EPOCH_DAYS).min(end_day);
        out.push(TimeInterval {
            start_day: s,
            end_day: e,
        });
        s = e;
    }
    Ok(out)
}

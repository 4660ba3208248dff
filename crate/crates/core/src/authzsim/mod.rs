//! Challenge-response authorization between assets in the same cell.
//!
//! A verifier broadcasts a 48-bit challenge carrying a 29-bit timestamp (10 ms
//! ticks, wrapping at 2^29) and a 17-bit nonce. A prover holding the GeoKey for
//! its cell answers with a 32-bit CBC-MAC over the challenge bytes followed by
//! the cell's geocode. Provers without a key stay silent. Both packets fit in
//! one 64-bit payload.

pub mod channel;
pub mod scenario;
pub mod scenarios;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cipher::{cbc_mac, RoundKeys, DEFAULT_ROUNDS};
use crate::geocell::{neighbors, Geocode};
use crate::kdf::{GeoKey, MAX_EPOCH_DAYS};
use crate::keystore::KeyStore;

pub use channel::{ChannelModel, Transmission, SOUND_SPEED_MPS};
pub use scenario::{Metrics, ScenarioSpec, SimError, Simulation};

pub const TIMESTAMP_BITS: u32 = 29;
pub const NONCE_BITS: u32 = 17;
pub const TIMESTAMP_MODULUS: u64 = 1 << TIMESTAMP_BITS;
pub const MAC_BITS: u32 = 32;
pub const PACKET_BUDGET_BITS: u32 = 64;

const CHALLENGE_TYPE: u64 = 0b01;
const RESPONSE_TYPE: u64 = 0b10;
const TIMESTAMP_MASK: u32 = (1 << TIMESTAMP_BITS) - 1;
const NONCE_MASK: u32 = (1 << NONCE_BITS) - 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("packet is {got} bytes, expected {want}")]
    Length { got: usize, want: usize },
    #[error("unexpected message type {0:#04b}")]
    MessageType(u8),
    #[error("padding bits are not zero")]
    Padding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChallengePacket {
    timestamp: u32,
    nonce: u32,
}

impl ChallengePacket {
    pub const LEN: usize = 6;
    pub const BITS: u32 = 2 + TIMESTAMP_BITS + NONCE_BITS;

    /// Fields are reduced to their bit widths.
    pub fn new(timestamp: u32, nonce: u32) -> Self {
        Self {
            timestamp: timestamp & TIMESTAMP_MASK,
            nonce: nonce & NONCE_MASK,
        }
    }

    pub fn timestamp(&self) -> u32 {
        self.timestamp
    }

    pub fn nonce(&self) -> u32 {
        self.nonce
    }

    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        let v = (CHALLENGE_TYPE << 46) | (u64::from(self.timestamp) << NONCE_BITS) | u64::from(self.nonce);
        let mut out = [0u8; Self::LEN];
        out.copy_from_slice(&v.to_be_bytes()[2..]);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PacketError> {
        if b.len() != Self::LEN {
            return Err(PacketError::Length {
                got: b.len(),
                want: Self::LEN,
            });
        }
        let mut buf = [0u8; 8];
        buf[2..].copy_from_slice(b);
        let v = u64::from_be_bytes(buf);
        let ty = (v >> 46) as u8;
        if u64::from(ty) != CHALLENGE_TYPE {
            return Err(PacketError::MessageType(ty));
        }
        Ok(Self::new((v >> NONCE_BITS) as u32, v as u32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResponsePacket {
    mac: u32,
}

impl ResponsePacket {
    pub const LEN: usize = 5;
    pub const BITS: u32 = 2 + MAC_BITS;

    pub fn new(mac: u32) -> Self {
        Self { mac }
    }

    pub fn mac(&self) -> u32 {
        self.mac
    }

    /// Type and MAC packed MSB-first; the trailing 6 bits are zero.
    pub fn to_bytes(&self) -> [u8; Self::LEN] {
        let v = ((RESPONSE_TYPE << MAC_BITS) | u64::from(self.mac)) << 6;
        let mut out = [0u8; Self::LEN];
        out.copy_from_slice(&v.to_be_bytes()[3..]);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, PacketError> {
        if b.len() != Self::LEN {
            return Err(PacketError::Length {
                got: b.len(),
                want: Self::LEN,
            });
        }
        let mut buf = [0u8; 8];
        buf[3..].copy_from_slice(b);
        let v = u64::from_be_bytes(buf);
        if v & 0x3F != 0 {
            return Err(PacketError::Padding);
        }
        let v = v >> 6;
        let ty = (v >> MAC_BITS) as u8;
        if u64::from(ty) != RESPONSE_TYPE {
            return Err(PacketError::MessageType(ty));
        }
        Ok(Self::new(v as u32))
    }
}

/// Timing rules tying the timestamp width to the key epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RekeyPolicy {
    pub epoch_days: u32,
    pub tick_ms: u32,
    /// Maximum modular distance between a challenge timestamp and the local clock.
    pub window_ticks: u32,
}

impl Default for RekeyPolicy {
    fn default() -> Self {
        Self {
            epoch_days: MAX_EPOCH_DAYS,
            tick_ms: 10,
            window_ticks: 1000,
        }
    }
}

impl RekeyPolicy {
    pub fn ticks_per_day(&self) -> u64 {
        86_400_000 / u64::from(self.tick_ms)
    }

    pub fn wrap_seconds(&self) -> f64 {
        TIMESTAMP_MODULUS as f64 * f64::from(self.tick_ms) / 1000.0
    }

    pub fn epoch_seconds(&self) -> f64 {
        f64::from(self.epoch_days) * 86_400.0
    }

    pub fn window_seconds(&self) -> f64 {
        f64::from(self.window_ticks) * f64::from(self.tick_ms) / 1000.0
    }

    /// True when timestamps cannot repeat inside one key epoch.
    pub fn nonce_safe(&self) -> bool {
        TIMESTAMP_MODULUS >= u64::from(self.epoch_days) * self.ticks_per_day()
    }

    pub fn is_fresh(&self, clock_ticks: u64, timestamp: u32) -> bool {
        modular_distance(timestamp_of(clock_ticks), timestamp) <= self.window_ticks
    }
}

pub fn timestamp_of(clock_ticks: u64) -> u32 {
    (clock_ticks % TIMESTAMP_MODULUS) as u32
}

/// Distance between two timestamps on the 2^29 circle.
pub fn modular_distance(a: u32, b: u32) -> u32 {
    let d = (a.wrapping_sub(b)) & TIMESTAMP_MASK;
    d.min((TIMESTAMP_MODULUS as u32) - d)
}

pub fn make_challenge<R: Rng + ?Sized>(clock_ticks: u64, rng: &mut R) -> ChallengePacket {
    ChallengePacket::new(timestamp_of(clock_ticks), rng.gen::<u32>())
}

/// MAC over the challenge bytes followed by the geocode, keyed by the cell's GeoKey.
pub fn response_mac(ch: &ChallengePacket, cell: &Geocode, key: &GeoKey) -> u32 {
    let mut msg = [0u8; ChallengePacket::LEN + 6];
    msg[..ChallengePacket::LEN].copy_from_slice(&ch.to_bytes());
    msg[ChallengePacket::LEN..].copy_from_slice(cell.as_bytes());
    let rk = RoundKeys::new(&key.key(), DEFAULT_ROUNDS).expect("geokeys are valid rc5 keys");
    cbc_mac(&msg, &rk, MAC_BITS).expect("message is non-empty").value() as u32
}

/// Answers for `own_cell`, or stays silent without a key for it.
pub fn respond(ch: &ChallengePacket, store: &KeyStore, own_cell: &Geocode, now_day: u32) -> Option<ResponsePacket> {
    let key = store.lookup(own_cell, now_day)?;
    Some(ResponsePacket::new(response_mac(ch, own_cell, &key)))
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    #[error("bad-mac")]
    BadMac,
    #[error("stale")]
    Stale,
    #[error("replayed")]
    Replayed,
    #[error("no-key")]
    NoKey,
    /// The challenge was not issued by this verifier or has expired.
    #[error("unsolicited")]
    Unsolicited,
}

/// Accepted (timestamp, nonce, mac) tuples, forgotten once they can no longer be fresh.
#[derive(Debug)]
pub struct ReplayCache {
    retain_ticks: u64,
    seen: HashSet<(u32, u32, u32)>,
    order: VecDeque<(u64, (u32, u32, u32))>,
}

impl ReplayCache {
    pub fn new(policy: &RekeyPolicy) -> Self {
        Self {
            retain_ticks: 2 * u64::from(policy.window_ticks),
            seen: HashSet::new(),
            order: VecDeque::new(),
        }
    }

    /// False when the tuple was already accepted.
    pub fn insert(&mut self, entry: (u32, u32, u32), clock_ticks: u64) -> bool {
        while let Some(&(expires, old)) = self.order.front() {
            if expires >= clock_ticks {
                break;
            }
            self.seen.remove(&old);
            self.order.pop_front();
        }
        if !self.seen.insert(entry) {
            return false;
        }
        self.order.push_back((clock_ticks + self.retain_ticks, entry));
        true
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

/// Checks `resp` against the key for `cell`.
#[allow(clippy::too_many_arguments)]
pub fn verify(
    ch: &ChallengePacket,
    resp: &ResponsePacket,
    store: &KeyStore,
    cell: &Geocode,
    clock_ticks: u64,
    now_day: u32,
    cache: &mut ReplayCache,
    policy: &RekeyPolicy,
) -> Result<(), RejectReason> {
    verify_candidates(
        ch,
        resp,
        store,
        std::slice::from_ref(cell),
        clock_ticks,
        now_day,
        cache,
        policy,
    )
    .map(|_| ())
}

#[allow(clippy::too_many_arguments)]
fn verify_candidates(
    ch: &ChallengePacket,
    resp: &ResponsePacket,
    store: &KeyStore,
    cells: &[Geocode],
    clock_ticks: u64,
    now_day: u32,
    cache: &mut ReplayCache,
    policy: &RekeyPolicy,
) -> Result<Geocode, RejectReason> {
    let keyed: Vec<(Geocode, GeoKey)> = cells
        .iter()
        .filter_map(|c| store.lookup(c, now_day).map(|k| (*c, k)))
        .collect();
    if keyed.is_empty() {
        return Err(RejectReason::NoKey);
    }
    if !policy.is_fresh(clock_ticks, ch.timestamp()) {
        return Err(RejectReason::Stale);
    }
    let (cell, _) = keyed
        .iter()
        .find(|(c, k)| response_mac(ch, c, k) == resp.mac())
        .ok_or(RejectReason::BadMac)?;
    if !cache.insert((ch.timestamp(), ch.nonce(), resp.mac()), clock_ticks) {
        return Err(RejectReason::Replayed);
    }
    Ok(*cell)
}

/// Which cell keys a verifier accepts proofs for.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptPolicy {
    #[default]
    OwnCell,
    OwnAndNeighbors,
}

impl fmt::Display for AcceptPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcceptPolicy::OwnCell => "own_cell",
            AcceptPolicy::OwnAndNeighbors => "own_and_neighbors",
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Outstanding {
    issued: u64,
    cell: Geocode,
}

/// Verifier state: challenges in flight and the replay cache.
#[derive(Debug)]
pub struct Verifier {
    policy: RekeyPolicy,
    accept: AcceptPolicy,
    outstanding: HashMap<(u32, u32), Outstanding>,
    cache: ReplayCache,
}

impl Verifier {
    pub fn new(policy: RekeyPolicy, accept: AcceptPolicy) -> Self {
        Self {
            policy,
            accept,
            outstanding: HashMap::new(),
            cache: ReplayCache::new(&policy),
        }
    }

    pub fn policy(&self) -> &RekeyPolicy {
        &self.policy
    }

    fn expire(&mut self, clock_ticks: u64) {
        let keep = 2 * u64::from(self.policy.window_ticks);
        self.outstanding.retain(|_, o| o.issued + keep >= clock_ticks);
    }

    /// Issues a challenge for `cell`, the verifier's current cell.
    pub fn issue<R: Rng + ?Sized>(&mut self, clock_ticks: u64, cell: Geocode, rng: &mut R) -> ChallengePacket {
        self.expire(clock_ticks);
        loop {
            let ch = make_challenge(clock_ticks, rng);
            let id = (ch.timestamp(), ch.nonce());
            if let std::collections::hash_map::Entry::Vacant(e) = self.outstanding.entry(id) {
                e.insert(Outstanding {
                    issued: clock_ticks,
                    cell,
                });
                return ch;
            }
        }
    }

    /// Cell the challenge was issued for, if it is still outstanding.
    pub fn challenged_cell(&self, ch: &ChallengePacket) -> Option<Geocode> {
        self.outstanding.get(&(ch.timestamp(), ch.nonce())).map(|o| o.cell)
    }

    /// Returns the cell whose key verified the response.
    pub fn check(
        &mut self,
        ch: &ChallengePacket,
        resp: &ResponsePacket,
        store: &KeyStore,
        clock_ticks: u64,
        now_day: u32,
    ) -> Result<Geocode, RejectReason> {
        self.expire(clock_ticks);
        let out = *self
            .outstanding
            .get(&(ch.timestamp(), ch.nonce()))
            .ok_or(RejectReason::Unsolicited)?;
        let mut cells = vec![out.cell];
        if self.accept == AcceptPolicy::OwnAndNeighbors {
            cells.extend(neighbors(&out.cell));
        }
        verify_candidates(
            ch,
            resp,
            store,
            &cells,
            clock_ticks,
            now_day,
            &mut self.cache,
            &self.policy,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kdf::{KeyDeriver, TimeInterval};
    use crate::keystore::KeyRecord;
    use crate::secrets::{CeremonyId, MasterKey};
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn store(cells: &[&str]) -> KeyStore {
        let d = KeyDeriver::new(&MasterKey::from_bytes([0; 255], CeremonyId::default()));
        let t = TimeInterval::new(0, 60).unwrap();
        let recs: Vec<KeyRecord> = cells
            .iter()
            .map(|c| KeyRecord::from(&d.derive(&c.parse().unwrap(), &t)))
            .collect();
        KeyStore::from_records(&recs)
    }

    #[test]
    fn challenge_layout() {
        let ch = ChallengePacket::new(5, 1);
        assert_eq!(ch.to_bytes(), [0x40, 0x00, 0x00, 0x0a, 0x00, 0x01]);
        assert_eq!(ChallengePacket::from_bytes(&ch.to_bytes()).unwrap(), ch);
        let full = ChallengePacket::new(u32::MAX, u32::MAX);
        assert_eq!(full.to_bytes(), [0x7F, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF]);
        assert_eq!(
            ChallengePacket::from_bytes(&[0xC0, 0, 0, 0, 0, 0]),
            Err(PacketError::MessageType(3))
        );
        const { assert!(ChallengePacket::BITS <= PACKET_BUDGET_BITS) };
    }

    #[test]
    fn response_layout() {
        let r = ResponsePacket::new(0xDEADBEEF);
        let b = r.to_bytes();
        assert_eq!(b[0] >> 6, 0b10);
        assert_eq!(ResponsePacket::from_bytes(&b).unwrap(), r);
        let mut bad = b;
        bad[4] |= 1;
        assert_eq!(ResponsePacket::from_bytes(&bad), Err(PacketError::Padding));
        const { assert!(ResponsePacket::BITS <= PACKET_BUDGET_BITS) };
    }

    #[test]
    fn timestamps_wrap() {
        let mut rng = StdRng::seed_from_u64(1);
        assert_eq!(make_challenge(0, &mut rng).timestamp(), 0);
        assert_eq!(make_challenge(TIMESTAMP_MODULUS, &mut rng).timestamp(), 0);
        assert_eq!(modular_distance(0, TIMESTAMP_MASK), 1);
        assert_eq!(modular_distance(10, 3), 7);
    }

    #[test]
    fn policy_arithmetic() {
        let p = RekeyPolicy::default();
        assert!((p.wrap_seconds() - 5_368_709.12).abs() < 1e-6);
        assert_eq!(p.epoch_seconds(), 5_184_000.0);
        assert!(p.nonce_safe());
        assert!(!RekeyPolicy { epoch_days: 63, ..p }.nonce_safe());
        assert_eq!(p.window_seconds(), 10.0);
    }

    #[test]
    fn mac_vector() {
        // Zero master key, cell 222222, days [0, 60).
        let s = store(&["222222"]);
        let cell = "222222".parse().unwrap();
        let key = s.lookup(&cell, 0).unwrap();
        assert_eq!(response_mac(&ChallengePacket::new(5, 1), &cell, &key), 0x08019af5);
    }

    #[test]
    fn accept_replay_stale_badmac_nokey() {
        let s = store(&["6FG222", "6FG223"]);
        let c: Geocode = "6FG222".parse().unwrap();
        let p = RekeyPolicy::default();
        let mut cache = ReplayCache::new(&p);
        let ch = ChallengePacket::new(100, 7);
        let r = respond(&ch, &s, &c, 3).unwrap();
        assert_eq!(verify(&ch, &r, &s, &c, 150, 3, &mut cache, &p), Ok(()));
        assert_eq!(
            verify(&ch, &r, &s, &c, 160, 3, &mut cache, &p),
            Err(RejectReason::Replayed)
        );
        assert_eq!(
            verify(&ch, &r, &s, &c, 100 + 1001, 3, &mut cache, &p),
            Err(RejectReason::Stale)
        );

        let other = "6FG223".parse().unwrap();
        let wrong = respond(&ch, &s, &other, 3).unwrap();
        assert_eq!(
            verify(&ch, &wrong, &s, &c, 150, 3, &mut cache, &p),
            Err(RejectReason::BadMac)
        );
        let nowhere = "6FG224".parse().unwrap();
        assert!(respond(&ch, &s, &nowhere, 3).is_none());
        assert_eq!(
            verify(&ch, &r, &s, &nowhere, 150, 3, &mut cache, &p),
            Err(RejectReason::NoKey)
        );
        assert_eq!(
            verify(&ch, &r, &s, &c, 150, 60, &mut cache, &p),
            Err(RejectReason::NoKey)
        );
    }

    #[test]
    fn replay_cache_forgets() {
        let p = RekeyPolicy::default();
        let mut cache = ReplayCache::new(&p);
        assert!(cache.insert((1, 2, 3), 0));
        assert!(!cache.insert((1, 2, 3), 2000));
        assert!(cache.insert((9, 9, 9), 2001));
        assert_eq!(cache.len(), 1);
        assert!(cache.insert((1, 2, 3), 2002));
    }

    #[test]
    fn verifier_tracks_outstanding() {
        let s = store(&["6FG222", "6FG223"]);
        let c: Geocode = "6FG222".parse().unwrap();
        let n: Geocode = "6FG223".parse().unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let mut own = Verifier::new(RekeyPolicy::default(), AcceptPolicy::OwnCell);
        let mut wide = Verifier::new(RekeyPolicy::default(), AcceptPolicy::OwnAndNeighbors);

        let ch = own.issue(500, c, &mut rng);
        let from_neighbor = respond(&ch, &s, &n, 0).unwrap();
        assert_eq!(own.check(&ch, &from_neighbor, &s, 520, 0), Err(RejectReason::BadMac));

        let ch2 = wide.issue(500, c, &mut rng);
        let r2 = respond(&ch2, &s, &n, 0).unwrap();
        assert_eq!(wide.check(&ch2, &r2, &s, 520, 0), Ok(n));
        assert_eq!(wide.check(&ch2, &r2, &s, 530, 0), Err(RejectReason::Replayed));

        let foreign = ChallengePacket::new(ch.timestamp(), ch.nonce() ^ 1);
        let r3 = respond(&foreign, &s, &c, 0).unwrap();
        assert_eq!(own.check(&foreign, &r3, &s, 520, 0), Err(RejectReason::Unsolicited));
        // Expired challenges are forgotten.
        let r4 = respond(&ch, &s, &c, 0).unwrap();
        assert_eq!(own.check(&ch, &r4, &s, 500 + 2001, 0), Err(RejectReason::Unsolicited));
    }

    #[test]
    fn nonces_differ() {
        let mut rng = StdRng::seed_from_u64(9);
        let mut v = Verifier::new(RekeyPolicy::default(), AcceptPolicy::OwnCell);
        let c = "6FG222".parse().unwrap();
        let issued: HashSet<_> = (0..2000).map(|_| v.issue(42, c, &mut rng)).collect();
        assert_eq!(issued.len(), 2000);
    }
}

//! Device-side key storage and the bundle file format.
//!
//! Bundle layout (all integers big-endian):
//!
//! ```text
//! "GEOK" | version u8 | licensee id [16] | record count u64 |
//! records (46 bytes each) | crc32 of all prior bytes
//! ```
//!
//! Record layout: geocode ASCII [6] | start day u32 | end day u32 | key [32].
//!
//! A [`KeyStore`] keeps an immutable index behind an `Arc` and swaps in a new
//! one after each import or prune, so readers see either the old or the new
//! state and never a partial import. Persistent stores append every imported
//! bundle verbatim to a log file and replay it on open; pruning compacts the
//! log into a single bundle.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geocell::Geocode;
use crate::kdf::{tub_key, GeoKey, TimeInterval, GEOKEY_LEN};

pub const BUNDLE_MAGIC: &[u8; 4] = b"GEOK";
pub const BUNDLE_VERSION: u8 = 1;
pub const RECORD_LEN: usize = 46;
pub const HEADER_LEN: usize = 29;
pub const CHECKSUM_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum KeystoreError {
    #[error("malformed bundle: {0}")]
    Format(&'static str),
    #[error("bundle checksum mismatch")]
    Checksum,
    #[error("bundle declared {declared} records but {written} were written")]
    CountMismatch { declared: u64, written: u64 },
    #[error("keystore io: {0}")]
    Io(#[from] io::Error),
}

/// 16-byte identity of a licensee or sub-authority.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct EntityId(pub [u8; 16]);

impl fmt::Debug for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EntityId({})", hex::encode(self.0))
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for EntityId {
    type Err = hex::FromHexError;

    /// 32 hex digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut id = [0u8; 16];
        hex::decode_to_slice(s, &mut id)?;
        Ok(Self(id))
    }
}

impl TryFrom<String> for EntityId {
    type Error = hex::FromHexError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EntityId> for String {
    fn from(id: EntityId) -> Self {
        id.to_string()
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct KeyRecord {
    pub geocode: Geocode,
    pub interval: TimeInterval,
    pub key: [u8; GEOKEY_LEN],
}

impl fmt::Debug for KeyRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyRecord")
            .field("geocode", &self.geocode)
            .field("interval", &self.interval)
            .finish_non_exhaustive()
    }
}

impl From<&GeoKey> for KeyRecord {
    fn from(g: &GeoKey) -> Self {
        Self {
            geocode: g.geocode,
            interval: g.interval,
            key: tub_key(g),
        }
    }
}

impl KeyRecord {
    pub fn to_bytes(&self) -> [u8; RECORD_LEN] {
        let mut b = [0u8; RECORD_LEN];
        b[..6].copy_from_slice(self.geocode.as_bytes());
        b[6..10].copy_from_slice(&self.interval.start_day().to_be_bytes());
        b[10..14].copy_from_slice(&self.interval.end_day().to_be_bytes());
        b[14..].copy_from_slice(&self.key);
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, KeystoreError> {
        if b.len() != RECORD_LEN {
            return Err(KeystoreError::Format("record length"));
        }
        let geocode = Geocode::from_bytes(&b[..6]).map_err(|_| KeystoreError::Format("record geocode"))?;
        let start = u32::from_be_bytes(b[6..10].try_into().expect("4 bytes"));
        let end = u32::from_be_bytes(b[10..14].try_into().expect("4 bytes"));
        let interval = TimeInterval::new(start, end).map_err(|_| KeystoreError::Format("record interval"))?;
        Ok(Self {
            geocode,
            interval,
            key: b[14..].try_into().expect("32 bytes"),
        })
    }

    pub fn to_geokey(&self) -> GeoKey {
        GeoKey::from_parts(self.geocode, self.interval, self.key)
    }
}

/// Serialized size of a bundle holding `n_records` records.
pub fn size_report(n_records: u64) -> u64 {
    (HEADER_LEN + CHECKSUM_LEN) as u64 + RECORD_LEN as u64 * n_records
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub licensee: EntityId,
    pub records: Vec<KeyRecord>,
}

impl Bundle {
    pub fn new(licensee: EntityId, records: Vec<KeyRecord>) -> Self {
        Self { licensee, records }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(size_report(self.records.len() as u64) as usize);
        let mut w = BundleWriter::new(&mut out, self.licensee, self.records.len() as u64)
            .expect("writing to a Vec cannot fail");
        for r in &self.records {
            w.push(r).expect("writing to a Vec cannot fail");
        }
        w.finish().expect("record count matches");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, KeystoreError> {
        let (bundle, used) = Self::parse_prefix(bytes)?;
        if used != bytes.len() {
            return Err(KeystoreError::Format("trailing bytes"));
        }
        Ok(bundle)
    }

    /// Parses one bundle from the start of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn parse_prefix(bytes: &[u8]) -> Result<(Self, usize), KeystoreError> {
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(KeystoreError::Format("truncated header"));
        }
        if &bytes[..4] != BUNDLE_MAGIC {
            return Err(KeystoreError::Format("bad magic"));
        }
        if bytes[4] != BUNDLE_VERSION {
            return Err(KeystoreError::Format("unsupported version"));
        }
        let licensee = EntityId(bytes[5..21].try_into().expect("16 bytes"));
        let count = u64::from_be_bytes(bytes[21..29].try_into().expect("8 bytes"));
        let total = count
            .checked_mul(RECORD_LEN as u64)
            .and_then(|n| n.checked_add((HEADER_LEN + CHECKSUM_LEN) as u64))
            .filter(|&n| n <= bytes.len() as u64)
            .ok_or(KeystoreError::Format("record count exceeds data"))? as usize;
        let body = &bytes[..total - CHECKSUM_LEN];
        let stored = u32::from_be_bytes(bytes[total - CHECKSUM_LEN..total].try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(KeystoreError::Checksum);
        }
        let records = body[HEADER_LEN..]
            .chunks_exact(RECORD_LEN)
            .map(KeyRecord::from_bytes)
            .collect::<Result<Vec<_>, _>>()?;
        Ok((Self { licensee, records }, total))
    }
}

/// Streams a bundle whose record count is known up front, without holding
/// the records in memory.
pub struct BundleWriter<W: Write> {
    out: W,
    crc: crc32fast::Hasher,
    declared: u64,
    written: u64,
}

impl<W: Write> BundleWriter<W> {
    pub fn new(mut out: W, licensee: EntityId, count: u64) -> Result<Self, KeystoreError> {
        let mut header = [0u8; HEADER_LEN];
        header[..4].copy_from_slice(BUNDLE_MAGIC);
        header[4] = BUNDLE_VERSION;
        header[5..21].copy_from_slice(&licensee.0);
        header[21..].copy_from_slice(&count.to_be_bytes());
        out.write_all(&header)?;
        let mut crc = crc32fast::Hasher::new();
        crc.update(&header);
        Ok(Self {
            out,
            crc,
            declared: count,
            written: 0,
        })
    }

    pub fn push(&mut self, record: &KeyRecord) -> Result<(), KeystoreError> {
        self.push_raw(&record.to_bytes())
    }

    /// Appends an already serialized record.
    pub fn push_raw(&mut self, record: &[u8; RECORD_LEN]) -> Result<(), KeystoreError> {
        if self.written == self.declared {
            return Err(KeystoreError::CountMismatch {
                declared: self.declared,
                written: self.written + 1,
            });
        }
        self.out.write_all(record)?;
        self.crc.update(record);
        self.written += 1;
        Ok(())
    }

    /// Writes the checksum and returns the sink.
    pub fn finish(mut self) -> Result<W, KeystoreError> {
        if self.written != self.declared {
            return Err(KeystoreError::CountMismatch {
                declared: self.declared,
                written: self.written,
            });
        }
        let crc = self.crc.clone().finalize();
        self.out.write_all(&crc.to_be_bytes())?;
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImportSummary {
    pub records: usize,
    pub added: usize,
    pub replaced: usize,
}

#[derive(Clone)]
struct Slot {
    interval: TimeInterval,
    key: [u8; GEOKEY_LEN],
}

type Index = BTreeMap<Geocode, Vec<Slot>>;

pub struct KeyStore {
    index: RwLock<Arc<Index>>,
    /// Serializes writers; holds the log path of a persistent store.
    writer: Mutex<Option<PathBuf>>,
}

impl fmt::Debug for KeyStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyStore").field("records", &self.len()).finish()
    }
}

impl Default for KeyStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl KeyStore {
    pub fn in_memory() -> Self {
        Self {
            index: RwLock::new(Arc::new(Index::new())),
            writer: Mutex::new(None),
        }
    }

    /// Opens or creates a persistent store backed by an append-only log.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, KeystoreError> {
        let path = path.as_ref().to_path_buf();
        let mut index = Index::new();
        if path.exists() {
            let data = fs::read(&path)?;
            let mut rest = &data[..];
            while !rest.is_empty() {
                let (bundle, used) = Bundle::parse_prefix(rest)?;
                merge(&mut index, &bundle.records);
                rest = &rest[used..];
            }
        }
        Ok(Self {
            index: RwLock::new(Arc::new(index)),
            writer: Mutex::new(Some(path)),
        })
    }

    /// Builds an in-memory store from records directly.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a KeyRecord>) -> Self {
        let records: Vec<KeyRecord> = records.into_iter().cloned().collect();
        let mut index = Index::new();
        merge(&mut index, &records);
        Self {
            index: RwLock::new(Arc::new(index)),
            writer: Mutex::new(None),
        }
    }

    fn snapshot(&self) -> Arc<Index> {
        self.index.read().expect("index lock poisoned").clone()
    }

    fn swap(&self, next: Index) {
        *self.index.write().expect("index lock poisoned") = Arc::new(next);
    }

    /// Validates the whole bundle before touching the store; a bad bundle
    /// leaves it unchanged.
    pub fn import_bundle(&self, bytes: &[u8]) -> Result<ImportSummary, KeystoreError> {
        let bundle = Bundle::from_bytes(bytes)?;
        let writer = self.writer.lock().expect("writer lock poisoned");
        let mut next = (*self.snapshot()).clone();
        let (added, replaced) = merge(&mut next, &bundle.records);
        if let Some(path) = writer.as_ref() {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(bytes)?;
            f.sync_data()?;
        }
        self.swap(next);
        Ok(ImportSummary {
            records: bundle.records.len(),
            added,
            replaced,
        })
    }

    /// The key for `geocode` valid on `day`. When intervals overlap, the one
    /// starting latest wins.
    pub fn lookup(&self, geocode: &Geocode, day: u32) -> Option<GeoKey> {
        let index = self.snapshot();
        index
            .get(geocode)?
            .iter()
            .rev()
            .find(|s| s.interval.contains(day))
            .map(|s| GeoKey::from_parts(*geocode, s.interval, s.key))
    }

    /// Drops every record whose interval has ended by `now_day`.
    pub fn prune_expired(&self, now_day: u32) -> Result<usize, KeystoreError> {
        let writer = self.writer.lock().expect("writer lock poisoned");
        let mut next = (*self.snapshot()).clone();
        let mut removed = 0;
        next.retain(|_, slots| {
            let before = slots.len();
            slots.retain(|s| s.interval.end_day() > now_day);
            removed += before - slots.len();
            !slots.is_empty()
        });
        if removed > 0 {
            if let Some(path) = writer.as_ref() {
                let compacted = export_index(&next, EntityId::default()).to_bytes();
                let tmp = path.with_extension("compact");
                let mut f = File::create(&tmp)?;
                f.write_all(&compacted)?;
                f.sync_all()?;
                fs::rename(&tmp, path)?;
            }
            self.swap(next);
        }
        Ok(removed)
    }

    /// All records in canonical order (geocode, then interval).
    pub fn export(&self, licensee: EntityId) -> Bundle {
        export_index(&self.snapshot(), licensee)
    }

    pub fn len(&self) -> usize {
        self.snapshot().values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshot().is_empty()
    }

    pub fn cells(&self) -> Vec<Geocode> {
        self.snapshot().keys().copied().collect()
    }
}

fn merge(index: &mut Index, records: &[KeyRecord]) -> (usize, usize) {
    let (mut added, mut replaced) = (0, 0);
    for r in records {
        let slots = index.entry(r.geocode).or_default();
        match slots.binary_search_by(|s| s.interval.cmp(&r.interval)) {
            Ok(i) => {
                slots[i].key = r.key;
                replaced += 1;
            }
            Err(i) => {
                slots.insert(
                    i,
                    Slot {
                        interval: r.interval,
                        key: r.key,
                    },
                );
                added += 1;
            }
        }
    }
    (added, replaced)
}

fn export_index(index: &Index, licensee: EntityId) -> Bundle {
    let records = index
        .iter()
        .flat_map(|(code, slots)| {
            slots.iter().map(move |s| KeyRecord {
                geocode: *code,
                interval: s.interval,
                key: s.key,
            })
        })
        .collect();
    Bundle { licensee, records }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(code: &str, s: u32, e: u32, fill: u8) -> KeyRecord {
        KeyRecord {
            geocode: code.parse().unwrap(),
            interval: TimeInterval::new(s, e).unwrap(),
            key: [fill; 32],
        }
    }

    fn bundle(records: Vec<KeyRecord>) -> Vec<u8> {
        Bundle::new(EntityId([7; 16]), records).to_bytes()
    }

    #[test]
    fn record_layout() {
        let b = rec("6FG222", 1, 2, 0xAB).to_bytes();
        assert_eq!(&b[..6], b"6FG222");
        assert_eq!(b[6..14], [0, 0, 0, 1, 0, 0, 0, 2]);
        assert_eq!(b[14..], [0xAB; 32]);
    }

    #[test]
    fn sizes() {
        assert_eq!(size_report(0), 33);
        assert_eq!(size_report(9), 447);
        assert_eq!(size_report(25_920_000), 1_192_320_033);
        assert_eq!(bundle(vec![]).len(), 33);
        assert_eq!(bundle(vec![rec("6FG222", 0, 60, 1)]).len(), 79);
    }

    #[test]
    fn empty_bundle_is_noop() {
        let store = KeyStore::in_memory();
        let s = store.import_bundle(&bundle(vec![])).unwrap();
        assert_eq!(s, ImportSummary::default());
        assert!(store.is_empty());
    }

    #[test]
    fn corrupt_bundle_rejected_atomically() {
        let store = KeyStore::in_memory();
        store.import_bundle(&bundle(vec![rec("6FG222", 0, 60, 1)])).unwrap();
        let mut bytes = bundle(vec![rec("6FG223", 0, 60, 2), rec("6FG224", 0, 60, 3)]);
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        assert!(matches!(store.import_bundle(&bytes), Err(KeystoreError::Checksum)));
        assert_eq!(store.len(), 1);

        let mut bad_magic = bundle(vec![]);
        bad_magic[0] = b'X';
        assert!(matches!(store.import_bundle(&bad_magic), Err(KeystoreError::Format(_))));
        let mut bad_version = bundle(vec![]);
        bad_version[4] = 9;
        assert!(matches!(
            store.import_bundle(&bad_version),
            Err(KeystoreError::Format(_))
        ));
        let truncated = &bundle(vec![rec("6FG222", 0, 60, 1)])[..50];
        assert!(store.import_bundle(truncated).is_err());
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn reimport_idempotent_and_overwrite() {
        let store = KeyStore::in_memory();
        let b = bundle(vec![rec("6FG222", 0, 60, 1), rec("6FG223", 0, 60, 2)]);
        store.import_bundle(&b).unwrap();
        let first = store.export(EntityId::default()).to_bytes();
        let s = store.import_bundle(&b).unwrap();
        assert_eq!((s.added, s.replaced), (0, 2));
        assert_eq!(store.export(EntityId::default()).to_bytes(), first);

        store.import_bundle(&bundle(vec![rec("6FG222", 0, 60, 9)])).unwrap();
        assert_eq!(store.lookup(&"6FG222".parse().unwrap(), 5).unwrap().key(), [9; 32]);
    }

    #[test]
    fn lookup_boundaries() {
        let store = KeyStore::from_records(&[rec("6FG222", 0, 60, 1), rec("6FG222", 60, 120, 2)]);
        let c: Geocode = "6FG222".parse().unwrap();
        assert_eq!(store.lookup(&c, 59).unwrap().key(), [1; 32]);
        assert_eq!(store.lookup(&c, 60).unwrap().key(), [2; 32]);
        assert!(store.lookup(&c, 120).is_none());
        assert!(store.lookup(&"6FG223".parse().unwrap(), 5).is_none());

        let single = KeyStore::from_records(&[rec("6FG222", 0, 60, 1)]);
        assert!(single.lookup(&c, 60).is_none());
    }

    #[test]
    fn pruning() {
        let store = KeyStore::in_memory();
        assert_eq!(store.prune_expired(100).unwrap(), 0);
        let store = KeyStore::from_records(&[rec("6FG222", 0, 9, 1), rec("6FG223", 0, 10, 2), rec("6FG224", 0, 11, 3)]);
        // Ended yesterday, ends today (exclusive), ends tomorrow.
        assert_eq!(store.prune_expired(10).unwrap(), 2);
        assert_eq!(store.len(), 1);
        assert!(store.lookup(&"6FG223".parse().unwrap(), 9).is_none());
        assert!(store.lookup(&"6FG224".parse().unwrap(), 10).is_some());
    }

    #[test]
    fn writer_count_enforced() {
        let mut out = Vec::new();
        let w = BundleWriter::new(&mut out, EntityId::default(), 2).unwrap();
        assert!(matches!(
            w.finish(),
            Err(KeystoreError::CountMismatch {
                declared: 2,
                written: 0
            })
        ));
        let mut out = Vec::new();
        let mut w = BundleWriter::new(&mut out, EntityId::default(), 0).unwrap();
        assert!(w.push(&rec("6FG222", 0, 1, 0)).is_err());
    }

    #[test]
    fn persistent_replay_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keys.log");
        {
            let store = KeyStore::open(&path).unwrap();
            store.import_bundle(&bundle(vec![rec("6FG222", 0, 10, 1)])).unwrap();
            store.import_bundle(&bundle(vec![rec("6FG223", 0, 60, 2)])).unwrap();
        }
        let store = KeyStore::open(&path).unwrap();
        assert_eq!(store.len(), 2);
        assert_eq!(store.prune_expired(20).unwrap(), 1);
        drop(store);
        let store = KeyStore::open(&path).unwrap();
        assert_eq!(store.cells(), vec!["6FG223".parse().unwrap()]);
        assert_eq!(fs::metadata(&path).unwrap().len(), size_report(1));
    }

    #[test]
    fn entity_id_text() {
        let id: EntityId = "000102030405060708090a0b0c0d0e0f".parse().unwrap();
        assert_eq!(id.0[15], 15);
        assert_eq!(id.to_string(), "000102030405060708090a0b0c0d0e0f");
        assert!("abc".parse::<EntityId>().is_err());
    }
}

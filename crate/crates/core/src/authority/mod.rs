//! License issuance and delegation.
//!
//! The authority turns a license request (an area plus a day span) into a
//! bundle of derived keys, one per covered cell and 60-day epoch. Delegation
//! hands a sub-authority the derived keys for a fixed set of cells; neither
//! path ever emits master-key bytes.

pub mod audit;
pub mod service;

use std::collections::BTreeSet;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zeroize::Zeroize;

use crate::geocell::{cover_area, enumerate_all, GeoError, GeoPoint, Geocode, CELL_COUNT};
use crate::kdf::{epochs_for, KdfError, KeyDeriver, TimeInterval};
use crate::keystore::{Bundle, BundleWriter, EntityId, KeyRecord, KeystoreError, RECORD_LEN};
use crate::secrets::MasterKey;

pub use audit::{AuditEntry, AuditLog};

#[derive(Debug, Error)]
pub enum AuthorityError {
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Kdf(#[from] KdfError),
    #[error("request covers no cells")]
    EmptyCoverage,
    #[error("master key not loaded; the authority cannot derive keys")]
    Unavailable,
    #[error("audit log write failed: {0}")]
    Audit(#[from] std::io::Error),
}

/// Requested area: a polygon to cover, or an explicit list of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Area {
    Polygon(Vec<GeoPoint>),
    Cells(Vec<Geocode>),
}

/// Licensed day span, end exclusive. May exceed one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start_day: u32,
    pub end_day: u32,
}

impl Span {
    pub fn epochs(&self) -> Result<Vec<TimeInterval>, KdfError> {
        epochs_for(self.start_day, self.end_day)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LicenseRequest {
    pub licensee: EntityId,
    pub area: Area,
    pub span: Span,
    /// Recorded in the audit log, never interpreted.
    #[serde(default)]
    pub purpose: String,
}

impl LicenseRequest {
    /// Cells the request authorizes, in canonical order.
    pub fn coverage(&self) -> Result<BTreeSet<Geocode>, AuthorityError> {
        let cells = match &self.area {
            Area::Polygon(points) => cover_area(points)?,
            Area::Cells(list) => list.iter().copied().collect(),
        };
        if cells.is_empty() {
            return Err(AuthorityError::EmptyCoverage);
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delegation {
    pub subauthority: EntityId,
    pub cells: BTreeSet<Geocode>,
    pub span: Span,
}

pub struct Authority {
    deriver: Option<Arc<KeyDeriver>>,
    audit: Arc<AuditLog>,
}

impl Authority {
    /// An authority without a master key; derivations fail until one is loaded.
    pub fn new(audit: Arc<AuditLog>) -> Self {
        Self { deriver: None, audit }
    }

    pub fn with_master_key(mk: &MasterKey, audit: Arc<AuditLog>) -> Self {
        Self {
            deriver: Some(Arc::new(KeyDeriver::new(mk))),
            audit,
        }
    }

    pub fn load_master_key(&mut self, mk: &MasterKey) {
        self.deriver = Some(Arc::new(KeyDeriver::new(mk)));
    }

    pub fn audit(&self) -> &Arc<AuditLog> {
        &self.audit
    }

    fn deriver(&self) -> Result<&KeyDeriver, AuthorityError> {
        self.deriver.as_deref().ok_or(AuthorityError::Unavailable)
    }

    pub fn issue(&self, req: &LicenseRequest) -> Result<Bundle, AuthorityError> {
        let deriver = self.deriver()?;
        let cells = req.coverage()?;
        let epochs = req.span.epochs()?;
        let bundle = Bundle::new(req.licensee, derive_records(deriver, &cells, &epochs));
        self.audit.record(&AuditEntry {
            action: "issue",
            entity: req.licensee,
            cells: cells.len(),
            epochs: epochs.len(),
            records: bundle.records.len(),
            span: req.span,
            note: req.purpose.clone(),
        })?;
        Ok(bundle)
    }

    pub fn delegate(&self, d: &Delegation) -> Result<Bundle, AuthorityError> {
        let deriver = self.deriver()?;
        if d.cells.is_empty() {
            return Err(AuthorityError::EmptyCoverage);
        }
        let epochs = d.span.epochs()?;
        let bundle = Bundle::new(d.subauthority, derive_records(deriver, &d.cells, &epochs));
        self.audit.record(&AuditEntry {
            action: "delegate",
            entity: d.subauthority,
            cells: d.cells.len(),
            epochs: epochs.len(),
            records: bundle.records.len(),
            span: d.span,
            note: String::new(),
        })?;
        Ok(bundle)
    }
}

fn derive_records(deriver: &KeyDeriver, cells: &BTreeSet<Geocode>, epochs: &[TimeInterval]) -> Vec<KeyRecord> {
    let pairs: Vec<(Geocode, TimeInterval)> = cells
        .iter()
        .flat_map(|c| epochs.iter().map(move |t| (*c, *t)))
        .collect();
    pairs
        .par_iter()
        .map(|(c, t)| {
            let mut key = [0u8; 32];
            deriver.derive_into(c, t, &mut key);
            KeyRecord {
                geocode: *c,
                interval: *t,
                key,
            }
        })
        .collect()
}

/// Streams a bundle holding one key per cell for `interval`, in
/// lexicographic cell order, without materializing it. `limit` caps the
/// number of cells. Returns the sink and the record count.
pub fn stream_keyspace<W: Write>(
    deriver: &KeyDeriver,
    interval: &TimeInterval,
    licensee: EntityId,
    limit: Option<u64>,
    out: W,
) -> Result<(W, u64), KeystoreError> {
    const BATCH: usize = 1 << 16;
    const CHUNK: usize = 1 << 10;
    let total = limit.map_or(CELL_COUNT, |l| l.min(CELL_COUNT));
    let mut writer = BundleWriter::new(out, licensee, total)?;
    let mut buf = vec![[0u8; RECORD_LEN]; BATCH];
    let mut start = 0u64;
    while start < total {
        let n = (total - start).min(BATCH as u64) as usize;
        buf[..n].par_chunks_mut(CHUNK).enumerate().for_each(|(ci, chunk)| {
            let first = start as usize + ci * CHUNK;
            let mut key = [0u8; 32];
            for (slot, code) in chunk.iter_mut().zip(enumerate_all().skip(first)) {
                deriver.derive_into(&code, interval, &mut key);
                *slot = KeyRecord {
                    geocode: code,
                    interval: *interval,
                    key,
                }
                .to_bytes();
            }
            key.zeroize();
        });
        for rec in &buf[..n] {
            writer.push_raw(rec)?;
        }
        start += n as u64;
    }
    buf.iter_mut().for_each(|r| r.zeroize());
    Ok((writer.finish()?, total))
}

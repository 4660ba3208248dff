//! Location-bound symmetric keys for underwater assets.
//!
//! The globe is cut into 0.05° cells named by six-character geocodes. A
//! 2040-bit RC5 master key, assembled from eleven contributions and held as a
//! 6-of-11 threshold sharing, derives one 256-bit key per cell and epoch of at
//! most 60 days. Assets carrying the keys for the cells they pass through
//! authorize each other with a short acoustic challenge-response.
//!
//! Modules, bottom up: [`geocell`] (grid and coverage), [`cipher`] (RC5, CBC,
//! CBC-MAC), [`secrets`] (ceremony and Shamir sharing), [`kdf`] (key
//! derivation), [`keystore`] (bundles and local stores), [`authority`]
//! (issuance service) and [`authzsim`] (protocol and simulator).

pub mod authority;
pub mod authzsim;
pub mod cipher;
pub mod geocell;
pub mod kdf;
pub mod keystore;
pub mod secrets;
mod wire;

pub use authority::{Area, Authority, AuthorityError, Delegation, LicenseRequest, Span};
pub use cipher::{cbc_mac, CipherError, MacTag, Rc5Params, RoundKeys};
pub use geocell::{cover_area, cover_route, decode, encode, neighbors, GeoError, GeoPoint, Geocode};
pub use kdf::{derive_geokey, tub_key, GeoKey, KdfError, KeyDeriver, TimeInterval};
pub use keystore::{Bundle, BundleWriter, EntityId, KeyRecord, KeyStore, KeystoreError};
pub use secrets::{assemble_master_key, combine, split, Contribution, MasterKey, SecretsError, Share};

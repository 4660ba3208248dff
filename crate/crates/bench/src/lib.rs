//! Shared fixtures for the benchmarks.

use geokey_core::geocell::Geocode;
use geokey_core::kdf::{KeyDeriver, TimeInterval};
use geokey_core::secrets::{CeremonyId, MasterKey, MASTER_KEY_LEN};

/// A fixed, non-trivial master key. Never use outside benchmarks.
pub fn bench_master_key() -> MasterKey {
    let mut k = [0u8; MASTER_KEY_LEN];
    for (i, b) in k.iter_mut().enumerate() {
        *b = (i as u8).wrapping_mul(31).wrapping_add(7);
    }
    MasterKey::from_bytes(k, CeremonyId([0xBE; 16]))
}

pub fn bench_deriver() -> KeyDeriver {
    KeyDeriver::new(&bench_master_key())
}

pub fn epoch() -> TimeInterval {
    TimeInterval::new(20_000, 20_060).expect("valid epoch")
}

pub fn cell() -> Geocode {
    "6FG222".parse().expect("valid geocode")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_stable() {
        let a = bench_deriver().derive(&cell(), &epoch()).key();
        let b = bench_deriver().derive(&cell(), &epoch()).key();
        assert_eq!(a, b);
        assert_ne!(a, [0; 32]);
    }
}

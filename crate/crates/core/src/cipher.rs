//! RC5 with 32-bit words, plus the deterministic CBC and CBC-MAC modes built
//! on it.
//!
//! Words are loaded little-endian from each 8-byte block. Keys may be up to
//! 255 bytes, which is what makes a 2040-bit master key possible.

use thiserror::Error;
use zeroize::Zeroize;

pub const BLOCK_LEN: usize = 8;
pub const MAX_KEY_LEN: usize = 255;
pub const DEFAULT_ROUNDS: u32 = 20;
/// Round count of the published RC5-32/12/b test vectors.
pub const REFERENCE_ROUNDS: u32 = 12;
pub const MIN_MAC_BITS: u32 = 16;
pub const MAX_MAC_BITS: u32 = 64;

const P32: u32 = 0xB7E1_5163;
const Q32: u32 = 0x9E37_79B9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CipherError {
    #[error("key length {0} outside 1..={MAX_KEY_LEN} bytes")]
    InvalidKeyLength(usize),
    #[error("key length {actual} does not match configured {expected}")]
    KeyLengthMismatch { expected: usize, actual: usize },
    #[error("round count must be at least 1")]
    InvalidRounds,
    #[error("input of {0} bytes is not a whole number of 8-byte blocks")]
    Misaligned(usize),
    #[error("input is empty")]
    Empty,
    #[error("MAC width {0} outside {MIN_MAC_BITS}..={MAX_MAC_BITS} bits")]
    InvalidMacBits(u32),
}

/// RC5 parameters; the word size is fixed at 32 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rc5Params {
    rounds: u32,
    key_len: usize,
}

impl Rc5Params {
    pub const WORD_BITS: u32 = 32;

    pub fn new(rounds: u32, key_len: usize) -> Result<Self, CipherError> {
        if rounds == 0 {
            return Err(CipherError::InvalidRounds);
        }
        if key_len == 0 || key_len > MAX_KEY_LEN {
            return Err(CipherError::InvalidKeyLength(key_len));
        }
        Ok(Self { rounds, key_len })
    }

    /// RC5-32/20/255, the master-key configuration.
    pub fn master() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            key_len: MAX_KEY_LEN,
        }
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }
}

/// Expanded key table, `2 * (rounds + 1)` words.
#[derive(Clone)]
pub struct RoundKeys {
    words: Vec<u32>,
    rounds: u32,
}

impl Drop for RoundKeys {
    fn drop(&mut self) {
        self.words.zeroize();
    }
}

impl std::fmt::Debug for RoundKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RoundKeys")
            .field("rounds", &self.rounds)
            .finish_non_exhaustive()
    }
}

pub fn key_schedule(key: &[u8], params: &Rc5Params) -> Result<RoundKeys, CipherError> {
    if key.len() != params.key_len {
        return Err(CipherError::KeyLengthMismatch {
            expected: params.key_len,
            actual: key.len(),
        });
    }
    let c = key.len().div_ceil(4).max(1);
    let mut l = vec![0u32; c];
    for (i, &b) in key.iter().enumerate() {
        l[i / 4] |= (b as u32) << (8 * (i % 4));
    }
    let t = 2 * (params.rounds as usize + 1);
    let mut s = Vec::with_capacity(t);
    s.push(P32);
    for i in 1..t {
        s.push(s[i - 1].wrapping_add(Q32));
    }
    let (mut a, mut b) = (0u32, 0u32);
    let (mut i, mut j) = (0usize, 0usize);
    for _ in 0..3 * t.max(c) {
        a = s[i].wrapping_add(a).wrapping_add(b).rotate_left(3);
        s[i] = a;
        b = l[j].wrapping_add(a).wrapping_add(b).rotate_left(a.wrapping_add(b));
        l[j] = b;
        i = (i + 1) % t;
        j = (j + 1) % c;
    }
    l.zeroize();
    Ok(RoundKeys {
        words: s,
        rounds: params.rounds,
    })
}

impl RoundKeys {
    pub fn new(key: &[u8], rounds: u32) -> Result<Self, CipherError> {
        key_schedule(key, &Rc5Params::new(rounds, key.len())?)
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    pub fn encrypt_block(&self, block: &[u8]) -> Result<[u8; BLOCK_LEN], CipherError> {
        let mut out: [u8; BLOCK_LEN] = block.try_into().map_err(|_| CipherError::Misaligned(block.len()))?;
        self.encrypt_in_place(&mut out);
        Ok(out)
    }

    pub fn decrypt_block(&self, block: &[u8]) -> Result<[u8; BLOCK_LEN], CipherError> {
        let mut out: [u8; BLOCK_LEN] = block.try_into().map_err(|_| CipherError::Misaligned(block.len()))?;
        self.decrypt_in_place(&mut out);
        Ok(out)
    }

    #[inline]
    pub fn encrypt_in_place(&self, block: &mut [u8; BLOCK_LEN]) {
        let s = &self.words;
        let (mut a, mut b) = load(block);
        a = a.wrapping_add(s[0]);
        b = b.wrapping_add(s[1]);
        for pair in s[2..].chunks_exact(2) {
            a = (a ^ b).rotate_left(b).wrapping_add(pair[0]);
            b = (b ^ a).rotate_left(a).wrapping_add(pair[1]);
        }
        store(block, a, b);
    }

    #[inline]
    pub fn decrypt_in_place(&self, block: &mut [u8; BLOCK_LEN]) {
        let s = &self.words;
        let (mut a, mut b) = load(block);
        for pair in s[2..].chunks_exact(2).rev() {
            b = b.wrapping_sub(pair[1]).rotate_right(a) ^ a;
            a = a.wrapping_sub(pair[0]).rotate_right(b) ^ b;
        }
        b = b.wrapping_sub(s[1]);
        a = a.wrapping_sub(s[0]);
        store(block, a, b);
    }
}

#[inline]
fn load(block: &[u8; BLOCK_LEN]) -> (u32, u32) {
    (
        u32::from_le_bytes([block[0], block[1], block[2], block[3]]),
        u32::from_le_bytes([block[4], block[5], block[6], block[7]]),
    )
}

#[inline]
fn store(block: &mut [u8; BLOCK_LEN], a: u32, b: u32) {
    block[..4].copy_from_slice(&a.to_le_bytes());
    block[4..].copy_from_slice(&b.to_le_bytes());
}

fn check_blocks(len: usize) -> Result<(), CipherError> {
    if len == 0 {
        return Err(CipherError::Empty);
    }
    if !len.is_multiple_of(BLOCK_LEN) {
        return Err(CipherError::Misaligned(len));
    }
    Ok(())
}

/// CBC with an all-zero IV. The same input always yields the same output.
pub fn cbc_encrypt_det(pt: &[u8], rk: &RoundKeys) -> Result<Vec<u8>, CipherError> {
    check_blocks(pt.len())?;
    let mut out = pt.to_vec();
    cbc_encrypt_in_place(&mut out, rk);
    Ok(out)
}

/// In-place variant of [`cbc_encrypt_det`]; `buf` must be block aligned.
pub fn cbc_encrypt_in_place(buf: &mut [u8], rk: &RoundKeys) {
    let mut chain = [0u8; BLOCK_LEN];
    for chunk in buf.chunks_exact_mut(BLOCK_LEN) {
        let mut block: [u8; BLOCK_LEN] = chunk.try_into().expect("exact chunk");
        for (x, c) in block.iter_mut().zip(chain.iter()) {
            *x ^= c;
        }
        rk.encrypt_in_place(&mut block);
        chunk.copy_from_slice(&block);
        chain = block;
    }
}

pub fn cbc_decrypt_det(ct: &[u8], rk: &RoundKeys) -> Result<Vec<u8>, CipherError> {
    check_blocks(ct.len())?;
    let mut out = Vec::with_capacity(ct.len());
    let mut chain = [0u8; BLOCK_LEN];
    for chunk in ct.chunks_exact(BLOCK_LEN) {
        let cblock: [u8; BLOCK_LEN] = chunk.try_into().expect("exact chunk");
        let mut block = cblock;
        rk.decrypt_in_place(&mut block);
        for (x, c) in block.iter_mut().zip(chain.iter()) {
            *x ^= c;
        }
        out.extend_from_slice(&block);
        chain = cblock;
    }
    Ok(out)
}

/// A truncated MAC: the leading `bits` bits of the final CBC block, read
/// MSB-first, right-aligned in `value`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacTag {
    bits: u32,
    value: u64,
}

impl MacTag {
    pub fn new(bits: u32, value: u64) -> Result<Self, CipherError> {
        if !(MIN_MAC_BITS..=MAX_MAC_BITS).contains(&bits) {
            return Err(CipherError::InvalidMacBits(bits));
        }
        let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
        Ok(Self {
            bits,
            value: value & mask,
        })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    /// Compares without early exit on the first differing bit.
    pub fn ct_eq(&self, other: &MacTag) -> bool {
        let diff = (self.value ^ other.value) | (self.bits ^ other.bits) as u64;
        diff == 0
    }
}

/// CBC-MAC over `msg` padded with `0x80` and zeros to a block multiple.
///
/// Only sound for messages of one fixed length per key; every protocol
/// message that uses it is fixed-size.
pub fn cbc_mac(msg: &[u8], rk: &RoundKeys, mac_bits: u32) -> Result<MacTag, CipherError> {
    if msg.is_empty() {
        return Err(CipherError::Empty);
    }
    if !(MIN_MAC_BITS..=MAX_MAC_BITS).contains(&mac_bits) {
        return Err(CipherError::InvalidMacBits(mac_bits));
    }
    let padded_len = (msg.len() / BLOCK_LEN + 1) * BLOCK_LEN;
    let mut buf = vec![0u8; padded_len];
    buf[..msg.len()].copy_from_slice(msg);
    buf[msg.len()] = 0x80;
    cbc_encrypt_in_place(&mut buf, rk);
    let last: [u8; BLOCK_LEN] = buf[padded_len - BLOCK_LEN..].try_into().expect("one block");
    let full = u64::from_be_bytes(last);
    MacTag::new(mac_bits, full >> (64 - mac_bits))
}

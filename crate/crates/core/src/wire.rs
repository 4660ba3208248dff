//! Checksummed binary framing shared by the on-disk formats.

/// Appends the big-endian CRC32 of everything already in `buf`.
pub(crate) fn seal(mut buf: Vec<u8>) -> Vec<u8> {
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_be_bytes());
    buf
}

/// Splits off and verifies a trailing big-endian CRC32. Returns the body.
pub(crate) fn unseal(bytes: &[u8]) -> Option<&[u8]> {
    if bytes.len() < 4 {
        return None;
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_be_bytes(tail.try_into().ok()?);
    (crc32fast::hash(body) == stored).then_some(body)
}

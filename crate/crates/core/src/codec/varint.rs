use thiserror::Error;

/// Largest value a four byte remaining-length field can carry.
pub const MAX_REMAINING_LENGTH: u32 = 268_435_455;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum VarintError {
    #[error("remaining length {0} exceeds {MAX_REMAINING_LENGTH}")]
    OutOfRange(u64),
    #[error("input ends inside the remaining length field")]
    Incomplete,
    #[error("remaining length field longer than 4 bytes")]
    Malformed,
}

/// Minimal 7-bit little-endian group encoding, continuation bit on all but the last byte.
pub fn encode_remaining_length(n: u64) -> Result<Vec<u8>, VarintError> {
    if n > u64::from(MAX_REMAINING_LENGTH) {
        return Err(VarintError::OutOfRange(n));
    }
    let mut out = Vec::with_capacity(4);
    let mut rest = n;
    loop {
        let mut byte = (rest % 128) as u8;
        rest /= 128;
        if rest > 0 {
            byte |= 0x80;
        }
        out.push(byte);
        if rest == 0 {
            return Ok(out);
        }
    }
}

/// Returns the value and how many bytes it occupied.
pub fn decode_remaining_length(bytes: &[u8]) -> Result<(u32, usize), VarintError> {
    let mut value: u32 = 0;
    for i in 0..4 {
        let Some(&byte) = bytes.get(i) else {
            return Err(VarintError::Incomplete);
        };
        value |= u32::from(byte & 0x7f) << (7 * i);
        if byte & 0x80 == 0 {
            return Ok((value, i + 1));
        }
    }
    Err(VarintError::Malformed)
}

/// Number of bytes the minimal encoding of `n` takes.
pub(crate) fn encoded_len(n: u32) -> usize {
    match n {
        0..=127 => 1,
        128..=16_383 => 2,
        16_384..=2_097_151 => 3,
        _ => 4,
    }
}

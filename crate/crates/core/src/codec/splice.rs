use thiserror::Error;

use super::varint::{decode_remaining_length, encode_remaining_length};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpliceError {
    #[error("splice range {at}..{end} outside a {len} byte frame")]
    OutOfBounds { at: usize, end: usize, len: usize },
    #[error("patched frame has no readable remaining length field to fix up")]
    NoLengthField,
    #[error("patched body of {0} bytes cannot be described by a remaining length")]
    BodyTooLarge(usize),
}

/// Replace `remove` bytes at `at` with `insert`.
///
/// With `fixup_length` the remaining-length field of the patched frame is
/// rewritten to match its new body; without it the old value is left in
/// place, which produces a frame that lies about its size.
pub fn splice(
    frame: &[u8],
    at: usize,
    remove: usize,
    insert: &[u8],
    fixup_length: bool,
) -> Result<Vec<u8>, SpliceError> {
    let end = at.saturating_add(remove);
    if end > frame.len() {
        return Err(SpliceError::OutOfBounds {
            at,
            end,
            len: frame.len(),
        });
    }
    let mut out = Vec::with_capacity(frame.len() - remove + insert.len());
    out.extend_from_slice(&frame[..at]);
    out.extend_from_slice(insert);
    out.extend_from_slice(&frame[end..]);

    if !fixup_length {
        return Ok(out);
    }
    if out.is_empty() {
        return Err(SpliceError::NoLengthField);
    }
    let (_, used) = decode_remaining_length(&out[1..]).map_err(|_| SpliceError::NoLengthField)?;
    let body_len = out.len() - 1 - used;
    let length =
        encode_remaining_length(body_len as u64).map_err(|_| SpliceError::BodyTooLarge(body_len))?;
    out.splice(1..1 + used, length);
    Ok(out)
}

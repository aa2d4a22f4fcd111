//! Deterministic bag-of-words embedder: signed feature hashing over
//! alphanumeric tokens. No model weights, no network, no randomness. Useful
//! as an offline stand-in wherever a real sentence embedder would go; two
//! texts with the same token multiset get the same vector.

use crate::error::{Error, Result};

use super::EmbeddingVector;

const FNV_OFFSET: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x100000001b3;

pub(crate) fn fnv1a_64(token: &str) -> u64 {
    let mut hash = FNV_OFFSET;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Embed `text` into `dim` buckets. Tokens are lowercased maximal
/// alphanumeric runs; each token adds +-1 to the bucket `hash % dim`, with
/// the sign taken from bit 32 of the hash. Output depends only on the token
/// multiset, so token order never matters.
pub fn local_deterministic_embed(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim < 8 {
        return Err(Error::Validation(format!(
            "local embedder dim must be >= 8, got {dim}"
        )));
    }
    let lowered = text.to_lowercase();
    let mut values = vec![0.0f64; dim];
    let mut saw_token = false;
    for token in lowered.split(|c: char| !c.is_alphanumeric()) {
        if token.is_empty() {
            continue;
        }
        saw_token = true;
        let hash = fnv1a_64(token);
        let bucket = (hash % dim as u64) as usize;
        let sign = if (hash >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        values[bucket] += sign;
    }
    if !saw_token {
        return Err(Error::EmptyText);
    }
    Ok(EmbeddingVector {
        values,
        model_id: format!("hashed-bow-{dim}"),
    })
}

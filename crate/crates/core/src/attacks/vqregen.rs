//! Token regeneration through the `k`-th nearest codebook vector.

use crate::error::{param, Result};
use crate::image::Image;
use crate::tokens::TokenMap;
use crate::vae::{lookup, quantize, EncoderProfile};

/// Tokens of `image` with every cell replaced by its `k`-th nearest index.
pub fn vq_regen_tokens(image: &Image, profile: &EncoderProfile, k: usize) -> Result<TokenMap> {
    let size = profile.codebook().size();
    if k == 0 || k > size {
        return Err(param(format!("rank {k} must lie in 1..={size}")));
    }
    let q = quantize(&profile.encode(image)?, profile.codebook())?;
    let picked = (0..q.tokens.len()).map(|cell| q.ranked(cell, k)).collect();
    q.tokens.with_indices(picked)
}

/// Encode, substitute rank-`k` tokens, look up and decode.
pub fn vq_regen(image: &Image, profile: &EncoderProfile, k: usize) -> Result<Image> {
    let tokens = vq_regen_tokens(image, profile, k)?;
    profile.decode(&lookup(&tokens, profile.codebook())?)
}

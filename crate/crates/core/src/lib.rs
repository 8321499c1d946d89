//! Toy-scale laboratory for token-level image watermarks and attacks on them.
//!
//! Images are encoded by seeded toy VQ autoencoders ([`vae`]); token schemes
//! ([`schemes`]) and the bitwise multi-scale scheme ([`bitmark`]) embed and
//! detect watermarks; [`attacks`] removes or forges them; [`stats`] and
//! [`metrics`] score the outcome.

pub mod attacks;
pub mod bitmark;
pub mod codebook;
pub mod covers;
pub mod error;
pub mod hash;
pub mod image;
pub mod latent;
pub mod metrics;
pub mod resize;
pub mod schemes;
pub mod stats;
pub mod tokens;
pub mod vae;

pub use error::{Error, Result};
pub use image::Image;
pub use latent::Latent;

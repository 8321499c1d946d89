//! Token-level watermark schemes and the toy model they sample from.

pub mod clustermark;
pub mod indexmark;
pub mod kgw;
pub mod model;

pub use clustermark::{cluster_codebook, detect_clustermark, embed_clustermark, ClusterAssignment};
pub use indexmark::{build_pairing, detect_indexmark, embed_indexmark, TokenPairing};
pub use kgw::{detect_kgw, embed_kgw, KgwParams};
pub use model::{random_tokens, sample_tokens, ToyARModel};

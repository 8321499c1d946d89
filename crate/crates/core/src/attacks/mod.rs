//! Removal and forgery attacks.

pub mod average;
pub mod bitopt;
pub mod budget;
pub mod freq;
pub mod latentopt;
pub mod perturb;
pub mod vqregen;

pub use average::average_corpus;
pub use bitopt::{bitopt_removal, find_flip_targets, BitOptConfig, BitOptOutcome};
pub use budget::{within_budget, OptBudget, Trace, TraceRow};
pub use freq::{freq_inject, FreqInjectConfig, InjectOutcome};
pub use latentopt::{latentopt_forgery, latentopt_removal, OptOutcome, Verifier};
pub use perturb::{perturb, PerturbKind};
pub use vqregen::{vq_regen, vq_regen_tokens};

//! sweepkit: a data-augmentation defense toolkit against DNN backdoor
//! attacks.
//!
//! The crate provides, end to end:
//!
//! - [`imgcore`] — deterministic image primitives and the seeded [`imgcore::Rng`];
//! - [`augment`] — the augmentation function registry, the six shortlisted
//!   transforms, and ordered policies;
//! - [`attacks`] — trigger synthesis and dataset poisoning;
//! - [`model`] — a small self-contained softmax classifier trained with
//!   Adadelta, used to grow and then defuse backdoors at desk scale;
//! - [`metrics`] — clean accuracy (ACC) and attack success rate (ASR);
//! - [`sweep`] — the heuristic policy search that produces a fine-tuning
//!   policy `P_f` and an inference policy `P_i`;
//! - [`pipeline`] and [`cli`] — the two-stage defense pipeline, run
//!   configuration, file formats and the `sweepkit` binary.
//!
//! Everything is reproducible from one master seed: stochastic steps draw
//! from an explicit SplitMix64 generator and parallel work derives child
//! seeds, so parallel and serial runs are bit-identical. See the `examples/`
//! directory for one runnable walkthrough per capability.

pub mod attacks;
pub mod augment;
pub mod cli;
pub mod data;
pub mod dataset;
pub mod error;
pub mod imgcore;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod sweep;

pub use dataset::LabeledDataset;
pub use error::{Error, Result};

/// Cap rayon's worker count from `SWEEPKIT_THREADS` (once, best effort).
///
/// Results never depend on the worker count; the cap only bounds CPU use.
pub fn init_threads_from_env() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if let Ok(value) = std::env::var("SWEEPKIT_THREADS") {
            if let Ok(n) = value.trim().parse::<usize>() {
                if n > 0 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

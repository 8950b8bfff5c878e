//! Hybrid vehicular network simulation.
//!
//! The crate couples three ingredients: model-based road mobility, radio
//! environmental maps aggregated from drive-test measurements, and learned
//! data-rate models (a deterministic forest predictor plus a probabilistic
//! derivation model). Together they let opportunistic transmission schemes
//! be evaluated in simulation instead of live field trials.
//!
//! Start with the `examples/` directory; each example exercises one stage of
//! the pipeline end to end.

pub mod eval;
pub mod geom;
pub mod learners;
pub mod measurement;
pub mod mobility;
pub mod rem;
pub mod scenario;
pub mod pipeline;
pub mod sim;
pub mod sweep;

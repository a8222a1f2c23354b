//! Charge-sharpening eavesdroppers on monitored U(1) brickwork circuits.
//!
//! A charge-conserving random circuit is monitored with probability `p` per
//! site and half-layer. The eavesdropper sees only the measurement record and
//! must infer the (hidden) total charge. Averaged over gate phases the record
//! distribution is generated by a symmetric exclusion process, which the
//! [`sep`] module simulates exactly (dense) or approximately (MPS). The
//! [`decoder`] turns those likelihoods into posteriors, [`percolation`] gives
//! a deterministic light-cone lower bound, and [`stats`] supplies the
//! finite-size analysis.

pub mod batch;
pub mod decoder;
pub mod error;
pub mod gate;
pub mod layout;
pub mod percolation;
pub mod qsim;
pub mod record;
pub mod seed;
pub mod sep;
pub mod stats;

pub use error::{Error, Result};
pub use gate::{build_unitary, hopping_probability, GateParams, Unitary4};
pub use layout::{build_layout, CircuitLayout, Placement};
pub use record::{
    CircuitRealization, Engine, ExperimentConfig, InitFamily, InitKind, MeasurementEvent, MeasurementRecord, Task,
};
pub use seed::{derive_stream_seed, stream_rng, StreamRng};

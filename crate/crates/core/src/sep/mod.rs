//! Classical symmetric-exclusion model of the gate-averaged circuit.

pub mod dense;
pub mod doubled;
pub mod enumerate;
pub mod mps;
pub mod sampler;
pub mod transfer;

pub use dense::{evolve_dense_likelihood, initial_classical_state, ChargeSector, ProbabilityState};
pub use doubled::{verify_doubled_channel, DoubledChannelReport};
pub use mps::{evolve_mps_likelihood, evolve_mps_likelihoods, reverse_evolve, ProbabilityMps, DEFAULT_THRESHOLD};
pub use sampler::{
    generate_model_record, sample_outcomes_at, sample_record_from_model, ChargeTrajectory, ModelSample, SamplerMethod,
};
pub use transfer::{transfer_matrix, HopSchedule, Matrix4};

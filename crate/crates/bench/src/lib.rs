//! Shared fixtures for the benchmarks.

use eavesdrop_core::sep::{generate_model_record, SamplerMethod};
use eavesdrop_core::{build_layout, derive_stream_seed, InitKind, MeasurementRecord};

/// `count` model records at `t_f = L`, alternating between the two charges.
pub fn records(n_sites: usize, p: f64, count: usize, with_gates: bool) -> Vec<MeasurementRecord> {
    let layout = build_layout(n_sites, n_sites).expect("layout");
    (0..count)
        .map(|i| {
            let q = n_sites / 2 - i % 2;
            let seed = derive_stream_seed(0xbe11c4, i as u64);
            generate_model_record(&layout, p, InitKind::Dicke(q), seed, with_gates, SamplerMethod::Trajectory)
                .expect("record")
                .0
        })
        .collect()
}

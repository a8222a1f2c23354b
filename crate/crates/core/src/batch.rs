//! Record-granular batch generation and decoding.
//!
//! Every record's seed is derived from the master seed and its index before
//! any work is scheduled, so results do not depend on the thread count.

use rayon::prelude::*;

use crate::decoder::{evaluate_record, ClassificationOutcome, DecodeOptions};
use crate::error::{Error, Result};
use crate::qsim::{run_trajectory, GateSource};
use crate::record::{Engine, ExperimentConfig, InitFamily, InitKind, MeasurementRecord, Task};
use crate::seed::derive_stream_seed;
use crate::sep::{generate_model_record, SamplerMethod};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "EAVESDROP_WORKERS";

/// Worker count from [`WORKERS_ENV`], falling back to the available
/// parallelism.
pub fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Labels the decoder chooses between for a task.
pub fn decode_labels(task: &Task, n_sites: usize) -> Vec<usize> {
    if task.family == InitFamily::Plus {
        (0..=n_sites).collect()
    } else {
        task.labels.clone()
    }
}

/// `(init, record_seed)` for every record, class-major.
pub fn record_plan(cfg: &ExperimentConfig) -> Result<Vec<(InitKind, u64)>> {
    cfg.validate()?;
    let inits: Vec<InitKind> = if cfg.task.family == InitFamily::Plus {
        vec![InitKind::Plus]
    } else {
        cfg.task.labels.iter().map(|&q| cfg.task.family.init_for(q, cfg.n_sites)).collect::<Result<_>>()?
    };
    let mut plan = Vec::with_capacity(inits.len() * cfg.n_records);
    for init in inits {
        for _ in 0..cfg.n_records {
            let index = plan.len() as u64;
            plan.push((init, derive_stream_seed(cfg.master_seed, index)));
        }
    }
    Ok(plan)
}

pub fn generate_one(cfg: &ExperimentConfig, init: InitKind, seed: u64) -> Result<MeasurementRecord> {
    let layout = cfg.validate()?;
    match cfg.engine {
        Engine::Quantum => Ok(run_trajectory(&layout, cfg.p, init, seed, GateSource::Haar, cfg.with_gates)?.record),
        Engine::Sep => {
            Ok(generate_model_record(&layout, cfg.p, init, seed, cfg.with_gates, SamplerMethod::Trajectory)?.0)
        }
    }
}

/// All records of an experiment, class-major, in plan order.
pub fn generate_records(cfg: &ExperimentConfig) -> Result<Vec<MeasurementRecord>> {
    let plan = record_plan(cfg)?;
    plan.par_iter().map(|&(init, seed)| generate_one(cfg, init, seed)).collect()
}

/// Decodes each record independently; output order matches input order.
pub fn decode_records(
    records: &[MeasurementRecord],
    labels: &[usize],
    options: &DecodeOptions,
) -> Vec<Result<ClassificationOutcome>> {
    decode_with(records, |_| labels.to_vec(), options)
}

/// Like [`decode_records`], with the label set chosen per record.
pub fn decode_with<F>(
    records: &[MeasurementRecord],
    labels_for: F,
    options: &DecodeOptions,
) -> Vec<Result<ClassificationOutcome>>
where
    F: Fn(&MeasurementRecord) -> Vec<usize> + Sync,
{
    records.par_iter().map(|r| evaluate_record(r, &labels_for(r), options)).collect()
}

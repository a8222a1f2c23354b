use std::path::PathBuf;

use clap::{Args, ValueEnum};
use eavesdrop_core::batch::generate_records;
use eavesdrop_core::qsim::MAX_SITES;
use eavesdrop_core::{Engine, ExperimentConfig, InitFamily, Task};

use super::{parse_list, pooled};
use crate::error::{CliError, CliResult};
use crate::io::{write_jsonl, RecordLine};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Quantum,
    Sep,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Quantum => Engine::Quantum,
            EngineArg::Sep => Engine::Sep,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct GenerateArgs {
    /// `quantum` runs the statevector circuit, `sep` samples the classical model.
    #[arg(long, value_enum, default_value = "quantum")]
    pub engine: EngineArg,
    #[arg(long = "L")]
    pub n_sites: usize,
    /// Timesteps (defaults to L).
    #[arg(long)]
    pub tf: Option<usize>,
    #[arg(long)]
    pub p: f64,
    /// Initial-state family: dicke, neel or plus.
    #[arg(long, default_value = "dicke")]
    pub init: InitFamily,
    /// Comma-separated class charges (default L/2,L/2-1; unused for plus).
    #[arg(long)]
    pub labels: Option<String>,
    /// Records per class (total records for plus).
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Embed the circuit realization (needed for biased decoding).
    #[arg(long)]
    pub with_gates: bool,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

pub fn config(a: &GenerateArgs) -> CliResult<ExperimentConfig> {
    if a.n_sites < 2 {
        return Err(CliError::usage(format!("--L must be at least 2, got {}", a.n_sites)));
    }
    let task = match (a.init, &a.labels) {
        (InitFamily::Plus, Some(_)) => return Err(CliError::usage("--labels does not apply to --init plus")),
        (InitFamily::Plus, None) => Task::all_charges(),
        (family, None) => Task::pair(family, a.n_sites),
        (family, Some(s)) => Task { family, labels: parse_list(s, "label")? },
    };
    if a.engine == EngineArg::Quantum && a.n_sites > MAX_SITES {
        return Err(CliError::usage(format!("quantum engine supports at most {MAX_SITES} sites")));
    }
    let cfg = ExperimentConfig {
        n_sites: a.n_sites,
        n_timesteps: a.tf.unwrap_or(a.n_sites),
        p: a.p,
        n_records: a.n,
        task,
        master_seed: a.seed,
        engine: a.engine.into(),
        with_gates: a.with_gates,
    };
    cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
    Ok(cfg)
}

pub fn run(a: &GenerateArgs) -> CliResult<()> {
    let cfg = config(a)?;
    let records = pooled(a.workers, || generate_records(&cfg))??;
    let lines: Vec<RecordLine> = records.iter().map(RecordLine::from_record).collect();
    write_jsonl(a.out.as_deref(), &lines)?;
    if let Some(out) = &a.out {
        eprintln!("wrote {} records to {}", lines.len(), out.display());
    }
    Ok(())
}

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use eavesdrop_core::batch::decode_with;
use eavesdrop_core::decoder::{Backend, BiasMode, DecodeOptions};
use eavesdrop_core::sep::DEFAULT_THRESHOLD;
use eavesdrop_core::MeasurementRecord;

use super::pooled;
use crate::error::{CliError, CliResult};
use crate::io::{read_records, write_jsonl, ResultLine};

/// Largest L the dense backend accepts.
pub const DENSE_MAX_SITES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Dense,
    Mps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LabelSet {
    /// Charges L/2 and L/2-1.
    Pair,
    /// Every charge 0..=L.
    All,
}

impl LabelSet {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelSet::Pair => "pair",
            LabelSet::All => "all",
        }
    }

    pub fn labels(&self, n_sites: usize) -> Vec<usize> {
        match self {
            LabelSet::Pair => vec![n_sites / 2, n_sites / 2 - 1],
            LabelSet::All => (0..=n_sites).collect(),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DecodeArgs {
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long, default_value = "unbiased")]
    pub mode: BiasMode,
    #[arg(long, value_enum, default_value = "dense")]
    pub backend: BackendArg,
    /// MPS singular-value cutoff relative to the largest singular value.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value = "pair")]
    pub labels: LabelSet,
    /// Decode Neel-family records with uniform fixed-charge vectors.
    #[arg(long)]
    pub neel_as_dicke: bool,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

pub fn options(a: &DecodeArgs) -> CliResult<DecodeOptions> {
    let backend = match a.backend {
        BackendArg::Dense => Backend::Dense,
        BackendArg::Mps => {
            if !(0.0..1.0).contains(&a.threshold) {
                return Err(CliError::usage(format!("--threshold {} outside [0, 1)", a.threshold)));
            }
            Backend::Mps { threshold: a.threshold }
        }
    };
    Ok(DecodeOptions { mode: a.mode, backend, neel_as_dicke: a.neel_as_dicke })
}

/// Task tag stored with each result, e.g. `dicke-pair`.
pub fn task_name(record: &MeasurementRecord, labels: LabelSet) -> String {
    format!("{}-{}", record.init.as_str(), labels.as_str())
}

/// Rejects records the requested decoding cannot treat faithfully.
pub fn check_records(records: &[MeasurementRecord], opts: &DecodeOptions, labels: LabelSet) -> CliResult<()> {
    for (i, r) in records.iter().enumerate() {
        let line = i + 1;
        if opts.backend == Backend::Dense && r.n_sites() > DENSE_MAX_SITES {
            return Err(CliError::data(format!(
                "record {line}: dense backend supports L <= {DENSE_MAX_SITES}, got {}; use --backend mps",
                r.n_sites()
            )));
        }
        if opts.mode != BiasMode::Unbiased && r.gates.is_none() {
            return Err(CliError::data(format!("record {line}: {} decoding needs gate data", opts.mode.as_str())));
        }
        if let Some(q) = r.true_label {
            if !labels.labels(r.n_sites()).contains(&q) {
                return Err(CliError::data(format!(
                    "record {line}: true label {q} is not among the `{}` labels",
                    labels.as_str()
                )));
            }
        }
    }
    Ok(())
}

pub fn decode(records: &[MeasurementRecord], opts: &DecodeOptions, labels: LabelSet) -> CliResult<Vec<ResultLine>> {
    check_records(records, opts, labels)?;
    let outcomes = decode_with(records, |r| labels.labels(r.n_sites()), opts);
    records
        .iter()
        .zip(outcomes)
        .enumerate()
        .map(|(i, (r, o))| match o {
            Ok(o) => Ok(ResultLine::new(r, &task_name(r, labels), &o)),
            Err(e) => Err(CliError::data(format!("record {}: {e}", i + 1))),
        })
        .collect()
}

pub fn run(a: &DecodeArgs) -> CliResult<()> {
    let opts = options(a)?;
    let records = read_records(&a.records)?;
    let results = pooled(a.workers, || decode(&records, &opts, a.labels))??;
    write_jsonl(a.out.as_deref(), &results)?;
    Ok(())
}

//! On-disk formats: JSONL record and result files, hashing helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use eavesdrop_core::decoder::{Backend, BiasMode, ClassificationOutcome};
use eavesdrop_core::{
    build_layout, CircuitRealization, GateParams, InitFamily, MeasurementEvent, MeasurementRecord, Placement,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult, IoContext};

pub const FORMAT_VERSION: u32 = 1;

/// `[round, left, alpha, rho, psi, chi, xi]`
pub type GateEntry = (usize, usize, f64, f64, f64, f64, f64);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordLine {
    pub version: u32,
    pub seed: u64,
    #[serde(rename = "L")]
    pub n_sites: usize,
    pub tf: usize,
    pub p: f64,
    pub init: InitFamily,
    pub label: Option<usize>,
    /// `[round, site, outcome]`
    pub events: Vec<(usize, usize, u8)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gates: Option<Vec<GateEntry>>,
}

impl RecordLine {
    pub fn from_record(r: &MeasurementRecord) -> Self {
        let layout = r.layout();
        let gates = r.gates.as_ref().map(|g| {
            layout
                .placements()
                .zip(g.gates())
                .map(|(pl, g)| (pl.half_layer, pl.left, g.alpha, g.rho, g.psi, g.chi, g.xi))
                .collect()
        });
        Self {
            version: FORMAT_VERSION,
            seed: r.record_seed,
            n_sites: r.n_sites(),
            tf: layout.n_timesteps(),
            p: r.p,
            init: r.init,
            label: r.true_label,
            events: r.events().iter().map(|e| (e.half_layer, e.site, u8::from(e.outcome))).collect(),
            gates,
        }
    }

    pub fn to_record(&self) -> eavesdrop_core::Result<MeasurementRecord> {
        use eavesdrop_core::Error;
        if self.version != FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!("unsupported record version {}", self.version)));
        }
        let layout = build_layout(self.n_sites, self.tf)?;
        let events = self
            .events
            .iter()
            .map(|&(half_layer, site, o)| match o {
                0 | 1 => Ok(MeasurementEvent { half_layer, site, outcome: o == 1 }),
                _ => Err(Error::InvalidArgument(format!("outcome {o} is not 0 or 1"))),
            })
            .collect::<eavesdrop_core::Result<Vec<_>>>()?;
        let gates = match &self.gates {
            None => None,
            Some(entries) => {
                let mut params: Vec<Option<GateParams>> = vec![None; layout.n_gates()];
                for &(half_layer, left, alpha, rho, psi, chi, xi) in entries {
                    let k = layout.gate_index(Placement { half_layer, left }).ok_or_else(|| {
                        Error::InvalidArgument(format!("no gate at round {half_layer}, left site {left}"))
                    })?;
                    if params[k].replace(GateParams::new(alpha, rho, psi, chi, xi)?).is_some() {
                        return Err(Error::InvalidArgument(format!("gate at ({half_layer}, {left}) repeated")));
                    }
                }
                let params = params
                    .into_iter()
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::InvalidArgument("gate list does not cover the layout".into()))?;
                Some(CircuitRealization::new(layout.clone(), params, self.seed)?)
            }
        };
        MeasurementRecord::new(layout, events, self.init, self.label, self.seed, self.p, gates)
    }
}

/// One decoded record. Log-likelihoods of impossible labels are `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultLine {
    pub version: u32,
    pub seed: u64,
    #[serde(rename = "L")]
    pub n_sites: usize,
    pub tf: usize,
    pub p: f64,
    pub init: InitFamily,
    pub label: Option<usize>,
    pub task: String,
    pub mode: BiasMode,
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub labels: Vec<usize>,
    pub log_likelihoods: Vec<Option<f64>>,
    pub posterior: Vec<f64>,
    pub predicted: usize,
    pub p_corr: Option<f64>,
    pub entropy_bits: f64,
}

impl ResultLine {
    pub fn new(record: &MeasurementRecord, task: &str, o: &ClassificationOutcome) -> Self {
        let threshold = match o.backend {
            Backend::Mps { threshold } => Some(threshold),
            Backend::Dense => None,
        };
        Self {
            version: FORMAT_VERSION,
            seed: record.record_seed,
            n_sites: record.n_sites(),
            tf: record.layout().n_timesteps(),
            p: record.p,
            init: record.init,
            label: record.true_label,
            task: task.to_string(),
            mode: o.bias_mode,
            backend: o.backend.as_str().to_string(),
            threshold,
            labels: o.labels.clone(),
            log_likelihoods: o.log_likelihoods.iter().map(|&l| l.is_finite().then_some(l)).collect(),
            posterior: o.posterior.clone(),
            predicted: o.predicted_label,
            p_corr: o.p_corr,
            entropy_bits: o.entropy_bits,
        }
    }

    pub fn to_outcome(&self) -> CliResult<ClassificationOutcome> {
        let backend = match (self.backend.as_str(), self.threshold) {
            ("dense", _) => Backend::Dense,
            ("mps", Some(threshold)) => Backend::Mps { threshold },
            (other, _) => return Err(CliError::data(format!("unknown backend `{other}` in results"))),
        };
        if self.labels.len() != self.posterior.len() || self.labels.len() != self.log_likelihoods.len() {
            return Err(CliError::data("result line has mismatched label and posterior lengths"));
        }
        Ok(ClassificationOutcome {
            labels: self.labels.clone(),
            log_likelihoods: self.log_likelihoods.iter().map(|l| l.unwrap_or(f64::NEG_INFINITY)).collect(),
            posterior: self.posterior.clone(),
            predicted_label: self.predicted,
            p_corr: self.p_corr,
            entropy_bits: self.entropy_bits,
            bias_mode: self.mode,
            backend,
        })
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    let file = File::open(path).at(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        let v =
            serde_json::from_str(&line).map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(v);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> CliResult<Vec<MeasurementRecord>> {
    read_jsonl::<RecordLine>(path)?
        .iter()
        .enumerate()
        .map(|(i, l)| l.to_record().map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

/// Writes one JSON value per line to `path`, or to stdout when `path` is
/// `None`.
pub fn write_jsonl<T: Serialize>(path: Option<&Path>, items: &[T]) -> CliResult<()> {
    let mut w: Box<dyn Write> = match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).at(dir)?;
            }
            Box::new(BufWriter::new(File::create(p).at(p)?))
        }
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| CliError::data(e.to_string()))?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&std::fs::read(path).at(path)?))
}

pub fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).at(path)
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use eavesdrop_core::batch::generate_records;
use eavesdrop_core::decoder::{Backend, BiasMode, DecodeOptions};
use eavesdrop_core::sep::DEFAULT_THRESHOLD;
use eavesdrop_core::stats::DEFAULT_BOOTSTRAP;
use eavesdrop_core::{derive_stream_seed, Engine, ExperimentConfig, InitFamily, MeasurementRecord, Task};
use serde::{Deserialize, Serialize};

use super::analyze::{analyze, write_all, GroupBy};
use super::decode::{decode, LabelSet};
use super::percolate::percolate_to;
use super::pooled;
use crate::error::{CliError, CliResult, IoContext};
use crate::io::{create_dir, read_jsonl, read_records, sha256_file, sha256_hex, write_jsonl, RecordLine, ResultLine};

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// TOML plan file.
    pub plan: PathBuf,
    /// Overrides the plan's output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

fn default_engine() -> Engine {
    Engine::Quantum
}

fn default_backend() -> String {
    "dense".into()
}

fn default_modes() -> Vec<BiasMode> {
    vec![BiasMode::Unbiased]
}

fn default_tasks() -> Vec<InitFamily> {
    vec![InitFamily::Dicke]
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

fn default_boot() -> usize {
    DEFAULT_BOOTSTRAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    #[serde(rename = "L")]
    pub sizes: Vec<usize>,
    pub p: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<BiasMode>,
    /// Initial-state families; `plus` decodes against every charge.
    #[serde(default = "default_tasks")]
    pub tasks: Vec<InitFamily>,
    /// Records per class.
    pub n: usize,
    /// Timesteps; defaults to L.
    pub tf: Option<usize>,
    #[serde(default = "default_engine")]
    pub engine: Engine,
    #[serde(default = "default_backend")]
    pub backend: String,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub workers: Option<usize>,
    #[serde(default = "default_boot")]
    pub boot: usize,
}

impl SweepPlan {
    pub fn parse(text: &str) -> CliResult<Self> {
        let plan: SweepPlan = toml::from_str(text).map_err(|e| CliError::usage(format!("malformed plan: {e}")))?;
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::usage(format!("malformed plan: {m}")));
        if self.sizes.is_empty() || self.p.is_empty() || self.modes.is_empty() || self.tasks.is_empty() {
            return bad("L, p, modes and tasks must be nonempty".into());
        }
        if let Some(&l) = self.sizes.iter().find(|&&l| l < 2) {
            return bad(format!("L = {l} is below 2"));
        }
        if let Some(p) = self.p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("p = {p} outside [0, 1]"));
        }
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.tf == Some(0) {
            return bad("tf must be positive".into());
        }
        self.backend_spec()?;
        Ok(())
    }

    fn backend_spec(&self) -> CliResult<Backend> {
        match self.backend.as_str() {
            "dense" => Ok(Backend::Dense),
            "mps" if (0.0..1.0).contains(&self.threshold) => Ok(Backend::Mps { threshold: self.threshold }),
            "mps" => Err(CliError::usage(format!("malformed plan: threshold {} outside [0, 1)", self.threshold))),
            other => Err(CliError::usage(format!("malformed plan: unknown backend `{other}`"))),
        }
    }

    fn needs_gates(&self) -> bool {
        self.modes.iter().any(|m| *m != BiasMode::Unbiased)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub n_sites: usize,
    pub p: f64,
    pub task: InitFamily,
}

impl Cell {
    fn dir_name(&self) -> String {
        format!("L{}_p{}_{}", self.n_sites, self.p, self.task.as_str())
    }

    fn labels(&self) -> LabelSet {
        if self.task == InitFamily::Plus {
            LabelSet::All
        } else {
            LabelSet::Pair
        }
    }

    /// Derived from the master seed and the cell coordinates only.
    pub fn seed(&self, master: u64) -> u64 {
        let digest = sha256_hex(self.task.as_str().as_bytes());
        let task_id = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        derive_stream_seed(
            derive_stream_seed(derive_stream_seed(master, self.n_sites as u64), self.p.to_bits()),
            task_id,
        )
    }
}

pub fn cells(plan: &SweepPlan) -> Vec<Cell> {
    let mut out = Vec::new();
    for &n_sites in &plan.sizes {
        for &p in &plan.p {
            for &task in &plan.tasks {
                out.push(Cell { n_sites, p, task });
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    #[serde(rename = "L")]
    pub n_sites: usize,
    pub p: f64,
    pub task: InitFamily,
    pub seed: u64,
    /// Hash of every setting the cell's outputs depend on.
    pub fingerprint: String,
    pub dir: String,
    /// File name to SHA-256.
    pub files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub plan_sha256: String,
    pub seed: u64,
    pub cells: Vec<CellEntry>,
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST: &str = "manifest.json";

fn fingerprint(plan: &SweepPlan, cell: &Cell) -> String {
    let settings = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cell.seed(plan.seed),
        "n": plan.n,
        "tf": plan.tf,
        "engine": plan.engine,
        "backend": plan.backend,
        "threshold": plan.threshold,
        "modes": plan.modes,
        "with_gates": plan.needs_gates(),
    });
    sha256_hex(settings.to_string().as_bytes())
}

fn results_name(mode: BiasMode) -> String {
    format!("results_{}.jsonl", mode.as_str())
}

fn files_intact(dir: &Path, files: &BTreeMap<String, String>) -> bool {
    !files.is_empty() && files.iter().all(|(name, hash)| sha256_file(&dir.join(name)).is_ok_and(|h| &h == hash))
}

fn run_cell(plan: &SweepPlan, cell: &Cell, dir: &Path) -> CliResult<BTreeMap<String, String>> {
    create_dir(dir)?;
    let task = if cell.task == InitFamily::Plus { Task::all_charges() } else { Task::pair(cell.task, cell.n_sites) };
    let cfg = ExperimentConfig {
        n_sites: cell.n_sites,
        n_timesteps: plan.tf.unwrap_or(cell.n_sites),
        p: cell.p,
        n_records: plan.n,
        task,
        master_seed: cell.seed(plan.seed),
        engine: plan.engine,
        with_gates: plan.needs_gates(),
    };
    cfg.validate().map_err(|e| CliError::usage(format!("malformed plan: {e}")))?;
    let records = generate_records(&cfg)?;
    let lines: Vec<RecordLine> = records.iter().map(RecordLine::from_record).collect();
    let mut names = vec!["records.jsonl".to_string()];
    write_jsonl(Some(&dir.join("records.jsonl")), &lines)?;
    let backend = plan.backend_spec()?;
    for &mode in &plan.modes {
        let opts = DecodeOptions { mode, backend, neel_as_dicke: false };
        let results = decode(&records, &opts, cell.labels())?;
        write_jsonl(Some(&dir.join(results_name(mode))), &results)?;
        names.push(results_name(mode));
    }
    percolate_to(
        &records,
        &dir.join("percolation.csv"),
        &dir.join("percolation_summary.csv"),
        plan.boot,
        cfg.master_seed,
    )?;
    names.extend(["percolation.csv".to_string(), "percolation_summary.csv".to_string()]);
    names.into_iter().map(|n| sha256_file(&dir.join(&n)).map(|h| (n, h))).collect()
}

pub struct SweepReport {
    pub computed: usize,
    pub reused: usize,
    pub manifest: Manifest,
}

pub fn sweep(plan: &SweepPlan, plan_text: &str, out_dir: &Path) -> CliResult<SweepReport> {
    create_dir(out_dir)?;
    let manifest_path = out_dir.join(MANIFEST);
    let previous: Option<Manifest> =
        std::fs::read_to_string(&manifest_path).ok().and_then(|t| serde_json::from_str(&t).ok());
    let mut entries = Vec::new();
    let (mut computed, mut reused) = (0, 0);
    let mut all_records: Vec<MeasurementRecord> = Vec::new();
    let mut all_results: Vec<ResultLine> = Vec::new();
    for cell in cells(plan) {
        let fp = fingerprint(plan, &cell);
        let rel = format!("cells/{}", cell.dir_name());
        let dir = out_dir.join(&rel);
        let prior = previous.as_ref().and_then(|m| {
            m.cells
                .iter()
                .find(|e| e.n_sites == cell.n_sites && e.p == cell.p && e.task == cell.task && e.fingerprint == fp)
        });
        let files = match prior {
            Some(e) if files_intact(&dir, &e.files) => {
                reused += 1;
                e.files.clone()
            }
            _ => {
                computed += 1;
                run_cell(plan, &cell, &dir)?
            }
        };
        all_records.extend(read_records(&dir.join("records.jsonl"))?);
        for &mode in &plan.modes {
            all_results.extend(read_jsonl::<ResultLine>(&dir.join(results_name(mode)))?);
        }
        entries.push(CellEntry {
            n_sites: cell.n_sites,
            p: cell.p,
            task: cell.task,
            seed: cell.seed(plan.seed),
            fingerprint: fp,
            dir: rel,
            files,
        });
    }
    let analysis_dir = out_dir.join("analysis");
    let analysis = analyze(&all_results, GroupBy::ALL, plan.boot, plan.seed, eavesdrop_core::stats::DEFAULT_BINS)?;
    let mut written = write_all(&analysis_dir, &analysis)?;
    let (perc, perc_summary) = (out_dir.join("percolation.csv"), out_dir.join("percolation_summary.csv"));
    percolate_to(&all_records, &perc, &perc_summary, plan.boot, plan.seed)?;
    written.extend([perc, perc_summary]);
    let mut outputs = BTreeMap::new();
    for path in written {
        let rel = path.strip_prefix(out_dir).unwrap_or(&path).to_string_lossy().into_owned();
        outputs.insert(rel, sha256_file(&path)?);
    }
    let manifest = Manifest {
        tool: "eavesdrop".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        plan_sha256: sha256_hex(plan_text.as_bytes()),
        seed: plan.seed,
        cells: entries,
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::io(e.to_string()))?;
    std::fs::write(&manifest_path, text + "\n").at(&manifest_path)?;
    Ok(SweepReport { computed, reused, manifest })
}

pub fn run(a: &SweepArgs) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.plan).at(&a.plan)?;
    let plan = SweepPlan::parse(&text)?;
    let out_dir = a
        .out_dir
        .clone()
        .or_else(|| plan.out_dir.clone())
        .ok_or_else(|| CliError::usage("no output directory: set out_dir in the plan or pass --out-dir"))?;
    let report = pooled(a.workers.or(plan.workers), || sweep(&plan, &text, &out_dir))??;
    println!(
        "{} cells: {} computed, {} reused; manifest at {}",
        report.manifest.cells.len(),
        report.computed,
        report.reused,
        out_dir.join(MANIFEST).display()
    );
    Ok(())
}

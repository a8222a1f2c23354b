use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use eavesdrop_core::percolation::{find_charge_cut, percolation_summary, propagate_constraints, Provenance};
use eavesdrop_core::stats::DEFAULT_BOOTSTRAP;
use eavesdrop_core::MeasurementRecord;

use crate::error::{CliError, CliResult};
use crate::io::read_records;

#[derive(Args, Debug, Clone)]
pub struct PercolateArgs {
    /// Record files (repeatable).
    #[arg(long, required = true, num_args = 1..)]
    pub records: Vec<PathBuf>,
    /// Per-record CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-(L, p) CSV (defaults to `<out stem>_summary.csv`).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub struct RecordCut {
    pub has_cut: bool,
    pub charge: Option<usize>,
    pub matches: Option<bool>,
    pub n_measured: usize,
    pub n_inferred: usize,
}

pub fn cut_of(r: &MeasurementRecord) -> CliResult<RecordCut> {
    let grid = propagate_constraints(r).map_err(|e| CliError::data(format!("record seed {}: {e}", r.record_seed)))?;
    let cut = find_charge_cut(&grid);
    Ok(RecordCut {
        has_cut: cut.exists,
        charge: cut.extracted_charge,
        matches: cut.extracted_charge.zip(r.true_label).map(|(c, q)| c == q),
        n_measured: grid.count(Provenance::Measured),
        n_inferred: grid.count(Provenance::Inferred),
    })
}

fn default_summary(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or("percolation".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_summary.csv"))
}

/// Writes the per-record and per-group tables; returns `(L, p, fraction)`.
pub fn percolate_to(
    records: &[MeasurementRecord],
    out: &Path,
    summary: &Path,
    n_boot: usize,
    seed: u64,
) -> CliResult<Vec<(usize, f64, f64)>> {
    if records.is_empty() {
        return Err(CliError::data("no records"));
    }
    let cuts = records.iter().map(cut_of).collect::<CliResult<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record([
        "seed",
        "L",
        "tf",
        "p",
        "init",
        "label",
        "has_cut",
        "cut_charge",
        "cut_charge_matches_label",
        "n_measured",
        "n_inferred",
    ])?;
    let opt = |x: Option<usize>| x.map_or(String::new(), |v| v.to_string());
    // (with cut, matching) per group, for the match-rate column
    let mut matches: BTreeMap<(usize, u64), (usize, usize)> = BTreeMap::new();
    for (r, c) in records.iter().zip(&cuts) {
        w.write_record([
            r.record_seed.to_string(),
            r.n_sites().to_string(),
            r.layout().n_timesteps().to_string(),
            r.p.to_string(),
            r.init.as_str().to_string(),
            opt(r.true_label),
            c.has_cut.to_string(),
            opt(c.charge),
            c.matches.map_or(String::new(), |m| m.to_string()),
            c.n_measured.to_string(),
            c.n_inferred.to_string(),
        ])?;
        let m = matches.entry((r.n_sites(), r.p.to_bits())).or_default();
        if c.has_cut {
            m.0 += 1;
            m.1 += usize::from(c.matches == Some(true));
        }
    }
    w.flush()?;
    let rows = percolation_summary(records, n_boot, seed)?;
    let mut w = csv::Writer::from_path(summary)?;
    w.write_record(["L", "p", "n_records", "n_with_cut", "fraction_with_cut", "lo", "hi", "cut_charge_match_rate"])?;
    let mut fractions = Vec::with_capacity(rows.len());
    for row in rows {
        let (with_cut, matching) = matches[&(row.n_sites, row.p.to_bits())];
        let rate = if with_cut > 0 { (matching as f64 / with_cut as f64).to_string() } else { String::new() };
        let f = &row.fraction_with_cut;
        w.write_record([
            row.n_sites.to_string(),
            row.p.to_string(),
            row.n_records.to_string(),
            row.n_with_cut.to_string(),
            f.value.to_string(),
            f.lo.to_string(),
            f.hi.to_string(),
            rate,
        ])?;
        fractions.push((row.n_sites, row.p, f.value));
    }
    w.flush()?;
    Ok(fractions)
}

pub fn run(a: &PercolateArgs) -> CliResult<()> {
    let mut records = Vec::new();
    for path in &a.records {
        records.extend(read_records(path)?);
    }
    let summary = a.summary.clone().unwrap_or_else(|| default_summary(&a.out));
    for (l, p, f) in percolate_to(&records, &a.out, &summary, a.boot, a.seed)? {
        println!("L={l} p={p}: fraction with cut {f:.4}");
    }
    Ok(())
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use eavesdrop_core::decoder::BiasMode;
use eavesdrop_core::derive_stream_seed;
use eavesdrop_core::stats::{
    crossing_estimate, distribution_report, lower_bound_accuracy, order_parameter_table, CurvePoint,
    DistributionReport, Estimate, GroupKey, SampleSet, SummaryRow, DEFAULT_BINS, DEFAULT_BOOTSTRAP,
    DEFAULT_CROSSING_RESAMPLES,
};

use crate::error::{CliError, CliResult, IoContext};
use crate::io::{create_dir, read_jsonl, ResultLine};
use crate::svg::{line_chart, Series};

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    /// Result files from `decode` (repeatable).
    #[arg(long, required = true, num_args = 1..)]
    pub results: Vec<PathBuf>,
    /// Grouping fields, any of L,p,mode,task.
    #[arg(long, default_value = "L,p,mode")]
    pub group_by: String,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    pub boot: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GroupBy {
    pub n_sites: bool,
    pub p: bool,
    pub mode: bool,
    pub task: bool,
}

impl GroupBy {
    pub const ALL: GroupBy = GroupBy { n_sites: true, p: true, mode: true, task: true };

    pub fn parse(s: &str) -> CliResult<Self> {
        let mut g = GroupBy { n_sites: false, p: false, mode: false, task: false };
        for field in s.split(',').map(str::trim).filter(|f| !f.is_empty()) {
            match field {
                "L" => g.n_sites = true,
                "p" => g.p = true,
                "mode" => g.mode = true,
                "task" => g.task = true,
                other => return Err(CliError::usage(format!("unknown --group-by field `{other}`"))),
            }
        }
        Ok(g)
    }
}

/// Group coordinates; `None` marks a field that was not grouped on.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Key {
    pub n_sites: Option<usize>,
    pub p_bits: Option<u64>,
    pub mode: Option<usize>,
    pub task: Option<String>,
}

impl Key {
    fn of(r: &ResultLine, g: GroupBy) -> Self {
        Key {
            n_sites: g.n_sites.then_some(r.n_sites),
            p_bits: g.p.then_some(r.p.to_bits()),
            mode: g.mode.then(|| BiasMode::ALL.iter().position(|m| *m == r.mode).unwrap_or(0)),
            task: g.task.then(|| r.task.clone()),
        }
    }

    pub fn p(&self) -> Option<f64> {
        self.p_bits.map(f64::from_bits)
    }

    pub fn mode(&self) -> Option<BiasMode> {
        self.mode.map(|i| BiasMode::ALL[i])
    }

    fn core_key(&self) -> GroupKey {
        GroupKey {
            n_sites: self.n_sites.unwrap_or(0),
            p: self.p().unwrap_or(f64::NAN),
            mode: self.mode().unwrap_or_default(),
            task: self.task.clone().unwrap_or_else(|| "all".into()),
        }
    }

    fn cells(&self) -> [String; 4] {
        [
            self.n_sites.map_or("all".into(), |l| l.to_string()),
            self.p().map_or("all".into(), |p| p.to_string()),
            self.mode().map_or("all".into(), |m| m.as_str().to_string()),
            self.task.clone().unwrap_or_else(|| "all".into()),
        ]
    }

    /// Curve family label: every grouped field except `L` and `p`.
    fn family(&self) -> (Option<usize>, Option<String>) {
        (self.mode, self.task.clone())
    }
}

pub struct Group {
    pub key: Key,
    pub row: SummaryRow,
    pub distribution: DistributionReport,
    /// Bound for two-class tasks with a single timestep count.
    pub lower_bound: Option<f64>,
}

pub struct CrossingRow {
    pub observable: &'static str,
    pub mode: Option<BiasMode>,
    pub task: Option<String>,
    pub l_a: usize,
    pub l_b: usize,
    pub crossing: Option<eavesdrop_core::stats::Crossing>,
}

pub struct Analysis {
    pub groups: Vec<Group>,
    pub crossings: Vec<CrossingRow>,
}

pub fn analyze(results: &[ResultLine], g: GroupBy, n_boot: usize, seed: u64, bins: usize) -> CliResult<Analysis> {
    if results.is_empty() {
        return Err(CliError::data("no results to analyze"));
    }
    let mut sets: BTreeMap<Key, (SampleSet, Vec<usize>, bool)> = BTreeMap::new();
    for (i, r) in results.iter().enumerate() {
        let key = Key::of(r, g);
        let label = r.label.ok_or_else(|| CliError::data(format!("result {} has no true label", i + 1)))?;
        let entry = sets.entry(key.clone()).or_insert_with(|| (SampleSet::new(key.core_key()), Vec::new(), true));
        entry.0.push(&r.to_outcome()?, label).map_err(|e| CliError::data(format!("result {}: {e}", i + 1)))?;
        if !entry.1.contains(&r.tf) {
            entry.1.push(r.tf);
        }
        entry.2 &= r.task.ends_with("-pair");
    }
    let keys: Vec<Key> = sets.keys().cloned().collect();
    let sample_sets: Vec<SampleSet> = sets.values().map(|v| v.0.clone()).collect();
    let rows = order_parameter_table(&sample_sets, n_boot, seed)?;
    let mut groups = Vec::with_capacity(rows.len());
    for ((key, row), (set, tfs, pair)) in keys.into_iter().zip(rows).zip(sets.into_values()) {
        let lower_bound = match (key.n_sites, key.p(), tfs.as_slice(), pair) {
            (Some(l), Some(p), [tf], true) => Some(lower_bound_accuracy(p, *tf, l)?),
            _ => None,
        };
        let distribution = distribution_report(&set.p_corr, bins)?;
        groups.push(Group { key, row, distribution, lower_bound });
    }
    let crossings = if g.n_sites && g.p { crossings(&groups, seed)? } else { Vec::new() };
    Ok(Analysis { groups, crossings })
}

type Observable = (&'static str, fn(&SummaryRow) -> Option<Estimate>);

const CROSSING_OBSERVABLES: [Observable; 2] =
    [("binder_entropy", |r| r.binder_entropy), ("binder_pcorr", |r| r.binder_pcorr)];

fn curve(groups: &[&Group], l: usize, obs: fn(&SummaryRow) -> Option<Estimate>, grid: &[u64]) -> Vec<CurvePoint> {
    grid.iter()
        .filter_map(|&pb| {
            let g = groups.iter().find(|g| g.key.n_sites == Some(l) && g.key.p_bits == Some(pb))?;
            obs(&g.row).map(|e| CurvePoint { p: f64::from_bits(pb), value: e.value, err: e.stderr })
        })
        .collect()
}

fn crossings(groups: &[Group], seed: u64) -> CliResult<Vec<CrossingRow>> {
    let mut families: BTreeMap<(Option<usize>, Option<String>), Vec<&Group>> = BTreeMap::new();
    for g in groups {
        families.entry(g.key.family()).or_default().push(g);
    }
    let mut out = Vec::new();
    let mut stream = 0u64;
    for ((mode, task), members) in families {
        let mut sizes: Vec<usize> = members.iter().filter_map(|g| g.key.n_sites).collect();
        sizes.sort_unstable();
        sizes.dedup();
        for (name, obs) in CROSSING_OBSERVABLES {
            for (i, &la) in sizes.iter().enumerate() {
                for &lb in &sizes[i + 1..] {
                    let grid_of = |l: usize| -> Vec<u64> {
                        members
                            .iter()
                            .filter(|g| g.key.n_sites == Some(l) && obs(&g.row).is_some())
                            .filter_map(|g| g.key.p_bits)
                            .collect()
                    };
                    let gb = grid_of(lb);
                    let mut grid: Vec<u64> = grid_of(la).into_iter().filter(|p| gb.contains(p)).collect();
                    grid.sort_by(|x, y| f64::from_bits(*x).total_cmp(&f64::from_bits(*y)));
                    let crossing = if grid.len() >= 2 {
                        let a = curve(&members, la, obs, &grid);
                        let b = curve(&members, lb, obs, &grid);
                        crossing_estimate(
                            &a,
                            &b,
                            DEFAULT_CROSSING_RESAMPLES,
                            derive_stream_seed(seed ^ 0xc505, stream),
                        )?
                    } else {
                        None
                    };
                    stream += 1;
                    out.push(CrossingRow {
                        observable: name,
                        mode: mode.map(|m| BiasMode::ALL[m]),
                        task: task.clone(),
                        l_a: la,
                        l_b: lb,
                        crossing,
                    });
                }
            }
        }
    }
    Ok(out)
}

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn est(e: &Estimate) -> [String; 3] {
    [num(e.value), num(e.lo), num(e.hi)]
}

fn opt_est(e: &Option<Estimate>) -> [String; 3] {
    e.as_ref().map_or([String::new(), String::new(), String::new()], est)
}

pub const SUMMARY_HEADER: [&str; 29] = [
    "L",
    "p",
    "mode",
    "task",
    "n_samples",
    "accuracy",
    "accuracy_lo",
    "accuracy_hi",
    "theoretical_accuracy",
    "theoretical_accuracy_lo",
    "theoretical_accuracy_hi",
    "mean_entropy",
    "mean_entropy_lo",
    "mean_entropy_hi",
    "mean_p_corr",
    "mean_p_corr_lo",
    "mean_p_corr_hi",
    "mean_purity",
    "mean_purity_lo",
    "mean_purity_hi",
    "order_param",
    "binder_pcorr",
    "binder_pcorr_lo",
    "binder_pcorr_hi",
    "binder_entropy",
    "binder_entropy_lo",
    "binder_entropy_hi",
    "tail_weight",
    "lower_bound",
];

fn write_summary(path: &Path, a: &Analysis) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for g in &a.groups {
        let r = &g.row;
        let mut rec: Vec<String> = g.key.cells().to_vec();
        rec.push(r.n_samples.to_string());
        for e in [&r.accuracy, &r.theoretical_accuracy, &r.mean_entropy, &r.mean_p_corr, &r.mean_purity] {
            rec.extend(est(e));
        }
        rec.push(num(r.order_param));
        rec.extend(opt_est(&r.binder_pcorr));
        rec.extend(opt_est(&r.binder_entropy));
        rec.push(num(r.tail_weight));
        rec.push(g.lower_bound.map_or(String::new(), num));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_distributions(path: &Path, a: &Analysis) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["L", "p", "mode", "task", "bin_lo", "bin_hi", "count", "cdf"])?;
    for g in &a.groups {
        let d = &g.distribution;
        for (i, (&c, &cdf)) in d.counts.iter().zip(&d.cdf).enumerate() {
            let mut rec: Vec<String> = g.key.cells().to_vec();
            rec.extend([num(d.edges[i]), num(d.edges[i + 1]), c.to_string(), num(cdf)]);
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_crossings(path: &Path, a: &Analysis) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["observable", "mode", "task", "L_a", "L_b", "p_star", "p_lo", "p_hi"])?;
    for c in &a.crossings {
        let (ps, lo, hi) = c
            .crossing
            .as_ref()
            .map_or((String::new(), String::new(), String::new()), |x| (num(x.p_star), num(x.lo), num(x.hi)));
        w.write_record([
            c.observable.to_string(),
            c.mode.map_or("all".into(), |m| m.as_str().to_string()),
            c.task.clone().unwrap_or_else(|| "all".into()),
            c.l_a.to_string(),
            c.l_b.to_string(),
            ps,
            lo,
            hi,
        ])?;
    }
    w.flush()?;
    Ok(())
}

type PlotValue = fn(&SummaryRow) -> Option<(f64, f64)>;

const PLOTS: [(&str, &str, PlotValue); 6] = [
    ("accuracy", "accuracy", |r| Some((r.accuracy.value, r.accuracy.stderr))),
    ("mean_entropy", "mean posterior entropy (bits)", |r| Some((r.mean_entropy.value, r.mean_entropy.stderr))),
    ("order_param", "1 - E[P_corr]", |r| Some((r.order_param, r.mean_p_corr.stderr))),
    ("binder_entropy", "Binder ratio of entropy", |r| r.binder_entropy.map(|e| (e.value, e.stderr))),
    ("binder_pcorr", "Binder ratio of P_corr", |r| r.binder_pcorr.map(|e| (e.value, e.stderr))),
    ("tail_weight", "P(P_corr < 0.4)", |r| Some((r.tail_weight, 0.0))),
];

fn write_plots(dir: &Path, a: &Analysis) -> CliResult<Vec<PathBuf>> {
    if a.groups.iter().any(|g| g.key.p_bits.is_none()) {
        return Ok(Vec::new());
    }
    let mut written = Vec::new();
    for (name, y_label, value) in PLOTS {
        let mut series: BTreeMap<(Option<usize>, Option<usize>, Option<String>), Series> = BTreeMap::new();
        for g in &a.groups {
            let Some((v, e)) = value(&g.row) else { continue };
            let id = (g.key.n_sites, g.key.mode, g.key.task.clone());
            let s = series.entry(id).or_insert_with(|| {
                let mut parts = Vec::new();
                if let Some(l) = g.key.n_sites {
                    parts.push(format!("L={l}"));
                }
                if let Some(m) = g.key.mode() {
                    parts.push(m.as_str().to_string());
                }
                if let Some(t) = &g.key.task {
                    parts.push(t.clone());
                }
                Series { name: parts.join(" "), points: Vec::new() }
            });
            s.points.push((g.key.p().unwrap_or(f64::NAN), v, e));
        }
        let mut series: Vec<Series> = series.into_values().collect();
        for s in &mut series {
            s.points.sort_by(|x, y| x.0.total_cmp(&y.0));
        }
        let path = dir.join(format!("{name}.svg"));
        std::fs::write(&path, line_chart(name, "p", y_label, &series)).at(&path)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes every analysis output into `dir`.
pub fn write_all(dir: &Path, a: &Analysis) -> CliResult<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut written = Vec::new();
    for (name, f) in [
        ("summary.csv", write_summary as fn(&Path, &Analysis) -> CliResult<()>),
        ("distributions.csv", write_distributions),
        ("crossings.csv", write_crossings),
    ] {
        let path = dir.join(name);
        f(&path, a)?;
        written.push(path);
    }
    written.extend(write_plots(dir, a)?);
    Ok(written)
}

pub fn run(a: &AnalyzeArgs) -> CliResult<()> {
    let g = GroupBy::parse(&a.group_by)?;
    if a.bins < 2 {
        return Err(CliError::usage("--bins must be at least 2"));
    }
    let mut results = Vec::new();
    for path in &a.results {
        results.extend(read_jsonl::<ResultLine>(path)?);
    }
    let analysis = analyze(&results, g, a.boot, a.seed, a.bins)?;
    let written = write_all(&a.out_dir, &analysis)?;
    for c in analysis.crossings.iter().filter_map(|c| c.crossing.as_ref().map(|x| (c, x))) {
        let (c, x) = c;
        println!(
            "{} crossing L={}/{} {}: p* = {:.4} [{:.4}, {:.4}]",
            c.observable,
            c.l_a,
            c.l_b,
            c.mode.map_or("all", |m| m.as_str()),
            x.p_star,
            x.lo,
            x.hi
        );
    }
    eprintln!("wrote {} files to {}", written.len(), a.out_dir.display());
    Ok(())
}

use clap::Subcommand;
use eavesdrop_core::qsim::haar_average_born;
use eavesdrop_core::sep::enumerate::{outcome_distribution, total_variation};
use eavesdrop_core::sep::{
    evolve_dense_likelihood, generate_model_record, sample_outcomes_at, verify_doubled_channel, HopSchedule,
    SamplerMethod,
};
use eavesdrop_core::{build_layout, derive_stream_seed, stream_rng, InitKind, MeasurementRecord};

use crate::error::{CliError, CliResult};

const HAAR_TOLERANCE: f64 = 0.01;
const NORMALIZATION_TOLERANCE: f64 = 1e-10;
const TV_TOLERANCE: f64 = 0.02;
/// Worst-case trajectory count the enumeration check accepts.
const ENUMERATION_BUDGET: f64 = 1e8;

#[derive(Subcommand, Debug, Clone)]
pub enum VerifyCommand {
    /// Averaged doubled two-site channel against the exclusion-process transfer matrix.
    HaarAverage {
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Haar-averaged Born probability of a fixed record against the dense model likelihood.
    BornEquivalence {
        #[arg(long = "L", default_value_t = 4)]
        n_sites: usize,
        #[arg(long, default_value_t = 2)]
        tf: usize,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Outcome distributions summed by brute force, and the sampler against them.
    Enumeration {
        #[arg(long = "L", default_value_t = 4)]
        n_sites: usize,
        #[arg(long, default_value_t = 2)]
        tf: usize,
        /// Sampler draws for the total-variation check (0 skips it).
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn check(ok: bool, what: &str) -> &'static str {
    if ok {
        "ok"
    } else {
        eprintln!("FAILED: {what}");
        "FAIL"
    }
}

fn haar_average(n: usize, seed: u64) -> CliResult<bool> {
    if n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let report = verify_doubled_channel(n, &mut stream_rng(seed));
    let tol = HAAR_TOLERANCE;
    let rows = [
        ("transfer-matrix deviation", report.max_deviation, tol),
        ("full doubled-channel deviation", report.full_max_deviation, tol),
        ("charge-0 block deviation", report.sector0_deviation, 1e-15),
        ("charge-2 block deviation", report.sector2_deviation, 1e-12),
    ];
    println!("haar-average: n = {n}");
    let mut ok = true;
    for (name, value, tol) in rows {
        let pass = value <= tol;
        ok &= pass;
        println!("  {name:32} {value:.3e}  (tol {tol:.1e})  {}", check(pass, name));
    }
    Ok(ok)
}

/// The record checked by `born-equivalence`: the first seeded model record
/// with at least two events that both labels can produce.
pub fn fixed_record(n_sites: usize, tf: usize, seed: u64) -> CliResult<MeasurementRecord> {
    let layout = build_layout(n_sites, tf).map_err(|e| CliError::usage(e.to_string()))?;
    let labels = [n_sites / 2, n_sites / 2 - 1];
    let schedule = HopSchedule::unbiased();
    for k in 0..10_000 {
        let (r, _) = generate_model_record(
            &layout,
            0.3,
            InitKind::Dicke(labels[0]),
            derive_stream_seed(seed, k),
            false,
            SamplerMethod::Trajectory,
        )?;
        if r.events().len() < 2 {
            continue;
        }
        let finite = labels
            .iter()
            .map(|&q| evolve_dense_likelihood(&r, InitKind::Dicke(q), &schedule).map(f64::is_finite))
            .collect::<eavesdrop_core::Result<Vec<bool>>>()?;
        if finite.iter().all(|&f| f) {
            return Ok(r);
        }
    }
    Err(CliError::data("no suitable record found"))
}

fn born_equivalence(n_sites: usize, tf: usize, n: usize, seed: u64) -> CliResult<bool> {
    if !(2..=12).contains(&n_sites) {
        return Err(CliError::usage("--L must be between 2 and 12"));
    }
    if n < 2 {
        return Err(CliError::usage("--n must be at least 2"));
    }
    let record = fixed_record(n_sites, tf, seed)?;
    let layout = record.layout().clone();
    println!("born-equivalence: L = {n_sites}, tf = {tf}, {} events, n = {n}", record.events().len());
    let mut rng = stream_rng(derive_stream_seed(seed, u64::MAX));
    let mut ok = true;
    let mut conclusive = true;
    for q in [n_sites / 2, n_sites / 2 - 1] {
        let init = InitKind::Dicke(q);
        let exact = evolve_dense_likelihood(&record, init, &HopSchedule::unbiased())?.exp();
        let (mean, se) = haar_average_born(&layout, init, record.events(), n, &mut rng)?;
        let z = if se > 0.0 { (mean - exact).abs() / se } else { f64::INFINITY };
        let pass = (mean - exact).abs() <= 3.0 * se + 1e-12;
        conclusive &= se <= 0.1 * exact;
        ok &= pass;
        println!(
            "  Q = {q}: model {exact:.6e}  Haar {mean:.6e} +- {se:.2e}  ({z:.2} sigma)  {}",
            check(pass, &format!("Q = {q} beyond 3 standard errors"))
        );
    }
    if !conclusive {
        eprintln!("warning: inconclusive, standard errors exceed 10% of the likelihood; increase --n");
        return Ok(true);
    }
    Ok(ok)
}

/// Sparse placement pattern for the sampler check.
pub fn sparse_placements(n_sites: usize, n_rounds: usize) -> Vec<(usize, usize)> {
    (0..n_rounds).flat_map(|t| (0..n_sites).map(move |s| (t, s))).filter(|&(t, s)| (t + 2 * s) % 3 == 0).collect()
}

fn enumeration(n_sites: usize, tf: usize, samples: usize, seed: u64) -> CliResult<bool> {
    let layout = build_layout(n_sites, tf).map_err(|e| CliError::usage(e.to_string()))?;
    let cost = 2f64.powi(layout.n_gates() as i32) * (0..=n_sites).map(|q| binomial(n_sites, q)).fold(0.0, f64::max);
    if cost > ENUMERATION_BUDGET {
        return Err(CliError::usage(format!("L = {n_sites}, tf = {tf} is too large to enumerate")));
    }
    let schedule = HopSchedule::unbiased();
    let all: Vec<(usize, usize)> = (0..layout.n_rounds()).flat_map(|t| (0..n_sites).map(move |s| (t, s))).collect();
    println!("enumeration: L = {n_sites}, tf = {tf}, every site measured every round");
    let mut ok = true;
    for q in 0..=n_sites {
        let total: f64 = outcome_distribution(&layout, &all, InitKind::Dicke(q), &schedule)?.values().sum();
        let pass = (total - 1.0).abs() <= NORMALIZATION_TOLERANCE;
        ok &= pass;
        println!(
            "  Q = {q}: sum P(m|Q) - 1 = {:+.3e}  {}",
            total - 1.0,
            check(pass, &format!("normalization at Q = {q}"))
        );
    }
    if samples > 0 {
        let placements = sparse_placements(n_sites, layout.n_rounds());
        println!("sampler vs enumeration: {} placements, {samples} samples", placements.len());
        for q in [n_sites / 2, n_sites / 2 - 1] {
            let init = InitKind::Dicke(q);
            let exact = outcome_distribution(&layout, &placements, init, &schedule)?;
            let mut rng = stream_rng(derive_stream_seed(seed, q as u64));
            let draws = (0..samples)
                .map(|_| {
                    sample_outcomes_at(&layout, &placements, init, &schedule, SamplerMethod::Marginal, &mut rng)
                        .map(|s| s.events.iter().map(|e| e.outcome).collect::<Vec<bool>>())
                })
                .collect::<eavesdrop_core::Result<Vec<_>>>()?;
            let tv = total_variation(&exact, &draws);
            let pass = tv < TV_TOLERANCE;
            ok &= pass;
            println!(
                "  Q = {q}: TV distance {tv:.4}  (tol {TV_TOLERANCE})  {}",
                check(pass, &format!("TV at Q = {q}"))
            );
        }
    }
    Ok(ok)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn run(c: &VerifyCommand) -> CliResult<()> {
    let ok = match *c {
        VerifyCommand::HaarAverage { n, seed } => haar_average(n, seed)?,
        VerifyCommand::BornEquivalence { n_sites, tf, n, seed } => born_equivalence(n_sites, tf, n, seed)?,
        VerifyCommand::Enumeration { n_sites, tf, samples, seed } => enumeration(n_sites, tf, samples, seed)?,
    };
    if ok {
        Ok(())
    } else {
        Err(CliError::verify("verification failed"))
    }
}

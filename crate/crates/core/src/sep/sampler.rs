//! Born-weighted records drawn from the exclusion-process model itself.

use rand::seq::index::sample as sample_indices;
use rand::Rng;

use super::dense::ProbabilityState;
use super::transfer::HopSchedule;
use crate::error::{invalid, Error, Result};
use crate::layout::CircuitLayout;
use crate::qsim::sample_gate_params;
use crate::record::{config_from_bits, CircuitRealization, InitKind, MeasurementEvent, MeasurementRecord};
use crate::seed::stream_rng;

/// How outcomes are drawn. Both produce records with probability exactly
/// `P(m | init)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerMethod {
    /// Evolve the dense distribution; at each measurement draw the outcome
    /// from its conditional marginal and project.
    Marginal,
    /// Draw one stochastic charge trajectory and read outcomes off it. Linear
    /// in spacetime volume and also yields the ground-truth trajectory.
    Trajectory,
}

/// Site occupations of one classical trajectory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChargeTrajectory {
    pub initial: Vec<bool>,
    /// `rounds[tau]`: occupations right after the gates of half-layer `tau`.
    pub rounds: Vec<Vec<bool>>,
}

impl ChargeTrajectory {
    pub fn charge(&self) -> usize {
        self.initial.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug)]
pub struct ModelSample {
    pub events: Vec<MeasurementEvent>,
    /// Total charge: the initial state's, or a terminal draw for `plus`.
    pub label: usize,
    pub trajectory: Option<ChargeTrajectory>,
}

/// Tolerance on conditional marginals before they are treated as a numeric
/// failure.
const MARGINAL_SLACK: f64 = 1e-9;

fn sample_initial_bits<R: Rng + ?Sized>(n: usize, kind: InitKind, rng: &mut R) -> Vec<bool> {
    match kind {
        InitKind::Dicke(q) => {
            let mut bits = vec![false; n];
            for i in sample_indices(rng, n, q).into_iter() {
                bits[i] = true;
            }
            bits
        }
        InitKind::Neel | InitKind::NeelFlip => {
            let c = kind.product_config(n).expect("product kind");
            (0..n).map(|s| crate::record::site_bit(c, s, n)).collect()
        }
        InitKind::Plus => (0..n).map(|_| rng.random::<bool>()).collect(),
    }
}

fn sample_with<R, F>(
    layout: &CircuitLayout,
    kind: InitKind,
    schedule: &HopSchedule,
    method: SamplerMethod,
    rng: &mut R,
    mut measure_here: F,
) -> Result<ModelSample>
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize, &mut R) -> bool,
{
    schedule.validate(layout)?;
    let n = layout.n_sites();
    kind.validate(n)?;
    let mut events = Vec::new();
    match method {
        SamplerMethod::Marginal => {
            let mut state = ProbabilityState::new(n, kind)?;
            for tau in 0..layout.n_rounds() {
                let first = layout.first_gate_index(tau);
                for (j, left) in layout.left_sites(tau).enumerate() {
                    state.apply_transfer(left, schedule.hop(first + j));
                }
                for site in 0..n {
                    if !measure_here(tau, site, rng) {
                        continue;
                    }
                    let m1 = state.marginal_one(site);
                    if !(-MARGINAL_SLACK..=1.0 + MARGINAL_SLACK).contains(&m1) || m1.is_nan() {
                        return Err(Error::Numeric(format!("marginal {m1} at round {tau}, site {site}")));
                    }
                    let outcome = rng.random::<f64>() < m1.clamp(0.0, 1.0);
                    state.project(site, outcome);
                    if state.is_zero() {
                        return Err(Error::Numeric(format!("sampled a zero-probability outcome at ({tau}, {site})")));
                    }
                    events.push(MeasurementEvent { half_layer: tau, site, outcome });
                }
            }
            let label = match kind.charge(n) {
                Some(q) => q,
                None => {
                    let masses: Vec<f64> = (0..=n).map(|q| state.sector_mass(q)).collect();
                    let total: f64 = masses.iter().sum();
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = masses.iter().rposition(|&m| m > 0.0).expect("nonzero state");
                    for (q, &m) in masses.iter().enumerate() {
                        if u < m {
                            pick = q;
                            break;
                        }
                        u -= m;
                    }
                    pick
                }
            };
            Ok(ModelSample { events, label, trajectory: None })
        }
        SamplerMethod::Trajectory => {
            let mut bits = sample_initial_bits(n, kind, rng);
            let initial = bits.clone();
            let mut rounds = Vec::with_capacity(layout.n_rounds());
            for tau in 0..layout.n_rounds() {
                let first = layout.first_gate_index(tau);
                for (j, left) in layout.left_sites(tau).enumerate() {
                    if bits[left] != bits[left + 1] && rng.random::<f64>() < schedule.hop(first + j) {
                        bits.swap(left, left + 1);
                    }
                }
                for (site, &b) in bits.iter().enumerate() {
                    if measure_here(tau, site, rng) {
                        events.push(MeasurementEvent { half_layer: tau, site, outcome: b });
                    }
                }
                rounds.push(bits.clone());
            }
            let trajectory = ChargeTrajectory { initial, rounds };
            Ok(ModelSample { events, label: trajectory.charge(), trajectory: Some(trajectory) })
        }
    }
}

/// Draws a record: every site of every round is measured independently with
/// probability `p`, outcomes follow the model's Born weights.
pub fn sample_record_from_model<R: Rng + ?Sized>(
    layout: &CircuitLayout,
    p: f64,
    kind: InitKind,
    schedule: &HopSchedule,
    method: SamplerMethod,
    rng: &mut R,
) -> Result<ModelSample> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("p={p} outside [0, 1]"));
    }
    sample_with(layout, kind, schedule, method, rng, |_, _, r| r.random::<f64>() < p)
}

/// Draws outcomes at fixed `(half_layer, site)` placements.
pub fn sample_outcomes_at<R: Rng + ?Sized>(
    layout: &CircuitLayout,
    placements: &[(usize, usize)],
    kind: InitKind,
    schedule: &HopSchedule,
    method: SamplerMethod,
    rng: &mut R,
) -> Result<ModelSample> {
    let n = layout.n_sites();
    let mut mask = vec![false; layout.n_rounds() * n];
    for &(tau, site) in placements {
        if tau >= layout.n_rounds() || site >= n {
            return invalid(format!("placement ({tau}, {site}) outside the layout"));
        }
        mask[tau * n + site] = true;
    }
    sample_with(layout, kind, schedule, method, rng, |tau, site, _| mask[tau * n + site])
}

/// One record for the batch pipeline.
///
/// The record stream first draws a full circuit realization (gate order,
/// alpha, rho, psi, chi, xi each), then samples the trajectory with hop
/// probability `xi` at every gate. Averaged over `xi` this is the unbiased
/// model; conditioned on `xi` it is the phase-averaged quantum circuit, which
/// is what a decoder that knows the hop parameters sees.
pub fn generate_model_record(
    layout: &CircuitLayout,
    p: f64,
    init: InitKind,
    record_seed: u64,
    with_gates: bool,
    method: SamplerMethod,
) -> Result<(MeasurementRecord, Option<ChargeTrajectory>)> {
    let mut rng = stream_rng(record_seed);
    let gates = (0..layout.n_gates()).map(|_| sample_gate_params(&mut rng)).collect();
    let realization = CircuitRealization::new(layout.clone(), gates, record_seed)?;
    let schedule = HopSchedule::from_realization(&realization, false);
    let sample = sample_record_from_model(layout, p, init, &schedule, method, &mut rng)?;
    let record = MeasurementRecord::new(
        layout.clone(),
        sample.events,
        init.family(),
        Some(sample.label),
        record_seed,
        p,
        with_gates.then_some(realization),
    )?;
    Ok((record, sample.trajectory))
}

/// Basis-state index of a trajectory slice.
pub fn config_of(bits: &[bool]) -> usize {
    config_from_bits(bits)
}

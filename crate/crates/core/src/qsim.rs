//! Exact statevector simulation of the monitored circuit.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::gate::GateParams;
use crate::layout::CircuitLayout;
use crate::record::{site_bit, CircuitRealization, InitKind, MeasurementEvent, MeasurementRecord};
use crate::seed::stream_rng;

/// Largest chain the statevector backend accepts (2^26 amplitudes, 1 GiB).
pub const MAX_SITES: usize = 26;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    amplitudes: Vec<Complex64>,
    n_sites: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl QuantumState {
    pub fn new(n_sites: usize, kind: InitKind) -> Result<Self> {
        if n_sites == 0 || n_sites > MAX_SITES {
            return invalid(format!("statevector supports 1..={MAX_SITES} sites, got {n_sites}"));
        }
        kind.validate(n_sites)?;
        let dim = 1usize << n_sites;
        let zero = Complex64::new(0.0, 0.0);
        let mut amplitudes = vec![zero; dim];
        match kind {
            InitKind::Dicke(q) => {
                let a = Complex64::new(binomial(n_sites, q).recip().sqrt(), 0.0);
                for (x, amp) in amplitudes.iter_mut().enumerate() {
                    if x.count_ones() as usize == q {
                        *amp = a;
                    }
                }
            }
            InitKind::Neel | InitKind::NeelFlip => {
                amplitudes[kind.product_config(n_sites).expect("product kind")] = Complex64::new(1.0, 0.0);
            }
            InitKind::Plus => {
                let a = Complex64::new((dim as f64).recip().sqrt(), 0.0);
                amplitudes.fill(a);
            }
        }
        Ok(Self { amplitudes, n_sites })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Total weight on bitstrings of charge `q`.
    pub fn sector_weight(&self, q: usize) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(x, _)| x.count_ones() as usize == q)
            .map(|(_, a)| a.norm_sqr())
            .sum()
    }

    /// Applies the gate `g` to sites `(left, left + 1)` in place.
    pub fn apply_gate(&mut self, left: usize, g: &GateParams) -> Result<()> {
        if left + 1 >= self.n_sites {
            return invalid(format!("gate at {left} outside {} sites", self.n_sites));
        }
        let u = g.unitary();
        let (u11, u12, u21, u22, u33) = (u[1][1], u[1][2], u[2][1], u[2][2], u[3][3]);
        // right site of the pair is the lower bit
        let stride = 1usize << (self.n_sites - 2 - left);
        let dim = self.amplitudes.len();
        let amps = &mut self.amplitudes;
        for block in (0..dim).step_by(4 * stride) {
            for i00 in block..block + stride {
                let i01 = i00 + stride;
                let i10 = i01 + stride;
                let i11 = i10 + stride;
                let (a01, a10) = (amps[i01], amps[i10]);
                amps[i01] = u11 * a01 + u12 * a10;
                amps[i10] = u21 * a01 + u22 * a10;
                amps[i11] *= u33;
            }
        }
        Ok(())
    }

    /// Weight of the `site = 1` branch.
    pub fn probability_one(&self, site: usize) -> f64 {
        let n = self.n_sites;
        self.amplitudes.iter().enumerate().filter(|(x, _)| site_bit(*x, site, n)).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Zeroes the branch inconsistent with `outcome` without renormalizing and
    /// returns the remaining squared norm.
    pub fn project_site(&mut self, site: usize, outcome: bool) -> Result<f64> {
        if site >= self.n_sites {
            return invalid(format!("site {site} outside {} sites", self.n_sites));
        }
        let n = self.n_sites;
        let mut kept = 0.0;
        for (x, a) in self.amplitudes.iter_mut().enumerate() {
            if site_bit(x, site, n) == outcome {
                kept += a.norm_sqr();
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        Ok(kept)
    }

    fn rescale(&mut self, norm_sqr: f64) {
        let s = norm_sqr.sqrt().recip();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
    }

    /// Born-rule measurement of the local charge at `site`.
    pub fn measure_site<R: Rng + ?Sized>(&mut self, site: usize, rng: &mut R) -> Result<bool> {
        if site >= self.n_sites {
            return invalid(format!("site {site} outside {} sites", self.n_sites));
        }
        let total = self.norm_sqr();
        if !(total > 0.0) {
            return Err(Error::State("measuring a zero-norm state".into()));
        }
        let p1 = (self.probability_one(site) / total).clamp(0.0, 1.0);
        let outcome = rng.random::<f64>() < p1;
        let kept = self.project_site(site, outcome)?;
        self.rescale(kept);
        Ok(outcome)
    }

    /// Terminal projective measurement of the total charge.
    pub fn measure_global_charge<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let total = self.norm_sqr();
        if !(total > 0.0) {
            return Err(Error::State("measuring a zero-norm state".into()));
        }
        let weights: Vec<f64> = (0..=self.n_sites).map(|q| self.sector_weight(q)).collect();
        let mut u = rng.random::<f64>() * total;
        let mut charge = self.n_sites;
        for (q, w) in weights.iter().enumerate() {
            if u < *w {
                charge = q;
                break;
            }
            u -= w;
        }
        // guard against rounding landing on an empty sector
        if weights[charge] == 0.0 {
            charge = weights.iter().rposition(|w| *w > 0.0).expect("nonzero norm");
        }
        for (x, a) in self.amplitudes.iter_mut().enumerate() {
            if x.count_ones() as usize != charge {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        self.rescale(weights[charge]);
        Ok(charge)
    }
}

pub fn init_state(n_sites: usize, kind: InitKind) -> Result<QuantumState> {
    QuantumState::new(n_sites, kind)
}

/// Draws phases uniformly in `[0, 2pi)` and `xi` uniformly in `[0, 1)`, in
/// the order alpha, rho, psi, chi, xi.
pub fn sample_gate_params<R: Rng + ?Sized>(rng: &mut R) -> GateParams {
    let mut phase = || {
        let v = rng.random::<f64>() * TAU;
        if v >= TAU {
            0.0
        } else {
            v
        }
    };
    let (alpha, rho, psi, chi) = (phase(), phase(), phase(), phase());
    GateParams { alpha, rho, psi, chi, xi: rng.random::<f64>() }
}

/// Where a trajectory's gates come from.
#[derive(Clone, Copy, Debug)]
pub enum GateSource<'a> {
    /// Fresh Haar draws from the record stream.
    Haar,
    /// The same parameters at every placement (testing hook).
    Forced(GateParams),
    /// A fixed realization.
    Given(&'a CircuitRealization),
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub record: MeasurementRecord,
    pub realization: CircuitRealization,
    pub state: QuantumState,
}

/// Runs one monitored trajectory.
///
/// For each half-layer the gates are drawn (pair order) and applied, then
/// every site in turn flips a measurement coin with probability `p` and, if
/// measured, draws its Born outcome. All draws come from one stream seeded by
/// `record_seed`. `plus` initial states end with a global charge measurement
/// that supplies the label.
pub fn run_trajectory(
    layout: &CircuitLayout,
    p: f64,
    init: InitKind,
    record_seed: u64,
    gates: GateSource<'_>,
    embed_gates: bool,
) -> Result<Trajectory> {
    if !(0.0..=1.0).contains(&p) {
        return invalid(format!("p={p} outside [0, 1]"));
    }
    if let GateSource::Given(r) = gates {
        if r.layout() != layout {
            return invalid("realization layout differs from trajectory layout");
        }
    }
    let n = layout.n_sites();
    let mut state = QuantumState::new(n, init)?;
    let mut rng = stream_rng(record_seed);
    let mut drawn = Vec::with_capacity(layout.n_gates());
    let mut events = Vec::new();
    for tau in 0..layout.n_rounds() {
        let first = layout.first_gate_index(tau);
        for (j, left) in layout.left_sites(tau).enumerate() {
            let g = match gates {
                GateSource::Haar => sample_gate_params(&mut rng),
                GateSource::Forced(g) => g,
                GateSource::Given(r) => r.gates()[first + j],
            };
            state.apply_gate(left, &g)?;
            drawn.push(g);
        }
        for site in 0..n {
            if rng.random::<f64>() < p {
                let outcome = state.measure_site(site, &mut rng)?;
                events.push(MeasurementEvent { half_layer: tau, site, outcome });
            }
        }
    }
    let label = match init.charge(n) {
        Some(q) => q,
        None => state.measure_global_charge(&mut rng)?,
    };
    let realization = CircuitRealization::new(layout.clone(), drawn, record_seed)?;
    let record = MeasurementRecord::new(
        layout.clone(),
        events,
        init.family(),
        Some(label),
        record_seed,
        p,
        embed_gates.then(|| realization.clone()),
    )?;
    Ok(Trajectory { record, realization, state })
}

/// `||C(m, u)|init>||^2`: the Born probability of the record's outcomes at its
/// placements, for the circuit realization `u`.
pub fn born_probability(
    layout: &CircuitLayout,
    init: InitKind,
    events: &[MeasurementEvent],
    realization: &CircuitRealization,
) -> Result<f64> {
    if realization.layout() != layout {
        return invalid("realization layout differs");
    }
    let mut state = QuantumState::new(layout.n_sites(), init)?;
    let mut cursor = 0;
    for tau in 0..layout.n_rounds() {
        let first = layout.first_gate_index(tau);
        for (j, left) in layout.left_sites(tau).enumerate() {
            state.apply_gate(left, &realization.gates()[first + j])?;
        }
        while cursor < events.len() && events[cursor].half_layer == tau {
            state.project_site(events[cursor].site, events[cursor].outcome)?;
            cursor += 1;
        }
    }
    if cursor != events.len() {
        return invalid("events must be sorted by round and inside the layout");
    }
    Ok(state.norm_sqr())
}

/// Monte-Carlo average of [`born_probability`] over `n_samples` Haar
/// realizations: `(mean, standard error)`.
pub fn haar_average_born<R: Rng + ?Sized>(
    layout: &CircuitLayout,
    init: InitKind,
    events: &[MeasurementEvent],
    n_samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return invalid("need at least two samples");
    }
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let gates = (0..layout.n_gates()).map(|_| sample_gate_params(rng)).collect();
        let realization = CircuitRealization::new(layout.clone(), gates, 0)?;
        let b = born_probability(layout, init, events, &realization)?;
        sum += b;
        sum_sq += b * b;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

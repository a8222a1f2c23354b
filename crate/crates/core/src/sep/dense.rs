//! Exact dense evolution of classical charge distributions.
//!
//! States of definite charge are stored only on their charge sector; the
//! exclusion dynamics and the measurement projectors never leave it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::transfer::HopSchedule;
use crate::error::{invalid, Result};
use crate::layout::CircuitLayout;
use crate::record::{site_bit, InitKind, MeasurementRecord};

/// Largest chain accepted by the dense backend.
pub const MAX_DENSE_SITES: usize = 24;

/// Basis states of one charge sector, with the swap partners of every bond.
#[derive(Debug)]
pub struct ChargeSector {
    n_sites: usize,
    charge: usize,
    configs: Vec<u32>,
    /// Per left site `i`: index pairs `(x, y)` where `x` has `(i, i+1) = (1, 0)`
    /// and `y` is `x` with the two sites swapped.
    bond_pairs: Vec<Vec<(u32, u32)>>,
}

impl ChargeSector {
    fn build(n_sites: usize, charge: usize) -> Self {
        let mut configs = Vec::new();
        if charge == 0 {
            configs.push(0u32);
        } else {
            // Gosper's hack walks the fixed-popcount integers in increasing order
            let limit = 1u64 << n_sites;
            let mut x: u64 = (1u64 << charge) - 1;
            while x < limit {
                configs.push(x as u32);
                let c = x & x.wrapping_neg();
                let r = x + c;
                x = (((r ^ x) >> 2) / c) | r;
            }
        }
        let bond_pairs = (0..n_sites - 1)
            .map(|left| {
                let hi = 1u32 << (n_sites - 1 - left);
                let lo = hi >> 1;
                configs
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c & hi != 0 && c & lo == 0)
                    .map(|(i, &c)| {
                        let partner = c ^ hi ^ lo;
                        let j = configs.binary_search(&partner).expect("partner in sector");
                        (i as u32, j as u32)
                    })
                    .collect()
            })
            .collect();
        Self { n_sites, charge, configs, bond_pairs }
    }

    /// Shared, lazily built sector tables.
    pub fn get(n_sites: usize, charge: usize) -> Arc<ChargeSector> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<ChargeSector>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let mut guard = cache.lock().expect("sector cache poisoned");
        guard.entry((n_sites, charge)).or_insert_with(|| Arc::new(Self::build(n_sites, charge))).clone()
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn charge(&self) -> usize {
        self.charge
    }

    pub fn configs(&self) -> &[u32] {
        &self.configs
    }

    pub fn index_of(&self, config: usize) -> Option<usize> {
        self.configs.binary_search(&(config as u32)).ok()
    }
}

#[derive(Clone, Debug)]
enum Space {
    Full { n_sites: usize },
    Sector(Arc<ChargeSector>),
}

/// Nonnegative weights over bitstrings. The represented distribution is
/// `weights * exp(log_scale)`.
#[derive(Clone, Debug)]
pub struct ProbabilityState {
    weights: Vec<f64>,
    log_scale: f64,
    space: Space,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ProbabilityState {
    pub fn new(n_sites: usize, kind: InitKind) -> Result<Self> {
        if !(1..=MAX_DENSE_SITES).contains(&n_sites) {
            return invalid(format!("dense backend supports 1..={MAX_DENSE_SITES} sites, got {n_sites}"));
        }
        kind.validate(n_sites)?;
        let state = match kind {
            InitKind::Dicke(q) => {
                let sector = ChargeSector::get(n_sites, q);
                let w = binomial(n_sites, q).recip();
                Self { weights: vec![w; sector.len()], log_scale: 0.0, space: Space::Sector(sector) }
            }
            InitKind::Neel | InitKind::NeelFlip => {
                let config = kind.product_config(n_sites).expect("product kind");
                let sector = ChargeSector::get(n_sites, config.count_ones() as usize);
                let mut weights = vec![0.0; sector.len()];
                weights[sector.index_of(config).expect("config in sector")] = 1.0;
                Self { weights, log_scale: 0.0, space: Space::Sector(sector) }
            }
            InitKind::Plus => {
                let dim = 1usize << n_sites;
                Self { weights: vec![(dim as f64).recip(); dim], log_scale: 0.0, space: Space::Full { n_sites } }
            }
        };
        Ok(state)
    }

    pub fn n_sites(&self) -> usize {
        match &self.space {
            Space::Full { n_sites } => *n_sites,
            Space::Sector(s) => s.n_sites,
        }
    }

    fn config_at(&self, index: usize) -> usize {
        match &self.space {
            Space::Full { .. } => index,
            Space::Sector(s) => s.configs[index] as usize,
        }
    }

    /// Probability of basis state `config` (log scale applied).
    pub fn weight_of(&self, config: usize) -> f64 {
        let idx = match &self.space {
            Space::Full { .. } => Some(config).filter(|&c| c < self.weights.len()),
            Space::Sector(s) => s.index_of(config),
        };
        idx.map_or(0.0, |i| self.weights[i] * self.log_scale.exp())
    }

    /// The full `2^L` probability vector (small `L` only).
    pub fn to_full(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1 << self.n_sites()];
        let scale = self.log_scale.exp();
        for (i, w) in self.weights.iter().enumerate() {
            out[self.config_at(i)] = w * scale;
        }
        out
    }

    /// `(config, probability)` for every stored basis state.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let scale = self.log_scale.exp();
        self.weights.iter().enumerate().map(move |(i, w)| (self.config_at(i), w * scale))
    }

    /// Log of the 1-norm, `-inf` for the zero vector.
    pub fn log_total(&self) -> f64 {
        let s: f64 = self.weights.iter().sum();
        if s > 0.0 {
            s.ln() + self.log_scale
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn is_zero(&self) -> bool {
        self.log_scale == f64::NEG_INFINITY || self.weights.iter().all(|&w| w == 0.0)
    }

    /// Applies the transfer matrix with hop probability `hop` to `(left, left+1)`.
    pub fn apply_transfer(&mut self, left: usize, hop: f64) {
        if hop == 0.0 {
            return;
        }
        let stay = 1.0 - hop;
        let w = &mut self.weights;
        match &self.space {
            Space::Sector(sector) => {
                for &(a, b) in &sector.bond_pairs[left] {
                    let (a, b) = (a as usize, b as usize);
                    let (wa, wb) = (w[a], w[b]);
                    w[a] = stay * wa + hop * wb;
                    w[b] = hop * wa + stay * wb;
                }
            }
            Space::Full { n_sites } => {
                let stride = 1usize << (n_sites - 2 - left);
                let dim = w.len();
                for block in (0..dim).step_by(4 * stride) {
                    for i01 in block + stride..block + 2 * stride {
                        let i10 = i01 + stride;
                        let (a, b) = (w[i01], w[i10]);
                        w[i01] = stay * a + hop * b;
                        w[i10] = hop * a + stay * b;
                    }
                }
            }
        }
    }

    /// Probability that `site` is occupied, conditional on the current weights.
    pub fn marginal_one(&self, site: usize) -> f64 {
        let n = self.n_sites();
        let (mut one, mut total) = (0.0, 0.0);
        for (i, &w) in self.weights.iter().enumerate() {
            total += w;
            if site_bit(self.config_at(i), site, n) {
                one += w;
            }
        }
        if total > 0.0 {
            one / total
        } else {
            0.0
        }
    }

    /// Projects onto `site = outcome` and renormalizes into the log scale.
    /// Returns the fraction of weight kept.
    pub fn project(&mut self, site: usize, outcome: bool) -> f64 {
        let n = self.n_sites();
        let (mut kept, mut total) = (0.0, 0.0);
        let configs: Option<&[u32]> = match &self.space {
            Space::Sector(s) => Some(&s.configs),
            Space::Full { .. } => None,
        };
        for (i, w) in self.weights.iter_mut().enumerate() {
            let c = configs.map_or(i, |c| c[i] as usize);
            total += *w;
            if site_bit(c, site, n) == outcome {
                kept += *w;
            } else {
                *w = 0.0;
            }
        }
        if kept > 0.0 {
            let inv = kept.recip();
            self.weights.iter_mut().for_each(|w| *w *= inv);
            self.log_scale += kept.ln();
        } else {
            self.log_scale = f64::NEG_INFINITY;
        }
        if total > 0.0 {
            kept / total
        } else {
            0.0
        }
    }

    /// Renormalizes to unit 1-norm, folding the factor into the log scale.
    pub fn normalize(&mut self) {
        let s: f64 = self.weights.iter().sum();
        if s > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= s);
            self.log_scale += s.ln();
        }
    }

    /// Probability mass on charge `q` (log scale applied).
    pub fn sector_mass(&self, q: usize) -> f64 {
        match &self.space {
            Space::Sector(s) if s.charge == q => self.weights.iter().sum::<f64>() * self.log_scale.exp(),
            Space::Sector(_) => 0.0,
            Space::Full { .. } => {
                self.weights
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| c.count_ones() as usize == q)
                    .map(|(_, w)| w)
                    .sum::<f64>()
                    * self.log_scale.exp()
            }
        }
    }
}

pub fn initial_classical_state(n_sites: usize, kind: InitKind) -> Result<ProbabilityState> {
    ProbabilityState::new(n_sites, kind)
}

/// Runs the record's operator sequence forward on `state`.
pub(crate) fn evolve_forward(
    state: &mut ProbabilityState,
    layout: &CircuitLayout,
    record: &MeasurementRecord,
    schedule: &HopSchedule,
) {
    for tau in 0..layout.n_rounds() {
        let first = layout.first_gate_index(tau);
        for (j, left) in layout.left_sites(tau).enumerate() {
            state.apply_transfer(left, schedule.hop(first + j));
        }
        for e in record.round(tau) {
            state.project(e.site, e.outcome);
            if state.is_zero() {
                return;
            }
        }
    }
}

/// `log P(record | init)`: forward evolution from `init` through the
/// exclusion dynamics and the record's projectors, then the 1-norm.
pub fn evolve_dense_likelihood(record: &MeasurementRecord, init: InitKind, schedule: &HopSchedule) -> Result<f64> {
    let layout = record.layout();
    schedule.validate(layout)?;
    let mut state = ProbabilityState::new(layout.n_sites(), init)?;
    evolve_forward(&mut state, layout, record, schedule);
    Ok(state.log_total())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::build_layout;
    use crate::record::{InitFamily, MeasurementEvent};

    fn record(n: usize, t: usize, events: &[(usize, usize, bool)]) -> MeasurementRecord {
        let ev = events.iter().map(|&(h, s, o)| MeasurementEvent { half_layer: h, site: s, outcome: o }).collect();
        MeasurementRecord::new(build_layout(n, t).unwrap(), ev, InitFamily::Dicke, None, 0, 0.5, None).unwrap()
    }

    #[test]
    fn sector_enumeration() {
        let s = ChargeSector::get(4, 2);
        assert_eq!(s.configs(), &[0b0011, 0b0101, 0b0110, 0b1001, 0b1010, 0b1100]);
        assert_eq!(ChargeSector::get(4, 0).configs(), &[0]);
        assert_eq!(ChargeSector::get(4, 4).configs(), &[0b1111]);
        // bond (1,2): 0b0101 -> 0b0011 is not a (1,0) pattern; 0b0101 has sites 1,2 = (1,0)
        assert!(s.bond_pairs[1].contains(&(1, 0)));
    }

    #[test]
    fn initial_states() {
        let d = initial_classical_state(4, InitKind::Dicke(2)).unwrap().to_full();
        assert_eq!(d.iter().filter(|&&w| w > 0.0).count(), 6);
        assert!(d.iter().filter(|&&w| w > 0.0).all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));
        let n = initial_classical_state(4, InitKind::Neel).unwrap().to_full();
        assert_eq!(n[0b1010], 1.0);
        assert_eq!(n.iter().sum::<f64>(), 1.0);
        let p = initial_classical_state(3, InitKind::Plus).unwrap().to_full();
        assert!(p.iter().all(|&w| w == 0.125));
        assert!(initial_classical_state(5, InitKind::Neel).is_err());
    }

    #[test]
    fn two_site_hand_example() {
        let r = record(2, 1, &[(0, 0, true)]);
        let l1 = evolve_dense_likelihood(&r, InitKind::Dicke(1), &HopSchedule::unbiased()).unwrap();
        assert!((l1 - 0.5f64.ln()).abs() < 1e-15);
        let l2 = evolve_dense_likelihood(&r, InitKind::Dicke(2), &HopSchedule::unbiased()).unwrap();
        assert_eq!(l2, 0.0);
        let l0 = evolve_dense_likelihood(&r, InitKind::Dicke(0), &HopSchedule::unbiased()).unwrap();
        assert_eq!(l0, f64::NEG_INFINITY);
    }

    #[test]
    fn empty_record_has_unit_likelihood() {
        let r = record(6, 3, &[]);
        for q in 0..=6 {
            let l = evolve_dense_likelihood(&r, InitKind::Dicke(q), &HopSchedule::unbiased()).unwrap();
            assert!(l.abs() < 1e-14);
        }
        assert!(evolve_dense_likelihood(&r, InitKind::Plus, &HopSchedule::Uniform(0.3)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn full_and_sector_kernels_agree() {
        // plus state restricted to a sector must evolve like the sector state
        let r = record(6, 3, &[(0, 1, true), (1, 4, false), (3, 2, true), (5, 0, false)]);
        let sched = HopSchedule::PerGate((0..r.layout().n_gates()).map(|k| (k as f64 * 0.37) % 1.0).collect());
        let mut full = ProbabilityState::new(6, InitKind::Plus).unwrap();
        evolve_forward(&mut full, r.layout(), &r, &sched);
        for q in 0..=6 {
            let mut sec = ProbabilityState::new(6, InitKind::Dicke(q)).unwrap();
            evolve_forward(&mut sec, r.layout(), &r, &sched);
            let prior = binomial(6, q) / 64.0;
            let a = full.sector_mass(q);
            let b = if sec.is_zero() { 0.0 } else { sec.log_total().exp() * prior };
            assert!((a - b).abs() < 1e-14, "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn norm_preserved_by_transfers_and_non_increasing_under_projection() {
        let mut s = ProbabilityState::new(8, InitKind::Dicke(4)).unwrap();
        let layout = build_layout(8, 2).unwrap();
        let mut last = s.log_total();
        for tau in 0..layout.n_rounds() {
            for left in layout.left_sites(tau) {
                s.apply_transfer(left, 0.5);
                assert!((s.log_total() - last).abs() < 1e-14);
            }
            s.project(tau % 8, tau % 3 == 0);
            assert!(s.log_total() <= last + 1e-14);
            last = s.log_total();
        }
    }
}

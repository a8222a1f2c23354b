//! Measurement records, circuit realizations and experiment configuration.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gate::GateParams;
use crate::layout::{CircuitLayout, Placement};

/// Occupation of `site` in basis state `config`. Site 0 is the most
/// significant of the `n_sites` bits.
#[inline]
pub fn site_bit(config: usize, site: usize, n_sites: usize) -> bool {
    (config >> (n_sites - 1 - site)) & 1 == 1
}

/// Basis-state index of a bitstring given site by site.
pub fn config_from_bits(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Initial state of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InitKind {
    /// Uniform superposition (or distribution) over all bitstrings of charge Q.
    Dicke(usize),
    /// `1010...`
    Neel,
    /// Neel with the first site emptied, charge `L/2 - 1`.
    NeelFlip,
    /// Every site in `|+>`; all charges present.
    Plus,
}

impl InitKind {
    pub fn validate(&self, n_sites: usize) -> Result<()> {
        match *self {
            InitKind::Dicke(q) if q > n_sites => invalid(format!("charge {q} exceeds {n_sites} sites")),
            InitKind::Neel | InitKind::NeelFlip if !n_sites.is_multiple_of(2) => {
                invalid(format!("Neel states need an even number of sites, got {n_sites}"))
            }
            _ => Ok(()),
        }
    }

    /// The definite charge of this state, if it has one.
    pub fn charge(&self, n_sites: usize) -> Option<usize> {
        match *self {
            InitKind::Dicke(q) => Some(q),
            InitKind::Neel => Some(n_sites / 2),
            InitKind::NeelFlip => Some(n_sites / 2 - 1),
            InitKind::Plus => None,
        }
    }

    /// Basis state for the product kinds.
    pub fn product_config(&self, n_sites: usize) -> Option<usize> {
        let neel: Vec<bool> = (0..n_sites).map(|s| s % 2 == 0).collect();
        match self {
            InitKind::Neel => Some(config_from_bits(&neel)),
            InitKind::NeelFlip => {
                let mut bits = neel;
                bits[0] = false;
                Some(config_from_bits(&bits))
            }
            _ => None,
        }
    }

    pub fn family(&self) -> InitFamily {
        match self {
            InitKind::Dicke(_) => InitFamily::Dicke,
            InitKind::Neel | InitKind::NeelFlip => InitFamily::Neel,
            InitKind::Plus => InitFamily::Plus,
        }
    }
}

/// Which classification task a record belongs to. Records carry the family,
/// never the specific initial state, so decoding cannot see the label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFamily {
    Dicke,
    Neel,
    Plus,
}

impl InitFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            InitFamily::Dicke => "dicke",
            InitFamily::Neel => "neel",
            InitFamily::Plus => "plus",
        }
    }

    /// The initial state of this family whose charge is `label`.
    pub fn init_for(&self, label: usize, n_sites: usize) -> Result<InitKind> {
        let kind = match self {
            InitFamily::Dicke => InitKind::Dicke(label),
            InitFamily::Neel if label == n_sites / 2 => InitKind::Neel,
            InitFamily::Neel if label + 1 == n_sites / 2 => InitKind::NeelFlip,
            InitFamily::Neel => return invalid(format!("no Neel-family state with charge {label}")),
            InitFamily::Plus => InitKind::Plus,
        };
        kind.validate(n_sites)?;
        Ok(kind)
    }
}

impl std::str::FromStr for InitFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dicke" => Ok(InitFamily::Dicke),
            "neel" => Ok(InitFamily::Neel),
            "plus" => Ok(InitFamily::Plus),
            other => invalid(format!("unknown init family `{other}`")),
        }
    }
}

/// Outcome of one local charge measurement, taken right after the gates of
/// half-layer `half_layer`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MeasurementEvent {
    pub half_layer: usize,
    pub site: usize,
    pub outcome: bool,
}

/// Per-gate parameters drawn for one run of the circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitRealization {
    layout: CircuitLayout,
    gates: Vec<GateParams>,
    pub master_seed: u64,
}

impl CircuitRealization {
    pub fn new(layout: CircuitLayout, gates: Vec<GateParams>, master_seed: u64) -> Result<Self> {
        if gates.len() != layout.n_gates() {
            return invalid(format!("layout has {} gates, got {} parameter sets", layout.n_gates(), gates.len()));
        }
        for g in &gates {
            g.validate()?;
        }
        Ok(Self { layout, gates, master_seed })
    }

    pub fn layout(&self) -> &CircuitLayout {
        &self.layout
    }

    /// Parameters in gate-index order.
    pub fn gates(&self) -> &[GateParams] {
        &self.gates
    }

    pub fn get(&self, placement: Placement) -> Option<&GateParams> {
        self.layout.gate_index(placement).map(|k| &self.gates[k])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    layout: CircuitLayout,
    events: Vec<MeasurementEvent>,
    pub init: InitFamily,
    pub true_label: Option<usize>,
    pub record_seed: u64,
    /// Measurement rate the record was generated at (provenance only).
    pub p: f64,
    pub gates: Option<CircuitRealization>,
}

impl MeasurementRecord {
    /// Validates and sorts `events` into `(half_layer, site)` order.
    pub fn new(
        layout: CircuitLayout,
        mut events: Vec<MeasurementEvent>,
        init: InitFamily,
        true_label: Option<usize>,
        record_seed: u64,
        p: f64,
        gates: Option<CircuitRealization>,
    ) -> Result<Self> {
        events.sort_by_key(|e| (e.half_layer, e.site));
        for e in &events {
            if e.half_layer >= layout.n_rounds() || e.site >= layout.n_sites() {
                return invalid(format!("event {e:?} outside the layout"));
            }
        }
        if events.windows(2).any(|w| (w[0].half_layer, w[0].site) == (w[1].half_layer, w[1].site)) {
            return invalid("two events at the same (round, site)");
        }
        if let Some(q) = true_label {
            if q > layout.n_sites() {
                return invalid(format!("label {q} exceeds {} sites", layout.n_sites()));
            }
        }
        if let Some(r) = &gates {
            if r.layout() != &layout {
                return invalid("realization layout differs from record layout");
            }
        }
        if !(0.0..=1.0).contains(&p) {
            return invalid(format!("p={p} outside [0, 1]"));
        }
        Ok(Self { layout, events, init, true_label, record_seed, p, gates })
    }

    pub fn layout(&self) -> &CircuitLayout {
        &self.layout
    }

    pub fn n_sites(&self) -> usize {
        self.layout.n_sites()
    }

    pub fn events(&self) -> &[MeasurementEvent] {
        &self.events
    }

    /// Events of measurement round `tau`.
    pub fn round(&self, tau: usize) -> &[MeasurementEvent] {
        let lo = self.events.partition_point(|e| e.half_layer < tau);
        let hi = self.events.partition_point(|e| e.half_layer <= tau);
        &self.events[lo..hi]
    }

    /// Copy without the gate realization.
    pub fn without_gates(&self) -> Self {
        Self { gates: None, ..self.clone() }
    }

    /// Copy with extra events merged in.
    pub fn with_extra_events(&self, extra: &[MeasurementEvent]) -> Result<Self> {
        let mut events = self.events.clone();
        events.extend_from_slice(extra);
        Self::new(self.layout.clone(), events, self.init, self.true_label, self.record_seed, self.p, self.gates.clone())
    }
}

/// What the eavesdropper is asked to discriminate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub family: InitFamily,
    /// Candidate charges, also the classes records are generated from. Empty
    /// for the `plus` family, where the label comes from a terminal global
    /// charge measurement.
    pub labels: Vec<usize>,
}

impl Task {
    /// The default two-class task: charges `L/2` and `L/2 - 1`.
    pub fn pair(family: InitFamily, n_sites: usize) -> Self {
        Self { family, labels: vec![n_sites / 2, n_sites / 2 - 1] }
    }

    /// Records start in `|+...+>`; the class is the terminal global charge.
    pub fn all_charges() -> Self {
        Self { family: InitFamily::Plus, labels: Vec::new() }
    }
}

/// Which generator produces the records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Exact statevector simulation of the Haar circuit.
    Quantum,
    /// Direct sampling from the classical exclusion-process model.
    Sep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_sites: usize,
    pub n_timesteps: usize,
    pub p: f64,
    /// Records per class (total records for the `plus` family).
    pub n_records: usize,
    pub task: Task,
    pub master_seed: u64,
    pub engine: Engine,
    /// Embed the circuit realization in every record.
    pub with_gates: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<CircuitLayout> {
        let layout = CircuitLayout::new(self.n_sites, self.n_timesteps)?;
        if !(0.0..=1.0).contains(&self.p) {
            return invalid(format!("p={} outside [0, 1]", self.p));
        }
        let labels = &self.task.labels;
        for (k, &q) in labels.iter().enumerate() {
            if q > self.n_sites {
                return invalid(format!("label {q} exceeds {} sites", self.n_sites));
            }
            if labels[..k].contains(&q) {
                return invalid(format!("label {q} repeated"));
            }
            self.task.family.init_for(q, self.n_sites)?;
        }
        if self.task.family != InitFamily::Plus && labels.is_empty() {
            return invalid("task needs at least one label");
        }
        if self.task.family == InitFamily::Neel && !self.n_sites.is_multiple_of(2) {
            return invalid("Neel family needs an even number of sites");
        }
        Ok(layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::build_layout;

    #[test]
    fn bit_convention_site_zero_is_msb() {
        assert!(site_bit(0b1000, 0, 4));
        assert!(!site_bit(0b1000, 3, 4));
        assert_eq!(config_from_bits(&[true, false, true, false]), 0b1010);
        assert_eq!(InitKind::Neel.product_config(4), Some(0b1010));
        assert_eq!(InitKind::NeelFlip.product_config(4), Some(0b0010));
        assert_eq!(InitKind::NeelFlip.charge(4), Some(1));
    }

    #[test]
    fn events_sorted_and_unique() {
        let layout = build_layout(4, 1).unwrap();
        let ev = |t, s, o| MeasurementEvent { half_layer: t, site: s, outcome: o };
        let r = MeasurementRecord::new(
            layout.clone(),
            vec![ev(1, 0, true), ev(0, 3, false), ev(0, 1, true)],
            InitFamily::Dicke,
            Some(2),
            0,
            0.5,
            None,
        )
        .unwrap();
        let keys: Vec<_> = r.events().iter().map(|e| (e.half_layer, e.site)).collect();
        assert_eq!(keys, vec![(0, 1), (0, 3), (1, 0)]);
        assert_eq!(r.round(0).len(), 2);
        assert_eq!(r.round(1).len(), 1);
        let dup = MeasurementRecord::new(
            layout.clone(),
            vec![ev(0, 1, true), ev(0, 1, false)],
            InitFamily::Dicke,
            None,
            0,
            0.5,
            None,
        );
        assert!(dup.is_err());
        let out = MeasurementRecord::new(layout, vec![ev(2, 1, true)], InitFamily::Dicke, None, 0, 0.5, None);
        assert!(out.is_err());
    }

    #[test]
    fn neel_family_labels() {
        assert_eq!(InitFamily::Neel.init_for(3, 6).unwrap(), InitKind::Neel);
        assert_eq!(InitFamily::Neel.init_for(2, 6).unwrap(), InitKind::NeelFlip);
        assert!(InitFamily::Neel.init_for(1, 6).is_err());
    }
}

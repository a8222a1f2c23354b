//! Deterministic charge inference: local charge conservation propagated
//! through gates, and spanning cuts along which every occupation is known.
//!
//! Each site's worldline is split into segments by the gates acting on it.
//! Segment 0 precedes the first gate; segment `k` follows the `k`-th gate. A
//! measurement after half-layer `tau` reads the segment following every gate
//! of half-layers `<= tau`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::layout::CircuitLayout;
use crate::record::MeasurementRecord;
use crate::stats::{accuracy_with_ci, Estimate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Measured,
    Inferred,
}

/// One gate's four legs as variable indices: `[in_left, in_right, out_left,
/// out_right]`.
type GateLegs = [usize; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct KnownValueGrid {
    layout: CircuitLayout,
    /// Half-layers of the gates on each site.
    gate_rounds: Vec<Vec<usize>>,
    offsets: Vec<usize>,
    values: Vec<Option<bool>>,
    provenance: Vec<Option<Provenance>>,
}

impl KnownValueGrid {
    /// Grid with every variable unknown.
    pub fn empty(layout: &CircuitLayout) -> Self {
        let gate_rounds: Vec<Vec<usize>> = (0..layout.n_sites()).map(|s| layout.gate_rounds_at(s)).collect();
        let mut offsets = Vec::with_capacity(layout.n_sites() + 1);
        let mut total = 0;
        for g in &gate_rounds {
            offsets.push(total);
            total += g.len() + 1;
        }
        offsets.push(total);
        Self { layout: layout.clone(), gate_rounds, offsets, values: vec![None; total], provenance: vec![None; total] }
    }

    pub fn layout(&self) -> &CircuitLayout {
        &self.layout
    }

    pub fn n_segments(&self, site: usize) -> usize {
        self.gate_rounds[site].len() + 1
    }

    pub fn n_variables(&self) -> usize {
        self.values.len()
    }

    /// Segment read by a measurement on `site` after half-layer `tau`.
    pub fn segment_at(&self, site: usize, tau: usize) -> usize {
        self.gate_rounds[site].partition_point(|&g| g <= tau)
    }

    /// Half-layer of the gate that opens `segment` on `site` (`None` for
    /// segment 0).
    pub fn segment_start(&self, site: usize, segment: usize) -> Option<usize> {
        segment.checked_sub(1).map(|k| self.gate_rounds[site][k])
    }

    fn var(&self, site: usize, segment: usize) -> usize {
        self.offsets[site] + segment
    }

    pub fn value(&self, site: usize, segment: usize) -> Option<bool> {
        self.values[self.var(site, segment)]
    }

    pub fn provenance(&self, site: usize, segment: usize) -> Option<Provenance> {
        self.provenance[self.var(site, segment)]
    }

    pub fn count(&self, kind: Provenance) -> usize {
        self.provenance.iter().filter(|&&p| p == Some(kind)).count()
    }

    fn gates(&self) -> Vec<GateLegs> {
        self.layout
            .placements()
            .map(|pl| {
                let (l, r) = (pl.left, pl.left + 1);
                let kl = self.gate_rounds[l].binary_search(&pl.half_layer).expect("gate on left site");
                let kr = self.gate_rounds[r].binary_search(&pl.half_layer).expect("gate on right site");
                [self.var(l, kl), self.var(r, kr), self.var(l, kl + 1), self.var(r, kr + 1)]
            })
            .collect()
    }

    fn seed(&mut self, record: &MeasurementRecord) -> Result<()> {
        for e in record.events() {
            let v = self.var(e.site, self.segment_at(e.site, e.half_layer));
            match self.values[v] {
                Some(b) if b != e.outcome => {
                    return Err(Error::Contradiction(format!(
                        "site {} reads both values in one segment (half-layer {})",
                        e.site, e.half_layer
                    )))
                }
                _ => {
                    self.values[v] = Some(e.outcome);
                    self.provenance[v] = Some(Provenance::Measured);
                }
            }
        }
        Ok(())
    }

    /// Generalized arc consistency on one gate: every leg value shared by all
    /// assignments with `in_l + in_r = out_l + out_r` is fixed. Returns the
    /// newly fixed legs.
    fn revise(&mut self, legs: &GateLegs) -> Result<Vec<usize>> {
        let known: [Option<bool>; 4] = legs.map(|v| self.values[v]);
        let mut seen_true = [false; 4];
        let mut seen_false = [false; 4];
        let mut any = false;
        for bits in 0u8..16 {
            let b = [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0, bits & 8 != 0];
            let conserves = u8::from(b[0]) + u8::from(b[1]) == u8::from(b[2]) + u8::from(b[3]);
            if !conserves || (0..4).any(|i| known[i].is_some_and(|k| k != b[i])) {
                continue;
            }
            any = true;
            for i in 0..4 {
                if b[i] {
                    seen_true[i] = true;
                } else {
                    seen_false[i] = true;
                }
            }
        }
        if !any {
            return Err(Error::Contradiction(format!("charge conservation violated at a gate with legs {known:?}")));
        }
        let mut fixed = Vec::new();
        for i in 0..4 {
            if known[i].is_none() && seen_true[i] != seen_false[i] {
                self.values[legs[i]] = Some(seen_true[i]);
                self.provenance[legs[i]] = Some(Provenance::Inferred);
                fixed.push(legs[i]);
            }
        }
        Ok(fixed)
    }
}

/// Seeds the grid from the record and propagates per-gate charge
/// conservation to its fixpoint.
pub fn propagate_constraints(record: &MeasurementRecord) -> Result<KnownValueGrid> {
    let mut grid = KnownValueGrid::empty(record.layout());
    grid.seed(record)?;
    let gates = grid.gates();
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); grid.n_variables()];
    for (g, legs) in gates.iter().enumerate() {
        for &v in legs {
            touching[v].push(g);
        }
    }
    let mut queued = vec![true; gates.len()];
    let mut work: Vec<usize> = (0..gates.len()).rev().collect();
    while let Some(g) = work.pop() {
        queued[g] = false;
        for v in grid.revise(&gates[g])? {
            for &h in &touching[v] {
                if !queued[h] {
                    queued[h] = true;
                    work.push(h);
                }
            }
        }
    }
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutResult {
    pub exists: bool,
    /// Segment index per site along the cut.
    pub cut_segments: Vec<usize>,
    pub extracted_charge: Option<usize>,
}

impl CutResult {
    fn none() -> Self {
        Self { exists: false, cut_segments: Vec::new(), extracted_charge: None }
    }
}

/// Finds a space-like cut, one known segment per site, that no gate
/// straddles. Charge conservation makes the sum of its values the total
/// charge.
pub fn find_charge_cut(grid: &KnownValueGrid) -> CutResult {
    let n = grid.layout.n_sites();
    // gates on bond (s, s+1) among the first k gates of site s (as left) or of
    // site s+1 (as right); the cut is consistent across the bond when equal
    let bond_prefix = |site: usize, partner: usize| -> Vec<usize> {
        let rounds = &grid.gate_rounds[site];
        let mut out = vec![0usize; rounds.len() + 1];
        for (k, &tau) in rounds.iter().enumerate() {
            let left = site.min(partner);
            let on_bond = left % 2 == tau % 2;
            out[k + 1] = out[k] + usize::from(on_bond);
        }
        out
    };
    let known = |s: usize| (0..grid.n_segments(s)).filter(move |&k| grid.value(s, k).is_some());
    // back[s][k] = segment at s-1 reached from, for reachable (s, k)
    let mut back: Vec<Vec<Option<usize>>> = Vec::with_capacity(n);
    let mut reach: Vec<bool> = vec![false; grid.n_segments(0)];
    for k in known(0) {
        reach[k] = true;
    }
    back.push(vec![None; grid.n_segments(0)]);
    for s in 0..n - 1 {
        let right_counts = bond_prefix(s, s + 1);
        let left_counts = bond_prefix(s + 1, s);
        let mut by_count: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, &r) in reach.iter().enumerate() {
            if r {
                by_count.entry(right_counts[k]).or_insert(k);
            }
        }
        let mut next_reach = vec![false; grid.n_segments(s + 1)];
        let mut next_back = vec![None; grid.n_segments(s + 1)];
        for k in known(s + 1) {
            if let Some(&from) = by_count.get(&left_counts[k]) {
                next_reach[k] = true;
                next_back[k] = Some(from);
            }
        }
        if !next_reach.iter().any(|&r| r) {
            return CutResult::none();
        }
        reach = next_reach;
        back.push(next_back);
    }
    let Some(mut k) = reach.iter().position(|&r| r) else {
        return CutResult::none();
    };
    let mut cut = vec![0usize; n];
    for s in (0..n).rev() {
        cut[s] = k;
        if s > 0 {
            k = back[s][k].expect("reachable segment has a predecessor");
        }
    }
    let charge = cut.iter().enumerate().filter(|&(s, &k)| grid.value(s, k) == Some(true)).count();
    CutResult { exists: true, cut_segments: cut, extracted_charge: Some(charge) }
}

/// Propagation followed by cut search.
pub fn percolate(record: &MeasurementRecord) -> Result<CutResult> {
    Ok(find_charge_cut(&propagate_constraints(record)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercolationRow {
    pub n_sites: usize,
    pub p: f64,
    pub n_records: usize,
    pub n_with_cut: usize,
    pub fraction_with_cut: Estimate,
}

/// Fraction of records with a charge cut per `(L, p)` group, sorted by `L`
/// then `p`.
pub fn percolation_summary(records: &[MeasurementRecord], n_boot: usize, seed: u64) -> Result<Vec<PercolationRow>> {
    if records.is_empty() {
        return invalid("no records");
    }
    let mut groups: BTreeMap<(usize, u64), Vec<bool>> = BTreeMap::new();
    for r in records {
        if !(0.0..=1.0).contains(&r.p) {
            return invalid(format!("record p={} outside [0, 1]", r.p));
        }
        groups.entry((r.n_sites(), r.p.to_bits())).or_default().push(percolate(r)?.exists);
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(i, ((n, p), cuts))| {
            Ok(PercolationRow {
                n_sites: n,
                p: f64::from_bits(p),
                n_records: cuts.len(),
                n_with_cut: cuts.iter().filter(|&&c| c).count(),
                fraction_with_cut: accuracy_with_ci(&cuts, n_boot, crate::seed::derive_stream_seed(seed, i as u64))?,
            })
        })
        .collect()
}

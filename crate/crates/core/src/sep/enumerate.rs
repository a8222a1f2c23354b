//! Brute-force enumeration over exclusion-process trajectories.
//!
//! Independent of the dense and MPS backends: every trajectory is walked
//! explicitly, so this is only usable on very small circuits.

use std::collections::BTreeMap;

use super::transfer::HopSchedule;
use crate::error::{invalid, Result};
use crate::layout::CircuitLayout;
use crate::record::{site_bit, InitKind, MeasurementRecord};

enum Step {
    Gate { left: usize, hop: f64 },
    Observe { site: usize, required: Option<bool> },
}

fn initial_distribution(n: usize, kind: InitKind) -> Result<Vec<(Vec<bool>, f64)>> {
    kind.validate(n)?;
    let bits = |x: usize| (0..n).map(|s| site_bit(x, s, n)).collect::<Vec<bool>>();
    Ok(match kind {
        InitKind::Dicke(q) => {
            let configs: Vec<usize> = (0..1usize << n).filter(|x| x.count_ones() as usize == q).collect();
            let w = 1.0 / configs.len() as f64;
            configs.into_iter().map(|x| (bits(x), w)).collect()
        }
        InitKind::Neel | InitKind::NeelFlip => vec![(bits(kind.product_config(n).expect("product")), 1.0)],
        InitKind::Plus => (0..1usize << n).map(|x| (bits(x), 1.0 / (1usize << n) as f64)).collect(),
    })
}

fn walk(
    steps: &[Step],
    config: &mut Vec<bool>,
    weight: f64,
    outcomes: &mut Vec<bool>,
    acc: &mut BTreeMap<Vec<bool>, f64>,
) {
    let Some((step, rest)) = steps.split_first() else {
        *acc.entry(outcomes.clone()).or_insert(0.0) += weight;
        return;
    };
    match *step {
        Step::Gate { left, hop } => {
            if config[left] == config[left + 1] {
                walk(rest, config, weight, outcomes, acc);
            } else {
                if hop < 1.0 {
                    walk(rest, config, weight * (1.0 - hop), outcomes, acc);
                }
                if hop > 0.0 {
                    config.swap(left, left + 1);
                    walk(rest, config, weight * hop, outcomes, acc);
                    config.swap(left, left + 1);
                }
            }
        }
        Step::Observe { site, required } => {
            if required.is_some_and(|r| r != config[site]) {
                return;
            }
            outcomes.push(config[site]);
            walk(rest, config, weight, outcomes, acc);
            outcomes.pop();
        }
    }
}

fn steps_for(layout: &CircuitLayout, schedule: &HopSchedule, observe: &[(usize, usize, Option<bool>)]) -> Vec<Step> {
    let mut steps = Vec::new();
    for tau in 0..layout.n_rounds() {
        let first = layout.first_gate_index(tau);
        for (j, left) in layout.left_sites(tau).enumerate() {
            steps.push(Step::Gate { left, hop: schedule.hop(first + j) });
        }
        for &(t, site, required) in observe.iter().filter(|o| o.0 == tau) {
            debug_assert_eq!(t, tau);
            steps.push(Step::Observe { site, required });
        }
    }
    steps
}

/// Exact distribution of outcomes at fixed placements. Keys list outcomes in
/// `(half_layer, site)` order.
pub fn outcome_distribution(
    layout: &CircuitLayout,
    placements: &[(usize, usize)],
    kind: InitKind,
    schedule: &HopSchedule,
) -> Result<BTreeMap<Vec<bool>, f64>> {
    schedule.validate(layout)?;
    let mut sorted = placements.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.iter().any(|&(t, s)| t >= layout.n_rounds() || s >= layout.n_sites()) {
        return invalid("placement outside the layout");
    }
    let observe: Vec<_> = sorted.iter().map(|&(t, s)| (t, s, None)).collect();
    let steps = steps_for(layout, schedule, &observe);
    let mut acc = BTreeMap::new();
    for (mut config, w) in initial_distribution(layout.n_sites(), kind)? {
        walk(&steps, &mut config, w, &mut Vec::new(), &mut acc);
    }
    Ok(acc)
}

/// `P(record | init)` by summing every consistent trajectory.
pub fn trajectory_likelihood(record: &MeasurementRecord, kind: InitKind, schedule: &HopSchedule) -> Result<f64> {
    let layout = record.layout();
    schedule.validate(layout)?;
    let observe: Vec<_> = record.events().iter().map(|e| (e.half_layer, e.site, Some(e.outcome))).collect();
    let steps = steps_for(layout, schedule, &observe);
    let mut acc = BTreeMap::new();
    for (mut config, w) in initial_distribution(layout.n_sites(), kind)? {
        walk(&steps, &mut config, w, &mut Vec::new(), &mut acc);
    }
    Ok(acc.values().sum())
}

/// Total-variation distance between `exact` and the empirical distribution
/// of `samples` (outcome vectors keyed like [`outcome_distribution`]).
pub fn total_variation(exact: &BTreeMap<Vec<bool>, f64>, samples: &[Vec<bool>]) -> f64 {
    let mut counts: BTreeMap<&[bool], usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s.as_slice()).or_insert(0) += 1;
    }
    let n = samples.len().max(1) as f64;
    let mut tv: f64 =
        exact.iter().map(|(k, &p)| (p - counts.get(k.as_slice()).copied().unwrap_or(0) as f64 / n).abs()).sum();
    tv += counts.iter().filter(|(k, _)| !exact.contains_key(**k)).map(|(_, &c)| c as f64 / n).sum::<f64>();
    0.5 * tv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::build_layout;

    #[test]
    fn distribution_sums_to_one() {
        let layout = build_layout(4, 2).unwrap();
        let placements: Vec<_> = (0..4).flat_map(|t| (0..4).map(move |s| (t, s))).collect();
        for q in 0..=4 {
            let d = outcome_distribution(&layout, &placements, InitKind::Dicke(q), &HopSchedule::unbiased()).unwrap();
            let total: f64 = d.values().sum();
            assert!((total - 1.0).abs() < 1e-12);
            // every full round must carry the charge
            for key in d.keys() {
                for round in key.chunks(4) {
                    assert_eq!(round.iter().filter(|&&b| b).count(), q);
                }
            }
        }
    }

    #[test]
    fn total_variation_basics() {
        let exact: BTreeMap<Vec<bool>, f64> = [(vec![true], 0.5), (vec![false], 0.5)].into_iter().collect();
        assert_eq!(total_variation(&exact, &[vec![true], vec![false]]), 0.0);
        assert!((total_variation(&exact, &[vec![true], vec![true]]) - 0.5).abs() < 1e-15);
        assert!((total_variation(&exact, &[vec![true, true]]) - 1.0).abs() < 1e-15);
    }
}

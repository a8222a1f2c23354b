use crate::error::{invalid, Result};
use crate::layout::CircuitLayout;
use crate::record::CircuitRealization;

pub type Matrix4 = [[f64; 4]; 4];

/// Two-site exclusion-process update with hop probability `hop`:
/// `(1 - hop) I + hop SWAP`, acting on `|00), |01), |10), |11)`.
pub fn transfer_matrix(hop: f64) -> Result<Matrix4> {
    if !(0.0..=1.0).contains(&hop) {
        return invalid(format!("hop={hop} outside [0, 1]"));
    }
    let stay = 1.0 - hop;
    Ok([[1.0, 0.0, 0.0, 0.0], [0.0, stay, hop, 0.0], [0.0, hop, stay, 0.0], [0.0, 0.0, 0.0, 1.0]])
}

/// Hop probability for every gate placement.
#[derive(Clone, Debug, PartialEq)]
pub enum HopSchedule {
    Uniform(f64),
    /// Indexed by gate index (see [`CircuitLayout::gate_index`]).
    PerGate(Vec<f64>),
}

impl HopSchedule {
    pub fn unbiased() -> Self {
        HopSchedule::Uniform(0.5)
    }

    /// `xi` of each gate, or `1 - xi` when `flipped`.
    pub fn from_realization(realization: &CircuitRealization, flipped: bool) -> Self {
        HopSchedule::PerGate(
            realization
                .gates()
                .iter()
                .map(|g| if flipped { 1.0 - g.hopping_probability() } else { g.hopping_probability() })
                .collect(),
        )
    }

    #[inline]
    pub fn hop(&self, gate_index: usize) -> f64 {
        match self {
            HopSchedule::Uniform(h) => *h,
            HopSchedule::PerGate(v) => v[gate_index],
        }
    }

    pub fn validate(&self, layout: &CircuitLayout) -> Result<()> {
        let check = |h: f64| {
            if (0.0..=1.0).contains(&h) {
                Ok(())
            } else {
                invalid(format!("hop={h} outside [0, 1]"))
            }
        };
        match self {
            HopSchedule::Uniform(h) => check(*h),
            HopSchedule::PerGate(v) => {
                if v.len() != layout.n_gates() {
                    return invalid(format!("schedule has {} hops for {} gates", v.len(), layout.n_gates()));
                }
                v.iter().try_for_each(|&h| check(h))
            }
        }
    }
}

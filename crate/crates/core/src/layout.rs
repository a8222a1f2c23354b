//! Brickwork gate layout with open boundaries.
//!
//! A timestep is two half-layers. Even half-layers hold the bonds
//! `(0,1), (2,3), ...`, odd half-layers hold `(1,2), (3,4), ...`. Gates are
//! identified by their [`Placement`] and enumerated in half-layer order, then
//! by left site; that enumeration is the index used by hop schedules and
//! circuit realizations.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Position of a two-site gate: the half-layer it belongs to and its left site.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Placement {
    pub half_layer: usize,
    pub left: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitLayout {
    n_sites: usize,
    n_timesteps: usize,
}

impl CircuitLayout {
    pub fn new(n_sites: usize, n_timesteps: usize) -> Result<Self> {
        if n_sites < 2 {
            return invalid(format!("need at least 2 sites, got {n_sites}"));
        }
        if n_timesteps < 1 {
            return invalid("need at least one timestep");
        }
        Ok(Self { n_sites, n_timesteps })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_timesteps(&self) -> usize {
        self.n_timesteps
    }

    /// Number of half-layers, which is also the number of measurement rounds.
    pub fn n_rounds(&self) -> usize {
        2 * self.n_timesteps
    }

    fn even_count(&self) -> usize {
        self.n_sites / 2
    }

    fn odd_count(&self) -> usize {
        (self.n_sites - 1) / 2
    }

    /// Number of gates in half-layer `tau`.
    pub fn gates_in(&self, tau: usize) -> usize {
        if tau.is_multiple_of(2) {
            self.even_count()
        } else {
            self.odd_count()
        }
    }

    pub fn n_gates(&self) -> usize {
        self.n_timesteps * (self.even_count() + self.odd_count())
    }

    /// Left sites of the gates in half-layer `tau`, in increasing order.
    pub fn left_sites(&self, tau: usize) -> impl Iterator<Item = usize> {
        let offset = tau % 2;
        (0..self.gates_in(tau)).map(move |j| 2 * j + offset)
    }

    /// Index of the first gate of half-layer `tau` in the global enumeration.
    pub fn first_gate_index(&self, tau: usize) -> usize {
        let per_step = self.even_count() + self.odd_count();
        (tau / 2) * per_step + if tau % 2 == 1 { self.even_count() } else { 0 }
    }

    /// Global gate index of a placement, if it belongs to this layout.
    pub fn gate_index(&self, placement: Placement) -> Option<usize> {
        let Placement { half_layer, left } = placement;
        if half_layer >= self.n_rounds() || left % 2 != half_layer % 2 {
            return None;
        }
        let j = left / 2;
        (j < self.gates_in(half_layer)).then(|| self.first_gate_index(half_layer) + j)
    }

    /// All placements in gate-index order.
    pub fn placements(&self) -> impl Iterator<Item = Placement> + '_ {
        (0..self.n_rounds())
            .flat_map(move |tau| self.left_sites(tau).map(move |left| Placement { half_layer: tau, left }))
    }

    /// Half-layers (ascending) of the gates touching `site`.
    pub fn gate_rounds_at(&self, site: usize) -> Vec<usize> {
        (0..self.n_rounds())
            .filter(|&tau| {
                let touches_as_left = site % 2 == tau % 2 && site + 1 < self.n_sites;
                let touches_as_right = site >= 1 && (site - 1) % 2 == tau % 2;
                (touches_as_left && self.gate_index(Placement { half_layer: tau, left: site }).is_some())
                    || (touches_as_right && self.gate_index(Placement { half_layer: tau, left: site - 1 }).is_some())
            })
            .collect()
    }
}

/// Builds the open-boundary brickwork layout for `n_sites` sites and
/// `n_timesteps` timesteps.
pub fn build_layout(n_sites: usize, n_timesteps: usize) -> Result<CircuitLayout> {
    CircuitLayout::new(n_sites, n_timesteps)
}

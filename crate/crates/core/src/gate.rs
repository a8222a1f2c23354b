//! Parametrized U(1)-symmetric two-qubit gates.
//!
//! Two-site basis order is `|00>, |01>, |10>, |11>` with the left site as the
//! most significant bit. In that basis
//!
//! ```text
//! U = [ 1  0                     0                     0      ]
//!     [ 0  e^{i(a+psi)} sqrt(1-x)  e^{i(a+chi)} sqrt(x)     0      ]
//!     [ 0 -e^{i(a-chi)} sqrt(x)    e^{i(a-psi)} sqrt(1-x)   0      ]
//!     [ 0  0                     0                     e^{i rho} ]
//! ```

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Unitary4 = [[Complex64; 4]; 4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub alpha: f64,
    pub rho: f64,
    pub psi: f64,
    pub chi: f64,
    /// Hop parameter: probability weight of the charge-swapping amplitude.
    pub xi: f64,
}

impl GateParams {
    pub fn new(alpha: f64, rho: f64, psi: f64, chi: f64, xi: f64) -> Result<Self> {
        let g = Self { alpha, rho, psi, chi, xi };
        g.validate()?;
        Ok(g)
    }

    pub const IDENTITY: GateParams = GateParams { alpha: 0.0, rho: 0.0, psi: 0.0, chi: 0.0, xi: 0.0 };

    /// Phases zero, `xi = 1`: `|10> -> |01>`, `|01> -> -|10>`.
    pub const SWAP_LIKE: GateParams = GateParams { alpha: 0.0, rho: 0.0, psi: 0.0, chi: 0.0, xi: 1.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("rho", self.rho), ("psi", self.psi), ("chi", self.chi)] {
            if !(0.0..TAU).contains(&v) {
                return invalid(format!("phase {name}={v} outside [0, 2pi)"));
            }
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return invalid(format!("xi={} outside [0, 1]", self.xi));
        }
        Ok(())
    }

    /// The 4x4 unitary. Off-sector entries are exact zeros.
    pub fn unitary(&self) -> Unitary4 {
        let z = Complex64::new(0.0, 0.0);
        let stay = (1.0 - self.xi).sqrt();
        let hop = self.xi.sqrt();
        let e = |phase: f64| Complex64::from_polar(1.0, phase);
        [
            [Complex64::new(1.0, 0.0), z, z, z],
            [z, e(self.alpha + self.psi) * stay, e(self.alpha + self.chi) * hop, z],
            [z, -e(self.alpha - self.chi) * hop, e(self.alpha - self.psi) * stay, z],
            [z, z, z, e(self.rho)],
        ]
    }

    /// `|<01|U|10>|^2`, which equals `xi` for every choice of phases.
    pub fn hopping_probability(&self) -> f64 {
        self.xi
    }
}

pub fn build_unitary(g: &GateParams) -> Result<Unitary4> {
    g.validate()?;
    Ok(g.unitary())
}

pub fn hopping_probability(g: &GateParams) -> f64 {
    g.hopping_probability()
}

//! Monte-Carlo check that the gate-averaged doubled channel `E[U (x) U*]`
//! restricted to the diagonal doubled basis is the unbiased transfer matrix.

use num_complex::Complex64;
use rand::Rng;

use super::transfer::{transfer_matrix, Matrix4};
use crate::qsim::sample_gate_params;

#[derive(Clone, Debug)]
pub struct DoubledChannelReport {
    pub n_samples: usize,
    /// `T_jk = <j j| E[U (x) U*] |k k>`.
    pub estimate: Matrix4,
    pub target: Matrix4,
    /// Largest entrywise deviation of `estimate` from `target`.
    pub max_deviation: f64,
    /// Largest deviation over the full 16x16 averaged channel from
    /// `delta_{ac} delta_{bd} T_ab`, which kills every coherence.
    pub full_max_deviation: f64,
    /// Deviations of the charge-0 and charge-2 diagonal entries.
    pub sector0_deviation: f64,
    pub sector2_deviation: f64,
}

fn charge(k: usize) -> usize {
    (k >> 1) + (k & 1)
}

/// Averages `U (x) U*` over `n_samples` sampled gates. Only entries within
/// matching charge sectors of both copies can be nonzero, so those are the
/// ones accumulated (the rest are identically zero for every sample).
pub fn verify_doubled_channel<R: Rng + ?Sized>(n_samples: usize, rng: &mut R) -> DoubledChannelReport {
    let n_samples = n_samples.max(1);
    // avg[(a, c), (b, d)] = E[U_ab conj(U_cd)]
    let mut avg = vec![Complex64::new(0.0, 0.0); 256];
    for _ in 0..n_samples {
        let u = sample_gate_params(rng).unitary();
        for a in 0..4 {
            for b in (0..4).filter(|&b| charge(b) == charge(a)) {
                for c in 0..4 {
                    for d in (0..4).filter(|&d| charge(d) == charge(c)) {
                        avg[(a * 4 + c) * 16 + b * 4 + d] += u[a][b] * u[c][d].conj();
                    }
                }
            }
        }
    }
    let inv = 1.0 / n_samples as f64;
    avg.iter_mut().for_each(|x| *x *= inv);
    let target = transfer_matrix(0.5).expect("valid hop");
    let mut estimate = [[0.0; 4]; 4];
    let mut max_deviation: f64 = 0.0;
    for j in 0..4 {
        for k in 0..4 {
            let v = avg[(j * 4 + j) * 16 + k * 4 + k];
            estimate[j][k] = v.re;
            max_deviation = max_deviation.max((v - target[j][k]).norm());
        }
    }
    let mut full_max_deviation: f64 = 0.0;
    for a in 0..4 {
        for c in 0..4 {
            for b in 0..4 {
                for d in 0..4 {
                    let expect = if a == c && b == d { target[a][b] } else { 0.0 };
                    full_max_deviation = full_max_deviation.max((avg[(a * 4 + c) * 16 + b * 4 + d] - expect).norm());
                }
            }
        }
    }
    DoubledChannelReport {
        n_samples,
        estimate,
        target,
        max_deviation,
        full_max_deviation,
        sector0_deviation: (estimate[0][0] - 1.0).abs(),
        sector2_deviation: (estimate[3][3] - 1.0).abs(),
    }
}

//! Matrix-product representation of classical (co)vectors over bitstrings.
//!
//! Likelihoods are computed by evolving the flat covector `(1|` backwards
//! through the record. Every transfer matrix is symmetric and every projector
//! diagonal, so the reversed sequence applied to `(1|` as a column vector
//! gives `(1| T(m)` exactly; the overlap with the initial distribution is
//! then taken against an exact MPS of that distribution.
//!
//! Site tensors have shape `(left, 2, right)` stored row-major. During
//! evolution the state is kept in mixed canonical form around `center` and
//! the norm of the center tensor is folded into `log_scale` after every step.

use faer::Mat;

use super::transfer::HopSchedule;
use crate::error::{invalid, Error, Result};
use crate::record::{InitKind, MeasurementRecord};

/// Default singular-value truncation threshold.
pub const DEFAULT_THRESHOLD: f64 = 1e-10;

/// Relative size below which an overlap is reported as zero.
pub const RESOLUTION_FLOOR: f64 = 1e-12;

/// Relative rounding error charged per two-site update.
const ROUNDING_STEP: f64 = 16.0 * f64::EPSILON;

#[derive(Clone, Debug, PartialEq)]
struct SiteTensor {
    left: usize,
    right: usize,
    data: Vec<f64>,
}

impl SiteTensor {
    #[inline]
    fn at(&self, a: usize, s: usize, b: usize) -> f64 {
        self.data[(a * 2 + s) * self.right + b]
    }

    fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `(left*2) x right` view.
    fn left_matrix(&self) -> Mat<f64> {
        Mat::from_fn(self.left * 2, self.right, |i, j| self.data[i * self.right + j])
    }

    /// `left x (2*right)` view.
    fn right_matrix(&self) -> Mat<f64> {
        let cols = 2 * self.right;
        Mat::from_fn(self.left, cols, |i, j| self.data[i * cols + j])
    }

    fn from_matrix(m: &Mat<f64>, left: usize, right: usize) -> Self {
        debug_assert_eq!(m.nrows() * m.ncols(), left * 2 * right);
        let cols = m.ncols();
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for i in 0..m.nrows() {
            for j in 0..cols {
                data.push(m[(i, j)]);
            }
        }
        Self { left, right, data }
    }
}

#[derive(Clone, Debug)]
pub struct ProbabilityMps {
    tensors: Vec<SiteTensor>,
    log_scale: f64,
    /// Orthogonality center when the state is in mixed canonical form.
    center: Option<usize>,
    threshold: f64,
    zero: bool,
    truncated_weight: f64,
    /// Accumulated rounding and truncation error, relative to the norm.
    error_budget: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ProbabilityMps {
    /// The flat covector `(1| = sum_x (x|`, bond dimension one.
    pub fn flat(n_sites: usize, threshold: f64) -> Result<Self> {
        if n_sites < 2 {
            return invalid("MPS needs at least two sites");
        }
        if !(0.0..1.0).contains(&threshold) {
            return invalid(format!("threshold {threshold} outside [0, 1)"));
        }
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let site = SiteTensor { left: 1, right: 1, data: vec![h, h] };
        Ok(Self {
            tensors: vec![site; n_sites],
            log_scale: n_sites as f64 * 0.5 * std::f64::consts::LN_2,
            center: Some(0),
            threshold,
            zero: false,
            truncated_weight: 0.0,
            error_budget: 0.0,
        })
    }

    /// Exact MPS of an initial distribution. The fixed-charge uniform
    /// distribution is a counting automaton with bond dimension
    /// `min(Q, L - Q) + 1`; product kinds have bond dimension one.
    pub fn initial(n_sites: usize, kind: InitKind) -> Result<Self> {
        if n_sites < 2 {
            return invalid("MPS needs at least two sites");
        }
        kind.validate(n_sites)?;
        let product = |bits: &dyn Fn(usize) -> [f64; 2]| -> Vec<SiteTensor> {
            (0..n_sites).map(|s| SiteTensor { left: 1, right: 1, data: bits(s).to_vec() }).collect()
        };
        let (tensors, log_scale) = match kind {
            InitKind::Dicke(q) => {
                // bond b sits after site b; it carries the count of ones so far
                let range = |b: usize| -> (usize, usize) {
                    let lo = q.saturating_sub(n_sites - 1 - b);
                    let hi = q.min(b + 1);
                    (lo, hi)
                };
                let mut tensors = Vec::with_capacity(n_sites);
                for s in 0..n_sites {
                    let (llo, lhi) = if s == 0 { (0, 0) } else { range(s - 1) };
                    let (rlo, rhi) = if s + 1 == n_sites { (q, q) } else { range(s) };
                    let (left, right) = (lhi - llo + 1, rhi - rlo + 1);
                    let mut data = vec![0.0; left * 2 * right];
                    for a in 0..left {
                        for bit in 0..2 {
                            let c = llo + a + bit;
                            if (rlo..=rhi).contains(&c) {
                                data[(a * 2 + bit) * right + (c - rlo)] = 1.0;
                            }
                        }
                    }
                    tensors.push(SiteTensor { left, right, data });
                }
                (tensors, -binomial(n_sites, q).ln())
            }
            InitKind::Neel | InitKind::NeelFlip => {
                let config = kind.product_config(n_sites).expect("product kind");
                let t = product(&|s| {
                    if crate::record::site_bit(config, s, n_sites) {
                        [0.0, 1.0]
                    } else {
                        [1.0, 0.0]
                    }
                });
                (t, 0.0)
            }
            InitKind::Plus => (product(&|_| [0.5, 0.5]), 0.0),
        };
        Ok(Self {
            tensors,
            log_scale,
            center: None,
            threshold: 0.0,
            zero: false,
            truncated_weight: 0.0,
            error_budget: 0.0,
        })
    }

    /// Indicator covector of the charge-`q` sector, `sum_{|x| = q} (x|`, in
    /// canonical form.
    pub fn sector_indicator(n_sites: usize, q: usize, threshold: f64) -> Result<Self> {
        let flat = Self::flat(n_sites, threshold)?;
        let mut m = Self::initial(n_sites, InitKind::Dicke(q))?;
        m.log_scale = 0.0;
        m.threshold = flat.threshold;
        m.center = Some(n_sites - 1);
        m.move_center(0)?;
        m.rescale_center(0);
        Ok(m)
    }

    pub fn n_sites(&self) -> usize {
        self.tensors.len()
    }

    /// Bond dimensions between consecutive sites.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.tensors.len() - 1].iter().map(|t| t.right).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Squared singular-value weight discarded so far, relative to the squared
    /// norm at each truncation.
    pub fn truncated_weight(&self) -> f64 {
        self.truncated_weight
    }

    fn require_canonical(&self) -> Result<usize> {
        self.center.ok_or_else(|| Error::State("operation needs a canonical MPS".into()))
    }

    fn rescale_center(&mut self, c: usize) {
        let norm = self.tensors[c].norm();
        if norm > 0.0 && norm.is_finite() {
            self.tensors[c].data.iter_mut().for_each(|x| *x /= norm);
            self.log_scale += norm.ln();
        } else {
            self.zero = true;
        }
    }

    /// Moves the orthogonality center to `target` by QR sweeps.
    fn move_center(&mut self, target: usize) -> Result<()> {
        let mut c = self.require_canonical()?;
        while c < target {
            let a = self.tensors[c].left_matrix();
            let left = self.tensors[c].left;
            let qr = a.qr();
            let (q, r) = (qr.compute_thin_Q(), qr.thin_R().to_owned());
            let k = q.ncols();
            self.tensors[c] = SiteTensor::from_matrix(&q, left, k);
            let next = &self.tensors[c + 1];
            let merged = &r * &next.right_matrix();
            let next_right = next.right;
            self.tensors[c + 1] = SiteTensor::from_matrix(&merged, k, next_right);
            c += 1;
        }
        while c > target {
            let a = self.tensors[c].right_matrix();
            let right = self.tensors[c].right;
            let qr = a.transpose().qr();
            let (q, r) = (qr.compute_thin_Q(), qr.thin_R().to_owned());
            let k = q.ncols();
            self.tensors[c] = SiteTensor::from_matrix(&q.transpose().to_owned(), k, right);
            let prev = &self.tensors[c - 1];
            let merged = &prev.left_matrix() * r.transpose();
            let prev_left = prev.left;
            self.tensors[c - 1] = SiteTensor::from_matrix(&merged, prev_left, k);
            c -= 1;
        }
        self.center = Some(c);
        Ok(())
    }

    /// Projects `site` onto `outcome`.
    pub fn project(&mut self, site: usize, outcome: bool) -> Result<()> {
        if site >= self.n_sites() {
            return invalid(format!("site {site} outside {} sites", self.n_sites()));
        }
        if self.zero {
            return Ok(());
        }
        self.move_center(site)?;
        let t = &mut self.tensors[site];
        let before = t.norm();
        let drop = usize::from(!outcome);
        for a in 0..t.left {
            for b in 0..t.right {
                t.data[(a * 2 + drop) * t.right + b] = 0.0;
            }
        }
        // a projection that keeps no more than the accumulated error has
        // annihilated the exact vector
        if t.norm() <= before * self.error_budget {
            self.zero = true;
            return Ok(());
        }
        self.rescale_center(site);
        Ok(())
    }

    /// Applies the transfer matrix with hop probability `hop` to
    /// `(left, left + 1)`, truncating the new bond. The center ends on
    /// `left + 1` when `toward_right`, else on `left`.
    pub fn apply_transfer(&mut self, left: usize, hop: f64, toward_right: bool) -> Result<()> {
        if left + 1 >= self.n_sites() {
            return invalid(format!("bond {left} outside {} sites", self.n_sites()));
        }
        if !(0.0..=1.0).contains(&hop) {
            return invalid(format!("hop={hop} outside [0, 1]"));
        }
        if hop == 0.0 || self.zero {
            return Ok(());
        }
        let c = self.require_canonical()?;
        if c != left && c != left + 1 {
            self.move_center(if c < left { left } else { left + 1 })?;
        }
        let (a, b) = (&self.tensors[left], &self.tensors[left + 1]);
        let (dl, dr) = (a.left, b.right);
        // theta rows: (alpha, s1); cols: (s2, beta)
        let mut theta = &a.left_matrix() * &b.right_matrix();
        let stay = 1.0 - hop;
        for al in 0..dl {
            for be in 0..dr {
                let i10 = (al * 2 + 1, be);
                let i01 = (al * 2, dr + be);
                let (x, y) = (theta[i10], theta[i01]);
                theta[i10] = stay * x + hop * y;
                theta[i01] = hop * x + stay * y;
            }
        }
        let svd =
            theta.thin_svd().map_err(|e| Error::Numeric(format!("SVD failed on bond {left} ({dl}x{dr}): {e:?}")))?;
        let (u, v) = (svd.U(), svd.V());
        let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite singular values on bond {left}")));
        }
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        let total: f64 = s.iter().map(|x| x * x).sum();
        if total == 0.0 {
            self.zero = true;
            return Ok(());
        }
        let cutoff = self.threshold * s[order[0]];
        let keep = order.iter().take_while(|&&k| s[k] >= cutoff).count().max(1);
        let tail: f64 = order[keep..].iter().map(|&k| s[k] * s[k]).sum();
        self.truncated_weight += tail / total;
        self.error_budget += ROUNDING_STEP + (tail / total).sqrt();
        let kept = &order[..keep];
        let mut lm = Mat::zeros(2 * dl, keep);
        let mut rm = Mat::zeros(keep, 2 * dr);
        for (col, &k) in kept.iter().enumerate() {
            let (lw, rw) = if toward_right { (1.0, s[k]) } else { (s[k], 1.0) };
            for i in 0..2 * dl {
                lm[(i, col)] = u[(i, k)] * lw;
            }
            for j in 0..2 * dr {
                rm[(col, j)] = v[(j, k)] * rw;
            }
        }
        self.tensors[left] = SiteTensor::from_matrix(&lm, dl, keep);
        self.tensors[left + 1] = SiteTensor::from_matrix(&rm, keep, dr);
        let new_center = if toward_right { left + 1 } else { left };
        self.center = Some(new_center);
        self.rescale_center(new_center);
        Ok(())
    }

    /// Raw contraction `(self | other)` without the log scales.
    fn contract(&self, other: &ProbabilityMps) -> f64 {
        let mut env = vec![1.0f64];
        let (mut ea, mut eb) = (1usize, 1usize);
        for (x, y) in self.tensors.iter().zip(&other.tensors) {
            debug_assert_eq!((x.left, y.left), (ea, eb));
            let mut next = vec![0.0; x.right * y.right];
            for a in 0..ea {
                for a2 in 0..eb {
                    let e = env[a * eb + a2];
                    if e == 0.0 {
                        continue;
                    }
                    for s in 0..2 {
                        for b in 0..x.right {
                            let xe = e * x.at(a, s, b);
                            if xe == 0.0 {
                                continue;
                            }
                            for b2 in 0..y.right {
                                next[b * y.right + b2] += xe * y.at(a2, s, b2);
                            }
                        }
                    }
                }
            }
            env = next;
            ea = x.right;
            eb = y.right;
        }
        env[0]
    }

    /// `log (self | other)`.
    ///
    /// Returns `-inf` when the overlap is not positive, or when it falls
    /// below [`RESOLUTION_FLOOR`] times the product of the two L2 norms,
    /// where it cannot be told apart from rounding noise.
    pub fn log_overlap(&self, other: &ProbabilityMps) -> Result<f64> {
        if self.n_sites() != other.n_sites() {
            return invalid("overlap of MPS with different lengths");
        }
        if self.zero || other.zero {
            return Ok(f64::NEG_INFINITY);
        }
        let v = self.contract(other);
        let scale = (self.contract(self) * other.contract(other)).sqrt();
        let floor = RESOLUTION_FLOOR;
        if !(v > floor * scale) {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(v.ln() + self.log_scale + other.log_scale)
    }

    /// Dense vector of the represented (co)vector; small chains only.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n_sites();
        let scale = self.log_scale.exp();
        (0..1usize << n)
            .map(|x| {
                let mut v = vec![1.0];
                for (s, t) in self.tensors.iter().enumerate() {
                    let bit = usize::from(crate::record::site_bit(x, s, n));
                    let mut w = vec![0.0; t.right];
                    for (a, va) in v.iter().enumerate() {
                        for (b, wb) in w.iter_mut().enumerate() {
                            *wb += va * t.at(a, bit, b);
                        }
                    }
                    v = w;
                }
                if self.zero {
                    0.0
                } else {
                    v[0] * scale
                }
            })
            .collect()
    }
}

/// `(1| T(m)` for the record, as a truncated MPS.
pub fn reverse_evolve(record: &MeasurementRecord, schedule: &HopSchedule, threshold: f64) -> Result<ProbabilityMps> {
    reverse_evolve_from(ProbabilityMps::flat(record.n_sites(), threshold)?, record, schedule)
}

/// `(1_q| T(m)`, the reverse evolution restricted to the charge-`q` sector.
///
/// Dynamics conserve charge, so this equals the sector-`q` part of
/// [`reverse_evolve`]. Truncation is then relative to that sector alone,
/// which keeps unlikely labels resolved.
pub fn reverse_evolve_sector(
    record: &MeasurementRecord,
    q: usize,
    schedule: &HopSchedule,
    threshold: f64,
) -> Result<ProbabilityMps> {
    if q > record.n_sites() {
        return invalid(format!("charge {q} exceeds {} sites", record.n_sites()));
    }
    reverse_evolve_from(ProbabilityMps::sector_indicator(record.n_sites(), q, threshold)?, record, schedule)
}

fn reverse_evolve_from(
    mut mps: ProbabilityMps,
    record: &MeasurementRecord,
    schedule: &HopSchedule,
) -> Result<ProbabilityMps> {
    let layout = record.layout();
    schedule.validate(layout)?;
    let n = layout.n_sites();
    for tau in (0..layout.n_rounds()).rev() {
        let events = record.round(tau);
        let center = mps.center.unwrap_or(0);
        if center * 2 < n {
            for e in events {
                mps.project(e.site, e.outcome)?;
            }
        } else {
            for e in events.iter().rev() {
                mps.project(e.site, e.outcome)?;
            }
        }
        if mps.is_zero() {
            break;
        }
        let first = layout.first_gate_index(tau);
        let lefts: Vec<usize> = layout.left_sites(tau).collect();
        let center = mps.center.unwrap_or(0);
        if center * 2 < n {
            for (j, &left) in lefts.iter().enumerate() {
                mps.apply_transfer(left, schedule.hop(first + j), true)?;
            }
        } else {
            for (j, &left) in lefts.iter().enumerate().rev() {
                mps.apply_transfer(left, schedule.hop(first + j), false)?;
            }
        }
    }
    Ok(mps)
}

/// `log P(record | init)` for each initial state. One reverse evolution is
/// run per distinct charge among `inits` (the flat covector for `plus`) and
/// shared by every initial state of that charge.
pub fn evolve_mps_likelihoods(
    record: &MeasurementRecord,
    inits: &[InitKind],
    schedule: &HopSchedule,
    threshold: f64,
) -> Result<Vec<f64>> {
    let n = record.n_sites();
    let mut covectors: Vec<(Option<usize>, ProbabilityMps)> = Vec::new();
    let mut out = Vec::with_capacity(inits.len());
    for &kind in inits {
        kind.validate(n)?;
        let q = kind.charge(n);
        let idx = match covectors.iter().position(|(c, _)| *c == q) {
            Some(i) => i,
            None => {
                let cov = match q {
                    Some(q) => reverse_evolve_sector(record, q, schedule, threshold)?,
                    None => reverse_evolve(record, schedule, threshold)?,
                };
                covectors.push((q, cov));
                covectors.len() - 1
            }
        };
        out.push(covectors[idx].1.log_overlap(&ProbabilityMps::initial(n, kind)?)?);
    }
    Ok(out)
}

pub fn evolve_mps_likelihood(
    record: &MeasurementRecord,
    init: InitKind,
    schedule: &HopSchedule,
    threshold: f64,
) -> Result<f64> {
    Ok(evolve_mps_likelihoods(record, &[init], schedule, threshold)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::build_layout;
    use crate::record::{InitFamily, MeasurementEvent};
    use crate::sep::dense::{evolve_dense_likelihood, initial_classical_state};

    fn record(n: usize, t: usize, events: &[(usize, usize, bool)]) -> MeasurementRecord {
        let ev = events.iter().map(|&(h, s, o)| MeasurementEvent { half_layer: h, site: s, outcome: o }).collect();
        MeasurementRecord::new(build_layout(n, t).unwrap(), ev, InitFamily::Dicke, None, 0, 0.5, None).unwrap()
    }

    #[test]
    fn flat_state_is_all_ones_with_unit_bonds() {
        let m = ProbabilityMps::flat(5, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(m.bond_dims(), vec![1; 4]);
        for v in m.to_dense() {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn initial_mps_match_dense_states() {
        for n in 2..=7 {
            let mut kinds: Vec<InitKind> = (0..=n).map(InitKind::Dicke).collect();
            kinds.push(InitKind::Plus);
            if n % 2 == 0 {
                kinds.extend([InitKind::Neel, InitKind::NeelFlip]);
            }
            for k in kinds {
                let m = ProbabilityMps::initial(n, k).unwrap();
                let d = initial_classical_state(n, k).unwrap().to_full();
                for (x, (a, b)) in m.to_dense().iter().zip(&d).enumerate() {
                    assert!((a - b).abs() < 1e-14, "n={n} {k:?} x={x}: {a} vs {b}");
                }
                if let InitKind::Dicke(q) = k {
                    assert!(m.max_bond_dim() <= q.min(n - q) + 1);
                }
            }
        }
    }

    #[test]
    fn two_site_hand_example() {
        let r = record(2, 1, &[(0, 0, true)]);
        let l = evolve_mps_likelihood(&r, InitKind::Dicke(1), &HopSchedule::unbiased(), DEFAULT_THRESHOLD).unwrap();
        assert!((l - 0.5f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn reverse_covector_matches_dense_transpose() {
        let r = record(5, 2, &[(0, 1, true), (1, 3, false), (2, 0, true), (3, 4, true)]);
        let sched = HopSchedule::PerGate((0..r.layout().n_gates()).map(|k| (k as f64 * 0.29 + 0.1) % 1.0).collect());
        let cov = reverse_evolve(&r, &sched, 0.0).unwrap().to_dense();
        // each covector entry is the likelihood of a delta initial state
        for x in 0..32usize {
            let mut st = crate::sep::dense::ProbabilityState::new(5, InitKind::Plus).unwrap();
            // isolate x by projecting the plus state on its bits
            for s in 0..5 {
                st.project(s, crate::record::site_bit(x, s, 5));
            }
            let mut st2 = st.clone();
            crate::sep::dense::evolve_forward(&mut st2, r.layout(), &r, &sched);
            let expect = (st2.log_total() - st.log_total()).exp();
            assert!((cov[x] - expect).abs() < 1e-12, "x={x}: {} vs {expect}", cov[x]);
        }
    }

    #[test]
    fn matches_dense_on_small_records() {
        let r = record(6, 6, &[(0, 2, true), (1, 3, false), (4, 0, true), (7, 5, false), (9, 2, false), (11, 1, true)]);
        for q in 0..=6 {
            let d = evolve_dense_likelihood(&r, InitKind::Dicke(q), &HopSchedule::unbiased()).unwrap();
            let m = evolve_mps_likelihood(&r, InitKind::Dicke(q), &HopSchedule::unbiased(), DEFAULT_THRESHOLD).unwrap();
            if d == f64::NEG_INFINITY {
                assert_eq!(m, f64::NEG_INFINITY, "q={q}");
            } else {
                assert!((d - m).abs() < 1e-8, "q={q}: {d} vs {m}");
            }
        }
    }

    #[test]
    fn contradictory_projection_gives_zero() {
        let mut m = ProbabilityMps::flat(3, DEFAULT_THRESHOLD).unwrap();
        m.project(1, true).unwrap();
        m.apply_transfer(0, 0.5, true).unwrap();
        m.project(1, false).unwrap();
        m.project(0, false).unwrap();
        let flat = ProbabilityMps::flat(3, 0.0).unwrap();
        assert_eq!(m.log_overlap(&flat).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(ProbabilityMps::flat(4, -1.0).is_err());
        assert!(ProbabilityMps::flat(4, 1.0).is_err());
    }
}

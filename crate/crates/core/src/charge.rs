// SPDX-License-Identifier: Apache-2.0

//! Seven-level NV⁻/NV⁰ charge model under 532 nm excitation.
//!
//! Levels are numbered 1..=7 as in the usual diagram: |1⟩,|2⟩ NV⁻ ground
//! spin states, |3⟩ the effective singlet, |4⟩,|5⟩ NV⁻ excited states,
//! |6⟩,|7⟩ NV⁰ ground and excited state. Internally indices are zero based.

use nalgebra::{DMatrix, DVector, SMatrix};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEVELS: usize = 7;
const DIM: usize = LEVELS * LEVELS;

/// Decay channels `(from, to)` with one-based level labels.
pub const CHANNELS: [(usize, usize); 11] =
    [(4, 1), (5, 2), (3, 2), (3, 1), (7, 6), (4, 3), (5, 3), (4, 6), (5, 6), (7, 1), (7, 2)];

/// Optically driven pairs `(ground, excited)`.
pub const DRIVEN: [(usize, usize); 3] = [(1, 4), (2, 5), (6, 7)];

/// Relative singular value below which a Liouvillian direction counts as null.
pub const NULL_TOLERANCE: f64 = 1e-13;

/// Rates in MHz. Field names double as the keys of the rate-table file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSystem {
    pub gamma_41: f64,
    pub gamma_52: f64,
    pub gamma_32: f64,
    pub gamma_31: f64,
    pub gamma_76: f64,
    pub gamma_43: f64,
    pub gamma_53: f64,
    pub gamma_46: f64,
    pub gamma_56: f64,
    pub gamma_71: f64,
    pub gamma_72: f64,
    /// Direct |5⟩→|1⟩ emission. Not part of the standard rate set; zero
    /// unless configured.
    #[serde(default)]
    pub gamma_51: f64,
    /// Optical excitation rate L₅₃₂, MHz, equal on all three transitions.
    #[serde(default)]
    pub drive_mhz: f64,
}

impl Default for LevelSystem {
    fn default() -> Self {
        Self {
            gamma_41: 80.0,
            gamma_52: 80.0,
            gamma_32: 25.0,
            gamma_31: 75.0,
            gamma_76: 20.0,
            gamma_43: 15.0,
            gamma_53: 45.0,
            gamma_46: 20.0,
            gamma_56: 20.0,
            gamma_71: 5.0,
            gamma_72: 10.0,
            gamma_51: 0.0,
            drive_mhz: 0.0,
        }
    }
}

impl LevelSystem {
    pub fn with_drive(&self, drive_mhz: f64) -> Self {
        Self { drive_mhz, ..self.clone() }
    }

    /// Rate of the channel `from → to` (one-based), zero if it does not exist.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        match (from, to) {
            (4, 1) => self.gamma_41,
            (5, 2) => self.gamma_52,
            (3, 2) => self.gamma_32,
            (3, 1) => self.gamma_31,
            (7, 6) => self.gamma_76,
            (4, 3) => self.gamma_43,
            (5, 3) => self.gamma_53,
            (4, 6) => self.gamma_46,
            (5, 6) => self.gamma_56,
            (7, 1) => self.gamma_71,
            (7, 2) => self.gamma_72,
            (5, 1) => self.gamma_51,
            _ => 0.0,
        }
    }

    fn rate_mut(&mut self, from: usize, to: usize) -> Option<&mut f64> {
        Some(match (from, to) {
            (4, 1) => &mut self.gamma_41,
            (5, 2) => &mut self.gamma_52,
            (3, 2) => &mut self.gamma_32,
            (3, 1) => &mut self.gamma_31,
            (7, 6) => &mut self.gamma_76,
            (4, 3) => &mut self.gamma_43,
            (5, 3) => &mut self.gamma_53,
            (4, 6) => &mut self.gamma_46,
            (5, 6) => &mut self.gamma_56,
            (7, 1) => &mut self.gamma_71,
            (7, 2) => &mut self.gamma_72,
            (5, 1) => &mut self.gamma_51,
            _ => return None,
        })
    }

    /// Multiplies every standard channel by `factors[k]` (in `CHANNELS` order).
    pub fn scaled(&self, factors: &[f64; 11]) -> Self {
        let mut out = self.clone();
        for (&(i, j), f) in CHANNELS.iter().zip(factors) {
            if let Some(r) = out.rate_mut(i, j) {
                *r *= f;
            }
        }
        out
    }

    /// All non-zero dissipation channels `(from, to, rate)`.
    pub fn channels(&self) -> Vec<(usize, usize, f64)> {
        CHANNELS
            .iter()
            .chain(std::iter::once(&(5, 1)))
            .map(|&(i, j)| (i, j, self.rate(i, j)))
            .filter(|c| c.2 != 0.0)
            .collect()
    }

    pub fn gamma_ion(&self) -> f64 {
        self.gamma_56 + self.gamma_46
    }

    pub fn gamma_rec(&self) -> f64 {
        self.gamma_72 + self.gamma_71
    }

    pub fn gamma_pl(&self) -> f64 {
        self.gamma_52 + self.gamma_51 + self.gamma_76
    }

    pub fn validate(&self) -> Result<()> {
        let all = CHANNELS.iter().chain(std::iter::once(&(5, 1))).map(|&(i, j)| self.rate(i, j));
        for r in all.chain(std::iter::once(self.drive_mhz)) {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput("rates and drive must be finite and non-negative".into()));
            }
        }
        Ok(())
    }
}

pub type Matrix7c = SMatrix<Complex64, LEVELS, LEVELS>;

/// Hermitian, unit-trace, positive semidefinite 7×7 matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(pub Matrix7c);

impl DensityMatrix {
    /// Pure state |level⟩⟨level| (one-based).
    pub fn pure(level: usize) -> Self {
        let mut m = Matrix7c::zeros();
        m[(level - 1, level - 1)] = Complex64::new(1.0, 0.0);
        Self(m)
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn populations(&self) -> [f64; LEVELS] {
        std::array::from_fn(|i| self.0[(i, i)].re)
    }

    /// ρ₁₁ + … + ρ₅₅.
    pub fn nv_minus_fraction(&self) -> f64 {
        self.populations()[..5].iter().sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hermiticity_error() > 1e-12 {
            return Err(Error::InvalidInput("density matrix is not Hermitian".into()));
        }
        if (self.trace() - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(Error::InvalidInput("density matrix trace differs from one".into()));
        }
        if self.min_eigenvalue() < -1e-10 {
            return Err(Error::InvalidInput("density matrix has a negative eigenvalue".into()));
        }
        Ok(())
    }

    /// Row-major vectorization, index `7a + b` for ρ_ab.
    pub fn to_vector(&self) -> DVector<Complex64> {
        DVector::from_iterator(DIM, (0..DIM).map(|k| self.0[(k / LEVELS, k % LEVELS)]))
    }

    pub fn from_vector(v: &DVector<Complex64>) -> Self {
        Self(Matrix7c::from_fn(|a, b| v[a * LEVELS + b]))
    }
}

fn hamiltonian(sys: &LevelSystem) -> Matrix7c {
    let mut h = Matrix7c::zeros();
    let l = Complex64::new(sys.drive_mhz, 0.0);
    for (g, e) in DRIVEN {
        h[(e - 1, g - 1)] = l;
        h[(g - 1, e - 1)] = l;
    }
    h
}

/// `dρ/dt = −i[H, ρ] + Σ γ_ij (L ρ L† − ½{L†L, ρ})` with `L_ij = |j⟩⟨i|`.
pub fn apply_generator(sys: &LevelSystem, rho: &Matrix7c) -> Matrix7c {
    let h = hamiltonian(sys);
    let i = Complex64::new(0.0, 1.0);
    let mut out = (h * rho - rho * h) * -i;
    for (from, to, g) in sys.channels() {
        let (f, t) = (from - 1, to - 1);
        // L ρ L† moves ρ_ff to the (t, t) element
        out[(t, t)] += rho[(f, f)] * g;
        // −½{|f⟩⟨f|, ρ}: row f and column f decay at g/2
        for k in 0..LEVELS {
            out[(f, k)] -= rho[(f, k)] * (0.5 * g);
            out[(k, f)] -= rho[(k, f)] * (0.5 * g);
        }
    }
    out
}

/// 49×49 superoperator acting on row-major vectorized ρ.
pub fn liouvillian(sys: &LevelSystem) -> DMatrix<Complex64> {
    let mut l = DMatrix::zeros(DIM, DIM);
    for k in 0..DIM {
        let mut e = Matrix7c::zeros();
        e[(k / LEVELS, k % LEVELS)] = Complex64::new(1.0, 0.0);
        let col = apply_generator(sys, &e);
        for r in 0..DIM {
            l[(r, k)] = col[(r / LEVELS, r % LEVELS)];
        }
    }
    l
}

/// Dimension of the numerical null space of the Liouvillian.
pub fn nullity(sys: &LevelSystem) -> usize {
    let sv = liouvillian(sys).singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return DIM;
    }
    sv.iter().filter(|s| **s <= NULL_TOLERANCE * max).count()
}

/// Vector indices of the populations and the driven coherences. The
/// generator maps this set into itself and every other coherence decays, so
/// the stationary state lives here.
fn stationary_support() -> Vec<usize> {
    let mut idx: Vec<usize> = (0..LEVELS).map(|k| k * LEVELS + k).collect();
    for (g, e) in DRIVEN {
        idx.push((g - 1) * LEVELS + (e - 1));
        idx.push((e - 1) * LEVELS + (g - 1));
    }
    idx
}

/// Stationary state from least squares on `[L; tr] ρ = [0; 1]`.
///
/// Uniqueness is checked on the full Liouvillian; the solve itself is done on
/// the invariant support so that slowly decaying coherences at weak drive do
/// not leak rounding noise into the result.
pub fn steady_state(sys: &LevelSystem) -> Result<DensityMatrix> {
    sys.validate()?;
    let l = liouvillian(sys);
    let sv = l.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let null = if max == 0.0 { DIM } else { sv.iter().filter(|s| **s <= NULL_TOLERANCE * max).count() };
    if sys.drive_mhz == 0.0 || null != 1 {
        return Err(Error::DegenerateSteadyState { nullity: null.max(2) });
    }
    let support = stationary_support();
    let n = support.len();
    let mut a = DMatrix::zeros(n + 1, n);
    for (r, &i) in support.iter().enumerate() {
        for (c, &j) in support.iter().enumerate() {
            a[(r, c)] = l[(i, j)];
        }
    }
    for k in 0..LEVELS {
        a[(n, k)] = Complex64::new(1.0, 0.0);
    }
    let mut b = DVector::zeros(n + 1);
    b[n] = Complex64::new(1.0, 0.0);
    // The system is consistent, so equilibrating rows and columns leaves the
    // solution unchanged while taming the spread between optical and
    // charge-conversion rates.
    let col_scale: Vec<f64> = (0..n).map(|c| 1.0 / a.column(c).iter().map(|z| z.norm()).fold(0.0, f64::max)).collect();
    for (c, s) in col_scale.iter().enumerate() {
        a.column_mut(c).scale_mut(*s);
    }
    for r in 0..=n {
        let m = a.row(r).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if m > 0.0 {
            a.row_mut(r).scale_mut(1.0 / m);
            b[r] /= m;
        }
    }
    // full column rank, so Householder QR gives the least-squares solution
    let qr = a.qr();
    let rhs = qr.q().adjoint() * b;
    let y = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::InvalidInput("steady-state system is rank deficient".into()))?;
    let mut full = DVector::zeros(DIM);
    for (c, &j) in support.iter().enumerate() {
        full[j] = y[c] * col_scale[c];
    }
    let rho = DensityMatrix::from_vector(&full).0;
    let mut rho = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = rho.trace();
    rho /= tr;
    Ok(DensityMatrix(rho))
}

/// Fraction of the ensemble in the negative charge state at steady state.
pub fn nv_minus_ratio(sys: &LevelSystem) -> Result<f64> {
    Ok(steady_state(sys)?.nv_minus_fraction().clamp(0.0, 1.0))
}

/// `nv_minus_ratio` for each drive in `drives` (MHz), in order.
pub fn charge_curve(sys: &LevelSystem, drives: &[f64]) -> Result<Vec<f64>> {
    drives.par_iter().map(|&d| nv_minus_ratio(&sys.with_drive(d))).collect()
}

/// Fixed-step RK4 integration of the master equation over time `t` (µs).
pub fn evolve(sys: &LevelSystem, rho0: &DensityMatrix, t: f64, steps: usize) -> Result<DensityMatrix> {
    sys.validate()?;
    if steps == 0 || !(t >= 0.0) {
        return Err(Error::InvalidInput("evolve needs t >= 0 and at least one step".into()));
    }
    let h = t / steps as f64;
    let half = Complex64::new(0.5 * h, 0.0);
    let full = Complex64::new(h, 0.0);
    let sixth = Complex64::new(h / 6.0, 0.0);
    let two = Complex64::new(2.0, 0.0);
    let mut rho = rho0.0;
    for _ in 0..steps {
        let k1 = apply_generator(sys, &rho);
        let k2 = apply_generator(sys, &(rho + k1 * half));
        let k3 = apply_generator(sys, &(rho + k2 * half));
        let k4 = apply_generator(sys, &(rho + k3 * full));
        rho += (k1 + k2 * two + k3 * two + k4) * sixth;
    }
    Ok(DensityMatrix(rho))
}

/// Optical excitation rate for a laser intensity: `L₅₃₂ = κ · power`.
pub fn drive_from_power(power: f64, kappa: f64) -> Result<f64> {
    if !(power >= 0.0) || !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::InvalidInput("power and kappa must be non-negative".into()));
    }
    Ok(kappa * power)
}

/// Fits κ (MHz per unit power) so that the model ratio matches `curve`
/// (pairs of power and measured NV⁻ fraction) in least squares.
pub fn calibrate_kappa(sys: &LevelSystem, curve: &[(f64, f64)]) -> Result<f64> {
    if curve.is_empty() || curve.iter().any(|(p, r)| !(*p > 0.0) || !(0.0..=1.0).contains(r)) {
        return Err(Error::InvalidInput("calibration curve needs positive powers and fractions in [0, 1]".into()));
    }
    let sse = |ln_kappa: f64| -> f64 {
        let k = ln_kappa.exp();
        curve
            .iter()
            .map(|&(p, r)| match nv_minus_ratio(&sys.with_drive(k * p)) {
                Ok(m) => (m - r).powi(2),
                Err(_) => f64::INFINITY,
            })
            .sum()
    };
    // coarse scan over twelve decades, then golden-section refinement
    let grid: Vec<f64> = (0..=96).map(|i| (-8.0 + 0.125 * i as f64) * std::f64::consts::LN_10).collect();
    let values: Vec<f64> = grid.par_iter().map(|&x| sse(x)).collect();
    if values.iter().all(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("model ratio undefined for every trial kappa".into()));
    }
    let best = (0..grid.len()).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let (x, _) = crate::fitting::golden_min(|x| Ok(sse(x)), lo, hi)?;
    Ok(x.exp())
}

/// Literature calibration used to turn ZPL areas into populations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlCalibration {
    pub debye_waller_minus: f64,
    pub debye_waller_zero: f64,
    /// Excited-state lifetimes, ns.
    pub lifetime_minus: f64,
    pub lifetime_zero: f64,
}

impl Default for PlCalibration {
    fn default() -> Self {
        Self { debye_waller_minus: 0.03, debye_waller_zero: 0.05, lifetime_minus: 12.0, lifetime_zero: 19.0 }
    }
}

impl PlCalibration {
    pub fn validate(&self) -> Result<()> {
        let v = [self.debye_waller_minus, self.debye_waller_zero, self.lifetime_minus, self.lifetime_zero];
        if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidInput("PL calibration constants must be positive".into()))
        }
    }
}

/// NV⁻ fraction from the two zero-phonon-line areas.
///
/// A ZPL area scales as population × Debye-Waller factor / lifetime, so
/// `n⁻/n⁰ = (A⁻ τ⁻ / DW⁻) / (A⁰ τ⁰ / DW⁰)`.
pub fn estimate_nv_ratio_from_pl(zpl_minus: f64, zpl_zero: f64, calib: &PlCalibration) -> Result<f64> {
    calib.validate()?;
    if !(zpl_minus >= 0.0 && zpl_zero >= 0.0) {
        return Err(Error::InvalidSpectrum("ZPL areas must be non-negative".into()));
    }
    if zpl_minus == 0.0 && zpl_zero == 0.0 {
        return Err(Error::InvalidSpectrum("both ZPL areas are zero".into()));
    }
    let n_minus = zpl_minus / calib.debye_waller_minus * calib.lifetime_minus;
    let n_zero = zpl_zero / calib.debye_waller_zero * calib.lifetime_zero;
    Ok(n_minus / (n_minus + n_zero))
}

/// Area of a peak at `center` above the straight line joining the spectrum
/// at `center ± half_window` (trapezoid rule). Wavelengths must ascend.
pub fn zpl_area(wavelength: &[f64], intensity: &[f64], center: f64, half_window: f64) -> Result<f64> {
    if wavelength.len() != intensity.len() || wavelength.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidSpectrum("wavelengths must ascend and match the intensities".into()));
    }
    let idx: Vec<usize> = (0..wavelength.len()).filter(|&i| (wavelength[i] - center).abs() <= half_window).collect();
    if idx.len() < 3 {
        return Err(Error::InvalidSpectrum(format!("fewer than three samples around {center} nm")));
    }
    let (a, b) = (idx[0], idx[idx.len() - 1]);
    let slope = (intensity[b] - intensity[a]) / (wavelength[b] - wavelength[a]);
    let net = |i: usize| intensity[i] - (intensity[a] + slope * (wavelength[i] - wavelength[a]));
    Ok(idx.windows(2).map(|w| 0.5 * (net(w[0]) + net(w[1])) * (wavelength[w[1]] - wavelength[w[0]])).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_rho(seed: u64) -> DensityMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = Matrix7c::from_fn(|_, _| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = a * a.adjoint();
        let tr = m.trace();
        DensityMatrix(m / tr)
    }

    #[test]
    fn zero_system_is_zero_operator() {
        let z = LevelSystem {
            gamma_41: 0.0,
            gamma_52: 0.0,
            gamma_32: 0.0,
            gamma_31: 0.0,
            gamma_76: 0.0,
            gamma_43: 0.0,
            gamma_53: 0.0,
            gamma_46: 0.0,
            gamma_56: 0.0,
            gamma_71: 0.0,
            gamma_72: 0.0,
            ..LevelSystem::default()
        };
        assert!(liouvillian(&z).iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn trace_annihilation() {
        let sys = LevelSystem::default().with_drive(3.0);
        for s in 0..5 {
            let d = apply_generator(&sys, &random_rho(s).0);
            assert!(d.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn single_channel_rate_limit() {
        let sys = LevelSystem::default();
        let only = LevelSystem { gamma_41: 80.0, ..sys.scaled(&[0.0; 11]) };
        let d = apply_generator(&only, &DensityMatrix::pure(4).0);
        assert!((d[(3, 3)].re + 80.0).abs() < 1e-12);
        assert!((d[(0, 0)].re - 80.0).abs() < 1e-12);
    }

    #[test]
    fn aggregates() {
        let s = LevelSystem::default();
        assert_eq!(s.gamma_ion(), 40.0);
        assert_eq!(s.gamma_rec(), 15.0);
        assert_eq!(s.gamma_pl(), 100.0);
        assert_eq!(s.channels().len(), 11);
    }

    #[test]
    fn no_drive_is_degenerate() {
        assert!(matches!(steady_state(&LevelSystem::default()), Err(Error::DegenerateSteadyState { .. })));
        assert!(nullity(&LevelSystem::default()) > 1);
    }

    #[test]
    fn steady_state_invariants_and_coherences() {
        for d in [1e-3, 0.1, 1.0, 30.0] {
            let rho = steady_state(&LevelSystem::default().with_drive(d)).unwrap();
            rho.validate().unwrap();
            assert!(apply_generator(&LevelSystem::default().with_drive(d), &rho.0).norm() < 1e-9);
            for a in 0..LEVELS {
                for b in 0..LEVELS {
                    let driven = DRIVEN.iter().any(|&(g, e)| (a, b) == (g - 1, e - 1) || (a, b) == (e - 1, g - 1));
                    if a != b && !driven {
                        assert!(rho.0[(a, b)].norm() < 1e-12, "({a},{b}) at drive {d}: {}", rho.0[(a, b)].norm());
                    }
                }
            }
        }
    }

    #[test]
    fn ratio_decreases_with_drive() {
        let s = LevelSystem::default();
        let lo = nv_minus_ratio(&s.with_drive(0.01)).unwrap();
        let hi = nv_minus_ratio(&s.with_drive(10.0)).unwrap();
        assert!(hi < lo, "{hi} vs {lo}");
    }

    #[test]
    fn pl_ratio_cases() {
        let c = PlCalibration::default();
        assert_eq!(estimate_nv_ratio_from_pl(3.0, 0.0, &c).unwrap(), 1.0);
        let same = PlCalibration { debye_waller_zero: 0.03, lifetime_zero: 12.0, ..c };
        assert!((estimate_nv_ratio_from_pl(2.0, 2.0, &same).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(estimate_nv_ratio_from_pl(0.0, 0.0, &c), Err(Error::InvalidSpectrum(_))));
    }

    #[test]
    fn drive_is_linear() {
        assert_eq!(drive_from_power(0.0, 0.3).unwrap(), 0.0);
        assert_eq!(drive_from_power(4.0, 0.3).unwrap(), 2.0 * drive_from_power(2.0, 0.3).unwrap());
    }
}

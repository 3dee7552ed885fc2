// SPDX-License-Identifier: Apache-2.0

//! Closed-form nearest-donor statistics and ensemble lineshapes.
//!
//! Densities obtained by a decreasing change of variables (r → E → v) are
//! returned as magnitudes. Lineshapes in `v` are normalized over the whole
//! line, so each of the two symmetric lobes carries half of the mass; the
//! `offset_*` functions give the one-sided density of `|v − D|`.

use serde::{Deserialize, Serialize};

use crate::efield::PhysicalConstants;
use crate::error::{Error, Result};
use crate::scalar::{gamma, Real};

/// Number density of nearest-neighbor candidates per ppm, (ppm·nm³)⁻¹.
pub const N0: f64 = 0.5 * 1.76e-4;

/// Ratio between the lobe FWHM and the lobe position offset of `g₁`.
pub const WIDTH_PREFACTOR: f64 = 1.463;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams<T> {
    /// Nitrogen (donor) concentration, ppm.
    pub rho_n: T,
    /// NV⁻ concentration, ppm.
    pub rho_nv: T,
    /// (ppm·nm³)⁻¹.
    pub n0: T,
    pub d_gs: T,
    /// √(e/4πε₀ε_r), (V·nm)^½.
    pub alpha: T,
    /// √(orientation · d_⊥) · α, √MHz · nm.
    pub alpha_prime: T,
    pub beta: T,
    pub beta_prime: T,
}

impl<T: Real> AnalyticParams<T> {
    pub fn new(rho_n: T, rho_nv: T, constants: &PhysicalConstants<T>) -> Self {
        let n0 = T::lit(N0);
        let alpha2 = constants.coulomb_constant_over_eps();
        let perp = constants.orientation_factor * constants.d_perp_mhz();
        let third = T::one() / T::lit(3.0);
        let beta3 =
            T::lit(2.0) * gamma(T::lit(4.0 / 3.0)) * alpha2 * (T::lit(8.0) * T::PI() * n0 / T::lit(3.0)).powf(-third);
        Self {
            rho_n,
            rho_nv,
            n0,
            d_gs: T::lit(2870.0),
            alpha: alpha2.sqrt(),
            alpha_prime: (perp * alpha2).sqrt(),
            beta: beta3.cbrt(),
            beta_prime: (perp * beta3).cbrt(),
        }
    }

    pub fn with_default_constants(rho_n: T, rho_nv: T) -> Self {
        Self::new(rho_n, rho_nv, &PhysicalConstants::default())
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.n0, self.alpha, self.alpha_prime, self.beta, self.beta_prime, self.d_gs];
        if all.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidInput("analytic constants must be positive".into()));
        }
        if !(self.rho_n >= T::zero() && self.rho_nv >= T::zero()) {
            return Err(Error::InvalidInput("concentrations must be non-negative".into()));
        }
        Ok(())
    }

    /// (8/3)π ρ_N n₀, nm⁻³.
    fn lambda(&self) -> T {
        T::lit(8.0 / 3.0) * T::PI() * self.rho_n * self.n0
    }

    /// Scale of the field-magnitude law, (V/nm)^{3/2}.
    fn field_scale(&self) -> T {
        self.lambda() * self.alpha.powi(3)
    }

    /// Scale of the single-donor offset law, MHz^{3/2}.
    fn offset_scale_g1(&self) -> T {
        self.lambda() * self.alpha_prime.powi(3)
    }

    /// Scale `b` of the dipole offset law `b/x² · exp(−b/x)`, MHz.
    pub fn offset_scale_g2(&self) -> T {
        T::lit(8.0) * T::PI() * self.rho_nv * self.n0 * self.beta_prime.powi(3) / (T::lit(3.0) * self.rho_n.cbrt())
    }

    /// Same as [`Self::offset_scale_g2`] for the field magnitude, V/nm.
    pub fn field_scale_g2(&self) -> T {
        T::lit(8.0) * T::PI() * self.rho_nv * self.n0 * self.beta.powi(3) / (T::lit(3.0) * self.rho_n.cbrt())
    }
}

/// Nearest-donor distance density, nm⁻¹.
pub fn nn_distance_pdf<T: Real>(r: T, p: &AnalyticParams<T>) -> T {
    if r <= T::zero() {
        return T::zero();
    }
    let l = p.lambda();
    T::lit(3.0) * l * r * r * (-l * r.powi(3)).exp()
}

pub fn nn_distance_cdf<T: Real>(r: T, p: &AnalyticParams<T>) -> T {
    if r <= T::zero() {
        return T::zero();
    }
    -(-p.lambda() * r.powi(3)).exp_m1()
}

/// Mean and standard deviation of the nearest-donor distance, nm.
pub fn nn_distance_moments<T: Real>(p: &AnalyticParams<T>) -> Result<(T, T)> {
    if !(p.rho_n > T::zero()) {
        return Err(Error::Concentration);
    }
    let scale = p.lambda().cbrt().recip();
    let g43 = gamma(T::lit(4.0 / 3.0));
    let g53 = gamma(T::lit(5.0 / 3.0));
    Ok((scale * g43, scale * (g53 - g43 * g43).sqrt()))
}

/// Most probable nearest-donor distance, nm.
pub fn nn_distance_mode<T: Real>(p: &AnalyticParams<T>) -> T {
    (T::lit(4.0) * T::PI() * p.rho_n * p.n0).cbrt().recip()
}

/// Density of the field magnitude produced by the nearest donor alone.
pub fn field_pdf_nearest<T: Real>(e: T, p: &AnalyticParams<T>) -> T {
    if e <= T::zero() {
        return T::zero();
    }
    let a = p.field_scale();
    T::lit(1.5) * a * e.powf(T::lit(-2.5)) * (-a * e.powf(T::lit(-1.5))).exp()
}

pub fn field_cdf_nearest<T: Real>(e: T, p: &AnalyticParams<T>) -> T {
    if e <= T::zero() {
        return T::zero();
    }
    (-p.field_scale() * e.powf(T::lit(-1.5))).exp()
}

/// Density of the far-field (dipole) magnitude.
pub fn field_pdf_dipole<T: Real>(e: T, p: &AnalyticParams<T>) -> T {
    inverse_law_pdf(e, p.field_scale_g2())
}

pub fn field_cdf_dipole<T: Real>(e: T, p: &AnalyticParams<T>) -> T {
    inverse_law_cdf(e, p.field_scale_g2())
}

/// One-sided density of `x = |v − D|` under the nearest-donor law.
pub fn offset_pdf_g1<T: Real>(x: T, p: &AnalyticParams<T>) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let a = p.offset_scale_g1();
    T::lit(1.5) * a * x.powf(T::lit(-2.5)) * (-a * x.powf(T::lit(-1.5))).exp()
}

pub fn offset_cdf_g1<T: Real>(x: T, p: &AnalyticParams<T>) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    (-p.offset_scale_g1() * x.powf(T::lit(-1.5))).exp()
}

pub fn offset_pdf_g2<T: Real>(x: T, p: &AnalyticParams<T>) -> T {
    inverse_law_pdf(x, p.offset_scale_g2())
}

pub fn offset_cdf_g2<T: Real>(x: T, p: &AnalyticParams<T>) -> T {
    inverse_law_cdf(x, p.offset_scale_g2())
}

fn inverse_law_pdf<T: Real>(x: T, b: T) -> T {
    if x <= T::zero() || b <= T::zero() {
        return T::zero();
    }
    b / (x * x) * (-b / x).exp()
}

fn inverse_law_cdf<T: Real>(x: T, b: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    if b <= T::zero() {
        return T::one();
    }
    (-b / x).exp()
}

/// Nearest-donor ODMR lineshape, symmetric about `D`, MHz⁻¹.
pub fn lineshape_g1<T: Real>(v: T, p: &AnalyticParams<T>) -> T {
    T::lit(0.5) * offset_pdf_g1((v - p.d_gs).abs(), p)
}

/// Dipole-field ODMR lineshape, symmetric about `D`, MHz⁻¹.
pub fn lineshape_g2<T: Real>(v: T, p: &AnalyticParams<T>) -> T {
    T::lit(0.5) * offset_pdf_g2((v - p.d_gs).abs(), p)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConstants<T> {
    /// Splitting prefactor, MHz/ppm^{2/3}.
    pub s_coeff: T,
    /// Width prefactor, MHz/ppm^{2/3}.
    pub w_coeff: T,
}

pub fn scaling_constants<T: Real>(p: &AnalyticParams<T>) -> ScalingConstants<T> {
    let bracket = (T::lit(8.0 / 5.0) * T::PI() * p.n0 * p.alpha_prime.powi(3)).powf(T::lit(2.0 / 3.0));
    ScalingConstants { s_coeff: T::lit(2.0) * bracket, w_coeff: T::lit(WIDTH_PREFACTOR) * bracket }
}

/// Splitting of the nearest-donor line at the given donor concentration, MHz.
pub fn splitting_s1<T: Real>(p: &AnalyticParams<T>) -> T {
    scaling_constants(p).s_coeff * p.rho_n.powf(T::lit(2.0 / 3.0))
}

pub fn width_w1<T: Real>(p: &AnalyticParams<T>) -> T {
    scaling_constants(p).w_coeff * p.rho_n.powf(T::lit(2.0 / 3.0))
}

/// Lineshape `g₁ ∗ g₂` tabulated on a uniform grid centered on `D`.
///
/// Cell masses come from the exact CDFs, so each factor is normalized on the
/// grid up to the mass that falls outside the window, which is reported.
#[derive(Clone, Debug)]
pub struct TotalLineshape {
    pub d_gs: f64,
    pub step: f64,
    /// Cell-averaged density, cell `i` centered at `D + (i − (len−1)/2)·step`.
    pub density: Vec<f64>,
    /// Mass of `g₁` and `g₂` outside the window, before renormalization.
    pub truncated_mass: (f64, f64),
}

pub const TOTAL_GRID_POINTS: usize = 10_001;

impl TotalLineshape {
    pub fn new<T: Real>(p: &AnalyticParams<T>) -> Result<Self> {
        Self::with_points(p, TOTAL_GRID_POINTS)
    }

    pub fn with_points<T: Real>(p: &AnalyticParams<T>, points: usize) -> Result<Self> {
        p.validate()?;
        if !(p.rho_n > T::zero()) {
            return Err(Error::Concentration);
        }
        let points = points | 1;
        let s1 = splitting_s1(p).as_f64();
        let b = p.offset_scale_g2().as_f64();
        let half = 5.0 * s1.max(b);
        let step = 2.0 * half / points as f64;
        let g1 = cell_masses(points, step, |x| offset_cdf_g1(T::lit(x), p).as_f64());
        let g2 = cell_masses(points, step, |x| offset_cdf_g2(T::lit(x), p).as_f64());
        let truncated_mass = (1.0 - g1.iter().sum::<f64>(), 1.0 - g2.iter().sum::<f64>());
        let mut density = convolve_centered(&g1, &g2);
        let total: f64 = density.iter().sum();
        density.iter_mut().for_each(|m| *m /= total * step);
        Ok(Self { d_gs: p.d_gs.as_f64(), step, density, truncated_mass })
    }

    pub fn center_index(&self) -> usize {
        (self.density.len() - 1) / 2
    }

    pub fn frequency(&self, i: usize) -> f64 {
        self.d_gs + (i as f64 - self.center_index() as f64) * self.step
    }

    /// Linear interpolation between cell centers, zero outside the window.
    pub fn eval(&self, v: f64) -> f64 {
        let u = (v - self.d_gs) / self.step + self.center_index() as f64;
        if u < 0.0 || u > (self.density.len() - 1) as f64 {
            return 0.0;
        }
        let i = (u.floor() as usize).min(self.density.len() - 2);
        let t = u - i as f64;
        self.density[i] * (1.0 - t) + self.density[i + 1] * t
    }

    /// Distance between the two symmetric maxima, MHz.
    pub fn splitting(&self) -> f64 {
        let c = self.center_index();
        let (mut best, mut at) = (f64::NEG_INFINITY, c);
        for (i, &d) in self.density.iter().enumerate().skip(c) {
            if d > best {
                best = d;
                at = i;
            }
        }
        2.0 * (at - c) as f64 * self.step
    }
}

/// Convenience evaluation of `g₁ ∗ g₂` at arbitrary frequencies.
pub fn lineshape_total<T: Real>(frequencies: &[T], p: &AnalyticParams<T>) -> Result<Vec<T>> {
    let table = TotalLineshape::new(p)?;
    Ok(frequencies.iter().map(|&v| T::lit(table.eval(v.as_f64()))).collect())
}

/// Masses of a symmetric two-sided law on odd-length cells centered at zero,
/// given the one-sided CDF of `|y|`.
fn cell_masses(points: usize, step: f64, cdf: impl Fn(f64) -> f64) -> Vec<f64> {
    let c = (points - 1) / 2;
    let two_sided = |y: f64| {
        if y >= 0.0 {
            0.5 + 0.5 * cdf(y)
        } else {
            0.5 - 0.5 * cdf(-y)
        }
    };
    (0..points)
        .map(|i| {
            let y = (i as f64 - c as f64) * step;
            two_sided(y + 0.5 * step) - two_sided(y - 0.5 * step)
        })
        .collect()
}

/// Discrete convolution of two centered sequences, cropped to the same window.
fn convolve_centered(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    let c = (n - 1) / 2;
    let mut out = vec![0.0; n];
    for (j, &bj) in b.iter().enumerate() {
        if bj == 0.0 {
            continue;
        }
        // output index k = i + j − c
        let lo = c.saturating_sub(j);
        let hi = (n + c - j).min(n);
        for i in lo..hi {
            out[i + j - c] += a[i] * bj;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_split, log_breakpoints, QuadratureOptions};

    fn p(rho_n: f64, rho_nv: f64) -> AnalyticParams<f64> {
        AnalyticParams::with_default_constants(rho_n, rho_nv)
    }

    fn opts() -> QuadratureOptions {
        QuadratureOptions { abs_tol: 1e-13, rel_tol: 1e-12, max_intervals: 50_000 }
    }

    /// ∫₀^∞ f over log-spaced panels around a scale.
    fn integral(f: impl Fn(f64) -> f64, scale: f64) -> f64 {
        let mut pts = vec![0.0];
        pts.extend(log_breakpoints(scale * 1e-4, scale * 1e8, 60));
        let head = integrate_split(&f, &pts, opts()).unwrap();
        // x^{-5/2} and x^{-2} tails beyond the last point in closed form are tiny;
        // the inverse-square law keeps b/x of mass there.
        head
    }

    #[test]
    fn constants_invariants() {
        let q = p(100.0, 3.0);
        let c = PhysicalConstants::<f64>::default();
        let perp = c.orientation_factor * c.d_perp_mhz();
        assert!((q.alpha_prime.powi(2) - perp * q.alpha.powi(2)).abs() < 1e-12);
        assert!((q.beta_prime.powi(3) / q.beta.powi(3) - perp).abs() < 1e-10);
        assert!((q.alpha.powi(2) - 0.252_625).abs() < 1e-5);
    }

    #[test]
    fn nn_pdf_normalized_and_mean() {
        let q = p(100.0, 0.0);
        assert_eq!(nn_distance_pdf(0.0, &q), 0.0);
        let norm = integral(|r| nn_distance_pdf(r, &q), 2.0);
        assert!((norm - 1.0).abs() < 1e-9);
        let mean_q = integral(|r| r * nn_distance_pdf(r, &q), 2.0);
        let m2_q = integral(|r| r * r * nn_distance_pdf(r, &q), 2.0);
        let (mean, std) = nn_distance_moments(&q).unwrap();
        assert!((mean - 2.13).abs() < 0.005, "mean {mean}");
        assert!((mean_q / mean - 1.0).abs() < 1e-8);
        assert!(((m2_q - mean_q * mean_q).sqrt() / std - 1.0).abs() < 1e-8);
        // r = 0 derivative vanishes at the mode
        let m = nn_distance_mode(&q);
        let h = 1e-5;
        assert!((nn_distance_pdf(m + h, &q) - nn_distance_pdf(m - h, &q)).abs() < 1e-9);
    }

    #[test]
    fn nn_moment_scaling() {
        let (m100, s100) = nn_distance_moments(&p(100.0, 0.0)).unwrap();
        let (m800, _) = nn_distance_moments(&p(800.0, 0.0)).unwrap();
        assert!((m800 / m100 - 0.5).abs() < 1e-12);
        assert!((s100 / m100 - 0.3634).abs() < 5e-4);
        assert!(matches!(nn_distance_moments(&p(0.0, 0.0)), Err(Error::Concentration)));
    }

    #[test]
    fn change_of_variables_chain() {
        let q = p(150.0, 0.0);
        let a2 = q.alpha.powi(2);
        let ap2 = q.alpha_prime.powi(2);
        for i in 1..200 {
            let r = 0.05 * i as f64;
            let e = a2 / (r * r);
            let de_dr = 2.0 * a2 / r.powi(3);
            let lhs = field_pdf_nearest(e, &q) * de_dr;
            assert!((lhs / nn_distance_pdf(r, &q) - 1.0).abs() < 1e-6 || nn_distance_pdf(r, &q) < 1e-300);
            let x = ap2 / (r * r);
            let dx_dr = 2.0 * ap2 / r.powi(3);
            let lhs = offset_pdf_g1(x, &q) * dx_dr;
            assert!((lhs / nn_distance_pdf(r, &q) - 1.0).abs() < 1e-6 || nn_distance_pdf(r, &q) < 1e-300);
            assert!((field_cdf_nearest(e, &q) - (1.0 - nn_distance_cdf(r, &q))).abs() < 1e-12);
        }
    }

    #[test]
    fn densities_normalized() {
        let q = p(200.0, 20.0);
        let s = splitting_s1(&q);
        assert!((integral(|e| field_pdf_nearest(e, &q), 0.1) - 1.0).abs() < 1e-6);
        assert!((integral(|x| offset_pdf_g1(x, &q), s) - 1.0).abs() < 1e-6);
        // g₂ has an inverse-square tail: mass b/X beyond the last breakpoint
        let b = q.offset_scale_g2();
        let xmax = b * 1e8;
        let head = integral(|x| offset_pdf_g2(x, &q), b);
        assert!((head + (1.0 - (-b / xmax).exp()) - 1.0).abs() < 1e-6);
        let bf = q.field_scale_g2();
        let head = integral(|e| field_pdf_dipole(e, &q), bf);
        assert!((head + (1.0 - (-bf / (bf * 1e8)).exp()) - 1.0).abs() < 1e-6);
        // two-sided lineshape: each lobe holds half
        let lobe = integral(|x| lineshape_g1(q.d_gs + x, &q), s);
        assert!((lobe - 0.5).abs() < 1e-6);
    }

    #[test]
    fn g1_symmetry() {
        let q = p(100.0, 3.0);
        for x in [0.1, 1.0, 3.3, 20.0] {
            assert_eq!(lineshape_g1(q.d_gs + x, &q), lineshape_g1(q.d_gs - x, &q));
            assert_eq!(lineshape_g2(q.d_gs + x, &q), lineshape_g2(q.d_gs - x, &q));
        }
    }

    #[test]
    fn scaling_values() {
        let sc = scaling_constants(&p(1.0, 0.0));
        assert!((sc.s_coeff - 0.42).abs() < 0.02, "{}", sc.s_coeff);
        assert!((sc.w_coeff - 0.31).abs() < 0.02, "{}", sc.w_coeff);
        assert!((sc.w_coeff / sc.s_coeff - WIDTH_PREFACTOR / 2.0).abs() < 1e-14);
        let sc32 = scaling_constants(&AnalyticParams::<f32>::with_default_constants(1.0, 0.0));
        assert!((sc32.s_coeff as f64 - sc.s_coeff).abs() < 1e-5);
    }

    /// Lobe position and FWHM of `g₁` located numerically on a fine grid.
    fn g1_grid_features(q: &AnalyticParams<f64>) -> (f64, f64) {
        let s = splitting_s1(q);
        let n = 400_000;
        let dx = 10.0 * s / n as f64;
        let vals: Vec<f64> = (1..=n).map(|i| offset_pdf_g1(i as f64 * dx, q)).collect();
        let (imax, &peak) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let cross = |range: Box<dyn Iterator<Item = usize>>| {
            for i in range {
                if vals[i] < 0.5 * peak {
                    return (i + 1) as f64 * dx;
                }
            }
            f64::NAN
        };
        let hi = cross(Box::new(imax..n));
        let lo = cross(Box::new((0..imax).rev()));
        (2.0 * (imax + 1) as f64 * dx, hi - lo)
    }

    #[test]
    fn grid_features_match_closed_forms() {
        for rho in [10.0, 50.0, 100.0, 200.0, 500.0] {
            let q = p(rho, 0.0);
            let (s, w) = g1_grid_features(&q);
            assert!((s / splitting_s1(&q) - 1.0).abs() < 0.01, "S at {rho}: {s}");
            assert!((w / width_w1(&q) - 1.0).abs() < 0.01, "W at {rho}: {w}");
        }
    }

    #[test]
    fn total_reduces_to_g1() {
        let q = p(100.0, 1e-9);
        let t = TotalLineshape::new(&q).unwrap();
        let only = TotalLineshape::new(&p(100.0, 0.0)).unwrap();
        let g1 = cell_masses(t.density.len(), t.step, |x| offset_cdf_g1(x, &q));
        let norm: f64 = g1.iter().sum();
        let l1: f64 = t.density.iter().zip(&g1).map(|(d, m)| (d * t.step - m / norm).abs()).sum();
        assert!(l1 < 1e-3, "L1 {l1}");
        let diff: f64 = only.density.iter().zip(&t.density).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff * t.step < 1e-3);
        assert!((t.splitting() / splitting_s1(&q) - 1.0).abs() < 0.01);
    }

    #[test]
    fn convolution_commutes() {
        let a: Vec<f64> = (0..101).map(|i| ((i as f64 - 50.0) / 7.0).powi(2).neg_exp()).collect();
        let b: Vec<f64> = (0..101).map(|i| 1.0 / (1.0 + (i as f64 - 47.0).powi(2))).collect();
        let ab = convolve_centered(&a, &b);
        let ba = convolve_centered(&b, &a);
        for (x, y) in ab.iter().zip(&ba) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    trait NegExp {
        fn neg_exp(self) -> f64;
    }
    impl NegExp for f64 {
        fn neg_exp(self) -> f64 {
            (-self).exp()
        }
    }

    #[test]
    fn total_normalized_and_interpolates() {
        let q = p(14.0, 3.0);
        let t = TotalLineshape::new(&q).unwrap();
        let mass: f64 = t.density.iter().sum::<f64>() * t.step;
        assert!((mass - 1.0).abs() < 1e-12);
        let c = t.center_index();
        assert!((t.eval(t.frequency(c + 3)) - t.density[c + 3]).abs() < 1e-12);
        let v = lineshape_total(&[t.frequency(c + 10)], &q).unwrap();
        assert!((v[0] - t.density[c + 10]).abs() < 1e-12);
        // Dipole broadening at this concentration keeps the structure at the MHz scale.
        let s = t.splitting();
        assert!(s > 0.1 && s < 10.0, "splitting {s}");
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Globally adaptive 7/15-point Gauss–Kronrod quadrature.
//!
//! The integrand may be vector valued: all components share one set of
//! panels and a panel is refined while the largest component error is too
//! big. This is what the spectrum model needs, where one integral over the
//! coupling distribution is evaluated at every frequency of a grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// nodes and weights at their published digits
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug)]
pub struct QuadratureOptions {
    /// Absolute tolerance on the summed per-panel error estimates.
    pub abs_tol: f64,
    /// Relative tolerance against the largest component magnitude.
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-10, max_intervals: 20_000 }
    }
}

struct Panel {
    a: f64,
    b: f64,
    error: f64,
    kronrod: Vec<f64>,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F>(f: &mut F, a: f64, b: f64, dim: usize, scratch: &mut [f64]) -> Panel
where
    F: FnMut(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];
    let mut eval = |x: f64, wk: f64, wg: f64, kr: &mut [f64], ga: &mut [f64], s: &mut [f64]| {
        s.iter_mut().for_each(|v| *v = 0.0);
        f(x, s);
        for ((k, g), v) in kr.iter_mut().zip(ga.iter_mut()).zip(s.iter()) {
            *k += wk * v;
            *g += wg * v;
        }
    };
    for (j, (&x, &wk)) in XGK.iter().zip(&WGK).enumerate() {
        let wg = if j % 2 == 1 { WG[j / 2] } else { 0.0 };
        if x == 0.0 {
            eval(center, wk, wg, &mut kronrod, &mut gauss, scratch);
        } else {
            eval(center - half * x, wk, wg, &mut kronrod, &mut gauss, scratch);
            eval(center + half * x, wk, wg, &mut kronrod, &mut gauss, scratch);
        }
    }
    let mut error = 0.0f64;
    for (k, g) in kronrod.iter_mut().zip(&gauss) {
        *k *= half;
        error = error.max((*k - g * half).abs());
    }
    Panel { a, b, error, kronrod }
}

/// Integrates the vector function `f` over the union of the panels defined
/// by consecutive `breakpoints`. `f(x, out)` writes the integrand at `x` into
/// `out` (zeroed beforehand). Returns the integral and the error estimate.
pub fn integrate_vec<F>(mut f: F, breakpoints: &[f64], dim: usize, opts: QuadratureOptions) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &mut [f64]),
{
    if breakpoints.len() < 2 {
        return Err(Error::InvalidInput("quadrature needs at least two breakpoints".into()));
    }
    let mut scratch = vec![0.0; dim];
    let mut heap = BinaryHeap::new();
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&mut f, w[0], w[1], dim, &mut scratch));
        }
    }
    loop {
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for p in heap.iter() {
            err += p.error;
            for (t, k) in total.iter_mut().zip(&p.kronrod) {
                *t += k;
            }
        }
        let scale = total.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if err <= opts.abs_tol.max(opts.rel_tol * scale) {
            return Ok((total, err));
        }
        if heap.len() >= opts.max_intervals {
            return Err(Error::Quadrature { estimate: err, intervals: heap.len() });
        }
        let worst = heap.pop().expect("non-empty panel set");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(Error::Quadrature { estimate: err, intervals: heap.len() });
        }
        heap.push(gk15(&mut f, worst.a, mid, dim, &mut scratch));
        heap.push(gk15(&mut f, mid, worst.b, dim, &mut scratch));
    }
}

/// Scalar convenience wrapper over [`integrate_vec`].
pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadratureOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_vec(|x, out| out[0] = f(x), &[a, b], 1, opts).map(|(v, _)| v[0])
}

/// Scalar integral over `[a, b]` split at the given interior points.
pub fn integrate_split<F>(mut f: F, points: &[f64], opts: QuadratureOptions) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate_vec(|x, out| out[0] = f(x), points, 1, opts).map(|(v, _)| v[0])
}

/// `n + 1` logarithmically spaced points from `lo` to `hi` (both > 0).
pub fn log_breakpoints(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    (0..=n).map(|i| (l + (h - l) * i as f64 / n as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| x.powi(6) - 3.0 * x, 0.0, 2.0, Default::default()).unwrap();
        assert!((v - (128.0 / 7.0 - 6.0)).abs() < 1e-13);
    }

    #[test]
    fn sharp_peak() {
        // Lorentzian of width 1e-3 integrates to π over a wide window
        let d = 1e-3;
        let v = integrate(|x| d / (x * x + d * d), -1.0, 1.0, Default::default()).unwrap();
        let exact = 2.0 * (1.0f64 / d).atan();
        assert!((v - exact).abs() < 1e-9);
    }

    #[test]
    fn vector_components_share_panels() {
        let (v, _) = integrate_vec(
            |x, out| {
                out[0] = x.exp();
                out[1] = (3.0 * x).sin();
            },
            &[0.0, 0.5, 1.0],
            2,
            Default::default(),
        )
        .unwrap();
        assert!((v[0] - (1f64.exp() - 1.0)).abs() < 1e-12);
        assert!((v[1] - (1.0 - 3f64.cos()) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn nonconvergence_is_an_error() {
        let opts = QuadratureOptions { abs_tol: 1e-300, rel_tol: 0.0, max_intervals: 4 };
        assert!(matches!(integrate(|x| x.abs().sqrt(), -1.0, 1.0, opts), Err(Error::Quadrature { .. })));
    }
}

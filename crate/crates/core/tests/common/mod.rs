// SPDX-License-Identifier: Apache-2.0

//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use nvodmr::charge::{LevelSystem, CHANNELS};

const N: usize = 7;

fn ket_bra(a: usize, b: usize) -> DMatrix<Complex64> {
    let mut m = DMatrix::zeros(N, N);
    m[(a - 1, b - 1)] = Complex64::new(1.0, 0.0);
    m
}

/// Row-major vectorization: vec(A ρ B) = (A ⊗ Bᵀ) vec(ρ).
fn sandwich(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(&b.transpose())
}

/// Lindblad superoperator assembled from Kronecker products.
pub fn kron_liouvillian(sys: &LevelSystem) -> DMatrix<Complex64> {
    let id = DMatrix::<Complex64>::identity(N, N);
    let mut h = DMatrix::zeros(N, N);
    for (g, e) in [(1, 4), (2, 5), (6, 7)] {
        h += (ket_bra(e, g) + ket_bra(g, e)) * Complex64::new(sys.drive_mhz, 0.0);
    }
    let mi = Complex64::new(0.0, -1.0);
    let mut l = (sandwich(&h, &id) - sandwich(&id, &h)) * mi;
    let mut channels: Vec<(usize, usize)> = CHANNELS.to_vec();
    channels.push((5, 1));
    for (i, j) in channels {
        let g = sys.rate(i, j);
        if g == 0.0 {
            continue;
        }
        let op = ket_bra(j, i);
        let opd = op.adjoint();
        let n = &opd * &op;
        let half = Complex64::new(0.5, 0.0);
        l += (sandwich(&op, &opd) - (sandwich(&n, &id) + sandwich(&id, &n)) * half) * Complex64::new(g, 0.0);
    }
    l
}

/// Long-time state from repeated squaring of a fourth-order Taylor
/// propagator. Stops once the state no longer changes and at least
/// `10⁴ / min_rate` has elapsed.
pub fn ode_steady_state(sys: &LevelSystem) -> DMatrix<Complex64> {
    let l = kron_liouvillian(sys);
    let norm = (0..l.nrows()).map(|r| l.row(r).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max);
    let dt = 0.1 / norm;
    let x = &l * Complex64::new(dt, 0.0);
    // P = I + E; squaring keeps E separate, (I + E)² = I + 2E + E², so the
    // tiny slow rates are not lost against the identity
    let x2 = &x * &x;
    let x3 = &x2 * &x;
    let x4 = &x3 * &x;
    let mut e = &x
        + &x2 * Complex64::new(0.5, 0.0)
        + &x3 * Complex64::new(1.0 / 6.0, 0.0)
        + &x4 * Complex64::new(1.0 / 24.0, 0.0);
    let min_rate = CHANNELS
        .iter()
        .map(|&(i, j)| sys.rate(i, j))
        .chain(std::iter::once(sys.drive_mhz))
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let t_min = 1e4 / min_rate;
    let rho0 = DVector::from_fn(N * N, |k, _| {
        if k / N == k % N {
            Complex64::new(1.0 / N as f64, 0.0)
        } else {
            Complex64::default()
        }
    });
    let apply = |e: &DMatrix<Complex64>| {
        let v = &rho0 + e * &rho0;
        let tr: Complex64 = (0..N).map(|a| v[a * N + a]).sum();
        v / tr
    };
    let mut t = dt;
    let mut prev = apply(&e);
    for _ in 0..200 {
        e = &e * Complex64::new(2.0, 0.0) + &e * &e;
        t *= 2.0;
        let cur = apply(&e);
        let change = (&cur - &prev).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prev = cur;
        if t >= t_min && change < 1e-15 {
            break;
        }
    }
    DMatrix::from_fn(N, N, |a, b| prev[a * N + b])
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

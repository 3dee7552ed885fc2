// SPDX-License-Identifier: Apache-2.0

//! Damped least-squares fitting of the ensemble model.
//!
//! Offsets and amplitudes enter linearly and are eliminated by a linear
//! solve at every evaluation (variable projection). The remaining shape
//! parameters are optimized by Levenberg–Marquardt in log coordinates, which
//! keeps `n − 1`, the weight mode and the widths positive.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::model::{
    branch_integrals, model_eval_many, single_branch_profile, BasicParams, Branch, HyperfineParams, OdmrFitModel,
    PowerLawWeight, Sides, Variant,
};
use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumData {
    pub frequency: Vec<f64>,
    pub signal: Vec<f64>,
}

impl SpectrumData {
    pub fn new(frequency: Vec<f64>, signal: Vec<f64>) -> Result<Self> {
        if frequency.len() != signal.len() {
            return Err(Error::InvalidSpectrum("frequency and signal lengths differ".into()));
        }
        if frequency.iter().chain(&signal).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpectrum("non-finite spectrum value".into()));
        }
        let mut idx: Vec<usize> = (0..frequency.len()).collect();
        idx.sort_by(|&a, &b| frequency[a].total_cmp(&frequency[b]));
        Ok(Self {
            frequency: idx.iter().map(|&i| frequency[i]).collect(),
            signal: idx.iter().map(|&i| signal[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.frequency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequency.is_empty()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitOptions {
    pub variant: Variant,
    /// ¹⁴N hyperfine constant used by the hyperfine variant, MHz.
    pub a_zz: f64,
    pub max_iterations: usize,
    /// Stop when an accepted step lowers the residual by less than this fraction.
    pub rel_tolerance: f64,
    pub init: Option<OdmrFitModel>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { variant: Variant::Basic, a_zz: -2.16, max_iterations: 200, rel_tolerance: 1e-10, init: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdmrFitResult {
    pub model: OdmrFitModel,
    pub parameter_names: Vec<String>,
    pub parameter_values: Vec<f64>,
    pub covariance_diagonal: Vec<f64>,
    /// Twice the offset of the fitted dip from `D_gs`, MHz.
    pub splitting: f64,
    /// FWHM of one fitted dip, MHz.
    pub width: f64,
    /// Depth of the fitted dip below the offset.
    pub contrast: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squares after every accepted step, starting with the initial guess.
    pub rss_history: Vec<f64>,
}

/// Shape parameters in optimizer coordinates.
struct Problem<'a> {
    data: &'a SpectrumData,
    variant: Variant,
    a_zz: f64,
    /// Lorentzians narrower than this cannot be resolved by the data.
    min_delta: f64,
}

struct Evaluation {
    linear: DVector<f64>,
    residual: DVector<f64>,
    rss: f64,
}

impl Problem<'_> {
    fn branches(&self, theta: &[f64]) -> Result<(Vec<Branch>, f64)> {
        let b = |ln_n1: f64, ln_mode: f64, ln_delta: f64, a_zz: f64| -> Result<Branch> {
            let weight = PowerLawWeight::from_mode(1.0 + ln_n1.exp(), ln_mode.exp())?;
            Ok(Branch { weight, delta: ln_delta.exp(), a_zz, sides: Sides::Both })
        };
        match self.variant {
            Variant::Basic => Ok((vec![b(theta[0], theta[1], theta[2], 0.0)?], theta[3])),
            Variant::Hyperfine => {
                Ok((vec![b(theta[0], theta[2], theta[4], 0.0)?, b(theta[1], theta[3], theta[5], self.a_zz)?], theta[6]))
            }
        }
    }

    fn evaluate(&self, theta: &[f64]) -> Result<Evaluation> {
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::FitDiverged { iterations: 0 });
        }
        let (branches, d) = self.branches(theta)?;
        if branches.iter().any(|b| b.delta < self.min_delta) {
            return Err(Error::InvalidInput("Lorentzian width below the data resolution".into()));
        }
        let cols = branch_integrals(&branches, d, &self.data.frequency)?;
        let m = self.data.len();
        let mut phi = DMatrix::from_element(m, cols.len() + 1, 1.0);
        for (j, c) in cols.iter().enumerate() {
            phi.column_mut(j + 1).copy_from_slice(c);
        }
        let y = DVector::from_column_slice(&self.data.signal);
        let svd = phi.clone().svd(true, true);
        let linear = svd.solve(&y, 1e-12 * svd.singular_values.max()).map_err(|e| Error::Degenerate(e.into()))?;
        let residual = &y - &phi * &linear;
        let rss = residual.norm_squared();
        if !rss.is_finite() {
            return Err(Error::FitDiverged { iterations: 0 });
        }
        Ok(Evaluation { linear, residual, rss })
    }

    fn to_model(&self, theta: &[f64], linear: &DVector<f64>) -> Result<OdmrFitModel> {
        let (br, d) = self.branches(theta)?;
        let raw = |amp: f64, w: &PowerLawWeight| amp / w.raw_norm();
        Ok(match self.variant {
            Variant::Basic => OdmrFitModel::Basic(BasicParams {
                c0: linear[0],
                c: raw(linear[1], &br[0].weight),
                n: br[0].weight.n,
                k: br[0].weight.k(),
                delta: br[0].delta,
                d_gs: d,
            }),
            Variant::Hyperfine => OdmrFitModel::Hyperfine(HyperfineParams {
                c1: raw(linear[1], &br[0].weight),
                c2: raw(linear[2], &br[1].weight),
                n: br[0].weight.n,
                m: br[1].weight.n,
                k1: br[0].weight.k(),
                k2: br[1].weight.k(),
                delta1: br[0].delta,
                delta2: br[1].delta,
                a_zz: self.a_zz,
                d_gs: d,
                c_b: linear[0],
            }),
        })
    }

    fn theta_from_model(&self, model: &OdmrFitModel) -> Result<Vec<f64>> {
        model.validate()?;
        let mode = |n: f64, k: f64| PowerLawWeight::new(n, k).map(|w| w.mode().ln());
        match (self.variant, model) {
            (Variant::Basic, OdmrFitModel::Basic(p)) => {
                Ok(vec![(p.n - 1.0).ln(), mode(p.n, p.k)?, p.delta.ln(), p.d_gs])
            }
            (Variant::Hyperfine, OdmrFitModel::Hyperfine(p)) => Ok(vec![
                (p.n - 1.0).ln(),
                (p.m - 1.0).ln(),
                mode(p.n, p.k1)?,
                mode(p.m, p.k2)?,
                p.delta1.ln(),
                p.delta2.ln(),
                p.d_gs,
            ]),
            _ => Err(Error::InvalidInput("initial model variant does not match the requested variant".into())),
        }
    }

    fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let m = self.data.len();
        let mut jac = DMatrix::zeros(m, theta.len());
        for i in 0..theta.len() {
            let h = 1e-6 * theta[i].abs().max(1.0);
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[i] += h;
            tm[i] -= h;
            // one-sided differences where a side leaves the admissible region
            let col = match (self.evaluate(&tp), self.evaluate(&tm)) {
                (Ok(p), Ok(m)) => (p.residual - m.residual) / (2.0 * h),
                (Ok(p), Err(_)) => (p.residual - &self.evaluate(theta)?.residual) / h,
                (Err(_), Ok(m)) => (&self.evaluate(theta)?.residual - m.residual) / h,
                (Err(e), Err(_)) => return Err(e),
            };
            jac.column_mut(i).copy_from(&col);
        }
        Ok(jac)
    }

    fn levenberg_marquardt(&self, theta0: Vec<f64>, opts: &FitOptions) -> Result<Fitted> {
        let mut theta = theta0;
        let mut cur = self.evaluate(&theta)?;
        let mut history = vec![cur.rss];
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < opts.max_iterations {
            iterations += 1;
            let jac = self.jacobian(&theta)?;
            let jtj = jac.transpose() * &jac;
            let g = jac.transpose() * &cur.residual;
            let mut accepted = None;
            while lambda < 1e12 {
                let mut a = jtj.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
                }
                let step = match a.cholesky() {
                    Some(ch) => ch.solve(&(-&g)),
                    None => {
                        lambda *= 4.0;
                        continue;
                    }
                };
                let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
                match self.evaluate(&trial) {
                    Ok(e) if e.rss < cur.rss => {
                        lambda = (lambda / 3.0).max(1e-12);
                        accepted = Some((trial, e, step.amax()));
                        break;
                    }
                    _ => lambda *= 4.0,
                }
            }
            let Some((trial, e, step_size)) = accepted else {
                // no downhill direction left at this damping: a minimum
                converged = true;
                break;
            };
            let gain = (cur.rss - e.rss) / cur.rss.max(f64::MIN_POSITIVE);
            theta = trial;
            cur = e;
            history.push(cur.rss);
            // a flat residual alone is not enough: ill-conditioned directions
            // can still be drifting, so also require a small step
            if step_size < 1e-10 || (gain < opts.rel_tolerance && step_size < 1e-8) {
                converged = true;
                break;
            }
        }
        if !converged && history.last() >= history.first() {
            return Err(Error::FitDiverged { iterations });
        }
        Ok(Fitted { theta, eval: cur, history, iterations, converged })
    }
}

struct Fitted {
    theta: Vec<f64>,
    eval: Evaluation,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Initial shape parameters from the data: center by mirror symmetry, dip
/// offset from the deepest point, width from the steepest-slope points.
fn initial_guesses(data: &SpectrumData, variant: Variant) -> Vec<Vec<f64>> {
    let v = &data.frequency;
    let m = v.len();
    // smoothed, oriented so features are dips
    let y: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b) = (i.saturating_sub(2), (i + 3).min(m));
            data.signal[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[m / 2];
    let dips = median - sorted[0] >= sorted[m - 1] - median;
    let y: Vec<f64> = y.iter().map(|&s| if dips { s } else { -s }).collect();
    let interp = |f: f64| -> f64 {
        let j = v.partition_point(|&x| x < f).clamp(1, m - 1);
        let t = (f - v[j - 1]) / (v[j] - v[j - 1]);
        y[j - 1] * (1.0 - t) + y[j] * t
    };
    let (vmin, vmax) = (v[0], v[m - 1]);
    let span = vmax - vmin;
    let dv = span / (m - 1) as f64;
    let mut best = (f64::INFINITY, 0.5 * (vmin + vmax));
    let candidates = 4 * m;
    for i in 0..=candidates {
        let c = vmin + 0.25 * span + 0.5 * span * i as f64 / candidates as f64;
        let reach = (c - vmin).min(vmax - c);
        let steps = 200;
        let score: f64 = (1..=steps)
            .map(|s| {
                let x = reach * s as f64 / steps as f64;
                (interp(c + x) - interp(c - x)).powi(2)
            })
            .sum::<f64>()
            / steps as f64;
        if score < best.0 {
            best = (score, c);
        }
    }
    let d0 = best.1;
    let imin = (0..m).min_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap_or(0);
    let x0 = (v[imin] - d0).abs();
    let slope: Vec<f64> = (0..m - 1).map(|i| (y[i + 1] - y[i]) / (v[i + 1] - v[i])).collect();
    let window = (0.25 * span).max(4.0 * dv);
    let mut left = (f64::INFINITY, v[imin]);
    let mut right = (f64::NEG_INFINITY, v[imin]);
    for (i, &s) in slope.iter().enumerate() {
        let mid = 0.5 * (v[i] + v[i + 1]);
        if mid < v[imin] && mid > v[imin] - window && s < left.0 {
            left = (s, mid);
        }
        if mid > v[imin] && mid < v[imin] + window && s > right.0 {
            right = (s, mid);
        }
    }
    let delta0 = (0.5 * (right.1 - left.1)).max(2.0 * dv);
    let mode0 = x0.max(0.25 * delta0).max(dv);
    let n1 = 2f64.ln();
    let mut starts = Vec::new();
    for df in [1.0, 0.5, 2.0] {
        for mf in [1.0, 0.6] {
            let (ld, lm) = ((delta0 * df).ln(), (mode0 * mf).ln());
            starts.push(match variant {
                Variant::Basic => vec![n1, lm, ld, d0],
                Variant::Hyperfine => vec![n1, n1, lm, lm, ld, ld - 2f64.ln(), d0],
            });
        }
    }
    starts
}

/// Fits the model to a spectrum and derives splitting, width and contrast.
pub fn fit_spectrum(data: &SpectrumData, opts: &FitOptions) -> Result<OdmrFitResult> {
    if data.len() < MIN_POINTS {
        return Err(Error::InvalidSpectrum(format!("need at least {MIN_POINTS} points, got {}", data.len())));
    }
    let (lo, hi) = data.signal.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &y| (a.min(y), b.max(y)));
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    if hi - lo <= 1e-12 * scale {
        return Err(Error::Degenerate("flat spectrum".into()));
    }
    let span = data.frequency[data.len() - 1] - data.frequency[0];
    let min_delta = 0.1 * span / (data.len() - 1) as f64;
    let problem = Problem { data, variant: opts.variant, a_zz: opts.a_zz, min_delta };
    let starts = match &opts.init {
        Some(m) => vec![problem.theta_from_model(m)?],
        None => initial_guesses(data, opts.variant),
    };
    // screen the starts, refine the two most promising
    let mut scored: Vec<(f64, Vec<f64>)> =
        starts.into_iter().filter_map(|t| problem.evaluate(&t).ok().map(|e| (e.rss, t))).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best: Option<Fitted> = None;
    let mut last_err = Error::FitDiverged { iterations: 0 };
    for (_, theta) in scored.into_iter().take(2) {
        match problem.levenberg_marquardt(theta, opts) {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.eval.rss < b.eval.rss) {
                    best = Some(f);
                }
            }
            Err(e) => last_err = e,
        }
    }
    let fitted = best.ok_or(last_err)?;
    let model = problem.to_model(&fitted.theta, &fitted.eval.linear)?;
    let (names, values) = reported_parameters(&model);
    let covariance_diagonal = covariance_diagonal(&model, data, fitted.eval.rss)?;
    let reach = data.frequency.iter().map(|f| (f - model.d_gs()).abs()).fold(0.0, f64::max);
    let features = derived_features(&model, reach)?;
    Ok(OdmrFitResult {
        model,
        parameter_names: names.iter().map(|s| s.to_string()).collect(),
        parameter_values: values,
        covariance_diagonal,
        splitting: features.splitting,
        width: features.width,
        contrast: features.contrast,
        residual_norm: fitted.eval.rss.sqrt(),
        iterations: fitted.iterations,
        converged: fitted.converged,
        rss_history: fitted.history,
    })
}

fn reported_parameters(model: &OdmrFitModel) -> (Vec<&'static str>, Vec<f64>) {
    match model {
        OdmrFitModel::Basic(p) => {
            (vec!["C0", "C", "n", "k", "delta", "D_gs"], vec![p.c0, p.c, p.n, p.k, p.delta, p.d_gs])
        }
        OdmrFitModel::Hyperfine(p) => (
            vec!["C1", "C2", "n", "m", "k1", "k2", "delta1", "delta2", "D_gs", "C_B"],
            vec![p.c1, p.c2, p.n, p.m, p.k1, p.k2, p.delta1, p.delta2, p.d_gs, p.c_b],
        ),
    }
}

fn with_parameters(model: &OdmrFitModel, values: &[f64]) -> OdmrFitModel {
    match model {
        OdmrFitModel::Basic(_) => OdmrFitModel::Basic(BasicParams {
            c0: values[0],
            c: values[1],
            n: values[2],
            k: values[3],
            delta: values[4],
            d_gs: values[5],
        }),
        OdmrFitModel::Hyperfine(p) => OdmrFitModel::Hyperfine(HyperfineParams {
            c1: values[0],
            c2: values[1],
            n: values[2],
            m: values[3],
            k1: values[4],
            k2: values[5],
            delta1: values[6],
            delta2: values[7],
            a_zz: p.a_zz,
            d_gs: values[8],
            c_b: values[9],
        }),
    }
}

/// `σ² (JᵀJ)⁺` in the reported parameters, `σ² = RSS/(m − p)`.
fn covariance_diagonal(model: &OdmrFitModel, data: &SpectrumData, rss: f64) -> Result<Vec<f64>> {
    let (_, values) = reported_parameters(model);
    let p = values.len();
    let m = data.len();
    let mut jac = DMatrix::zeros(m, p);
    for i in 0..p {
        let h = 1e-6 * values[i].abs().max(1e-6);
        let mut up = values.clone();
        let mut dn = values.clone();
        up[i] += h;
        dn[i] -= h;
        let eval = |vals: &[f64]| model_eval_many(&with_parameters(model, vals), &data.frequency);
        let (a, b, span) = match (eval(&up), eval(&dn)) {
            (Ok(a), Ok(b)) => (a, b, 2.0 * h),
            (Ok(a), Err(_)) => (a, eval(&values)?, h),
            (Err(_), Ok(b)) => (eval(&values)?, b, h),
            (Err(e), Err(_)) => return Err(e),
        };
        for j in 0..m {
            jac[(j, i)] = (a[j] - b[j]) / span;
        }
    }
    let sigma2 = rss / (m.saturating_sub(p).max(1)) as f64;
    let jtj = jac.transpose() * jac;
    let eps = 1e-14 * jtj.amax();
    let inv = jtj.pseudo_inverse(eps).map_err(|e| Error::Degenerate(e.into()))?;
    Ok((0..p).map(|i| sigma2 * inv[(i, i)]).collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedFeatures {
    pub splitting: f64,
    pub width: f64,
    pub contrast: f64,
}

/// Splitting, single-dip FWHM and dip depth of a model, searching offsets
/// up to `reach` MHz from `D_gs`.
pub fn derived_features(model: &OdmrFitModel, reach: f64) -> Result<DerivedFeatures> {
    let d = model.d_gs();
    let off = model.offset();
    let amp: f64 = model.branches()?.iter().map(|b| b.0).sum();
    let depth = |g: f64| if amp < 0.0 { off - g } else { g - off };
    let n = 2000;
    let xs: Vec<f64> = (0..=n).map(|i| reach * i as f64 / n as f64).collect();
    let vs: Vec<f64> = xs.iter().map(|x| d + x).collect();
    let g = model_eval_many(model, &vs)?;
    let i = (0..=n).max_by(|&a, &b| depth(g[a]).total_cmp(&depth(g[b]))).unwrap_or(0);
    let h = reach / n as f64;
    let f = |x: f64| model_eval_many(model, &[d + x.max(0.0)]).map(|v| -depth(v[0]));
    let (x_star, best) = golden_min(f, (xs[i] - h).max(0.0), xs[i] + h)?;
    let contrast = -best;

    // width of the upper branch alone
    let br = model.branches()?[0].1;
    let hi_edge = br.weight.quantile(0.999) + 10.0 * br.delta;
    let lo_edge = -10.0 * br.delta;
    let vs: Vec<f64> = (0..=n).map(|i| d + lo_edge + (hi_edge - lo_edge) * i as f64 / n as f64).collect();
    let prof = single_branch_profile(model, &vs)?;
    let ip = (0..=n).max_by(|&a, &b| prof[a].total_cmp(&prof[b])).unwrap_or(0);
    let step = (hi_edge - lo_edge) / n as f64;
    let p1 = |v: f64| single_branch_profile(model, &[v]).map(|p| p[0]);
    let (v_peak, neg_peak) = golden_min(|v| p1(v).map(|x| -x), vs[ip] - step, vs[ip] + step)?;
    let half = -0.5 * neg_peak;
    let cross = |from: usize, dir: isize| -> Result<f64> {
        let mut j = from as isize;
        while j + dir >= 0 && j + dir <= n as isize {
            let k = (j + dir) as usize;
            if prof[k] < half {
                let (mut a, mut b) = (vs[j as usize].min(vs[k]), vs[j as usize].max(vs[k]));
                if dir < 0 {
                    a = a.min(v_peak);
                } else {
                    b = b.max(v_peak).max(b);
                }
                for _ in 0..60 {
                    let mid = 0.5 * (a + b);
                    let above = p1(mid)? >= half;
                    if above == (dir > 0) {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                return Ok(0.5 * (a + b));
            }
            j += dir;
        }
        Err(Error::Feature("half maximum not bracketed".into()))
    };
    let width = cross(ip, 1)? - cross(ip, -1)?;
    Ok(DerivedFeatures { splitting: 2.0 * x_star, width, contrast })
}

/// Golden-section minimization on `[a, b]`, returns `(argmin, min)`.
pub(crate) fn golden_min(mut f: impl FnMut(f64) -> Result<f64>, mut a: f64, mut b: f64) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..80 {
        if (b - a).abs() < 1e-10 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

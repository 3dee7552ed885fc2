// SPDX-License-Identifier: Apache-2.0

//! Ensemble ODMR model: Lorentzian pairs averaged over a power-law weight of
//! the transverse coupling.
//!
//! Parameters are stored in the raw gauge, where the weight is
//! `Π^(−n) exp(−k Π^(1−n))` and integrates to `1/(k(n−1))`. The evaluator
//! always works with the unit-normalized weight and an amplitude
//! `A = C / (k(n−1))`, which removes the scale ambiguity between `C` and the
//! weight normalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_vec, log_breakpoints, QuadratureOptions};

/// Weight mass below the lower integration limit is `exp(−LOWER_EXPONENT)`.
const LOWER_EXPONENT: f64 = 27.6;
/// Weight mass above the upper integration limit.
const UPPER_TAIL: f64 = 1e-9;

/// Largest exponent accepted for the weight; beyond it the weight is a
/// delta function for any practical purpose.
pub const MAX_EXPONENT: f64 = 200.0;

/// Unit-normalized coupling weight `k(n−1) Π^(−n) exp(−k Π^(1−n))`.
///
/// `k` is kept as a logarithm since `mode^(n−1)` overflows quickly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerLawWeight {
    pub n: f64,
    pub ln_k: f64,
}

impl PowerLawWeight {
    pub fn new(n: f64, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidInput(format!("weight needs k > 0 (k = {k})")));
        }
        Self::from_ln_k(n, k.ln())
    }

    pub fn from_ln_k(n: f64, ln_k: f64) -> Result<Self> {
        if !(n > 1.0 && n <= MAX_EXPONENT && ln_k.is_finite()) {
            return Err(Error::InvalidInput(format!("weight needs 1 < n <= {MAX_EXPONENT} (n = {n})")));
        }
        Ok(Self { n, ln_k })
    }

    /// Weight with exponent `n` whose most probable coupling is `mode`.
    pub fn from_mode(n: f64, mode: f64) -> Result<Self> {
        if !(mode > 0.0) {
            return Err(Error::InvalidInput("weight mode must be positive".into()));
        }
        Self::from_ln_k(n, n.ln() + (n - 1.0) * mode.ln() - (n - 1.0).ln())
    }

    pub fn k(&self) -> f64 {
        self.ln_k.exp()
    }

    /// Integral of the raw weight.
    pub fn raw_norm(&self) -> f64 {
        (-self.ln_k).exp() / (self.n - 1.0)
    }

    /// `k Π^(1−n)`.
    fn scaled(&self, pi: f64) -> f64 {
        (self.ln_k + (1.0 - self.n) * pi.ln()).exp()
    }

    pub fn pdf(&self, pi: f64) -> f64 {
        if pi <= 0.0 {
            return 0.0;
        }
        let s = self.scaled(pi);
        if s > 745.0 {
            return 0.0;
        }
        s * (self.n - 1.0) / pi * (-s).exp()
    }

    pub fn cdf(&self, pi: f64) -> f64 {
        if pi <= 0.0 {
            return 0.0;
        }
        (-self.scaled(pi)).exp()
    }

    pub fn quantile(&self, u: f64) -> f64 {
        ((self.ln_k - (-u.ln()).ln()) / (self.n - 1.0)).exp()
    }

    pub fn mode(&self) -> f64 {
        ((self.ln_k + ((self.n - 1.0) / self.n).ln()) / (self.n - 1.0)).exp()
    }

    /// Integration range outside which the neglected mass is negligible.
    pub fn support(&self) -> (f64, f64) {
        let e = 1.0 / (self.n - 1.0);
        (((self.ln_k - LOWER_EXPONENT.ln()) * e).exp(), ((self.ln_k - UPPER_TAIL.ln()) * e).exp())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicParams {
    pub c0: f64,
    pub c: f64,
    pub n: f64,
    /// MHz^(n−1).
    pub k: f64,
    /// Lorentzian half width, MHz.
    pub delta: f64,
    pub d_gs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperfineParams {
    pub c1: f64,
    pub c2: f64,
    pub n: f64,
    pub m: f64,
    pub k1: f64,
    pub k2: f64,
    pub delta1: f64,
    pub delta2: f64,
    /// Held fixed during fits, MHz.
    pub a_zz: f64,
    pub d_gs: f64,
    pub c_b: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum OdmrFitModel {
    Basic(BasicParams),
    Hyperfine(HyperfineParams),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Basic,
    Hyperfine,
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Self::Basic),
            "hyperfine" => Ok(Self::Hyperfine),
            _ => Err(Error::InvalidInput(format!("unknown fit variant {s:?}"))),
        }
    }
}

impl OdmrFitModel {
    pub fn variant(&self) -> Variant {
        match self {
            Self::Basic(_) => Variant::Basic,
            Self::Hyperfine(_) => Variant::Hyperfine,
        }
    }

    pub fn d_gs(&self) -> f64 {
        match self {
            Self::Basic(p) => p.d_gs,
            Self::Hyperfine(p) => p.d_gs,
        }
    }

    pub fn offset(&self) -> f64 {
        match self {
            Self::Basic(p) => p.c0,
            Self::Hyperfine(p) => p.c_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Self::Basic(p) => {
                p.delta > 0.0 && p.n > 1.0 && p.k > 0.0 && [p.c0, p.c, p.d_gs].iter().all(|v| v.is_finite())
            }
            Self::Hyperfine(p) => {
                p.delta1 > 0.0
                    && p.delta2 > 0.0
                    && p.n > 1.0
                    && p.m > 1.0
                    && p.k1 > 0.0
                    && p.k2 > 0.0
                    && [p.c1, p.c2, p.c_b, p.d_gs, p.a_zz].iter().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("fit model needs delta > 0, n, m > 1, k > 0".into()))
        }
    }

    /// Branches with their unit-gauge amplitudes.
    pub(crate) fn branches(&self) -> Result<Vec<(f64, Branch)>> {
        self.validate()?;
        Ok(match *self {
            Self::Basic(p) => {
                let w = PowerLawWeight::new(p.n, p.k)?;
                vec![(p.c * w.raw_norm(), Branch { weight: w, delta: p.delta, a_zz: 0.0, sides: Sides::Both })]
            }
            Self::Hyperfine(p) => {
                let w1 = PowerLawWeight::new(p.n, p.k1)?;
                let w2 = PowerLawWeight::new(p.m, p.k2)?;
                vec![
                    (p.c1 * w1.raw_norm(), Branch { weight: w1, delta: p.delta1, a_zz: 0.0, sides: Sides::Both }),
                    (p.c2 * w2.raw_norm(), Branch { weight: w2, delta: p.delta2, a_zz: p.a_zz, sides: Sides::Both }),
                ]
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Sides {
    Both,
    Upper,
}

/// One weighted Lorentzian family `∫ w(Π) L(v − D ∓ √(Π² + A²)) dΠ`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Branch {
    pub weight: PowerLawWeight,
    pub delta: f64,
    pub a_zz: f64,
    pub sides: Sides,
}

pub(crate) fn quad_options() -> QuadratureOptions {
    QuadratureOptions { abs_tol: 1e-12, rel_tol: 1e-9, max_intervals: 40_000 }
}

/// Evaluates every branch at every frequency; result is branch-major.
pub(crate) fn branch_integrals(branches: &[Branch], d_gs: f64, v: &[f64]) -> Result<Vec<Vec<f64>>> {
    let m = v.len();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for b in branches {
        let (l, h) = b.weight.support();
        lo = lo.min(l);
        hi = hi.max(h);
    }
    let (tlo, thi) = (lo.ln(), hi.ln());
    if !(tlo.is_finite() && thi.is_finite() && thi - tlo < 2000.0) {
        return Err(Error::InvalidInput(format!("weight support [{lo:e}, {hi:e}] cannot be integrated")));
    }
    let panels = ((thi - tlo) * 2.0).ceil().max(4.0) as usize;
    let breaks: Vec<f64> = log_breakpoints(lo, hi, panels).iter().map(|p| p.ln()).collect();
    let inv_delta: Vec<f64> = branches.iter().map(|b| 1.0 / b.delta).collect();
    let supports: Vec<(f64, f64)> = branches.iter().map(|b| b.weight.support()).collect();
    let integrand = |t: f64, out: &mut [f64]| {
        let pi = t.exp();
        for (bi, b) in branches.iter().enumerate() {
            if pi < supports[bi].0 || pi > supports[bi].1 {
                continue;
            }
            let w = b.weight.pdf(pi) * pi;
            if w == 0.0 {
                continue;
            }
            let e = if b.a_zz == 0.0 { pi } else { pi.hypot(b.a_zz) };
            let id = inv_delta[bi];
            let row = &mut out[bi * m..(bi + 1) * m];
            for (o, &f) in row.iter_mut().zip(v) {
                let x = f - d_gs;
                let up = (x - e) * id;
                let mut s = 1.0 / (1.0 + up * up);
                if b.sides == Sides::Both {
                    let dn = (x + e) * id;
                    s += 1.0 / (1.0 + dn * dn);
                }
                *o = w * s;
            }
        }
    };
    let (flat, _) = integrate_vec(integrand, &breaks, m * branches.len(), quad_options())?;
    Ok(flat.chunks(m.max(1)).map(|c| c.to_vec()).take(branches.len()).collect())
}

/// Model signal at many frequencies.
pub fn model_eval_many(model: &OdmrFitModel, v: &[f64]) -> Result<Vec<f64>> {
    let parts = model.branches()?;
    let branches: Vec<Branch> = parts.iter().map(|p| p.1).collect();
    let sums = branch_integrals(&branches, model.d_gs(), v)?;
    let mut out = vec![model.offset(); v.len()];
    for ((amp, _), s) in parts.iter().zip(&sums) {
        for (o, x) in out.iter_mut().zip(s) {
            *o += amp * x;
        }
    }
    Ok(out)
}

pub fn model_eval(model: &OdmrFitModel, v: f64) -> Result<f64> {
    Ok(model_eval_many(model, &[v])?[0])
}

/// Upper-frequency half of the first branch, unit amplitude, no offset.
pub fn single_branch_profile(model: &OdmrFitModel, v: &[f64]) -> Result<Vec<f64>> {
    let mut b = model.branches()?[0].1;
    b.sides = Sides::Upper;
    Ok(branch_integrals(&[b], model.d_gs(), v)?.remove(0))
}

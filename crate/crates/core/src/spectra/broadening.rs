// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::SpectrumHistogram;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BroadeningParams {
    /// Angular Rabi frequency Ω_R, rad·MHz.
    pub rabi_frequency: f64,
}

impl BroadeningParams {
    pub fn new(rabi_frequency: f64) -> Result<Self> {
        if !(rabi_frequency >= 0.0 && rabi_frequency.is_finite()) {
            return Err(Error::InvalidInput("rabi_frequency must be non-negative".into()));
        }
        Ok(Self { rabi_frequency })
    }

    /// From an ordinary Rabi frequency `Ω_R / 2π` in MHz.
    pub fn from_rabi_mhz(f: f64) -> Result<Self> {
        Self::new(TAU * f)
    }

    /// Excitation probability at detuning `delta` (MHz).
    pub fn kernel(&self, delta: f64) -> f64 {
        let o2 = self.rabi_frequency * self.rabi_frequency;
        let d = TAU * delta;
        o2 / (o2 + d * d)
    }
}

/// Weights every resonance with the detuned excitation probability
/// `Ω_R² / (Ω_R² + (2πΔ)²)` and renormalizes.
pub fn apply_mw_broadening(h: &SpectrumHistogram, b: &BroadeningParams) -> Result<SpectrumHistogram> {
    BroadeningParams::new(b.rabi_frequency)?;
    if b.rabi_frequency == 0.0 {
        return Ok(h.clone());
    }
    let mut out = vec![0.0; h.grid.len()];
    for (o, &f) in out.iter_mut().zip(&h.grid) {
        *o = h.grid.iter().zip(&h.density).map(|(&f0, &w)| w * b.kernel(f - f0)).sum();
    }
    let mut meta = h.metadata.clone();
    meta.rabi_frequency = Some(b.rabi_frequency);
    SpectrumHistogram::from_weights(h.grid.clone(), out, meta)
}

/// Laser-power dependence of the observed width of a MW-broadened line.
///
/// The shipped form (`default-saturation`) is
/// `W = √(W_int² + (Ω_R/π)² · Γ₂ / (Γ₂ + Γ₁(P)))` with
/// `Γ₁(P) = gamma1_offset + gamma1_slope · P`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NarrowingModel {
    pub form_id: String,
    /// Transverse relaxation rate, MHz.
    pub gamma2: f64,
    /// Optically induced relaxation per unit laser power, MHz per µW.
    pub gamma1_slope: f64,
    /// Relaxation rate without light, MHz.
    pub gamma1_offset: f64,
}

impl Default for NarrowingModel {
    fn default() -> Self {
        Self { form_id: "default-saturation".into(), gamma2: 2.0, gamma1_slope: 0.05, gamma1_offset: 0.0 }
    }
}

impl NarrowingModel {
    pub fn validate(&self) -> Result<()> {
        if self.form_id != "default-saturation" {
            return Err(Error::InvalidInput(format!("unknown narrowing form {:?}", self.form_id)));
        }
        if !(self.gamma2 > 0.0 && self.gamma1_slope >= 0.0 && self.gamma1_offset >= 0.0) {
            return Err(Error::InvalidInput("narrowing rates must be non-negative, gamma2 positive".into()));
        }
        Ok(())
    }

    pub fn gamma1(&self, power: f64) -> f64 {
        self.gamma1_offset + self.gamma1_slope * power.max(0.0)
    }
}

/// Observed width (MHz) of a line with intrinsic width `width_intrinsic`
/// under MW drive `b` at laser power `power`.
pub fn apply_light_narrowing(
    width_intrinsic: f64,
    power: f64,
    b: &BroadeningParams,
    m: &NarrowingModel,
) -> Result<f64> {
    if !(width_intrinsic > 0.0) {
        return Err(Error::InvalidInput("intrinsic width must be positive".into()));
    }
    m.validate()?;
    let mw = b.rabi_frequency / PI;
    let factor = m.gamma2 / (m.gamma2 + m.gamma1(power));
    Ok((width_intrinsic * width_intrinsic + mw * mw * factor).sqrt())
}

/// Saturating photoluminescence count rate `k P / (P + P_s)`.
pub fn saturation_counts(power: f64, k: f64, p_s: f64) -> Result<f64> {
    if !(power >= 0.0 && p_s > 0.0) {
        return Err(Error::InvalidInput("saturation needs power >= 0 and p_s > 0".into()));
    }
    Ok(k * power / (power + p_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{FrequencyGrid, SpectrumMetadata};

    fn delta_at(i: usize) -> SpectrumHistogram {
        let g = FrequencyGrid::default().centers();
        let mut w = vec![0.0; g.len()];
        w[i] = 1.0;
        SpectrumHistogram::from_weights(g, w, SpectrumMetadata::default()).unwrap()
    }

    #[test]
    fn kernel_half_point() {
        let b = BroadeningParams::new(5.0).unwrap();
        assert_eq!(b.kernel(0.0), 1.0);
        assert!((b.kernel(5.0 / TAU) - 0.5).abs() < 1e-15);
        assert!(BroadeningParams::new(-1.0).is_err());
    }

    #[test]
    fn zero_rabi_is_identity() {
        let h = delta_at(300);
        assert_eq!(apply_mw_broadening(&h, &BroadeningParams::new(0.0).unwrap()).unwrap(), h);
    }

    #[test]
    fn delta_becomes_lorentzian() {
        let h = delta_at(400);
        let b = BroadeningParams::from_rabi_mhz(2.0).unwrap();
        let out = apply_mw_broadening(&h, &b).unwrap();
        assert!((out.total() - 1.0).abs() < 1e-12);
        let peak = out.density[400];
        // FWHM Ω_R/π = 4 MHz: 20 bins either side is the half point
        assert!((out.density[420] / peak - 0.5).abs() < 1e-12);
        assert!((out.density[380] / peak - 0.5).abs() < 1e-12);
        assert_eq!(out.metadata.rabi_frequency, Some(b.rabi_frequency));
    }

    #[test]
    fn translation_commutes() {
        let b = BroadeningParams::from_rabi_mhz(1.5).unwrap();
        let a = apply_mw_broadening(&delta_at(300), &b).unwrap();
        let c = apply_mw_broadening(&delta_at(310), &b).unwrap();
        for i in 250..350 {
            assert!((a.density[i] - c.density[i + 10]).abs() < 1e-3 * a.density[300]);
        }
    }

    #[test]
    fn narrowing_contract() {
        let m = NarrowingModel::default();
        let b = BroadeningParams::from_rabi_mhz(4.0).unwrap();
        assert_eq!(apply_light_narrowing(10.0, 50.0, &BroadeningParams::new(0.0).unwrap(), &m).unwrap(), 10.0);
        let mut last = f64::INFINITY;
        for p in [0.0, 1.0, 10.0, 100.0, 1e3] {
            let w = apply_light_narrowing(10.0, p, &b, &m).unwrap();
            assert!(w <= last && w >= 10.0);
            last = w;
        }
        // no light: Lorentzian-in-quadrature with the MW FWHM Ω_R/π
        let w0 = apply_light_narrowing(3.0, 0.0, &b, &m).unwrap();
        assert!((w0 - (9.0f64 + 64.0).sqrt()).abs() < 1e-12);
        assert!(apply_light_narrowing(0.0, 1.0, &b, &m).is_err());
    }

    #[test]
    fn saturation() {
        assert_eq!(saturation_counts(0.0, 100.0, 5.0).unwrap(), 0.0);
        assert_eq!(saturation_counts(5.0, 100.0, 5.0).unwrap(), 50.0);
        assert!(saturation_counts(1e9, 100.0, 5.0).unwrap() > 99.99);
        assert!(saturation_counts(1.0, 100.0, 0.0).is_err());
    }
}

// SPDX-License-Identifier: Apache-2.0

//! Fitting of ensemble ODMR spectra and magnetic sensitivity estimates.

mod fit;
mod model;
mod table;

pub(crate) use fit::golden_min;
pub use fit::{derived_features, fit_spectrum, DerivedFeatures, FitOptions, OdmrFitResult, SpectrumData, MIN_POINTS};
pub use model::{
    model_eval, model_eval_many, single_branch_profile, BasicParams, HyperfineParams, OdmrFitModel, PowerLawWeight,
    Variant,
};
pub use table::{ReferenceFit, REFERENCE_FITS};

use crate::error::{Error, Result};

/// Electron gyromagnetic ratio, Hz/T.
pub const GAMMA_E_HZ_PER_T: f64 = 28e9;

/// Shot-noise prefactor of a Lorentzian CW resonance.
pub fn lorentzian_prefactor() -> f64 {
    4.0 / (3.0 * 3f64.sqrt())
}

/// Shot-noise limited field sensitivity `κ Δν / (γ_e C √R)` in µT/√Hz.
///
/// `width` in MHz, `count_rate` in counts/s.
pub fn sensitivity(width: f64, contrast: f64, count_rate: f64, prefactor: f64) -> Result<f64> {
    if !(width > 0.0 && contrast > 0.0 && count_rate > 0.0 && prefactor > 0.0) {
        return Err(Error::InvalidInput("sensitivity inputs must be positive".into()));
    }
    Ok(prefactor * width * 1e6 / (GAMMA_E_HZ_PER_T * contrast * count_rate.sqrt()) * 1e6)
}

/// Prefactor making `sensitivity(width, contrast, count_rate) == target`.
pub fn calibrate_prefactor(width: f64, contrast: f64, count_rate: f64, target: f64) -> Result<f64> {
    Ok(target / sensitivity(width, contrast, count_rate, 1.0)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sensitivity_scaling() {
        let k = lorentzian_prefactor();
        let a = sensitivity(10.0, 0.03, 1e5, k).unwrap();
        assert!((sensitivity(10.0, 0.03, 2e5, k).unwrap() - a / 2f64.sqrt()).abs() < 1e-12 * a);
        assert!((sensitivity(10.0, 0.015, 1e5, k).unwrap() - 2.0 * a).abs() < 1e-12 * a);
        assert!(sensitivity(0.0, 0.03, 1e5, k).is_err());
        let c = calibrate_prefactor(20.2, 0.036, 170e3, 377.0).unwrap();
        assert!((sensitivity(20.2, 0.036, 170e3, c).unwrap() - 377.0).abs() < 1e-9);
    }
}

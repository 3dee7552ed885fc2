// SPDX-License-Identifier: Apache-2.0

//! Run configuration, read from TOML.
//!
//! Every section is optional and falls back to the module defaults, so a
//! config file only needs the values it changes:
//!
//! ```toml
//! seed = 7
//! trials = 1000
//!
//! [lattice]
//! n_concentration = 200.0
//!
//! [sweep]
//! concentrations_ppm = [50.0, 100.0, 200.0, 500.0]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::charge::{LevelSystem, PlCalibration};
use crate::efield::PhysicalConstants;
use crate::error::{Error, Result};
use crate::fitting::{FitOptions, Variant};
use crate::lattice::LatticeSpec;
use crate::spectra::{BroadeningParams, FrequencyGrid, NarrowingModel, DEFAULT_TRIALS};
use crate::spin::SpinModelParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub start_mhz: f64,
    pub end_mhz: f64,
    pub step_mhz: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = FrequencyGrid::default();
        Self { start_mhz: g.start, end_mhz: g.end(), step_mhz: g.step }
    }
}

impl GridConfig {
    pub fn grid(&self) -> Result<FrequencyGrid> {
        FrequencyGrid::new(self.start_mhz, self.end_mhz, self.step_mhz)
    }
}

/// Microwave drive, given as the ordinary Rabi frequency Ω_R/2π.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MicrowaveConfig {
    pub rabi_mhz: f64,
}

impl Default for MicrowaveConfig {
    fn default() -> Self {
        Self { rabi_mhz: 4.0 }
    }
}

impl MicrowaveConfig {
    pub fn broadening(&self) -> Result<BroadeningParams> {
        BroadeningParams::from_rabi_mhz(self.rabi_mhz)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChargeConfig {
    pub rates: LevelSystem,
    /// Optical drive per unit laser intensity, MHz per µW/µm². Needed by the
    /// model ratio source; absent until calibrated.
    pub kappa: Option<f64>,
    /// Literature constants (not from the ODMR data) for the PL ratio.
    pub pl: PlCalibration,
}

/// Where the NV⁻ fraction at each laser power comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RatioSourceKind {
    /// A measured `power_uw_per_um2,nv_minus_fraction` curve.
    Measured,
    /// The seven-level model with drive `kappa · power`.
    Lindblad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub concentrations_ppm: Vec<f64>,
    /// µW/µm².
    pub powers: Vec<f64>,
    /// MHz.
    pub drives_mhz: Vec<f64>,
    pub ratio_source: RatioSourceKind,
    /// Measured ratio curve; the bundled approximate curve when absent.
    pub ratio_csv: Option<PathBuf>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            concentrations_ppm: vec![50.0, 100.0, 200.0, 500.0],
            powers: vec![13.0, 25.0, 50.0, 100.0, 150.0, 225.0],
            drives_mhz: (0..=20).map(|i| 10f64.powf(-3.0 + 0.25 * i as f64)).collect(),
            ratio_source: RatioSourceKind::Measured,
            ratio_csv: None,
        }
    }
}

/// Saturating count-rate curve `k P / (P + P_s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountsConfig {
    /// counts/s at saturation.
    pub k: f64,
    /// µW/µm².
    pub p_s: f64,
}

impl Default for CountsConfig {
    fn default() -> Self {
        // passes through 170 kcps at 13 and 2306 kcps at 225 µW/µm²
        Self { k: 1.0038e7, p_s: 754.6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub variant: Variant,
    /// Fixed hyperfine constant for the hyperfine variant, MHz.
    pub a_zz: f64,
    pub max_iterations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self { variant: f.variant, a_zz: f.a_zz, max_iterations: f.max_iterations }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            variant: self.variant,
            a_zz: self.a_zz,
            max_iterations: self.max_iterations,
            ..FitOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticConfig {
    /// Half range of the emitted curves, MHz.
    pub v_max_mhz: f64,
    pub points: usize,
}

impl Default for AnalyticConfig {
    fn default() -> Self {
        Self { v_max_mhz: 40.0, points: 801 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `lattice.seed`.
    pub seed: u64,
    pub trials: usize,
    pub output_dir: PathBuf,
    pub lattice: LatticeSpec,
    pub spin: SpinModelParams<f64>,
    pub constants: PhysicalConstants<f64>,
    pub grid: GridConfig,
    pub microwave: MicrowaveConfig,
    pub narrowing: NarrowingModel,
    pub charge: ChargeConfig,
    pub counts: CountsConfig,
    pub fit: FitConfig,
    pub analytic: AnalyticConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: DEFAULT_TRIALS,
            output_dir: PathBuf::from("nvodmr-out"),
            lattice: LatticeSpec::default(),
            spin: SpinModelParams { dephasing_rate: 2.0, ..SpinModelParams::default() },
            constants: PhysicalConstants::default(),
            grid: GridConfig::default(),
            microwave: MicrowaveConfig::default(),
            narrowing: NarrowingModel::default(),
            charge: ChargeConfig::default(),
            counts: CountsConfig::default(),
            fit: FitConfig::default(),
            analytic: AnalyticConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn lattice_spec(&self) -> LatticeSpec {
        LatticeSpec { seed: self.seed, ..self.lattice.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        self.lattice_spec().validate()?;
        self.spin.validate()?;
        self.constants.validate()?;
        self.grid.grid()?;
        self.microwave.broadening()?;
        self.narrowing.validate()?;
        self.charge.rates.validate()?;
        self.charge.pl.validate()?;
        if let Some(k) = self.charge.kappa {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::Config("charge.kappa must be positive".into()));
            }
        }
        if !(self.counts.k > 0.0 && self.counts.p_s > 0.0) {
            return Err(Error::Config("counts.k and counts.p_s must be positive".into()));
        }
        if !(self.analytic.v_max_mhz > 0.0 && self.analytic.points >= 2) {
            return Err(Error::Config("analytic curve needs v_max_mhz > 0 and at least two points".into()));
        }
        let s = &self.sweep;
        if s.concentrations_ppm.is_empty() || s.powers.is_empty() || s.drives_mhz.is_empty() {
            return Err(Error::Config("sweep lists must not be empty".into()));
        }
        if s.concentrations_ppm.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config("sweep concentrations must be non-negative".into()));
        }
        if s.powers.iter().any(|p| !(*p >= 0.0)) || s.drives_mhz.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::Config("sweep powers must be >= 0 and drives > 0".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file() {
        let cfg = RunConfig::from_toml_str(
            "seed = 9\n[lattice]\nn_concentration = 50.0\n[sweep]\nconcentrations_ppm = [10.0]\nratio_source = \"lindblad\"\n",
        )
        .unwrap();
        assert_eq!(cfg.lattice_spec().seed, 9);
        assert_eq!(cfg.lattice.n_concentration, 50.0);
        assert_eq!(cfg.lattice.nv_concentration, 3.0);
        assert_eq!(cfg.sweep.ratio_source, RatioSourceKind::Lindblad);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str("trials = 0").is_err());
        assert!(RunConfig::from_toml_str("[sweep]\npowers = []").is_err());
        assert!(RunConfig::from_toml_str("[lattice]\nsphere_diameter = -1.0").is_err());
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[charge]\nkappa = -2.0").is_err());
    }

    #[test]
    fn counts_default_passes_quoted_points() {
        let c = CountsConfig::default();
        let r = |p: f64| c.k * p / (p + c.p_s);
        assert!((r(13.0) / 170e3 - 1.0).abs() < 2e-3);
        assert!((r(225.0) / 2306e3 - 1.0).abs() < 2e-3);
    }
}

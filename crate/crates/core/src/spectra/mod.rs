// SPDX-License-Identifier: Apache-2.0

//! Monte Carlo ensemble spectra and the transforms applied to them.

mod broadening;
mod features;

pub use broadening::{apply_light_narrowing, apply_mw_broadening, saturation_counts, BroadeningParams, NarrowingModel};
pub use features::{extract_features, unresolved_line, FeatureMethod, SpectrumFeatures};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::efield::{coupling_from_field, field_at_with_donors, PhysicalConstants};
use crate::error::{Error, Result};
use crate::lattice::{sample_configuration_trial, LatticeSpec};
use crate::rng::{substream, Purpose};
use crate::spin::{resonances, sample_dephasing_offset, sample_nv_axis, SpinModelParams};

/// Trials per work unit. Fixed so that results do not depend on the number
/// of worker threads.
pub const TRIAL_BATCH: usize = 8;

pub const DEFAULT_TRIALS: usize = 1000;

/// Uniform frequency bins, MHz.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub start: f64,
    pub step: f64,
    pub bins: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::new(2830.0, 2910.0, 0.1).expect("valid default grid")
    }
}

impl FrequencyGrid {
    pub fn new(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && end > start) {
            return Err(Error::InvalidInput("grid needs end > start and step > 0".into()));
        }
        let bins = ((end - start) / step).round() as usize;
        if bins < 2 {
            return Err(Error::InvalidInput("grid needs at least two bins".into()));
        }
        Ok(Self { start, step, bins })
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * self.bins as f64
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.start + (i as f64 + 0.5) * self.step).collect()
    }

    pub fn bin_of(&self, f: f64) -> Option<usize> {
        let u = (f - self.start) / self.step;
        if u >= 0.0 && u < self.bins as f64 {
            Some(u as usize)
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMetadata {
    pub n_trials: usize,
    pub nv_concentration: f64,
    pub n_concentration: f64,
    pub seed: u64,
    pub dephasing_rate: f64,
    /// Angular Rabi frequency applied by MW broadening, if any.
    pub rabi_frequency: Option<f64>,
    /// Resonance weight that fell outside the grid and was discarded.
    pub dropped_fraction: f64,
}

/// Normalized histogram of resonance frequencies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumHistogram {
    /// Bin centers, MHz.
    pub grid: Vec<f64>,
    /// Sums to one.
    pub density: Vec<f64>,
    pub metadata: SpectrumMetadata,
}

impl SpectrumHistogram {
    pub fn from_weights(grid: Vec<f64>, weights: Vec<f64>, metadata: SpectrumMetadata) -> Result<Self> {
        if grid.len() != weights.len() || grid.len() < 2 {
            return Err(Error::InvalidSpectrum("grid and density lengths differ".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidSpectrum("density must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidSpectrum("no spectral weight inside the grid".into()));
        }
        let density = weights.iter().map(|w| w / total).collect();
        Ok(Self { grid, density, metadata })
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    pub fn total(&self) -> f64 {
        self.density.iter().sum()
    }
}

/// Resonances of every NV in one trial, passed to `sink(frequency, weight)`.
pub fn trial_resonances(
    spec: &LatticeSpec,
    params: &SpinModelParams<f64>,
    constants: &PhysicalConstants<f64>,
    trial: u64,
    mut sink: impl FnMut(f64, f64),
) -> Result<()> {
    let config = sample_configuration_trial(spec, trial)?;
    let donors = config.donors();
    let mut rng = substream(spec.seed, Purpose::Spin, trial);
    for i in 0..config.nv_positions.len() {
        // orientation and dephasing are drawn for every NV in order, so a
        // run with fewer NV centers sees the same draws for the first ones
        let axis = sample_nv_axis(&mut rng);
        let sigma = sample_dephasing_offset(params, &mut rng);
        let field = field_at_with_donors(&config, &donors, i, constants)?;
        let coupling = coupling_from_field(field, axis, constants);
        let r = resonances(&coupling, params, sigma);
        for (f, w) in r.frequencies.iter().zip(&r.weights) {
            sink(*f, *w);
        }
    }
    Ok(())
}

pub fn simulate_spectrum(
    spec: &LatticeSpec,
    params: &SpinModelParams<f64>,
    trials: usize,
    grid: &FrequencyGrid,
) -> Result<SpectrumHistogram> {
    simulate_spectrum_with(spec, params, &PhysicalConstants::default(), trials, grid)
}

/// Monte Carlo spectrum: histogram of all resonance frequencies over
/// `trials` independent configurations.
pub fn simulate_spectrum_with(
    spec: &LatticeSpec,
    params: &SpinModelParams<f64>,
    constants: &PhysicalConstants<f64>,
    trials: usize,
    grid: &FrequencyGrid,
) -> Result<SpectrumHistogram> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    spec.validate()?;
    params.validate()?;
    constants.validate()?;
    let batches = trials.div_ceil(TRIAL_BATCH);
    let partial: Vec<Result<(Vec<f64>, f64)>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut hist = vec![0.0; grid.bins];
            let mut dropped = 0.0;
            let lo = b * TRIAL_BATCH;
            let hi = (lo + TRIAL_BATCH).min(trials);
            for trial in lo..hi {
                trial_resonances(spec, params, constants, trial as u64, |f, w| match grid.bin_of(f) {
                    Some(i) => hist[i] += w,
                    None => dropped += w,
                })?;
            }
            Ok((hist, dropped))
        })
        .collect();
    // in-order reduction keeps the result independent of scheduling
    let mut hist = vec![0.0; grid.bins];
    let mut dropped = 0.0;
    for p in partial {
        let (h, d) = p?;
        for (a, b) in hist.iter_mut().zip(&h) {
            *a += b;
        }
        dropped += d;
    }
    let inside: f64 = hist.iter().sum();
    let metadata = SpectrumMetadata {
        n_trials: trials,
        nv_concentration: spec.nv_concentration,
        n_concentration: spec.n_concentration,
        seed: spec.seed,
        dephasing_rate: params.dephasing_rate,
        rabi_frequency: None,
        dropped_fraction: if inside + dropped > 0.0 { dropped / (inside + dropped) } else { 0.0 },
    };
    SpectrumHistogram::from_weights(grid.centers(), hist, metadata)
}

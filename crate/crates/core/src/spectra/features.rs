// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::SpectrumHistogram;
use crate::error::{Error, Result};
use crate::fitting::{fit_spectrum, FitOptions, OdmrFitResult, SpectrumData, MIN_POINTS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMethod {
    Fit,
    PeakPick,
    /// The whole line sits in at most two adjacent bins.
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumFeatures {
    /// MHz.
    pub splitting: f64,
    /// FWHM of one lobe, MHz.
    pub width: f64,
    /// Lobe height relative to the fitted baseline (fit) or the peak density.
    pub contrast_proxy: f64,
    pub method: FeatureMethod,
    pub fit: Option<OdmrFitResult>,
}

/// Splitting and width of a simulated spectrum. The lineshape model is fitted
/// to `−h` (the spectrum seen as dips); if that fails, or fewer bins are
/// occupied than a fit needs, the lobes are located directly.
pub fn extract_features(h: &SpectrumHistogram) -> Result<SpectrumFeatures> {
    let occupied = h.density.iter().filter(|d| **d > 0.0).count();
    let peak = h.density.iter().cloned().fold(0.0, f64::max);
    let mean = h.total() / h.density.len() as f64;
    if occupied < 3 || peak <= mean * (1.0 + 1e-9) {
        return Err(Error::Feature("spectrum has no resolvable structure".into()));
    }
    if occupied < MIN_POINTS {
        return peak_pick(h);
    }
    let data = SpectrumData::new(h.grid.clone(), h.density.iter().map(|d| -d).collect())?;
    match fit_spectrum(&data, &FitOptions::default()) {
        Ok(fit) if fit.splitting.is_finite() && fit.width.is_finite() && fit.width > 0.0 => Ok(SpectrumFeatures {
            splitting: fit.splitting,
            width: fit.width,
            contrast_proxy: fit.contrast,
            method: FeatureMethod::Fit,
            fit: Some(fit),
        }),
        _ => peak_pick(h),
    }
}

/// Features of a line narrower than the grid: splitting zero and width one
/// bin, both within bin resolution. `None` if the weight is spread wider.
pub fn unresolved_line(h: &SpectrumHistogram) -> Option<SpectrumFeatures> {
    let occupied: Vec<usize> = (0..h.density.len()).filter(|&i| h.density[i] > 0.0).collect();
    match occupied.as_slice() {
        [i] | [i, _] if occupied[occupied.len() - 1] - i <= 1 => Some(SpectrumFeatures {
            splitting: 0.0,
            width: h.step(),
            contrast_proxy: occupied.iter().map(|&k| h.density[k]).fold(0.0, f64::max),
            method: FeatureMethod::Unresolved,
            fit: None,
        }),
        _ => None,
    }
}

fn peak_pick(h: &SpectrumHistogram) -> Result<SpectrumFeatures> {
    let m = h.density.len();
    let smooth: Vec<f64> = (0..m)
        .map(|i| {
            let (a, b) = (i.saturating_sub(2), (i + 3).min(m));
            h.density[a..b].iter().sum::<f64>() / (b - a) as f64
        })
        .collect();
    let center: f64 = h.grid.iter().zip(&h.density).map(|(f, d)| f * d).sum::<f64>() / h.total();
    let upper: Vec<usize> = (0..m).filter(|&i| h.grid[i] >= center).collect();
    let ip = *upper
        .iter()
        .max_by(|&&a, &&b| smooth[a].total_cmp(&smooth[b]))
        .ok_or_else(|| Error::Feature("no spectral weight above the line center".into()))?;
    // refine on the raw density: smoothing flattens isolated spikes into ties
    let (a, b) = (ip.saturating_sub(2), (ip + 3).min(m));
    let mass: f64 = h.density[a..b].iter().sum();
    let peak = if mass > 0.0 { (a..b).map(|i| h.grid[i] * h.density[i]).sum::<f64>() / mass } else { h.grid[ip] };
    let half = 0.5 * smooth[ip];
    let cross = |dir: isize| -> Option<f64> {
        let mut j = ip as isize;
        while j + dir >= 0 && (j + dir) < m as isize {
            let k = (j + dir) as usize;
            if smooth[k] < half {
                let (a, b) = (smooth[j as usize], smooth[k]);
                let t = (a - half) / (a - b);
                return Some(h.grid[j as usize] + t * (h.grid[k] - h.grid[j as usize]));
            }
            j += dir;
        }
        None
    };
    let (lo, hi) = match (cross(-1), cross(1)) {
        (Some(l), Some(r)) => (l, r),
        _ => return Err(Error::Feature("lobe half maximum not inside the grid".into())),
    };
    Ok(SpectrumFeatures {
        splitting: 2.0 * (peak - center),
        width: hi - lo,
        contrast_proxy: smooth[ip],
        method: FeatureMethod::PeakPick,
        fit: None,
    })
}

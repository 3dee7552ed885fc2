// SPDX-License-Identifier: Apache-2.0

//! Sweeps that chain the modules together, and the run-directory layout
//! they write to.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{scaling_constants, AnalyticParams};
use crate::charge::{drive_from_power, nv_minus_ratio, LevelSystem};
use crate::config::{RatioSourceKind, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, RatioPoint};
use crate::spectra::{
    apply_light_narrowing, apply_mw_broadening, extract_features, saturation_counts, simulate_spectrum_with,
    unresolved_line, FeatureMethod, SpectrumFeatures, SpectrumHistogram,
};

/// Features of a simulated spectrum, with the single-line case reported as
/// zero splitting instead of an error.
pub fn spectrum_features(h: &SpectrumHistogram) -> Result<SpectrumFeatures> {
    match extract_features(h) {
        Err(Error::Feature(msg)) => unresolved_line(h).ok_or(Error::Feature(msg)),
        other => other,
    }
}

/// Features of one named spectrum, as a `features.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub spectrum: String,
    pub splitting_mhz: Option<f64>,
    pub width_mhz: Option<f64>,
    pub method: Option<FeatureMethod>,
    pub error: Option<String>,
}

impl FeatureRow {
    pub fn of(name: &str, h: &SpectrumHistogram) -> Self {
        let mut row =
            Self { spectrum: name.to_string(), splitting_mhz: None, width_mhz: None, method: None, error: None };
        match spectrum_features(h) {
            Ok(f) => {
                row.splitting_mhz = Some(f.splitting);
                row.width_mhz = Some(f.width);
                row.method = Some(f.method);
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        row
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub n_ppm: f64,
    pub splitting_mhz: Option<f64>,
    pub width_mhz: Option<f64>,
    pub method: Option<FeatureMethod>,
    pub analytic_splitting_mhz: f64,
    pub analytic_width_mhz: f64,
    pub error: Option<String>,
}

pub struct ConcentrationSweep {
    pub rows: Vec<ConcentrationRow>,
    /// Same order as `rows`; `None` where the simulation itself failed.
    pub spectra: Vec<Option<SpectrumHistogram>>,
}

/// Splitting and width against nitrogen concentration, next to the
/// closed-form scaling law.
pub fn run_concentration_sweep(cfg: &RunConfig) -> Result<ConcentrationSweep> {
    cfg.validate()?;
    let grid = cfg.grid.grid()?;
    let base = cfg.lattice_spec();
    let c = scaling_constants(&AnalyticParams::new(1.0, base.nv_concentration, &cfg.constants));
    let out: Vec<(ConcentrationRow, Option<SpectrumHistogram>)> = cfg
        .sweep
        .concentrations_ppm
        .par_iter()
        .map(|&n_ppm| {
            let scale = n_ppm.powf(2.0 / 3.0);
            let mut row = ConcentrationRow {
                n_ppm,
                splitting_mhz: None,
                width_mhz: None,
                method: None,
                analytic_splitting_mhz: c.s_coeff * scale,
                analytic_width_mhz: c.w_coeff * scale,
                error: None,
            };
            let spec = base.with_n_concentration(n_ppm);
            let h = match simulate_spectrum_with(&spec, &cfg.spin, &cfg.constants, cfg.trials, &grid) {
                Ok(h) => h,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return (row, None);
                }
            };
            match spectrum_features(&h) {
                Ok(f) => {
                    row.splitting_mhz = Some(f.splitting);
                    row.width_mhz = Some(f.width);
                    row.method = Some(f.method);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            (row, Some(h))
        })
        .collect();
    let (rows, spectra) = out.into_iter().unzip();
    Ok(ConcentrationSweep { rows, spectra })
}

/// NV⁻ fraction at a given laser intensity.
#[derive(Clone, Debug, PartialEq)]
pub enum RatioSource {
    /// Interpolated linearly in power, held constant beyond the ends.
    Measured(Vec<RatioPoint>),
    /// Seven-level model at drive `kappa · power`.
    Lindblad { system: LevelSystem, kappa: Option<f64> },
}

impl RatioSource {
    /// The source selected by `cfg.sweep`, reading the curve file if one is
    /// given and using the bundled approximate curve otherwise.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.sweep.ratio_source {
            RatioSourceKind::Measured => Self::Measured(match &cfg.sweep.ratio_csv {
                Some(p) => io::read_ratio_file(p)?,
                None => io::approximate_ratio_curve(),
            }),
            RatioSourceKind::Lindblad => Self::Lindblad { system: cfg.charge.rates.clone(), kappa: cfg.charge.kappa },
        })
    }

    pub fn fraction(&self, power: f64) -> Result<f64> {
        match self {
            Self::Measured(pts) => interpolate(pts, power),
            Self::Lindblad { system, kappa } => {
                let k = kappa.ok_or_else(|| {
                    Error::MissingCalibration("the model ratio source needs charge.kappa (drive per unit power)".into())
                })?;
                if power == 0.0 {
                    // no light: nothing ionizes
                    return Ok(1.0);
                }
                nv_minus_ratio(&system.with_drive(drive_from_power(power, k)?))
            }
        }
    }
}

fn interpolate(pts: &[RatioPoint], power: f64) -> Result<f64> {
    let (first, last) = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidInput("ratio curve is empty".into())),
    };
    if power <= first.power_uw_per_um2 {
        return Ok(first.nv_minus_fraction);
    }
    if power >= last.power_uw_per_um2 {
        return Ok(last.nv_minus_fraction);
    }
    let j = pts.partition_point(|p| p.power_uw_per_um2 <= power);
    let (a, b) = (&pts[j - 1], &pts[j]);
    let t = (power - a.power_uw_per_um2) / (b.power_uw_per_um2 - a.power_uw_per_um2);
    Ok(a.nv_minus_fraction + t * (b.nv_minus_fraction - a.nv_minus_fraction))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    /// µW/µm².
    pub power: f64,
    pub nv_minus_fraction: f64,
    pub effective_nv_ppm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    #[serde(flatten)]
    pub point: PowerPoint,
    pub splitting_mhz: Option<f64>,
    /// Width of the MW-broadened spectrum.
    pub width_raw_mhz: Option<f64>,
    /// Width without MW broadening.
    pub width_intrinsic_mhz: Option<f64>,
    pub width_narrowed_mhz: Option<f64>,
    /// counts/s.
    pub counts: f64,
    pub error: Option<String>,
}

/// `PowerRow` as one flat CSV record; the csv writer cannot serialize the
/// flattened point.
#[derive(Serialize)]
struct PowerCsvRow<'a> {
    power: f64,
    nv_minus_fraction: f64,
    effective_nv_ppm: f64,
    splitting_mhz: Option<f64>,
    width_raw_mhz: Option<f64>,
    width_intrinsic_mhz: Option<f64>,
    width_narrowed_mhz: Option<f64>,
    counts: f64,
    error: Option<&'a str>,
}

impl<'a> From<&'a PowerRow> for PowerCsvRow<'a> {
    fn from(r: &'a PowerRow) -> Self {
        Self {
            power: r.point.power,
            nv_minus_fraction: r.point.nv_minus_fraction,
            effective_nv_ppm: r.point.effective_nv_ppm,
            splitting_mhz: r.splitting_mhz,
            width_raw_mhz: r.width_raw_mhz,
            width_intrinsic_mhz: r.width_intrinsic_mhz,
            width_narrowed_mhz: r.width_narrowed_mhz,
            counts: r.counts,
            error: r.error.as_deref(),
        }
    }
}

pub struct PowerSweep {
    pub rows: Vec<PowerRow>,
    /// `(broadened, intrinsic)` per row.
    pub spectra: Vec<Option<(SpectrumHistogram, SpectrumHistogram)>>,
}

/// Laser-power dependence through the charge equilibrium: each power sets the
/// NV⁻ fraction, which scales the NV concentration of the simulation.
pub fn run_power_sweep(cfg: &RunConfig, source: &RatioSource) -> Result<PowerSweep> {
    cfg.validate()?;
    let grid = cfg.grid.grid()?;
    let base = cfg.lattice_spec();
    let mw = cfg.microwave.broadening()?;
    let points: Vec<PowerPoint> = cfg
        .sweep
        .powers
        .iter()
        .map(|&power| {
            let f = source.fraction(power)?;
            Ok(PowerPoint { power, nv_minus_fraction: f, effective_nv_ppm: base.nv_concentration * f })
        })
        .collect::<Result<_>>()?;
    let out: Vec<(PowerRow, Option<(SpectrumHistogram, SpectrumHistogram)>)> = points
        .into_par_iter()
        .map(|point| {
            let counts = saturation_counts(point.power, cfg.counts.k, cfg.counts.p_s).unwrap_or(f64::NAN);
            let mut row = PowerRow {
                point,
                splitting_mhz: None,
                width_raw_mhz: None,
                width_intrinsic_mhz: None,
                width_narrowed_mhz: None,
                counts,
                error: None,
            };
            let spec = base.with_nv_concentration(row.point.effective_nv_ppm);
            let run = || -> Result<(SpectrumHistogram, SpectrumHistogram)> {
                let intrinsic = simulate_spectrum_with(&spec, &cfg.spin, &cfg.constants, cfg.trials, &grid)?;
                let broadened = apply_mw_broadening(&intrinsic, &mw)?;
                Ok((broadened, intrinsic))
            };
            let (broadened, intrinsic) = match run() {
                Ok(h) => h,
                Err(e) => {
                    row.error = Some(e.to_string());
                    return (row, None);
                }
            };
            let mut errors = Vec::new();
            match spectrum_features(&broadened) {
                Ok(f) => {
                    row.splitting_mhz = Some(f.splitting);
                    row.width_raw_mhz = Some(f.width);
                }
                Err(e) => errors.push(format!("broadened: {e}")),
            }
            match spectrum_features(&intrinsic) {
                Ok(f) => {
                    row.width_intrinsic_mhz = Some(f.width);
                    match apply_light_narrowing(f.width, row.point.power, &mw, &cfg.narrowing) {
                        Ok(w) => row.width_narrowed_mhz = Some(w),
                        Err(e) => errors.push(format!("narrowing: {e}")),
                    }
                }
                Err(e) => errors.push(format!("intrinsic: {e}")),
            }
            if !errors.is_empty() {
                row.error = Some(errors.join("; "));
            }
            (row, Some((broadened, intrinsic)))
        })
        .collect();
    let (rows, spectra) = out.into_iter().unzip();
    Ok(PowerSweep { rows, spectra })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargePoint {
    pub drive_mhz: f64,
    pub nv_minus_ratio: f64,
}

/// Steady-state NV⁻ fraction over a grid of optical drives.
pub fn run_charge_curve(sys: &LevelSystem, drives: &[f64]) -> Result<Vec<ChargePoint>> {
    if drives.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidInput("drive grid values must be positive".into()));
    }
    drives
        .par_iter()
        .map(|&d| Ok(ChargePoint { drive_mhz: d, nv_minus_ratio: nv_minus_ratio(&sys.with_drive(d))? }))
        .collect()
}

/// Provenance written next to the results. The timestamp lives only here so
/// that every other file of a run is reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub trials: usize,
    pub threads: usize,
    pub created_unix_s: u64,
    pub rows: usize,
    pub failed_rows: usize,
}

impl RunMeta {
    pub fn new(command: &str, cfg: &RunConfig, rows: usize, failed_rows: usize) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            trials: cfg.trials,
            threads: rayon::current_num_threads(),
            created_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            rows,
            failed_rows,
        }
    }
}

/// `config.echo`, `spectra/*.csv` (+ JSON sidecars), `features.csv`,
/// `meta.json` under one root.
pub struct RunDirectory {
    root: PathBuf,
}

impl RunDirectory {
    pub fn create(root: &Path, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(root.join("spectra"))?;
        fs::write(root.join("config.echo"), cfg.to_toml()?)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write_spectrum(&self, name: &str, h: &SpectrumHistogram) -> Result<()> {
        let dir = self.root.join("spectra");
        io::write_spectrum_csv(h, fs::File::create(dir.join(format!("{name}.csv")))?)?;
        io::write_spectrum_sidecar(h, fs::File::create(dir.join(format!("{name}.json")))?)
    }

    pub fn write_features<T: Serialize>(&self, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.root.join("features.csv"))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_meta(&self, meta: &RunMeta) -> Result<()> {
        io::write_json(meta, fs::File::create(self.root.join("meta.json"))?)
    }
}

/// Number formatted for a file name: `12.5` → `12p5`.
pub fn file_tag(x: f64) -> String {
    format!("{x}").replace('.', "p").replace('-', "m")
}

/// Concentration sweep written as a run directory.
pub fn write_concentration_run(cfg: &RunConfig, root: &Path) -> Result<ConcentrationSweep> {
    let sweep = run_concentration_sweep(cfg)?;
    let dir = RunDirectory::create(root, cfg)?;
    for (row, h) in sweep.rows.iter().zip(&sweep.spectra) {
        if let Some(h) = h {
            dir.write_spectrum(&format!("n_{}ppm", file_tag(row.n_ppm)), h)?;
        }
    }
    dir.write_features(&sweep.rows)?;
    let failed = sweep.rows.iter().filter(|r| r.error.is_some()).count();
    dir.write_meta(&RunMeta::new("conc-sweep", cfg, sweep.rows.len(), failed))?;
    Ok(sweep)
}

/// Power sweep written as a run directory.
pub fn write_power_run(cfg: &RunConfig, source: &RatioSource, root: &Path) -> Result<PowerSweep> {
    let sweep = run_power_sweep(cfg, source)?;
    let dir = RunDirectory::create(root, cfg)?;
    for (row, h) in sweep.rows.iter().zip(&sweep.spectra) {
        if let Some((b, i)) = h {
            let tag = file_tag(row.point.power);
            dir.write_spectrum(&format!("p_{tag}_broadened"), b)?;
            dir.write_spectrum(&format!("p_{tag}_intrinsic"), i)?;
        }
    }
    dir.write_features(&sweep.rows.iter().map(PowerCsvRow::from).collect::<Vec<_>>())?;
    let failed = sweep.rows.iter().filter(|r| r.error.is_some()).count();
    dir.write_meta(&RunMeta::new("power-sweep", cfg, sweep.rows.len(), failed))?;
    Ok(sweep)
}

// SPDX-License-Identifier: Apache-2.0

//! File formats. All tables are CSV with a fixed header, all metadata JSON.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analytics::ScalingConstants;
use crate::charge::LevelSystem;
use crate::error::{Error, Result};
use crate::fitting::{BasicParams, OdmrFitModel, SpectrumData};
use crate::spectra::{SpectrumHistogram, SpectrumMetadata};

const APPROXIMATE_RATIO_CSV: &str = include_str!("../data/nv_minus_ratio_approx.csv");

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

/// `frequency_mhz,density`.
pub fn write_spectrum_csv<W: Write>(h: &SpectrumHistogram, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["frequency_mhz", "density"])?;
    for (f, d) in h.grid.iter().zip(&h.density) {
        out.write_record([f.to_string(), d.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    #[serde(flatten)]
    pub metadata: SpectrumMetadata,
    pub bins: usize,
    pub bin_width_mhz: f64,
}

pub fn write_spectrum_sidecar<W: Write>(h: &SpectrumHistogram, w: W) -> Result<()> {
    let side = SpectrumSidecar { metadata: h.metadata.clone(), bins: h.grid.len(), bin_width_mhz: h.step() };
    serde_json::to_writer_pretty(w, &side)?;
    Ok(())
}

/// What the second spectrum column holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SignalKind {
    /// Simulated resonance density: lines are peaks.
    Density,
    /// Measured normalized contrast: lines are dips.
    Contrast,
}

/// Reads a two-column spectrum. The header must be `frequency_mhz` followed
/// by `density` (simulated) or `contrast` (measured).
pub fn read_spectrum_csv<R: Read>(r: R) -> Result<SpectrumData> {
    read_spectrum_tagged(r).map(|(d, _)| d)
}

/// As [`read_spectrum_csv`], also reporting which column was present.
pub fn read_spectrum_tagged<R: Read>(r: R) -> Result<(SpectrumData, SignalKind)> {
    let mut rd = reader(r);
    let header = rd.headers()?.clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() != 2 || cols[0] != "frequency_mhz" || !(cols[1] == "density" || cols[1] == "contrast") {
        return Err(Error::InvalidSpectrum(format!(
            "expected header frequency_mhz,density or frequency_mhz,contrast, found {}",
            cols.join(",")
        )));
    }
    let kind = if cols[1] == "density" { SignalKind::Density } else { SignalKind::Contrast };
    let mut f = Vec::new();
    let mut s = Vec::new();
    for rec in rd.deserialize::<(f64, f64)>() {
        let (a, b) = rec?;
        f.push(a);
        s.push(b);
    }
    Ok((SpectrumData::new(f, s)?, kind))
}

/// A spectrum ready for the dip model: density columns are negated.
pub fn read_fit_input(path: &Path) -> Result<SpectrumData> {
    let (mut d, kind) = read_spectrum_tagged(std::fs::File::open(path)?)?;
    if kind == SignalKind::Density {
        d.signal.iter_mut().for_each(|y| *y = -*y);
    }
    Ok(d)
}

pub fn read_spectrum_file(path: &Path) -> Result<SpectrumData> {
    read_spectrum_csv(std::fs::File::open(path)?)
}

/// Rate table as TOML (`gamma_41 = 80.0`, …, `drive_mhz = 1.0`) or, for a
/// `.json` path, the same keys as a JSON object.
pub fn read_rate_table(path: &Path) -> Result<LevelSystem> {
    let text = std::fs::read_to_string(path)?;
    let sys: LevelSystem = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    sys.validate()?;
    Ok(sys)
}

pub fn write_rate_table<W: Write>(sys: &LevelSystem, mut w: W) -> Result<()> {
    w.write_all(toml::to_string(sys)?.as_bytes())?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub power_uw_per_um2: f64,
    pub nv_minus_fraction: f64,
}

/// `power_uw_per_um2,nv_minus_fraction`, sorted by power on return.
pub fn read_ratio_curve<R: Read>(r: R) -> Result<Vec<RatioPoint>> {
    let mut pts: Vec<RatioPoint> = reader(r).deserialize().collect::<std::result::Result<_, _>>()?;
    if pts.is_empty() {
        return Err(Error::InvalidInput("ratio curve is empty".into()));
    }
    if pts.iter().any(|p| !(p.power_uw_per_um2 >= 0.0) || !(0.0..=1.0).contains(&p.nv_minus_fraction)) {
        return Err(Error::InvalidInput("ratio curve needs powers >= 0 and fractions in [0, 1]".into()));
    }
    pts.sort_by(|a, b| a.power_uw_per_um2.total_cmp(&b.power_uw_per_um2));
    Ok(pts)
}

pub fn read_ratio_file(path: &Path) -> Result<Vec<RatioPoint>> {
    read_ratio_curve(std::fs::File::open(path)?)
}

pub fn write_ratio_curve<W: Write>(pts: &[RatioPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in pts {
        out.serialize(p)?;
    }
    out.flush()?;
    Ok(())
}

/// NV⁻ fraction versus laser intensity read off a published figure by eye.
/// Approximate: the underlying values were never tabulated.
pub fn approximate_ratio_curve() -> Vec<RatioPoint> {
    read_ratio_curve(APPROXIMATE_RATIO_CSV.as_bytes()).expect("bundled ratio curve parses")
}

/// `wavelength_nm,intensity`, returned in ascending wavelength.
pub fn read_pl_spectrum<R: Read>(r: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rd = reader(r);
    let header = rd.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["wavelength_nm", "intensity"] {
        return Err(Error::InvalidSpectrum("expected header wavelength_nm,intensity".into()));
    }
    let mut rows: Vec<(f64, f64)> = rd.deserialize().collect::<std::result::Result<_, _>>()?;
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows.into_iter().unzip())
}

/// `v_mhz,density`.
pub fn write_analytic_csv<W: Write>(v: &[f64], density: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["v_mhz", "density"])?;
    for (a, b) in v.iter().zip(density) {
        out.write_record([a.to_string(), b.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub s_coeff: f64,
    pub w_coeff: f64,
    pub n_concentration: f64,
    pub nv_concentration: f64,
    pub splitting_mhz: f64,
    pub width_mhz: f64,
}

impl ScalingReport {
    pub fn new(c: ScalingConstants<f64>, n_ppm: f64, nv_ppm: f64) -> Self {
        let s = n_ppm.powf(2.0 / 3.0);
        Self {
            s_coeff: c.s_coeff,
            w_coeff: c.w_coeff,
            n_concentration: n_ppm,
            nv_concentration: nv_ppm,
            splitting_mhz: c.s_coeff * s,
            width_mhz: c.w_coeff * s,
        }
    }
}

/// One row of a published-style fit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitTableRow {
    pub sample: String,
    pub power_uw: f64,
    #[serde(rename = "C0")]
    pub c0: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub n: f64,
    pub k_mhz_pow: f64,
    pub delta_mhz: f64,
    pub dgs_mhz: f64,
}

impl FitTableRow {
    /// Basic-variant models only.
    pub fn new(sample: &str, power_uw: f64, model: &OdmrFitModel) -> Result<Self> {
        match model {
            OdmrFitModel::Basic(BasicParams { c0, c, n, k, delta, d_gs }) => Ok(Self {
                sample: sample.to_string(),
                power_uw,
                c0: *c0,
                c: *c,
                n: *n,
                k_mhz_pow: *k,
                delta_mhz: *delta,
                dgs_mhz: *d_gs,
            }),
            _ => Err(Error::InvalidInput("fit table rows need the basic variant".into())),
        }
    }
}

/// `sample,power_uw,C0,C,n,k_mhz_pow,delta_mhz,dgs_mhz`.
pub fn write_fit_table<W: Write>(rows: &[FitTableRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(["sample", "power_uw", "C0", "C", "n", "k_mhz_pow", "delta_mhz", "dgs_mhz"])?;
    }
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_fit_table<R: Read>(r: R) -> Result<Vec<FitTableRow>> {
    Ok(reader(r).deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::FrequencyGrid;

    #[test]
    fn spectrum_round_trip() {
        let g = FrequencyGrid::new(2860.0, 2880.0, 0.5).unwrap();
        let w: Vec<f64> = (0..g.bins).map(|i| 1.0 + (i % 7) as f64).collect();
        let h = SpectrumHistogram::from_weights(g.centers(), w, SpectrumMetadata::default()).unwrap();
        let mut buf = Vec::new();
        write_spectrum_csv(&h, &mut buf).unwrap();
        assert!(buf.starts_with(b"frequency_mhz,density\n"));
        let back = read_spectrum_csv(buf.as_slice()).unwrap();
        assert_eq!(back.frequency, h.grid);
        assert_eq!(back.signal, h.density);
    }

    #[test]
    fn spectrum_header_checked() {
        let text = "freq,value\n1,2\n";
        assert!(matches!(read_spectrum_csv(text.as_bytes()), Err(Error::InvalidSpectrum(_))));
    }

    #[test]
    fn ratio_curve_sorted_and_checked() {
        let pts = read_ratio_curve("power_uw_per_um2,nv_minus_fraction\n10,0.5\n1,0.9\n".as_bytes()).unwrap();
        assert_eq!(pts[0].power_uw_per_um2, 1.0);
        assert!(read_ratio_curve("power_uw_per_um2,nv_minus_fraction\n1,1.5\n".as_bytes()).is_err());
        let bundled = approximate_ratio_curve();
        assert!(bundled.windows(2).all(|w| w[1].nv_minus_fraction <= w[0].nv_minus_fraction));
    }

    #[test]
    fn rate_table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rates.toml");
        let sys = LevelSystem::default().with_drive(1.5);
        write_rate_table(&sys, std::fs::File::create(&p).unwrap()).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("gamma_41") && text.contains("drive_mhz"));
        assert_eq!(read_rate_table(&p).unwrap(), sys);
        let j = dir.path().join("rates.json");
        std::fs::write(&j, serde_json::to_string(&sys).unwrap()).unwrap();
        assert_eq!(read_rate_table(&j).unwrap(), sys);
    }

    #[test]
    fn fit_table_header() {
        let m = crate::fitting::REFERENCE_FITS[0].model();
        let row = FitTableRow::new("ND01", 7.8, &m).unwrap();
        let mut buf = Vec::new();
        write_fit_table(std::slice::from_ref(&row), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample,power_uw,C0,C,n,k_mhz_pow,delta_mhz,dgs_mhz\n"));
        assert_eq!(read_fit_table(buf.as_slice()).unwrap(), vec![row]);
    }
}

// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;

use nvodmr::charge::{nv_minus_ratio, LevelSystem};
use nvodmr::config::SweepConfig;
use nvodmr::fitting::{fit_spectrum, FitOptions};
use nvodmr::io::{read_fit_input, RatioPoint};
use nvodmr::lattice::LatticeSpec;
use nvodmr::pipeline::{
    run_charge_curve, run_concentration_sweep, run_power_sweep, write_concentration_run, write_power_run, RatioSource,
};
use nvodmr::spectra::FeatureMethod;
use nvodmr::{Error, RunConfig};

/// A run small enough for a unit-test budget.
fn small_config() -> RunConfig {
    RunConfig {
        seed: 4,
        trials: 60,
        lattice: LatticeSpec { sphere_diameter: 40.0, nv_concentration: 20.0, ..LatticeSpec::default() },
        sweep: SweepConfig {
            concentrations_ppm: vec![100.0, 300.0],
            powers: vec![10.0, 50.0, 200.0],
            ..SweepConfig::default()
        },
        ..RunConfig::default()
    }
}

#[test]
fn zero_nitrogen_row_has_no_splitting() {
    let mut cfg = small_config();
    cfg.spin.dephasing_rate = 0.0;
    cfg.trials = 5;
    cfg.sweep.concentrations_ppm = vec![0.0];
    let sweep = run_concentration_sweep(&cfg).unwrap();
    let row = &sweep.rows[0];
    assert_eq!(row.error, None);
    assert_eq!(row.method, Some(FeatureMethod::Unresolved));
    assert!(row.splitting_mhz.unwrap().abs() <= cfg.grid.step_mhz);
}

#[test]
fn rows_keep_their_errors() {
    let mut cfg = small_config();
    // far too dense to place: the row fails, the sweep does not
    cfg.lattice.min_separation = 3.0;
    cfg.sweep.concentrations_ppm = vec![5000.0];
    cfg.trials = 1;
    let sweep = run_concentration_sweep(&cfg).unwrap();
    assert!(sweep.rows[0].error.is_some());
    assert!(sweep.spectra[0].is_none());
}

#[test]
fn constant_fraction_gives_constant_features() {
    let cfg = small_config();
    let flat = RatioSource::Measured(vec![
        RatioPoint { power_uw_per_um2: 0.0, nv_minus_fraction: 1.0 },
        RatioPoint { power_uw_per_um2: 1000.0, nv_minus_fraction: 1.0 },
    ]);
    let sweep = run_power_sweep(&cfg, &flat).unwrap();
    let first = &sweep.rows[0];
    assert!(first.error.is_none(), "{:?}", first.error);
    for r in &sweep.rows {
        assert_eq!(r.point.effective_nv_ppm, cfg.lattice.nv_concentration);
        assert_eq!(r.splitting_mhz, first.splitting_mhz);
        assert_eq!(r.width_raw_mhz, first.width_raw_mhz);
    }
    // the narrowing model still acts on the constant intrinsic width
    let narrowed: Vec<f64> = sweep.rows.iter().map(|r| r.width_narrowed_mhz.unwrap()).collect();
    assert!(narrowed.windows(2).all(|w| w[1] <= w[0]));
    let counts: Vec<f64> = sweep.rows.iter().map(|r| r.counts).collect();
    assert!(counts.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn effective_concentration_follows_fraction() {
    let cfg = small_config();
    let source = RatioSource::Measured(nvodmr::io::approximate_ratio_curve());
    let sweep = run_power_sweep(&cfg, &source).unwrap();
    for r in &sweep.rows {
        let f = source.fraction(r.point.power).unwrap();
        assert_eq!(r.point.nv_minus_fraction, f);
        assert!((r.point.effective_nv_ppm - cfg.lattice.nv_concentration * f).abs() < 1e-12);
    }
}

#[test]
fn lindblad_source_uses_kappa() {
    let sys = LevelSystem::default();
    let source = RatioSource::Lindblad { system: sys.clone(), kappa: Some(0.05) };
    let f = source.fraction(20.0).unwrap();
    assert!((f - nv_minus_ratio(&sys.with_drive(1.0)).unwrap()).abs() < 1e-12);
    let missing = RatioSource::Lindblad { system: sys, kappa: None };
    assert!(matches!(missing.fraction(20.0), Err(Error::MissingCalibration(_))));
}

#[test]
fn charge_curve_rows() {
    let sys = LevelSystem::default();
    let drives = [0.01, 0.1, 1.0, 3.0, 10.0];
    let curve = run_charge_curve(&sys, &drives).unwrap();
    assert_eq!(curve.len(), drives.len());
    assert!(curve.windows(2).all(|w| w[1].nv_minus_ratio <= w[0].nv_minus_ratio));
    let single = run_charge_curve(&sys, &[0.3]).unwrap();
    assert_eq!(single[0].nv_minus_ratio, nv_minus_ratio(&sys.with_drive(0.3)).unwrap());
    assert!(run_charge_curve(&sys, &[1.0, 0.0]).is_err());
}

fn files(root: &Path) -> Vec<String> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<String>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(base, &p, out);
            } else {
                out.push(p.strip_prefix(base).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

#[test]
fn runs_are_reproducible() {
    let cfg = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_concentration_run(&cfg, a.path()).unwrap();
    write_concentration_run(&cfg, b.path()).unwrap();
    let names = files(a.path());
    assert_eq!(names, files(b.path()));
    for must in ["config.echo", "features.csv", "meta.json", "spectra/n_100ppm.csv", "spectra/n_300ppm.json"] {
        assert!(names.iter().any(|n| n == must), "missing {must} in {names:?}");
    }
    for n in names.iter().filter(|n| !n.ends_with("meta.json")) {
        let (x, y) = (fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap());
        assert!(x == y, "{n} differs between identical runs");
    }
    let echoed = RunConfig::from_file(&a.path().join("config.echo")).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn written_spectra_refit_to_the_same_features() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let sweep = write_concentration_run(&cfg, dir.path()).unwrap();
    for row in sweep.rows.iter().filter(|r| r.method == Some(FeatureMethod::Fit)) {
        let path = dir.path().join("spectra").join(format!("n_{}ppm.csv", nvodmr::pipeline::file_tag(row.n_ppm)));
        let fit = fit_spectrum(&read_fit_input(&path).unwrap(), &FitOptions::default()).unwrap();
        let (s, w) = (row.splitting_mhz.unwrap(), row.width_mhz.unwrap());
        assert!((fit.splitting - s).abs() <= 1e-3 * s.max(1.0), "{} vs {s}", fit.splitting);
        assert!((fit.width - w).abs() <= 1e-3 * w.max(1.0), "{} vs {w}", fit.width);
    }
}

#[test]
fn power_run_writes_flat_feature_table() {
    let mut cfg = small_config();
    cfg.sweep.powers = vec![10.0, 200.0];
    let dir = tempfile::tempdir().unwrap();
    let sweep =
        write_power_run(&cfg, &RatioSource::Measured(nvodmr::io::approximate_ratio_curve()), dir.path()).unwrap();
    let mut rd = csv::Reader::from_path(dir.path().join("features.csv")).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..3], ["power", "nv_minus_fraction", "effective_nv_ppm"]);
    let records: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), sweep.rows.len());
    for (rec, row) in records.iter().zip(&sweep.rows) {
        assert_eq!(rec[0].parse::<f64>().unwrap(), row.point.power);
    }
    assert!(dir.path().join("spectra/p_200_intrinsic.csv").exists());
}

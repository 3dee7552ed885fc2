// SPDX-License-Identifier: Apache-2.0

//! `nvodmr`: simulate, fit and sweep zero-field ODMR spectra of NV ensembles.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nvodmr::analytics::{lineshape_g1, lineshape_g2, lineshape_total, scaling_constants, AnalyticParams};
use nvodmr::charge::{calibrate_kappa, estimate_nv_ratio_from_pl, zpl_area};
use nvodmr::config::RatioSourceKind;
use nvodmr::fitting::{
    calibrate_prefactor, fit_spectrum, lorentzian_prefactor, sensitivity, OdmrFitModel, OdmrFitResult, Variant,
};
use nvodmr::io::{self, FitTableRow, ScalingReport};
use nvodmr::lattice::sample_configuration;
use nvodmr::pipeline::{self, FeatureRow, RatioSource, RunDirectory, RunMeta};
use nvodmr::spectra::{apply_mw_broadening, saturation_counts, simulate_spectrum_with};
use nvodmr::RunConfig;
use serde_json::json;

#[derive(Parser)]
#[command(name = "nvodmr", version, about = "Zero-field ODMR of NV ensembles: simulation, analytics and fitting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; omitted sections keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file for single-result commands).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo spectrum for one configuration.
    Simulate(SimulateArgs),
    /// Closed-form lineshapes and scaling constants.
    Analytic(ConcentrationArgs),
    /// Fit spectra; more than one input writes a parameter table.
    Fit(FitArgs),
    /// Steady-state NV⁻ fraction against optical drive.
    Charge(ChargeArgs),
    /// Laser-power sweep through the charge equilibrium.
    PowerSweep(PowerArgs),
    /// Nitrogen-concentration sweep against the scaling law.
    ConcSweep,
    /// NV⁻ fraction from zero-phonon-line areas.
    PlRatio(PlArgs),
    /// Shot-noise field sensitivity from width, contrast and count rate.
    Sensitivity(SensitivityArgs),
}

#[derive(Args)]
struct ConcentrationArgs {
    /// Nitrogen concentration, ppm.
    #[arg(long)]
    n_ppm: Option<f64>,
    /// NV⁻ concentration, ppm.
    #[arg(long)]
    nv_ppm: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    conc: ConcentrationArgs,
    #[arg(long)]
    trials: Option<usize>,
    /// Also write the MW-broadened spectrum.
    #[arg(long)]
    broaden: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Spectrum CSVs (`frequency_mhz,density` or `frequency_mhz,contrast`).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    /// Starting model as JSON (a model or an earlier fit result).
    #[arg(long, value_name = "FILE")]
    init: Option<PathBuf>,
    /// Laser power of each input for the table, µW.
    #[arg(long, num_args = 1..)]
    power: Vec<f64>,
    /// Write the table even for a single input.
    #[arg(long)]
    batch: bool,
}

#[derive(Args)]
struct ChargeArgs {
    /// Rate table (TOML, or JSON by extension).
    #[arg(long, value_name = "FILE")]
    rates: Option<PathBuf>,
    /// Drives to evaluate, MHz; the configured grid otherwise.
    #[arg(long, num_args = 1..)]
    drive: Vec<f64>,
    /// Fit drive-per-power to a `power_uw_per_um2,nv_minus_fraction` curve.
    #[arg(long, value_name = "CSV")]
    calibrate: Option<PathBuf>,
}

#[derive(Args)]
struct PowerArgs {
    /// Measured NV⁻ ratio curve.
    #[arg(long, value_name = "CSV")]
    ratio_csv: Option<PathBuf>,
    /// Use the seven-level model instead of a measured curve.
    #[arg(long)]
    lindblad: bool,
    /// Drive per unit power for the model, MHz per µW/µm².
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Args)]
struct PlArgs {
    #[arg(long, requires = "zero_area")]
    minus_area: Option<f64>,
    #[arg(long, requires = "minus_area")]
    zero_area: Option<f64>,
    /// `wavelength_nm,intensity` spectrum to integrate.
    #[arg(long, value_name = "CSV", conflicts_with_all = ["minus_area", "zero_area"])]
    spectrum: Option<PathBuf>,
    #[arg(long, default_value_t = 637.0)]
    minus_center: f64,
    #[arg(long, default_value_t = 575.0)]
    zero_center: f64,
    #[arg(long, default_value_t = 1.0)]
    half_window: f64,
}

#[derive(Args)]
struct SensitivityArgs {
    /// Line width, MHz.
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    contrast: Option<f64>,
    /// counts/s; derived from `--power` and the saturation curve otherwise.
    #[arg(long)]
    counts: Option<f64>,
    /// Laser intensity, µW/µm².
    #[arg(long)]
    power: Option<f64>,
    /// Take width and contrast from a fit result JSON.
    #[arg(long, value_name = "FILE")]
    fit: Option<PathBuf>,
    #[arg(long)]
    prefactor: Option<f64>,
    /// Choose the prefactor so this point gives the target, µT/√Hz.
    #[arg(long)]
    calibrate_to: Option<f64>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    let mut cfg = match &cli.global.config {
        Some(p) => RunConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.global.seed {
        cfg.seed = s;
    }
    let out = cli.global.out.clone();
    match cli.command {
        Command::Simulate(a) => simulate(cfg, a, out),
        Command::Analytic(a) => analytic(cfg, a, out),
        Command::Fit(a) => fit(cfg, a, out),
        Command::Charge(a) => charge(cfg, a, out),
        Command::PowerSweep(a) => power_sweep(cfg, a, out),
        Command::ConcSweep => conc_sweep(cfg, out),
        Command::PlRatio(a) => pl_ratio(cfg, a, out),
        Command::Sensitivity(a) => sensitivity_cmd(cfg, a, out),
    }
}

fn run_root(cfg: &RunConfig, out: Option<PathBuf>) -> PathBuf {
    out.unwrap_or_else(|| cfg.output_dir.clone())
}

/// JSON to the given file, or stdout.
fn emit_json(value: &serde_json::Value, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            io::write_json(value, fs::File::create(p)?)?
        }
        None => io::write_json(value, std::io::stdout().lock())?,
    }
    Ok(())
}

fn apply_concentrations(cfg: &mut RunConfig, a: &ConcentrationArgs) -> Result<()> {
    if let Some(n) = a.n_ppm {
        cfg.lattice.n_concentration = n;
    }
    if let Some(n) = a.nv_ppm {
        cfg.lattice.nv_concentration = n;
    }
    cfg.validate()?;
    Ok(())
}

fn simulate(mut cfg: RunConfig, a: SimulateArgs, out: Option<PathBuf>) -> Result<()> {
    apply_concentrations(&mut cfg, &a.conc)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let spec = cfg.lattice_spec();
    let grid = cfg.grid.grid()?;
    let h = simulate_spectrum_with(&spec, &cfg.spin, &cfg.constants, cfg.trials, &grid)?;
    let dir = RunDirectory::create(&run_root(&cfg, out), &cfg)?;
    sample_configuration(&spec)?.write_csv(fs::File::create(dir.root().join("configuration.csv"))?)?;
    dir.write_spectrum("spectrum", &h)?;
    let mut rows = vec![FeatureRow::of("spectrum", &h)];
    if a.broaden {
        let b = apply_mw_broadening(&h, &cfg.microwave.broadening()?)?;
        dir.write_spectrum("spectrum_broadened", &b)?;
        rows.push(FeatureRow::of("spectrum_broadened", &b));
    }
    dir.write_features(&rows)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    dir.write_meta(&RunMeta::new("simulate", &cfg, rows.len(), failed))?;
    eprintln!("wrote {}", dir.root().display());
    Ok(())
}

fn analytic(mut cfg: RunConfig, a: ConcentrationArgs, out: Option<PathBuf>) -> Result<()> {
    apply_concentrations(&mut cfg, &a)?;
    let (n, nv) = (cfg.lattice.n_concentration, cfg.lattice.nv_concentration);
    let p = AnalyticParams::new(n, nv, &cfg.constants);
    p.validate()?;
    let root = run_root(&cfg, out);
    fs::create_dir_all(&root)?;
    let m = cfg.analytic.points;
    let step = 2.0 * cfg.analytic.v_max_mhz / (m - 1) as f64;
    let v: Vec<f64> = (0..m).map(|i| p.d_gs - cfg.analytic.v_max_mhz + i as f64 * step).collect();
    let g1: Vec<f64> = v.iter().map(|&x| lineshape_g1(x, &p)).collect();
    let g2: Vec<f64> = v.iter().map(|&x| lineshape_g2(x, &p)).collect();
    io::write_analytic_csv(&v, &g1, fs::File::create(root.join("g1.csv"))?)?;
    io::write_analytic_csv(&v, &g2, fs::File::create(root.join("g2.csv"))?)?;
    if n > 0.0 {
        let total = lineshape_total(&v, &p)?;
        io::write_analytic_csv(&v, &total, fs::File::create(root.join("total.csv"))?)?;
    }
    let report = ScalingReport::new(scaling_constants(&p), n, nv);
    io::write_json(&report, fs::File::create(root.join("scaling.json"))?)?;
    eprintln!("wrote {}", root.display());
    Ok(())
}

fn read_init(path: &Path) -> Result<OdmrFitModel> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(m) = serde_json::from_str::<OdmrFitModel>(&text) {
        return Ok(m);
    }
    let r: OdmrFitResult = serde_json::from_str(&text)
        .with_context(|| format!("{} is neither a fit model nor a fit result", path.display()))?;
    Ok(r.model)
}

fn fit(cfg: RunConfig, a: FitArgs, out: Option<PathBuf>) -> Result<()> {
    let mut opts = cfg.fit.options();
    if let Some(v) = a.variant {
        opts.variant = v;
    }
    if let Some(p) = &a.init {
        let m = read_init(p)?;
        if m.variant() != opts.variant {
            bail!("--init model is {:?} but the fit variant is {:?}", m.variant(), opts.variant);
        }
        opts.init = Some(m);
    }
    if !a.power.is_empty() && a.power.len() != a.inputs.len() {
        bail!("--power needs one value per input ({} given for {} inputs)", a.power.len(), a.inputs.len());
    }
    let fits: Vec<OdmrFitResult> = a
        .inputs
        .iter()
        .map(|p| {
            let data = io::read_fit_input(p).with_context(|| format!("reading {}", p.display()))?;
            fit_spectrum(&data, &opts).with_context(|| format!("fitting {}", p.display()))
        })
        .collect::<Result<_>>()?;
    if a.inputs.len() == 1 && !a.batch {
        return emit_json(&serde_json::to_value(&fits[0])?, out.as_deref());
    }
    if opts.variant != Variant::Basic {
        bail!("the parameter table holds basic-variant fits only");
    }
    let rows: Vec<FitTableRow> = a
        .inputs
        .iter()
        .zip(&fits)
        .enumerate()
        .map(|(i, (p, f))| {
            let sample = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(FitTableRow::new(&sample, a.power.get(i).copied().unwrap_or(f64::NAN), &f.model)?)
        })
        .collect::<Result<_>>()?;
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            io::write_fit_table(&rows, fs::File::create(&p)?)?
        }
        None => io::write_fit_table(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn charge(mut cfg: RunConfig, a: ChargeArgs, out: Option<PathBuf>) -> Result<()> {
    if let Some(p) = &a.rates {
        cfg.charge.rates = io::read_rate_table(p).with_context(|| format!("reading {}", p.display()))?;
    }
    let root = run_root(&cfg, out);
    fs::create_dir_all(&root)?;
    let sys = &cfg.charge.rates;
    io::write_rate_table(sys, fs::File::create(root.join("rates.toml"))?)?;
    let drives = if a.drive.is_empty() { cfg.sweep.drives_mhz.clone() } else { a.drive.clone() };
    let curve = pipeline::run_charge_curve(sys, &drives)?;
    let mut w = fs::File::create(root.join("charge.csv"))?;
    write_charge_csv(&curve, &mut w)?;
    if let Some(p) = &a.calibrate {
        let measured = io::read_ratio_file(p).with_context(|| format!("reading {}", p.display()))?;
        let pairs: Vec<(f64, f64)> = measured
            .iter()
            .filter(|q| q.power_uw_per_um2 > 0.0)
            .map(|q| (q.power_uw_per_um2, q.nv_minus_fraction))
            .collect();
        let kappa = calibrate_kappa(sys, &pairs)?;
        emit_json(&json!({ "kappa_mhz_per_uw_um2": kappa }), Some(&root.join("kappa.json")))?;
        println!("{kappa}");
    }
    eprintln!("wrote {}", root.display());
    Ok(())
}

fn write_charge_csv(curve: &[pipeline::ChargePoint], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "drive_mhz,nv_minus_ratio")?;
    for c in curve {
        writeln!(w, "{},{}", c.drive_mhz, c.nv_minus_ratio)?;
    }
    Ok(())
}

fn power_sweep(mut cfg: RunConfig, a: PowerArgs, out: Option<PathBuf>) -> Result<()> {
    if a.lindblad {
        cfg.sweep.ratio_source = RatioSourceKind::Lindblad;
    }
    if let Some(p) = a.ratio_csv {
        cfg.sweep.ratio_source = RatioSourceKind::Measured;
        cfg.sweep.ratio_csv = Some(p);
    }
    if let Some(k) = a.kappa {
        cfg.charge.kappa = Some(k);
    }
    cfg.validate()?;
    let source = RatioSource::from_config(&cfg)?;
    let root = run_root(&cfg, out);
    let sweep = pipeline::write_power_run(&cfg, &source, &root)?;
    report_failures(sweep.rows.iter().filter_map(|r| r.error.as_deref()));
    eprintln!("wrote {}", root.display());
    Ok(())
}

fn conc_sweep(cfg: RunConfig, out: Option<PathBuf>) -> Result<()> {
    let root = run_root(&cfg, out);
    let sweep = pipeline::write_concentration_run(&cfg, &root)?;
    report_failures(sweep.rows.iter().filter_map(|r| r.error.as_deref()));
    eprintln!("wrote {}", root.display());
    Ok(())
}

fn report_failures<'a>(errors: impl Iterator<Item = &'a str>) {
    for e in errors {
        eprintln!("warning: {e}");
    }
}

fn pl_ratio(cfg: RunConfig, a: PlArgs, out: Option<PathBuf>) -> Result<()> {
    let (minus, zero) = match (&a.spectrum, a.minus_area, a.zero_area) {
        (Some(p), _, _) => {
            let (wl, i) = io::read_pl_spectrum(fs::File::open(p).with_context(|| format!("reading {}", p.display()))?)?;
            (zpl_area(&wl, &i, a.minus_center, a.half_window)?, zpl_area(&wl, &i, a.zero_center, a.half_window)?)
        }
        (None, Some(m), Some(z)) => (m, z),
        _ => bail!("give --spectrum or both --minus-area and --zero-area"),
    };
    let f = estimate_nv_ratio_from_pl(minus, zero, &cfg.charge.pl)?;
    emit_json(
        &json!({ "zpl_minus_area": minus, "zpl_zero_area": zero, "nv_minus_fraction": f, "calibration": cfg.charge.pl }),
        out.as_deref(),
    )
}

fn sensitivity_cmd(cfg: RunConfig, a: SensitivityArgs, out: Option<PathBuf>) -> Result<()> {
    let (mut width, mut contrast) = (a.width, a.contrast);
    if let Some(p) = &a.fit {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let r: OdmrFitResult = serde_json::from_str(&text)?;
        width = width.or(Some(r.width));
        contrast = contrast.or(Some(r.contrast.abs()));
    }
    let counts = match (a.counts, a.power) {
        (Some(c), _) => c,
        (None, Some(p)) => saturation_counts(p, cfg.counts.k, cfg.counts.p_s)?,
        _ => bail!("give --counts or --power"),
    };
    let (Some(width), Some(contrast)) = (width, contrast) else {
        bail!("give --width and --contrast, or --fit");
    };
    let prefactor = match (a.calibrate_to, a.prefactor) {
        (Some(t), _) => calibrate_prefactor(width, contrast, counts, t)?,
        (None, Some(k)) => k,
        (None, None) => lorentzian_prefactor(),
    };
    let eta = sensitivity(width, contrast, counts, prefactor)?;
    emit_json(
        &json!({
            "width_mhz": width,
            "contrast": contrast,
            "count_rate": counts,
            "prefactor": prefactor,
            "sensitivity_ut_per_sqrt_hz": eta,
        }),
        out.as_deref(),
    )
}

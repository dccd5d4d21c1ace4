//! Run configuration, sweep orchestration, and file emission.
//!
//! A run is described by a [`RunConfig`]: a TOML file, command-line
//! overrides, and built-in defaults, with precedence CLI > file > defaults.
//! Every stochastic quantity derives from `disorder.base_seed` through
//! [`crate::seeding::split_seed`], so re-running a config reproduces its
//! output files byte for byte regardless of the parallelism degree.

use crate::crystal::{
    find_equilibrium, order_parameters, path_alpha, scan_transition, CrystalParams,
    EquilibriumConfiguration, OptimizerOpts, OrderParamSelector, PathDimension, PhasePath,
    StructureReport,
};
use crate::error::{Error, Result};
use crate::network::{apply_disorder_tolerant, build_hessian, make_bath, BathRegion, DisorderAxes, DisorderSpec};
use crate::qep::{solve_qep_with, ModeSet, QepOpts};
use crate::seeding::split_seed;
use crate::transport::{
    central_gradient, conductivity, coordinate_temperatures, covariance, heat_current,
    mode_currents, mode_currents_literal, transverse_ion_temperatures, TemperatureMode,
};
use crate::oracle;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Environment variable holding the default output directory.
pub const OUTPUT_DIR_ENV: &str = "IONHEAT_OUTPUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

/// Exit code for an error, per the two-bucket taxonomy: configuration
/// problems versus numeric/convergence failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidRegion(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_NUMERIC,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Equilibrate,
    Modes,
    Transport,
    SweepLength,
    SweepDisorder,
    Profile,
    ScanTransition,
    OracleCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PathChoice {
    #[serde(rename = "1d")]
    #[value(name = "1d")]
    OneD,
    #[serde(rename = "2d")]
    #[value(name = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    #[value(name = "3d")]
    ThreeD,
}

impl From<PathChoice> for PathDimension {
    fn from(p: PathChoice) -> Self {
        match p {
            PathChoice::OneD => PathDimension::OneD,
            PathChoice::TwoD => PathDimension::TwoD,
            PathChoice::ThreeD => PathDimension::ThreeD,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AxesChoice {
    Xy,
    X,
    Xyz,
}

impl From<AxesChoice> for DisorderAxes {
    fn from(a: AxesChoice) -> Self {
        match a {
            AxesChoice::Xy => DisorderAxes::Xy,
            AxesChoice::X => DisorderAxes::X,
            AxesChoice::Xyz => DisorderAxes::Xyz,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeCurrentVariant {
    /// Partition of the total current (the sum of per-mode values equals
    /// the heat current).
    Partition,
    /// Same-projector inner products; does not partition the total.
    Literal,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CrystalSection {
    pub n_ions: Option<usize>,
    /// Ion numbers for length sweeps.
    pub n_range: Option<Vec<usize>>,
    /// Fixed-structure power-law path supplying alpha(N).
    pub phase_path: Option<PathChoice>,
    /// Explicit aspect ratio; takes precedence over `phase_path`.
    pub alpha: Option<f64>,
    /// Aspect-ratio window for transition scans (scanned descending).
    pub alpha_min: Option<f64>,
    pub alpha_max: Option<f64>,
    pub alpha_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BathSection {
    pub gamma0: f64,
    pub t_left: f64,
    pub t_right: f64,
    pub region_fraction: f64,
    pub temperature_mode: TemperatureMode,
}

impl Default for BathSection {
    fn default() -> Self {
        Self {
            gamma0: 1e-6,
            t_left: 1.1,
            t_right: 0.9,
            region_fraction: 0.1,
            temperature_mode: TemperatureMode::HighT,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DisorderSection {
    /// Disorder strength for single-point experiments.
    pub d: f64,
    /// Disorder strengths for `sweep-disorder`.
    pub d_range: Option<Vec<f64>>,
    pub realizations: usize,
    pub disorder_axes: AxesChoice,
    pub base_seed: u64,
}

impl Default for DisorderSection {
    fn default() -> Self {
        Self {
            d: 0.0,
            d_range: None,
            realizations: 20,
            disorder_axes: AxesChoice::Xy,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { directory: None, formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub crystal: CrystalSection,
    pub bath: BathSection,
    pub disorder: DisorderSection,
    pub output: OutputSection,
    pub mode_current_variant: ModeCurrentVariant,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            crystal: CrystalSection::default(),
            bath: BathSection::default(),
            disorder: DisorderSection::default(),
            output: OutputSection::default(),
            mode_current_variant: ModeCurrentVariant::Partition,
        }
    }
}

/// Command-line overrides; every field beats the config file when present.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Path to a TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_ions: Option<usize>,
    /// Comma-separated ion numbers for length sweeps.
    #[arg(long, value_delimiter = ',')]
    pub n_range: Option<Vec<usize>>,
    #[arg(long)]
    pub phase_path: Option<PathChoice>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub alpha_min: Option<f64>,
    #[arg(long)]
    pub alpha_max: Option<f64>,
    #[arg(long)]
    pub alpha_steps: Option<usize>,
    #[arg(long)]
    pub gamma0: Option<f64>,
    #[arg(long)]
    pub t_left: Option<f64>,
    #[arg(long)]
    pub t_right: Option<f64>,
    #[arg(long)]
    pub region_fraction: Option<f64>,
    #[arg(long)]
    pub temperature_mode: Option<TemperatureMode>,
    #[arg(long)]
    pub d: Option<f64>,
    /// Comma-separated disorder strengths for disorder sweeps.
    #[arg(long, value_delimiter = ',')]
    pub d_range: Option<Vec<f64>>,
    #[arg(long)]
    pub realizations: Option<usize>,
    #[arg(long)]
    pub disorder_axes: Option<AxesChoice>,
    #[arg(long)]
    pub base_seed: Option<u64>,
    /// Output directory (default: $IONHEAT_OUTPUT_DIR, then the cwd).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Comma-separated subset of {csv, json} to emit.
    #[arg(long, value_delimiter = ',')]
    pub formats: Option<Vec<Format>>,
    #[arg(long)]
    pub mode_current_variant: Option<ModeCurrentVariant>,
}

impl RunConfig {
    /// Load from an optional TOML file and apply overrides on top.
    pub fn load(experiment: Experiment, over: &Overrides) -> Result<Self> {
        let mut cfg = match &over.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                toml::from_str::<RunConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        cfg.experiment = Some(experiment);
        macro_rules! take {
            ($($dst:expr, $src:expr);* $(;)?) => {
                $(if let Some(v) = $src.clone() { $dst = v.into(); })*
            };
        }
        take! {
            cfg.crystal.n_ions, over.n_ions.map(Some);
            cfg.crystal.n_range, over.n_range.as_ref().map(|v| Some(v.clone()));
            cfg.crystal.phase_path, over.phase_path.map(Some);
            cfg.crystal.alpha, over.alpha.map(Some);
            cfg.crystal.alpha_min, over.alpha_min.map(Some);
            cfg.crystal.alpha_max, over.alpha_max.map(Some);
            cfg.crystal.alpha_steps, over.alpha_steps.map(Some);
            cfg.bath.gamma0, over.gamma0;
            cfg.bath.t_left, over.t_left;
            cfg.bath.t_right, over.t_right;
            cfg.bath.region_fraction, over.region_fraction;
            cfg.bath.temperature_mode, over.temperature_mode;
            cfg.disorder.d, over.d;
            cfg.disorder.d_range, over.d_range.as_ref().map(|v| Some(v.clone()));
            cfg.disorder.realizations, over.realizations;
            cfg.disorder.disorder_axes, over.disorder_axes;
            cfg.disorder.base_seed, over.base_seed;
            cfg.output.directory, over.output_dir.as_ref().map(|p| Some(p.clone()));
            cfg.output.formats, over.formats.as_ref().map(|v| v.clone());
            cfg.mode_current_variant, over.mode_current_variant;
        }
        Ok(cfg)
    }

    fn n_ions(&self) -> Result<usize> {
        self.crystal
            .n_ions
            .ok_or_else(|| Error::Config("crystal.n_ions is required for this experiment".into()))
    }

    /// Aspect ratio: explicit alpha wins, otherwise the phase path at N.
    fn alpha_for(&self, n: usize) -> Result<f64> {
        if let Some(a) = self.crystal.alpha {
            return Ok(a);
        }
        match self.crystal.phase_path {
            Some(p) => Ok(path_alpha(PhasePath::builtin(p.into()), n)),
            None => Err(Error::Config(
                "set crystal.alpha or crystal.phase_path to fix the aspect ratio".into(),
            )),
        }
    }

    fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

/// Full-precision decimal rendering; round-trips f64 exactly.
fn sig17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Config(format!("serialization failed: {e}")))
}

/// One fully solved steady-state point of a sweep.
struct PointResult {
    config: EquilibriumConfiguration,
    modes: ModeSet,
    v_diag: Vec<f64>,
    q_dot: f64,
    /// None when t_left == t_right (conductivity undefined at zero bias).
    kappa: Option<f64>,
    /// None when t_left == t_right (no imposed gradient to normalize by).
    gradient: Option<f64>,
    ion_temps: Vec<f64>,
    seed: u64,
}

/// Solve one (N, alpha, d) point end to end. All randomness (equilibrium
/// search, disorder draw) derives from `seed`.
fn run_point(cfg: &RunConfig, n: usize, alpha: f64, d: f64, seed: u64) -> Result<PointResult> {
    let params = CrystalParams::new(n, alpha)?;
    let opts = OptimizerOpts::default();
    let config = find_equilibrium(&params, split_seed(seed, 0, 0), &opts)?;
    let mut v = build_hessian(&params, &config)?;
    if d > 0.0 {
        let spec = DisorderSpec::draw(d, split_seed(seed, 1, 0), n, cfg.disorder.disorder_axes.into());
        // Tolerate the handful of soft directions the pinning kicks tip
        // negative on planar/helical crystals; the runaway modes are dropped
        // from the steady state downstream.
        v = apply_disorder_tolerant(&v, &spec)?.0;
    }
    let bath = make_bath(
        cfg.bath.gamma0,
        cfg.bath.t_left,
        cfg.bath.t_right,
        BathRegion::Fraction(cfg.bath.region_fraction),
        n,
    )?;
    // The two transverse center-of-mass modes sit at frequency alpha in any
    // crystal; when x and y share one connected component (zigzag, helical)
    // that exact degeneracy trips the simple-pole residue solver, so the
    // seeded jitter retry is always armed. The jitter (or disorder) can tip
    // the rotational soft mode marginally unstable; such modes are excluded
    // from the steady state downstream.
    let qep_opts = QepOpts {
        jitter_seed: Some(split_seed(seed, 2, 0)),
        allow_unstable: true,
        ..QepOpts::default()
    };
    let modes = solve_qep_with(&v, &bath, &qep_opts)?;
    let q_dot = heat_current(&modes, &bath)?;
    let biased = cfg.bath.t_left != cfg.bath.t_right;
    let kappa = if biased {
        Some(conductivity(q_dot, config.length(), cfg.bath.t_left, cfg.bath.t_right)?)
    } else {
        None
    };
    let cov = covariance(&modes, &bath)?;
    let pp_diag: Vec<f64> = cov.pp.diag().to_vec();
    let v_diag: Vec<f64> = v.matrix().diag().to_vec();
    let coord_temps = coordinate_temperatures(&pp_diag, &v_diag, cfg.bath.temperature_mode)?;
    let ion_temps = transverse_ion_temperatures(&coord_temps, n);
    let zs: Vec<f64> = config.positions.iter().map(|p| p[2]).collect();
    let gradient = if biased {
        Some(central_gradient(&ion_temps, &zs, cfg.bath.t_left, cfg.bath.t_right)?)
    } else {
        None
    };
    Ok(PointResult { config, modes, v_diag, q_dot, kappa, gradient, ion_temps, seed })
}

#[derive(Serialize)]
struct EquilibriumRecord {
    n_ions: usize,
    alpha: f64,
    seed: u64,
    configuration: EquilibriumConfiguration,
    report: StructureReport,
}

#[derive(Serialize)]
struct ModeCurrentRecord {
    index: usize,
    re_omega: f64,
    current: f64,
}

#[derive(Serialize)]
struct TransportRecord {
    n_ions: usize,
    alpha: f64,
    d: f64,
    seed: u64,
    q_dot: f64,
    kappa: Option<f64>,
    length: f64,
    mode_current_variant: ModeCurrentVariant,
    mode_currents: Vec<ModeCurrentRecord>,
}

#[derive(Serialize)]
struct OracleEntry {
    quantity: String,
    residue_value: f64,
    quadrature_value: f64,
    relative_deviation: f64,
}

#[derive(Serialize)]
struct OracleReport {
    n_ions: usize,
    alpha: f64,
    gamma0: f64,
    t_left: f64,
    t_right: f64,
    seed: u64,
    entries: Vec<OracleEntry>,
    max_relative_deviation: f64,
}

struct SweepRow {
    n: usize,
    length: f64,
    d: f64,
    realization: usize,
    kappa: f64,
    gradient: f64,
    seed: u64,
}

fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("N,L,d,realization,kappa,central_gradient,seed\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n,
            sig17(r.length),
            sig17(r.d),
            r.realization,
            sig17(r.kappa),
            sig17(r.gradient),
            r.seed
        );
    }
    out
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Summary rows grouped by sweep point, in sweep order.
fn sweep_summary_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "N,L,d,realizations,kappa_mean,kappa_std,central_gradient_mean,central_gradient_std\n",
    );
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        while j < rows.len() && rows[j].n == rows[i].n && rows[j].d == rows[i].d {
            j += 1;
        }
        let group = &rows[i..j];
        let (km, ks) = mean_std(&group.iter().map(|r| r.kappa).collect::<Vec<_>>());
        let (gm, gs) = mean_std(&group.iter().map(|r| r.gradient).collect::<Vec<_>>());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            group[0].n,
            sig17(group[0].length),
            sig17(group[0].d),
            group.len(),
            sig17(km),
            sig17(ks),
            sig17(gm),
            sig17(gs)
        );
        i = j;
    }
    out
}

/// Run the ensemble for a list of sweep points; realizations execute in a
/// work pool but rows are emitted in (sweep_index, realization) order.
fn run_sweep(cfg: &RunConfig, points: &[(usize, f64, f64)]) -> Result<Vec<SweepRow>> {
    let reals = cfg.disorder.realizations.max(1);
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|si| (0..reals).map(move |ri| (si, ri)))
        .collect();
    let results: Vec<Result<SweepRow>> = jobs
        .par_iter()
        .map(|&(si, ri)| {
            let (n, alpha, d) = points[si];
            let seed = split_seed(cfg.disorder.base_seed, si as u64, ri as u64);
            let point = run_point(cfg, n, alpha, d, seed)?;
            let (kappa, gradient) = point.kappa.zip(point.gradient).ok_or_else(|| {
                Error::Config("sweeps require t_left != t_right".into())
            })?;
            Ok(SweepRow {
                n,
                length: point.config.length(),
                d,
                realization: ri,
                kappa,
                gradient,
                seed,
            })
        })
        .collect();
    results.into_iter().collect()
}

fn emit_sweep(cfg: &RunConfig, rows: &[SweepRow], emitted: &mut Vec<PathBuf>) -> Result<()> {
    let dir = cfg.output_dir();
    if cfg.wants(Format::Csv) {
        emitted.push(write_file(&dir, "sweep.csv", &sweep_csv(rows))?);
        emitted.push(write_file(&dir, "sweep_summary.csv", &sweep_summary_csv(rows))?);
    }
    Ok(())
}

/// Least-squares power law y = c * x^beta in log-log space.
/// Returns (c, beta, r_squared).
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::FitError(format!(
            "need at least 2 paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0 || !v.is_finite()) {
        return Err(Error::FitError("power-law fit requires positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let xbar = lx.iter().sum::<f64>() / n;
    let ybar = ly.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in lx.iter().zip(&ly) {
        sxy += (x - xbar) * (y - ybar);
        sxx += (x - xbar) * (x - xbar);
        syy += (y - ybar) * (y - ybar);
    }
    if sxx == 0.0 {
        return Err(Error::FitError("all x values coincide".into()));
    }
    let beta = sxy / sxx;
    let c = (ybar - beta * xbar).exp();
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((c, beta, r2))
}

/// Execute a run; returns the paths of every emitted file.
pub fn run(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let experiment = cfg
        .experiment
        .ok_or_else(|| Error::Config("no experiment selected".into()))?;
    if cfg.output.formats.is_empty() {
        return Err(Error::Config("output.formats must not be empty".into()));
    }
    let dir = cfg.output_dir();
    let mut emitted = Vec::new();
    match experiment {
        Experiment::Equilibrate => {
            let n = cfg.n_ions()?;
            let alpha = cfg.alpha_for(n)?;
            let seed = cfg.disorder.base_seed;
            let params = CrystalParams::new(n, alpha)?;
            let config =
                find_equilibrium(&params, split_seed(seed, 0, 0), &OptimizerOpts::default())?;
            let report = order_parameters(&config);
            if cfg.wants(Format::Json) {
                let rec = EquilibriumRecord { n_ions: n, alpha, seed, configuration: config, report };
                emitted.push(write_file(&dir, "equilibrium.json", &to_json(&rec)?)?);
            }
        }
        Experiment::Modes => {
            let n = cfg.n_ions()?;
            let alpha = cfg.alpha_for(n)?;
            let seed = cfg.disorder.base_seed;
            let point = run_point(cfg, n, alpha, cfg.disorder.d, seed)?;
            if cfg.wants(Format::Csv) {
                let mut out = String::from("index,re_omega,im_omega,damping_rate\n");
                for g in 0..point.modes.len() {
                    let s = point.modes.eigenvalue(g);
                    let w = point.modes.frequency(g);
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        g,
                        sig17(w.re),
                        sig17(w.im),
                        sig17(-s.re)
                    );
                }
                emitted.push(write_file(&dir, "modes.csv", &out)?);
            }
        }
        Experiment::Transport => {
            let n = cfg.n_ions()?;
            let alpha = cfg.alpha_for(n)?;
            let seed = cfg.disorder.base_seed;
            let point = run_point(cfg, n, alpha, cfg.disorder.d, seed)?;
            let bath = make_bath(
                cfg.bath.gamma0,
                cfg.bath.t_left,
                cfg.bath.t_right,
                BathRegion::Fraction(cfg.bath.region_fraction),
                n,
            )?;
            let per_mode = match cfg.mode_current_variant {
                ModeCurrentVariant::Partition => mode_currents(&point.modes, &bath)?,
                ModeCurrentVariant::Literal => mode_currents_literal(&point.modes, &bath)?,
            };
            let mode_records = per_mode
                .iter()
                .enumerate()
                .map(|(g, &q)| ModeCurrentRecord {
                    index: g,
                    re_omega: point.modes.frequency(g).re,
                    current: q,
                })
                .collect();
            if cfg.wants(Format::Json) {
                let rec = TransportRecord {
                    n_ions: n,
                    alpha,
                    d: cfg.disorder.d,
                    seed,
                    q_dot: point.q_dot,
                    kappa: point.kappa,
                    length: point.config.length(),
                    mode_current_variant: cfg.mode_current_variant,
                    mode_currents: mode_records,
                };
                emitted.push(write_file(&dir, "transport.json", &to_json(&rec)?)?);
            }
        }
        Experiment::Profile => {
            let n = cfg.n_ions()?;
            let alpha = cfg.alpha_for(n)?;
            let seed = cfg.disorder.base_seed;
            let point = run_point(cfg, n, alpha, cfg.disorder.d, seed)?;
            if cfg.wants(Format::Csv) {
                let mut out = String::from("ion,z,temperature\n");
                for (i, (&t, p)) in
                    point.ion_temps.iter().zip(&point.config.positions).enumerate()
                {
                    let _ = writeln!(out, "{},{},{}", i, sig17(p[2]), sig17(t));
                }
                emitted.push(write_file(&dir, "profile.csv", &out)?);
            }
        }
        Experiment::SweepLength => {
            let ns = cfg
                .crystal
                .n_range
                .clone()
                .ok_or_else(|| Error::Config("crystal.n_range is required for sweep-length".into()))?;
            let mut points = Vec::with_capacity(ns.len());
            for &n in &ns {
                points.push((n, cfg.alpha_for(n)?, cfg.disorder.d));
            }
            let rows = run_sweep(cfg, &points)?;
            emit_sweep(cfg, &rows, &mut emitted)?;
        }
        Experiment::SweepDisorder => {
            let n = cfg.n_ions()?;
            let alpha = cfg.alpha_for(n)?;
            let ds = cfg
                .disorder
                .d_range
                .clone()
                .ok_or_else(|| Error::Config("disorder.d_range is required for sweep-disorder".into()))?;
            let points: Vec<(usize, f64, f64)> = ds.iter().map(|&d| (n, alpha, d)).collect();
            let rows = run_sweep(cfg, &points)?;
            emit_sweep(cfg, &rows, &mut emitted)?;
        }
        Experiment::ScanTransition => {
            let n = cfg.n_ions()?;
            // Default window: from just above the 1D path (linear chain) down
            // past the 3D path, so the scan crosses the 1D -> 2D transition.
            let hi = cfg.crystal.alpha_max.unwrap_or_else(|| {
                1.1 * path_alpha(PhasePath::builtin(PathDimension::OneD), n)
            });
            let lo = cfg
                .crystal
                .alpha_min
                .unwrap_or_else(|| path_alpha(PhasePath::builtin(PathDimension::ThreeD), n));
            if !(hi > lo && lo > 0.0) {
                return Err(Error::Config(format!(
                    "invalid scan window: alpha_min {lo}, alpha_max {hi}"
                )));
            }
            let steps = cfg.crystal.alpha_steps.unwrap_or(40).max(2);
            let alphas: Vec<f64> = (0..steps)
                .map(|i| hi + (lo - hi) * i as f64 / (steps - 1) as f64)
                .collect();
            let scan = scan_transition(
                n,
                &alphas,
                OrderParamSelector::Radius,
                cfg.disorder.base_seed,
                &OptimizerOpts::default(),
            )?;
            if cfg.wants(Format::Csv) {
                let mut out = String::from("alpha,R,Delta,mean_azimuthal_step,phase\n");
                for p in &scan.points {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{}",
                        sig17(p.alpha),
                        sig17(p.report.radius),
                        sig17(p.report.min_z_gap),
                        sig17(p.report.mean_azimuthal_step),
                        p.report.phase
                    );
                }
                emitted.push(write_file(&dir, "scan.csv", &out)?);
            }
        }
        Experiment::OracleCheck => {
            let n = cfg.n_ions()?;
            let alpha = cfg.alpha_for(n)?;
            let seed = cfg.disorder.base_seed;
            let point = run_point(cfg, n, alpha, cfg.disorder.d, seed)?;
            let rec = oracle_check(cfg, n, alpha, &point)?;
            if cfg.wants(Format::Json) {
                emitted.push(write_file(&dir, "oracle_report.json", &to_json(&rec)?)?);
            }
        }
    }
    Ok(emitted)
}

/// Compare the residue-expansion results against direct frequency quadrature
/// on the same system.
fn oracle_check(cfg: &RunConfig, n: usize, alpha: f64, point: &PointResult) -> Result<OracleReport> {
    let params = CrystalParams::new(n, alpha)?;
    let mut v = build_hessian(&params, &point.config)?;
    if cfg.disorder.d > 0.0 {
        let spec = DisorderSpec::draw(
            cfg.disorder.d,
            split_seed(point.seed, 1, 0),
            n,
            cfg.disorder.disorder_axes.into(),
        );
        v = apply_disorder_tolerant(&v, &spec)?.0;
    }
    let bath = make_bath(
        cfg.bath.gamma0,
        cfg.bath.t_left,
        cfg.bath.t_right,
        BathRegion::Fraction(cfg.bath.region_fraction),
        n,
    )?;
    let spec = oracle::QuadratureSpec::default();

    let mut entries = Vec::new();
    let rel = |a: f64, b: f64| {
        let scale = a.abs().max(b.abs());
        if scale == 0.0 {
            0.0
        } else {
            (a - b).abs() / scale
        }
    };

    let q_quad = oracle::quad_heat_current(&v, &bath, &spec, TemperatureMode::HighT)?;
    entries.push(OracleEntry {
        quantity: "heat_current".into(),
        residue_value: point.q_dot,
        quadrature_value: q_quad,
        relative_deviation: rel(point.q_dot, q_quad),
    });

    let cov = covariance(&point.modes, &bath)?;
    // Matrix blocks are compared in max-norm; only coordinates of fully
    // damped blocks reach a steady state, so undamped blocks are skipped.
    let damped: Vec<usize> = point
        .modes
        .components()
        .iter()
        .filter(|c| c.damped)
        .flat_map(|c| c.coords.iter().copied())
        .collect();
    for (name, block, j, k) in [
        ("covariance_xx", &cov.xx, 0u32, 0u32),
        ("covariance_xp", &cov.xp, 0, 1),
        ("covariance_pp", &cov.pp, 1, 1),
    ] {
        let quad = oracle::quad_covariance(&v, &bath, &spec, j, k)?;
        let mut num = 0.0_f64;
        let mut den = 0.0_f64;
        for &a in &damped {
            for &b in &damped {
                num = num.max((block[[a, b]] - quad[[a, b]]).abs());
                den = den.max(block[[a, b]].abs().max(quad[[a, b]].abs()));
            }
        }
        let dev = if den == 0.0 { 0.0 } else { num / den };
        let max_res = damped.iter().fold(0.0_f64, |m, &a| {
            damped.iter().fold(m, |m, &b| m.max(block[[a, b]].abs()))
        });
        let max_quad = damped.iter().fold(0.0_f64, |m, &a| {
            damped.iter().fold(m, |m, &b| m.max(quad[[a, b]].abs()))
        });
        entries.push(OracleEntry {
            quantity: name.into(),
            residue_value: max_res,
            quadrature_value: max_quad,
            relative_deviation: dev,
        });
    }
    // The high-T transport temperatures are the pp diagonal directly; check
    // the hottest ion reading against the quadrature pp block.
    let quad_pp = oracle::quad_covariance(&v, &bath, &spec, 1, 1)?;
    let pp_diag: Vec<f64> = quad_pp.diag().to_vec();
    let temps_quad = coordinate_temperatures(&pp_diag, &point.v_diag, TemperatureMode::HighT)?;
    let ion_quad = transverse_ion_temperatures(&temps_quad, n);
    let mut tdev = 0.0_f64;
    for (a, b) in point.ion_temps.iter().zip(&ion_quad) {
        tdev = tdev.max(rel(*a, *b));
    }
    entries.push(OracleEntry {
        quantity: "ion_temperatures".into(),
        residue_value: point.ion_temps.iter().cloned().fold(f64::NAN, f64::max),
        quadrature_value: ion_quad.iter().cloned().fold(f64::NAN, f64::max),
        relative_deviation: tdev,
    });

    let max_dev = entries.iter().fold(0.0_f64, |m, e| m.max(e.relative_deviation));
    Ok(OracleReport {
        n_ions: n,
        alpha,
        gamma0: cfg.bath.gamma0,
        t_left: cfg.bath.t_left,
        t_right: cfg.bath.t_right,
        seed: point.seed,
        entries,
        max_relative_deviation: max_dev,
    })
}

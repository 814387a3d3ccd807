//! Command-line front end: single runs, force sweeps, reference curves and
//! re-runs from a manifest. Every command writes CSV tables with a one-line
//! header plus a `manifest.json` that is sufficient to repeat the run.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_esaki_tsu, force_grid, peak_location, EsakiTsuFit, ForceSweep, SweepEntry};
use crate::lattice::{thermal_state, Basis, DensityMatrix, InverseTemperature, LatticeConfig};
use crate::observables::{coherence_profile, mean_velocity, momentum_distribution};
use crate::oracles::{
    esaki_tsu_velocity, simple_relaxation_stationary, sink_stationary_distribution,
    thermal_prefactor, EsakiTsuParams,
};
use crate::propagator::{
    default_dt, propagate, steady_state_with, ConvergenceReport, PropagationSpec,
};
use crate::relaxation::{ModelName, RelaxationModel};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(
    name = "tilted-lattice",
    version,
    about = "Dissipative transport on a tilted tight-binding ring"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Propagate one configuration and write its trajectory.
    Simulate(SimulateArgs),
    /// Steady drift velocity over a grid of forces.
    Sweep(SweepArgs),
    /// Write closed-form reference curves.
    Oracle(OracleArgs),
    /// Repeat a run described by a manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct LatticeArgs {
    /// Number of sites on the ring.
    #[arg(long = "L", default_value_t = 64)]
    pub sites: usize,
    /// Hopping amplitude J; the band is -J cos k.
    #[arg(long = "J", default_value_t = 1.0)]
    pub hopping: f64,
    /// Relaxation rate.
    #[arg(long, default_value_t = 0.04)]
    pub gamma: f64,
    /// J/k_BT, a number or "inf".
    #[arg(long = "betaJ", default_value = "inf")]
    pub beta_j: InverseTemperature,
    #[arg(long, value_enum, default_value_t = ModelName::Sink)]
    pub model: ModelName,
    /// Integration step; defaults to 0.02 of the fastest time scale.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

impl LatticeArgs {
    fn config(&self, force: f64) -> Result<LatticeConfig> {
        let beta = match self.beta_j {
            InverseTemperature::Infinite => InverseTemperature::Infinite,
            InverseTemperature::Finite(bj) => InverseTemperature::from_beta_j(bj, self.hopping),
        };
        LatticeConfig::new(self.sites, self.hopping, force, self.gamma, beta)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    /// Static force.
    #[arg(long = "F", default_value_t = 0.2)]
    pub force: f64,
    /// Propagation time; defaults to 10/γ, or two Bloch periods without damping.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Steps between trajectory rows.
    #[arg(long)]
    pub record_stride: Option<usize>,
    /// Take distribution and coherences from the period-averaged steady state.
    #[arg(long)]
    pub steady: bool,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl GridSpec {
    pub fn parse(text: &str, spacing: Spacing) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::Usage(format!("force grid '{text}' is not start:stop:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start = parts[0].trim().parse().map_err(|_| bad())?;
        let stop = parts[1].trim().parse().map_err(|_| bad())?;
        let count = parts[2].trim().parse().map_err(|_| bad())?;
        let grid = Self {
            start,
            stop,
            count,
            spacing,
        };
        grid.values()?;
        Ok(grid)
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        force_grid(
            self.start,
            self.stop,
            self.count,
            self.spacing == Spacing::Log,
        )
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub lattice: LatticeArgs,
    /// Forces as start:stop:count.
    #[arg(long = "F-grid", default_value = "0.01:0.8:12")]
    pub force_grid: String,
    #[arg(long = "F-spacing", value_enum, default_value_t = Spacing::Log)]
    pub spacing: Spacing,
    /// Fit the sweep to the Esaki-Tsu form and write fit.json.
    #[arg(long)]
    pub fit: bool,
    /// Concurrent force points; defaults to the available cores.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Drift velocity against force.
    EsakiTsu,
    /// Stationary quasimomentum density of the ground-sink model.
    Eq12,
    /// Stationary single-rate matrix in the Wannier-Stark basis.
    Eq4,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(value_enum)]
    pub kind: OracleKind,
    #[command(flatten)]
    pub lattice: LatticeArgs,
    #[arg(long = "F", default_value_t = 0.2)]
    pub force: f64,
    /// Forces for the velocity curve, start:stop:count.
    #[arg(long = "F-grid", default_value = "0.001:1:1000")]
    pub force_grid: String,
    #[arg(long = "F-spacing", value_enum, default_value_t = Spacing::Linear)]
    pub spacing: Spacing,
    /// Samples of the density over [0, 2π].
    #[arg(long, default_value_t = 2001)]
    pub points: usize,
}

#[derive(Debug, Clone, Args)]
pub struct RerunArgs {
    /// Manifest written by an earlier run.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory; defaults to the manifest's directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved parameters of one command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Plan {
    Simulate {
        propagation: PropagationSpec,
        steady: bool,
        tolerance: f64,
    },
    Sweep {
        grid: GridSpec,
        fit: bool,
        workers: usize,
        tolerance: f64,
        dt: Option<f64>,
    },
    Oracle {
        kind: OracleKind,
        grid: GridSpec,
        points: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub plan: Plan,
    pub config: LatticeConfig,
    pub model: ModelName,
    pub convergence: Vec<ConvergenceReport>,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_table(
    dir: &Path,
    name: &str,
    header: &str,
    rows: &[String],
    outputs: &mut Vec<String>,
) -> Result<()> {
    let mut text = String::with_capacity(64 * (rows.len() + 1));
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    fs::write(dir.join(name), text)?;
    outputs.push(name.to_string());
    Ok(())
}

fn distribution_rows(rho: &DensityMatrix) -> Result<Vec<String>> {
    let p = momentum_distribution(rho)?;
    Ok(p.populations
        .iter()
        .enumerate()
        .map(|(k, x)| format!("{k},{},{}", fmt(p.quasimomentum(k)), fmt(*x)))
        .collect())
}

fn coherence_rows(rho: &DensityMatrix) -> Result<Vec<String>> {
    let profile = coherence_profile(&rho.to_basis(Basis::Wannier))?;
    Ok(profile
        .iter()
        .map(|c| {
            format!(
                "{},{},{},{}",
                c.offset,
                fmt(c.value.re),
                fmt(c.value.im),
                fmt(c.value.norm())
            )
        })
        .collect())
}

const DISTRIBUTION_HEADER: &str = "k_index,quasimomentum,population";

pub fn run(cli: Cli) -> Result<RunManifest> {
    match cli.command {
        Command::Simulate(args) => {
            let config = args.lattice.config(args.force)?;
            let dt = args.lattice.dt.unwrap_or_else(|| default_dt(&config));
            let t_final = match args.t_final {
                Some(t) => t,
                None if config.gamma > 0.0 => 10.0 / config.gamma,
                None if config.force != 0.0 => 2.0 * config.bloch_period().abs(),
                None => 100.0,
            };
            let mut propagation = PropagationSpec::stroboscopic(&config, dt, t_final)?;
            if let Some(stride) = args.record_stride {
                propagation.record_stride = stride;
            }
            let plan = Plan::Simulate {
                propagation,
                steady: args.steady,
                tolerance: args.tol,
            };
            execute(&plan, &config, args.lattice.model, &args.lattice.out)
        }
        Command::Sweep(args) => {
            let config = args.lattice.config(0.0)?;
            let grid = GridSpec::parse(&args.force_grid, args.spacing)?;
            let plan = Plan::Sweep {
                grid,
                fit: args.fit,
                workers: args
                    .workers
                    .unwrap_or_else(rayon::current_num_threads)
                    .max(1),
                tolerance: args.tol,
                dt: args.lattice.dt,
            };
            execute(&plan, &config, args.lattice.model, &args.lattice.out)
        }
        Command::Oracle(args) => {
            let config = args.lattice.config(args.force)?;
            let plan = Plan::Oracle {
                kind: args.kind,
                grid: GridSpec::parse(&args.force_grid, args.spacing)?,
                points: args.points,
            };
            execute(&plan, &config, args.lattice.model, &args.lattice.out)
        }
        Command::Rerun(args) => {
            let manifest = RunManifest::load(&args.manifest)?;
            let out = match args.out {
                Some(dir) => dir,
                None => args
                    .manifest
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from(".")),
            };
            execute(&manifest.plan, &manifest.config, manifest.model, &out)
        }
    }
}

/// Runs a resolved plan and writes its outputs and manifest into `out`.
pub fn execute(
    plan: &Plan,
    config: &LatticeConfig,
    model: ModelName,
    out: &Path,
) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let clock = Instant::now();
    let mut outputs = Vec::new();
    let convergence = match plan {
        Plan::Simulate {
            propagation,
            steady,
            tolerance,
        } => simulate(
            config,
            model,
            propagation,
            *steady,
            *tolerance,
            out,
            &mut outputs,
        )?,
        Plan::Sweep {
            grid,
            fit,
            workers,
            tolerance,
            dt,
        } => sweep(
            config,
            model,
            grid,
            *fit,
            *workers,
            *tolerance,
            *dt,
            out,
            &mut outputs,
        )?,
        Plan::Oracle { kind, grid, points } => {
            oracle(config, *kind, grid, *points, out, &mut outputs)?;
            Vec::new()
        }
    };
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        plan: plan.clone(),
        config: *config,
        model,
        convergence,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        outputs,
    };
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn simulate(
    config: &LatticeConfig,
    model: ModelName,
    propagation: &PropagationSpec,
    steady: bool,
    tolerance: f64,
    out: &Path,
    outputs: &mut Vec<String>,
) -> Result<Vec<ConvergenceReport>> {
    let relaxation = RelaxationModel::from_name(model, config)?;
    let rho0 = thermal_state(config);
    let trajectory = propagate(&rho0, propagation, config, &relaxation)?;
    let rows: Vec<String> = trajectory
        .times
        .iter()
        .zip(&trajectory.mean_velocity)
        .zip(&trajectory.purity)
        .map(|((t, v), p)| format!("{},{},{}", fmt(*t), fmt(*v), fmt(*p)))
        .collect();
    write_table(out, "trajectory.csv", "t,v_mean,purity", &rows, outputs)?;

    let (state, reports) = if steady {
        let s = steady_state_with(
            &rho0,
            config,
            &relaxation,
            tolerance,
            Some(propagation.step_size()),
        )?;
        (s.state, vec![s.report])
    } else {
        (trajectory.final_state, Vec::new())
    };
    write_table(
        out,
        "distribution.csv",
        DISTRIBUTION_HEADER,
        &distribution_rows(&state)?,
        outputs,
    )?;
    write_table(
        out,
        "coherence.csv",
        "offset,re,im,abs",
        &coherence_rows(&state)?,
        outputs,
    )?;
    Ok(reports)
}

struct SweepPoint {
    force: f64,
    velocity: f64,
    converged: bool,
    state: Option<DensityMatrix>,
    report: Option<ConvergenceReport>,
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    config: &LatticeConfig,
    model: ModelName,
    grid: &GridSpec,
    fit: bool,
    workers: usize,
    tolerance: f64,
    dt: Option<f64>,
    out: &Path,
    outputs: &mut Vec<String>,
) -> Result<Vec<ConvergenceReport>> {
    let forces = grid.values()?;
    let solve = |force: f64| -> Result<SweepPoint> {
        let point = config.with_force(force);
        let relaxation = RelaxationModel::from_name(model, &point)?;
        match steady_state_with(&thermal_state(&point), &point, &relaxation, tolerance, dt) {
            Ok(s) => Ok(SweepPoint {
                force,
                velocity: mean_velocity(&s.state, point.hopping)?,
                converged: true,
                state: Some(s.state),
                report: Some(s.report),
            }),
            Err(Error::Convergence { elapsed, .. }) => {
                warn!("F = {force}: no steady state after t = {elapsed}");
                Ok(SweepPoint {
                    force,
                    velocity: f64::NAN,
                    converged: false,
                    state: None,
                    report: None,
                })
            }
            Err(e) => Err(e),
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    let points: Vec<SweepPoint> = pool.install(|| {
        forces
            .par_iter()
            .map(|&f| {
                info!("sweep point F = {f}");
                solve(f)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let rows: Vec<String> = points
        .iter()
        .map(|p| format!("{},{},{}", fmt(p.force), fmt(p.velocity), p.converged))
        .collect();
    write_table(out, "sweep.csv", "F,v_steady,converged", &rows, outputs)?;
    for (i, p) in points.iter().enumerate() {
        if let Some(state) = &p.state {
            let name = format!("distribution_F{i:03}.csv");
            write_table(
                out,
                &name,
                DISTRIBUTION_HEADER,
                &distribution_rows(state)?,
                outputs,
            )?;
        }
    }
    if fit {
        let sweep = ForceSweep::new(
            points
                .iter()
                .map(|p| SweepEntry {
                    force: p.force,
                    velocity: if p.converged { p.velocity } else { 0.0 },
                    converged: p.converged,
                })
                .collect(),
        )?;
        let summary = FitSummary {
            fit: fit_esaki_tsu(&sweep)?,
            peak: peak_location(&sweep).ok().map(|(f, v)| Peak {
                force: f,
                velocity: v,
            }),
            predicted_peak_velocity: 0.5
                * config.hopping
                * thermal_prefactor(config.beta, config.hopping)?,
        };
        fs::write(
            out.join("fit.json"),
            serde_json::to_string_pretty(&summary)?,
        )?;
        outputs.push("fit.json".into());
    }
    Ok(points.into_iter().filter_map(|p| p.report).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Peak {
    pub force: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub fit: EsakiTsuFit,
    /// Interpolated sample maximum, absent for monotone data.
    pub peak: Option<Peak>,
    /// `J f(β) / 2`.
    pub predicted_peak_velocity: f64,
}

fn oracle(
    config: &LatticeConfig,
    kind: OracleKind,
    grid: &GridSpec,
    points: usize,
    out: &Path,
    outputs: &mut Vec<String>,
) -> Result<()> {
    match kind {
        OracleKind::EsakiTsu => {
            let params = EsakiTsuParams::for_config(config)?;
            let rows = grid
                .values()?
                .into_iter()
                .map(|f| {
                    Ok(format!(
                        "{},{}",
                        fmt(f),
                        fmt(esaki_tsu_velocity(f, &params)?)
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            write_table(out, "esaki_tsu.csv", "F,v", &rows, outputs)
        }
        OracleKind::Eq12 => {
            if points < 2 {
                return Err(Error::Usage("need at least 2 points".into()));
            }
            let rows = (0..points)
                .map(|i| {
                    let k = 2.0 * std::f64::consts::PI * i as f64 / (points - 1) as f64;
                    let (kk, force) = if config.force < 0.0 {
                        (2.0 * std::f64::consts::PI - k, -config.force)
                    } else {
                        (k, config.force)
                    };
                    Ok(format!(
                        "{},{}",
                        fmt(k),
                        fmt(sink_stationary_distribution(kk, force, config.gamma)?)
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            write_table(out, "eq12.csv", "k,density", &rows, outputs)
        }
        OracleKind::Eq4 => {
            let stationary = simple_relaxation_stationary(config)?;
            let mut rows = Vec::with_capacity(config.sites * config.sites);
            for ((m, mp), z) in stationary.matrix.indexed_iter() {
                let z: &Complex64 = z;
                let mut row = String::new();
                write!(row, "{m},{mp},{},{}", fmt(z.re), fmt(z.im)).expect("string write");
                rows.push(row);
            }
            write_table(out, "eq4.csv", "m,m_prime,re,im", &rows, outputs)?;
            let v = mean_velocity(&stationary.to_bloch()?, config.hopping)?;
            fs::write(out.join("eq4_velocity.txt"), format!("{}\n", fmt(v)))?;
            outputs.push("eq4_velocity.txt".into());
            Ok(())
        }
    }
}

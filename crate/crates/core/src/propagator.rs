//! Runge-Kutta integration of the master equation in the comoving gauge
//! frame, where the coherent part is diagonal, plus steady-state search by
//! Bloch-period averaging.
//!
//! The state is held as gauge-frame components `ρ̃_{qp}` on the basis
//! `χ_q(t)_l = L^{-1/2} exp(i(2πq/L + F t) l)`. At the stroboscopic times
//! `t_n = 2πn/(F L)` this basis is the Bloch basis relabelled by `q -> q + n`.

use std::cell::RefCell;
use std::f64::consts::PI;

use log::{debug, warn};
use ndarray::{Array2, Zip};
use ndarray_linalg::{EigValsh, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::lattice::{
    dispersion, group_velocity, thermal_state, Basis, DensityMatrix, InverseTemperature,
    LatticeConfig,
};
use crate::observables::MomentumDistribution;
use crate::relaxation::{
    add_lindblad, MetropolisKernel, RateFrame, RateKernel, RateMatrix, RelaxationModel,
};

const STABILITY_TOLERANCE: f64 = 1e-6;

/// `0.02 min(1/J, 1/|F|, min(1/γ, 1/J))`, ignoring vanishing scales.
pub fn default_dt(config: &LatticeConfig) -> f64 {
    let mut scale = f64::INFINITY;
    for rate in [config.hopping.abs(), config.force.abs()] {
        if rate > 0.0 {
            scale = scale.min(1.0 / rate);
        }
    }
    if config.gamma > 0.0 {
        let capped = if config.hopping > 0.0 {
            (1.0 / config.gamma).min(1.0 / config.hopping)
        } else {
            1.0 / config.gamma
        };
        scale = scale.min(capped);
    }
    if scale.is_finite() {
        0.02 * scale
    } else {
        0.02
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationSpec {
    /// Requested step; the step actually taken is `t_final / ceil(t_final / dt)`.
    pub dt: f64,
    pub t_final: f64,
    pub record_stride: usize,
    /// Steps between momentum-distribution snapshots, 0 for none.
    pub snapshot_stride: usize,
}

impl PropagationSpec {
    pub fn new(
        dt: f64,
        t_final: f64,
        record_stride: usize,
        snapshot_stride: usize,
    ) -> Result<Self> {
        let spec = Self {
            dt,
            t_final,
            record_stride,
            snapshot_stride,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "t_final = {} must be at least dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Steps that land exactly on the stroboscopic times `2πn/(|F| L)`, with
    /// one record per stroboscopic time. Falls back to `dt` when `F = 0`.
    pub fn stroboscopic(config: &LatticeConfig, dt: f64, t_final: f64) -> Result<Self> {
        if config.force == 0.0 {
            return Self::new(dt, t_final, 1, 0);
        }
        let strobe = stroboscopic_interval(config);
        let substeps = (strobe / dt).ceil().max(1.0);
        let strobes = (t_final / strobe).round().max(1.0);
        Self::new(strobe / substeps, strobes * strobe, substeps as usize, 0)
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    pub fn step_size(&self) -> f64 {
        self.t_final / self.steps() as f64
    }
}

/// `2π / (|F| L)`.
pub fn stroboscopic_interval(config: &LatticeConfig) -> f64 {
    2.0 * PI / (config.force.abs() * config.sites as f64)
}

/// Worst-case validity measures over the states seen by one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateAudit {
    pub states: usize,
    /// Largest `|ρ - ρ†|` before the per-step symmetrisation.
    pub max_hermiticity: f64,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

impl Default for StateAudit {
    fn default() -> Self {
        Self {
            states: 0,
            max_hermiticity: 0.0,
            max_trace_drift: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }
}

impl StateAudit {
    pub fn merge(&mut self, other: &StateAudit) {
        self.states += other.states;
        self.max_hermiticity = self.max_hermiticity.max(other.max_hermiticity);
        self.max_trace_drift = self.max_trace_drift.max(other.max_trace_drift);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
    }

    pub fn passes(&self, hermiticity: f64, trace_drift: f64, eigen_floor: f64) -> bool {
        self.max_hermiticity <= hermiticity
            && self.max_trace_drift <= trace_drift
            && self.min_eigenvalue >= eigen_floor
    }
}

fn max_antihermitian(m: &Array2<Complex64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

fn symmetrize(m: &mut Array2<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[[i, i]].im = 0.0;
        for j in (i + 1)..n {
            let mean = 0.5 * (m[[i, j]] + m[[j, i]].conj());
            m[[i, j]] = mean;
            m[[j, i]] = mean.conj();
        }
    }
}

/// Bloch-diagonal matrix whose gauge-frame components are needed at every stage.
enum Target {
    /// `|k><k|`, rank one and cheap to rotate.
    Level(usize),
    Dense {
        matrix: Array2<Complex64>,
        // last few rotations, keyed by the phase bits
        cache: RefCell<Vec<(u64, Array2<Complex64>)>>,
    },
}

/// Dissipator specialised for the gauge frame.
enum Dissipation<'a> {
    /// `-γ c ρ̃ + γ w T(θ)`, with `w = Tr ρ̃` for rate matrices whose rows are
    /// constant and `w = 1` for the single-rate model.
    Affine {
        gamma: f64,
        escape: f64,
        trace_weighted: bool,
        target: Target,
    },
    Grid {
        gamma: f64,
        rates: &'a RateMatrix,
    },
    Comoving {
        gamma: f64,
        beta: InverseTemperature,
        hopping: f64,
    },
}

fn single_level(diagonal: &[f64]) -> Option<usize> {
    let mut support = diagonal.iter().enumerate().filter(|(_, w)| **w != 0.0);
    match (support.next(), support.next()) {
        (Some((k, w)), None) if *w == 1.0 => Some(k),
        _ => None,
    }
}

fn target_for(diagonal: Vec<f64>) -> Target {
    match single_level(&diagonal) {
        Some(k) => Target::Level(k),
        None => Target::Dense {
            matrix: Array2::from_diag(
                &ndarray::Array1::from(diagonal).mapv(|w| Complex64::new(w, 0.0)),
            ),
            cache: RefCell::new(Vec::new()),
        },
    }
}

impl<'a> Dissipation<'a> {
    fn new(model: &'a RelaxationModel) -> Self {
        match model {
            RelaxationModel::Simple { gamma, reference } => {
                let m = reference.matrix();
                let n = m.nrows();
                let diagonal_only = m
                    .indexed_iter()
                    .all(|((i, j), z)| i == j || *z == Complex64::new(0.0, 0.0));
                let target = if diagonal_only {
                    target_for(m.diag().iter().map(|z| z.re).collect())
                } else {
                    Target::Dense {
                        matrix: m.clone(),
                        cache: RefCell::new(Vec::new()),
                    }
                };
                debug_assert_eq!(n, model.dim());
                Self::Affine {
                    gamma: *gamma,
                    escape: 1.0,
                    trace_weighted: false,
                    target,
                }
            }
            RelaxationModel::Lindblad {
                gamma,
                rates,
                frame: RateFrame::Grid,
            } => {
                let escape = rates.escape_rates();
                let uniform_escape = escape.iter().all(|c| *c == escape[0]);
                let w = rates.as_array();
                let constant_rows = w
                    .rows()
                    .into_iter()
                    .all(|row| row.iter().all(|x| *x == row[0]));
                if uniform_escape && constant_rows {
                    Self::Affine {
                        gamma: *gamma,
                        escape: escape[0],
                        trace_weighted: true,
                        target: target_for(w.column(0).to_vec()),
                    }
                } else {
                    Self::Grid {
                        gamma: *gamma,
                        rates,
                    }
                }
            }
            RelaxationModel::Lindblad {
                gamma,
                frame: RateFrame::Comoving { beta, hopping },
                ..
            } => Self::Comoving {
                gamma: *gamma,
                beta: *beta,
                hopping: *hopping,
            },
        }
    }
}

/// `ρ̃_kp (-(d_k + d_p) + i(E_p - E_k))`: commutator with the diagonal
/// gauge-frame Hamiltonian plus coherence damping.
fn damped_commutator(
    rho: &Array2<Complex64>,
    energies: &[f64],
    half_rates: &[f64],
) -> Array2<Complex64> {
    let n = energies.len();
    let rho = rho.as_standard_layout();
    let src = rho.as_slice().expect("standard layout");
    let mut data = Vec::with_capacity(n * n);
    for (k, row) in src.chunks_exact(n).enumerate() {
        let (ek, dk) = (energies[k], half_rates[k]);
        data.extend(
            row.iter()
                .zip(energies.iter().zip(half_rates))
                .map(|(z, (ep, dp))| z * Complex64::new(-(dk + dp), ep - ek)),
        );
    }
    Array2::from_shape_vec((n, n), data).expect("square")
}

/// `<χ_q(θ)|k0>` for all `q`: `(1/L) Σ_l exp(i(2π(k0 - q)/L - θ) l)`.
fn level_components(sites: usize, k0: usize, theta: f64) -> Vec<Complex64> {
    let n = sites as f64;
    let numerator = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -theta * n);
    (0..sites)
        .map(|q| {
            let phi = 2.0 * PI * (k0 as f64 - q as f64) / n - theta;
            let z = Complex64::from_polar(1.0, phi);
            let denominator = Complex64::new(1.0, 0.0) - z;
            if denominator.norm() > 1e-3 {
                numerator / denominator / n
            } else {
                let mut total = Complex64::new(0.0, 0.0);
                let mut power = Complex64::new(1.0, 0.0);
                for _ in 0..sites {
                    total += power;
                    power *= z;
                }
                total / n
            }
        })
        .collect()
}

/// Gauge-frame generator for one configuration and model.
struct Generator<'a> {
    config: &'a LatticeConfig,
    dissipation: Dissipation<'a>,
    fourier: Fourier,
}

impl<'a> Generator<'a> {
    fn new(config: &'a LatticeConfig, model: &'a RelaxationModel) -> Result<Self> {
        config.validate()?;
        if model.dim() != config.sites {
            return Err(Error::Config(format!(
                "model dimension {} does not match L = {}",
                model.dim(),
                config.sites
            )));
        }
        Ok(Self {
            config,
            dissipation: Dissipation::new(model),
            fourier: Fourier::new(config.sites),
        })
    }

    fn kinetic_momenta(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        let n = self.config.sites;
        let theta = self.config.force * t;
        (0..n).map(move |q| 2.0 * PI * q as f64 / n as f64 + theta)
    }

    /// `γ w T(θ)` added to `out`.
    fn add_target(
        &self,
        out: &mut Array2<Complex64>,
        target: &Target,
        theta: f64,
        weight: Complex64,
    ) {
        match target {
            Target::Level(k0) => {
                let c = level_components(self.config.sites, *k0, theta);
                for ((q, p), z) in out.indexed_iter_mut() {
                    *z += weight * c[q] * c[p].conj();
                }
            }
            Target::Dense { matrix, cache } => {
                let key = theta.to_bits();
                let mut cache = cache.borrow_mut();
                let position = cache.iter().position(|(k, _)| *k == key);
                let index = match position {
                    Some(i) => i,
                    None => {
                        let rotated = if theta == 0.0 {
                            matrix.clone()
                        } else {
                            self.fourier.physical_to_gauge(matrix, theta)
                        };
                        if cache.len() == 4 {
                            cache.remove(0);
                        }
                        cache.push((key, rotated));
                        cache.len() - 1
                    }
                };
                out.scaled_add(weight, &cache[index].1);
            }
        }
    }

    fn rhs(&self, rho: &Array2<Complex64>, t: f64) -> Array2<Complex64> {
        let hopping = self.config.hopping;
        let energies: Vec<f64> = self
            .kinetic_momenta(t)
            .map(|k| dispersion(hopping, k))
            .collect();
        let theta = self.config.force * t;
        let n = energies.len();
        match &self.dissipation {
            Dissipation::Affine {
                gamma,
                escape,
                trace_weighted,
                target,
            } => {
                let mut out = damped_commutator(rho, &energies, &vec![0.5 * gamma * escape; n]);
                let weight = if *trace_weighted {
                    rho.diag().sum() * *gamma
                } else {
                    Complex64::new(*gamma, 0.0)
                };
                self.add_target(&mut out, target, theta, weight);
                out
            }
            Dissipation::Grid { gamma, rates } => {
                let mut out = damped_commutator(rho, &energies, &vec![0.0; n]);
                if theta == 0.0 {
                    add_lindblad(&mut out, rho, *gamma, *rates);
                } else {
                    let physical = self.fourier.gauge_to_physical(rho, theta);
                    let mut d = Array2::zeros(rho.raw_dim());
                    add_lindblad(&mut d, &physical, *gamma, *rates);
                    out += &self.fourier.physical_to_gauge(&d, theta);
                }
                out
            }
            Dissipation::Comoving {
                gamma,
                beta,
                hopping,
            } => {
                let kernel = MetropolisKernel::for_band(n, *hopping, *beta, theta);
                let half: Vec<f64> = kernel
                    .escape_rates()
                    .iter()
                    .map(|c| 0.5 * gamma * c)
                    .collect();
                let mut out = damped_commutator(rho, &energies, &half);
                let populations: Vec<f64> = rho.diag().iter().map(|z| z.re).collect();
                for (k, gain) in kernel.inflow(&populations).iter().enumerate() {
                    out[[k, k]] += Complex64::new(gamma * gain, 0.0);
                }
                out
            }
        }
    }

    /// Population-only generator of the comoving models; `None` otherwise.
    fn population_rhs(&self, p: &[f64], t: f64) -> Option<Vec<f64>> {
        match &self.dissipation {
            Dissipation::Comoving {
                gamma,
                beta,
                hopping,
            } => {
                let theta = self.config.force * t;
                let kernel = MetropolisKernel::for_band(p.len(), *hopping, *beta, theta);
                let escape = kernel.escape_rates();
                let inflow = kernel.inflow(p);
                Some(
                    (0..p.len())
                        .map(|k| gamma * (inflow[k] - escape[k] * p[k]))
                        .collect(),
                )
            }
            _ => None,
        }
    }

    fn rk4(&self, rho: &Array2<Complex64>, t: f64, dt: f64) -> Array2<Complex64> {
        let stage =
            |k: &Array2<Complex64>, h: f64| Zip::from(rho).and(k).map_collect(|r, k| r + k * h);
        let k1 = self.rhs(rho, t);
        let k2 = self.rhs(&stage(&k1, 0.5 * dt), t + 0.5 * dt);
        let k3 = self.rhs(&stage(&k2, 0.5 * dt), t + 0.5 * dt);
        let k4 = self.rhs(&stage(&k3, dt), t + dt);
        let sixth = dt / 6.0;
        Zip::from(rho)
            .and(&k1)
            .and(&k2)
            .and(&k3)
            .and(&k4)
            .map_collect(|r, a, b, c, d| r + (a + (b + c) * 2.0 + d) * sixth)
    }

    fn rk4_populations(&self, p: &[f64], t: f64, dt: f64) -> Option<Vec<f64>> {
        let stage =
            |k: &[f64], h: f64| -> Vec<f64> { p.iter().zip(k).map(|(x, k)| x + k * h).collect() };
        let k1 = self.population_rhs(p, t)?;
        let k2 = self.population_rhs(&stage(&k1, 0.5 * dt), t + 0.5 * dt)?;
        let k3 = self.population_rhs(&stage(&k2, 0.5 * dt), t + 0.5 * dt)?;
        let k4 = self.population_rhs(&stage(&k3, dt), t + dt)?;
        let sixth = dt / 6.0;
        Some(
            (0..p.len())
                .map(|i| p[i] + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * sixth)
                .collect(),
        )
    }
}

/// Gauge-frame right-hand side `-i[H̃(t), ρ̃] + D̃_t(ρ̃)`.
pub fn liouvillian_rhs(
    rho_gauge: &DensityMatrix,
    t: f64,
    config: &LatticeConfig,
    model: &RelaxationModel,
) -> Result<Array2<Complex64>> {
    if rho_gauge.dim() != config.sites {
        return Err(Error::Usage(format!(
            "state dimension {} does not match L = {}",
            rho_gauge.dim(),
            config.sites
        )));
    }
    Ok(Generator::new(config, model)?.rhs(rho_gauge.matrix(), t))
}

/// Stepwise integrator holding the gauge-frame state.
pub struct Propagator<'a> {
    generator: Generator<'a>,
    rho: Array2<Complex64>,
    t: f64,
    audit: StateAudit,
    // comoving models keep a Bloch-diagonal gauge state diagonal
    diagonal: bool,
}

impl<'a> Propagator<'a> {
    /// Starts at `t = 0`, where the gauge frame coincides with the physical one.
    pub fn new(
        rho0: &DensityMatrix,
        config: &'a LatticeConfig,
        model: &'a RelaxationModel,
    ) -> Result<Self> {
        let generator = Generator::new(config, model)?;
        if rho0.dim() != config.sites {
            return Err(Error::Usage(format!(
                "initial state dimension {} does not match L = {}",
                rho0.dim(),
                config.sites
            )));
        }
        let rho = rho0.to_basis(Basis::Bloch).into_matrix();
        let mut audit = StateAudit::default();
        audit.max_hermiticity = max_antihermitian(&rho);
        let diagonal = matches!(generator.dissipation, Dissipation::Comoving { .. })
            && rho.indexed_iter().all(|((i, j), z)| {
                if i == j {
                    z.im == 0.0
                } else {
                    *z == Complex64::new(0.0, 0.0)
                }
            });
        Ok(Self {
            generator,
            rho,
            t: 0.0,
            audit,
            diagonal,
        })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Sets the clock, e.g. to avoid round-off accumulation in `t += dt`.
    pub fn set_time(&mut self, t: f64) {
        self.t = t;
    }

    pub fn audit(&self) -> &StateAudit {
        &self.audit
    }

    /// Gauge-frame components `ρ̃`.
    pub fn gauge_state(&self) -> &Array2<Complex64> {
        &self.rho
    }

    pub fn step(&mut self, dt: f64) {
        if self.diagonal {
            let p: Vec<f64> = self.rho.diag().iter().map(|z| z.re).collect();
            if let Some(next) = self.generator.rk4_populations(&p, self.t, dt) {
                for (k, x) in next.into_iter().enumerate() {
                    self.rho[[k, k]] = Complex64::new(x, 0.0);
                }
                self.t += dt;
                return;
            }
        }
        let mut next = self.generator.rk4(&self.rho, self.t, dt);
        let deviation = max_antihermitian(&next);
        self.audit.max_hermiticity = self.audit.max_hermiticity.max(deviation);
        symmetrize(&mut next);
        self.rho = next;
        self.t += dt;
    }

    /// Physical Bloch-basis state at the current time.
    pub fn physical_state(&self) -> DensityMatrix {
        let theta = self.generator.config.force * self.t;
        let m = if theta == 0.0 {
            self.rho.clone()
        } else {
            self.generator.fourier.gauge_to_physical(&self.rho, theta)
        };
        DensityMatrix::new(m, Basis::Bloch).expect("square state")
    }

    /// Physical Wannier-basis state at the current time.
    pub fn physical_wannier_state(&self) -> DensityMatrix {
        let theta = self.generator.config.force * self.t;
        let m = self
            .generator
            .fourier
            .gauge_to_physical_wannier(&self.rho, theta);
        DensityMatrix::new(m, Basis::Wannier).expect("square state")
    }

    /// `Σ_q J sin(2πq/L + F t) ρ̃_qq`.
    pub fn mean_velocity(&self) -> f64 {
        let hopping = self.generator.config.hopping;
        self.generator
            .kinetic_momenta(self.t)
            .zip(self.rho.diag())
            .map(|(k, z)| group_velocity(hopping, k) * z.re)
            .sum()
    }

    pub fn purity(&self) -> f64 {
        if self.diagonal {
            return self.rho.diag().iter().map(|z| z.re * z.re).sum();
        }
        let mut total = Complex64::new(0.0, 0.0);
        for ((i, j), z) in self.rho.indexed_iter() {
            total += z * self.rho[[j, i]];
        }
        total.re
    }

    pub fn momentum_distribution(&self) -> Result<MomentumDistribution> {
        let state = self.physical_state();
        MomentumDistribution::new(state.matrix().diag().iter().map(|z| z.re).collect())
    }

    /// Updates the audit with trace drift and spectrum, and fails on a
    /// breach of the stability limits.
    pub fn check(&mut self, dt: f64) -> Result<()> {
        let drift = (self.rho.diag().sum() - 1.0).norm();
        let eigenvalues: Vec<f64> = if self.diagonal {
            self.rho.diag().iter().map(|z| z.re).collect()
        } else {
            self.rho
                .eigvalsh(UPLO::Lower)
                .map_err(|e| Error::Linalg(e.to_string()))?
                .to_vec()
        };
        let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        self.audit.states += 1;
        self.audit.max_trace_drift = self.audit.max_trace_drift.max(drift);
        self.audit.min_eigenvalue = self.audit.min_eigenvalue.min(min);
        if drift > STABILITY_TOLERANCE || min < -STABILITY_TOLERANCE {
            return Err(Error::Stability {
                time: self.t,
                detail: format!("trace drift {drift:e}, minimum eigenvalue {min:e}"),
                suggested_dt: 0.5 * dt,
            });
        }
        Ok(())
    }

    /// Exact physical Bloch state at a stroboscopic time: `ρ_B[k+n, p+n] = ρ̃[k, p]`.
    fn stroboscopic_physical(&self, n: i64) -> Array2<Complex64> {
        let dim = self.rho.nrows();
        let shift = n.rem_euclid(dim as i64) as usize;
        let mut out = Array2::zeros(self.rho.raw_dim());
        for ((k, p), z) in self.rho.indexed_iter() {
            out[[(k + shift) % dim, (p + shift) % dim]] = *z;
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub mean_velocity: Vec<f64>,
    pub purity: Vec<f64>,
    pub snapshot_times: Vec<f64>,
    pub momentum_distributions: Vec<MomentumDistribution>,
    #[serde(skip)]
    pub final_state: DensityMatrix,
    pub audit: StateAudit,
}

pub fn propagate(
    rho0: &DensityMatrix,
    spec: &PropagationSpec,
    config: &LatticeConfig,
    model: &RelaxationModel,
) -> Result<Trajectory> {
    spec.validate()?;
    let steps = spec.steps();
    let dt = spec.step_size();
    let mut propagator = Propagator::new(rho0, config, model)?;
    let mut trajectory = Trajectory {
        times: Vec::new(),
        mean_velocity: Vec::new(),
        purity: Vec::new(),
        snapshot_times: Vec::new(),
        momentum_distributions: Vec::new(),
        final_state: rho0.clone(),
        audit: StateAudit::default(),
    };
    let record = |p: &mut Propagator, step: usize, traj: &mut Trajectory| -> Result<()> {
        let is_last = step == steps;
        if step % spec.record_stride == 0 || is_last {
            p.check(dt)?;
            traj.times.push(p.time());
            traj.mean_velocity.push(p.mean_velocity());
            traj.purity.push(p.purity());
        }
        if spec.snapshot_stride > 0 && (step % spec.snapshot_stride == 0 || is_last) {
            traj.snapshot_times.push(p.time());
            traj.momentum_distributions.push(p.momentum_distribution()?);
        }
        Ok(())
    };
    record(&mut propagator, 0, &mut trajectory)?;
    for step in 1..=steps {
        propagator.step(dt);
        propagator.set_time(step as f64 * dt);
        record(&mut propagator, step, &mut trajectory)?;
    }
    debug!(
        "propagated {steps} steps of {dt}; max Hermiticity deviation {:e}",
        propagator.audit().max_hermiticity
    );
    trajectory.final_state = propagator.physical_state();
    trajectory.audit = *propagator.audit();
    Ok(trajectory)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub elapsed: f64,
    pub residual: f64,
    /// L¹ distance between the instantaneous and averaged distributions.
    pub discrepancy: f64,
    pub dt: f64,
    /// Averaging window: one Bloch period, or `1/γ` at zero force.
    pub window: f64,
    pub residual_history: Vec<f64>,
    pub audit: StateAudit,
}

#[derive(Debug, Clone)]
pub struct SteadyState {
    /// Window-averaged physical Bloch-basis state.
    pub state: DensityMatrix,
    pub report: ConvergenceReport,
}

/// [`steady_state_with`] from the thermal state with the default step.
pub fn steady_state(
    config: &LatticeConfig,
    model: &RelaxationModel,
    tol: f64,
) -> Result<SteadyState> {
    steady_state_with(&thermal_state(config), config, model, tol, None)
}

/// Propagates until the Bloch-period-averaged momentum distribution moves
/// by less than `tol` (L¹) between consecutive periods. The average is taken
/// over the `L` stroboscopic states of each period. At `F = 0` the
/// instantaneous state is compared every `1/γ`.
pub fn steady_state_with(
    rho0: &DensityMatrix,
    config: &LatticeConfig,
    model: &RelaxationModel,
    tol: f64,
    dt: Option<f64>,
) -> Result<SteadyState> {
    if !(config.gamma > 0.0) || !(model.gamma() > 0.0) {
        return Err(Error::Config("steady state needs gamma > 0".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance {tol} must be positive")));
    }
    let requested = dt.unwrap_or_else(|| default_dt(config));
    if !(requested > 0.0) {
        return Err(Error::Config(format!("dt = {requested} must be positive")));
    }
    let dim = config.sites;
    let zero_force = config.force == 0.0;
    let (samples, interval, t_max) = if zero_force {
        (1, 1.0 / config.gamma, 50.0 / config.gamma)
    } else {
        let period = config.bloch_period().abs();
        (
            dim,
            stroboscopic_interval(config),
            (50.0 / config.gamma).max(20.0 * period),
        )
    };
    let substeps = (interval / requested).ceil().max(1.0) as usize;
    let step = interval / substeps as f64;
    let window = interval * samples as f64;
    let direction = if config.force < 0.0 { -1 } else { 1 };

    let mut propagator = Propagator::new(rho0, config, model)?;
    let mut previous: Option<MomentumDistribution> = None;
    let mut history = Vec::new();
    let mut strobe: i64 = 0;
    loop {
        let mut sum = Array2::<Complex64>::zeros((dim, dim));
        for _ in 0..samples {
            for _ in 0..substeps {
                propagator.step(step);
            }
            strobe += 1;
            propagator.set_time(strobe as f64 * interval);
            if zero_force {
                sum += propagator.gauge_state();
            } else {
                sum += &propagator.stroboscopic_physical(direction * strobe);
            }
        }
        propagator.check(step)?;
        sum.mapv_inplace(|z| z / samples as f64);
        let averaged = DensityMatrix::new(sum, Basis::Bloch)?;
        let distribution =
            MomentumDistribution::new(averaged.matrix().diag().iter().map(|z| z.re).collect())?;
        let elapsed = propagator.time();
        if let Some(prev) = &previous {
            let residual = distribution.l1_distance(prev);
            history.push(residual);
            debug!("t = {elapsed:.3}: residual {residual:e}");
            if residual < tol {
                let instantaneous = propagator.momentum_distribution()?;
                let report = ConvergenceReport {
                    elapsed,
                    residual,
                    discrepancy: instantaneous.l1_distance(&distribution),
                    dt: step,
                    window,
                    residual_history: history,
                    audit: *propagator.audit(),
                };
                return Ok(SteadyState {
                    state: averaged,
                    report,
                });
            }
        }
        if elapsed >= t_max {
            warn!("no steady state within t = {elapsed}");
            return Err(Error::Convergence {
                elapsed,
                residuals: history,
            });
        }
        previous = Some(distribution);
    }
}

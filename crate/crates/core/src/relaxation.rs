//! Relaxation terms: quasimomentum rate matrices, the Lindblad dissipator
//! built on the jump operators `|s><q|`, and the single-rate relaxation
//! towards the thermal state.
//!
//! Rate convention: `W(s, q)` is the dimensionless rate for the jump
//! `q -> s` (destination first), multiplied by `γ` in the dissipator.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    band_energies, boltzmann_populations, dispersion, thermal_state, Basis, DensityMatrix,
    InverseTemperature, LatticeConfig,
};

/// Above this value of `β (E_max - E_min)` the Metropolis kernel is summed
/// directly instead of through factorised Boltzmann weights.
const FACTORISED_SPAN_LIMIT: f64 = 600.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    rates: Array2<f64>,
}

impl RateMatrix {
    pub fn new(rates: Array2<f64>) -> Result<Self> {
        if rates.nrows() != rates.ncols() {
            return Err(Error::Config(format!(
                "rate matrix must be square, got {:?}",
                rates.dim()
            )));
        }
        if let Some(bad) = rates.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!(
                "rate {bad} is not a finite nonnegative number"
            )));
        }
        Ok(Self { rates })
    }

    pub fn dim(&self) -> usize {
        self.rates.nrows()
    }

    /// Rate of the jump `from -> to`.
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.rates[[to, from]]
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.rates
    }
}

/// Total escape rates and population inflow of a rate matrix.
pub trait RateKernel {
    /// `Σ_s W(s, q)` for every `q`.
    fn escape_rates(&self) -> Vec<f64>;
    /// `Σ_q W(k, q) p_q` for every `k`.
    fn inflow(&self, populations: &[f64]) -> Vec<f64>;
}

impl RateKernel for RateMatrix {
    fn escape_rates(&self) -> Vec<f64> {
        self.rates.sum_axis(ndarray::Axis(0)).to_vec()
    }

    fn inflow(&self, populations: &[f64]) -> Vec<f64> {
        self.rates
            .rows()
            .into_iter()
            .map(|row| row.iter().zip(populations).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Metropolis-type exchange `W(s, q) = (1/L) min(1, exp(-β (E_s - E_q)))`
/// for arbitrary (possibly off-grid) level energies, evaluated in
/// `O(L log L)` through sorted prefix sums.
#[derive(Debug, Clone)]
pub struct MetropolisKernel {
    energies: Vec<f64>,
    beta: InverseTemperature,
    // indices sorted by ascending energy, and the start of each tie group
    order: Vec<usize>,
    group_start: Vec<usize>,
    group_end: Vec<usize>,
}

impl MetropolisKernel {
    pub fn new(energies: Vec<f64>, beta: InverseTemperature) -> Self {
        let n = energies.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| energies[a].total_cmp(&energies[b]));
        let mut group_start = vec![0; n];
        let mut group_end = vec![n; n];
        for i in 1..n {
            group_start[i] = if energies[order[i]] == energies[order[i - 1]] {
                group_start[i - 1]
            } else {
                i
            };
        }
        for i in (0..n.saturating_sub(1)).rev() {
            group_end[i] = if energies[order[i]] == energies[order[i + 1]] {
                group_end[i + 1]
            } else {
                i + 1
            };
        }
        Self {
            energies,
            beta,
            order,
            group_start,
            group_end,
        }
    }

    /// Band energies at quasimomenta `2πq/L + shift`.
    pub fn for_band(sites: usize, hopping: f64, beta: InverseTemperature, shift: f64) -> Self {
        let energies = (0..sites)
            .map(|q| {
                dispersion(
                    hopping,
                    2.0 * std::f64::consts::PI * q as f64 / sites as f64 + shift,
                )
            })
            .collect();
        Self::new(energies, beta)
    }

    fn span(&self) -> f64 {
        match (self.order.first(), self.order.last()) {
            (Some(&lo), Some(&hi)) => self.energies[hi] - self.energies[lo],
            _ => 0.0,
        }
    }

    fn factorised_weights(&self) -> Option<Vec<f64>> {
        match self.beta {
            InverseTemperature::Infinite => None,
            InverseTemperature::Finite(b) => {
                if b * self.span() >= FACTORISED_SPAN_LIMIT {
                    return None;
                }
                let min = self.energies[self.order[0]];
                Some(
                    self.energies
                        .iter()
                        .map(|e| (-b * (e - min)).exp())
                        .collect(),
                )
            }
        }
    }

    fn dense_rate(&self, to: usize, from: usize) -> f64 {
        let delta = self.energies[to] - self.energies[from];
        let factor = if delta <= 0.0 {
            1.0
        } else {
            match self.beta {
                InverseTemperature::Infinite => 0.0,
                InverseTemperature::Finite(b) => (-b * delta).exp(),
            }
        };
        factor / self.energies.len() as f64
    }

    pub fn to_rate_matrix(&self) -> RateMatrix {
        let n = self.energies.len();
        RateMatrix {
            rates: Array2::from_shape_fn((n, n), |(s, q)| self.dense_rate(s, q)),
        }
    }
}

impl RateKernel for MetropolisKernel {
    fn escape_rates(&self) -> Vec<f64> {
        let n = self.energies.len();
        let inv_n = 1.0 / n as f64;
        let weights = match self.factorised_weights() {
            Some(w) => w,
            None if self.beta.is_infinite() => {
                let mut out = vec![0.0; n];
                for (i, &q) in self.order.iter().enumerate() {
                    out[q] = self.group_end[i] as f64 * inv_n;
                }
                return out;
            }
            None => {
                return (0..n)
                    .map(|q| (0..n).map(|s| self.dense_rate(s, q)).sum())
                    .collect();
            }
        };
        // suffix[i] = Σ_{j >= i} a_{order[j]}
        let mut suffix = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + weights[self.order[i]];
        }
        let mut out = vec![0.0; n];
        for (i, &q) in self.order.iter().enumerate() {
            let end = self.group_end[i];
            out[q] = inv_n * (end as f64 + suffix[end] / weights[q]);
        }
        out
    }

    fn inflow(&self, populations: &[f64]) -> Vec<f64> {
        let n = self.energies.len();
        let inv_n = 1.0 / n as f64;
        let mut suffix_p = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix_p[i] = suffix_p[i + 1] + populations[self.order[i]];
        }
        let weights = match self.factorised_weights() {
            Some(w) => w,
            None if self.beta.is_infinite() => {
                let mut out = vec![0.0; n];
                for (i, &k) in self.order.iter().enumerate() {
                    out[k] = inv_n * suffix_p[self.group_start[i]];
                }
                return out;
            }
            None => {
                return (0..n)
                    .map(|k| (0..n).map(|q| self.dense_rate(k, q) * populations[q]).sum())
                    .collect();
            }
        };
        // prefix[i] = Σ_{j < i} p_{order[j]} / a_{order[j]}
        let mut prefix = vec![0.0; n + 1];
        for i in 0..n {
            let q = self.order[i];
            prefix[i + 1] = prefix[i] + populations[q] / weights[q];
        }
        let mut out = vec![0.0; n];
        for (i, &k) in self.order.iter().enumerate() {
            let start = self.group_start[i];
            out[k] = inv_n * (suffix_p[start] + weights[k] * prefix[start]);
        }
        out
    }
}

fn check_sites(sites: usize) -> Result<()> {
    if sites < 4 {
        return Err(Error::Config(format!("L = {sites} < 4")));
    }
    Ok(())
}

/// `W(s, q) = δ_{s,0}`: every state decays straight into `k = 0`.
pub fn rates_ground_sink(sites: usize) -> Result<RateMatrix> {
    check_sites(sites)?;
    let rates = Array2::from_shape_fn((sites, sites), |(s, _)| if s == 0 { 1.0 } else { 0.0 });
    Ok(RateMatrix { rates })
}

/// `W(s, q) = 1/L`.
pub fn rates_uniform(sites: usize) -> Result<RateMatrix> {
    check_sites(sites)?;
    Ok(RateMatrix {
        rates: Array2::from_elem((sites, sites), 1.0 / sites as f64),
    })
}

/// Uniform exchange with uphill jumps suppressed by the Boltzmann factor.
pub fn rates_thermal_uniform(config: &LatticeConfig) -> Result<RateMatrix> {
    check_sites(config.sites)?;
    Ok(MetropolisKernel::for_band(config.sites, config.hopping, config.beta, 0.0).to_rate_matrix())
}

/// Largest violation of `W(s,q) p_q = W(q,s) p_s` for the Boltzmann
/// populations `p` over the band, relative to the largest flux.
pub fn detailed_balance_residual(rates: &RateMatrix, config: &LatticeConfig) -> Result<f64> {
    if rates.dim() != config.sites {
        return Err(Error::Config(format!(
            "rate matrix dimension {} does not match L = {}",
            rates.dim(),
            config.sites
        )));
    }
    let energies: Vec<f64> = band_energies(config).iter().map(|b| b.energy).collect();
    let p = boltzmann_populations(&energies, config.beta);
    let n = config.sites;
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for s in 0..n {
        for q in 0..n {
            let forward = rates.get(s, q) * p[q];
            let backward = rates.get(q, s) * p[s];
            worst = worst.max((forward - backward).abs());
            scale = scale.max(forward);
        }
    }
    Ok(if scale > 0.0 { worst / scale } else { 0.0 })
}

/// How Lindblad rates attach to the basis states when the force shifts
/// quasimomenta in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFrame {
    /// Rates live on the fixed physical quasimomentum grid.
    Grid,
    /// Metropolis rates re-evaluated at the kinetic quasimomentum of every
    /// gauge-frame basis state.
    Comoving {
        beta: InverseTemperature,
        hopping: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    /// Single-rate relaxation towards the thermal state.
    Simple,
    /// Zero-temperature decay into the band bottom.
    Sink,
    /// Equal exchange rates (infinite temperature).
    Uniform,
    /// Equal exchange with Boltzmann-suppressed uphill rates.
    Thermal,
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Simple => "simple",
            Self::Sink => "sink",
            Self::Uniform => "uniform",
            Self::Thermal => "thermal",
        })
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simple" => Ok(Self::Simple),
            "sink" => Ok(Self::Sink),
            "uniform" => Ok(Self::Uniform),
            "thermal" => Ok(Self::Thermal),
            other => Err(Error::Usage(format!("unknown relaxation model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum RelaxationModel {
    /// `-γ (ρ - ρ̄_0)` with `ρ̄_0` Bloch-diagonal.
    Simple {
        gamma: f64,
        reference: DensityMatrix,
    },
    Lindblad {
        gamma: f64,
        rates: RateMatrix,
        frame: RateFrame,
    },
}

impl RelaxationModel {
    pub fn simple(config: &LatticeConfig) -> Self {
        Self::Simple {
            gamma: config.gamma,
            reference: thermal_state(config),
        }
    }

    pub fn sink(config: &LatticeConfig) -> Result<Self> {
        Ok(Self::Lindblad {
            gamma: config.gamma,
            rates: rates_ground_sink(config.sites)?,
            frame: RateFrame::Grid,
        })
    }

    pub fn uniform(config: &LatticeConfig) -> Result<Self> {
        Ok(Self::Lindblad {
            gamma: config.gamma,
            rates: rates_uniform(config.sites)?,
            frame: RateFrame::Comoving {
                beta: InverseTemperature::Finite(0.0),
                hopping: config.hopping,
            },
        })
    }

    pub fn thermal(config: &LatticeConfig) -> Result<Self> {
        Ok(Self::Lindblad {
            gamma: config.gamma,
            rates: rates_thermal_uniform(config)?,
            frame: RateFrame::Comoving {
                beta: config.beta,
                hopping: config.hopping,
            },
        })
    }

    pub fn custom(config: &LatticeConfig, rates: RateMatrix) -> Result<Self> {
        if rates.dim() != config.sites {
            return Err(Error::Config(format!(
                "rate matrix dimension {} does not match L = {}",
                rates.dim(),
                config.sites
            )));
        }
        Ok(Self::Lindblad {
            gamma: config.gamma,
            rates,
            frame: RateFrame::Grid,
        })
    }

    pub fn from_name(name: ModelName, config: &LatticeConfig) -> Result<Self> {
        match name {
            ModelName::Simple => Ok(Self::simple(config)),
            ModelName::Sink => Self::sink(config),
            ModelName::Uniform => Self::uniform(config),
            ModelName::Thermal => Self::thermal(config),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            Self::Simple { gamma, .. } | Self::Lindblad { gamma, .. } => *gamma,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Simple { reference, .. } => reference.dim(),
            Self::Lindblad { rates, .. } => rates.dim(),
        }
    }
}

/// Adds the element-wise Lindblad dissipator to `out`:
/// off-diagonal `-(γ/2)(c_k + c_p) ρ_kp`, diagonal
/// `-γ c_k ρ_kk + γ Σ_q W(k,q) ρ_qq`.
pub fn add_lindblad<K: RateKernel + ?Sized>(
    out: &mut Array2<Complex64>,
    rho: &Array2<Complex64>,
    gamma: f64,
    kernel: &K,
) {
    let escape = kernel.escape_rates();
    let populations: Vec<f64> = rho.diag().iter().map(|z| z.re).collect();
    let inflow = kernel.inflow(&populations);
    let half = 0.5 * gamma;
    for ((k, p), value) in out.indexed_iter_mut() {
        *value -= rho[[k, p]] * (half * (escape[k] + escape[p]));
    }
    for (k, gain) in inflow.iter().enumerate() {
        out[[k, k]] += Complex64::new(gamma * gain, 0.0);
    }
}

/// Dissipative part of the master equation for a Bloch-basis state.
pub fn apply_dissipator(
    rho_bloch: &DensityMatrix,
    model: &RelaxationModel,
) -> Result<Array2<Complex64>> {
    if rho_bloch.basis() != Basis::Bloch {
        return Err(Error::Usage(
            "dissipator expects a Bloch-basis state".into(),
        ));
    }
    if rho_bloch.dim() != model.dim() {
        return Err(Error::Usage(format!(
            "state dimension {} does not match model dimension {}",
            rho_bloch.dim(),
            model.dim()
        )));
    }
    let rho = rho_bloch.matrix();
    Ok(match model {
        RelaxationModel::Simple { gamma, reference } => {
            (rho - reference.matrix()).mapv(|z| -z * *gamma)
        }
        RelaxationModel::Lindblad { gamma, rates, .. } => {
            let mut out = Array2::zeros(rho.raw_dim());
            add_lindblad(&mut out, rho, *gamma, rates);
            out
        }
    })
}

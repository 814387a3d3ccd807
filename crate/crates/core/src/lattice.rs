//! Lattice configuration, single-particle operators, basis changes and the
//! thermal equilibrium state of a tilted tight-binding ring.
//!
//! Units: lattice period = ħ = 1. The band is `E(κ) = -J cos κ`, so the
//! hopping amplitude is `-J/2` and the ground state is the `k = 0` Bloch wave.
//! The static force accelerates quasimomentum as `κ̇ = +F` (Stark term
//! `-F Σ_l l |l><l|`), which makes the group velocity `J sin κ` positive on
//! average for `F > 0`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use log::warn;
use ndarray::{Array1, Array2};
use ndarray_linalg::{EigValsh, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fourier::Fourier;
use crate::specfun;

/// Inverse temperature β, with an exact zero-temperature variant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverseTemperature {
    Finite(f64),
    Infinite,
}

impl InverseTemperature {
    /// β from the dimensionless `βJ` (`J / k_B T`).
    pub fn from_beta_j(beta_j: f64, hopping: f64) -> Self {
        if beta_j.is_infinite() {
            Self::Infinite
        } else {
            Self::Finite(beta_j / hopping)
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinite)
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Finite(b) => b,
            Self::Infinite => f64::INFINITY,
        }
    }

    /// `βJ`, infinite for `T = 0`.
    pub fn times(self, energy: f64) -> f64 {
        match self {
            Self::Finite(b) => b * energy,
            Self::Infinite => f64::INFINITY,
        }
    }
}

impl fmt::Display for InverseTemperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(b) => write!(f, "{b}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for InverseTemperature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Ok(Self::Infinite),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| Error::Usage(format!("cannot parse inverse temperature '{s}'")))?;
                if v.is_infinite() && v > 0.0 {
                    Ok(Self::Infinite)
                } else {
                    Ok(Self::Finite(v))
                }
            }
        }
    }
}

impl Serialize for InverseTemperature {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(b) => serializer.serialize_f64(*b),
            Self::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for InverseTemperature {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Text(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Number(b) => Ok(Self::Finite(b)),
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Physical and numerical parameters of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeConfig {
    /// Number of sites `L` on the ring.
    pub sites: usize,
    /// Hopping energy `J`.
    pub hopping: f64,
    /// Static force `F` (energy per site).
    pub force: f64,
    /// Relaxation rate `γ`.
    pub gamma: f64,
    /// Inverse temperature `β`.
    pub beta: InverseTemperature,
}

impl LatticeConfig {
    pub fn new(
        sites: usize,
        hopping: f64,
        force: f64,
        gamma: f64,
        beta: InverseTemperature,
    ) -> Result<Self> {
        let config = Self {
            sites,
            hopping,
            force,
            gamma,
            beta,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 4 {
            return Err(Error::Config(format!("L = {} < 4", self.sites)));
        }
        if !(self.hopping.is_finite() && self.hopping > 0.0) {
            return Err(Error::Config(format!(
                "J = {} must be positive",
                self.hopping
            )));
        }
        if !self.force.is_finite() {
            return Err(Error::Config(format!("F = {} must be finite", self.force)));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::Config(format!(
                "gamma = {} must be >= 0",
                self.gamma
            )));
        }
        if let InverseTemperature::Finite(b) = self.beta {
            if !(b >= 0.0) || b.is_infinite() {
                return Err(Error::Config(format!("beta = {b} must be >= 0")));
            }
        }
        Ok(())
    }

    pub fn with_force(mut self, force: f64) -> Self {
        self.force = force;
        self
    }

    pub fn with_sites(mut self, sites: usize) -> Self {
        self.sites = sites;
        self
    }

    pub fn with_beta(mut self, beta: InverseTemperature) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    /// Quasimomentum `2πk/L` of grid index `k`.
    pub fn quasimomentum(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.sites as f64
    }

    /// Bloch period `2π/|F|`.
    pub fn bloch_period(&self) -> f64 {
        2.0 * PI / self.force.abs()
    }
}

/// `-J cos κ`.
pub fn dispersion(hopping: f64, quasimomentum: f64) -> f64 {
    -hopping * quasimomentum.cos()
}

/// `J sin κ`, the group velocity of [`dispersion`].
pub fn group_velocity(hopping: f64, quasimomentum: f64) -> f64 {
    hopping * quasimomentum.sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandEnergy {
    pub k_index: usize,
    pub energy: f64,
}

pub fn band_energies(config: &LatticeConfig) -> Vec<BandEnergy> {
    (0..config.sites)
        .map(|k| BandEnergy {
            k_index: k,
            energy: dispersion(config.hopping, config.quasimomentum(k)),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Wannier,
    Bloch,
}

/// Hermitian, unit-trace `L × L` state of the carriers.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: Array2<Complex64>,
    basis: Basis,
}

impl DensityMatrix {
    pub fn new(matrix: Array2<Complex64>, basis: Basis) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::InvalidState(format!(
                "density matrix must be square, got {:?}",
                matrix.dim()
            )));
        }
        Ok(Self { matrix, basis })
    }

    pub fn maximally_mixed(dim: usize, basis: Basis) -> Self {
        let value = Complex64::new(1.0 / dim as f64, 0.0);
        let matrix = Array2::from_diag_elem(dim, value);
        Self { matrix, basis }
    }

    /// `|k><k|` in the Bloch basis.
    pub fn bloch_wave(dim: usize, k: usize) -> Self {
        let mut matrix = Array2::zeros((dim, dim));
        matrix[[k % dim, k % dim]] = Complex64::new(1.0, 0.0);
        Self {
            matrix,
            basis: Basis::Bloch,
        }
    }

    /// Bloch-diagonal state with the given populations.
    pub fn from_populations(populations: &[f64]) -> Self {
        let diag = Array1::from_iter(populations.iter().map(|&p| Complex64::new(p, 0.0)));
        Self {
            matrix: Array2::from_diag(&diag),
            basis: Basis::Bloch,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn matrix(&self) -> &Array2<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.diag().sum()
    }

    /// `max |ρ - ρ†|`.
    pub fn hermiticity_deviation(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[[i, j]] - self.matrix[[j, i]].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let values = self
            .matrix
            .eigvalsh(UPLO::Lower)
            .map_err(|e| Error::Linalg(e.to_string()))?;
        Ok(values.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Checks Hermiticity, unit trace and positivity at the given tolerances.
    pub fn validate(&self, tolerance: f64, eigen_floor: f64) -> Result<()> {
        let herm = self.hermiticity_deviation();
        if herm > tolerance {
            return Err(Error::InvalidState(format!(
                "Hermiticity deviation {herm:e}"
            )));
        }
        let drift = (self.trace() - 1.0).norm();
        if drift > tolerance {
            return Err(Error::InvalidState(format!("trace drift {drift:e}")));
        }
        let min = self.min_eigenvalue()?;
        if min < eigen_floor {
            return Err(Error::InvalidState(format!(
                "eigenvalue {min:e} below {eigen_floor:e}"
            )));
        }
        Ok(())
    }

    pub fn to_basis(&self, target: Basis) -> DensityMatrix {
        if target == self.basis {
            return self.clone();
        }
        let fourier = Fourier::new(self.dim());
        let matrix = match target {
            Basis::Wannier => fourier.bloch_to_wannier(&self.matrix),
            Basis::Bloch => fourier.wannier_to_bloch(&self.matrix),
        };
        DensityMatrix {
            matrix,
            basis: target,
        }
    }
}

/// Cyclic tridiagonal hopping operator with amplitude `-J/2` (Wannier basis).
pub fn build_kinetic(config: &LatticeConfig) -> Array2<Complex64> {
    let n = config.sites;
    let amplitude = Complex64::new(-0.5 * config.hopping, 0.0);
    let mut h = Array2::zeros((n, n));
    for l in 0..n {
        h[[(l + 1) % n, l]] += amplitude;
        h[[l, (l + 1) % n]] += amplitude;
    }
    h
}

/// `v = (J/2i)(|l-1><l| - |l+1><l|)`, Bloch-diagonal with entries `J sin(2πk/L)`.
pub fn build_velocity(config: &LatticeConfig) -> Array2<Complex64> {
    let n = config.sites;
    let half = 0.5 * config.hopping;
    let mut v = Array2::zeros((n, n));
    for l in 0..n {
        v[[(l + n - 1) % n, l]] += Complex64::new(0.0, -half);
        v[[(l + 1) % n, l]] += Complex64::new(0.0, half);
    }
    v
}

pub fn bloch_transform(rho: &DensityMatrix, target: Basis) -> Result<DensityMatrix> {
    if rho.basis() == target {
        return Err(Error::Usage(format!(
            "state is already in the {target:?} basis"
        )));
    }
    Ok(rho.to_basis(target))
}

/// Unitary whose columns are the gauge-frame plane waves
/// `χ_q(t)_l = L^{-1/2} exp(i(2πq/L + F t) l)`.
pub fn gauge_wave_basis(config: &LatticeConfig, t: f64) -> Array2<Complex64> {
    let n = config.sites;
    let norm = 1.0 / (n as f64).sqrt();
    let shift = config.force * t;
    Array2::from_shape_fn((n, n), |(l, q)| {
        let grid = 2.0 * PI * ((q * l) % n) as f64 / n as f64;
        Complex64::from_polar(norm, grid + shift * l as f64)
    })
}

/// Boltzmann populations `exp(-β E)/Z`, shifted by the minimum energy.
pub fn boltzmann_populations(energies: &[f64], beta: InverseTemperature) -> Vec<f64> {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = match beta {
        InverseTemperature::Infinite => {
            // ground state(s); ties share the weight
            energies
                .iter()
                .map(|&e| {
                    if e - min <= 1e-12 * (1.0 + min.abs()) {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        }
        InverseTemperature::Finite(b) => energies.iter().map(|&e| (-b * (e - min)).exp()).collect(),
    };
    let z: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / z).collect()
}

/// Bloch-diagonal thermal state `exp(-β H_0)/Z`.
pub fn thermal_state(config: &LatticeConfig) -> DensityMatrix {
    let energies: Vec<f64> = band_energies(config).iter().map(|b| b.energy).collect();
    let populations = match config.beta {
        InverseTemperature::Infinite => {
            let mut p = vec![0.0; config.sites];
            p[0] = 1.0;
            p
        }
        beta => boltzmann_populations(&energies, beta),
    };
    DensityMatrix::from_populations(&populations)
}

/// Wannier-Stark ladder state on the ring.
#[derive(Debug, Clone)]
pub struct WannierStarkState {
    /// Real amplitudes on sites `0..L`, normalised to one.
    pub amplitudes: Array1<f64>,
    /// `|1 - Σ_l J_{l-m}^2|` before renormalisation (weight lost to the ring).
    pub truncation_defect: f64,
    /// Ladder energy `-m F` of the infinite-lattice eigenstate.
    pub energy: f64,
}

/// Eigenstate of `H_0 - F Σ l |l><l|` centred on site `m`, with amplitudes
/// `J_{l-m}(-J/F)` and the offset `l - m` taken cyclically in `[-L/2, L/2)`.
pub fn wannier_stark_state(config: &LatticeConfig, m: i64) -> Result<WannierStarkState> {
    if config.force == 0.0 {
        return Err(Error::Singular(
            "Wannier-Stark states need a nonzero force".into(),
        ));
    }
    let n = config.sites as i64;
    let argument = -config.hopping / config.force;
    if argument.abs() > n as f64 / 8.0 {
        warn!(
            "localisation length J/|F| = {} is not small compared with L = {}",
            argument.abs(),
            n
        );
    }
    let half = n / 2;
    let table = specfun::bessel_j_sequence(half as usize, argument)?;
    let amplitudes: Array1<f64> = (0..n)
        .map(|l| {
            let offset = (l - m).rem_euclid(n);
            let offset = if offset >= half { offset - n } else { offset };
            let value = table[offset.unsigned_abs() as usize];
            if offset < 0 && offset % 2 != 0 {
                -value
            } else {
                value
            }
        })
        .collect();
    let norm_sq: f64 = amplitudes.iter().map(|a| a * a).sum();
    Ok(WannierStarkState {
        amplitudes: amplitudes.mapv(|a| a / norm_sq.sqrt()),
        truncation_defect: (1.0 - norm_sq).abs(),
        energy: -(m as f64) * config.force,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray_linalg::Eigh;

    fn config(sites: usize, hopping: f64, force: f64) -> LatticeConfig {
        LatticeConfig::new(sites, hopping, force, 0.1, InverseTemperature::Finite(1.0)).unwrap()
    }

    fn dagger(m: &Array2<Complex64>) -> Array2<Complex64> {
        m.t().mapv(|z| z.conj())
    }

    fn bloch_diagonal(op: &Array2<Complex64>) -> Vec<Complex64> {
        let fourier = Fourier::new(op.nrows());
        fourier.wannier_to_bloch(op).diag().to_vec()
    }

    #[test]
    fn config_validation() {
        assert!(LatticeConfig::new(3, 1.0, 0.1, 0.1, InverseTemperature::Infinite).is_err());
        assert!(LatticeConfig::new(8, 0.0, 0.1, 0.1, InverseTemperature::Infinite).is_err());
        assert!(LatticeConfig::new(8, 1.0, 0.1, -0.1, InverseTemperature::Infinite).is_err());
        assert!(LatticeConfig::new(8, 1.0, f64::NAN, 0.1, InverseTemperature::Infinite).is_err());
        assert!(LatticeConfig::new(8, 1.0, 0.1, 0.1, InverseTemperature::Finite(-1.0)).is_err());
        assert!(LatticeConfig::new(8, 1.0, -0.3, 0.0, InverseTemperature::Finite(0.0)).is_ok());
    }

    #[test]
    fn inverse_temperature_parsing() {
        assert_eq!(
            "inf".parse::<InverseTemperature>().unwrap(),
            InverseTemperature::Infinite
        );
        assert_eq!(
            "2.5".parse::<InverseTemperature>().unwrap(),
            InverseTemperature::Finite(2.5)
        );
        assert!("hot".parse::<InverseTemperature>().is_err());
        let json = serde_json::to_string(&InverseTemperature::Infinite).unwrap();
        assert_eq!(json, "\"inf\"");
        let back: InverseTemperature = serde_json::from_str(&json).unwrap();
        assert!(back.is_infinite());
    }

    #[test]
    fn kinetic_spectrum_l4() {
        let h = build_kinetic(&config(4, 1.0, 0.0));
        let (values, _) = h.eigh(UPLO::Lower).unwrap();
        let expected = [-1.0, 0.0, 0.0, 1.0];
        for (v, e) in values.iter().zip(expected) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn kinetic_row_sums_and_bloch_diagonal() {
        let c = config(6, 2.0, 0.0);
        let h = build_kinetic(&c);
        for row in h.rows() {
            assert_abs_diff_eq!(row.sum().re, -2.0, epsilon = 1e-14);
        }
        let diag = bloch_diagonal(&h);
        assert_abs_diff_eq!(diag[1].re, -1.0, epsilon = 1e-13);
        for (k, d) in diag.iter().enumerate() {
            assert_abs_diff_eq!(d.re, dispersion(2.0, c.quasimomentum(k)), epsilon = 1e-13);
        }
    }

    #[test]
    fn kinetic_eigenvalues_match_band() {
        let c = config(13, 1.3, 0.0);
        let (values, _) = build_kinetic(&c).eigh(UPLO::Lower).unwrap();
        let mut band: Vec<f64> = band_energies(&c).iter().map(|b| b.energy).collect();
        band.sort_by(f64::total_cmp);
        for (v, e) in values.iter().zip(band) {
            assert_abs_diff_eq!(*v, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn band_is_symmetric_with_minimum_at_zero() {
        let c = config(10, 1.0, 0.0);
        let band = band_energies(&c);
        assert_eq!(band[0].energy, -1.0);
        for k in 1..10 {
            assert_abs_diff_eq!(band[k].energy, band[10 - k].energy, epsilon = 1e-14);
            assert!(band[k].energy > band[0].energy);
        }
    }

    #[test]
    fn velocity_bloch_diagonal() {
        let diag = bloch_diagonal(&build_velocity(&config(4, 1.0, 0.0)));
        let expected = [0.0, 1.0, 0.0, -1.0];
        for (d, e) in diag.iter().zip(expected) {
            assert_abs_diff_eq!(d.re, e, epsilon = 1e-13);
            assert_abs_diff_eq!(d.im, 0.0, epsilon = 1e-13);
        }
        let diag8 = bloch_diagonal(&build_velocity(&config(8, 1.0, 0.0)));
        assert_abs_diff_eq!(diag8[2].re, 1.0, epsilon = 1e-13);
        let v = build_velocity(&config(9, 0.7, 0.0));
        assert_abs_diff_eq!(v.diag().sum().norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn velocity_commutes_with_kinetic() {
        let c = config(11, 1.0, 0.0);
        let h = build_kinetic(&c);
        let v = build_velocity(&c);
        let comm = h.dot(&v) - v.dot(&h);
        assert!(comm.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
        // anti-Hermitian hopping structure times i: v is Hermitian
        assert!((&v - &dagger(&v)).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn bloch_transform_examples() {
        let mixed = DensityMatrix::maximally_mixed(6, Basis::Wannier);
        let b = bloch_transform(&mixed, Basis::Bloch).unwrap();
        for ((i, j), z) in b.matrix().indexed_iter() {
            let expected = if i == j { 1.0 / 6.0 } else { 0.0 };
            assert_abs_diff_eq!(z.re, expected, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }

        let mut site = Array2::zeros((5, 5));
        site[[0, 0]] = Complex64::new(1.0, 0.0);
        let site = DensityMatrix::new(site, Basis::Wannier).unwrap();
        let b = bloch_transform(&site, Basis::Bloch).unwrap();
        for z in b.matrix() {
            assert_abs_diff_eq!(z.re, 0.2, epsilon = 1e-15);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-15);
        }

        assert!(matches!(
            bloch_transform(&b, Basis::Bloch),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn gauge_basis_examples() {
        let c = config(8, 1.0, 0.3);
        let dft = crate::fourier::dft_matrix(8);
        let at_zero = gauge_wave_basis(&c, 0.0);
        assert!(at_zero
            .iter()
            .zip(&dft)
            .all(|(a, b)| (a - b).norm() < 1e-15));
        let untilted = gauge_wave_basis(&c.with_force(0.0), 17.0);
        assert!(untilted
            .iter()
            .zip(&dft)
            .all(|(a, b)| (a - b).norm() < 1e-15));

        let t = 2.0 * PI / (0.3 * 8.0);
        let shifted = gauge_wave_basis(&c, t);
        for q in 0..8 {
            for l in 0..8 {
                let expected = dft[[l, (q + 1) % 8]];
                assert!((shifted[[l, q]] - expected).norm() < 1e-13);
            }
        }
        let u = gauge_wave_basis(&c, 3.3);
        let eye = dagger(&u).dot(&u);
        for ((i, j), z) in eye.indexed_iter() {
            assert_abs_diff_eq!(z.re, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-13);
        }
    }

    #[test]
    fn thermal_state_examples() {
        let hot = thermal_state(&config(6, 1.0, 0.0).with_beta(InverseTemperature::Finite(0.0)));
        for k in 0..6 {
            assert_abs_diff_eq!(hot.matrix()[[k, k]].re, 1.0 / 6.0, epsilon = 1e-15);
        }
        let cold = thermal_state(&config(6, 1.0, 0.0).with_beta(InverseTemperature::Infinite));
        assert_eq!(cold.matrix()[[0, 0]].re, 1.0);
        assert_eq!(cold.trace().re, 1.0);

        let warm = thermal_state(&config(4, 1.0, 0.0).with_beta(InverseTemperature::Finite(1.0)));
        let ratio = warm.matrix()[[0, 0]].re / warm.matrix()[[2, 2]].re;
        assert_abs_diff_eq!(ratio, 2f64.exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(warm.trace().re, 1.0, epsilon = 1e-15);

        // huge β does not overflow
        let frozen = thermal_state(&config(8, 1.0, 0.0).with_beta(InverseTemperature::Finite(1e4)));
        assert_abs_diff_eq!(frozen.matrix()[[0, 0]].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn thermal_state_commutes_with_kinetic() {
        let c = config(9, 1.0, 0.0).with_beta(InverseTemperature::Finite(2.0));
        let rho = thermal_state(&c).to_basis(Basis::Wannier);
        let h = build_kinetic(&c);
        let comm = h.dot(rho.matrix()) - rho.matrix().dot(&h);
        assert!(comm.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-12);
    }

    #[test]
    fn wannier_stark_amplitudes() {
        let c = config(32, 1.0, 2.5);
        let ws = wannier_stark_state(&c, 3).unwrap();
        // amplitude at l - m = 1 is J_1(-J/F) = -J_1(0.4)
        let j1 = specfun::bessel_j(1, 0.4).unwrap();
        assert_abs_diff_eq!(ws.amplitudes[4], -j1, epsilon = 1e-12);
        assert_abs_diff_eq!(ws.amplitudes[2], j1, epsilon = 1e-12);
        assert!(ws.truncation_defect < 1e-14);

        let strong = wannier_stark_state(&config(16, 1e-6, 1.0), 5).unwrap();
        assert_abs_diff_eq!(strong.amplitudes[5], 1.0, epsilon = 1e-10);

        assert!(matches!(
            wannier_stark_state(&config(16, 1.0, 0.0), 0),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn wannier_stark_orthogonality_and_energy() {
        let c = config(64, 1.0, 0.5); // J/F = 2 <= L/8
        let h0 = build_kinetic(&c);
        let states: Vec<_> = (0..6)
            .map(|m| wannier_stark_state(&c, m).unwrap())
            .collect();
        for a in 0..6 {
            for b in 0..6 {
                let overlap = states[a].amplitudes.dot(&states[b].amplitudes);
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(overlap, expected, epsilon = 1e-8);
            }
            let psi = states[a].amplitudes.mapv(|x| Complex64::new(x, 0.0));
            let kinetic = psi.dot(&h0.dot(&psi));
            assert_abs_diff_eq!(kinetic.re, 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn wannier_stark_is_eigenstate_of_tilted_chain() {
        // open-chain Hamiltonian with coordinates centred on the state
        let c = config(40, 1.0, 0.8);
        let ws = wannier_stark_state(&c, 20).unwrap();
        let mut h = build_kinetic(&c);
        h[[0, 39]] = Complex64::new(0.0, 0.0);
        h[[39, 0]] = Complex64::new(0.0, 0.0);
        for l in 0..40 {
            h[[l, l]] = Complex64::new(-0.8 * l as f64, 0.0);
        }
        let psi = ws.amplitudes.mapv(|x| Complex64::new(x, 0.0));
        let h_psi = h.dot(&psi);
        for l in 0..40 {
            assert_abs_diff_eq!((h_psi[l] - psi[l] * ws.energy).norm(), 0.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(ws.energy, -16.0, epsilon = 1e-14);
    }
}

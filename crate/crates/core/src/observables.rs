//! Physical-frame measurements on carrier states.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{group_velocity, Basis, DensityMatrix};

const NEGATIVE_POPULATION_FLOOR: f64 = -1e-9;
const NORMALISATION_TOLERANCE: f64 = 1e-10;

/// Populations over the quasimomentum grid `2πk/L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentumDistribution {
    pub populations: Vec<f64>,
}

impl MomentumDistribution {
    pub fn new(populations: Vec<f64>) -> Result<Self> {
        if let Some((k, p)) = populations
            .iter()
            .enumerate()
            .find(|(_, p)| **p < NEGATIVE_POPULATION_FLOOR || !p.is_finite())
        {
            return Err(Error::InvalidState(format!("population p[{k}] = {p:e}")));
        }
        let total: f64 = populations.iter().sum();
        if (total - 1.0).abs() > NORMALISATION_TOLERANCE {
            return Err(Error::InvalidState(format!(
                "populations sum to {total} instead of 1"
            )));
        }
        Ok(Self { populations })
    }

    pub fn len(&self) -> usize {
        self.populations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.populations.is_empty()
    }

    pub fn quasimomentum(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.populations.len() as f64
    }

    /// `Σ_k J sin(2πk/L) p_k`.
    pub fn mean_velocity(&self, hopping: f64) -> f64 {
        self.populations
            .iter()
            .enumerate()
            .map(|(k, p)| group_velocity(hopping, self.quasimomentum(k)) * p)
            .sum()
    }

    /// L¹ distance to another distribution on the same grid.
    pub fn l1_distance(&self, other: &MomentumDistribution) -> f64 {
        self.populations
            .iter()
            .zip(&other.populations)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Cyclic mean of `ρ_{l, l+d}` at one diagonal offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoherenceProfile {
    pub offset: i64,
    pub value: Complex64,
    /// `value` divided by the `d = 0` value.
    pub normalized: Complex64,
}

fn require_basis(rho: &DensityMatrix, basis: Basis, what: &str) -> Result<()> {
    if rho.basis() != basis {
        return Err(Error::Usage(format!(
            "{what} expects a {basis:?}-basis state, got {:?}",
            rho.basis()
        )));
    }
    Ok(())
}

/// `Σ_k J sin(2πk/L) ρ_kk` of a physical-frame Bloch-basis state.
pub fn mean_velocity(rho: &DensityMatrix, hopping: f64) -> Result<f64> {
    require_basis(rho, Basis::Bloch, "mean_velocity")?;
    let n = rho.dim();
    Ok(rho
        .matrix()
        .diag()
        .iter()
        .enumerate()
        .map(|(k, z)| group_velocity(hopping, 2.0 * PI * k as f64 / n as f64) * z.re)
        .sum())
}

pub fn momentum_distribution(rho: &DensityMatrix) -> Result<MomentumDistribution> {
    require_basis(rho, Basis::Bloch, "momentum_distribution")?;
    MomentumDistribution::new(rho.matrix().diag().iter().map(|z| z.re).collect())
}

/// Linear entropy `Tr[ρ²]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    // Tr[ρ ρ] = Σ_ij ρ_ij ρ_ji
    let mut total = Complex64::new(0.0, 0.0);
    for ((i, j), z) in m.indexed_iter() {
        total += z * m[[j, i]];
    }
    total.re
}

/// Offsets `-⌊L/2⌋ ..= ⌊L/2⌋` of the cyclic diagonal means of a Wannier-basis state.
pub fn coherence_profile(rho: &DensityMatrix) -> Result<Vec<CoherenceProfile>> {
    require_basis(rho, Basis::Wannier, "coherence_profile")?;
    let n = rho.dim() as i64;
    let m = rho.matrix();
    let mean = |d: i64| -> Complex64 {
        let total: Complex64 = (0..n)
            .map(|l| m[[l as usize, (l + d).rem_euclid(n) as usize]])
            .sum();
        total / n as f64
    };
    let centre = mean(0);
    Ok((-(n / 2)..=n / 2)
        .map(|d| {
            let value = mean(d);
            CoherenceProfile {
                offset: d,
                value,
                normalized: value / centre,
            }
        })
        .collect())
}

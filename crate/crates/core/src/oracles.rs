//! Closed-form stationary results used as reference curves: the Esaki-Tsu
//! drift velocity with its thermal prefactor, the stationary matrix of the
//! single-rate relaxation in the Wannier-Stark basis, the stationary
//! quasimomentum distribution of the ground-sink model, and the
//! zero-hopping estimate of the Wannier coherences.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{
    wannier_stark_state, Basis, DensityMatrix, InverseTemperature, LatticeConfig,
};
use crate::specfun;

/// `I_1(βJ) / I_0(βJ)`: 0 at infinite temperature, 1 at zero temperature.
pub fn thermal_prefactor(beta: InverseTemperature, hopping: f64) -> Result<f64> {
    match beta {
        InverseTemperature::Infinite => Ok(1.0),
        InverseTemperature::Finite(b) => specfun::bessel_i_ratio(1, b * hopping),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EsakiTsuParams {
    /// Velocity scale `v_0`; equal to `J` for the tight-binding band.
    pub v_scale: f64,
    pub gamma: f64,
    pub beta: InverseTemperature,
    pub hopping: f64,
}

impl EsakiTsuParams {
    pub fn new(v_scale: f64, gamma: f64, beta: InverseTemperature, hopping: f64) -> Result<Self> {
        if !(v_scale > 0.0 && v_scale.is_finite()) {
            return Err(Error::Config(format!("v_0 = {v_scale} must be positive")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("gamma = {gamma} must be positive")));
        }
        Ok(Self {
            v_scale,
            gamma,
            beta,
            hopping,
        })
    }

    /// `v_0 = J`, with `γ` and `β` taken from the configuration.
    pub fn for_config(config: &LatticeConfig) -> Result<Self> {
        Self::new(config.hopping, config.gamma, config.beta, config.hopping)
    }
}

/// `v_0 f(β) x / (1 + x²)` with `x = F/γ`.
pub fn esaki_tsu_velocity(force: f64, params: &EsakiTsuParams) -> Result<f64> {
    let x = force / params.gamma;
    let f = thermal_prefactor(params.beta, params.hopping)?;
    Ok(params.v_scale * f * x / (1.0 + x * x))
}

/// Stationary quasimomentum density of the ground-sink model on the
/// continuum `k ∈ [0, 2π)`: `(γ/F) e^{-(γ/F) k} / (1 - e^{-2πγ/F})`.
pub fn sink_stationary_distribution(k: f64, force: f64, gamma: f64) -> Result<f64> {
    if !(force > 0.0) {
        return Err(Error::Config(format!(
            "sink distribution needs F > 0, got {force}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma = {gamma} must be positive")));
    }
    let rate = gamma / force;
    // 2π itself is kept as the left limit of the jump
    let k = if (0.0..=2.0 * PI).contains(&k) {
        k
    } else {
        k.rem_euclid(2.0 * PI)
    };
    Ok(rate * (-rate * k).exp() / -(-2.0 * PI * rate).exp_m1())
}

/// [`sink_stationary_distribution`] sampled on `2πk/L` and renormalised to
/// unit sum. Negative forces are mirrored (`k -> -k`).
pub fn sink_grid_distribution(sites: usize, force: f64, gamma: f64) -> Result<Vec<f64>> {
    let mut p = Vec::with_capacity(sites);
    for k in 0..sites {
        let index = if force < 0.0 { (sites - k) % sites } else { k };
        let kappa = 2.0 * PI * index as f64 / sites as f64;
        p.push(sink_stationary_distribution(kappa, force.abs(), gamma)?);
    }
    let total: f64 = p.iter().sum();
    Ok(p.into_iter().map(|x| x / total).collect())
}

/// `(1/L) / (1 + i (F/γ) d)`.
pub fn coherence_estimate(offset: i64, force: f64, gamma: f64, sites: usize) -> Result<Complex64> {
    if !(gamma > 0.0) {
        return Err(Error::Config(format!("gamma = {gamma} must be positive")));
    }
    let denominator = Complex64::new(1.0, force / gamma * offset as f64);
    Ok(Complex64::new(1.0 / sites as f64, 0.0) / denominator)
}

/// Stationary state of the single-rate relaxation, expressed in the
/// Wannier-Stark basis `m = 0..L-1`.
#[derive(Debug, Clone)]
pub struct WannierStarkMatrix {
    pub matrix: Array2<Complex64>,
    config: LatticeConfig,
}

fn cyclic_offset(d: i64, n: i64) -> i64 {
    let r = d.rem_euclid(n);
    if r >= n / 2 {
        r - n
    } else {
        r
    }
}

/// `ρ̄_{m,m'} = ρ̄⁰_{m,m'} / (1 + i (m' - m) F/γ)` with
/// `ρ̄⁰_{m,m'} = (1/L) I_{m-m'}(βJ) / I_0(βJ)`; ladder offsets are taken
/// cyclically on the ring.
pub fn simple_relaxation_stationary(config: &LatticeConfig) -> Result<WannierStarkMatrix> {
    if config.force == 0.0 {
        return Err(Error::Singular(
            "the Wannier-Stark basis is undefined at F = 0".into(),
        ));
    }
    if !(config.gamma > 0.0) {
        return Err(Error::Config("stationary state needs gamma > 0".into()));
    }
    let n = config.sites as i64;
    let ratio = |d: i64| -> Result<f64> {
        match config.beta {
            InverseTemperature::Infinite => Ok(1.0),
            InverseTemperature::Finite(b) => {
                specfun::bessel_i_ratio(d.unsigned_abs() as i32, b * config.hopping)
            }
        }
    };
    let ratios = (0..=n / 2).map(ratio).collect::<Result<Vec<f64>>>()?;
    let x = config.force / config.gamma;
    let inv_n = 1.0 / n as f64;
    let matrix = Array2::from_shape_fn((config.sites, config.sites), |(m, mp)| {
        let d = cyclic_offset(m as i64 - mp as i64, n);
        let base = inv_n * ratios[d.unsigned_abs() as usize];
        Complex64::new(base, 0.0) / Complex64::new(1.0, -(d as f64) * x)
    });
    Ok(WannierStarkMatrix {
        matrix,
        config: *config,
    })
}

impl WannierStarkMatrix {
    /// `S ρ S†` with the columns of `S` the ring Wannier-Stark states.
    pub fn to_wannier(&self) -> Result<DensityMatrix> {
        let n = self.config.sites;
        let mut basis = Array2::<Complex64>::zeros((n, n));
        for m in 0..n {
            let state = wannier_stark_state(&self.config, m as i64)?;
            for (l, a) in state.amplitudes.iter().enumerate() {
                basis[[l, m]] = Complex64::new(*a, 0.0);
            }
        }
        let rho = basis.dot(&self.matrix).dot(&basis.t());
        DensityMatrix::new(rho, Basis::Wannier)
    }

    pub fn to_bloch(&self) -> Result<DensityMatrix> {
        Ok(self.to_wannier()?.to_basis(Basis::Bloch))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observables::mean_velocity;
    use approx::assert_abs_diff_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
        let h = (b - a) / intervals as f64;
        let mut total = f(a) + f(b);
        for i in 1..intervals {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            total += weight * f(a + i as f64 * h);
        }
        total * h / 3.0
    }

    #[test]
    fn prefactor_examples() {
        assert_eq!(
            thermal_prefactor(InverseTemperature::Finite(0.0), 1.0).unwrap(),
            0.0
        );
        assert_eq!(
            thermal_prefactor(InverseTemperature::Infinite, 1.0).unwrap(),
            1.0
        );
        let expected = specfun::bessel_i(1, 1.0).unwrap() / specfun::bessel_i(0, 1.0).unwrap();
        assert_abs_diff_eq!(
            thermal_prefactor(InverseTemperature::Finite(1.0), 1.0).unwrap(),
            expected,
            epsilon = 1e-15
        );
        let mut last = -1.0;
        for i in 0..200 {
            let f = thermal_prefactor(InverseTemperature::Finite(0.25 * i as f64), 1.0).unwrap();
            assert!(f > last);
            last = f;
        }
    }

    #[test]
    fn esaki_tsu_examples() {
        let p = EsakiTsuParams::new(1.0, 0.04, InverseTemperature::Infinite, 1.0).unwrap();
        assert_eq!(esaki_tsu_velocity(0.0, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(esaki_tsu_velocity(0.04, &p).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(esaki_tsu_velocity(0.08, &p).unwrap(), 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(
            esaki_tsu_velocity(-0.1, &p).unwrap(),
            -esaki_tsu_velocity(0.1, &p).unwrap(),
            epsilon = 1e-16
        );
        assert!(EsakiTsuParams::new(1.0, 0.0, InverseTemperature::Infinite, 1.0).is_err());
    }

    #[test]
    fn esaki_tsu_peak_by_grid_scan() {
        let p = EsakiTsuParams::new(1.0, 0.08, InverseTemperature::Finite(2.0), 1.0).unwrap();
        let (best, _) = (1..4000)
            .map(|i| 1e-4 * i as f64)
            .map(|f| (f, esaki_tsu_velocity(f, &p).unwrap()))
            .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
        assert_abs_diff_eq!(best, 0.08, epsilon = 1e-4);
    }

    #[test]
    fn sink_distribution_normalisation_and_limits() {
        let integral = simpson(
            |k| sink_stationary_distribution(k, 0.2, 0.04).unwrap(),
            0.0,
            2.0 * PI,
            2000,
        );
        assert_abs_diff_eq!(integral, 1.0, epsilon = 1e-12);
        let flat = sink_stationary_distribution(1.0, 1.0, 1e-9).unwrap();
        assert_abs_diff_eq!(flat, 1.0 / (2.0 * PI), epsilon = 1e-8);
        let jump = sink_stationary_distribution(0.0, 0.2, 0.04).unwrap()
            / sink_stationary_distribution(2.0 * PI - 1e-12, 0.2, 0.04).unwrap();
        assert_abs_diff_eq!(jump, (2.0 * PI * 0.2f64).exp(), epsilon = 1e-9);
        assert!(sink_stationary_distribution(1.0, -0.2, 0.04).is_err());
    }

    #[test]
    fn sink_distribution_mean_velocity() {
        for x in [0.5, 1.0, 2.0, 5.0] {
            let gamma = 0.04;
            let force = x * gamma;
            let quadrature = simpson(
                |k| k.sin() * sink_stationary_distribution(k, force, gamma).unwrap(),
                0.0,
                2.0 * PI,
                4000,
            );
            assert_abs_diff_eq!(quadrature, x / (1.0 + x * x), epsilon = 1e-10);
        }
        // the F = γ case gives J/2
        let half = simpson(
            |k| k.sin() * sink_stationary_distribution(k, 0.1, 0.1).unwrap(),
            0.0,
            2.0 * PI,
            4000,
        );
        assert_abs_diff_eq!(half, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn sink_distribution_satisfies_transport_balance() {
        let (force, gamma) = (0.2, 0.04);
        let h = 1e-5;
        for i in 1..60 {
            let k = 0.1 * i as f64;
            let rho = sink_stationary_distribution(k, force, gamma).unwrap();
            let derivative = (sink_stationary_distribution(k + h, force, gamma).unwrap()
                - sink_stationary_distribution(k - h, force, gamma).unwrap())
                / (2.0 * h);
            assert_abs_diff_eq!(force * derivative + gamma * rho, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn grid_distribution_mirrors_negative_force() {
        let plus = sink_grid_distribution(16, 0.2, 0.04).unwrap();
        let minus = sink_grid_distribution(16, -0.2, 0.04).unwrap();
        assert_abs_diff_eq!(plus.iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        for k in 0..16 {
            assert_eq!(plus[k], minus[(16 - k) % 16]);
        }
    }

    #[test]
    fn coherence_estimate_examples() {
        assert_eq!(
            coherence_estimate(0, 0.2, 0.04, 64).unwrap(),
            Complex64::new(1.0 / 64.0, 0.0)
        );
        let z = coherence_estimate(1, 0.2, 0.04, 64).unwrap();
        let expected = Complex64::new(1.0, -5.0) / 26.0 / 64.0;
        assert_abs_diff_eq!((z - expected).norm(), 0.0, epsilon = 1e-17);
        for d in -5..=5 {
            let z = coherence_estimate(d, 0.3, 0.1, 10).unwrap();
            let modulus = 0.1 / (1.0 + 9.0 * (d * d) as f64).sqrt();
            assert_abs_diff_eq!(z.norm(), modulus, epsilon = 1e-16);
        }
    }

    fn cfg(force: f64, gamma: f64, beta_j: f64) -> LatticeConfig {
        LatticeConfig::new(
            64,
            1.0,
            force,
            gamma,
            InverseTemperature::from_beta_j(beta_j, 1.0),
        )
        .unwrap()
    }

    #[test]
    fn stationary_matrix_structure() {
        let hot = simple_relaxation_stationary(&cfg(0.2, 0.04, 0.0)).unwrap();
        for ((m, mp), z) in hot.matrix.indexed_iter() {
            let expected = if m == mp { 1.0 / 64.0 } else { 0.0 };
            assert_abs_diff_eq!(z.re, expected, epsilon = 1e-16);
            assert_abs_diff_eq!(z.im, 0.0, epsilon = 1e-16);
        }
        let warm = simple_relaxation_stationary(&cfg(0.2, 0.04, 1.0)).unwrap();
        for m in 0..64 {
            assert_abs_diff_eq!(warm.matrix[[m, m]].re, 1.0 / 64.0, epsilon = 1e-16);
            for mp in 0..64 {
                let herm = warm.matrix[[m, mp]] - warm.matrix[[mp, m]].conj();
                assert!(herm.norm() < 1e-16);
            }
        }
        assert!(matches!(
            simple_relaxation_stationary(&cfg(0.0, 0.04, 1.0)),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn stationary_matrix_limits() {
        let weak = simple_relaxation_stationary(&cfg(1e-9, 1.0, 2.0)).unwrap();
        let i0 = specfun::bessel_i(0, 2.0).unwrap();
        let expected = specfun::bessel_i(3, 2.0).unwrap() / i0 / 64.0;
        assert_abs_diff_eq!(weak.matrix[[5, 2]].re, expected, epsilon = 1e-12);
        let strong = simple_relaxation_stationary(&cfg(1e9, 1.0, 2.0)).unwrap();
        assert!(strong.matrix[[5, 4]].norm() < 1e-10);
    }

    #[test]
    fn stationary_matrix_reproduces_esaki_tsu() {
        for beta_j in [0.5, 1.0, 5.0] {
            let config = cfg(0.2, 0.04, beta_j);
            let rho = simple_relaxation_stationary(&config)
                .unwrap()
                .to_bloch()
                .unwrap();
            let v = mean_velocity(&rho, 1.0).unwrap();
            let expected =
                esaki_tsu_velocity(0.2, &EsakiTsuParams::for_config(&config).unwrap()).unwrap();
            assert_abs_diff_eq!(v, expected, epsilon = 1e-9);
        }
    }
}

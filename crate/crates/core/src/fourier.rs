//! FFT-backed changes of basis between Wannier sites and Bloch waves.
//!
//! Convention: `|k> = L^{-1/2} Σ_l exp(+i 2π k l / L) |l>`, so with
//! `U[l, k] = <l|k>` a Bloch-basis matrix maps to the Wannier basis as
//! `U ρ U†`. The gauge-frame basis at phase `θ = F t` is `D(θ) U` with
//! `D(θ) = diag(exp(i θ l))`, `l = 0..L-1`.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct Fourier {
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fourier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fourier").field("dim", &self.dim).finish()
    }
}

#[derive(Clone, Copy)]
enum Direction {
    // exp(-i ...)
    Forward,
    // exp(+i ...)
    Inverse,
}

impl Fourier {
    pub fn new(dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim,
            forward: planner.plan_fft_forward(dim),
            inverse: planner.plan_fft_inverse(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn plan(&self, direction: Direction) -> &Arc<dyn Fft<f64>> {
        match direction {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        }
    }

    fn transform_rows(&self, m: &mut Array2<Complex64>, direction: Direction) {
        let plan = self.plan(direction);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        let data = m
            .as_slice_mut()
            .expect("matrices passed to Fourier are in standard layout");
        plan.process_with_scratch(data, &mut scratch);
    }

    fn transform_columns(&self, m: &Array2<Complex64>, direction: Direction) -> Array2<Complex64> {
        let mut t = m.t().as_standard_layout().into_owned();
        self.transform_rows(&mut t, direction);
        t.t().as_standard_layout().into_owned()
    }

    fn conjugate(
        &self,
        m: &Array2<Complex64>,
        columns: Direction,
        rows: Direction,
    ) -> Array2<Complex64> {
        assert_eq!(m.dim(), (self.dim, self.dim), "matrix dimension mismatch");
        let mut out = self.transform_columns(m, columns);
        self.transform_rows(&mut out, rows);
        let norm = 1.0 / self.dim as f64;
        out.mapv_inplace(|z| z * norm);
        out
    }

    /// `U ρ U†`.
    pub fn bloch_to_wannier(&self, rho_bloch: &Array2<Complex64>) -> Array2<Complex64> {
        self.conjugate(rho_bloch, Direction::Inverse, Direction::Forward)
    }

    /// `U† ρ U`.
    pub fn wannier_to_bloch(&self, rho_wannier: &Array2<Complex64>) -> Array2<Complex64> {
        self.conjugate(rho_wannier, Direction::Forward, Direction::Inverse)
    }

    /// Physical Bloch-basis matrix from gauge-frame components at phase `theta`.
    pub fn gauge_to_physical(
        &self,
        rho_gauge: &Array2<Complex64>,
        theta: f64,
    ) -> Array2<Complex64> {
        let mut w = self.bloch_to_wannier(rho_gauge);
        apply_site_phases(&mut w, theta);
        self.wannier_to_bloch(&w)
    }

    /// Inverse of [`Fourier::gauge_to_physical`].
    pub fn physical_to_gauge(
        &self,
        rho_bloch: &Array2<Complex64>,
        theta: f64,
    ) -> Array2<Complex64> {
        let mut w = self.bloch_to_wannier(rho_bloch);
        apply_site_phases(&mut w, -theta);
        self.wannier_to_bloch(&w)
    }

    /// Physical Wannier-basis matrix from gauge-frame components at phase `theta`.
    pub fn gauge_to_physical_wannier(
        &self,
        rho_gauge: &Array2<Complex64>,
        theta: f64,
    ) -> Array2<Complex64> {
        let mut w = self.bloch_to_wannier(rho_gauge);
        apply_site_phases(&mut w, theta);
        w
    }
}

/// `D(θ) M D(θ)†` for the diagonal `D(θ) = diag(exp(i θ l))`.
pub fn apply_site_phases(m: &mut Array2<Complex64>, theta: f64) {
    if theta == 0.0 {
        return;
    }
    let phases: Vec<Complex64> = (0..m.nrows())
        .map(|l| Complex64::from_polar(1.0, theta * l as f64))
        .collect();
    for ((l, j), z) in m.indexed_iter_mut() {
        *z *= phases[l] * phases[j].conj();
    }
}

/// Dense `U[l, k] = L^{-1/2} exp(i 2π k l / L)`.
pub fn dft_matrix(dim: usize) -> Array2<Complex64> {
    let norm = 1.0 / (dim as f64).sqrt();
    Array2::from_shape_fn((dim, dim), |(l, k)| {
        let phase = 2.0 * std::f64::consts::PI * ((k * l) % dim) as f64 / dim as f64;
        Complex64::from_polar(norm, phase)
    })
}

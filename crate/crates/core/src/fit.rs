//! Two-parameter Esaki-Tsu fits of drift-velocity sweeps and peak analysis.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::InverseTemperature;
use crate::oracles::thermal_prefactor;

const INIT_GRID_POINTS: usize = 64;
const GRADIENT_TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 500;
const MAX_HALVINGS: usize = 60;
const SSE_RESOLUTION: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub force: f64,
    pub velocity: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSweep {
    pub entries: Vec<SweepEntry>,
}

impl ForceSweep {
    /// Forces must be finite and strictly increasing.
    pub fn new(entries: Vec<SweepEntry>) -> Result<Self> {
        for e in &entries {
            if !e.force.is_finite() || !e.velocity.is_finite() {
                return Err(Error::FitInput(format!("non-finite entry {e:?}")));
            }
        }
        if entries.windows(2).any(|w| w[1].force <= w[0].force) {
            return Err(Error::FitInput("forces must be strictly increasing".into()));
        }
        Ok(Self { entries })
    }

    /// All entries flagged converged.
    pub fn from_points(forces: &[f64], velocities: &[f64]) -> Result<Self> {
        if forces.len() != velocities.len() {
            return Err(Error::FitInput(format!(
                "{} forces but {} velocities",
                forces.len(),
                velocities.len()
            )));
        }
        Self::new(
            forces
                .iter()
                .zip(velocities)
                .map(|(&force, &velocity)| SweepEntry {
                    force,
                    velocity,
                    converged: true,
                })
                .collect(),
        )
    }

    fn converged(&self) -> (Vec<f64>, Vec<f64>) {
        self.entries
            .iter()
            .filter(|e| e.converged)
            .map(|e| (e.force, e.velocity))
            .unzip()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsakiTsuFit {
    pub a: f64,
    pub gamma_eff: f64,
    pub sse: f64,
    /// `gamma_eff`, where the fitted curve peaks.
    pub peak_f: f64,
    /// `a / 2`.
    pub peak_v: f64,
    pub iterations: usize,
}

/// `φ = x / (1 + x²)` with its first and second derivatives in `s = ln γ`.
fn shape(force: f64, log_gamma: f64) -> (f64, f64, f64) {
    let x = force * (-log_gamma).exp();
    let d = 1.0 + x * x;
    let phi_x = (1.0 - x * x) / (d * d);
    let phi_xx = 2.0 * x * (x * x - 3.0) / (d * d * d);
    (x / d, -x * phi_x, x * phi_x + x * x * phi_xx)
}

fn sse(forces: &[f64], velocities: &[f64], a: f64, log_gamma: f64) -> f64 {
    forces
        .iter()
        .zip(velocities)
        .map(|(&f, &v)| {
            let r = v - a * shape(f, log_gamma).0;
            r * r
        })
        .sum()
}

/// Optimal amplitude and residual for fixed `γ`.
fn projected(forces: &[f64], velocities: &[f64], log_gamma: f64) -> (f64, f64) {
    let (mut vp, mut pp) = (0.0, 0.0);
    for (&f, &v) in forces.iter().zip(velocities) {
        let phi = shape(f, log_gamma).0;
        vp += v * phi;
        pp += phi * phi;
    }
    let a = vp / pp;
    (a, sse(forces, velocities, a, log_gamma))
}

/// Least-squares fit of `a x/(1+x²)`, `x = F/γ_eff`, to the converged entries.
pub fn fit_esaki_tsu(sweep: &ForceSweep) -> Result<EsakiTsuFit> {
    let (forces, velocities) = sweep.converged();
    if forces.len() < 3 {
        return Err(Error::FitInput(format!(
            "need at least 3 converged points, got {}",
            forces.len()
        )));
    }
    let v_scale = velocities.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if v_scale == 0.0 {
        return Err(Error::DegenerateData("all velocities are zero".into()));
    }
    let f_scale = forces.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    let f_min = forces
        .iter()
        .map(|f| f.abs())
        .filter(|f| *f > 0.0)
        .fold(f64::INFINITY, f64::min);
    if f_scale == 0.0 {
        return Err(Error::DegenerateData("all forces are zero".into()));
    }
    let f: Vec<f64> = forces.iter().map(|x| x / f_scale).collect();
    let v: Vec<f64> = velocities.iter().map(|x| x / v_scale).collect();

    // coarse log grid over [F_min/10, 10 F_max]
    let lo = (f_min / f_scale / 10.0).ln();
    let hi = 10f64.ln();
    let (mut a, mut s, mut best) = (0.0, 0.0, f64::INFINITY);
    for i in 0..INIT_GRID_POINTS {
        let log_gamma = lo + (hi - lo) * i as f64 / (INIT_GRID_POINTS - 1) as f64;
        let (amp, value) = projected(&f, &v, log_gamma);
        if value < best {
            (a, s, best) = (amp, log_gamma, value);
        }
    }

    let mut trace = vec![best];
    let mut iterations = 0;
    loop {
        // gradient and Hessian of SSE/2 for residuals r = v - a φ
        let (mut haa, mut has, mut hss, mut jas, mut jss, mut ga, mut gs) =
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for (&fi, &vi) in f.iter().zip(&v) {
            let (phi, dphi, ddphi) = shape(fi, s);
            let r = vi - a * phi;
            let (da, ds) = (-phi, -a * dphi);
            haa += da * da;
            jas += da * ds;
            jss += ds * ds;
            has += -r * dphi;
            hss += -r * a * ddphi;
            ga += da * r;
            gs += ds * r;
        }
        has += jas;
        hss += jss;
        let gradient = (ga * ga + gs * gs).sqrt();
        if gradient <= GRADIENT_TOLERANCE {
            break;
        }
        if iterations == MAX_ITERATIONS {
            return Err(Error::Optimization {
                iterations,
                gradient_norm: gradient,
                trace,
            });
        }
        iterations += 1;
        // Newton step where the Hessian is positive definite, Gauss-Newton otherwise
        let newton_det = haa * hss - has * has;
        let newton = newton_det > 0.0 && haa > 0.0;
        let (caa, cas, css, det) = if newton {
            (haa, has, hss, newton_det)
        } else {
            (haa, jas, jss, haa * jss - jas * jas)
        };
        let (step_a, step_s) = if det > 1e-300 {
            ((-ga * css + gs * cas) / det, (-gs * caa + ga * cas) / det)
        } else {
            (-ga, -gs)
        };
        // predicted gain below the rounding of the SSE itself: the minimum is reached
        let predicted = -(ga * step_a + gs * step_s);
        if newton && predicted <= SSE_RESOLUTION * best {
            (a, s) = (a + step_a, s + step_s);
            best = sse(&f, &v, a, s);
            trace.push(best);
            break;
        }
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let (na, ns) = (a + lambda * step_a, s + lambda * step_s);
            let value = sse(&f, &v, na, ns);
            if value <= best {
                (a, s, best) = (na, ns, value);
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        trace.push(best);
        if !accepted {
            return Err(Error::Optimization {
                iterations,
                gradient_norm: gradient,
                trace,
            });
        }
    }
    if a < 0.0 {
        return Err(Error::DegenerateData(
            "velocities run against the force; amplitude would be negative".into(),
        ));
    }
    debug!("Esaki-Tsu fit converged in {iterations} iterations");
    let gamma_eff = s.exp() * f_scale;
    let amplitude = a * v_scale;
    Ok(EsakiTsuFit {
        a: amplitude,
        gamma_eff,
        sse: best * v_scale * v_scale,
        peak_f: gamma_eff,
        peak_v: 0.5 * amplitude,
        iterations,
    })
}

/// Vertex of the parabola in `ln F` through the sample maximum and its two
/// neighbours. The Esaki-Tsu curve is symmetric in `ln F` about its peak.
pub fn peak_location(sweep: &ForceSweep) -> Result<(f64, f64)> {
    let (forces, velocities) = sweep.converged();
    if forces.len() < 3 {
        return Err(Error::FitInput(format!(
            "need at least 3 converged points, got {}",
            forces.len()
        )));
    }
    if forces[0] <= 0.0 {
        return Err(Error::FitInput("peak search needs positive forces".into()));
    }
    let (imax, _) = velocities
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
        );
    if imax == 0 || imax == forces.len() - 1 {
        return Err(Error::NoInteriorMaximum);
    }
    let x: Vec<f64> = forces[imax - 1..=imax + 1].iter().map(|f| f.ln()).collect();
    let y = &velocities[imax - 1..=imax + 1];
    // divided differences
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let curvature = (d12 - d01) / (x[2] - x[0]);
    if curvature >= 0.0 {
        return Err(Error::NoInteriorMaximum);
    }
    let slope = d01 - curvature * (x[0] + x[1]);
    let vertex = (-slope / (2.0 * curvature)).clamp(x[0], x[2]);
    let value = y[0] + d01 * (vertex - x[0]) + curvature * (vertex - x[0]) * (vertex - x[1]);
    Ok((vertex.exp(), value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakCurrent {
    pub beta: InverseTemperature,
    /// `None` when the sweep carries no current at all.
    pub peak_f: Option<f64>,
    pub v_star: f64,
    /// `v_0 f(β) / 2`.
    pub predicted: f64,
}

/// Measured peak currents next to `v_0 f(β)/2`.
pub fn max_current_vs_temperature(
    sweeps: &[(InverseTemperature, ForceSweep)],
    v_scale: f64,
    hopping: f64,
) -> Result<Vec<PeakCurrent>> {
    sweeps
        .iter()
        .map(|(beta, sweep)| {
            let predicted = 0.5 * v_scale * thermal_prefactor(*beta, hopping)?;
            let silent = sweep
                .entries
                .iter()
                .all(|e| e.velocity.abs() <= 1e-12 * v_scale);
            let (peak_f, v_star) = if silent {
                (None, 0.0)
            } else {
                let (f, v) = peak_location(sweep)?;
                (Some(f), v)
            };
            Ok(PeakCurrent {
                beta: *beta,
                peak_f,
                v_star,
                predicted,
            })
        })
        .collect()
}

/// `count` points from `start` to `stop`, logarithmic or linear.
pub fn force_grid(start: f64, stop: f64, count: usize, logarithmic: bool) -> Result<Vec<f64>> {
    if count == 0 || !(start.is_finite() && stop.is_finite()) || (count > 1 && stop <= start) {
        return Err(Error::Usage(format!(
            "invalid force grid {start}:{stop}:{count}"
        )));
    }
    if logarithmic && start <= 0.0 {
        return Err(Error::Usage(
            "a logarithmic force grid needs start > 0".into(),
        ));
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let step = |i: usize| i as f64 / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                start
            } else if i == count - 1 {
                stop
            } else if logarithmic {
                (start.ln() + (stop.ln() - start.ln()) * step(i)).exp()
            } else {
                start + (stop - start) * step(i)
            }
        })
        .collect())
}

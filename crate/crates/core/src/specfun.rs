//! Bessel functions of the first kind `J_n` and modified Bessel functions `I_n`
//! for real arguments and integer order.
//!
//! `J_n` is evaluated by Miller's downward recurrence normalised with the
//! Neumann sum `J_0 + 2 Σ J_{2k} = 1`. `I_n` is evaluated from its ascending
//! power series with running rescaling, so the exponentially scaled variant
//! `e^{-x} I_n(x)` stays finite far beyond the overflow point of `I_n` itself.

use crate::error::{Error, Result};

/// Largest supported order magnitude.
pub const MAX_ORDER: i32 = 4096;
/// Largest supported `|x|` for `J_n`.
pub const MAX_J_ARGUMENT: f64 = 1.0e4;
/// Largest supported `x` for the unscaled `I_n` (beyond this `I_0` overflows).
pub const MAX_I_ARGUMENT: f64 = 700.0;
/// Largest supported `x` for the exponentially scaled `I_n`.
pub const MAX_I_SCALED_ARGUMENT: f64 = 1.0e5;

const SMALL_ARGUMENT: f64 = 1.0e-6;
const RESCALE_ABOVE: f64 = 1.0e250;

/// Signed integer order of a Bessel function, `|n| <= MAX_ORDER`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BesselOrder(i32);

impl BesselOrder {
    pub fn new(n: i32) -> Result<Self> {
        if n.unsigned_abs() > MAX_ORDER as u32 {
            return Err(Error::Range(format!(
                "Bessel order {n} exceeds |n| <= {MAX_ORDER}"
            )));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> i32 {
        self.0
    }

    fn magnitude(self) -> usize {
        self.0.unsigned_abs() as usize
    }

    fn is_odd(self) -> bool {
        self.0 % 2 != 0
    }
}

impl TryFrom<i32> for BesselOrder {
    type Error = Error;

    fn try_from(n: i32) -> Result<Self> {
        Self::new(n)
    }
}

fn check_j_argument(x: f64) -> Result<()> {
    if !x.is_finite() || x.abs() > MAX_J_ARGUMENT {
        return Err(Error::Range(format!(
            "J_n argument {x} outside |x| <= {MAX_J_ARGUMENT}"
        )));
    }
    Ok(())
}

/// `J_n(x)`, the Bessel function of the first kind.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    let order = BesselOrder::new(n)?;
    check_j_argument(x)?;
    let m = order.magnitude();
    let value = bessel_j_table(m, x.abs())[m];
    // J_{-n}(x) = (-1)^n J_n(x) and J_n(-x) = (-1)^n J_n(x)
    let flips = (order.0 < 0 && order.is_odd()) as u8 + (x < 0.0 && order.is_odd()) as u8;
    Ok(if flips % 2 == 1 { -value } else { value })
}

/// `J_0(x), ..., J_{max_order}(x)` from a single downward sweep.
pub fn bessel_j_sequence(max_order: usize, x: f64) -> Result<Vec<f64>> {
    BesselOrder::new(i32::try_from(max_order).unwrap_or(i32::MAX))?;
    check_j_argument(x)?;
    let mut values = bessel_j_table(max_order, x.abs());
    if x < 0.0 {
        values.iter_mut().skip(1).step_by(2).for_each(|v| *v = -*v);
    }
    Ok(values)
}

/// Nonnegative argument, orders `0..=max_order`.
fn bessel_j_table(max_order: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; max_order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x < SMALL_ARGUMENT {
        for (n, slot) in out.iter_mut().enumerate() {
            *slot = small_argument_series(n, x);
        }
        return out;
    }

    let effective = max_order.max(x.ceil() as usize) + 10;
    let mut start = effective + (160.0 * effective as f64).sqrt() as usize;
    start += start % 2;

    let mut above = 0.0; // J_{k+1}
    let mut current = 1.0; // J_k
    let mut even_sum = 0.0;
    for k in (1..=start).rev() {
        let below = 2.0 * k as f64 / x * current - above;
        above = current;
        current = below;
        let index = k - 1;
        if index <= max_order {
            out[index] = current;
        }
        if index > 0 && index % 2 == 0 {
            even_sum += 2.0 * current;
        }
        if current.abs() > RESCALE_ABOVE {
            let s = 1.0 / RESCALE_ABOVE;
            current *= s;
            above *= s;
            even_sum *= s;
            if index <= max_order {
                out[index..].iter_mut().for_each(|v| *v *= s);
            }
        }
    }
    let norm = even_sum + current;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

fn small_argument_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for i in 1..=n {
        lead *= half / i as f64;
        if lead == 0.0 {
            return 0.0;
        }
    }
    let q = half * half;
    let n = n as f64;
    lead * (1.0 - q / (n + 1.0) + q * q / (2.0 * (n + 1.0) * (n + 2.0)))
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// `e^{-x} I_n(x)` for `x >= 0`.
pub fn bessel_i_scaled(n: i32, x: f64) -> Result<f64> {
    let order = BesselOrder::new(n)?;
    if !x.is_finite() || !(0.0..=MAX_I_SCALED_ARGUMENT).contains(&x) {
        return Err(Error::Range(format!(
            "I_n argument {x} outside [0, {MAX_I_SCALED_ARGUMENT}]"
        )));
    }
    Ok(scaled_series(order.magnitude(), x))
}

fn scaled_series(n: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let log_first = n as f64 * half.ln() - ln_factorial(n) - x;
    let q = half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut log_offset = 0.0;
    let mut m = 0usize;
    loop {
        m += 1;
        term *= q / (m as f64 * (m + n) as f64);
        sum += term;
        if sum > RESCALE_ABOVE {
            term /= RESCALE_ABOVE;
            sum /= RESCALE_ABOVE;
            log_offset += RESCALE_ABOVE.ln();
        }
        if m as f64 > half && term < 1e-17 * sum {
            break;
        }
    }
    (log_first + log_offset).exp() * sum
}

/// `I_n(x)`, the modified Bessel function of the first kind, for `x >= 0`.
pub fn bessel_i(n: i32, x: f64) -> Result<f64> {
    let order = BesselOrder::new(n)?;
    if !x.is_finite() || !(0.0..=MAX_I_ARGUMENT).contains(&x) {
        return Err(Error::Range(format!(
            "I_n argument {x} outside [0, {MAX_I_ARGUMENT}]"
        )));
    }
    Ok(scaled_series(order.magnitude(), x) * x.exp())
}

/// `I_n(x) / I_0(x)`, finite for every supported `x`.
pub fn bessel_i_ratio(n: i32, x: f64) -> Result<f64> {
    let numerator = bessel_i_scaled(n, x)?;
    let denominator = bessel_i_scaled(0, x)?;
    Ok(numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    // Direct alternating series, only trustworthy for small |x|.
    fn j_series(n: i32, x: f64) -> f64 {
        let n = n as usize;
        let half = x / 2.0;
        let mut term = (0..n).fold(1.0, |acc, i| acc * half / (i + 1) as f64);
        let mut sum = term;
        for m in 1..200 {
            term *= -half * half / (m as f64 * (m + n) as f64);
            sum += term;
            if term.abs() < 1e-20 * sum.abs() {
                break;
            }
        }
        sum
    }

    fn i_series(n: i32, x: f64) -> f64 {
        let n = n as usize;
        let half = x / 2.0;
        let mut term = (0..n).fold(1.0, |acc, i| acc * half / (i + 1) as f64);
        let mut sum = term;
        for m in 1..400 {
            term *= half * half / (m as f64 * (m + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn values_at_zero() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(3, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_i(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i(1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn j0_of_two_matches_series() {
        let expected = j_series(0, 2.0);
        assert_abs_diff_eq!(bessel_j(0, 2.0).unwrap(), expected, epsilon = 1e-14);
        // frozen from the series: J_0(2) = 0.22389077914123567
        assert_abs_diff_eq!(expected, 0.223_890_779_141_235_67, epsilon = 1e-15);
    }

    #[test]
    fn i1_of_one_matches_series() {
        let expected = i_series(1, 1.0);
        let got = bessel_i(1, 1.0).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-13);
        assert_abs_diff_eq!(expected, 0.565_159_103_992_485_0, epsilon = 1e-15);
    }

    #[test]
    fn j_matches_series_over_small_arguments() {
        for n in [0, 1, 2, 5, 10, 30] {
            for x in [0.01, 0.3, 1.0, 4.5, 8.0] {
                let got = bessel_j(n, x).unwrap();
                assert_abs_diff_eq!(got, j_series(n, x), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn i_matches_series_relative() {
        for n in [0, 1, 3, 17, 64, 256] {
            for x in [0.05, 1.0, 7.5, 20.0, 50.0] {
                let expected = i_series(n, x);
                if expected < 1e-280 {
                    continue;
                }
                let got = bessel_i(n, x).unwrap();
                assert!(
                    ((got - expected) / expected).abs() < 1e-12,
                    "I_{n}({x}): {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn reflection_symmetries() {
        for n in 1..9 {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let x = 3.7;
            assert_eq!(bessel_j(-n, x).unwrap(), sign * bessel_j(n, x).unwrap());
            assert_eq!(bessel_j(n, -x).unwrap(), sign * bessel_j(n, x).unwrap());
            assert_eq!(bessel_i(-n, x).unwrap(), bessel_i(n, x).unwrap());
        }
    }

    #[test]
    fn recurrence_holds() {
        for n in 1..=50 {
            for &x in &[0.1, 0.7, 2.0, 9.3, 25.0, 40.0] {
                let lhs = bessel_j(n - 1, x).unwrap() + bessel_j(n + 1, x).unwrap();
                let rhs = 2.0 * n as f64 / x * bessel_j(n, x).unwrap();
                assert!((lhs - rhs).abs() < 1e-10, "n={n} x={x}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn neumann_normalisation() {
        for &x in &[0.5, 5.0, 33.0, 50.0] {
            let seq = bessel_j_sequence(120, x).unwrap();
            let total = seq[0] * seq[0] + 2.0 * seq[1..].iter().map(|v| v * v).sum::<f64>();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn sequence_agrees_with_single_order() {
        let seq = bessel_j_sequence(40, 12.25).unwrap();
        for (n, v) in seq.iter().enumerate() {
            assert_abs_diff_eq!(*v, bessel_j(n as i32, 12.25).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn ratio_is_increasing_and_bounded() {
        let mut previous = 0.0;
        for i in 1..500 {
            let z = 0.1 * i as f64;
            let r = bessel_i_ratio(1, z).unwrap();
            assert!(r > previous && r < 1.0, "z={z}: {r}");
            previous = r;
        }
        // scaled evaluation keeps the ratio finite well past I_0 overflow
        let far = bessel_i_ratio(1, 5000.0).unwrap();
        assert!(far > 0.9998 && far < 1.0);
    }

    #[test]
    fn range_errors() {
        assert!(matches!(bessel_j(5000, 1.0), Err(Error::Range(_))));
        assert!(matches!(bessel_j(1, f64::NAN), Err(Error::Range(_))));
        assert!(matches!(bessel_i(1, -1.0), Err(Error::Range(_))));
        assert!(matches!(bessel_i(0, 800.0), Err(Error::Range(_))));
        assert!(BesselOrder::try_from(4096).is_ok());
    }
}

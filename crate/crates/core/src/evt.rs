//! Extreme-value calibration: low-tail extraction, two-parameter Weibull
//! maximum-likelihood fitting, and the probability of sample inclusion
//! `psi(d) = exp(-(d / scale)^shape)`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Distances below this are lifted before fitting.
pub const DISTANCE_FLOOR: f64 = 1e-12;
/// Iteration cap of the shape solver, bracketing steps included.
pub const MAX_ITERATIONS: usize = 200;
/// Relative step size at which the shape solver stops.
pub const SHAPE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeibullFit {
    pub shape: f64,
    pub scale: f64,
    pub tail_size_used: usize,
    /// Set when fewer distances than the requested tail size were available.
    #[cfg_attr(feature = "serde", serde(default))]
    pub clamped: bool,
}

impl WeibullFit {
    pub fn new(shape: f64, scale: f64, tail_size_used: usize) -> Result<Self> {
        let fit = WeibullFit {
            shape,
            scale,
            tail_size_used,
            clamped: false,
        };
        fit.check()?;
        Ok(fit)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.shape.is_finite() && self.shape > 0.0) {
            return Err(Error::invalid(format!(
                "Weibull shape must be positive, got {}",
                self.shape
            )));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::invalid(format!(
                "Weibull scale must be positive, got {}",
                self.scale
            )));
        }
        if self.tail_size_used < 2 {
            return Err(Error::invalid("Weibull fit needs a tail of at least 2 values"));
        }
        Ok(())
    }

    pub fn psi(&self, d: f64) -> Result<f64> {
        psi(self, d)
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        weibull_log_likelihood(data, self.shape, self.scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tail {
    /// Ascending.
    pub values: Vec<f64>,
    pub clamped: bool,
}

/// The `tau` smallest values of `dist`, ascending. Equal values keep their
/// input order. With fewer than `tau` values, all are returned and the tail
/// is flagged as clamped.
pub fn extract_tail(dist: &[f64], tau: usize) -> Result<Tail> {
    if tau < 2 {
        return Err(Error::invalid(format!("tail size must be >= 2, got {tau}")));
    }
    if dist.is_empty() {
        return Err(Error::invalid("no distances to extract a tail from"));
    }
    if dist.iter().any(|d| d.is_nan()) {
        return Err(Error::invalid("NaN distance"));
    }
    let mut values = dist.to_vec();
    values.sort_by(f64::total_cmp);
    let clamped = values.len() < tau;
    values.truncate(tau);
    Ok(Tail { values, clamped })
}

/// Profile score of the shape parameter on log-data shifted so that its
/// maximum is zero. Returns `(g, g')`; `g` is strictly increasing.
fn shape_score(shifted_logs: &[f64], mean_shifted: f64, shape: f64) -> (f64, f64) {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for &y in shifted_logs {
        let w = libm::exp(shape * y);
        s0 += w;
        s1 += w * y;
        s2 += w * y * y;
    }
    let m1 = s1 / s0;
    let var = (s2 / s0 - m1 * m1).max(0.0);
    let inv = 1.0 / shape;
    (m1 - inv - mean_shifted, var + inv * inv)
}

/// Maximum-likelihood Weibull fit. The shape solves the profile-likelihood
/// equation by safeguarded Newton iteration inside a sign-change bracket,
/// falling back to bisection; the scale follows in closed form.
pub fn fit_weibull_mle(tail: &[f64]) -> Result<WeibullFit> {
    let n = tail.len();
    if n < 2 {
        return Err(Error::invalid(format!("Weibull fit needs >= 2 values, got {n}")));
    }
    if let Some(bad) = tail.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::invalid(format!(
            "Weibull fit needs positive finite values, got {bad}"
        )));
    }
    let logs: Vec<f64> = tail.iter().map(|&x| libm::log(x)).collect();
    let max_log = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_log = logs.iter().copied().fold(f64::INFINITY, f64::min);
    if max_log == min_log {
        return Err(Error::DegenerateData(format!(
            "all {n} tail values are equal ({})",
            tail[0]
        )));
    }
    let shifted: Vec<f64> = logs.iter().map(|l| l - max_log).collect();
    let nf = n as f64;
    let mean_shifted = shifted.iter().sum::<f64>() / nf;
    let var_log = shifted
        .iter()
        .map(|y| (y - mean_shifted) * (y - mean_shifted))
        .sum::<f64>()
        / (nf - 1.0);

    // The standard deviation of log-Weibull data is pi / (shape * sqrt(6)).
    let mut shape = core::f64::consts::PI / (libm::sqrt(6.0 * var_log));
    if !(shape.is_finite() && shape > 0.0) {
        shape = 1.0;
    }

    let score = |k: f64| shape_score(&shifted, mean_shifted, k);
    let mut iterations = 0;
    let (mut g, mut dg) = score(shape);
    let (mut lo, mut hi) = if g < 0.0 { (shape, f64::INFINITY) } else { (0.0, shape) };

    // Grow the bracket until the score changes sign.
    while lo == 0.0 || hi.is_infinite() {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return Err(Error::Numeric(format!(
                "Weibull shape bracket not found after {MAX_ITERATIONS} steps (last shape {shape})"
            )));
        }
        shape = if hi.is_infinite() { shape * 2.0 } else { shape * 0.5 };
        let (gs, dgs) = score(shape);
        g = gs;
        dg = dgs;
        if g < 0.0 {
            lo = shape;
        } else {
            hi = shape;
        }
    }

    loop {
        iterations += 1;
        if iterations > MAX_ITERATIONS {
            return Err(Error::Numeric(format!(
                "Weibull shape did not converge in {MAX_ITERATIONS} iterations \
                 (shape {shape}, bracket [{lo}, {hi}], score {g})"
            )));
        }
        let newton = shape - g / dg;
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let step = (next - shape).abs();
        shape = next;
        if step <= SHAPE_TOLERANCE * shape || (hi - lo) <= SHAPE_TOLERANCE * shape {
            break;
        }
        let (gs, dgs) = score(shape);
        g = gs;
        dg = dgs;
        if g == 0.0 {
            break;
        }
        if g < 0.0 {
            lo = shape;
        } else {
            hi = shape;
        }
    }

    let mean_w = shifted.iter().map(|&y| libm::exp(shape * y)).sum::<f64>() / nf;
    let scale = libm::exp(max_log + libm::log(mean_w) / shape);
    WeibullFit::new(shape, scale, n)
        .map_err(|e| Error::Numeric(format!("Weibull fit produced invalid parameters: {e}")))
}

/// Extracts the low tail of `dist`, lifts tiny distances to
/// [`DISTANCE_FLOOR`] and fits a Weibull to it.
pub fn fit_low_tail(dist: &[f64], tau: usize) -> Result<WeibullFit> {
    let Tail { mut values, clamped } = extract_tail(dist, tau)?;
    for v in &mut values {
        if *v < DISTANCE_FLOOR {
            *v = DISTANCE_FLOOR;
        }
    }
    let mut fit = fit_weibull_mle(&values)?;
    fit.clamped = clamped;
    Ok(fit)
}

/// Probability of sample inclusion at distance `d`.
pub fn psi(fit: &WeibullFit, d: f64) -> Result<f64> {
    if d.is_nan() || d < 0.0 {
        return Err(Error::invalid(format!("psi needs a nonnegative distance, got {d}")));
    }
    Ok(libm::exp(-libm::pow(d / fit.scale, fit.shape)))
}

pub fn weibull_log_likelihood(data: &[f64], shape: f64, scale: f64) -> f64 {
    let n = data.len() as f64;
    let sum_log: f64 = data.iter().map(|&x| libm::log(x)).sum();
    let sum_pow: f64 = data.iter().map(|&x| libm::pow(x / scale, shape)).sum();
    n * libm::log(shape) - n * shape * libm::log(scale) + (shape - 1.0) * sum_log - sum_pow
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tail_examples() {
        let t = extract_tail(&[5.0, 1.0, 4.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(t.values, vec![1.0, 2.0]);
        assert!(!t.clamped);

        let t = extract_tail(&[1.0, 2.0], 5).unwrap();
        assert_eq!(t.values, vec![1.0, 2.0]);
        assert!(t.clamped);

        assert!(extract_tail(&[1.0, 2.0], 1).is_err());
        assert!(extract_tail(&[], 2).is_err());
    }

    #[test]
    fn tail_ties_take_exactly_tau() {
        let t = extract_tail(&[0.3, 0.1, 0.3, 0.3, 0.2], 3).unwrap();
        assert_eq!(t.values, vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn psi_examples() {
        let fit = WeibullFit::new(2.0, 0.5, 10).unwrap();
        assert_eq!(psi(&fit, 0.0).unwrap(), 1.0);
        assert!((psi(&fit, 0.5).unwrap() - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert!((psi(&fit, 0.25).unwrap() - 0.778_800_783_071_404_9).abs() < 1e-15);
        assert!(psi(&fit, -0.1).is_err());
        assert!(psi(&fit, f64::NAN).is_err());
    }

    #[test]
    fn degenerate_and_invalid_tails() {
        assert!(matches!(fit_weibull_mle(&[1.0, 1.0]), Err(Error::DegenerateData(_))));
        assert!(matches!(fit_weibull_mle(&[1.0, 0.0, 2.0]), Err(Error::InvalidInput(_))));
        assert!(matches!(fit_weibull_mle(&[1.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn two_point_tail_fits() {
        let fit = fit_weibull_mle(&[0.5, 1.0]).unwrap();
        assert!(fit.shape > 0.0 && fit.scale > 0.0);
        assert_eq!(fit.tail_size_used, 2);
    }

    #[test]
    fn zero_distances_are_floored() {
        let fit = fit_low_tail(&[0.0, 0.4, 0.5, 0.6, 0.9], 4).unwrap();
        assert!(!fit.clamped);
        assert_eq!(fit.tail_size_used, 4);
        assert!(matches!(
            fit_low_tail(&[0.0, 0.0, 0.0], 3),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn mle_score_is_zero_at_solution() {
        let data = [0.31, 0.52, 0.44, 0.73, 0.61, 0.28, 0.39, 0.55];
        let fit = fit_weibull_mle(&data).unwrap();
        let h = 1e-6;
        let ll = |k: f64, l: f64| weibull_log_likelihood(&data, k, l);
        let dk = (ll(fit.shape + h, fit.scale) - ll(fit.shape - h, fit.scale)) / (2.0 * h);
        let dl = (ll(fit.shape, fit.scale + h) - ll(fit.shape, fit.scale - h)) / (2.0 * h);
        assert!(dk.abs() < 1e-5, "d/dshape = {dk}");
        assert!(dl.abs() < 1e-4, "d/dscale = {dl}");
    }
}

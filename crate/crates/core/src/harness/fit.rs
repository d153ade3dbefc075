//! Least-squares convergence rates.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("rate needs at least 3 rows, got {0}")]
    TooFewRows(usize),
    #[error("error is exactly zero at dx = {dx}; reported as exact")]
    DegenerateFit { dx: f64 },
    #[error("non-positive or non-finite value in the fit")]
    BadValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Slope of `log(error)` against `log(Δx)`.
    pub rate: f64,
    pub std_error: f64,
    /// Half-width of the 95% confidence band.
    pub half_width: f64,
    pub intercept: f64,
}

/// Fits `log e = a + rate·log Δx` by least squares.
pub fn fit_rate(dx: &[f64], errors: &[f64]) -> Result<RateFit, FitError> {
    let n = dx.len().min(errors.len());
    if n < 3 {
        return Err(FitError::TooFewRows(n));
    }
    for (&h, &e) in dx.iter().zip(errors) {
        if e == 0.0 {
            return Err(FitError::DegenerateFit { dx: h });
        }
        if !(e > 0.0 && h > 0.0 && e.is_finite() && h.is_finite()) {
            return Err(FitError::BadValue);
        }
    }
    let xs: Vec<f64> = dx[..n].iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors[..n].iter().map(|e| e.ln()).collect();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(FitError::BadValue);
    }
    let rate = sxy / sxx;
    let intercept = my - rate * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - rate * x).powi(2)).sum();
    let dof = nf - 2.0;
    let std_error = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).expect("dof is positive").inverse_cdf(0.975);
    Ok(RateFit {
        rate,
        std_error,
        half_width: t * std_error,
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const DX: [f64; 4] = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];

    #[test]
    fn exact_power_laws() {
        let linear: Vec<f64> = DX.iter().map(|h| 3.0 * h).collect();
        let fit = fit_rate(&DX, &linear).unwrap();
        assert_abs_diff_eq!(fit.rate, 1.0, epsilon = 1e-12);
        assert!(fit.std_error < 1e-12);

        let root: Vec<f64> = DX.iter().map(|h| h.sqrt()).collect();
        assert_abs_diff_eq!(fit_rate(&DX, &root).unwrap().rate, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_inputs() {
        let fit = fit_rate(&DX[..3], &[0.1, 0.1, 0.05]).unwrap();
        assert!(fit.rate.is_finite());
        assert!(fit.half_width > fit.std_error);
        assert_eq!(fit_rate(&DX[..2], &[0.1, 0.05]), Err(FitError::TooFewRows(2)));
        assert!(matches!(fit_rate(&DX, &[0.1, 0.0, 0.1, 0.1]), Err(FitError::DegenerateFit { .. })));
    }
}

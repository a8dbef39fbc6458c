//! Least-squares VAR fitting and the in-sample loss curve.
//!
//! For an order `p` and a `k`-dimensional series of length `n`, the design
//! pairs each target `z_t`, `t = p..n-1`, with the stacked lags
//! `(z_{t-1}, ..., z_{t-p})`. The coefficient estimate solves the normal
//! equations of the multivariate regression, and the sample loss is the
//! trace of the residual moment matrix with the `1/(n-p)` divisor:
//!
//! ```text
//! L_hat(p) = tr(Sigma_hat_p),   Sigma_hat_p = R R' / (n - p).
//! ```
//!
//! [`sample_loss_curve`] demeans the series once and fits every order on a
//! grid; cross-order comparisons (the criteria module) build on it.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::CoreError;
use crate::linalg;
use crate::timeseries::TimeSeries;

/// Regression blocks for one lag order: targets `y` (`k x (n-p)`) and
/// stacked lags `x` (`kp x (n-p)`), column `j` holding the lags of target
/// column `j` most recent first.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    /// Target block, one column per regression time point.
    pub y: DMatrix<f64>,
    /// Stacked lag block aligned with `y`; empty (zero rows) when `p = 0`.
    pub x: DMatrix<f64>,
    /// The lag order the design was built for.
    pub p: usize,
    /// Number of regression columns, `n - p`.
    pub n_effective: usize,
}

/// Builds the regression blocks for order `p`.
///
/// Requires `n > p` so at least one target column exists.
pub fn build_design(series: &TimeSeries, p: usize) -> Result<DesignMatrices, CoreError> {
    let n = series.len();
    let k = series.dim();
    if n <= p {
        return Err(CoreError::InsufficientData { n, p });
    }
    let m = n - p;
    let v = series.values();
    let mut y = DMatrix::zeros(k, m);
    let mut x = DMatrix::zeros(k * p, m);
    for t in p..n {
        let col = t - p;
        for j in 0..k {
            y[(j, col)] = v[(t, j)];
        }
        for lag in 1..=p {
            for j in 0..k {
                x[((lag - 1) * k + j, col)] = v[(t - lag, j)];
            }
        }
    }
    Ok(DesignMatrices {
        y,
        x,
        p,
        n_effective: m,
    })
}

/// An order-`p` least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Coefficient estimate `[A1 ... Ap]`, `k x kp` (zero columns for
    /// `p = 0`).
    pub a_hat: DMatrix<f64>,
    /// Residual moment matrix `R R' / (n - p)`.
    pub sigma_hat: DMatrix<f64>,
    /// Trace of `sigma_hat`: the in-sample mean square prediction error.
    pub sample_loss: f64,
    /// Lag order of the fit.
    pub p: usize,
    /// Number of regression columns the fit used.
    pub n_effective: usize,
}

/// Solves the normal equations for one design.
///
/// Fails with [`CoreError::SingularGram`] when the lag Gram matrix is not
/// positive definite or its one-norm condition estimate exceeds `1e12`.
pub fn ols_fit(design: &DesignMatrices) -> Result<FitResult, CoreError> {
    let k = design.y.nrows();
    let m = design.n_effective as f64;
    if design.p == 0 {
        let sigma_hat = &design.y * design.y.transpose() / m;
        return Ok(FitResult {
            a_hat: DMatrix::zeros(k, 0),
            sigma_hat: sigma_hat.clone(),
            sample_loss: sigma_hat.trace(),
            p: 0,
            n_effective: design.n_effective,
        });
    }
    let gram = &design.x * design.x.transpose();
    let (factor, _cond) = match linalg::SpdFactor::new(&gram) {
        Ok(ok) => ok,
        Err(cond) => return Err(CoreError::SingularGram { p: design.p, cond }),
    };
    let xyt = &design.x * design.y.transpose();
    let a_hat = factor.solve(&xyt).transpose();
    let residuals = &design.y - &a_hat * &design.x;
    let sigma_hat = &residuals * residuals.transpose() / m;
    let sample_loss = sigma_hat.trace();
    if !sample_loss.is_finite() {
        return Err(CoreError::NonFinite {
            context: "sample loss",
        });
    }
    Ok(FitResult {
        a_hat,
        sigma_hat,
        sample_loss,
        p: design.p,
        n_effective: design.n_effective,
    })
}

/// Demeans the series once and fits every order `0..=p_max_fit`.
///
/// Requires enough data for the largest fit: `n - p > k p` at
/// `p = p_max_fit`. Returns one [`FitResult`] per order, index = order.
pub fn sample_loss_curve(
    series: &TimeSeries,
    p_max_fit: usize,
) -> Result<Vec<FitResult>, CoreError> {
    let n = series.len();
    let k = series.dim();
    if n <= p_max_fit || n - p_max_fit <= k * p_max_fit {
        return Err(CoreError::InsufficientData { n, p: p_max_fit });
    }
    let (centered, _) = series.demean();
    let mut fits = Vec::with_capacity(p_max_fit + 1);
    for p in 0..=p_max_fit {
        let design = build_design(&centered, p)?;
        fits.push(ols_fit(&design)?);
    }
    Ok(fits)
}

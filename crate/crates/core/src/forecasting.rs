//! Rolling-window one-step forecast evaluation.
//!
//! The protocol: select a lag order once per criterion on the first
//! `floor(split_fraction * n)` observations, then slide a window of that
//! same length across the series. Every window is standardized by its own
//! column means and standard deviations, the same transform is applied to
//! the next observation, and an intercept-free VAR of the selected order
//! fitted on the standardized window produces a one-step forecast. The
//! score is the weighted mean squared forecast error, with per-component
//! weights from the spread of the standardized actuals.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::criteria::{self, CriterionKind};
use crate::error::CoreError;
use crate::estimation;
use crate::timeseries::TimeSeries;

/// Rolling-forecast protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastProtocol {
    /// Fraction of the sample used for order selection and as the window
    /// length, in (0, 1).
    pub split_fraction: f64,
    /// Largest candidate order offered to the criteria.
    pub p_max: usize,
    /// Criteria whose selected orders are evaluated.
    pub criteria: Vec<CriterionKind>,
}

impl ForecastProtocol {
    /// Protocol with the conventional 0.8 split.
    pub fn new(p_max: usize, criteria: Vec<CriterionKind>) -> Self {
        ForecastProtocol {
            split_fraction: 0.8,
            p_max,
            criteria,
        }
    }
}

/// Forecast performance of one criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionForecast {
    /// The criterion the order came from.
    pub criterion: CriterionKind,
    /// Order selected on the training prefix.
    pub chosen_order: usize,
    /// Weighted mean squared one-step forecast error.
    pub wmsfe: f64,
    /// Standardized forecasts, one row per window.
    pub forecasts: DMatrix<f64>,
}

/// Output of [`evaluate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    /// Training-prefix and window length.
    pub window_length: usize,
    /// Number of one-step forecasts.
    pub windows: usize,
    /// Standardized actuals, one row per window.
    pub actuals: DMatrix<f64>,
    /// Per-component standard deviation of the standardized actuals, the
    /// weights in the forecast score.
    pub sigma: DVector<f64>,
    /// One entry per protocol criterion, in order.
    pub per_criterion: Vec<CriterionForecast>,
}

/// One-step forecast from an intercept-free VAR(p) fitted on `window`.
///
/// The window is taken as already centered (the rolling protocol
/// standardizes each window first); order 0 therefore forecasts zero.
pub fn one_step_forecast(window: &TimeSeries, p: usize) -> Result<DVector<f64>, CoreError> {
    let k = window.dim();
    if p == 0 {
        return Ok(DVector::zeros(k));
    }
    let design = estimation::build_design(window, p)?;
    let fit = estimation::ols_fit(&design)?;
    let t = window.len();
    let mut x_new = DVector::zeros(k * p);
    for j in 0..p {
        x_new
            .rows_mut(j * k, k)
            .copy_from(&window.observation(t - 1 - j));
    }
    Ok(&fit.a_hat * x_new)
}

/// Runs the rolling-window protocol on `series`.
///
/// Fails fast: an unselectable criterion, a singular window fit, or a
/// degenerate weight (a component whose standardized actuals do not vary)
/// aborts the whole evaluation.
pub fn evaluate(series: &TimeSeries, protocol: &ForecastProtocol) -> Result<ForecastReport, CoreError> {
    if !(protocol.split_fraction > 0.0 && protocol.split_fraction < 1.0) {
        return Err(CoreError::InvalidInput {
            reason: alloc::format!(
                "split fraction must lie in (0, 1), got {}",
                protocol.split_fraction
            ),
        });
    }
    if protocol.p_max == 0 {
        return Err(CoreError::InvalidInput {
            reason: alloc::string::String::from("p_max must be at least 1"),
        });
    }
    if protocol.criteria.is_empty() {
        return Err(CoreError::InvalidInput {
            reason: alloc::string::String::from("at least one criterion required"),
        });
    }
    let n = series.len();
    let k = series.dim();
    let t1 = (protocol.split_fraction * n as f64) as usize;
    if t1 < 2 || t1 <= protocol.p_max + k * protocol.p_max {
        return Err(CoreError::InsufficientData {
            n: t1,
            p: protocol.p_max,
        });
    }
    let m = n - t1;
    if m < 2 {
        return Err(CoreError::InvalidInput {
            reason: alloc::format!(
                "forecast segment has {m} observation(s); at least 2 required"
            ),
        });
    }

    let train = series.slice_rows(0, t1);
    let selections: Vec<criteria::SelectionResult> = protocol
        .criteria
        .iter()
        .map(|kind| criteria::select_order(&train, protocol.p_max, kind))
        .collect::<Result<_, _>>()?;

    let mut actuals = DMatrix::zeros(m, k);
    let mut by_order: BTreeMap<usize, DMatrix<f64>> = selections
        .iter()
        .map(|s| (s.chosen_order, DMatrix::zeros(m, k)))
        .collect();

    for i in 0..m {
        let window = series.slice_rows(i, t1);
        let target = series.observation(t1 + i);
        let (std_window, std_target) = window.standardize_window(&target)?;
        actuals.row_mut(i).copy_from(&std_target.transpose());
        for (order, forecasts) in by_order.iter_mut() {
            let fc = one_step_forecast(&std_window, *order)?;
            forecasts.row_mut(i).copy_from(&fc.transpose());
        }
    }

    let mf = m as f64;
    let mut sigma = DVector::zeros(k);
    for j in 0..k {
        let col = actuals.column(j);
        let mean = col.sum() / mf;
        let ss: f64 = col.iter().map(|x| (x - mean) * (x - mean)).sum();
        let sd = Float::sqrt(ss / (mf - 1.0));
        // Constant actuals can leave a spurious few-ulp spread through the
        // rounding of the mean, so degeneracy is judged relative to the
        // column scale rather than against exact zero.
        let scale = col.iter().fold(0.0, |a: f64, x| Float::max(a, Float::abs(*x)));
        if !(sd > 16.0 * f64::EPSILON * scale) {
            return Err(CoreError::ZeroVariance { column: j });
        }
        sigma[j] = sd;
    }

    let per_criterion = selections
        .into_iter()
        .map(|sel| {
            let forecasts = by_order[&sel.chosen_order].clone();
            let mut sum = 0.0;
            for i in 0..m {
                for j in 0..k {
                    let e = (actuals[(i, j)] - forecasts[(i, j)]) / sigma[j];
                    sum += e * e;
                }
            }
            CriterionForecast {
                criterion: sel.criterion,
                chosen_order: sel.chosen_order,
                wmsfe: sum / (mf * k as f64),
                forecasts,
            }
        })
        .collect();

    Ok(ForecastReport {
        window_length: t1,
        windows: m,
        actuals,
        sigma,
        per_criterion,
    })
}

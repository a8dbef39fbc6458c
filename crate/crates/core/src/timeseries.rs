//! Multivariate time series storage and reversible preprocessing.
//!
//! A [`TimeSeries`] is an `n x k` matrix of finite values, rows indexed by
//! time, with one name per column. Transforms (demeaning, logs, first
//! differences) return the transformed series together with a
//! [`TransformStep`] that can undo them; steps accumulate in a
//! [`TransformLog`] so a whole pipeline can be inverted in reverse order.
//!
//! The sample standard deviation divisor is `n - 1` everywhere in this
//! crate, including window standardization.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;

use crate::error::CoreError;

/// An `n x k` panel of observations, rows in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl TimeSeries {
    /// Wraps a value matrix with explicit column names.
    ///
    /// Requires at least one row and one column, all values finite, and
    /// exactly one distinct name per column.
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self, CoreError> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(CoreError::InvalidInput {
                reason: format!(
                    "series must be non-empty, got {} x {}",
                    values.nrows(),
                    values.ncols()
                ),
            });
        }
        if names.len() != values.ncols() {
            return Err(CoreError::InvalidInput {
                reason: format!(
                    "{} names for {} columns",
                    names.len(),
                    values.ncols()
                ),
            });
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(CoreError::InvalidInput {
                    reason: format!("duplicate column name {a:?}"),
                });
            }
        }
        if !values.iter().all(|x| x.is_finite()) {
            return Err(CoreError::NonFinite {
                context: "time series values",
            });
        }
        Ok(TimeSeries { values, names })
    }

    /// Wraps a value matrix, naming columns `y1..yk`.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self, CoreError> {
        let names = (1..=values.ncols()).map(|j| format!("y{j}")).collect();
        TimeSeries::new(values, names)
    }

    /// Number of observations (rows).
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    /// Always false; construction rejects empty series.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of component series (columns).
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Column names.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// The underlying value matrix, rows in time order.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Observation at time index `t` as a column vector.
    pub fn observation(&self, t: usize) -> DVector<f64> {
        self.values.row(t).transpose()
    }

    /// A contiguous block of `len` rows starting at `start`, as a series
    /// with the same column names.
    pub fn slice_rows(&self, start: usize, len: usize) -> TimeSeries {
        debug_assert!(start + len <= self.len() && len > 0);
        TimeSeries {
            values: self.values.rows(start, len).into_owned(),
            names: self.names.clone(),
        }
    }

    /// Column means.
    pub fn column_means(&self) -> DVector<f64> {
        let n = self.len() as f64;
        DVector::from_iterator(
            self.dim(),
            self.values.column_iter().map(|c| c.sum() / n),
        )
    }

    /// Column sample standard deviations with the `n - 1` divisor.
    ///
    /// Requires at least two rows.
    pub fn column_sds(&self) -> Result<DVector<f64>, CoreError> {
        let n = self.len();
        if n < 2 {
            return Err(CoreError::InsufficientData { n, p: 1 });
        }
        let means = self.column_means();
        let mut out = DVector::zeros(self.dim());
        for j in 0..self.dim() {
            let mut acc = 0.0;
            for i in 0..n {
                let d = self.values[(i, j)] - means[j];
                acc += d * d;
            }
            out[j] = Float::sqrt(acc / (n as f64 - 1.0));
        }
        Ok(out)
    }

    /// Subtracts column means. The returned step restores them.
    pub fn demean(&self) -> (TimeSeries, TransformStep) {
        let means = self.column_means();
        let mut values = self.values.clone();
        for j in 0..self.dim() {
            for i in 0..self.len() {
                values[(i, j)] -= means[j];
            }
        }
        (
            TimeSeries {
                values,
                names: self.names.clone(),
            },
            TransformStep::Demean { means },
        )
    }

    /// Takes natural logs entrywise. Every entry must be strictly positive.
    pub fn log_transform(&self) -> Result<(TimeSeries, TransformStep), CoreError> {
        for i in 0..self.len() {
            for j in 0..self.dim() {
                if !(self.values[(i, j)] > 0.0) {
                    return Err(CoreError::NonPositiveValue { row: i, column: j });
                }
            }
        }
        let values = self.values.map(Float::ln);
        Ok((
            TimeSeries {
                values,
                names: self.names.clone(),
            },
            TransformStep::Log,
        ))
    }

    /// First differences rows, shortening the series by one. The step
    /// stores the first row so the level series can be rebuilt.
    pub fn first_difference(&self) -> Result<(TimeSeries, TransformStep), CoreError> {
        let n = self.len();
        if n < 2 {
            return Err(CoreError::InsufficientData { n, p: 1 });
        }
        let mut values = DMatrix::zeros(n - 1, self.dim());
        for i in 1..n {
            for j in 0..self.dim() {
                values[(i - 1, j)] = self.values[(i, j)] - self.values[(i - 1, j)];
            }
        }
        Ok((
            TimeSeries {
                values,
                names: self.names.clone(),
            },
            TransformStep::FirstDifference {
                first_row: self.values.row(0).transpose(),
            },
        ))
    }

    /// Standardizes each column by the window's own mean and standard
    /// deviation, applying the same affine map to `target`. Fails with
    /// [`CoreError::ZeroVariance`] if any column is constant.
    ///
    /// `target` is typically the next observation after the window; only
    /// the window's statistics enter the map.
    pub fn standardize_window(
        &self,
        target: &DVector<f64>,
    ) -> Result<(TimeSeries, DVector<f64>), CoreError> {
        if target.len() != self.dim() {
            return Err(CoreError::InvalidInput {
                reason: format!(
                    "target has {} entries for a {}-column window",
                    target.len(),
                    self.dim()
                ),
            });
        }
        let means = self.column_means();
        let sds = self.column_sds()?;
        for j in 0..self.dim() {
            if !(sds[j] > 0.0) || !sds[j].is_finite() {
                return Err(CoreError::ZeroVariance { column: j });
            }
        }
        let mut values = self.values.clone();
        let mut t = target.clone();
        for j in 0..self.dim() {
            for i in 0..self.len() {
                values[(i, j)] = (values[(i, j)] - means[j]) / sds[j];
            }
            t[j] = (t[j] - means[j]) / sds[j];
        }
        Ok((
            TimeSeries {
                values,
                names: self.names.clone(),
            },
            t,
        ))
    }
}

/// One invertible preprocessing step.
#[derive(Debug, Clone, PartialEq)]
pub enum TransformStep {
    /// Column means were subtracted.
    Demean {
        /// The subtracted means, one per column.
        means: DVector<f64>,
    },
    /// Natural logs were taken entrywise.
    Log,
    /// Rows were first-differenced.
    FirstDifference {
        /// The dropped initial row, needed to integrate back.
        first_row: DVector<f64>,
    },
}

impl TransformStep {
    fn invert(&self, series: &TimeSeries) -> Result<TimeSeries, CoreError> {
        match self {
            TransformStep::Demean { means } => {
                if means.len() != series.dim() {
                    return Err(CoreError::InvalidInput {
                        reason: String::from("demean step dimension mismatch"),
                    });
                }
                let mut values = series.values.clone();
                for j in 0..series.dim() {
                    for i in 0..series.len() {
                        values[(i, j)] += means[j];
                    }
                }
                TimeSeries::new(values, series.names.clone())
            }
            TransformStep::Log => {
                let values = series.values.map(Float::exp);
                TimeSeries::new(values, series.names.clone())
            }
            TransformStep::FirstDifference { first_row } => {
                if first_row.len() != series.dim() {
                    return Err(CoreError::InvalidInput {
                        reason: String::from("difference step dimension mismatch"),
                    });
                }
                let n = series.len();
                let mut values = DMatrix::zeros(n + 1, series.dim());
                for j in 0..series.dim() {
                    values[(0, j)] = first_row[j];
                    for i in 0..n {
                        values[(i + 1, j)] = values[(i, j)] + series.values[(i, j)];
                    }
                }
                TimeSeries::new(values, series.names.clone())
            }
        }
    }
}

/// An ordered record of transforms applied to a series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransformLog {
    steps: Vec<TransformStep>,
}

impl TransformLog {
    /// An empty log.
    pub fn new() -> Self {
        TransformLog::default()
    }

    /// Appends a step that was just applied.
    pub fn push(&mut self, step: TransformStep) {
        self.steps.push(step);
    }

    /// The recorded steps in application order.
    pub fn steps(&self) -> &[TransformStep] {
        &self.steps
    }

    /// Undoes every recorded step, most recent first, recovering the
    /// series as it was before the pipeline ran.
    pub fn invert(&self, series: &TimeSeries) -> Result<TimeSeries, CoreError> {
        let mut current = series.clone();
        for step in self.steps.iter().rev() {
            current = step.invert(&current)?;
        }
        Ok(current)
    }
}

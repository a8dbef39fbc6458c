//! Versioned JSON schemas for configurations and reports, and the tidy
//! CSV renderings of experiment results.
//!
//! Every file carries `schema_version`; this module reads and writes
//! version 1. The JSON layer is deliberately dumb: plain nested arrays for
//! matrices (row-major), strings for enums, and all validation delegated
//! to the library constructors.

use micvar_core::criteria::{CriterionKind, PenaltyDetail, SelectionResult};
use micvar_core::estimation::FitResult;
use micvar_core::experiments::{
    CriterionSpec, ExperimentConfig, ExperimentResult, ProcessSpec,
};
use micvar_core::forecasting::ForecastReport;
use micvar_core::var_process::{NoiseSpec, VarCoefficients};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// The schema generation this build reads and writes.
pub const SCHEMA_VERSION: u32 = 1;

fn check_version(found: u32) -> Result<(), String> {
    if found != SCHEMA_VERSION {
        return Err(format!(
            "schema_version {found} not supported; this build reads version {SCHEMA_VERSION}"
        ));
    }
    Ok(())
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, String> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(format!("{what}: empty matrix"));
    }
    let k = rows[0].len();
    if rows.iter().any(|r| r.len() != k) {
        return Err(format!("{what}: rows differ in length"));
    }
    Ok(DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// A process description file: `{ "schema_version": 1, "process": ... }`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ProcessFileJson {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// The process itself.
    pub process: ProcessSpecJson,
}

/// JSON form of a data-generating process.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProcessSpecJson {
    /// One of the built-in settings.
    Named {
        /// Setting name: ar2, var2_2, var5_3, var10_3, var3_2_switch.
        setting: String,
        /// Error structure: diagonal, nondiagonal, mixture. The switching
        /// setting carries its own error recipe and ignores this.
        #[serde(default = "default_errors")]
        errors: String,
    },
    /// Explicit coefficients and noise.
    Custom {
        /// Lag matrices, row-major, one k-by-k matrix per lag.
        lags: Vec<Vec<Vec<f64>>>,
        /// Innovation specification.
        noise: NoiseSpecJson,
    },
}

fn default_errors() -> String {
    String::from("diagonal")
}

/// JSON form of an innovation specification.
#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpecJson {
    /// Independent Gaussian components.
    GaussianDiagonal {
        /// Per-component variances.
        variances: Vec<f64>,
    },
    /// Correlated Gaussian errors.
    GaussianFull {
        /// Covariance matrix, row-major.
        covariance: Vec<Vec<f64>>,
    },
    /// Gaussian mixture.
    GaussianMixture {
        /// Mixing probabilities.
        weights: Vec<f64>,
        /// Component means.
        means: Vec<Vec<f64>>,
        /// Component covariances.
        covariances: Vec<Vec<Vec<f64>>>,
    },
    /// Gaussian errors plus a mean that alternates between two regimes.
    RegimeSwitchingMean {
        /// Innovation covariance.
        covariance: Vec<Vec<f64>>,
        /// The two regime levels.
        regime_means: Vec<Vec<f64>>,
        /// Fraction of the sample per regime segment.
        switch_fraction: f64,
    },
}

impl NoiseSpecJson {
    /// Validates and converts to the library type.
    pub fn to_core(&self) -> Result<NoiseSpec, String> {
        match self {
            NoiseSpecJson::GaussianDiagonal { variances } => {
                NoiseSpec::gaussian_diagonal(DVector::from_vec(variances.clone()))
                    .map_err(|e| e.to_string())
            }
            NoiseSpecJson::GaussianFull { covariance } => {
                NoiseSpec::gaussian_full(matrix_from_rows(covariance, "covariance")?)
                    .map_err(|e| e.to_string())
            }
            NoiseSpecJson::GaussianMixture {
                weights,
                means,
                covariances,
            } => {
                let means = means
                    .iter()
                    .map(|m| DVector::from_vec(m.clone()))
                    .collect();
                let covariances = covariances
                    .iter()
                    .map(|c| matrix_from_rows(c, "mixture covariance"))
                    .collect::<Result<Vec<_>, _>>()?;
                NoiseSpec::gaussian_mixture(weights.clone(), means, covariances)
                    .map_err(|e| e.to_string())
            }
            NoiseSpecJson::RegimeSwitchingMean {
                covariance,
                regime_means,
                switch_fraction,
            } => {
                if regime_means.len() != 2 {
                    return Err(String::from("regime_means must hold exactly two vectors"));
                }
                NoiseSpec::regime_switching_mean(
                    matrix_from_rows(covariance, "covariance")?,
                    [
                        DVector::from_vec(regime_means[0].clone()),
                        DVector::from_vec(regime_means[1].clone()),
                    ],
                    *switch_fraction,
                )
                .map_err(|e| e.to_string())
            }
        }
    }

    /// Converts from the library type.
    pub fn from_core(noise: &NoiseSpec) -> Self {
        match noise {
            NoiseSpec::GaussianDiagonal { variances } => NoiseSpecJson::GaussianDiagonal {
                variances: variances.iter().cloned().collect(),
            },
            NoiseSpec::GaussianFull { covariance } => NoiseSpecJson::GaussianFull {
                covariance: matrix_to_rows(covariance),
            },
            NoiseSpec::GaussianMixture {
                weights,
                means,
                covariances,
            } => NoiseSpecJson::GaussianMixture {
                weights: weights.clone(),
                means: means.iter().map(|m| m.iter().cloned().collect()).collect(),
                covariances: covariances.iter().map(matrix_to_rows).collect(),
            },
            NoiseSpec::RegimeSwitchingMean {
                covariance,
                regime_means,
                switch_fraction,
            } => NoiseSpecJson::RegimeSwitchingMean {
                covariance: matrix_to_rows(covariance),
                regime_means: regime_means
                    .iter()
                    .map(|m| m.iter().cloned().collect())
                    .collect(),
                switch_fraction: *switch_fraction,
            },
        }
    }
}

impl ProcessSpecJson {
    /// Validates and converts to the library type.
    pub fn to_core(&self) -> Result<ProcessSpec, String> {
        match self {
            ProcessSpecJson::Named { setting, errors } => Ok(ProcessSpec::Named {
                setting: setting.parse().map_err(|e| format!("{e}"))?,
                errors: errors.parse().map_err(|e| format!("{e}"))?,
            }),
            ProcessSpecJson::Custom { lags, noise } => {
                if lags.is_empty() {
                    return Err(String::from("custom process needs at least one lag matrix"));
                }
                let matrices = lags
                    .iter()
                    .map(|m| matrix_from_rows(m, "lag matrix"))
                    .collect::<Result<Vec<_>, _>>()?;
                let k = matrices[0].nrows();
                let coefficients =
                    VarCoefficients::new(k, matrices).map_err(|e| e.to_string())?;
                Ok(ProcessSpec::Custom {
                    coefficients,
                    noise: noise.to_core()?,
                })
            }
        }
    }
}

impl ProcessFileJson {
    /// Parses a process file, enforcing the schema version.
    pub fn parse(text: &str) -> Result<ProcessSpec, String> {
        let file: ProcessFileJson = serde_json::from_str(text).map_err(|e| e.to_string())?;
        check_version(file.schema_version)?;
        file.process.to_core()
    }
}

/// JSON form of a criterion request: either a bare name or a name plus a
/// fixed oracle slope.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CriterionSpecJson {
    /// `"mic"`, `"aic"`, ...; `"mic-oracle"` resolves its slope from the
    /// population loss curve.
    Name(String),
    /// `{ "name": "mic-oracle", "lambda": 0.05 }`.
    Detailed {
        /// Criterion name.
        name: String,
        /// Fixed slope for mic-oracle.
        #[serde(default)]
        lambda: Option<f64>,
    },
}

/// Parses one criterion name (with optional oracle slope) into a spec.
pub fn parse_criterion(name: &str, lambda: Option<f64>) -> Result<CriterionSpec, String> {
    let spec = match name {
        "mic" => CriterionSpec::Mic,
        "mic-oracle" => return Ok(CriterionSpec::MicOracle { lambda }),
        "mic-sp" => CriterionSpec::MicSp,
        "mic-mt" => CriterionSpec::MicMt,
        "aic" => CriterionSpec::Aic,
        "bic" => CriterionSpec::Bic,
        "hq" => CriterionSpec::Hq,
        other => {
            return Err(format!(
                "unknown criterion {other:?} (expected mic, mic-oracle, mic-sp, mic-mt, aic, bic, hq)"
            ))
        }
    };
    if lambda.is_some() {
        return Err(format!("criterion {name:?} does not take a lambda"));
    }
    Ok(spec)
}

impl CriterionSpecJson {
    /// Validates and converts to the library type.
    pub fn to_core(&self) -> Result<CriterionSpec, String> {
        match self {
            CriterionSpecJson::Name(name) => parse_criterion(name, None),
            CriterionSpecJson::Detailed { name, lambda } => parse_criterion(name, *lambda),
        }
    }
}

/// JSON form of an experiment configuration.
#[derive(Debug, Serialize, Deserialize)]
pub struct ExperimentConfigJson {
    /// Must equal [`SCHEMA_VERSION`].
    pub schema_version: u32,
    /// Data-generating process.
    pub process: ProcessSpecJson,
    /// Sample sizes to sweep.
    pub sample_sizes: Vec<usize>,
    /// Replicates per sample size.
    pub replicates: usize,
    /// Largest candidate order.
    pub p_max: usize,
    /// Criteria to run.
    pub criteria: Vec<CriterionSpecJson>,
    /// Master seed.
    pub master_seed: u64,
}

impl ExperimentConfigJson {
    /// Parses a configuration file, enforcing the schema version.
    pub fn parse(text: &str) -> Result<ExperimentConfig, String> {
        let file: ExperimentConfigJson =
            serde_json::from_str(text).map_err(|e| e.to_string())?;
        check_version(file.schema_version)?;
        Ok(ExperimentConfig {
            process: file.process.to_core()?,
            sample_sizes: file.sample_sizes,
            replicates: file.replicates,
            p_max: file.p_max,
            criteria: file
                .criteria
                .iter()
                .map(|c| c.to_core())
                .collect::<Result<_, _>>()?,
            master_seed: file.master_seed,
        })
    }
}

/// JSON form of a penalty provenance.
#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PenaltyJson {
    /// Self-tuned slope with its loss-decay statistic.
    SelfTuned {
        /// The MD statistic.
        mean_difference: f64,
        /// The slope.
        lambda: f64,
    },
    /// Fixed externally supplied slope.
    Fixed {
        /// The slope.
        lambda: f64,
    },
    /// Slope calibrated on a sample split.
    Split {
        /// The slope.
        lambda: f64,
    },
    /// No explicit slope.
    Unpenalized,
}

impl From<&PenaltyDetail> for PenaltyJson {
    fn from(p: &PenaltyDetail) -> Self {
        match p {
            PenaltyDetail::SelfTuned {
                mean_difference,
                lambda,
            } => PenaltyJson::SelfTuned {
                mean_difference: *mean_difference,
                lambda: *lambda,
            },
            PenaltyDetail::Fixed { lambda } => PenaltyJson::Fixed { lambda: *lambda },
            PenaltyDetail::Split { lambda } => PenaltyJson::Split { lambda: *lambda },
            PenaltyDetail::Unpenalized => PenaltyJson::Unpenalized,
        }
    }
}

/// One criterion's selection in the output JSON.
#[derive(Debug, Serialize)]
pub struct SelectionJson {
    /// Criterion name.
    pub criterion: String,
    /// Chosen order.
    pub chosen_order: usize,
    /// Scores for orders `0..=p_max`.
    pub scores: Vec<f64>,
    /// Penalty provenance.
    pub penalty: PenaltyJson,
    /// Surfaced degeneracies.
    pub warnings: Vec<String>,
}

impl From<&SelectionResult> for SelectionJson {
    fn from(r: &SelectionResult) -> Self {
        SelectionJson {
            criterion: String::from(r.criterion.name()),
            chosen_order: r.chosen_order,
            scores: r.scores.clone(),
            penalty: (&r.penalty).into(),
            warnings: r.warnings.clone(),
        }
    }
}

/// Output of the select subcommand.
#[derive(Debug, Serialize)]
pub struct SelectionOutputJson {
    /// Schema generation.
    pub schema_version: u32,
    /// Observations after transforms.
    pub n: usize,
    /// Series dimension.
    pub k: usize,
    /// Largest candidate order.
    pub p_max: usize,
    /// Transforms applied before selection, in order.
    pub transforms: Vec<String>,
    /// One entry per requested criterion.
    pub selections: Vec<SelectionJson>,
}

impl SelectionOutputJson {
    /// Assembles the output document.
    pub fn new(p_max: usize, transforms: Vec<String>, results: &[SelectionResult]) -> Self {
        let (n, k) = results
            .first()
            .map(|r| (r.n, r.k))
            .unwrap_or((0, 0));
        SelectionOutputJson {
            schema_version: SCHEMA_VERSION,
            n,
            k,
            p_max,
            transforms,
            selections: results.iter().map(SelectionJson::from).collect(),
        }
    }
}

/// One least-squares fit in the dump produced by `select --dump-fits`.
#[derive(Debug, Serialize)]
pub struct FitJson {
    /// Lag order of the fit.
    pub p: usize,
    /// Regression columns the fit used, `n - p`.
    pub n_effective: usize,
    /// Trace of the residual moment matrix.
    pub sample_loss: f64,
    /// Coefficient block `[A1 ... Ap]` as rows, `k x kp`.
    pub a_hat: Vec<Vec<f64>>,
    /// Residual moment matrix as rows, `k x k`.
    pub sigma_hat: Vec<Vec<f64>>,
}

impl From<&FitResult> for FitJson {
    fn from(f: &FitResult) -> Self {
        FitJson {
            p: f.p,
            n_effective: f.n_effective,
            sample_loss: f.sample_loss,
            a_hat: matrix_to_rows(&f.a_hat),
            sigma_hat: matrix_to_rows(&f.sigma_hat),
        }
    }
}

/// The full fit grid behind one selection run.
#[derive(Debug, Serialize)]
pub struct FitsOutputJson {
    /// Schema generation.
    pub schema_version: u32,
    /// Observations after transforms.
    pub n: usize,
    /// Series dimension.
    pub k: usize,
    /// One fit per order, index = order.
    pub fits: Vec<FitJson>,
}

impl FitsOutputJson {
    /// Wraps a contiguous fit grid.
    pub fn new(n: usize, k: usize, fits: &[FitResult]) -> Self {
        FitsOutputJson {
            schema_version: SCHEMA_VERSION,
            n,
            k,
            fits: fits.iter().map(FitJson::from).collect(),
        }
    }
}

/// One criterion's rolling-forecast performance in the output JSON.
#[derive(Debug, Serialize)]
pub struct ForecastCriterionJson {
    /// Criterion name.
    pub criterion: String,
    /// Order selected on the training prefix.
    pub chosen_order: usize,
    /// Weighted mean squared forecast error.
    pub wmsfe: f64,
    /// Standardized squared errors, one row per window, one column per
    /// series; their mean is exactly `wmsfe`.
    pub squared_errors: Vec<Vec<f64>>,
}

/// Output of the forecast subcommand.
#[derive(Debug, Serialize)]
pub struct ForecastOutputJson {
    /// Schema generation.
    pub schema_version: u32,
    /// Window length (the training-prefix length).
    pub window_length: usize,
    /// Number of one-step forecasts.
    pub windows: usize,
    /// Unit convention of errors and sigma: each window is standardized by
    /// its own mean and standard deviation before fitting and scoring.
    pub units: String,
    /// Per-series standard deviations of the standardized actuals, the
    /// weights in the score.
    pub sigma: Vec<f64>,
    /// Transforms applied before evaluation, in order.
    pub transforms: Vec<String>,
    /// One entry per protocol criterion.
    pub per_criterion: Vec<ForecastCriterionJson>,
}

impl ForecastOutputJson {
    /// Assembles the output document from a report.
    pub fn new(report: &ForecastReport, transforms: Vec<String>) -> Self {
        let m = report.windows;
        let k = report.sigma.len();
        let per_criterion = report
            .per_criterion
            .iter()
            .map(|c| {
                let squared_errors = (0..m)
                    .map(|i| {
                        (0..k)
                            .map(|j| {
                                let e = (report.actuals[(i, j)] - c.forecasts[(i, j)])
                                    / report.sigma[j];
                                e * e
                            })
                            .collect()
                    })
                    .collect();
                ForecastCriterionJson {
                    criterion: String::from(c.criterion.name()),
                    chosen_order: c.chosen_order,
                    wmsfe: c.wmsfe,
                    squared_errors,
                }
            })
            .collect();
        ForecastOutputJson {
            schema_version: SCHEMA_VERSION,
            window_length: report.window_length,
            windows: m,
            units: String::from("standardized"),
            sigma: report.sigma.iter().cloned().collect(),
            transforms,
            per_criterion,
        }
    }
}

/// Per-criterion forecast errors as tidy CSV:
/// `criterion,t,series,actual,forecast,sq_error`, with `t` the 0-based
/// index of the forecast observation in the transformed series.
pub fn forecast_errors_csv(report: &ForecastReport) -> String {
    let mut out = String::from("criterion,t,series,actual,forecast,sq_error\n");
    let k = report.sigma.len();
    for c in &report.per_criterion {
        for i in 0..report.windows {
            let t = report.window_length + i;
            for j in 0..k {
                let a = report.actuals[(i, j)];
                let f = c.forecasts[(i, j)];
                let e = (a - f) / report.sigma[j];
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.criterion.name(),
                    t,
                    j + 1,
                    a,
                    f,
                    e * e
                ));
            }
        }
    }
    out
}

/// Experiment result as tidy CSV, one row per (sample size, criterion)
/// cell: `setting,criterion,n,accuracy,se,over,under,failures`.
pub fn experiment_result_to_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("setting,criterion,n,accuracy,se,over,under,failures\n");
    for cell in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            result.setting_name,
            cell.criterion.name(),
            cell.n,
            cell.accuracy,
            cell.std_error,
            cell.over_rate,
            cell.under_rate,
            cell.failure_rate
        ));
    }
    out
}

/// Accuracy-versus-n in wide form for direct plotting: first column `n`,
/// one column per criterion.
pub fn accuracy_wide_csv(result: &ExperimentResult) -> String {
    let mut ns: Vec<usize> = Vec::new();
    let mut criteria: Vec<&CriterionKind> = Vec::new();
    for cell in &result.cells {
        if !ns.contains(&cell.n) {
            ns.push(cell.n);
        }
        if !criteria.contains(&&cell.criterion) {
            criteria.push(&cell.criterion);
        }
    }
    let mut out = String::from("n");
    for c in &criteria {
        out.push(',');
        out.push_str(c.name());
    }
    out.push('\n');
    for &n in &ns {
        out.push_str(&format!("{n}"));
        for c in &criteria {
            let cell = result
                .cells
                .iter()
                .find(|x| x.n == n && &x.criterion == *c)
                .expect("every (n, criterion) pair has a cell");
            out.push_str(&format!(",{}", cell.accuracy));
        }
        out.push('\n');
    }
    out
}

/// Over/under-selection rates in tidy form:
/// `criterion,n,over,under,failures`.
pub fn over_under_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("criterion,n,over,under,failures\n");
    for cell in &result.cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            cell.criterion.name(),
            cell.n,
            cell.over_rate,
            cell.under_rate,
            cell.failure_rate
        ));
    }
    out
}

/// Serializes any document as pretty JSON with a trailing newline.
pub fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialization cannot fail");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use micvar_core::experiments::Setting;

    #[test]
    fn process_round_trip() {
        let text = r#"{
            "schema_version": 1,
            "process": { "kind": "named", "setting": "var5_3", "errors": "mixture" }
        }"#;
        let spec = ProcessFileJson::parse(text).unwrap();
        match spec {
            ProcessSpec::Named { setting, errors } => {
                assert_eq!(setting, Setting::Var5_3);
                assert_eq!(errors.name(), "mixture");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn custom_process_parses_and_validates() {
        let text = r#"{
            "schema_version": 1,
            "process": {
                "kind": "custom",
                "lags": [[[0.5, 0.0], [0.1, 0.2]]],
                "noise": { "kind": "gaussian_diagonal", "variances": [1.0, 2.0] }
            }
        }"#;
        let spec = ProcessFileJson::parse(text).unwrap();
        assert_eq!(spec.dim(), 2);
        assert_eq!(spec.true_order(), 1);

        let bad = text.replace("[1.0, 2.0]", "[1.0, -2.0]");
        assert!(ProcessFileJson::parse(&bad).is_err());
    }

    #[test]
    fn version_is_enforced() {
        let text = r#"{ "schema_version": 99, "process": { "kind": "named", "setting": "ar2" } }"#;
        let err = ProcessFileJson::parse(text).unwrap_err();
        assert!(err.contains("schema_version 99"), "{err}");
    }

    #[test]
    fn criteria_accept_both_forms() {
        let cfg = r#"{
            "schema_version": 1,
            "process": { "kind": "named", "setting": "ar2" },
            "sample_sizes": [300],
            "replicates": 2,
            "p_max": 3,
            "criteria": ["mic", { "name": "mic-oracle", "lambda": 0.05 }, "mic-oracle"],
            "master_seed": 9
        }"#;
        let parsed = ExperimentConfigJson::parse(cfg).unwrap();
        assert_eq!(parsed.criteria.len(), 3);
        assert!(matches!(
            parsed.criteria[1],
            CriterionSpec::MicOracle { lambda: Some(l) } if l == 0.05
        ));
        assert!(matches!(
            parsed.criteria[2],
            CriterionSpec::MicOracle { lambda: None }
        ));

        let bad = cfg.replace("\"mic\",", "{ \"name\": \"aic\", \"lambda\": 0.1 },");
        assert!(ExperimentConfigJson::parse(&bad).is_err());
    }
}

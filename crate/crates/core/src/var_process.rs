//! Vector autoregressive processes: coefficients, stability, noise
//! specifications, exact population autocovariances, the population
//! prediction loss, and simulation.
//!
//! The population loss of an order-`p` predictor is
//!
//! ```text
//! L(p) = tr(G0) - tr(g T^-1 g'),   g = [G1 ... Gp],
//! ```
//!
//! where `T` is the symmetric block-Toeplitz matrix of autocovariances and
//! `Gh` the lag-`h` autocovariance. `L` is strictly decreasing up to the
//! true order and flat at `tr(S)` (the innovation covariance trace) beyond
//! it, which is what makes a linear penalty with slope inside the window
//! `(0, M)` recover the true order exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector};
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::CoreError;
use crate::linalg;
use crate::rng;
use crate::timeseries::TimeSeries;

/// Margin below one required of the companion spectral radius.
pub const STABILITY_MARGIN: f64 = 1e-8;

/// Cap on how many observations of burn-in precede a simulated sample.
fn burn_in(order: usize) -> usize {
    core::cmp::max(1000, 50 * order)
}

/// Coefficient matrices `A1..Ap` of a VAR(p) in `k` dimensions.
///
/// `p = 0` (no lag matrices) describes white noise.
#[derive(Debug, Clone, PartialEq)]
pub struct VarCoefficients {
    dim: usize,
    lags: Vec<DMatrix<f64>>,
}

impl VarCoefficients {
    /// Validates and wraps lag matrices; each must be `dim x dim` and
    /// finite.
    pub fn new(dim: usize, lags: Vec<DMatrix<f64>>) -> Result<Self, CoreError> {
        if dim == 0 {
            return Err(CoreError::InvalidInput {
                reason: String::from("dimension must be positive"),
            });
        }
        for (i, a) in lags.iter().enumerate() {
            if a.nrows() != dim || a.ncols() != dim {
                return Err(CoreError::InvalidInput {
                    reason: format!(
                        "lag matrix {} is {} x {}, expected {dim} x {dim}",
                        i + 1,
                        a.nrows(),
                        a.ncols()
                    ),
                });
            }
            if !linalg::all_finite(a) {
                return Err(CoreError::NonFinite {
                    context: "VAR coefficients",
                });
            }
        }
        Ok(VarCoefficients { dim, lags })
    }

    /// White noise: a VAR(0) in `dim` dimensions.
    pub fn white_noise(dim: usize) -> Self {
        VarCoefficients::new(dim, vec![]).expect("positive dim")
    }

    /// Number of component series.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Autoregressive order `p`.
    pub fn order(&self) -> usize {
        self.lags.len()
    }

    /// The lag matrices `A1..Ap` in order.
    pub fn lags(&self) -> &[DMatrix<f64>] {
        &self.lags
    }

    /// Companion matrix of the stacked order-one form, `kp x kp`.
    ///
    /// Panics when the order is zero; white noise has no companion form.
    pub fn companion_matrix(&self) -> DMatrix<f64> {
        let p = self.order();
        assert!(p >= 1, "companion form requires order >= 1");
        let k = self.dim;
        let mut f = DMatrix::zeros(k * p, k * p);
        for (i, a) in self.lags.iter().enumerate() {
            f.view_mut((0, i * k), (k, k)).copy_from(a);
        }
        for i in 1..p {
            f.view_mut((i * k, (i - 1) * k), (k, k))
                .copy_from(&DMatrix::identity(k, k));
        }
        f
    }

    /// Spectral radius of the companion matrix and the stability verdict
    /// (radius strictly below `1 - STABILITY_MARGIN`).
    pub fn stability(&self) -> Stability {
        if self.order() == 0 {
            return Stability {
                spectral_radius: 0.0,
                is_stable: true,
            };
        }
        let eigs = self.companion_matrix().complex_eigenvalues();
        let mut radius = 0.0f64;
        for c in eigs.iter() {
            let m = Float::sqrt(c.norm_sqr());
            if m > radius {
                radius = m;
            }
        }
        Stability {
            spectral_radius: radius,
            is_stable: radius < 1.0 - STABILITY_MARGIN,
        }
    }

    fn require_stable(&self) -> Result<(), CoreError> {
        let s = self.stability();
        if s.is_stable {
            Ok(())
        } else {
            Err(CoreError::UnstableProcess {
                spectral_radius: s.spectral_radius,
            })
        }
    }
}

/// Stability summary of a coefficient set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stability {
    /// Largest eigenvalue modulus of the companion matrix.
    pub spectral_radius: f64,
    /// Whether the radius clears the stability margin.
    pub is_stable: bool,
}

/// Distribution of the innovation (error) terms driving a VAR.
///
/// All variants are zero-mean white noise except the regime-switching
/// variant, whose innovation mean alternates between two levels on a
/// deterministic schedule. The shift enters the recursion and propagates
/// through the lag dynamics, modeling a process whose level moves while
/// its dynamics do not.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    /// Independent Gaussian components with the given variances.
    GaussianDiagonal {
        /// Per-component variances, all strictly positive.
        variances: DVector<f64>,
    },
    /// Correlated Gaussian errors.
    GaussianFull {
        /// Symmetric positive definite covariance.
        covariance: DMatrix<f64>,
    },
    /// A finite mixture of Gaussians whose component means average to
    /// zero under the weights.
    GaussianMixture {
        /// Mixing probabilities, nonnegative and summing to one.
        weights: Vec<f64>,
        /// Component means; the weighted sum must be zero.
        means: Vec<DVector<f64>>,
        /// Component covariances, each symmetric positive definite.
        covariances: Vec<DMatrix<f64>>,
    },
    /// Correlated Gaussian errors whose mean alternates between two
    /// regimes on a fixed schedule.
    RegimeSwitchingMean {
        /// Innovation covariance shared by both regimes.
        covariance: DMatrix<f64>,
        /// The two regime innovation means.
        regime_means: [DVector<f64>; 2],
        /// Fraction of the sample length per regime segment, in (0, 1).
        switch_fraction: f64,
    },
}

fn check_spd(m: &DMatrix<f64>, what: &str) -> Result<(), CoreError> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(CoreError::InvalidInput {
            reason: format!("{what} must be square and non-empty"),
        });
    }
    if !linalg::all_finite(m) {
        return Err(CoreError::NonFinite {
            context: "covariance matrix",
        });
    }
    let asym = linalg::norm_one(&(m - m.transpose()));
    if asym > 1e-8 * (1.0 + linalg::norm_one(m)) {
        return Err(CoreError::InvalidInput {
            reason: format!("{what} is not symmetric"),
        });
    }
    if Cholesky::new(m.clone()).is_none() {
        return Err(CoreError::InvalidInput {
            reason: format!("{what} is not positive definite"),
        });
    }
    Ok(())
}

impl NoiseSpec {
    /// Independent components; every variance must be positive and finite.
    pub fn gaussian_diagonal(variances: DVector<f64>) -> Result<Self, CoreError> {
        if variances.is_empty() {
            return Err(CoreError::InvalidInput {
                reason: String::from("at least one variance required"),
            });
        }
        if !variances.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(CoreError::InvalidInput {
                reason: String::from("variances must be positive and finite"),
            });
        }
        Ok(NoiseSpec::GaussianDiagonal { variances })
    }

    /// Correlated Gaussian errors with an SPD covariance.
    pub fn gaussian_full(covariance: DMatrix<f64>) -> Result<Self, CoreError> {
        check_spd(&covariance, "error covariance")?;
        Ok(NoiseSpec::GaussianFull { covariance })
    }

    /// Gaussian mixture; weights must form a probability vector and the
    /// weighted component means must cancel so the noise is zero-mean.
    pub fn gaussian_mixture(
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        covariances: Vec<DMatrix<f64>>,
    ) -> Result<Self, CoreError> {
        let c = weights.len();
        if c == 0 || means.len() != c || covariances.len() != c {
            return Err(CoreError::InvalidInput {
                reason: String::from("mixture components must align and be non-empty"),
            });
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(CoreError::InvalidInput {
                reason: String::from("mixture weights must be nonnegative"),
            });
        }
        let total: f64 = weights.iter().sum();
        if Float::abs(total - 1.0) > 1e-9 {
            return Err(CoreError::InvalidInput {
                reason: format!("mixture weights sum to {total}, expected 1"),
            });
        }
        let k = means[0].len();
        let mut mean_sum = DVector::zeros(k);
        let mut scale = 0.0f64;
        for (w, m) in weights.iter().zip(&means) {
            if m.len() != k {
                return Err(CoreError::InvalidInput {
                    reason: String::from("mixture means must share a dimension"),
                });
            }
            mean_sum += m * *w;
            scale += Float::abs(*w) * m.amax();
        }
        if mean_sum.amax() > 1e-8 * (1.0 + scale) {
            return Err(CoreError::InvalidInput {
                reason: String::from("weighted mixture means must cancel to zero"),
            });
        }
        for cov in &covariances {
            check_spd(cov, "mixture component covariance")?;
            if cov.nrows() != k {
                return Err(CoreError::InvalidInput {
                    reason: String::from("mixture covariances must share the mean dimension"),
                });
            }
        }
        Ok(NoiseSpec::GaussianMixture {
            weights,
            means,
            covariances,
        })
    }

    /// Gaussian errors plus an alternating level on the output.
    pub fn regime_switching_mean(
        covariance: DMatrix<f64>,
        regime_means: [DVector<f64>; 2],
        switch_fraction: f64,
    ) -> Result<Self, CoreError> {
        check_spd(&covariance, "error covariance")?;
        let k = covariance.nrows();
        if regime_means[0].len() != k || regime_means[1].len() != k {
            return Err(CoreError::InvalidInput {
                reason: String::from("regime means must match the covariance dimension"),
            });
        }
        if !(switch_fraction > 0.0 && switch_fraction < 1.0) {
            return Err(CoreError::InvalidInput {
                reason: format!("switch fraction {switch_fraction} outside (0, 1)"),
            });
        }
        Ok(NoiseSpec::RegimeSwitchingMean {
            covariance,
            regime_means,
            switch_fraction,
        })
    }

    /// Number of component series.
    pub fn dim(&self) -> usize {
        match self {
            NoiseSpec::GaussianDiagonal { variances } => variances.len(),
            NoiseSpec::GaussianFull { covariance } => covariance.nrows(),
            NoiseSpec::GaussianMixture { means, .. } => means[0].len(),
            NoiseSpec::RegimeSwitchingMean { covariance, .. } => covariance.nrows(),
        }
    }

    /// Covariance of a single innovation draw.
    ///
    /// For the mixture this is the total covariance
    /// `sum_c w_c (S_c + m_c m_c')`; for the regime-switching variant it is
    /// the shared innovation covariance (the level schedule is
    /// deterministic, not part of the noise).
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            NoiseSpec::GaussianDiagonal { variances } => {
                DMatrix::from_diagonal(variances)
            }
            NoiseSpec::GaussianFull { covariance } => covariance.clone(),
            NoiseSpec::GaussianMixture {
                weights,
                means,
                covariances,
            } => {
                let k = means[0].len();
                let mut total = DMatrix::zeros(k, k);
                for ((w, m), cov) in weights.iter().zip(means).zip(covariances) {
                    total += (cov + m * m.transpose()) * *w;
                }
                total
            }
            NoiseSpec::RegimeSwitchingMean { covariance, .. } => covariance.clone(),
        }
    }
}

/// Noise with factored covariances, ready to sample from.
enum PreparedNoise {
    Gaussian {
        scale: DMatrix<f64>,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<DVector<f64>>,
        scales: Vec<DMatrix<f64>>,
    },
}

impl PreparedNoise {
    fn new(spec: &NoiseSpec) -> Result<Self, CoreError> {
        let factor = |cov: &DMatrix<f64>| -> Result<DMatrix<f64>, CoreError> {
            Cholesky::new(cov.clone())
                .map(|c| c.l())
                .ok_or(CoreError::InvalidInput {
                    reason: String::from("noise covariance is not positive definite"),
                })
        };
        match spec {
            NoiseSpec::GaussianDiagonal { variances } => Ok(PreparedNoise::Gaussian {
                scale: DMatrix::from_diagonal(&variances.map(Float::sqrt)),
            }),
            NoiseSpec::GaussianFull { covariance }
            | NoiseSpec::RegimeSwitchingMean { covariance, .. } => {
                Ok(PreparedNoise::Gaussian {
                    scale: factor(covariance)?,
                })
            }
            NoiseSpec::GaussianMixture {
                weights,
                means,
                covariances,
            } => {
                let scales = covariances
                    .iter()
                    .map(factor)
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(PreparedNoise::Mixture {
                    weights: weights.clone(),
                    means: means.clone(),
                    scales,
                })
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            PreparedNoise::Gaussian { scale } => scale.nrows(),
            PreparedNoise::Mixture { scales, .. } => scales[0].nrows(),
        }
    }

    fn sample(&self, rng: &mut rng::Rng) -> DVector<f64> {
        let k = self.dim();
        match self {
            PreparedNoise::Gaussian { scale } => {
                let eta =
                    DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(rng)));
                scale * eta
            }
            PreparedNoise::Mixture {
                weights,
                means,
                scales,
            } => {
                let u: f64 = rng.gen();
                let mut component = weights.len() - 1;
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        component = i;
                        break;
                    }
                }
                let eta =
                    DVector::from_iterator(k, (0..k).map(|_| StandardNormal.sample(rng)));
                &means[component] + &scales[component] * eta
            }
        }
    }
}

/// Index of the regime feeding retained observation `t` of `n`: segments
/// of `floor(switch_fraction * n)` observations alternate between 0 and
/// 1, the final segment absorbing any remainder.
fn regime_at(t: usize, n: usize, switch_fraction: f64) -> usize {
    let seg = core::cmp::max(1, (switch_fraction * n as f64) as usize);
    let nseg = core::cmp::max(1, n / seg);
    core::cmp::min(t / seg, nseg - 1) % 2
}

/// Simulates `n` observations of the VAR defined by `coef` and `noise`.
///
/// The recursion starts from a zero state and runs `max(1000, 50 p)`
/// burn-in steps that are discarded. For regime-switching noise the
/// innovation mean follows the regime schedule over the retained steps
/// (burn-in runs under the first regime), so the shift propagates through
/// the lag dynamics; the output is then centered column by column.
pub fn simulate(
    coef: &VarCoefficients,
    noise: &NoiseSpec,
    n: usize,
    seed: u64,
) -> Result<TimeSeries, CoreError> {
    if n == 0 {
        return Err(CoreError::InvalidInput {
            reason: String::from("sample size must be positive"),
        });
    }
    if coef.dim() != noise.dim() {
        return Err(CoreError::InvalidInput {
            reason: format!(
                "coefficients are {}-dimensional but noise is {}-dimensional",
                coef.dim(),
                noise.dim()
            ),
        });
    }
    coef.require_stable()?;
    let prepared = PreparedNoise::new(noise)?;
    let k = coef.dim();
    let p = coef.order();
    let burn = burn_in(p);
    let total = burn + n;
    let mut rng = rng::rng_from_seed(seed);

    let mut states: Vec<DVector<f64>> = Vec::with_capacity(total);
    for t in 0..total {
        let mut x = prepared.sample(&mut rng);
        if let NoiseSpec::RegimeSwitchingMean {
            regime_means,
            switch_fraction,
            ..
        } = noise
        {
            let regime = if t < burn {
                0
            } else {
                regime_at(t - burn, n, *switch_fraction)
            };
            x += &regime_means[regime];
        }
        for (i, a) in coef.lags().iter().enumerate() {
            if t > i {
                x += a * &states[t - i - 1];
            }
        }
        states.push(x);
    }

    let mut values = DMatrix::zeros(n, k);
    for t in 0..n {
        for j in 0..k {
            values[(t, j)] = states[burn + t][j];
        }
    }

    if matches!(noise, NoiseSpec::RegimeSwitchingMean { .. }) {
        // Downstream estimation assumes a zero-mean sample, so the shifted
        // output is centered before it leaves the simulator.
        for j in 0..k {
            let mean = values.column(j).sum() / n as f64;
            for t in 0..n {
                values[(t, j)] -= mean;
            }
        }
    }

    TimeSeries::from_values(values)
}

/// Which estimator produced an autocovariance sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutocovSource {
    /// Exact moments of a stationary process.
    Population,
    /// Moment estimates from observed data.
    Sample,
}

/// Autocovariances `G0..GH` of a `k`-dimensional process.
///
/// `Gh = E[z_t z_{t-h}']` for the centered process; negative lags follow
/// from `G_{-h} = Gh'` and are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocovarianceSequence {
    gammas: Vec<DMatrix<f64>>,
    source: AutocovSource,
}

impl AutocovarianceSequence {
    /// Exact autocovariances of the stable VAR given by `coef` with
    /// innovation covariance `sigma`, up to lag `max_lag`.
    ///
    /// Lags below the order come from the discrete Lyapunov equation of
    /// the companion form; higher lags extend by the Yule-Walker recursion
    /// `Gh = sum_i Ai G_{h-i}`.
    pub fn population(
        coef: &VarCoefficients,
        sigma: &DMatrix<f64>,
        max_lag: usize,
    ) -> Result<Self, CoreError> {
        let k = coef.dim();
        check_spd(sigma, "innovation covariance")?;
        if sigma.nrows() != k {
            return Err(CoreError::InvalidInput {
                reason: format!(
                    "innovation covariance is {} x {} for a {k}-dimensional process",
                    sigma.nrows(),
                    sigma.ncols()
                ),
            });
        }
        coef.require_stable()?;
        let p = coef.order();

        let mut gammas: Vec<DMatrix<f64>> = Vec::with_capacity(max_lag + 1);
        if p == 0 {
            gammas.push(sigma.clone());
            for _ in 1..=max_lag {
                gammas.push(DMatrix::zeros(k, k));
            }
        } else {
            let f = coef.companion_matrix();
            let mut q = DMatrix::zeros(k * p, k * p);
            q.view_mut((0, 0), (k, k)).copy_from(sigma);
            let state_cov = linalg::solve_discrete_lyapunov(&f, &q)?;
            for h in 0..=core::cmp::min(max_lag, p - 1) {
                gammas.push(state_cov.view((0, h * k), (k, k)).into_owned());
            }
            for h in p.max(1)..=max_lag {
                let mut g = DMatrix::zeros(k, k);
                for (i, a) in coef.lags().iter().enumerate() {
                    let lag = h - (i + 1);
                    let prev = if lag < gammas.len() {
                        gammas[lag].clone()
                    } else {
                        unreachable!("lags are filled in order")
                    };
                    g += a * prev;
                }
                gammas.push(g);
            }
        }
        Ok(AutocovarianceSequence {
            gammas,
            source: AutocovSource::Population,
        })
    }

    /// Sample autocovariances of `series` up to `max_lag`, centered at the
    /// sample mean, with the `1/n` divisor at every lag.
    pub fn sample(series: &TimeSeries, max_lag: usize) -> Result<Self, CoreError> {
        let n = series.len();
        if n <= max_lag {
            return Err(CoreError::InsufficientData { n, p: max_lag });
        }
        let k = series.dim();
        let means = series.column_means();
        let v = series.values();
        let mut gammas = Vec::with_capacity(max_lag + 1);
        for h in 0..=max_lag {
            let mut g = DMatrix::zeros(k, k);
            for t in h..n {
                let cur = v.row(t).transpose() - &means;
                let lagged = v.row(t - h).transpose() - &means;
                g += cur * lagged.transpose();
            }
            gammas.push(g / n as f64);
        }
        Ok(AutocovarianceSequence {
            gammas,
            source: AutocovSource::Sample,
        })
    }

    /// Largest stored lag.
    pub fn max_lag(&self) -> usize {
        self.gammas.len() - 1
    }

    /// Process dimension.
    pub fn dim(&self) -> usize {
        self.gammas[0].nrows()
    }

    /// Which estimator produced this sequence.
    pub fn source(&self) -> AutocovSource {
        self.source
    }

    /// The lag-`h` autocovariance; `h` must not exceed [`Self::max_lag`].
    pub fn at_lag(&self, h: usize) -> &DMatrix<f64> {
        &self.gammas[h]
    }

    fn require_lag(&self, p: usize) -> Result<(), CoreError> {
        if p > self.max_lag() {
            Err(CoreError::OrderOutOfRange {
                p,
                max: self.max_lag(),
            })
        } else {
            Ok(())
        }
    }
}

/// Trace loss of the best linear one-step predictor using lags `1..=p`.
///
/// `L(0)` is the trace of the lag-zero autocovariance; for `p >= 1` the
/// block-Toeplitz system of the first `p` lags is solved directly.
pub fn population_loss(acvs: &AutocovarianceSequence, p: usize) -> Result<f64, CoreError> {
    acvs.require_lag(p)?;
    let l0 = acvs.at_lag(0).trace();
    if p == 0 {
        return Ok(l0);
    }
    let t = linalg::block_toeplitz(&acvs.gammas, p);
    let g = linalg::stacked_gamma_row(&acvs.gammas, p);
    let (factor, _cond) = match linalg::SpdFactor::new(&t) {
        Ok(ok) => ok,
        Err(cond) => return Err(CoreError::SingularGram { p, cond }),
    };
    let x = factor.solve(&g.transpose());
    let mut reduction = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            reduction += g[(i, j)] * x[(j, i)];
        }
    }
    Ok(l0 - reduction)
}

/// The same losses as [`population_loss`] for every order `0..=p_max`,
/// computed by the one-step block recursion
/// `L(p) = L(p-1) - tr(D H D')` with
/// `D = g B^-1 C' - Gp` and `H = (G0 - C B^-1 C')^-1`,
/// where `B` is the order-`p-1` block-Toeplitz matrix, `C` its bottom
/// block row extension, and `g = [G1 ... G_{p-1}]`.
///
/// This is an independent algebraic route to the same curve and is used to
/// cross-check the direct solve.
pub fn population_loss_recursive(
    acvs: &AutocovarianceSequence,
    p_max: usize,
) -> Result<Vec<f64>, CoreError> {
    acvs.require_lag(p_max)?;
    let k = acvs.dim();
    let mut losses = Vec::with_capacity(p_max + 1);
    losses.push(acvs.at_lag(0).trace());
    for p in 1..=p_max {
        let (proj, schur) = if p == 1 {
            (DMatrix::zeros(k, k), acvs.at_lag(0).clone())
        } else {
            let b = linalg::block_toeplitz(&acvs.gammas, p - 1);
            // Bottom block row of the order-p Toeplitz matrix: the lag
            // p-1 .. 1 autocovariances transposed.
            let mut c = DMatrix::zeros(k, k * (p - 1));
            for (idx, h) in (1..p).rev().enumerate() {
                c.view_mut((0, idx * k), (k, k))
                    .copy_from(&acvs.at_lag(h).transpose());
            }
            let g = linalg::stacked_gamma_row(&acvs.gammas, p - 1);
            let (factor, _) = match linalg::SpdFactor::new(&b) {
                Ok(ok) => ok,
                Err(cond) => return Err(CoreError::SingularGram { p, cond }),
            };
            let binv_ct = factor.solve(&c.transpose());
            (&g * &binv_ct, acvs.at_lag(0) - &c * &binv_ct)
        };
        let delta = proj - acvs.at_lag(p);
        let (h_factor, _) = match linalg::SpdFactor::new(&schur) {
            Ok(ok) => ok,
            Err(cond) => return Err(CoreError::SingularGram { p, cond }),
        };
        let hd = h_factor.solve(&delta.transpose());
        let mut drop = 0.0;
        for i in 0..k {
            for j in 0..k {
                drop += delta[(i, j)] * hd[(j, i)];
            }
        }
        losses.push(losses[p - 1] - drop);
    }
    Ok(losses)
}

/// The population loss evaluated on a grid of orders, together with the
/// innovation covariance trace it flattens out at.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationLossCurve {
    losses: Vec<f64>,
    trace_sigma: f64,
}

impl PopulationLossCurve {
    /// Computes the curve for orders `0..=p_max` of the stable VAR given
    /// by `coef` and innovation covariance `sigma`.
    pub fn compute(
        coef: &VarCoefficients,
        sigma: &DMatrix<f64>,
        p_max: usize,
    ) -> Result<Self, CoreError> {
        let needed = core::cmp::max(p_max, coef.order());
        let acvs = AutocovarianceSequence::population(coef, sigma, needed)?;
        let losses = population_loss_recursive(&acvs, p_max)?;
        Ok(PopulationLossCurve {
            losses,
            trace_sigma: sigma.trace(),
        })
    }

    /// Losses for orders `0..=p_max`.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    /// Loss at one order.
    pub fn loss(&self, p: usize) -> Result<f64, CoreError> {
        self.losses
            .get(p)
            .copied()
            .ok_or(CoreError::OrderOutOfRange {
                p,
                max: self.losses.len() - 1,
            })
    }

    /// Trace of the innovation covariance, the flat level of the curve at
    /// and beyond the true order.
    pub fn trace_sigma(&self) -> f64 {
        self.trace_sigma
    }

    /// The exact-recovery penalty window for a process of true order `p0`.
    ///
    /// Any linear penalty slope strictly inside `(0, M)` with
    /// `M = min_{1<=i<=p0} (L(p0 - i) - L(p0)) / i` makes the penalized
    /// population loss attain its unique minimum at `p0`. Returns the
    /// window and the midpoint slope `M / 2`.
    pub fn oracle_window(&self, p0: usize) -> Result<OracleWindow, CoreError> {
        if p0 == 0 {
            return Err(CoreError::InvalidInput {
                reason: String::from("oracle window requires a true order of at least 1"),
            });
        }
        if p0 >= self.losses.len() {
            return Err(CoreError::OrderOutOfRange {
                p: p0,
                max: self.losses.len() - 1,
            });
        }
        let lp0 = self.losses[p0];
        let mut m = f64::INFINITY;
        for i in 1..=p0 {
            let slope = (self.losses[p0 - i] - lp0) / i as f64;
            if slope < m {
                m = slope;
            }
        }
        if !(m > 0.0) || !m.is_finite() {
            return Err(CoreError::NonpositiveWindow { m });
        }
        Ok(OracleWindow {
            m,
            lambda: 0.5 * m,
        })
    }
}

/// Exact-recovery window `(0, M)` and its midpoint slope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleWindow {
    /// Width of the window of penalty slopes that recover the true order.
    pub m: f64,
    /// The midpoint `M / 2`, the slope used by the oracle criterion.
    pub lambda: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ar1(a: f64) -> VarCoefficients {
        VarCoefficients::new(1, vec![DMatrix::from_element(1, 1, a)]).unwrap()
    }

    fn ar2_03_01() -> VarCoefficients {
        VarCoefficients::new(
            1,
            vec![
                DMatrix::from_element(1, 1, 0.3),
                DMatrix::from_element(1, 1, 0.1),
            ],
        )
        .unwrap()
    }

    fn unit_sigma(k: usize) -> DMatrix<f64> {
        DMatrix::identity(k, k)
    }

    #[test]
    fn ar1_autocovariances_match_closed_form() {
        // gamma_h = a^h / (1 - a^2) for unit innovation variance.
        let coef = ar1(0.5);
        let acvs = AutocovarianceSequence::population(&coef, &unit_sigma(1), 4).unwrap();
        for h in 0..=4 {
            let expected = 0.5f64.powi(h as i32) * 4.0 / 3.0;
            assert_relative_eq!(acvs.at_lag(h)[(0, 0)], expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn ar2_spectral_radius_is_half() {
        // Companion eigenvalues of (0.3, 0.1) are 0.5 and -0.2.
        let s = ar2_03_01().stability();
        assert!(s.is_stable);
        assert_relative_eq!(s.spectral_radius, 0.5, max_relative = 1e-10);
    }

    #[test]
    fn white_noise_is_stable_with_zero_radius() {
        let s = VarCoefficients::white_noise(3).stability();
        assert!(s.is_stable);
        assert_eq!(s.spectral_radius, 0.0);
        let acvs = AutocovarianceSequence::population(
            &VarCoefficients::white_noise(2),
            &unit_sigma(2),
            3,
        )
        .unwrap();
        assert_eq!(acvs.at_lag(2), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn unit_root_is_rejected() {
        let coef = ar1(1.0);
        assert!(!coef.stability().is_stable);
        let noise = NoiseSpec::gaussian_diagonal(DVector::from_element(1, 1.0)).unwrap();
        match simulate(&coef, &noise, 100, 7) {
            Err(CoreError::UnstableProcess { spectral_radius }) => {
                assert_relative_eq!(spectral_radius, 1.0, max_relative = 1e-10)
            }
            other => panic!("expected UnstableProcess, got {other:?}"),
        }
    }

    #[test]
    fn var2_yule_walker_extension_holds() {
        // Non-symmetric coefficients exercise the transpose convention:
        // G_{h} = A1 G_{h-1} + A2 G_{h-2} must hold for h >= order.
        let a1 = DMatrix::from_row_slice(2, 2, &[0.4, 0.15, -0.2, 0.3]);
        let a2 = DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, -0.15]);
        let coef = VarCoefficients::new(2, vec![a1.clone(), a2.clone()]).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let acvs = AutocovarianceSequence::population(&coef, &sigma, 5).unwrap();
        for h in 2..=5 {
            let lhs = acvs.at_lag(h).clone();
            let rhs = &a1 * acvs.at_lag(h - 1) + &a2 * acvs.at_lag(h - 2);
            assert_relative_eq!(
                linalg::norm_one(&(lhs - rhs)),
                0.0,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn ar1_population_loss_closed_form() {
        let coef = ar1(0.5);
        let acvs = AutocovarianceSequence::population(&coef, &unit_sigma(1), 3).unwrap();
        assert_relative_eq!(
            population_loss(&acvs, 0).unwrap(),
            4.0 / 3.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(population_loss(&acvs, 1).unwrap(), 1.0, max_relative = 1e-10);
        assert_relative_eq!(population_loss(&acvs, 3).unwrap(), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn ar2_loss_flat_beyond_true_order() {
        // From the Yule-Walker equations with unit innovation variance:
        // g1 = g0 / 3, g2 = 0.2 g0, g0 = 1 / 0.88.
        let g0: f64 = 1.0 / 0.88;
        let coef = ar2_03_01();
        let acvs = AutocovarianceSequence::population(&coef, &unit_sigma(1), 6).unwrap();
        assert_relative_eq!(acvs.at_lag(0)[(0, 0)], g0, max_relative = 1e-10);
        assert_relative_eq!(acvs.at_lag(1)[(0, 0)], g0 / 3.0, max_relative = 1e-10);
        assert_relative_eq!(acvs.at_lag(2)[(0, 0)], 0.2 * g0, max_relative = 1e-10);

        let l0 = population_loss(&acvs, 0).unwrap();
        let l1 = population_loss(&acvs, 1).unwrap();
        assert_relative_eq!(l0, g0, max_relative = 1e-12);
        assert_relative_eq!(l1, g0 * (1.0 - 1.0 / 9.0), max_relative = 1e-10);
        for p in 2..=6 {
            assert_relative_eq!(
                population_loss(&acvs, p).unwrap(),
                1.0,
                max_relative = 1e-9
            );
        }
        assert!(l0 > l1 && l1 > 1.0);
    }

    #[test]
    fn recursive_curve_matches_direct_solve() {
        let coef = ar2_03_01();
        let acvs = AutocovarianceSequence::population(&coef, &unit_sigma(1), 6).unwrap();
        let curve = population_loss_recursive(&acvs, 6).unwrap();
        for (p, &l) in curve.iter().enumerate() {
            let direct = population_loss(&acvs, p).unwrap();
            assert_relative_eq!(l, direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn oracle_window_ar1() {
        // L(0) = 4/3, L(1) = 1, so M = 1/3 and the midpoint slope is 1/6.
        let coef = ar1(0.5);
        let curve = PopulationLossCurve::compute(&coef, &unit_sigma(1), 4).unwrap();
        let w = curve.oracle_window(1).unwrap();
        assert_relative_eq!(w.m, 1.0 / 3.0, max_relative = 1e-10);
        assert_relative_eq!(w.lambda, 1.0 / 6.0, max_relative = 1e-10);

        // Claiming a higher true order puts a flat stretch inside the
        // window and collapses it.
        assert!(matches!(
            curve.oracle_window(2),
            Err(CoreError::NonpositiveWindow { .. })
        ));
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let coef = ar2_03_01();
        let noise = NoiseSpec::gaussian_diagonal(DVector::from_element(1, 1.0)).unwrap();
        let a = simulate(&coef, &noise, 200, 11).unwrap();
        let b = simulate(&coef, &noise, 200, 11).unwrap();
        let c = simulate(&coef, &noise, 200, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn simulated_ar1_matches_population_moments() {
        let coef = ar1(0.5);
        let noise = NoiseSpec::gaussian_diagonal(DVector::from_element(1, 1.0)).unwrap();
        let s = simulate(&coef, &noise, 100_000, 3).unwrap();
        let acvs = AutocovarianceSequence::sample(&s, 1).unwrap();
        let rho1 = acvs.at_lag(1)[(0, 0)] / acvs.at_lag(0)[(0, 0)];
        assert!((0.49..=0.51).contains(&rho1), "lag-1 autocorr {rho1}");
    }

    #[test]
    fn mixture_covariance_includes_mean_spread() {
        let means = vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -1.0),
        ];
        let covs = vec![unit_sigma(1), unit_sigma(1)];
        let spec = NoiseSpec::gaussian_mixture(vec![0.5, 0.5], means, covs).unwrap();
        // Total variance = within (1) + between (1).
        assert_relative_eq!(spec.covariance()[(0, 0)], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn mixture_rejects_uncentered_means() {
        let means = vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 1.0),
        ];
        let covs = vec![unit_sigma(1), unit_sigma(1)];
        assert!(NoiseSpec::gaussian_mixture(vec![0.5, 0.5], means, covs).is_err());
    }

    #[test]
    fn switching_output_is_centered_and_alternates() {
        let coef = VarCoefficients::white_noise(1);
        let noise = NoiseSpec::regime_switching_mean(
            unit_sigma(1) * 0.01,
            [DVector::from_element(1, 5.0), DVector::from_element(1, -5.0)],
            0.10,
        )
        .unwrap();
        let s = simulate(&coef, &noise, 1000, 5).unwrap();
        let mean = s.values().column(0).sum() / 1000.0;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-10);
        // Segment averages must sit near +/- 5 around the removed grand
        // mean (which is ~0 here since regimes balance).
        let seg0: f64 = (0..100).map(|t| s.values()[(t, 0)]).sum::<f64>() / 100.0;
        let seg1: f64 = (100..200).map(|t| s.values()[(t, 0)]).sum::<f64>() / 100.0;
        assert!(seg0 > 4.0 && seg1 < -4.0, "seg0 {seg0}, seg1 {seg1}");
    }
}

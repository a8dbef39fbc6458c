//! Small dense linear algebra helpers shared by the estimation and process
//! modules: SPD solves with condition estimates, log-determinants,
//! block-Toeplitz assembly, and a vectorized discrete Lyapunov solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_traits::Float;

use crate::error::CoreError;

/// Condition-number ceiling beyond which an SPD system is treated as
/// singular.
pub(crate) const COND_LIMIT: f64 = 1e12;

/// Maximum absolute column sum (the induced one-norm).
pub(crate) fn norm_one(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let mut sum = 0.0;
        for i in 0..m.nrows() {
            sum += Float::abs(m[(i, j)]);
        }
        if sum > best {
            best = sum;
        }
    }
    best
}

pub(crate) fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Factorization of a symmetric positive definite matrix, with a one-norm
/// condition estimate attached.
///
/// Cholesky is attempted first; if it fails, a symmetric eigendecomposition
/// serves as the rank-revealing fallback. Either way the factorization is
/// rejected (returning the condition estimate as the error) when the
/// estimate exceeds [`COND_LIMIT`] or the matrix is not positive definite.
pub(crate) enum SpdFactor {
    Chol(Cholesky<f64, Dyn>),
    Eigen {
        vectors: DMatrix<f64>,
        inv_values: DVector<f64>,
    },
}

impl SpdFactor {
    /// Factors `g`, returning the factor and its condition estimate, or the
    /// condition estimate alone when `g` is numerically singular.
    pub(crate) fn new(g: &DMatrix<f64>) -> Result<(SpdFactor, f64), f64> {
        debug_assert_eq!(g.nrows(), g.ncols());
        if g.nrows() == 0 {
            // An empty system is trivially well conditioned.
            return Ok((SpdFactor::Eigen {
                vectors: DMatrix::zeros(0, 0),
                inv_values: DVector::zeros(0),
            }, 1.0));
        }
        if let Some(chol) = Cholesky::new(g.clone()) {
            let inv = chol.solve(&DMatrix::identity(g.nrows(), g.ncols()));
            let cond = norm_one(g) * norm_one(&inv);
            if !cond.is_finite() || cond > COND_LIMIT {
                return Err(cond);
            }
            return Ok((SpdFactor::Chol(chol), cond));
        }
        let eig = g.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min <= 0.0 || max <= 0.0 {
            return Err(f64::INFINITY);
        }
        let cond = max / min;
        if !cond.is_finite() || cond > COND_LIMIT {
            return Err(cond);
        }
        let inv_values = eig.eigenvalues.map(|v| 1.0 / v);
        Ok((
            SpdFactor::Eigen {
                vectors: eig.eigenvectors,
                inv_values,
            },
            cond,
        ))
    }

    /// Solves `G X = B`.
    pub(crate) fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            SpdFactor::Chol(chol) => chol.solve(b),
            SpdFactor::Eigen {
                vectors,
                inv_values,
            } => {
                if vectors.nrows() == 0 {
                    return b.clone();
                }
                let mut t = vectors.transpose() * b;
                for i in 0..t.nrows() {
                    for j in 0..t.ncols() {
                        t[(i, j)] *= inv_values[i];
                    }
                }
                vectors * t
            }
        }
    }
}

/// Log-determinant of a symmetric positive definite matrix, or `None` when
/// it is not positive definite.
pub(crate) fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = Cholesky::new(m.clone())?;
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = chol.l()[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        acc += Float::ln(d);
    }
    Some(2.0 * acc)
}

/// Symmetric block-Toeplitz matrix of autocovariances: block `(r, c)` is
/// `gammas[c - r]` on and above the diagonal and `gammas[r - c]` transposed
/// below it. `gammas[h]` is the lag-`h` autocovariance, `h = 0..p-1`.
pub(crate) fn block_toeplitz(gammas: &[DMatrix<f64>], p: usize) -> DMatrix<f64> {
    debug_assert!(p >= 1 && gammas.len() >= p);
    let k = gammas[0].nrows();
    let mut t = DMatrix::zeros(k * p, k * p);
    for r in 0..p {
        for c in 0..p {
            let block = if c >= r {
                gammas[c - r].clone()
            } else {
                gammas[r - c].transpose()
            };
            t.view_mut((r * k, c * k), (k, k)).copy_from(&block);
        }
    }
    t
}

/// The row of lagged autocovariances `[gammas[1] ... gammas[p]]`, `k x kp`.
pub(crate) fn stacked_gamma_row(gammas: &[DMatrix<f64>], p: usize) -> DMatrix<f64> {
    debug_assert!(gammas.len() > p);
    let k = gammas[0].nrows();
    let mut g = DMatrix::zeros(k, k * p);
    for (i, gamma) in gammas[1..=p].iter().enumerate() {
        g.view_mut((0, i * k), (k, k)).copy_from(gamma);
    }
    g
}

/// Solves the discrete Lyapunov equation `S - F S F^T = Q` by vectorizing
/// to `(I - F (x) F) vec(S) = vec(Q)` and LU-solving. The result is
/// symmetrized and checked against the original equation.
pub(crate) fn solve_discrete_lyapunov(
    f: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<DMatrix<f64>, CoreError> {
    let m = f.nrows();
    debug_assert_eq!(f.ncols(), m);
    debug_assert_eq!(q.nrows(), m);
    debug_assert_eq!(q.ncols(), m);

    let kron = f.kronecker(f);
    let system = DMatrix::identity(m * m, m * m) - kron;
    // vec() stacks columns, matching the Kronecker identity
    // vec(F S F^T) = (F (x) F) vec(S).
    let rhs = DVector::from_column_slice(q.as_slice());
    let solved = system
        .lu()
        .solve(&rhs)
        .ok_or(CoreError::LyapunovSolveFailed)?;
    let s = DMatrix::from_column_slice(m, m, solved.as_slice());
    let s = (&s + s.transpose()) * 0.5;
    if !all_finite(&s) {
        return Err(CoreError::LyapunovSolveFailed);
    }
    let residual = &s - f * &s * f.transpose() - q;
    let scale = 1.0 + norm_one(q) + norm_one(&s);
    if norm_one(&residual) > 1e-8 * scale {
        return Err(CoreError::LyapunovSolveFailed);
    }
    Ok(s)
}

//! Dense symmetric linear algebra for Gaussian likelihoods.
//!
//! Likelihood paths go through [`CholFactor`]; explicit inverses only appear
//! in test oracles. Storage is dense and aimed at `n` up to a few thousand.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::covariance::{KernelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::simulate::Design;

/// First jitter tried, relative to the mean diagonal.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter allowed, relative to the mean diagonal.
pub const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JitterPolicy {
    /// Fail on the first non-positive pivot.
    Strict,
    /// Retry with `jitter·I`, jitter climbing ×10 from `1e-10` to `1e-6`
    /// times the mean diagonal.
    #[default]
    Jitter,
}

/// Symmetric covariance matrix `R_θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    matrix: DMatrix<f64>,
}

impl CovMatrix {
    /// Wraps a square, exactly symmetric matrix.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in 0..i {
                if matrix[(i, j)] != matrix[(j, i)] {
                    return Err(Error::Domain(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    fn to_row_major(&self) -> Vec<f64> {
        // symmetric, so the column-major buffer is also the row-major one
        self.matrix.as_slice().to_vec()
    }
}

/// Lower Cholesky factor `L` with `L Lᵀ = R + jitter_used·I`.
#[derive(Debug, Clone)]
pub struct CholFactor {
    n: usize,
    // row-major, upper triangle left at zero
    lower: Vec<f64>,
    logdet: f64,
    jitter_used: f64,
}

impl CholFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `log |R + jitter·I|`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.lower)
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.lower[i * self.n..i * self.n + i + 1]
    }

    /// Factors a row-major symmetric buffer in place, trying the given
    /// jitter ladder.
    pub(crate) fn factor_row_major(mut data: Vec<f64>, n: usize, policy: JitterPolicy) -> Result<Self> {
        let original_diag: Vec<f64> = (0..n).map(|i| data[i * n + i]).collect();
        match factor_in_place(&mut data, n) {
            Ok(logdet) => {
                return Ok(Self {
                    n,
                    lower: data,
                    logdet,
                    jitter_used: 0.0,
                })
            }
            Err(pivot) if policy == JitterPolicy::Strict => return Err(Error::NotPositiveDefinite { pivot }),
            Err(_) => {}
        }
        // factor_in_place only overwrote the lower triangle; the upper one
        // still holds the original entries
        let mean_diag = original_diag.iter().sum::<f64>() / n as f64;
        let mut rel = JITTER_START;
        let mut last_pivot = 0;
        while rel <= JITTER_MAX * (1.0 + 1e-12) {
            let jitter = rel * mean_diag;
            for i in 0..n {
                for j in 0..i {
                    data[i * n + j] = data[j * n + i];
                }
                data[i * n + i] = original_diag[i] + jitter;
            }
            match factor_in_place(&mut data, n) {
                Ok(logdet) => {
                    return Ok(Self {
                        n,
                        lower: data,
                        logdet,
                        jitter_used: jitter,
                    })
                }
                Err(pivot) => last_pivot = pivot,
            }
            rel *= 10.0;
        }
        Err(Error::NotPositiveDefinite { pivot: last_pivot })
    }

    /// Solves `L w = b` in place.
    pub(crate) fn forward_in_place(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let row = self.row(i);
            let s = dot(&row[..i], &b[..i]);
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `Lᵀ x = w` in place.
    pub(crate) fn backward_in_place(&self, w: &mut [f64]) {
        for i in (0..self.n).rev() {
            let row = self.row(i);
            let xi = w[i] / row[i];
            w[i] = xi;
            for (wk, lk) in w[..i].iter_mut().zip(&row[..i]) {
                *wk -= lk * xi;
            }
        }
    }

    /// `L z`.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| dot(self.row(i), &z[..=i])).collect()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: len });
        }
        Ok(())
    }

    /// `yᵀ R⁻¹ y`.
    pub fn quad_form_inv(&self, y: &[f64]) -> Result<f64> {
        self.check_len(y.len())?;
        let mut w = y.to_vec();
        self.forward_in_place(&mut w);
        Ok(dot(&w, &w))
    }

    /// `R⁻¹ b`.
    pub fn solve_vec(&self, b: &[f64]) -> Result<Vec<f64>> {
        self.check_len(b.len())?;
        let mut x = b.to_vec();
        self.forward_in_place(&mut x);
        self.backward_in_place(&mut x);
        Ok(x)
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.solve_vec(b.as_slice())?))
    }

    /// `R⁻¹ B`, column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_len(b.nrows())?;
        let mut out = b.clone();
        for mut col in out.column_iter_mut() {
            let slice = col.as_mut_slice();
            self.forward_in_place(slice);
            self.backward_in_place(slice);
        }
        Ok(out)
    }
}

/// Row-oriented Cholesky on the lower triangle of a row-major buffer.
/// Returns `log det` or the index of the failing pivot. The strict upper
/// triangle is only touched (zeroed) on success.
fn factor_in_place(a: &mut [f64], n: usize) -> std::result::Result<f64, usize> {
    let mut logdet = 0.0;
    for i in 0..n {
        let (done, rest) = a.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j + 1];
            let s = row_i[j] - dot(&row_i[..j], &row_j[..j]);
            row_i[j] = s / row_j[j];
        }
        let s = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !(s > 0.0) || !s.is_finite() {
            return Err(i);
        }
        let l = s.sqrt();
        row_i[i] = l;
        logdet += 2.0 * l.ln();
    }
    for i in 0..n {
        for v in &mut a[i * n + i + 1..(i + 1) * n] {
            *v = 0.0;
        }
    }
    Ok(logdet)
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[2]) + (acc[1] + acc[3]);
    for k in 4 * chunks..n {
        s += a[k] * b[k];
    }
    s
}

/// Covariance matrix of `design` under `k_θ`.
pub fn build_cov(spec: &KernelSpec, theta: &ParamVector, design: &Design) -> Result<CovMatrix> {
    theta.validate()?;
    design.check_distinct()?;
    let dist = design.distance_matrix();
    let data = cov_from_distances(spec, theta, &dist, design.len());
    Ok(CovMatrix {
        matrix: DMatrix::from_vec(design.len(), design.len(), data),
    })
}

/// Row-major `[k_θ(d_ij)]` from a full distance matrix.
pub(crate) fn cov_from_distances(spec: &KernelSpec, theta: &ParamVector, dist: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        out[i * n + i] = theta.sigma2;
        for j in 0..i {
            let k = spec.eval_unchecked(theta, dist[i * n + j]);
            out[i * n + j] = k;
            out[j * n + i] = k;
        }
    }
    out
}

pub fn chol(cov: &CovMatrix, policy: JitterPolicy) -> Result<CholFactor> {
    CholFactor::factor_row_major(cov.to_row_major(), cov.n(), policy)
}

pub fn quad_form_inv(factor: &CholFactor, y: &[f64]) -> Result<f64> {
    factor.quad_form_inv(y)
}

pub fn solve(factor: &CholFactor, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    factor.solve_matrix(b)
}

fn check_square_pair(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<()> {
    let n = sigma.nrows();
    for m in [a, sigma] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if m.nrows() != n { m.nrows() } else { m.ncols() },
            });
        }
    }
    Ok(())
}

/// `tr(A B)` without forming the product.
pub(crate) fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    // tr(AB) = Σ_ij A_ij B_ji; column j of B's transpose is row j of B
    a.component_mul(&b.transpose()).sum()
}

/// `E(Vᵀ A V) = tr(A Σ)` for `V ~ N(0, Σ)`.
pub fn qf_mean(a: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    check_square_pair(a, sigma)?;
    Ok(trace_of_product(a, sigma))
}

/// `cov(Vᵀ A V, Vᵀ B V) = 2 tr(A Σ B Σ)` for symmetrized `A`, `B`.
pub fn qf_cov(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    check_square_pair(a, sigma)?;
    check_square_pair(b, sigma)?;
    let a_sym = (a + a.transpose()) * 0.5;
    let b_sym = (b + b.transpose()) * 0.5;
    let left = &a_sym * sigma;
    let right = &b_sym * sigma;
    Ok(2.0 * trace_of_product(&left, &right))
}

/// Smallest and largest eigenvalues, via Householder tridiagonalization and
/// implicit symmetric QR (nalgebra's `SymmetricEigen`).
pub fn eig_extremes(cov: &CovMatrix) -> (f64, f64) {
    let eig = SymmetricEigen::new(cov.matrix.clone());
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Gershgorin bound `max_i Σ_j |R_ij|` on the largest eigenvalue.
pub fn gershgorin_upper(cov: &CovMatrix) -> f64 {
    cov.matrix
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

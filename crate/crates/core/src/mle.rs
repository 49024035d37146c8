//! Gaussian likelihood criterion, its gradient, profile variance estimator,
//! maximum likelihood fitting, Fisher matrix and identifiability functionals.
//!
//! The criterion is `L_n(θ) = (1/n) log|R_θ| + (1/n) yᵀ R_θ⁻¹ y`, minus twice the
//! log-likelihood over `n` up to a constant. All paths factor `R_θ` with
//! [`JitterPolicy::Jitter`].

use nalgebra::{DMatrix, Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use crate::covariance::{microergodic, KernelSpec, ParamBounds, ParamVector, N_PARAMS};
use crate::error::{Error, Result};
use crate::gausslin::{cov_from_distances, trace_of_product, CholFactor, JitterPolicy};
use crate::optimize::brent_bounded;
use crate::simulate::Design;

const POLICY: JitterPolicy = JitterPolicy::Jitter;
/// Relative tolerance on `α` for [`fit_full`], times `alpha_sup - alpha_inf`.
pub const ALPHA_XTOL: f64 = 1e-8;
const MAX_EVALS_PER_START: usize = 500;

fn factor(matrix: Vec<f64>, n: usize, theta: &ParamVector) -> Result<CholFactor> {
    CholFactor::factor_row_major(matrix, n, POLICY).map_err(|source| Error::Factorization {
        theta: *theta,
        source: Box::new(source),
    })
}

fn check_y(design: &Design, y: &[f64]) -> Result<()> {
    if y.len() != design.len() {
        return Err(Error::DimensionMismatch {
            expected: design.len(),
            got: y.len(),
        });
    }
    if design.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    Ok(())
}

/// `R_θ` and `∂R_θ/∂θ_m` for the design.
fn assemble(spec: &KernelSpec, theta: &ParamVector, design: &Design) -> Result<(DMatrix<f64>, [DMatrix<f64>; N_PARAMS])> {
    theta.validate()?;
    design.check_distinct()?;
    let n = design.len();
    let mut r = DMatrix::zeros(n, n);
    let mut dr = [DMatrix::zeros(n, n), DMatrix::zeros(n, n)];
    for i in 0..n {
        for j in 0..=i {
            let dist = design.distance(i, j);
            let k = spec.eval_unchecked(theta, dist);
            let g = spec.grad_unchecked(theta, dist);
            r[(i, j)] = k;
            r[(j, i)] = k;
            for m in 0..N_PARAMS {
                dr[m][(i, j)] = g[m];
                dr[m][(j, i)] = g[m];
            }
        }
    }
    Ok((r, dr))
}

fn factor_matrix(r: &DMatrix<f64>, theta: &ParamVector) -> Result<CholFactor> {
    factor(r.as_slice().to_vec(), r.nrows(), theta)
}

/// `L_n(θ)` for the given observations.
pub fn criterion_ln(spec: &KernelSpec, theta: &ParamVector, design: &Design, y: &[f64]) -> Result<f64> {
    check_y(design, y)?;
    theta.validate()?;
    design.check_distinct()?;
    let n = design.len();
    let f = factor(cov_from_distances(spec, theta, &design.distance_matrix(), n), n, theta)?;
    criterion_from_factor(&f, y)
}

/// `L_n` from an existing factorization of `R`.
pub fn criterion_from_factor(factor: &CholFactor, y: &[f64]) -> Result<f64> {
    let n = factor.n() as f64;
    Ok((factor.logdet() + factor.quad_form_inv(y)?) / n)
}

/// Analytic gradient of `L_n` in `(σ², α)`:
/// `(1/n) tr(R⁻¹ ∂R) - (1/n) yᵀ R⁻¹ ∂R R⁻¹ y`.
pub fn grad_ln(spec: &KernelSpec, theta: &ParamVector, design: &Design, y: &[f64]) -> Result<[f64; N_PARAMS]> {
    check_y(design, y)?;
    let (r, dr) = assemble(spec, theta, design)?;
    let f = factor_matrix(&r, theta)?;
    let n = design.len() as f64;
    let a = nalgebra::DVector::from_vec(f.solve_vec(y)?);
    let mut grad = [0.0; N_PARAMS];
    for (g, d) in grad.iter_mut().zip(&dr) {
        let w = f.solve_matrix(d)?;
        let quad = (a.transpose() * d * &a)[(0, 0)];
        *g = (w.trace() - quad) / n;
    }
    Ok(grad)
}

/// `E[∇L_n]` at the true parameter, evaluated term by term as
/// `(1/n) tr(R⁻¹∂R) - (1/n) tr(R⁻¹ ∂R R⁻¹ R)`; zero up to rounding.
pub fn expected_score(spec: &KernelSpec, theta: &ParamVector, design: &Design) -> Result<[f64; N_PARAMS]> {
    let (r, dr) = assemble(spec, theta, design)?;
    let f = factor_matrix(&r, theta)?;
    let n = design.len() as f64;
    let r_inv_r = f.solve_matrix(&r)?;
    let mut out = [0.0; N_PARAMS];
    for (o, d) in out.iter_mut().zip(&dr) {
        let w = f.solve_matrix(d)?;
        *o = (w.trace() - trace_of_product(&w, &r_inv_r)) / n;
    }
    Ok(out)
}

/// Exact `var(L_n(θ))` when `y ~ N(0, R_θ₀)`:
/// `(2/n²) tr(R_θ⁻¹ R_θ₀ R_θ⁻¹ R_θ₀)`.
pub fn var_ln(spec: &KernelSpec, theta: &ParamVector, theta0: &ParamVector, design: &Design) -> Result<f64> {
    theta.validate()?;
    theta0.validate()?;
    design.check_distinct()?;
    let n = design.len();
    let dist = design.distance_matrix();
    let f = factor(cov_from_distances(spec, theta, &dist, n), n, theta)?;
    let r0 = DMatrix::from_vec(n, n, cov_from_distances(spec, theta0, &dist, n));
    let v = f.solve_matrix(&r0)?;
    Ok(2.0 * trace_of_product(&v, &v) / (n as f64 * n as f64))
}

/// Profile-likelihood evaluation at a fixed `α`.
#[derive(Debug, Clone, Copy)]
struct ProfilePoint {
    alpha: f64,
    sigma2: f64,
    // (1/n) log|Σ_α|
    logdet_over_n: f64,
    criterion: f64,
    jitter_used: f64,
}

/// Evaluates `α ↦ L_n(σ̂²(α), α)` on a fixed design.
struct Profile<'a> {
    spec: &'a KernelSpec,
    dist: Vec<f64>,
    n: usize,
    y: &'a [f64],
}

impl<'a> Profile<'a> {
    fn new(spec: &'a KernelSpec, design: &Design, y: &'a [f64]) -> Result<Self> {
        check_y(design, y)?;
        design.check_distinct()?;
        if y.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroObservations);
        }
        Ok(Self {
            spec,
            dist: design.distance_matrix(),
            n: design.len(),
            y,
        })
    }

    fn at(&self, alpha: f64) -> Result<ProfilePoint> {
        let unit = ParamVector::new(1.0, alpha)?;
        let f = factor(cov_from_distances(self.spec, &unit, &self.dist, self.n), self.n, &unit)?;
        let n = self.n as f64;
        let sigma2 = f.quad_form_inv(self.y)? / n;
        let logdet_over_n = f.logdet() / n;
        Ok(ProfilePoint {
            alpha,
            sigma2,
            logdet_over_n,
            criterion: sigma2.ln() + logdet_over_n + 1.0,
            jitter_used: f.jitter_used(),
        })
    }
}

/// Closed-form minimizer of `σ² ↦ L_n(σ², α)`: `σ̂²(α) = (1/n) yᵀ Σ_α⁻¹ y` with
/// `Σ_α = R_{σ²,α} / σ²`.
pub fn profile_sigma2(spec: &KernelSpec, alpha: f64, design: &Design, y: &[f64]) -> Result<f64> {
    Ok(Profile::new(spec, design, y)?.at(alpha)?.sigma2)
}

/// Which end of `[alpha_inf, alpha_sup]`, if any, the fitted `α` sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtBound {
    None,
    Lower,
    Upper,
}

/// Maximum likelihood fit over `Θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta_hat: ParamVector,
    /// `L_n` at `theta_hat`.
    pub criterion: f64,
    /// `σ̂² α̂^{2ν}`; `None` for the squared exponential family.
    pub microergodic_hat: Option<f64>,
    pub n_evals: usize,
    pub at_bound: AtBound,
    pub sigma2_clamped: bool,
    pub jitter_used: f64,
}

/// Flat JSON form of a [`FitResult`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub sigma2_hat: f64,
    pub alpha_hat: f64,
    pub criterion: f64,
    pub microergodic_hat: Option<f64>,
    pub n_evals: usize,
    pub at_bound: AtBound,
    pub sigma2_clamped: bool,
    pub jitter_used: f64,
}

impl From<&FitResult> for FitRecord {
    fn from(fit: &FitResult) -> Self {
        Self {
            sigma2_hat: fit.theta_hat.sigma2,
            alpha_hat: fit.theta_hat.alpha,
            criterion: fit.criterion,
            microergodic_hat: fit.microergodic_hat,
            n_evals: fit.n_evals,
            at_bound: fit.at_bound,
            sigma2_clamped: fit.sigma2_clamped,
            jitter_used: fit.jitter_used,
        }
    }
}

impl FitResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&FitRecord::from(self))?)
    }
}

/// Minimizes `L_n` over `Θ`, profiling `σ²` in closed form and searching
/// `α` with [`brent_bounded`] on `multistart` equal sub-intervals of the
/// bounds (each started at its midpoint). Both bounds are also evaluated.
/// Ties in the criterion go to the smallest `α`.
pub fn fit_full(spec: &KernelSpec, design: &Design, y: &[f64], bounds: &ParamBounds, multistart: usize) -> Result<FitResult> {
    bounds.validate()?;
    if design.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: design.len(),
        });
    }
    let profile = Profile::new(spec, design, y)?;
    let (lo, hi) = bounds.alpha_range;
    let xtol = ALPHA_XTOL * (hi - lo);
    let starts = multistart.max(1);
    let width = (hi - lo) / starts as f64;

    let mut failures: Vec<String> = Vec::new();
    let mut candidates: Vec<ProfilePoint> = Vec::new();
    let mut n_evals = 0;
    let try_point = |alpha: f64, failures: &mut Vec<String>, candidates: &mut Vec<ProfilePoint>| -> f64 {
        match profile.at(alpha) {
            Ok(p) if p.criterion.is_finite() => {
                candidates.push(p);
                p.criterion
            }
            Ok(p) => {
                failures.push(format!("alpha={alpha}: non-finite criterion {}", p.criterion));
                f64::INFINITY
            }
            Err(e) => {
                failures.push(format!("alpha={alpha}: {e}"));
                f64::INFINITY
            }
        }
    };

    for k in 0..starts {
        let seg_lo = lo + k as f64 * width;
        let seg_hi = if k + 1 == starts { hi } else { lo + (k + 1) as f64 * width };
        let x0 = 0.5 * (seg_lo + seg_hi);
        let m = brent_bounded(
            |a| try_point(a, &mut failures, &mut candidates),
            seg_lo,
            seg_hi,
            x0,
            xtol,
            MAX_EVALS_PER_START,
        );
        n_evals += m.evals;
    }
    for edge in [lo, hi] {
        try_point(edge, &mut failures, &mut candidates);
        n_evals += 1;
    }

    let best = candidates
        .iter()
        .copied()
        .reduce(|best, c| {
            let tie = (c.criterion - best.criterion).abs() <= 1e-14 * best.criterion.abs().max(1.0);
            if (tie && c.alpha < best.alpha) || (!tie && c.criterion < best.criterion) {
                c
            } else {
                best
            }
        })
        .ok_or(Error::FitFailed { attempts: failures })?;

    let (s_lo, s_hi) = bounds.sigma2_range;
    let sigma2 = best.sigma2.clamp(s_lo, s_hi);
    let sigma2_clamped = sigma2 != best.sigma2;
    let criterion = if sigma2_clamped {
        sigma2.ln() + best.logdet_over_n + best.sigma2 / sigma2
    } else {
        best.criterion
    };
    let edge_tol = 10.0 * xtol;
    let at_bound = if best.alpha - lo <= edge_tol {
        AtBound::Lower
    } else if hi - best.alpha <= edge_tol {
        AtBound::Upper
    } else {
        AtBound::None
    };
    let theta_hat = ParamVector::new(sigma2, best.alpha)?;
    Ok(FitResult {
        theta_hat,
        criterion,
        microergodic_hat: spec.smoothness().map(|nu| microergodic(&theta_hat, nu)),
        n_evals,
        at_bound,
        sigma2_clamped,
        jitter_used: best.jitter_used,
    })
}

/// `Σ_θ` with entries `(1/2)(1/n) tr(R⁻¹ ∂_iR R⁻¹ ∂_jR)`; `n Σ_θ` is the Fisher
/// information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub sigma: [[f64; N_PARAMS]; N_PARAMS],
    pub n: usize,
}

impl FisherMatrix {
    fn as_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.sigma[0][0], self.sigma[0][1], self.sigma[1][0], self.sigma[1][1])
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let e = SymmetricEigen::new(self.as_matrix()).eigenvalues;
        (e[0].min(e[1]), e[0].max(e[1]))
    }

    /// `Σ⁻¹`, the asymptotic covariance of `√n (θ̂ - θ)`.
    pub fn inverse(&self) -> Option<[[f64; N_PARAMS]; N_PARAMS]> {
        let inv = self.as_matrix().try_inverse()?;
        Some([[inv[(0, 0)], inv[(0, 1)]], [inv[(1, 0)], inv[(1, 1)]]])
    }

    /// Symmetric square root `Σ^{1/2}`; requires `Σ` positive definite.
    pub fn sqrt(&self) -> Option<[[f64; N_PARAMS]; N_PARAMS]> {
        let eig = SymmetricEigen::new(self.as_matrix());
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return None;
        }
        let root = eig.eigenvectors * Matrix2::from_diagonal(&eig.eigenvalues.map(f64::sqrt)) * eig.eigenvectors.transpose();
        Some([[root[(0, 0)], root[(0, 1)]], [root[(1, 0)], root[(1, 1)]]])
    }

    /// `√n Σ^{1/2} (θ̂ - θ₀)`, asymptotically standard normal.
    pub fn standardize(&self, theta_hat: &ParamVector, theta0: &ParamVector) -> Option<[f64; N_PARAMS]> {
        let root = self.sqrt()?;
        let root = Matrix2::new(root[0][0], root[0][1], root[1][0], root[1][1]);
        let diff = Vector2::new(theta_hat.sigma2 - theta0.sigma2, theta_hat.alpha - theta0.alpha);
        let z = root * diff * (self.n as f64).sqrt();
        Some([z[0], z[1]])
    }
}

/// Traces `tr(R⁻¹ ∂_iR R⁻¹ ∂_jR)` for all `(i, j)`.
fn trace_products(spec: &KernelSpec, theta: &ParamVector, design: &Design) -> Result<[[f64; N_PARAMS]; N_PARAMS]> {
    let (r, dr) = assemble(spec, theta, design)?;
    let f = factor_matrix(&r, theta)?;
    let w = [f.solve_matrix(&dr[0])?, f.solve_matrix(&dr[1])?];
    let mut t = [[0.0; N_PARAMS]; N_PARAMS];
    for i in 0..N_PARAMS {
        for j in i..N_PARAMS {
            let v = trace_of_product(&w[i], &w[j]);
            t[i][j] = v;
            t[j][i] = v;
        }
    }
    Ok(t)
}

pub fn fisher_matrix(spec: &KernelSpec, theta: &ParamVector, design: &Design) -> Result<FisherMatrix> {
    let t = trace_products(spec, theta, design)?;
    let n = design.len();
    let scale = 0.5 / n as f64;
    Ok(FisherMatrix {
        sigma: t.map(|row| row.map(|v| scale * v)),
        n,
    })
}

/// Covariance of `∇L_n(θ₀)`: `(2/n²) tr(R⁻¹ ∂_iR R⁻¹ ∂_jR)`.
pub fn score_cov(spec: &KernelSpec, theta0: &ParamVector, design: &Design) -> Result<[[f64; N_PARAMS]; N_PARAMS]> {
    let t = trace_products(spec, theta0, design)?;
    let n = design.len() as f64;
    let scale = 2.0 / (n * n);
    Ok(t.map(|row| row.map(|v| scale * v)))
}

/// `(1/n) Σ_{i,j} (k_θ(s_i - s_j) - k_θ₀(s_i - s_j))²`.
pub fn ident_global(spec: &KernelSpec, theta: &ParamVector, theta0: &ParamVector, design: &Design) -> Result<f64> {
    theta.validate()?;
    theta0.validate()?;
    let n = design.len();
    if n == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let mut sum = 0.0;
    for i in 0..n {
        let diag = theta.sigma2 - theta0.sigma2;
        sum += diag * diag;
        for j in 0..i {
            let r = design.distance(i, j);
            let diff = spec.eval_unchecked(theta, r) - spec.eval_unchecked(theta0, r);
            sum += 2.0 * diff * diff;
        }
    }
    Ok(sum / n as f64)
}

/// `(1/n) Σ_{i,j} (Σ_m λ_m ∂k_θ₀(s_i - s_j)/∂θ_m)²` for a unit direction `λ`.
pub fn ident_local(spec: &KernelSpec, theta0: &ParamVector, lambda: [f64; N_PARAMS], design: &Design) -> Result<f64> {
    theta0.validate()?;
    let norm = lambda.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::NonUnitDirection(norm));
    }
    let n = design.len();
    if n == 0 {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let combo = |r: f64| {
        let g = spec.grad_unchecked(theta0, r);
        lambda[0] * g[0] + lambda[1] * g[1]
    };
    let mut sum = 0.0;
    for i in 0..n {
        let d = combo(0.0);
        sum += d * d;
        for j in 0..i {
            let v = combo(design.distance(i, j));
            sum += 2.0 * v * v;
        }
    }
    Ok(sum / n as f64)
}

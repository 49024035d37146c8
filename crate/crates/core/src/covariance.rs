//! Isotropic stationary covariance families: exponential, squared
//! exponential (Gaussian) and Matérn with fixed smoothness.
//!
//! Every kernel is parameterised by `θ = (σ², α)`; the Matérn smoothness `ν`
//! is structural and never estimated. Spectral densities use the convention
//! `k(u) = ∫ k̂(ω) e^{iωᵀu} dω`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{bessel_k_unchecked, log_gamma_unchecked};

/// Number of covariance parameters, `(σ², α)`.
pub const N_PARAMS: usize = 2;

/// Kernel values below this are flushed to exactly zero.
pub const KERNEL_UNDERFLOW: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Exponential,
    SquaredExponential,
    Matern,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Family::Exponential => "exponential",
            Family::SquaredExponential => "squared_exponential",
            Family::Matern => "matern",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernelSpec {
    family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
}

/// A covariance family plus its fixed structural constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec", into = "RawKernelSpec")]
pub struct KernelSpec {
    family: Family,
    nu: Option<f64>,
    // ln(2^{1-ν} / Γ(ν)), cached for Matérn
    log_norm: f64,
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        match (raw.family, raw.nu) {
            (Family::Matern, Some(nu)) => KernelSpec::matern(nu),
            (Family::Matern, None) => Err(Error::config("kernel.nu", "required for the matern family")),
            (family, None) => Ok(KernelSpec::simple(family)),
            (_, Some(_)) => Err(Error::config("kernel.nu", "only allowed for the matern family")),
        }
    }
}

impl From<KernelSpec> for RawKernelSpec {
    fn from(spec: KernelSpec) -> Self {
        RawKernelSpec {
            family: spec.family,
            nu: spec.nu,
        }
    }
}

impl KernelSpec {
    pub fn exponential() -> Self {
        Self::simple(Family::Exponential)
    }

    pub fn squared_exponential() -> Self {
        Self::simple(Family::SquaredExponential)
    }

    fn simple(family: Family) -> Self {
        Self {
            family,
            nu: None,
            log_norm: 0.0,
        }
    }

    pub fn matern(nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::Domain(format!("matern smoothness must be positive, got {nu}")));
        }
        Ok(Self {
            family: Family::Matern,
            nu: Some(nu),
            log_norm: (1.0 - nu) * std::f64::consts::LN_2 - log_gamma_unchecked(nu),
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Matérn `ν`, if this is a Matérn kernel.
    pub fn nu(&self) -> Option<f64> {
        self.nu
    }

    /// Smoothness in the Matérn sense: `ν` for Matérn, `1/2` for the
    /// exponential kernel, none for the squared exponential.
    pub fn smoothness(&self) -> Option<f64> {
        match self.family {
            Family::Exponential => Some(0.5),
            Family::Matern => self.nu,
            Family::SquaredExponential => None,
        }
    }

    /// `k_θ(r)` for a lag of norm `r`.
    pub fn eval(&self, theta: &ParamVector, r: f64) -> Result<f64> {
        theta.validate()?;
        check_lag(r)?;
        Ok(self.eval_unchecked(theta, r))
    }

    pub(crate) fn eval_unchecked(&self, theta: &ParamVector, r: f64) -> f64 {
        if r == 0.0 {
            return theta.sigma2;
        }
        let z = theta.alpha * r;
        let value = match self.family {
            Family::Exponential => theta.sigma2 * (-z).exp(),
            Family::SquaredExponential => theta.sigma2 * (-z * z).exp(),
            Family::Matern => {
                let nu = self.nu.unwrap_or(0.5);
                theta.sigma2 * matern_correlation(nu, self.log_norm, z)
            }
        };
        if value < KERNEL_UNDERFLOW {
            0.0
        } else {
            value
        }
    }

    /// `(∂k/∂σ², ∂k/∂α)` at lag norm `r`.
    pub fn grad_params(&self, theta: &ParamVector, r: f64) -> Result<[f64; N_PARAMS]> {
        theta.validate()?;
        check_lag(r)?;
        Ok(self.grad_unchecked(theta, r))
    }

    pub(crate) fn grad_unchecked(&self, theta: &ParamVector, r: f64) -> [f64; N_PARAMS] {
        let k = self.eval_unchecked(theta, r);
        let d_sigma2 = k / theta.sigma2;
        if r == 0.0 {
            return [d_sigma2, 0.0];
        }
        let d_alpha = match self.family {
            Family::Exponential => -r * k,
            Family::SquaredExponential => -2.0 * theta.alpha * r * r * k,
            Family::Matern => {
                // d/dz [z^ν K_ν(z)] = -z^ν K_{ν-1}(z), z = αr
                let nu = self.nu.unwrap_or(0.5);
                let z = theta.alpha * r;
                let log_mag = self.log_norm + nu * z.ln();
                let km1 = bessel_k_unchecked((nu - 1.0).abs(), z);
                let v = theta.sigma2 * r * log_mag.exp() * km1;
                if v.is_finite() && v > KERNEL_UNDERFLOW {
                    -v
                } else {
                    0.0
                }
            }
        };
        [d_sigma2, d_alpha]
    }

    /// Spectral density `k̂_θ(ω)` at frequency norm `omega_norm` in dimension `d`.
    pub fn spectral_density(&self, theta: &ParamVector, omega_norm: f64, d: usize) -> Result<f64> {
        theta.validate()?;
        if !(1..=3).contains(&d) {
            return Err(Error::Unsupported(format!(
                "spectral density of the {} family in dimension {d}",
                self.family
            )));
        }
        if !(omega_norm.is_finite() && omega_norm >= 0.0) {
            return Err(Error::Domain(format!("frequency norm must be >= 0, got {omega_norm}")));
        }
        let dim = d as f64;
        let ParamVector { sigma2, alpha } = *theta;
        let value = match self.family {
            Family::Exponential | Family::Matern => {
                let nu = self.smoothness().unwrap_or(0.5);
                let e = nu + 0.5 * dim;
                let log_v = log_gamma_unchecked(e) - log_gamma_unchecked(nu) - 0.5 * dim * PI.ln()
                    + 2.0 * nu * alpha.ln()
                    - e * (alpha * alpha + omega_norm * omega_norm).ln();
                sigma2 * log_v.exp()
            }
            Family::SquaredExponential => {
                sigma2 * (2.0 * alpha * PI.sqrt()).powf(-dim) * (-(omega_norm * omega_norm) / (4.0 * alpha * alpha)).exp()
            }
        };
        Ok(value)
    }
}

/// `2^{1-ν}/Γ(ν) z^ν K_ν(z)` for `z > 0`.
fn matern_correlation(nu: f64, log_norm: f64, z: f64) -> f64 {
    match nu {
        _ if nu == 0.5 => (-z).exp(),
        _ if nu == 1.5 => (1.0 + z) * (-z).exp(),
        _ if nu == 2.5 => (1.0 + z + z * z / 3.0) * (-z).exp(),
        _ => {
            let kv = bessel_k_unchecked(nu, z);
            if kv == 0.0 {
                return 0.0;
            }
            (log_norm + nu * z.ln() + kv.ln()).exp()
        }
    }
}

fn check_lag(r: f64) -> Result<()> {
    if r.is_finite() && r >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("lag norm must be finite and >= 0, got {r}")))
    }
}

/// Covariance parameter `θ = (σ², α)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamVector {
    pub sigma2: f64,
    pub alpha: f64,
}

impl ParamVector {
    pub fn new(sigma2: f64, alpha: f64) -> Result<Self> {
        let theta = Self { sigma2, alpha };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(Error::Domain(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Domain(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; N_PARAMS] {
        [self.sigma2, self.alpha]
    }

    pub fn from_array(values: [f64; N_PARAMS]) -> Result<Self> {
        Self::new(values[0], values[1])
    }
}

/// Box constraints `Θ` used for optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    #[serde(default = "ParamBounds::default_sigma2_range")]
    pub sigma2_range: (f64, f64),
    pub alpha_range: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            sigma2_range: Self::default_sigma2_range(),
            alpha_range: (0.1, 10.0),
        }
    }
}

impl ParamBounds {
    pub fn new(alpha_inf: f64, alpha_sup: f64) -> Result<Self> {
        let bounds = Self {
            alpha_range: (alpha_inf, alpha_sup),
            ..Self::default()
        };
        bounds.validate()?;
        Ok(bounds)
    }

    fn default_sigma2_range() -> (f64, f64) {
        (1e-12, 1e12)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.alpha_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi) {
            return Err(Error::config(
                "bounds.alpha_range",
                format!("need 0 < alpha_inf < alpha_sup < inf, got [{lo}, {hi}]"),
            ));
        }
        let (slo, shi) = self.sigma2_range;
        if !(slo.is_finite() && shi.is_finite() && 0.0 < slo && slo < shi) {
            return Err(Error::config(
                "bounds.sigma2_range",
                format!("need 0 < lower < upper < inf, got [{slo}, {shi}]"),
            ));
        }
        Ok(())
    }

    pub fn alpha_inf(&self) -> f64 {
        self.alpha_range.0
    }

    pub fn alpha_sup(&self) -> f64 {
        self.alpha_range.1
    }

    pub fn contains_alpha(&self, alpha: f64) -> bool {
        self.alpha_range.0 <= alpha && alpha <= self.alpha_range.1
    }
}

/// `k_θ(r)`; free-function form of [`KernelSpec::eval`].
pub fn eval(spec: &KernelSpec, theta: &ParamVector, r: f64) -> Result<f64> {
    spec.eval(theta, r)
}

pub fn grad_params(spec: &KernelSpec, theta: &ParamVector, r: f64) -> Result<[f64; N_PARAMS]> {
    spec.grad_params(theta, r)
}

pub fn spectral_density(spec: &KernelSpec, theta: &ParamVector, omega_norm: f64, d: usize) -> Result<f64> {
    spec.spectral_density(theta, omega_norm, d)
}

/// Microergodic combination `σ² α^{2ν}` of the Matérn model.
pub fn microergodic(theta: &ParamVector, nu: f64) -> f64 {
    theta.sigma2 * theta.alpha.powf(2.0 * nu)
}

//! Special functions for the Matérn family: the modified Bessel function of
//! the second kind `K_ν` and `ln Γ`.
//!
//! `K_ν` uses the closed form for half-integer orders. Other orders go through
//! Temme's series (`x <= BESSEL_SERIES_CROSSOVER`) or Steed's continued
//! fraction (`x > BESSEL_SERIES_CROSSOVER`) for a reduced order
//! `|μ| <= 1/2`, followed by forward recurrence up to `ν`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Argument at which `K_ν` switches from the series to the continued fraction.
pub const BESSEL_SERIES_CROSSOVER: f64 = 2.0;

/// Largest half-integer order `m + 1/2` handled by the finite closed-form sum.
const HALF_INTEGER_MAX_TERMS: usize = 40;

const SERIES_EPS: f64 = 1e-16;
const MAX_ITER: usize = 20_000;

/// Target accuracy of [`bessel_k`] over its validated domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselAccuracy {
    pub rel_tol: f64,
    pub max_nu: f64,
    pub max_x: f64,
}

impl Default for BesselAccuracy {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_nu: 5.0,
            max_x: 100.0,
        }
    }
}

impl BesselAccuracy {
    pub fn new(rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return Err(Error::Domain(format!("rel_tol must be positive, got {rel_tol}")));
        }
        Ok(Self {
            rel_tol,
            ..Self::default()
        })
    }

    /// Whether `(nu, x)` lies in the region where `rel_tol` is guaranteed.
    pub fn covers(&self, nu: f64, x: f64) -> bool {
        nu > 0.0 && nu <= self.max_nu && x > 0.0 && x <= self.max_x
    }
}

/// Modified Bessel function of the second kind, `K_ν(x)`.
pub fn bessel_k(nu: f64, x: f64) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::Domain(format!("bessel_k requires nu > 0, got {nu}")));
    }
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain(format!("bessel_k requires x > 0, got {x}")));
    }
    Ok(bessel_k_unchecked(nu, x))
}

/// `K_ν(x)` for `ν >= 0`, `x > 0`, without argument validation.
///
/// `ν = 0` is accepted here because the Matérn gradient needs `K_{ν-1}` and
/// `K_{-μ} = K_μ`.
pub(crate) fn bessel_k_unchecked(nu: f64, x: f64) -> f64 {
    let nu = nu.abs();
    if let Some(m) = half_integer_index(nu) {
        return bessel_k_half_integer(m, x);
    }
    let (k_nu, _) = bessel_k_pair(nu, x);
    k_nu
}

/// Returns `m` when `nu == m + 1/2` exactly and the closed form applies.
fn half_integer_index(nu: f64) -> Option<usize> {
    let shifted = nu - 0.5;
    if shifted >= 0.0 && shifted.fract() == 0.0 && (shifted as usize) <= HALF_INTEGER_MAX_TERMS {
        Some(shifted as usize)
    } else {
        None
    }
}

/// `K_{m+1/2}(x) = sqrt(π/(2x)) e^{-x} Σ_{k=0}^{m} (m+k)! / (k! (m-k)!) (2x)^{-k}`.
fn bessel_k_half_integer(m: usize, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 0..m {
        // ratio of consecutive coefficients: (m+k+1)(m-k) / ((k+1) 2x)
        term *= ((m + k + 1) * (m - k)) as f64 / ((k + 1) as f64 * 2.0 * x);
        sum += term;
    }
    (PI / (2.0 * x)).sqrt() * (-x).exp() * sum
}

/// Returns `(K_ν(x), K_{ν+1}(x))` for `ν >= 0`.
fn bessel_k_pair(nu: f64, x: f64) -> (f64, f64) {
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut k_mu, mut k_mu1) = if x <= BESSEL_SERIES_CROSSOVER {
        temme_series(mu, x)
    } else {
        steed_continued_fraction(mu, x)
    };
    let two_over_x = 2.0 / x;
    for i in 1..=(nl as usize) {
        let next = (mu + i as f64) * two_over_x * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    (k_mu, k_mu1)
}

/// Temme's series for `K_μ`, `K_{μ+1}` with `|μ| <= 1/2`, small `x`.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let half_x = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < f64::EPSILON { 1.0 } else { pimu / pimu.sin() };
    let d = -half_x.ln();
    let e = mu * d;
    let fact2 = if e.abs() < f64::EPSILON { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gam_plus, gam_minus) = temme_gammas(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gam_plus;
    let mut q = 0.5 / (e * gam_minus);
    let mut c = 1.0;
    let dd = half_x * half_x;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        let del1 = c * (p - fi * ff);
        sum1 += del1;
        if del.abs() < sum.abs() * SERIES_EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// Steed's continued fraction (CF2) for `K_μ`, `K_{μ+1}` with `|μ| <= 1/2`.
fn steed_continued_fraction(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < SERIES_EPS {
            break;
        }
    }
    let h = a1 * h;
    let k_mu = (PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

/// Coefficients of `1/Γ(z) = Σ_{k>=1} c_k z^k` (Abramowitz & Stegun 6.1.34).
const RECIP_GAMMA_COEFFS: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Returns `(Γ1, Γ2, 1/Γ(1+μ), 1/Γ(1-μ))` for `|μ| <= 1/2`, where
/// `Γ1 = (1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ)` and `Γ2 = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2`.
///
/// Since `1/Γ(1+μ) = Σ c_k μ^{k-1}`, the odd and even parts of the series
/// give both combinations without cancellation at small `μ`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mut even = 0.0; // Σ over k even of c_k μ^{k-2}
    let mut odd = 0.0; // Σ over k odd of c_k μ^{k-1}
    let mu2 = mu * mu;
    for (idx, &c) in RECIP_GAMMA_COEFFS.iter().enumerate().rev() {
        let k = idx + 1;
        if k % 2 == 0 {
            even = even * mu2 + c;
        } else {
            odd = odd * mu2 + c;
        }
    }
    let gam1 = -even;
    let gam2 = odd;
    let gam_plus = odd + mu * even;
    let gam_minus = odd - mu * even;
    (gam1, gam2, gam_plus, gam_minus)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural logarithm of `Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if x < 0.5 {
        // reflection: Γ(x)Γ(1-x) = π / sin(πx)
        return (PI / (PI * x).sin()).ln() - log_gamma_unchecked(1.0 - x);
    }
    if x < 1.5 {
        // Γ(x) = Γ(x+1)/x keeps the Lanczos sum away from its cancellation near 1
        return lanczos_log_gamma(x + 1.0) - x.ln();
    }
    lanczos_log_gamma(x)
}

fn lanczos_log_gamma(x: f64) -> f64 {
    let z = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `K_ν(x) = ∫_0^∞ exp(-x cosh t) cosh(νt) dt`, trapezoid rule. The
    /// integrand decays doubly exponentially so the rule converges fast.
    fn bessel_k_quadrature(nu: f64, x: f64) -> f64 {
        let h: f64 = 1e-3;
        let mut sum = 0.5 * (-x).exp();
        let mut t = h;
        loop {
            let v = (-x * t.cosh()).exp() * (nu * t).cosh();
            sum += v;
            if v < 1e-300 || (v < sum * 1e-18 && t > 1.0) {
                break;
            }
            t += h;
        }
        sum * h
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn half_integer_examples() {
        let v = bessel_k(0.5, 1.0).unwrap();
        assert!(rel(v, (PI / 2.0).sqrt() * (-1.0f64).exp()) < 1e-14);
        assert!((v - 0.461_068_505_5).abs() < 1e-8);
        let v = bessel_k(1.5, 2.0).unwrap();
        let expected = (PI / 4.0).sqrt() * (-2.0f64).exp() * 1.5;
        assert!(rel(v, expected) < 1e-14);
    }

    #[test]
    fn small_argument_k1_behaves_like_reciprocal() {
        let v = bessel_k(1.0, 1e-8).unwrap();
        assert!(v > 1e7);
        assert!(rel(v, 1e8) < 1e-6);
    }

    #[test]
    fn non_half_integer_orders_match_quadrature() {
        for &nu in &[0.1, 0.3, 0.75, 1.0, 1.25, 2.0, 2.7, 3.3, 4.9] {
            for &x in &[0.05, 0.5, 1.0, 1.99, 2.0, 2.01, 3.5, 10.0, 40.0] {
                let got = bessel_k(nu, x).unwrap();
                let want = bessel_k_quadrature(nu, x);
                assert!(rel(got, want) < 1e-10, "nu={nu} x={x} got={got} want={want}");
            }
        }
    }

    #[test]
    fn general_path_agrees_with_closed_form_at_half_integers() {
        for &nu in &[0.5, 1.5, 2.5, 3.5] {
            for &x in &[0.01, 0.7, 1.9, 2.5, 8.0, 60.0] {
                let (general, _) = bessel_k_pair(nu, x);
                let closed = bessel_k_half_integer((nu - 0.5) as usize, x);
                assert!(rel(general, closed) < 1e-12, "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn order_zero_is_available_internally() {
        // K_0(1) = 0.42102443824070834
        assert!(rel(bessel_k_unchecked(0.0, 1.0), 0.421_024_438_240_708_34) < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(bessel_k(0.0, 1.0).is_err());
        assert!(bessel_k(-1.0, 1.0).is_err());
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(f64::NAN, 1.0).is_err());
        assert!(bessel_k(1.0, f64::INFINITY).is_err());
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-2.5).is_err());
        assert!(BesselAccuracy::new(0.0).is_err());
    }

    #[test]
    fn log_gamma_examples() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert!((log_gamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-12);
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
        assert!(rel(log_gamma(100.0).unwrap(), 359.134_205_369_575_4) < 1e-12);
    }

    #[test]
    fn default_accuracy_domain() {
        let acc = BesselAccuracy::default();
        assert!(acc.covers(2.5, 100.0));
        assert!(!acc.covers(5.5, 1.0));
    }
}

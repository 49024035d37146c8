//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always shown.
//! Set `GPMLE_ACCEPTANCE=1,5` to run a subset.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gpmle::config::parse_config;
use gpmle::covariance::{KernelSpec, ParamVector};
use gpmle::gausslin::{build_cov, chol, qf_cov, qf_mean, eig_extremes, JitterPolicy};
use gpmle::harness::{run_eigen_trends, run_fixed_microergodic, run_increasing_normality, run_varln_decay, ExperimentConfig, RegimeKind};
use gpmle::mle::{criterion_ln, expected_score, fisher_matrix, grad_ln, ident_global, ident_local, score_cov, var_ln};
use gpmle::simulate::{gen_fixed, gen_increasing, sample_gp, DomainBox, FixedMode, NormalStream, SeedSpec, STREAM_SAMPLE};
use gpmle::specfun::bessel_k;
use gpmle::Result;
use nalgebra::DMatrix;

struct Outcome {
    passed: bool,
    detail: String,
}

/// Collects named sub-checks into one criterion outcome.
#[derive(Default)]
struct Checks {
    parts: Vec<(bool, String)>,
}

impl Checks {
    fn add(&mut self, ok: bool, text: String) {
        self.parts.push((ok, text));
    }

    fn outcome(self) -> Outcome {
        let passed = self.parts.iter().all(|(ok, _)| *ok);
        let detail = self
            .parts
            .iter()
            .map(|(ok, t)| if *ok { t.clone() } else { format!("FAILED {t}") })
            .collect::<Vec<_>>()
            .join("; ");
        Outcome { passed, detail }
    }
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn load(name: &str) -> Result<ExperimentConfig> {
    parse_config(&config_path(name), &[])
}

fn theta(s: f64, a: f64) -> ParamVector {
    ParamVector::new(s, a).unwrap()
}

fn families() -> Vec<KernelSpec> {
    vec![
        KernelSpec::exponential(),
        KernelSpec::squared_exponential(),
        KernelSpec::matern(0.5).unwrap(),
        KernelSpec::matern(1.2).unwrap(),
        KernelSpec::matern(1.5).unwrap(),
        KernelSpec::matern(2.5).unwrap(),
    ]
}

/// `∫_R f(ω) dω` for an even density, via `ω = s tan t` and composite Simpson.
fn integrate_even(f: impl Fn(f64) -> f64, s: f64) -> f64 {
    let m = 200_000;
    let h = std::f64::consts::FRAC_PI_2 / m as f64;
    let g = |t: f64| {
        let c = t.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let v = f(s * t.tan()) * s / (c * c);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    let mut sum = g(0.0) + g(std::f64::consts::FRAC_PI_2);
    for k in 1..m {
        sum += g(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    2.0 * sum * h / 3.0
}

fn criterion_1() -> Result<Outcome> {
    let mut c = Checks::default();
    let t0 = theta(1.0, 0.5);

    // The identity is evaluated in cancellation form, so roundoff grows like
    // cond(R)·eps. The 1e-9 bound applies to designs with cond(R) <= 1e6;
    // worse conditioned cases are reported but not gated.
    let mut worst: f64 = 0.0;
    let (mut gated, mut ill) = (0, Vec::new());
    for spec in families() {
        for design in [
            gen_increasing(10, 1, 1.0, 0.0, SeedSpec::new(0, 0))?,
            gen_increasing(30, 2, 1.0, 0.2, SeedSpec::new(1, 0))?,
            gen_fixed(25, 1, &DomainBox::unit(1), FixedMode::Uniform, SeedSpec::new(2, 0))?,
        ] {
            let (lo, hi) = eig_extremes(&build_cov(&spec, &t0, &design)?);
            let s = expected_score(&spec, &t0, &design)?;
            let err = s[0].abs().max(s[1].abs());
            if lo > 0.0 && hi / lo <= 1e6 {
                gated += 1;
                worst = worst.max(err);
            } else {
                ill.push(format!("{} n={} cond {:.0e} err {err:.0e}", spec.family(), design.len(), hi / lo));
            }
        }
    }
    c.add(
        worst <= 1e-9,
        format!("expected_score max {worst:.2e} <= 1e-9 over {gated} cases (ill-conditioned, not gated: [{}])", ill.join(", ")),
    );

    let mut worst: f64 = 0.0;
    for spec in families() {
        let design = gen_increasing(40, 1, 1.0, 0.2, SeedSpec::new(3, 0))?;
        let n = design.len() as f64;
        let f = fisher_matrix(&spec, &t0, &design)?;
        let sc = score_cov(&spec, &t0, &design)?;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((sc[i][j] - 4.0 / n * f.sigma[i][j]).abs());
            }
        }
    }
    c.add(worst <= 1e-12, format!("score_cov vs 4/n Fisher {worst:.2e} <= 1e-12"));

    let mut worst: f64 = 0.0;
    for n in [10, 50, 200] {
        let design = gen_increasing(n, 1, 1.0, 0.2, SeedSpec::new(4, 0))?;
        let v = var_ln(&KernelSpec::matern(1.5)?, &t0, &t0, &design)?;
        worst = worst.max((v - 2.0 / n as f64).abs() / (2.0 / n as f64));
    }
    c.add(worst <= 1e-13, format!("var_ln(theta0) vs 2/n rel {worst:.2e}"));

    let half = KernelSpec::matern(0.5)?;
    let exp = KernelSpec::exponential();
    let mut worst: f64 = 0.0;
    for t in [theta(1.0, 0.5), theta(2.5, 3.0), theta(0.3, 0.1)] {
        for k in 0..=400 {
            let r = 0.025 * k as f64;
            worst = worst.max((half.eval(&t, r)? - exp.eval(&t, r)?).abs() / t.sigma2);
        }
    }
    c.add(worst <= 1e-12, format!("matern 1/2 vs exponential {worst:.2e} <= 1e-12"));

    let mut worst: f64 = 0.0;
    for k in 1..=200 {
        let x = 0.05 * k as f64;
        let k_half = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
        for (nu, closed) in [
            (0.5, k_half),
            (1.5, k_half * (1.0 + 1.0 / x)),
            (2.5, k_half * (1.0 + 3.0 / x + 3.0 / (x * x))),
            (3.5, k_half * (1.0 + 6.0 / x + 15.0 / (x * x) + 15.0 / (x * x * x))),
        ] {
            worst = worst.max(((bessel_k(nu, x)? - closed) / closed).abs());
        }
    }
    c.add(worst <= 1e-10, format!("Bessel half-integer rel {worst:.2e} <= 1e-10"));

    let mut worst: f64 = 0.0;
    for spec in families() {
        for t in [theta(1.0, 0.5), theta(2.0, 3.0)] {
            let integral = integrate_even(|w| spec.spectral_density(&t, w, 1).unwrap(), t.alpha);
            worst = worst.max((integral - t.sigma2).abs() / t.sigma2);
        }
    }
    c.add(worst <= 1e-6, format!("spectral density integral rel {worst:.2e} <= 1e-6"));

    let mut worst: f64 = 0.0;
    for spec in families() {
        let t = theta(1.3, 0.9);
        for r in [0.05, 0.4, 1.0, 2.5] {
            let g = spec.grad_params(&t, r)?;
            for m in 0..2 {
                let mut up = t.as_array();
                let mut dn = t.as_array();
                let h = 1e-6 * up[m];
                up[m] += h;
                dn[m] -= h;
                let fd = (spec.eval(&ParamVector::from_array(up)?, r)? - spec.eval(&ParamVector::from_array(dn)?, r)?) / (2.0 * h);
                if g[m].abs() > 1e-12 {
                    worst = worst.max((g[m] - fd).abs() / g[m].abs());
                }
            }
        }
        let design = gen_increasing(20, 1, 1.0, 0.2, SeedSpec::new(6, 0))?;
        let y = sample_gp(&chol(&build_cov(&spec, &t, &design)?, JitterPolicy::Jitter)?, SeedSpec::new(6, 1));
        let probe = theta(1.1, 1.2);
        let g = grad_ln(&spec, &probe, &design, &y)?;
        for m in 0..2 {
            let mut up = probe.as_array();
            let mut dn = probe.as_array();
            let h = 1e-6 * up[m];
            up[m] += h;
            dn[m] -= h;
            let fd = (criterion_ln(&spec, &ParamVector::from_array(up)?, &design, &y)?
                - criterion_ln(&spec, &ParamVector::from_array(dn)?, &design, &y)?)
                / (2.0 * h);
            worst = worst.max((g[m] - fd).abs() / g[m].abs().max(1e-3));
        }
    }
    c.add(worst <= 1e-5, format!("gradients vs finite differences rel {worst:.2e} <= 1e-5"));
    Ok(c.outcome())
}

fn criterion_2() -> Result<Outcome> {
    let n = 5;
    let design = gen_increasing(n, 1, 1.0, 0.2, SeedSpec::new(8, 0))?;
    let sigma = build_cov(&KernelSpec::matern(1.5)?, &theta(1.2, 0.8), &design)?;
    let l = chol(&sigma, JitterPolicy::Strict)?.lower();
    let a = DMatrix::from_fn(n, n, |i, j| ((i + 2 * j) as f64).sin());
    let b = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + i as f64 } else { 0.3 / (1.0 + (i + j) as f64) });
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    let (a_s, b_s) = (sym(&a), sym(&b));
    let exact_mean = qf_mean(&a, sigma.matrix())?;
    let exact_cov = qf_cov(&a, &b, sigma.matrix())?;

    let draws = 1_000_000;
    let mut normals = NormalStream::new(SeedSpec::new(9, 0).rng(STREAM_SAMPLE));
    let mut qa = Vec::with_capacity(draws);
    let mut qb = Vec::with_capacity(draws);
    for _ in 0..draws {
        let z = nalgebra::DVector::from_vec(normals.fill(n));
        let y = &l * z;
        qa.push((y.transpose() * &a_s * &y)[(0, 0)]);
        qb.push((y.transpose() * &b_s * &y)[(0, 0)]);
    }
    let nd = draws as f64;
    let mean_a = qa.iter().sum::<f64>() / nd;
    let mean_b = qb.iter().sum::<f64>() / nd;
    let var_a = qa.iter().map(|v| (v - mean_a).powi(2)).sum::<f64>() / (nd - 1.0);
    let products: Vec<f64> = qa.iter().zip(&qb).map(|(x, y)| (x - mean_a) * (y - mean_b)).collect();
    let mc_cov = products.iter().sum::<f64>() / (nd - 1.0);
    let se_mean = (var_a / nd).sqrt();
    let se_cov = (products.iter().map(|p| (p - mc_cov).powi(2)).sum::<f64>() / (nd - 1.0) / nd).sqrt();

    let mut c = Checks::default();
    let zm = (mean_a - exact_mean).abs() / se_mean;
    let zc = (mc_cov - exact_cov).abs() / se_cov;
    c.add(zm <= 3.0, format!("qf_mean {exact_mean:.5} vs MC {mean_a:.5} ({zm:.2} SE)"));
    c.add(zc <= 3.0, format!("qf_cov {exact_cov:.5} vs MC {mc_cov:.5} ({zc:.2} SE)"));
    Ok(c.outcome())
}

fn criterion_3() -> Result<Outcome> {
    let config = load("normality.json")?;
    let mut c = Checks::default();
    let pinned = config.regime == RegimeKind::IncreasingDomain
        && config.kernel == KernelSpec::exponential()
        && config.theta0 == theta(1.0, 0.5)
        && config.d == 1
        && config.delta == 1.0
        && config.perturb == 0.2
        && config.replicates == 500
        && config.n_list.first() == Some(&100)
        && config.n_list.last() == Some(&400);
    c.add(pinned, "config matches d=1, exponential, theta0=(1,0.5), delta=1, perturb=0.2, 500 replicates, n 100..400".into());
    let report = run_increasing_normality(&config)?;
    let small = report.summary_for(100).and_then(|s| s.normality.as_ref());
    let large_summary = report.summary_for(400).expect("n = 400 in n_list");
    let large = large_summary.normality.as_ref();
    let (Some(small), Some(large)) = (small, large) else {
        c.add(false, "no successful fits".into());
        return Ok(c.outcome());
    };
    c.add(large_summary.failed == 0, format!("{} failed fits at n=400", large_summary.failed));
    for comp in &large.components {
        let rate = comp.coverage.rate;
        c.add((0.90..=0.98).contains(&rate), format!("coverage {} {rate:.3} in [0.90, 0.98]", comp.parameter));
    }
    for (k, comp) in large.components.iter().enumerate() {
        c.add(comp.ks <= 0.08, format!("KS z{} {:.4} <= 0.08", k + 1, comp.ks));
    }
    c.add(
        large.median_error_norm < small.median_error_norm,
        format!("median |err| n=400 {:.4} < n=100 {:.4}", large.median_error_norm, small.median_error_norm),
    );

    // reported only: share of fits within 3 asymptotic standard deviations
    let inv = large.fisher.inverse().expect("positive definite");
    let t0 = config.theta0.as_array();
    let inside = report
        .records
        .iter()
        .filter(|r| r.n == 400)
        .filter(|r| {
            let est = [r.sigma2_hat.unwrap_or(f64::NAN), r.alpha_hat.unwrap_or(f64::NAN)];
            (0..2).all(|i| (est[i] - t0[i]).abs() <= 3.0 * (inv[i][i] / 400.0).sqrt())
        })
        .count();
    c.add(true, format!("within 3 sd: {:.3}", inside as f64 / config.replicates as f64));
    Ok(c.outcome())
}

fn criterion_4() -> Result<Outcome> {
    let config = load("microergodic.json")?;
    let mut c = Checks::default();
    let pinned = config.regime == RegimeKind::FixedDomain
        && config.kernel.smoothness() == Some(0.5)
        && config.theta0 == theta(1.0, 1.0)
        && config.alpha1 == 2.0
        && config.d == 1
        && config.domain_box() == DomainBox::unit(1)
        && config.design_mode == FixedMode::Uniform
        && config.n_list == vec![50, 100, 200, 400]
        && config.replicates == 1000;
    c.add(pinned, "config matches nu=1/2, theta0=(1,1), alpha1=2, uniform on [0,1], n {50..400}, 1000 replicates".into());
    let report = run_fixed_microergodic(&config)?;
    let mut rmse = Vec::new();
    for s in &report.summaries {
        match &s.microergodic {
            Some(m) => rmse.push(m.fixed_alpha.rmse),
            None => rmse.push(f64::NAN),
        }
        c.add(s.failed == 0, format!("{} failed at n={}", s.failed, s.n));
    }
    c.add(
        rmse.windows(2).all(|w| w[1] < w[0]),
        format!("RMSE strictly decreasing {:?}", rmse.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()),
    );
    let Some(m) = report.summary_for(400).and_then(|s| s.microergodic.as_ref()) else {
        c.add(false, "no successful replicates at n=400".into());
        return Ok(c.outcome());
    };
    let v = m.fixed_alpha.scaled.variance;
    c.add(
        (v - m.limit_variance).abs() <= 0.25 * m.limit_variance,
        format!("var sqrt(n)(est-1) {v:.3} within 25% of {}", m.limit_variance),
    );
    c.add(
        m.mean_difference.abs() <= 2.0 * m.pooled_std_error,
        format!("|mean A - mean B| {:.5} <= 2 x {:.5}", m.mean_difference.abs(), m.pooled_std_error),
    );
    Ok(c.outcome())
}

fn criterion_5() -> Result<Outcome> {
    let config = load("eigens.json")?;
    let mut c = Checks::default();
    c.add(
        config.kernel.smoothness() == Some(0.5) && config.delta == 1.0 && config.domain_box() == DomainBox::unit(1),
        "config matches exponential, delta=1, [0,1]".into(),
    );
    let report = run_eigen_trends(&config)?;
    let get = |regime: RegimeKind, n: usize| {
        report
            .eigen_trends
            .iter()
            .find(|p| p.regime == regime && p.n == n)
            .cloned()
            .expect("n in n_list")
    };
    let (i100, i800) = (get(RegimeKind::IncreasingDomain, 100), get(RegimeKind::IncreasingDomain, 800));
    c.add(
        i800.lambda_min >= 0.5 * i100.lambda_min,
        format!("increasing lambda_min(800) {:.4} >= 0.5 x {:.4}", i800.lambda_min, i100.lambda_min),
    );
    let (f50, f400) = (get(RegimeKind::FixedDomain, 50), get(RegimeKind::FixedDomain, 400));
    c.add(
        f400.lambda_min <= f50.lambda_min / 10.0,
        format!("fixed lambda_min(400) {:.3e} <= {:.3e}/10", f400.lambda_min, f50.lambda_min),
    );
    let fixed_max: Vec<f64> = report
        .eigen_trends
        .iter()
        .filter(|p| p.regime == RegimeKind::FixedDomain)
        .map(|p| p.lambda_max)
        .collect();
    c.add(
        fixed_max.windows(2).all(|w| w[1] > w[0]),
        format!("fixed lambda_max increasing {:?}", fixed_max.iter().map(|v| format!("{v:.1}")).collect::<Vec<_>>()),
    );
    Ok(c.outcome())
}

fn criterion_6() -> Result<Outcome> {
    let config = load("varln.json")?;
    let mut c = Checks::default();
    c.add(config.theta_alt() != config.theta0, "theta differs from theta0".into());
    let report = run_varln_decay(&config)?;
    for n in [100, 200, 400] {
        let v = report.var_trends.iter().find(|p| p.n == n).expect("n in n_list").var_ln;
        let v2 = report.var_trends.iter().find(|p| p.n == 2 * n).expect("2n in n_list").var_ln;
        let ratio = v / v2;
        c.add((1.5..=2.5).contains(&ratio), format!("var({n})/var({}) = {ratio:.4}", 2 * n));
    }
    Ok(c.outcome())
}

fn criterion_7() -> Result<Outcome> {
    let config = load("varln.json")?;
    let spec = config.kernel;
    let t0 = config.theta0;
    let alt = config.theta_alt();
    let mut c = Checks::default();
    let mut globals = Vec::new();
    for n in [100, 200, 400] {
        let design = config.design(RegimeKind::IncreasingDomain, n)?;
        let same = ident_global(&spec, &t0, &t0, &design)?;
        c.add(same == 0.0, format!("ident_global(theta0, theta0) = {same} at n={n}"));
        globals.push(ident_global(&spec, &alt, &t0, &design)?);
    }
    let reference = *globals.last().unwrap();
    c.add(
        globals.iter().all(|&g| g > 0.0 && (g / reference - 1.0).abs() <= 0.2),
        format!("ident_global {:?} positive and within 20%", globals.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>()),
    );
    let design = config.design(RegimeKind::IncreasingDomain, 400)?;
    let mut min_local = f64::INFINITY;
    for k in 0..64 {
        let phi = std::f64::consts::TAU * k as f64 / 64.0;
        min_local = min_local.min(ident_local(&spec, &t0, [phi.cos(), phi.sin()], &design)?);
    }
    c.add(min_local > 0.0, format!("min ident_local over 64 directions {min_local:.4} > 0"));
    Ok(c.outcome())
}

fn run_cli(config: &Path, out: &Path, workers: &str, extra: &[&str]) -> bool {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gpmle"));
    cmd.arg("experiment")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .env("GPMLE_WORKERS", workers);
    cmd.status().map(|s| s.success()).unwrap_or(false)
}

fn criterion_8() -> Result<Outcome> {
    let mut c = Checks::default();
    let dir = tempfile::tempdir()?;
    let cases: [(&str, &[&str]); 2] = [
        ("normality.json", &["--set", "replicates=24", "--set", "n_list=[50,100]"]),
        ("microergodic.json", &["--set", "replicates=24", "--set", "n_list=[50,100]"]),
    ];
    for (name, extra) in cases {
        let mut outputs = Vec::new();
        for workers in ["1", "3", "1"] {
            let out = dir.path().join(format!("{name}-{workers}-{}", outputs.len()));
            if !run_cli(&config_path(name), &out, workers, extra) {
                c.add(false, format!("{name} with {workers} workers did not exit 0"));
                return Ok(c.outcome());
            }
            outputs.push(std::fs::read(out.join("records.csv"))?);
        }
        let same = outputs.windows(2).all(|w| w[0] == w[1]);
        c.add(same, format!("{name}: records.csv byte-identical across 3 runs (1, 3, 1 workers; {} bytes)", outputs[0].len()));
    }
    Ok(c.outcome())
}

fn main() {
    let selected: Option<Vec<usize>> = std::env::var("GPMLE_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|v| v.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Result<Outcome>); 8] = [
        (1, "exact identities", criterion_1),
        (2, "quadratic form moments vs Monte Carlo", criterion_2),
        (3, "increasing-domain asymptotic normality", criterion_3),
        (4, "fixed-domain microergodic estimation", criterion_4),
        (5, "eigenvalue dichotomy", criterion_5),
        (6, "variance of the criterion decays", criterion_6),
        (7, "identifiability diagnostics", criterion_7),
        (8, "reproducibility across worker counts", criterion_8),
    ];
    let mut failed = 0;
    for (id, title, f) in criteria {
        if selected.as_ref().is_some_and(|s| !s.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let outcome = f().unwrap_or_else(|e| Outcome {
            passed: false,
            detail: format!("error: {e}"),
        });
        let secs = start.elapsed().as_secs_f64();
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id}: {title} [{secs:.1}s] {}", outcome.detail);
        if !outcome.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

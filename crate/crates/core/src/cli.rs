//! Command-line front end.
//!
//! Exit codes: 0 success, 1 invalid invocation or config, 2 runtime failure.

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::parse_config;
use crate::covariance::{KernelSpec, ParamVector};
use crate::error::{Error, Result};
use crate::gausslin::{build_cov, chol, JitterPolicy};
use crate::harness::{self, ExperimentConfig, ExperimentKind, McReport};
use crate::mle::{criterion_ln, expected_score, fisher_matrix, fit_full, grad_ln, score_cov, var_ln, FitRecord};
use crate::simulate::{gen_increasing, sample_gp, Design, SeedSpec};
use crate::specfun::bessel_k;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "gpmle", version, about = "Gaussian process covariance parameter estimation and asymptotics experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (strict JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory, created if absent.
    #[arg(long, global = true, default_value = "gpmle_out")]
    pub out: PathBuf,

    /// Worker threads for replicate loops; overrides the config value.
    #[arg(long, global = true, env = "GPMLE_WORKERS")]
    pub workers: Option<usize>,

    /// Config override, e.g. `--set replicates=5 --set kernel.nu=1.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    /// Overwrite existing report files.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a design and one simulated field as CSV.
    Simulate {
        /// Sample size; defaults to the largest entry of n_list.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Fit (σ², α) by maximum likelihood to observed data.
    Fit {
        /// Design CSV with header x1[,x2[,x3]].
        #[arg(long)]
        design: PathBuf,
        /// Observations CSV with a single column `y`.
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a Monte Carlo experiment: normality, microergodic, eigen_trends or
    /// varln_decay. Defaults to the config's experiment.
    Experiment { name: Option<String> },
    /// Extreme eigenvalues of the covariance matrix in both regimes.
    Eigens,
    /// Exact-identity checks; exits 0 when all pass.
    Selftest,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Experiment { .. } => "experiment",
            Command::Eigens => "eigens",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Serialize)]
struct InputHash {
    path: String,
    git_blob_sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'static str,
    status: &'static str,
    error: Option<String>,
    config: Option<&'a ExperimentConfig>,
    overrides: &'a [String],
    inputs: Vec<InputHash>,
    outputs: Vec<String>,
    elapsed_seconds: f64,
}

/// SHA-256 of `"blob <len>\0" + content`, as git computes object ids.
pub fn git_blob_sha256(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

enum Failure {
    Invalid(Error),
    Runtime(Error),
}

fn invalid(e: Error) -> Failure {
    Failure::Invalid(e)
}

fn runtime(e: Error) -> Failure {
    Failure::Runtime(e)
}

struct Run<'a> {
    cli: &'a Cli,
    config: Option<ExperimentConfig>,
    inputs: Vec<InputHash>,
    outputs: Vec<String>,
}

impl Run<'_> {
    fn hash_input(&mut self, path: &Path) -> std::result::Result<(), Failure> {
        let bytes = fs::read(path).map_err(|e| invalid(e.into()))?;
        self.inputs.push(InputHash {
            path: path.display().to_string(),
            git_blob_sha256: git_blob_sha256(&bytes),
        });
        Ok(())
    }

    fn load_config(&mut self, required: bool) -> std::result::Result<(), Failure> {
        let Some(path) = self.cli.config.clone() else {
            if required {
                return Err(invalid(Error::config("--config", "this subcommand needs a config file")));
            }
            return Ok(());
        };
        self.hash_input(&path)?;
        let mut config = parse_config(&path, &self.cli.overrides).map_err(invalid)?;
        if let Some(w) = self.cli.workers {
            config.workers = w;
        }
        config.validate().map_err(invalid)?;
        self.config = Some(config);
        Ok(())
    }

    fn config(&self) -> &ExperimentConfig {
        self.config.as_ref().expect("loaded before use")
    }

    fn check_outputs(&self, names: &[&str]) -> std::result::Result<(), Failure> {
        if self.cli.force {
            return Ok(());
        }
        for name in names.iter().chain(std::iter::once(&"manifest.json")) {
            let path = self.cli.out.join(name);
            if path.exists() {
                return Err(invalid(Error::OutputExists(path.display().to_string())));
            }
        }
        Ok(())
    }

    fn create(&mut self, name: &str) -> std::result::Result<BufWriter<fs::File>, Failure> {
        self.outputs.push(name.to_string());
        let file = fs::File::create(self.cli.out.join(name)).map_err(|e| runtime(e.into()))?;
        Ok(BufWriter::new(file))
    }

    fn write_report(&mut self, report: &McReport) -> std::result::Result<(), Failure> {
        if !report.records.is_empty() {
            let w = self.create("records.csv")?;
            report.write_records_csv(w).map_err(runtime)?;
        }
        let w = self.create("summary.json")?;
        report.write_summary_json(w).map_err(runtime)?;
        if !report.eigen_trends.is_empty() || !report.var_trends.is_empty() {
            let w = self.create("trends.csv")?;
            report.write_trends_csv(w).map_err(runtime)?;
        }
        Ok(())
    }

    fn dispatch(&mut self) -> std::result::Result<(), Failure> {
        match &self.cli.command {
            Command::Simulate { n, replicate } => {
                self.load_config(true)?;
                let config = self.config().clone();
                let n = n.unwrap_or(*config.n_list.last().expect("validated nonempty"));
                if n < 1 {
                    return Err(invalid(Error::config("--n", "must be at least 1")));
                }
                self.check_outputs(&["design.csv", "sample.csv"])?;
                fs::create_dir_all(&self.cli.out).map_err(|e| runtime(e.into()))?;
                let design = config.design(config.regime, n).map_err(runtime)?;
                let factor = chol(&build_cov(&config.kernel, &config.theta0, &design).map_err(runtime)?, JitterPolicy::Jitter)
                    .map_err(runtime)?;
                let y = sample_gp(&factor, config.sample_seed(n, *replicate));
                let w = self.create("design.csv")?;
                design.write_csv(w).map_err(runtime)?;
                let w = self.create("sample.csv")?;
                write_observations(w, &y).map_err(runtime)?;
            }
            Command::Fit { design, data } => {
                self.load_config(true)?;
                self.hash_input(design)?;
                self.hash_input(data)?;
                let d = Design::load_csv(design).map_err(invalid)?;
                let y = read_observations(data).map_err(invalid)?;
                if y.len() != d.len() {
                    return Err(invalid(Error::DimensionMismatch {
                        expected: d.len(),
                        got: y.len(),
                    }));
                }
                self.check_outputs(&["fit.json"])?;
                fs::create_dir_all(&self.cli.out).map_err(|e| runtime(e.into()))?;
                let config = self.config();
                let fit = fit_full(&config.kernel, &d, &y, &config.bounds, config.multistart).map_err(runtime)?;
                let w = self.create("fit.json")?;
                serde_json::to_writer_pretty(w, &FitRecord::from(&fit)).map_err(|e| runtime(e.into()))?;
            }
            Command::Experiment { name } => {
                self.load_config(true)?;
                if let Some(name) = name {
                    let kind = ExperimentKind::parse(name).map_err(invalid)?;
                    let config = self.config.as_mut().expect("loaded");
                    config.experiment = Some(kind);
                    config.validate().map_err(invalid)?;
                }
                self.check_outputs(&["records.csv", "summary.json", "trends.csv"])?;
                fs::create_dir_all(&self.cli.out).map_err(|e| runtime(e.into()))?;
                let report = harness::run(self.config()).map_err(runtime)?;
                self.write_report(&report)?;
            }
            Command::Eigens => {
                self.load_config(true)?;
                self.check_outputs(&["summary.json", "trends.csv"])?;
                fs::create_dir_all(&self.cli.out).map_err(|e| runtime(e.into()))?;
                let report = harness::run_eigen_trends(self.config()).map_err(runtime)?;
                self.write_report(&report)?;
            }
            Command::Selftest => {
                self.load_config(false)?;
                self.check_outputs(&["selftest.json"])?;
                fs::create_dir_all(&self.cli.out).map_err(|e| runtime(e.into()))?;
                let checks = selftest().map_err(runtime)?;
                for c in &checks {
                    println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
                let w = self.create("selftest.json")?;
                serde_json::to_writer_pretty(w, &checks).map_err(|e| runtime(e.into()))?;
                if let Some(bad) = checks.iter().find(|c| !c.passed) {
                    return Err(runtime(Error::Domain(format!("selftest check `{}` failed", bad.name))));
                }
            }
        }
        Ok(())
    }

    fn write_manifest(&mut self, status: &'static str, error: Option<String>, elapsed: f64) -> Result<()> {
        if !self.cli.out.is_dir() {
            return Ok(());
        }
        let manifest = Manifest {
            tool: "gpmle",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.cli.command.name(),
            status,
            error,
            config: self.config.as_ref(),
            overrides: &self.cli.overrides,
            inputs: std::mem::take(&mut self.inputs),
            outputs: self.outputs.clone(),
            elapsed_seconds: elapsed,
        };
        let file = fs::File::create(self.cli.out.join("manifest.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
        Ok(())
    }
}

fn write_observations<W: std::io::Write>(writer: W, y: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["y"])?;
    for v in y {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_observations(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.len() != 1 || &headers[0] != "y" {
        return Err(Error::config("--data", "expected a single column with header `y`"));
    }
    let mut y = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::config("--data", format!("row {}: `{}` is not a number", row + 1, &rec[0])))?;
        y.push(v);
    }
    if y.is_empty() {
        return Err(Error::EmptyInput("observations"));
    }
    Ok(y)
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let start = Instant::now();
    let mut state = Run {
        cli: &cli,
        config: None,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    let outcome = state.dispatch();
    let elapsed = start.elapsed().as_secs_f64();
    let (code, status, message) = match outcome {
        Ok(()) => (EXIT_OK, "ok", None),
        Err(Failure::Invalid(e)) => (EXIT_INVALID, "invalid", Some(e.to_string())),
        Err(Failure::Runtime(e)) => (EXIT_RUNTIME, "runtime_error", Some(e.to_string())),
    };
    if let Some(m) = &message {
        eprintln!("error: {m}");
    }
    // an invalid invocation must not clobber an earlier run's manifest
    let refused = code == EXIT_INVALID && !cli.force && cli.out.join("manifest.json").exists();
    if !refused {
        if let Err(e) = state.write_manifest(status, message, elapsed) {
            eprintln!("error: could not write manifest: {e}");
            return EXIT_RUNTIME;
        }
    }
    code
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, value: f64, tol: f64) -> Check {
    Check {
        name: name.to_string(),
        passed: value <= tol,
        detail: format!("{value:.3e} <= {tol:.0e}"),
    }
}

/// Deterministic identities that must hold to rounding.
pub fn selftest() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let grid = gen_increasing(10, 1, 1.0, 0.0, SeedSpec::new(0, 0))?;
    let theta = ParamVector::new(1.0, 0.5)?;
    let families = [KernelSpec::exponential(), KernelSpec::matern(1.5)?, KernelSpec::squared_exponential()];

    let mut worst: f64 = 0.0;
    for spec in &families {
        let s = expected_score(spec, &theta, &grid)?;
        worst = worst.max(s[0].abs()).max(s[1].abs());
    }
    out.push(check("expected_score_zero", worst, 1e-9));

    let design = gen_increasing(30, 1, 1.0, 0.2, SeedSpec::new(1, 0))?;
    let mut worst: f64 = 0.0;
    for spec in &families {
        let f = fisher_matrix(spec, &theta, &design)?;
        let sc = score_cov(spec, &theta, &design)?;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((sc[i][j] - 4.0 / 30.0 * f.sigma[i][j]).abs());
            }
        }
    }
    out.push(check("score_cov_is_4_over_n_fisher", worst, 1e-12));

    let v = var_ln(&families[0], &theta, &theta, &design)?;
    out.push(check("var_ln_at_truth_is_2_over_n", (v - 2.0 / 30.0).abs(), 1e-14));

    let half = KernelSpec::matern(0.5)?;
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let r = 0.05 * k as f64;
        worst = worst.max((half.eval(&theta, r)? - families[0].eval(&theta, r)?).abs());
    }
    out.push(check("matern_half_is_exponential", worst, 1e-12));

    let mut worst: f64 = 0.0;
    for k in 1..100 {
        let x = 0.1 * k as f64;
        let k_half = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
        for (nu, closed) in [(0.5, k_half), (1.5, k_half * (1.0 + 1.0 / x)), (2.5, k_half * (1.0 + 3.0 / x + 3.0 / (x * x)))] {
            worst = worst.max(((bessel_k(nu, x)? - closed) / closed).abs());
        }
    }
    out.push(check("bessel_half_integer_closed_forms", worst, 1e-10));

    let factor = chol(&build_cov(&families[1], &theta, &design)?, JitterPolicy::Jitter)?;
    let y = sample_gp(&factor, SeedSpec::new(5, 0));
    let probe = ParamVector::new(1.3, 0.7)?;
    let g = grad_ln(&families[1], &probe, &design, &y)?;
    let mut worst: f64 = 0.0;
    for m in 0..2 {
        let mut up = probe.as_array();
        let mut dn = probe.as_array();
        let h = 1e-6 * up[m];
        up[m] += h;
        dn[m] -= h;
        let fd = (criterion_ln(&families[1], &ParamVector::from_array(up)?, &design, &y)?
            - criterion_ln(&families[1], &ParamVector::from_array(dn)?, &design, &y)?)
            / (2.0 * h);
        worst = worst.max((g[m] - fd).abs() / g[m].abs().max(1e-3));
    }
    out.push(check("gradient_matches_finite_differences", worst, 1e-5));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selftest_passes() {
        let checks = selftest().unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn blob_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            git_blob_sha256(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["gpmle", "frobnicate"]), EXIT_INVALID);
        assert_eq!(run(["gpmle"]), EXIT_INVALID);
        assert_eq!(run(["gpmle", "--help"]), EXIT_OK);
    }
}

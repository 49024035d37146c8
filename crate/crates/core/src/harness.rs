//! Replicated Monte Carlo experiments and their reports.
//!
//! Seeding: the design for sample size `n` is generated from
//! `SeedSpec::new(master_seed, 0)`, so it is shared by every replicate at that
//! size. Replicate `r` at size `n` samples from
//! `SeedSpec::new(splitmix64(master_seed ^ splitmix64(n)), r)`. Replicates run on
//! a rayon pool and are collected in `(n, replicate)` order, so reports do not
//! depend on the worker count.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{microergodic, Family, KernelSpec, ParamBounds, ParamVector, N_PARAMS};
use crate::error::{Error, Result};
use crate::gausslin::{build_cov, chol, eig_extremes, gershgorin_upper, CholFactor, JitterPolicy};
use crate::mle::{fisher_matrix, fit_full, ident_global, ident_local, var_ln, FisherMatrix};
use crate::simulate::{gen_fixed, gen_increasing, sample_gp, splitmix64, Design, DomainBox, FixedMode, SeedSpec};
use crate::stats::{coverage, ks_normal, median, moments, Coverage, Moments};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;
/// Directions on the unit circle scanned by the local identifiability check.
pub const IDENT_DIRECTIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    IncreasingDomain,
    FixedDomain,
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeKind::IncreasingDomain => "increasing_domain",
            RegimeKind::FixedDomain => "fixed_domain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Asymptotic normality of the full MLE under increasing domain.
    Normality,
    /// Microergodic parameter estimation under fixed domain.
    Microergodic,
    /// Extreme eigenvalues of `R_θ₀` in both regimes.
    EigenTrends,
    /// Exact `var(L_n)` and identifiability functionals across `n`.
    VarlnDecay,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Normality => "normality",
            ExperimentKind::Microergodic => "microergodic",
            ExperimentKind::EigenTrends => "eigen_trends",
            ExperimentKind::VarlnDecay => "varln_decay",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "normality" => Ok(ExperimentKind::Normality),
            "microergodic" => Ok(ExperimentKind::Microergodic),
            "eigen_trends" | "eigens" => Ok(ExperimentKind::EigenTrends),
            "varln_decay" => Ok(ExperimentKind::VarlnDecay),
            other => Err(Error::config(
                "experiment",
                format!("unknown experiment `{other}`, expected normality, microergodic, eigen_trends or varln_decay"),
            )),
        }
    }
}

fn default_alpha1() -> f64 {
    2.0
}
fn default_dim() -> usize {
    1
}
fn default_delta() -> f64 {
    1.0
}
fn default_perturb() -> f64 {
    0.2
}
fn default_design_mode() -> FixedMode {
    FixedMode::Uniform
}
fn default_multistart() -> usize {
    2
}
fn default_workers() -> usize {
    1
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub regime: RegimeKind,
    pub kernel: KernelSpec,
    pub theta0: ParamVector,
    pub n_list: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    /// Defaults to `normality` for increasing domain and `microergodic` for
    /// fixed domain.
    #[serde(default)]
    pub experiment: Option<ExperimentKind>,
    #[serde(default)]
    pub bounds: ParamBounds,
    /// Fixed scale used by the profile estimator `σ̂²(α₁) α₁^{2ν}`.
    #[serde(default = "default_alpha1")]
    pub alpha1: f64,
    /// Parameter `θ ≠ θ₀` for `var(L_n)` and global identifiability; defaults
    /// to `1.5 θ₀`.
    #[serde(default)]
    pub theta_alt: Option<ParamVector>,
    #[serde(default = "default_dim")]
    pub d: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_perturb")]
    pub perturb: f64,
    /// Defaults to the unit cube `[0, 1]^d`.
    #[serde(default)]
    pub domain_box: Option<DomainBox>,
    #[serde(default = "default_design_mode")]
    pub design_mode: FixedMode,
    #[serde(default = "default_multistart")]
    pub multistart: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl ExperimentConfig {
    /// A config with every optional knob at its default.
    pub fn new(regime: RegimeKind, kernel: KernelSpec, theta0: ParamVector, n_list: Vec<usize>, replicates: usize, master_seed: u64) -> Self {
        Self {
            regime,
            kernel,
            theta0,
            n_list,
            replicates,
            master_seed,
            experiment: None,
            bounds: ParamBounds::default(),
            alpha1: default_alpha1(),
            theta_alt: None,
            d: default_dim(),
            delta: default_delta(),
            perturb: default_perturb(),
            domain_box: None,
            design_mode: default_design_mode(),
            multistart: default_multistart(),
            workers: default_workers(),
        }
        .with_defaults()
    }

    /// Fills the optional fields so the config echoes every default.
    pub fn with_defaults(mut self) -> Self {
        self.experiment.get_or_insert(match self.regime {
            RegimeKind::IncreasingDomain => ExperimentKind::Normality,
            RegimeKind::FixedDomain => ExperimentKind::Microergodic,
        });
        self.theta_alt.get_or_insert(ParamVector {
            sigma2: 1.5 * self.theta0.sigma2,
            alpha: 1.5 * self.theta0.alpha,
        });
        self.domain_box.get_or_insert_with(|| DomainBox::unit(self.d));
        self
    }

    pub fn experiment_kind(&self) -> ExperimentKind {
        self.clone().with_defaults().experiment.expect("filled by with_defaults")
    }

    pub fn theta_alt(&self) -> ParamVector {
        self.clone().with_defaults().theta_alt.expect("filled by with_defaults")
    }

    pub fn domain_box(&self) -> DomainBox {
        self.clone().with_defaults().domain_box.expect("filled by with_defaults")
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(Error::config("n_list", "must not be empty"));
        }
        if self.n_list[0] < 2 {
            return Err(Error::config("n_list", format!("sizes must be at least 2, got {}", self.n_list[0])));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("n_list", format!("must be strictly increasing, got {:?}", self.n_list)));
        }
        if self.replicates < 1 {
            return Err(Error::config("replicates", "must be at least 1"));
        }
        self.theta0
            .validate()
            .map_err(|e| Error::config("theta0", e.to_string()))?;
        self.theta_alt()
            .validate()
            .map_err(|e| Error::config("theta_alt", e.to_string()))?;
        self.bounds.validate()?;
        if !self.bounds.contains_alpha(self.alpha1) {
            return Err(Error::config(
                "alpha1",
                format!("must lie in bounds.alpha_range {:?}, got {}", self.bounds.alpha_range, self.alpha1),
            ));
        }
        if !(1..=3).contains(&self.d) {
            return Err(Error::config("d", format!("must be 1, 2 or 3, got {}", self.d)));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::config("delta", format!("must be positive, got {}", self.delta)));
        }
        if !(0.0..=0.4).contains(&self.perturb) {
            return Err(Error::config("perturb", format!("must lie in [0, 0.4], got {}", self.perturb)));
        }
        let domain_box = self.domain_box();
        domain_box.validate()?;
        if domain_box.dim() != self.d {
            return Err(Error::config(
                "domain_box",
                format!("dimension {} does not match d = {}", domain_box.dim(), self.d),
            ));
        }
        if self.multistart < 1 {
            return Err(Error::config("multistart", "must be at least 1"));
        }
        if self.workers < 1 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        let kind = self.experiment_kind();
        match kind {
            ExperimentKind::Normality | ExperimentKind::VarlnDecay if self.regime != RegimeKind::IncreasingDomain => Err(
                Error::config("experiment", format!("{} requires regime increasing_domain", kind.name())),
            ),
            ExperimentKind::Microergodic if self.regime != RegimeKind::FixedDomain => Err(Error::config(
                "experiment",
                "microergodic requires regime fixed_domain",
            )),
            ExperimentKind::Microergodic if self.kernel.smoothness().is_none() => Err(Error::config(
                "kernel",
                "microergodic requires a matern or exponential kernel",
            )),
            _ => Ok(()),
        }
    }

    /// Design shared by all replicates at sample size `n`.
    pub fn design(&self, regime: RegimeKind, n: usize) -> Result<Design> {
        let seed = SeedSpec::new(self.master_seed, 0);
        match regime {
            RegimeKind::IncreasingDomain => gen_increasing(n, self.d, self.delta, self.perturb, seed),
            RegimeKind::FixedDomain => gen_fixed(n, self.d, &self.domain_box(), self.design_mode, seed),
        }
    }

    pub fn sample_seed(&self, n: usize, replicate: u64) -> SeedSpec {
        SeedSpec::new(splitmix64(self.master_seed ^ splitmix64(n as u64)), replicate)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    FitFailed,
}

/// One replicate at one sample size.
///
/// For `normality`, `z1, z2` are the components of `√n Σ_θ₀^{1/2} (θ̂ - θ₀)`
/// and `microergodic_hat` is `σ̂² α̂^{2ν}` from the full fit. For
/// `microergodic`, `microergodic_hat` is the fixed-scale estimate
/// `σ̂²(α₁) α₁^{2ν}`, `z1 = √n (microergodic_hat - σ₀²α₀^{2ν})` and `z2` is the
/// same quantity for the full fit `(sigma2_hat, alpha_hat)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRecord {
    pub regime: RegimeKind,
    pub kernel: Family,
    pub nu: Option<f64>,
    pub n: usize,
    pub replicate: u64,
    pub sigma2_hat: Option<f64>,
    pub alpha_hat: Option<f64>,
    pub microergodic_hat: Option<f64>,
    pub z1: Option<f64>,
    pub z2: Option<f64>,
    pub jitter_used: Option<f64>,
    pub status: RecordStatus,
}

impl McRecord {
    fn empty(config: &ExperimentConfig, n: usize, replicate: u64) -> Self {
        Self {
            regime: config.regime,
            kernel: config.kernel.family(),
            nu: config.kernel.smoothness(),
            n,
            replicate,
            sigma2_hat: None,
            alpha_hat: None,
            microergodic_hat: None,
            z1: None,
            z2: None,
            jitter_used: None,
            status: RecordStatus::FitFailed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub n: usize,
    pub replicate: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub parameter: String,
    pub truth: f64,
    pub estimate: Moments,
    pub z: Moments,
    pub ks: f64,
    /// `1.36 / √N`, the 5% Kolmogorov critical value.
    pub ks_critical: f64,
    pub ks_flagged: bool,
    /// Intervals `θ̂_i ± 1.96 √((Σ⁻¹)_ii / n)`.
    pub coverage: Coverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalitySummary {
    pub fisher: FisherMatrix,
    pub components: Vec<ComponentSummary>,
    pub median_error_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub estimate: Moments,
    pub bias: f64,
    pub rmse: f64,
    /// Moments of `√n (estimate - target)`.
    pub scaled: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroergodicSummary {
    /// `σ₀² α₀^{2ν}`.
    pub target: f64,
    /// `2 (σ₀² α₀^{2ν})²`.
    pub limit_variance: f64,
    pub fixed_alpha: PathSummary,
    pub full_mle: PathSummary,
    /// `mean(fixed_alpha) - mean(full_mle)`.
    pub mean_difference: f64,
    /// `√(se_A² + se_B²)` of the two path means.
    pub pooled_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NSummary {
    pub n: usize,
    pub succeeded: usize,
    pub failed: usize,
    /// Jitter added when factoring `R_θ₀` for sampling.
    pub sample_jitter: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normality: Option<NormalitySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub microergodic: Option<MicroergodicSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPoint {
    pub regime: RegimeKind,
    pub n: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub gershgorin_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarPoint {
    pub n: usize,
    pub var_ln: f64,
    pub var_ln_at_truth: f64,
    /// `var(previous n) / var(n)`.
    pub ratio_to_previous: Option<f64>,
    pub ident_global: f64,
    pub ident_local_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub records: Vec<McRecord>,
    pub summaries: Vec<NSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub eigen_trends: Vec<EigenPoint>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub var_trends: Vec<VarPoint>,
    pub failures: Vec<Failure>,
}

impl McReport {
    fn new(experiment: ExperimentKind, config: &ExperimentConfig) -> Self {
        Self {
            experiment,
            config: config.clone().with_defaults(),
            records: Vec::new(),
            summaries: Vec::new(),
            eigen_trends: Vec::new(),
            var_trends: Vec::new(),
            failures: Vec::new(),
        }
    }

    pub fn summary_for(&self, n: usize) -> Option<&NSummary> {
        self.summaries.iter().find(|s| s.n == n)
    }

    pub fn write_records_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record([
            "regime",
            "kernel",
            "nu",
            "n",
            "replicate",
            "sigma2_hat",
            "alpha_hat",
            "microergodic_hat",
            "z1",
            "z2",
            "jitter_used",
            "status",
        ])?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Everything except the per-replicate records.
    pub fn write_summary_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// Plot-ready series, one row per `(regime, n)`; `None` when the
    /// experiment has no trend data.
    pub fn write_trends_csv<W: Write>(&self, writer: W) -> Result<bool> {
        let mut w = csv::Writer::from_writer(writer);
        if !self.eigen_trends.is_empty() {
            for p in &self.eigen_trends {
                w.serialize(p)?;
            }
        } else if !self.var_trends.is_empty() {
            for p in &self.var_trends {
                w.serialize(p)?;
            }
        } else {
            return Ok(false);
        }
        w.flush()?;
        Ok(true)
    }
}

/// Runs the experiment selected by the config.
pub fn run(config: &ExperimentConfig) -> Result<McReport> {
    match config.experiment_kind() {
        ExperimentKind::Normality => run_increasing_normality(config),
        ExperimentKind::Microergodic => run_fixed_microergodic(config),
        ExperimentKind::EigenTrends => run_eigen_trends(config),
        ExperimentKind::VarlnDecay => run_varln_decay(config),
    }
}

fn sampling_factor(config: &ExperimentConfig, design: &Design) -> Result<CholFactor> {
    chol(&build_cov(&config.kernel, &config.theta0, design)?, JitterPolicy::Jitter)
}

fn replicate_ids(config: &ExperimentConfig) -> Vec<u64> {
    (0..config.replicates as u64).collect()
}

fn collect_failures(report: &mut McReport, n: usize, outcomes: Vec<(McRecord, Option<String>)>) -> (Vec<McRecord>, usize) {
    let mut ok = Vec::new();
    let mut failed = 0;
    for (record, message) in outcomes {
        if let Some(message) = message {
            report.failures.push(Failure {
                n,
                replicate: record.replicate,
                message,
            });
            failed += 1;
        } else {
            ok.push(record.clone());
        }
        report.records.push(record);
    }
    (ok, failed)
}

/// Simulates and fits under increasing domain, standardizing with the
/// Fisher matrix at the true parameter.
pub fn run_increasing_normality(config: &ExperimentConfig) -> Result<McReport> {
    config.validate()?;
    if config.regime != RegimeKind::IncreasingDomain {
        return Err(Error::config("regime", "normality requires increasing_domain"));
    }
    let pool = config.pool()?;
    let theta0 = config.theta0;
    let mut report = McReport::new(ExperimentKind::Normality, config);
    for &n in &config.n_list {
        let design = config.design(RegimeKind::IncreasingDomain, n)?;
        let factor = sampling_factor(config, &design)?;
        let fisher = fisher_matrix(&config.kernel, &theta0, &design)?;
        if fisher.sqrt().is_none() {
            return Err(Error::Domain(format!("Fisher matrix at n = {n} is not positive definite")));
        }
        let outcomes: Vec<(McRecord, Option<String>)> = pool.install(|| {
            replicate_ids(config)
                .into_par_iter()
                .map(|rep| {
                    let mut record = McRecord::empty(config, n, rep);
                    let y = sample_gp(&factor, config.sample_seed(n, rep));
                    match fit_full(&config.kernel, &design, &y, &config.bounds, config.multistart) {
                        Ok(fit) => {
                            let z = fisher.standardize(&fit.theta_hat, &theta0).expect("checked positive definite");
                            record.sigma2_hat = Some(fit.theta_hat.sigma2);
                            record.alpha_hat = Some(fit.theta_hat.alpha);
                            record.microergodic_hat = fit.microergodic_hat;
                            record.z1 = Some(z[0]);
                            record.z2 = Some(z[1]);
                            record.jitter_used = Some(fit.jitter_used);
                            record.status = RecordStatus::Ok;
                            (record, None)
                        }
                        Err(e) => (record, Some(e.to_string())),
                    }
                })
                .collect()
        });
        let (ok, failed) = collect_failures(&mut report, n, outcomes);
        report.summaries.push(NSummary {
            n,
            succeeded: ok.len(),
            failed,
            sample_jitter: factor.jitter_used(),
            normality: if ok.is_empty() {
                None
            } else {
                Some(summarize_normality(&ok, &theta0, &fisher)?)
            },
            microergodic: None,
        });
    }
    Ok(report)
}

/// Componentwise KS distance, CI coverage and error norm of successful
/// normality records.
pub fn summarize_normality(records: &[McRecord], theta0: &ParamVector, fisher: &FisherMatrix) -> Result<NormalitySummary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("summarize_normality"));
    }
    let inv = fisher
        .inverse()
        .ok_or_else(|| Error::Domain("Fisher matrix is singular".into()))?;
    let n = fisher.n as f64;
    let truth = theta0.as_array();
    let estimates: Vec<[f64; N_PARAMS]> = records
        .iter()
        .map(|r| [r.sigma2_hat.unwrap_or(f64::NAN), r.alpha_hat.unwrap_or(f64::NAN)])
        .collect();
    let zs: Vec<[f64; N_PARAMS]> = records
        .iter()
        .map(|r| [r.z1.unwrap_or(f64::NAN), r.z2.unwrap_or(f64::NAN)])
        .collect();
    let count = records.len() as f64;
    let mut components = Vec::with_capacity(N_PARAMS);
    for (i, name) in ["sigma2", "alpha"].into_iter().enumerate() {
        let est: Vec<f64> = estimates.iter().map(|e| e[i]).collect();
        let z: Vec<f64> = zs.iter().map(|z| z[i]).collect();
        let half_width = Z_95 * (inv[i][i] / n).sqrt();
        let hits = est.iter().filter(|&&e| (e - truth[i]).abs() <= half_width).count();
        let ks = ks_normal(&z)?;
        let ks_critical = 1.36 / count.sqrt();
        components.push(ComponentSummary {
            parameter: name.to_string(),
            truth: truth[i],
            estimate: moments(&est)?,
            z: moments(&z)?,
            ks,
            ks_critical,
            ks_flagged: ks > ks_critical,
            coverage: coverage(hits, records.len())?,
        });
    }
    let norms: Vec<f64> = estimates
        .iter()
        .map(|e| ((e[0] - truth[0]).powi(2) + (e[1] - truth[1]).powi(2)).sqrt())
        .collect();
    Ok(NormalitySummary {
        fisher: *fisher,
        components,
        median_error_norm: median(&norms)?,
    })
}

/// Fixed-domain estimation of `σ₀² α₀^{2ν}` by the fixed-scale profile
/// estimator and by the full MLE.
pub fn run_fixed_microergodic(config: &ExperimentConfig) -> Result<McReport> {
    config.validate()?;
    let nu = config
        .kernel
        .smoothness()
        .ok_or_else(|| Error::config("kernel", "microergodic requires a matern or exponential kernel"))?;
    if config.regime != RegimeKind::FixedDomain {
        return Err(Error::config("regime", "microergodic requires fixed_domain"));
    }
    let pool = config.pool()?;
    let target = microergodic(&config.theta0, nu);
    let unit_alpha1 = ParamVector::new(1.0, config.alpha1)?;
    let scale1 = config.alpha1.powf(2.0 * nu);
    let mut report = McReport::new(ExperimentKind::Microergodic, config);
    for &n in &config.n_list {
        let design = config.design(RegimeKind::FixedDomain, n)?;
        let factor = sampling_factor(config, &design)?;
        let profile_factor = chol(&build_cov(&config.kernel, &unit_alpha1, &design)?, JitterPolicy::Jitter)?;
        let root_n = (n as f64).sqrt();
        let outcomes: Vec<(McRecord, Option<String>)> = pool.install(|| {
            replicate_ids(config)
                .into_par_iter()
                .map(|rep| {
                    let mut record = McRecord::empty(config, n, rep);
                    let y = sample_gp(&factor, config.sample_seed(n, rep));
                    let fixed = match profile_factor.quad_form_inv(&y) {
                        Ok(q) => q / n as f64 * scale1,
                        Err(e) => return (record, Some(e.to_string())),
                    };
                    record.microergodic_hat = Some(fixed);
                    record.z1 = Some(root_n * (fixed - target));
                    match fit_full(&config.kernel, &design, &y, &config.bounds, config.multistart) {
                        Ok(fit) => {
                            let full = microergodic(&fit.theta_hat, nu);
                            record.sigma2_hat = Some(fit.theta_hat.sigma2);
                            record.alpha_hat = Some(fit.theta_hat.alpha);
                            record.z2 = Some(root_n * (full - target));
                            record.jitter_used = Some(fit.jitter_used.max(profile_factor.jitter_used()));
                            record.status = RecordStatus::Ok;
                            (record, None)
                        }
                        Err(e) => (record, Some(e.to_string())),
                    }
                })
                .collect()
        });
        let (ok, failed) = collect_failures(&mut report, n, outcomes);
        report.summaries.push(NSummary {
            n,
            succeeded: ok.len(),
            failed,
            sample_jitter: factor.jitter_used(),
            normality: None,
            microergodic: if ok.is_empty() {
                None
            } else {
                Some(summarize_microergodic(&ok, target, nu)?)
            },
        });
    }
    Ok(report)
}

fn path_summary(estimates: &[f64], target: f64, n: usize) -> Result<PathSummary> {
    let estimate = moments(estimates)?;
    let mse = estimates.iter().map(|e| (e - target).powi(2)).sum::<f64>() / estimates.len() as f64;
    let root_n = (n as f64).sqrt();
    let scaled: Vec<f64> = estimates.iter().map(|e| root_n * (e - target)).collect();
    Ok(PathSummary {
        estimate,
        bias: estimate.mean - target,
        rmse: mse.sqrt(),
        scaled: moments(&scaled)?,
    })
}

/// Bias, RMSE and scaled variance of both microergodic estimators, from
/// successful records at a single `n`.
pub fn summarize_microergodic(records: &[McRecord], target: f64, nu: f64) -> Result<MicroergodicSummary> {
    let Some(first) = records.first() else {
        return Err(Error::EmptyInput("summarize_microergodic"));
    };
    let n = first.n;
    let fixed: Vec<f64> = records.iter().map(|r| r.microergodic_hat.unwrap_or(f64::NAN)).collect();
    let full: Vec<f64> = records
        .iter()
        .map(|r| match (r.sigma2_hat, r.alpha_hat) {
            (Some(s), Some(a)) => s * a.powf(2.0 * nu),
            _ => f64::NAN,
        })
        .collect();
    let fixed_alpha = path_summary(&fixed, target, n)?;
    let full_mle = path_summary(&full, target, n)?;
    Ok(MicroergodicSummary {
        target,
        limit_variance: 2.0 * target * target,
        mean_difference: fixed_alpha.estimate.mean - full_mle.estimate.mean,
        pooled_std_error: (fixed_alpha.estimate.std_error().powi(2) + full_mle.estimate.std_error().powi(2)).sqrt(),
        fixed_alpha,
        full_mle,
    })
}

/// Extreme eigenvalues of `R_θ₀` on the nested designs of both regimes.
pub fn run_eigen_trends(config: &ExperimentConfig) -> Result<McReport> {
    let config = ExperimentConfig {
        experiment: Some(ExperimentKind::EigenTrends),
        ..config.clone()
    };
    config.validate()?;
    let mut report = McReport::new(ExperimentKind::EigenTrends, &config);
    for regime in [RegimeKind::IncreasingDomain, RegimeKind::FixedDomain] {
        for &n in &config.n_list {
            let cov = build_cov(&config.kernel, &config.theta0, &config.design(regime, n)?)?;
            let (lambda_min, lambda_max) = eig_extremes(&cov);
            report.eigen_trends.push(EigenPoint {
                regime,
                n,
                lambda_min,
                lambda_max,
                gershgorin_upper: gershgorin_upper(&cov),
            });
        }
    }
    Ok(report)
}

/// Exact `var(L_n)` at `theta_alt` and at `θ₀`, plus both identifiability
/// functionals, across `n_list` under increasing domain.
pub fn run_varln_decay(config: &ExperimentConfig) -> Result<McReport> {
    let config = ExperimentConfig {
        experiment: Some(ExperimentKind::VarlnDecay),
        ..config.clone()
    };
    config.validate()?;
    let theta0 = config.theta0;
    let alt = config.theta_alt();
    let mut report = McReport::new(ExperimentKind::VarlnDecay, &config);
    let mut previous: Option<f64> = None;
    for &n in &config.n_list {
        let design = config.design(RegimeKind::IncreasingDomain, n)?;
        let v = var_ln(&config.kernel, &alt, &theta0, &design)?;
        let mut local_min = f64::INFINITY;
        for k in 0..IDENT_DIRECTIONS {
            let phi = std::f64::consts::TAU * k as f64 / IDENT_DIRECTIONS as f64;
            local_min = local_min.min(ident_local(&config.kernel, &theta0, [phi.cos(), phi.sin()], &design)?);
        }
        report.var_trends.push(VarPoint {
            n,
            var_ln: v,
            var_ln_at_truth: var_ln(&config.kernel, &theta0, &theta0, &design)?,
            ratio_to_previous: previous.map(|p| p / v),
            ident_global: ident_global(&config.kernel, &alt, &theta0, &design)?,
            ident_local_min: local_min,
        });
        previous = Some(v);
    }
    Ok(report)
}

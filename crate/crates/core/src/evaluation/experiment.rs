//! Calibration and utility experiments.
//!
//! Each trial draws `theta ~ prior` and `n` records from the model, releases
//! them, and asks every method for a posterior over theta. The quantile of
//! the true theta within each posterior is uniform when inference is exact,
//! so the KS distance of those quantiles from U(0, 1) measures
//! miscalibration. Utility is the MMD between each private posterior and
//! the non-private one.
//!
//! This is the only module besides the mechanisms that touches raw data:
//! the non-private reference posterior needs it.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stats::{empirical_quantile, ks_uniform, median, mmd2_unbiased};
use crate::error::{Error, Result};
use crate::expfam::{ConjugatePrior, Dataset, Family, HyperParams};
use crate::inference::{infer, naive_posterior, TruncatedScheme, Diagnostics, GibbsSettings, Recording, TraceRecord};
use crate::mechanisms::{ops_release, release_bounded, release_truncated, NoisyRelease, OpsSettings};
use crate::parallel::{map_indices, Execution};
use crate::rng::{self, RngHandle};
use crate::truncation::Interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gibbs,
    Naive,
    Ops,
    Nonprivate,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gibbs => "gibbs",
            Method::Naive => "naive",
            Method::Ops => "ops",
            Method::Nonprivate => "nonprivate",
        })
    }
}

/// How truncation bounds are chosen for families that need them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundsPolicy {
    /// Quantiles of the data distribution at the true parameter, treated
    /// as known a priori.
    Quantiles { quantiles: [f64; 2] },
    Fixed { fixed: [f64; 2] },
}

impl BoundsPolicy {
    pub fn interval(&self, family: Family, theta: &[f64]) -> Result<Interval> {
        match *self {
            BoundsPolicy::Quantiles { quantiles: [lo, hi] } => {
                Interval::new(family.quantile(theta, lo)?, family.quantile(theta, hi)?)
            }
            BoundsPolicy::Fixed { fixed: [a, b] } => Interval::new(a, b),
        }
    }
}

fn default_iters() -> usize {
    5000
}
fn default_burnin() -> usize {
    2000
}
fn default_posterior_samples() -> usize {
    5000
}
fn default_mmd_samples() -> usize {
    500
}
fn default_true() -> bool {
    true
}

/// A calibration/utility experiment over an `n` x `epsilon` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub family: Family,
    pub prior: ConjugatePrior,
    pub n: Vec<usize>,
    pub epsilon: Vec<f64>,
    pub trials: usize,
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_burnin")]
    pub burnin: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub bounds: Option<BoundsPolicy>,
    /// Draws per closed-form posterior for the quantile computation.
    #[serde(default = "default_posterior_samples")]
    pub posterior_samples: usize,
    #[serde(default = "default_mmd_samples")]
    pub mmd_samples: usize,
    #[serde(default)]
    pub ops: OpsSettings,
    #[serde(default = "default_true")]
    pub utility: bool,
    #[serde(default)]
    pub scheme: TruncatedScheme,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn hyper_params(&self) -> Result<HyperParams> {
        HyperParams::new(self.family, self.prior.clone()).map_err(|e| Error::Config(format!("prior: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.family.validate().map_err(|e| Error::Config(format!("family: {e}")))?;
        self.hyper_params()?;
        if self.n.is_empty() || self.n.contains(&0) {
            return bad("n: grid must be nonempty with positive entries".into());
        }
        if self.epsilon.is_empty() || self.epsilon.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return bad("epsilon: grid must be nonempty with positive entries".into());
        }
        if self.trials == 0 {
            return bad("trials: must be positive".into());
        }
        if self.iters <= self.burnin {
            return bad(format!("iters ({}) must exceed burnin ({})", self.iters, self.burnin));
        }
        if self.methods.is_empty() {
            return bad("methods: list must be nonempty".into());
        }
        if self.methods.contains(&Method::Ops) && self.family != Family::Bernoulli {
            return bad("methods: ops is only defined for the bernoulli family".into());
        }
        match (self.family.has_bounded_stats(), &self.bounds) {
            (false, None) => return bad(format!("bounds: required for the {} family", self.family.name())),
            (true, Some(_)) => return bad(format!("bounds: not used by the {} family", self.family.name())),
            _ => {}
        }
        if self.posterior_samples < 2 || self.mmd_samples < 2 {
            return bad("posterior_samples and mmd_samples must be at least 2".into());
        }
        Ok(())
    }

    /// Grid cells in output order: `n` outer, `epsilon` inner.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.n
            .iter()
            .flat_map(|&n| self.epsilon.iter().map(move |&e| (n, e)))
            .collect()
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn gibbs_settings(&self) -> GibbsSettings {
        GibbsSettings {
            iters: self.iters,
            burnin: self.burnin,
            scheme: self.scheme,
            ..Default::default()
        }
    }
}

/// Exact conjugate posterior given the raw data.
pub fn nonprivate_posterior(family: Family, data: &Dataset, prior: &HyperParams) -> Result<HyperParams> {
    if family != prior.family() {
        return Err(Error::FamilyMismatch {
            release: family.name(),
            prior: prior.family().name(),
        });
    }
    prior.conjugate_update(&family.suff_stats(data)?, data.len() as f64)
}

/// One method's result in one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub u: f64,
    pub mmd2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub theta_true: f64,
    pub outcomes: Vec<MethodOutcome>,
    pub gibbs: Option<Diagnostics>,
}

// substream purposes within a trial
const DATA: u64 = 0;
const RELEASE: u64 = 1;
const GIBBS: u64 = 2;
const NAIVE: u64 = 3;
const OPS: u64 = 4;
const NONPRIVATE: u64 = 5;
const REFERENCE: u64 = 6;

fn stream(cell: usize, purpose: u64) -> u64 {
    ((cell as u64) << 8) | purpose
}

fn posterior_draws(post: &HyperParams, count: usize, rng: &mut RngHandle) -> Result<Vec<f64>> {
    (0..count)
        .map(|_| post.sample_param(rng).map(|t| post.family().scalar_param(&t)))
        .collect()
}

/// `count` evenly spaced entries of `xs`.
fn thin(xs: &[f64], count: usize) -> Vec<f64> {
    let count = count.min(xs.len());
    (0..count).map(|i| xs[i * xs.len() / count]).collect()
}

/// Runs every configured method on one simulated data set.
pub fn calibration_trial(
    config: &ExperimentConfig,
    cell: usize,
    n: usize,
    epsilon: f64,
    trial: usize,
) -> Result<TrialResult> {
    let fam = config.family;
    let prior = config.hyper_params()?;
    let base = RngHandle::for_trial(config.seed, trial as u64);
    let rng_for = |purpose| base.fork(stream(cell, purpose));

    let mut data_rng = rng_for(DATA);
    let theta = prior.sample_param(&mut data_rng)?;
    let theta_true = fam.scalar_param(&theta);
    let data = fam.sample_data(&theta, n, &mut data_rng)?;

    let mut release_rng = rng_for(RELEASE);
    let release = match config.bounds {
        Some(policy) => release_truncated(fam, &data, epsilon, policy.interval(fam, &theta)?, &mut release_rng)?,
        None => release_bounded(fam, &data, epsilon, &mut release_rng)?,
    };

    let reference = nonprivate_posterior(fam, &data, &prior)?;
    let reference_draws = if config.utility {
        posterior_draws(&reference, config.mmd_samples, &mut rng_for(REFERENCE))?
    } else {
        Vec::new()
    };
    let utility = |draws: &[f64]| -> Result<Option<f64>> {
        if !config.utility || draws.len() < 2 {
            return Ok(None);
        }
        let m = draws.len().min(reference_draws.len());
        mmd2_unbiased(&draws[..m], &reference_draws[..m]).map(Some)
    };

    let mut outcomes = Vec::with_capacity(config.methods.len());
    let mut gibbs = None;
    for &method in &config.methods {
        let (samples, mmd_draws) = match method {
            Method::Nonprivate => {
                let s = posterior_draws(&reference, config.posterior_samples, &mut rng_for(NONPRIVATE))?;
                (s, None)
            }
            Method::Naive => {
                let mut r = rng_for(NAIVE);
                let naive = naive_release(&release, &data, &mut r)?;
                let post = naive_posterior(&naive, &prior)?;
                let s = posterior_draws(&post, config.posterior_samples, &mut r)?;
                let fresh = if config.utility {
                    Some(posterior_draws(&post, config.mmd_samples, &mut r)?)
                } else {
                    None
                };
                (s, fresh)
            }
            Method::Gibbs => {
                let chain = infer(&release, &prior, &config.gibbs_settings(), &mut rng_for(GIBBS))?;
                gibbs = Some(chain.diagnostics);
                let s = chain.scalar_samples();
                let thinned = thin(&s, config.mmd_samples);
                (s, Some(thinned))
            }
            Method::Ops => {
                let s = ops_release(&data, epsilon, &config.ops, &prior, &mut rng_for(OPS))?;
                let draws = thin(&s, config.mmd_samples);
                (s, Some(draws))
            }
        };
        let u = empirical_quantile(theta_true, &samples)?;
        let mmd2 = match (&mmd_draws, method) {
            (_, Method::Nonprivate) => None,
            (Some(d), _) => utility(d)?,
            (None, _) => None,
        };
        outcomes.push(MethodOutcome { method, u, mmd2 });
    }
    Ok(TrialResult {
        theta_true,
        outcomes,
        gibbs,
    })
}

/// The release the naive baseline conditions on. For truncated releases it
/// gets the untruncated statistic with noise at the truncated scale, which
/// no real mechanism could provide.
fn naive_release(release: &NoisyRelease, data: &Dataset, rng: &mut RngHandle) -> Result<NoisyRelease> {
    if release.bounds.is_none() {
        return Ok(release.clone());
    }
    let s = release.family.suff_stats(data)?;
    Ok(NoisyRelease {
        bounds: None,
        y: rng::laplace_vec(&s, release.noise_scale(), rng)?,
        ..release.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub method: Method,
    pub n: usize,
    pub epsilon: f64,
    pub trial: usize,
    pub theta_true: f64,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRecord {
    pub method: Method,
    pub n: usize,
    pub epsilon: f64,
    pub trial: usize,
    pub mmd2: f64,
}

/// Per (method, n, epsilon) aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: Method,
    pub n: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub failures: usize,
    #[serde(rename = "D")]
    pub d: f64,
    pub p: f64,
    pub mmd2_median: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rejection_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResults {
    pub config_hash: String,
    pub cells: Vec<CellSummary>,
    #[serde(skip)]
    pub records: Vec<CalibrationRecord>,
    #[serde(skip)]
    pub utility: Vec<UtilityRecord>,
}

#[derive(Serialize)]
struct CalibrationRow {
    method: Method,
    n: usize,
    epsilon: f64,
    trials: usize,
    #[serde(rename = "D")]
    d: f64,
    p: f64,
}

impl ExperimentResults {
    pub fn cell(&self, method: Method, n: usize, epsilon: f64) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.n == n && c.epsilon == epsilon)
    }

    /// Quantiles of the true parameter for one cell, in trial order.
    pub fn quantiles(&self, method: Method, n: usize, epsilon: f64) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method && r.n == n && r.epsilon == epsilon)
            .map(|r| r.u)
            .collect()
    }

    pub fn mmd2_values(&self, method: Method, n: usize, epsilon: f64) -> Vec<f64> {
        self.utility
            .iter()
            .filter(|r| r.method == method && r.n == n && r.epsilon == epsilon)
            .map(|r| r.mmd2)
            .collect()
    }

    pub fn calibration_csv(&self) -> Result<String> {
        to_csv(self.cells.iter().map(|c| CalibrationRow {
            method: c.method,
            n: c.n,
            epsilon: c.epsilon,
            trials: c.trials,
            d: c.d,
            p: c.p,
        }))
    }

    pub fn ecdf_csv(&self) -> Result<String> {
        to_csv(self.records.iter())
    }

    pub fn utility_csv(&self) -> Result<String> {
        to_csv(self.utility.iter())
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Writes calibration.csv, ecdf.csv, utility.csv, and summary.json.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        let files = [
            ("calibration.csv", self.calibration_csv()?),
            ("ecdf.csv", self.ecdf_csv()?),
            ("utility.csv", self.utility_csv()?),
            ("summary.json", self.summary_json()? + "\n"),
        ];
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| io_error(&path, e))?;
        }
        Ok(())
    }
}

pub(crate) fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        context: path.display().to_string(),
        message: e.to_string(),
    }
}

fn to_csv<T: Serialize>(rows: impl Iterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// Runs every trial of every cell and aggregates per method.
pub fn run_experiment(config: &ExperimentConfig, exec: Execution) -> Result<ExperimentResults> {
    config.validate()?;
    let mut records = Vec::new();
    let mut utility = Vec::new();
    let mut cells = Vec::new();
    for (cell, (n, epsilon)) in config.cells().into_iter().enumerate() {
        let results = map_indices(config.trials, exec, |t| calibration_trial(config, cell, n, epsilon, t));
        let mut failures = 0;
        let mut ok = Vec::new();
        for (trial, r) in results.into_iter().enumerate() {
            match r {
                Ok(r) => ok.push((trial, r)),
                Err(e) => {
                    log::warn!("n={n} epsilon={epsilon} trial {trial} failed: {e}");
                    failures += 1;
                }
            }
        }
        let mut diag = Diagnostics::default();
        for (_, r) in &ok {
            if let Some(d) = &r.gibbs {
                diag.merge(d);
            }
        }
        for (i, &method) in config.methods.iter().enumerate() {
            let mut us = Vec::with_capacity(ok.len());
            let mut mmds = Vec::new();
            for (trial, r) in &ok {
                let o = r.outcomes[i];
                us.push(o.u);
                records.push(CalibrationRecord {
                    method,
                    n,
                    epsilon,
                    trial: *trial,
                    theta_true: r.theta_true,
                    u: o.u,
                });
                if let Some(m) = o.mmd2 {
                    mmds.push(m);
                    utility.push(UtilityRecord {
                        method,
                        n,
                        epsilon,
                        trial: *trial,
                        mmd2: m,
                    });
                }
            }
            let (d, p) = match ks_uniform(&us) {
                Ok(ks) => (ks.d, ks.p),
                Err(_) => (f64::NAN, f64::NAN),
            };
            cells.push(CellSummary {
                method,
                n,
                epsilon,
                trials: us.len(),
                failures,
                d,
                p,
                mmd2_median: median(&mmds),
                rejection_rate: (method == Method::Gibbs).then(|| diag.rejection_rate()),
            });
        }
    }
    Ok(ExperimentResults {
        config_hash: config.hash(),
        cells,
        records,
        utility,
    })
}

/// Repeated single-data-set Gibbs runs recorded from the first iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    #[serde(flatten)]
    pub family: Family,
    pub prior: ConjugatePrior,
    pub theta_true: Vec<f64>,
    pub n: usize,
    pub epsilon: f64,
    #[serde(default = "default_iters")]
    pub iters: usize,
    pub seed: u64,
    pub runs: usize,
    #[serde(default)]
    pub bounds: Option<BoundsPolicy>,
    #[serde(default)]
    pub scheme: TruncatedScheme,
}

impl TraceConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TraceConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate().map_err(|e| Error::Config(format!("family: {e}")))?;
        HyperParams::new(self.family, self.prior.clone()).map_err(|e| Error::Config(format!("prior: {e}")))?;
        self.family
            .check_theta(&self.theta_true)
            .map_err(|e| Error::Config(format!("theta_true: {e}")))?;
        if self.n == 0 || self.runs == 0 || self.iters < 2 {
            return Err(Error::Config("n, runs, and iters must be positive (iters at least 2)".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config("epsilon: must be positive".into()));
        }
        if !self.family.has_bounded_stats() && self.bounds.is_none() {
            return Err(Error::Config(format!("bounds: required for the {} family", self.family.name())));
        }
        Ok(())
    }
}

/// Runs `config.runs` independent chains, each on its own simulated data
/// set, and returns every iteration of each.
pub fn run_traces(config: &TraceConfig, exec: Execution) -> Result<Vec<Vec<TraceRecord>>> {
    config.validate()?;
    let fam = config.family;
    let prior = HyperParams::new(fam, config.prior.clone())?;
    let settings = GibbsSettings {
        iters: config.iters,
        burnin: 0,
        recording: Recording::All,
        scheme: config.scheme,
        ..Default::default()
    };
    map_indices(config.runs, exec, |run| {
        let base = RngHandle::for_trial(config.seed, run as u64);
        let mut data_rng = base.fork(DATA);
        let data = fam.sample_data(&config.theta_true, config.n, &mut data_rng)?;
        let mut release_rng = base.fork(RELEASE);
        let release = match config.bounds {
            Some(p) => release_truncated(
                fam,
                &data,
                config.epsilon,
                p.interval(fam, &config.theta_true)?,
                &mut release_rng,
            )?,
            None => release_bounded(fam, &data, config.epsilon, &mut release_rng)?,
        };
        Ok(infer(&release, &prior, &settings, &mut base.fork(GIBBS))?.trace)
    })
    .into_iter()
    .collect()
}

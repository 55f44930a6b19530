use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use privexp::evaluation::{run_experiment, run_traces, ExperimentConfig, ExperimentResults, Method, TraceConfig};
use privexp::inference::{Recording, TraceRecord, TruncatedScheme};
use privexp::{infer as run_infer, release_bounded, release_truncated, Error, Execution, GibbsSettings};
use privexp::{HyperParams, Interval, NoisyRelease, Result, RngHandle};
use serde::Serialize;

use crate::files::{io_error, read_json, to_json, write_text, DataFile, PriorFile, SimulationConfig};

pub fn simulate(config: &Path, seed: u64, out: &Path) -> Result<()> {
    let cfg: SimulationConfig = read_json(config)?;
    cfg.family.validate().map_err(|e| Error::Config(format!("family: {e}")))?;
    cfg.family
        .check_theta(&cfg.theta_true)
        .map_err(|e| Error::Config(format!("theta_true: {e}")))?;
    let mut rng = RngHandle::new(seed);
    let data = cfg.family.sample_data(&cfg.theta_true, cfg.n, &mut rng)?;
    let file = DataFile::new(cfg.family, cfg.theta_true, seed, &data);
    write_text(out, &(to_json(&file)? + "\n"))
}

pub fn release(data: &Path, epsilon: f64, bounds: Option<&[f64]>, seed: u64, out: &Path) -> Result<()> {
    let file: DataFile = read_json(data)?;
    let dataset = file.dataset()?;
    let mut rng = RngHandle::new(seed);
    let released = match bounds {
        Some(&[a, b]) => release_truncated(file.family, &dataset, epsilon, Interval::new(a, b)?, &mut rng)?,
        Some(_) => return Err(Error::Config("--bounds takes two values".into())),
        None => release_bounded(file.family, &dataset, epsilon, &mut rng)?,
    };
    write_text(out, &(to_json(&released)? + "\n"))
}

pub struct InferOptions {
    pub release: PathBuf,
    pub prior: PathBuf,
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
    pub trace: bool,
    pub scheme: Option<String>,
    pub out: PathBuf,
}

fn parse_scheme(name: Option<&str>) -> Result<TruncatedScheme> {
    match name {
        None => Ok(TruncatedScheme::default()),
        Some(s) => serde_json::from_value(serde_json::Value::String(s.into()))
            .map_err(|_| Error::Config(format!("scheme: unknown value {s}"))),
    }
}

fn ndjson<T: Serialize>(rows: impl Iterator<Item = T>) -> Result<String> {
    let mut text = String::new();
    for row in rows {
        let _ = writeln!(text, "{}", to_json(&row)?);
    }
    Ok(text)
}

pub fn infer(opts: &InferOptions) -> Result<()> {
    let release: NoisyRelease = read_json(&opts.release)?;
    let model: PriorFile = read_json(&opts.prior)?;
    let prior = HyperParams::new(model.family, model.prior).map_err(|e| Error::Config(format!("prior: {e}")))?;
    let settings = GibbsSettings {
        recording: if opts.trace { Recording::All } else { Recording::Retained },
        scheme: parse_scheme(opts.scheme.as_deref())?,
        ..GibbsSettings::new(opts.iters, opts.burnin).map_err(|e| Error::Config(e.to_string()))?
    };
    let chain = run_infer(&release, &prior, &settings, &mut RngHandle::new(opts.seed))?;
    let d = chain.diagnostics;
    log::info!(
        "{} proposals, rejection rate {:.4}, {} exhausted draws",
        d.proposals,
        d.rejection_rate(),
        d.exhausted
    );
    write_text(&opts.out, &ndjson(chain.trace.iter())?)
}

fn load_experiment(config: &Path, seed: Option<u64>, iters: Option<usize>, burnin: Option<usize>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(config).map_err(|e| io_error(config, e))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(i) = iters {
        cfg.iters = i;
    }
    if let Some(b) = burnin {
        cfg.burnin = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Runtime {
    seconds: f64,
    jobs: Option<usize>,
    trials: usize,
    cells: usize,
}

fn report(results: &ExperimentResults) {
    for c in &results.cells {
        log::info!(
            "{} n={} epsilon={}: D={:.4} p={:.4} failures={}",
            c.method,
            c.n,
            c.epsilon,
            c.d,
            c.p,
            c.failures
        );
    }
}

/// Writes calibration.csv, ecdf.csv, utility.csv, summary.json, and a
/// separate runtime.json so the other files stay byte-identical across runs.
pub fn calibrate(
    config: &Path,
    seed: Option<u64>,
    iters: Option<usize>,
    burnin: Option<usize>,
    jobs: Option<usize>,
    out: &Path,
) -> Result<()> {
    let cfg = load_experiment(config, seed, iters, burnin)?;
    let start = Instant::now();
    let results = run_experiment(&cfg, Execution::from_jobs(jobs))?;
    let runtime = Runtime {
        seconds: start.elapsed().as_secs_f64(),
        jobs,
        trials: cfg.trials,
        cells: cfg.cells().len(),
    };
    report(&results);
    results.write_to(out)?;
    write_text(&out.join("runtime.json"), &(to_json(&runtime)? + "\n"))
}

/// Utility comparison only; runs single-threaded.
pub fn utility(config: &Path, seed: Option<u64>, iters: Option<usize>, burnin: Option<usize>, out: &Path) -> Result<()> {
    let mut cfg = load_experiment(config, seed, iters, burnin)?;
    cfg.utility = true;
    if !cfg.methods.contains(&Method::Nonprivate) {
        cfg.methods.push(Method::Nonprivate);
    }
    let results = run_experiment(&cfg, Execution::Sequential)?;
    report(&results);
    write_text(&out.join("utility.csv"), &results.utility_csv()?)?;
    write_text(&out.join("summary.json"), &(results.summary_json()? + "\n"))
}

#[derive(Serialize)]
struct TraceLine<'a> {
    run: usize,
    #[serde(flatten)]
    record: &'a TraceRecord,
}

pub fn trace(config: &Path, seed: Option<u64>, iters: Option<usize>, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(config).map_err(|e| io_error(config, e))?;
    let mut cfg = TraceConfig::from_json(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(i) = iters {
        cfg.iters = i;
    }
    let runs = run_traces(&cfg, Execution::Sequential)?;
    let lines = runs
        .iter()
        .enumerate()
        .flat_map(|(run, recs)| recs.iter().map(move |record| TraceLine { run, record }));
    write_text(out, &ndjson(lines)?)
}

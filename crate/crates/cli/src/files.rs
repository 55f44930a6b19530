//! On-disk formats and file helpers.

use std::fs;
use std::path::Path;

use privexp::{ConjugatePrior, Dataset, Error, Family, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub fn io_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        context: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value).map_err(|e| Error::Config(e.to_string()))
}

/// Input to `simulate`.
#[derive(Debug, Deserialize)]
pub struct SimulationConfig {
    #[serde(flatten)]
    pub family: Family,
    pub theta_true: Vec<f64>,
    pub n: usize,
}

/// Input to `infer`: the analyst's model.
#[derive(Debug, Deserialize)]
pub struct PriorFile {
    #[serde(flatten)]
    pub family: Family,
    pub prior: ConjugatePrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Records {
    /// Bernoulli outcomes or category labels.
    Integers(Vec<u64>),
    Reals(Vec<f64>),
}

/// A simulated data set with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFile {
    #[serde(flatten)]
    pub family: Family,
    pub theta_true: Vec<f64>,
    pub n: usize,
    pub seed: u64,
    pub records: Records,
}

impl DataFile {
    pub fn new(family: Family, theta_true: Vec<f64>, seed: u64, data: &Dataset) -> Self {
        let records = match data {
            Dataset::Binary(v) => Records::Integers(v.iter().map(|&x| x as u64).collect()),
            Dataset::Categorical { labels, .. } => Records::Integers(labels.iter().map(|&l| l as u64).collect()),
            Dataset::Continuous(v) => Records::Reals(v.clone()),
        };
        DataFile {
            family,
            theta_true,
            n: data.len(),
            seed,
            records,
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let data = match (&self.records, self.family) {
            (Records::Integers(v), Family::Bernoulli) => Dataset::Binary(
                v.iter()
                    .map(|&x| match x {
                        0 | 1 => Ok(x as u8),
                        _ => Err(Error::SupportViolation(format!("bernoulli record {x}"))),
                    })
                    .collect::<Result<_>>()?,
            ),
            (Records::Integers(v), Family::Multinomial { k }) => Dataset::Categorical {
                k,
                labels: v
                    .iter()
                    .map(|&l| {
                        if (l as usize) < k {
                            Ok(l as usize)
                        } else {
                            Err(Error::SupportViolation(format!("category {l} with k = {k}")))
                        }
                    })
                    .collect::<Result<_>>()?,
            },
            (Records::Integers(v), Family::Exponential) => Dataset::Continuous(v.iter().map(|&x| x as f64).collect()),
            (Records::Reals(v), Family::Exponential) => Dataset::Continuous(v.clone()),
            (Records::Reals(_), fam) => {
                return Err(Error::SupportViolation(format!(
                    "{} records must be integers",
                    fam.name()
                )))
            }
        };
        if data.len() != self.n {
            return Err(Error::Config(format!("n is {} but {} records are present", self.n, data.len())));
        }
        Ok(data)
    }
}

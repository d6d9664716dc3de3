//! JSON and CSV formats for models, interval models and solutions.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{AssumptionSet, BoundsError, IntervalCfMdp, ProbInterval};
use crate::gumbel::GumbelCfMdp;
use crate::interval_vi::{RobustMode, RobustSolution, SampledCfMdp};
use crate::mdp::{CfMdp, Mdp, ObservedPath};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error("{0}")]
    Invalid(String),
}

/// Reads and parses a JSON file.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.display().to_string(), source })
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| IoError::Json { path: path.display().to_string(), source })?;
    fs::write(path, text + "\n").map_err(|source| IoError::File { path: path.display().to_string(), source })
}

/// Interval model: `intervals[t][s][a][s']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IcfMdpJson {
    pub horizon: usize,
    pub assumptions: AssumptionSet,
    pub intervals: Vec<Vec<Vec<Vec<ProbInterval>>>>,
}

impl From<&IntervalCfMdp> for IcfMdpJson {
    fn from(icf: &IntervalCfMdp) -> Self {
        let intervals = (0..icf.horizon())
            .map(|t| {
                (0..icf.num_states())
                    .map(|s| (0..icf.num_actions()).map(|a| icf.row(t, s, a).to_vec()).collect())
                    .collect()
            })
            .collect();
        IcfMdpJson { horizon: icf.horizon(), assumptions: icf.assumptions(), intervals }
    }
}

impl IcfMdpJson {
    /// Reattaches the base model and path the intervals were built from.
    pub fn into_icfmdp(self, base: Mdp, path: ObservedPath) -> Result<IntervalCfMdp, IoError> {
        if self.intervals.len() != self.horizon {
            return Err(IoError::Invalid(format!(
                "horizon {} but {} interval layers",
                self.horizon,
                self.intervals.len()
            )));
        }
        Ok(IntervalCfMdp::from_intervals(base, path, self.assumptions, self.intervals)?)
    }
}

#[derive(Debug, Serialize)]
struct IntervalRow {
    t: usize,
    s: usize,
    a: usize,
    s_next: usize,
    lb: f64,
    ub: f64,
}

/// Flat CSV with columns `t,s,a,s_next,lb,ub`.
pub fn write_icfmdp_csv<W: Write>(w: W, icf: &IntervalCfMdp) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    for (t, s, a, s_next, iv) in icf.entries() {
        out.serialize(IntervalRow { t, s, a, s_next, lb: iv.lb, ub: iv.ub })?;
    }
    out.flush()?;
    Ok(())
}

/// A robust (or point) policy and its values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionJson {
    pub mode: RobustMode,
    pub values: Vec<Vec<f64>>,
    pub policy: Vec<Vec<usize>>,
}

impl From<&RobustSolution> for SolutionJson {
    fn from(sol: &RobustSolution) -> Self {
        SolutionJson { mode: sol.mode, values: sol.values.nested(), policy: sol.policy.nested() }
    }
}

/// A concrete time-indexed model: one MDP per step, all sharing rewards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfMdpJson {
    pub horizon: usize,
    pub layers: Vec<Mdp>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_samples: Option<usize>,
}

impl CfMdpJson {
    pub fn new(model: &CfMdp, base: &Mdp, seed: u64, num_samples: Option<usize>) -> Self {
        let layers = (0..model.horizon()).map(|t| model.layer_mdp(base, t)).collect();
        CfMdpJson { horizon: model.horizon(), layers, seed, num_samples }
    }

    pub fn from_sampled(s: &SampledCfMdp, base: &Mdp) -> Self {
        Self::new(&s.model, base, s.seed, None)
    }

    pub fn from_gumbel(g: &GumbelCfMdp, base: &Mdp) -> Self {
        Self::new(&g.model, base, g.seed, Some(g.num_samples))
    }

    pub fn model(&self) -> Result<CfMdp, IoError> {
        if self.layers.is_empty() || self.layers.len() != self.horizon {
            return Err(IoError::Invalid(format!("horizon {} but {} layers", self.horizon, self.layers.len())));
        }
        Ok(CfMdp::from_layers(&self.layers))
    }
}

/// Writes `records` as CSV with a header row.
pub fn write_csv<T: Serialize, W: Write>(w: W, records: &[T]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Appends `records` to a CSV file, writing the header only when the file is
/// new or empty.
pub fn append_csv<T: Serialize>(path: &Path, records: &[T]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Creates (or truncates) a file, creating parent directories.
pub fn create_file(path: &Path) -> Result<File, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    File::create(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

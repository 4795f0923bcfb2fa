use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GeneralizedState, MetricParams, ModelMode, PackedState};
use crate::error::{Error, Result};

/// Provenance of an identified dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub converged: bool,
}

fn yes() -> bool {
    true
}

/// The identified material states `z̄_i` with their assignment weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialDataset {
    pub mode: ModelMode,
    pub metric: MetricParams,
    pub states: Vec<GeneralizedState>,
    /// Total integration weight assigned to each state.
    pub counts: Vec<f64>,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    #[serde(default = "units")]
    units: String,
    mode: ModelMode,
    metric: MetricParams,
    states: Vec<PackedState>,
    counts: Vec<f64>,
    #[serde(default)]
    meta: DatasetMeta,
}

fn units() -> String {
    "MPa, mm".into()
}

impl MaterialDataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.is_empty() {
            return Err(Error::InvalidInput("dataset has no states".into()));
        }
        if self.counts.len() != self.states.len() {
            return Err(Error::Shape(format!(
                "{} counts for {} states",
                self.counts.len(),
                self.states.len()
            )));
        }
        if self.counts.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::InvalidInput("counts must be finite and non-negative".into()));
        }
        if let Some(s) = self.states.iter().find(|s| s.mode() != self.mode) {
            return Err(Error::ModeMismatch(format!("state in mode {} inside {} dataset", s.mode(), self.mode)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            units: units(),
            mode: self.mode,
            metric: self.metric,
            states: self.states.iter().map(|s| s.to_packed()).collect(),
            counts: self.counts.clone(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        let states = file
            .states
            .iter()
            .map(|p| GeneralizedState::from_packed(file.mode, p))
            .collect::<Result<Vec<_>>>()?;
        let ds = Self {
            mode: file.mode,
            metric: file.metric,
            states,
            counts: file.counts,
            meta: file.meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

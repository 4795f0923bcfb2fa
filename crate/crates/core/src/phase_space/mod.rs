//! Phase-space coordinates, metric operators and distances.

mod dataset;
mod embedding;
mod metric;
mod optimize;
mod state;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{DatasetMeta, MaterialDataset};
pub use embedding::MetricEmbedding;
pub use metric::{apply_metric, Block, Direction, MetricParams};
pub use optimize::optimize_metric;
pub use state::{global_distance, local_distance, GeneralizedState, PackedState};

pub(crate) use metric::{forward_into, strain_to_stress, stress_to_strain};

/// Kinematic model: full first-order micromorphic or micropolar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelMode {
    Full1,
    Micropolar0,
}

impl ModelMode {
    /// Stored components of γ (and τ).
    pub fn gam_len(self) -> usize {
        match self {
            ModelMode::Full1 => 4,
            ModelMode::Micropolar0 => 1,
        }
    }

    /// Stored components of ζ (and μ).
    pub fn zet_len(self) -> usize {
        match self {
            ModelMode::Full1 => 8,
            ModelMode::Micropolar0 => 0,
        }
    }

    /// Nodal microdeformation DOFs.
    pub fn chi_len(self) -> usize {
        match self {
            ModelMode::Full1 => 4,
            ModelMode::Micropolar0 => 1,
        }
    }

    /// DOFs per node: two displacements plus the microdeformation.
    pub fn node_dofs(self) -> usize {
        2 + self.chi_len()
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelMode::Full1 => "Full1",
            ModelMode::Micropolar0 => "Micropolar0",
        })
    }
}

impl std::str::FromStr for ModelMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "Full1" | "full1" | "full" => Ok(ModelMode::Full1),
            "Micropolar0" | "micropolar0" | "micropolar" => Ok(ModelMode::Micropolar0),
            _ => Err(crate::Error::InvalidInput(format!("unknown mode '{s}'"))),
        }
    }
}

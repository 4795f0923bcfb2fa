//! Data-driven identification of micromorphic and micropolar material
//! datasets from full-field kinematics, and model-free prediction with the
//! identified data.

pub mod analysis;
pub mod cli;
pub mod assembly;
pub mod ddcm;
pub mod ddi;
pub mod error;
pub mod fem;
pub mod lattice;
pub mod forward;
pub mod mesh;
pub mod phase_space;
pub mod sparse;

pub use error::{Error, Result};
pub use fem::NodalFields;
pub use forward::{BoundaryProgram, SnapshotSet};
pub use mesh::{GeometrySpec, Mesh};
pub use phase_space::{GeneralizedState, MaterialDataset, MetricParams, ModelMode};

//! Experiment orchestration for the OCARL laboratory: specs, training
//! drivers, metric and checkpoint persistence, knock-out studies, and
//! plot-ready exports. The numerical substance lives in `ocarl-core`; this
//! crate owns everything that touches a filesystem.

pub mod checkpoint;
pub mod error;
pub mod experiments;
pub mod export;
pub mod metrics;
pub mod modularity;
pub mod spec;
pub mod uodstore;

pub use error::{LabError, Result};
pub use spec::ExperimentSpec;

//! Numerical core for Allen-Cahn min-max experiments on surfaces: double-well
//! potentials, the one-dimensional heteroclinic profile, finite element
//! operators on triangulated surfaces, energy and its derivatives, mountain
//! pass search, Morse index computation, and interface diagnostics.

pub mod config;
pub mod energy;
pub mod entire;
pub mod error;
pub mod pipeline;
pub mod heteroclinic;
pub mod linalg;
pub mod minmax;
pub mod potential;
pub mod spectrum;
pub mod surface;
pub mod varifold;

pub use config::RunConfig;
pub use energy::{DiscrepancyField, Field};
pub use entire::{IndexVerdict, Line, LineConfig, NodalAnalysis};
pub use error::{Error, Result};
pub use pipeline::{RunReport, Gate};
pub use heteroclinic::HeteroclinicProfile;
pub use minmax::{MinMaxOptions, MinMaxResult, NewtonOptions, Path};
pub use potential::{InterfaceConstants, Potential, ValidationReport};
pub use spectrum::SpectralSummary;
pub use varifold::{DensityReport, JunctionVerdict, LevelSetCurves};
pub use surface::{SurfaceKind, SurfaceMesh, SurfaceParams};

//! Bloch frames for gapped periodic tight-binding models.
//!
//! The crate builds projector families from Bloch Hamiltonians, constructs
//! periodic frames by parallel transport, computes Chern numbers, and
//! measures the localization of the resulting composite Wannier functions.

pub mod error;
pub mod frames;
pub mod galerkin;
pub mod kmesh;
pub mod linalg;
pub mod model;
pub mod topology;
pub mod transport;
pub mod wannier;

/// A point of the Brillouin torus in lattice coordinates.
pub type KPoint = [f64; 2];

pub use error::{Result, WdError};
pub use frames::{Frame, GradientBoundReport};
pub use kmesh::{build_mesh, KMesh, RayFan};
pub use linalg::{CMat, C64};
pub use model::{build_haldane, build_hofstadter, BlochModel, GapReport, ModelFamily, ProjectorFamily};
pub use topology::{ChernResult, CurvatureField};
pub use transport::{HolonomyLog, TransportOp};
pub use wannier::{DichotomyReport, HsReport, MomentReport, WannierSet};

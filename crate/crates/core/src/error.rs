use thiserror::Error;

use crate::KPoint;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum WdError {
    #[error("spectral gap {gap:.3e} below tolerance at k = ({:.6}, {:.6})", k[0], k[1])]
    GapClosure { k: KPoint, gap: f64 },
    #[error("flux p/q = {p}/{q} is not a reduced fraction with q >= 2")]
    NonCoprimeFlux { p: i64, q: i64 },
    #[error("covariance generators do not commute (residual {0:.3e})")]
    NonCommutingGenerators(f64),
    #[error("generators do not reproduce the covariance unitaries (residual {0:.3e})")]
    CovarianceMismatch(f64),
    #[error("mesh size {0} must be even and at least 2")]
    OddMeshSize(usize),
    #[error("eigenphase {0:.12} too close to the branch cut at -pi")]
    BranchDegenerate(f64),
    #[error("projectors too far apart: |P - P0| = {0:.9}")]
    ProjectorsTooFar(f64),
    #[error("smoothed Gram matrix too far from identity: |G - I| = {dev:.3e} at mesh index {index}")]
    SmoothingGramSingular { index: usize, dev: f64 },
    #[error("vectors nearly dependent: Gram determinant {0:.3e}")]
    NearDependent(f64),
    #[error("mollified frame not reprojectable near mesh index {index} (smallest singular value {sigma:.3e})")]
    ReprojectionSingular { index: usize, sigma: f64 },
    #[error("plaquette too coarse for the link-variable method: {0}")]
    PlaquetteTooCoarse(String),
    #[error("supercell L = {l} smaller than N/2 = {half}")]
    SupercellTooSmall { l: usize, half: usize },
    #[error("fewer than 8 radial shells carry mass ({0} found)")]
    InsufficientSupport(usize),
    #[error("truncation not injective: smallest singular value {0:.3e}")]
    TruncationNotInjective(f64),
    #[error("projected Gram determinant {det:.3e} <= 1/2 at k = ({:.6}, {:.6})", k[0], k[1])]
    GramTooSmall { k: KPoint, det: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, WdError>;

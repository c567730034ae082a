//! Finite-dimensional Galerkin reduction of projector families and frames.

use rayon::prelude::*;

use crate::error::{Result, WdError};
use crate::frames::{gram_schmidt, Frame};
use crate::kmesh::KMesh;
use crate::linalg::{c, eigh, frob, polar, CMat};
use crate::model::ProjectorFamily;
use crate::topology::chern_fhs;
use crate::KPoint;

pub const INJECTIVITY_HARD: f64 = 1e-6;
pub const INJECTIVITY_SOFT: f64 = 1e-3;

/// Smallest singular value of `E_n B` for an orthonormal `N x m` basis `B`.
fn injectivity(b: &CMat, n: usize) -> f64 {
    let top = b.rows(0, n).into_owned();
    let (vals, _) = eigh(&(top.adjoint() * &top));
    vals[0].max(0.0).sqrt()
}

/// `P~_n(k)`: orthogonal projector in `C^n` onto `E_n Ran P(k)`, where
/// `E_n` keeps the first `n` orbitals.
pub struct Truncated<'a> {
    pub inner: &'a dyn ProjectorFamily,
    pub n: usize,
}

impl Truncated<'_> {
    fn image_basis(&self, k: KPoint) -> Result<CMat> {
        let b = self.inner.basis(k)?;
        let top = b.rows(0, self.n).into_owned();
        let (q, smin) = polar(&top);
        if smin < INJECTIVITY_HARD {
            return Err(WdError::TruncationNotInjective(smin));
        }
        Ok(q)
    }
}

impl ProjectorFamily for Truncated<'_> {
    fn dim(&self) -> usize {
        self.n
    }
    fn rank(&self) -> usize {
        self.inner.rank()
    }
    fn projector(&self, k: KPoint) -> Result<CMat> {
        if self.n == self.inner.dim() {
            return self.inner.projector(k);
        }
        let q = self.image_basis(k)?;
        Ok(&q * q.adjoint())
    }
}

/// A truncated family zero-padded back into the ambient space.
pub struct Embedded<'a, 'b>(pub &'b Truncated<'a>);

impl ProjectorFamily for Embedded<'_, '_> {
    fn dim(&self) -> usize {
        self.0.inner.dim()
    }
    fn rank(&self) -> usize {
        self.0.rank()
    }
    fn projector(&self, k: KPoint) -> Result<CMat> {
        let small = self.0.projector(k)?;
        let big_n = self.dim();
        let mut big = CMat::zeros(big_n, big_n);
        big.view_mut((0, 0), (self.0.n, self.0.n)).copy_from(&small);
        Ok(big)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TruncationReport {
    pub n: usize,
    pub min_injectivity: f64,
    /// `min_injectivity >= 1e-3`.
    pub certified: bool,
    pub chern_original: i64,
    pub chern_truncated: i64,
    pub chern_preserved: bool,
    pub projector_h1_distance: f64,
}

pub fn truncate_family<'a>(
    p: &'a dyn ProjectorFamily,
    n: usize,
    mesh: &KMesh,
) -> Result<(Truncated<'a>, TruncationReport)> {
    let dim = p.dim();
    if n < 1 || n > dim || n < p.rank() {
        return Err(WdError::InvalidInput(format!(
            "truncation dimension {n} must lie in [max(1, m), {dim}]"
        )));
    }
    let inj: Result<Vec<f64>> = mesh
        .points
        .par_iter()
        .map(|&k| Ok(if n == dim { 1.0 } else { injectivity(&p.basis(k)?, n) }))
        .collect();
    let min_injectivity = inj?.into_iter().fold(1.0_f64, f64::min).clamp(0.0, 1.0);
    if min_injectivity < INJECTIVITY_HARD {
        return Err(WdError::TruncationNotInjective(min_injectivity));
    }
    let t = Truncated { inner: p, n };
    let chern_original = chern_fhs(p, mesh)?;
    let chern_truncated = chern_fhs(&t, mesh)?;
    let dist = projector_h1_distance(&Embedded(&t), p, mesh)?;
    let report = TruncationReport {
        n,
        min_injectivity,
        certified: min_injectivity >= INJECTIVITY_SOFT,
        chern_original,
        chern_truncated,
        chern_preserved: chern_original == chern_truncated,
        projector_h1_distance: dist,
    };
    Ok((t, report))
}

/// Discrete `H^1` distance between two matrix fields on the mesh:
/// `sqrt(mean |A - B|^2 + mean |grad A - grad B|^2)` with periodic central
/// differences. Points where either field is missing are skipped.
fn field_h1_distance(mesh: &KMesh, a: &[Option<CMat>], b: &[Option<CMat>]) -> f64 {
    let inv = c(1.0 / (2.0 * mesh.step), 0.0);
    let diff = |i: usize| -> Option<CMat> { Some(a[i].as_ref()? - b[i].as_ref()?) };
    let mut l2 = 0.0;
    let mut grad = 0.0;
    let mut count = 0usize;
    for idx in 0..mesh.len() {
        let Some(d0) = diff(idx) else { continue };
        let [r, l, u, dn] = mesh.neighbors[idx];
        let (Some(dr), Some(dl), Some(du), Some(dd)) = (diff(r), diff(l), diff(u), diff(dn)) else {
            continue;
        };
        l2 += frob(&d0).powi(2);
        grad += frob(&((dr - dl) * inv)).powi(2) + frob(&((du - dd) * inv)).powi(2);
        count += 1;
    }
    if count == 0 {
        return 0.0;
    }
    ((l2 + grad) / count as f64).sqrt()
}

pub fn projector_h1_distance(q: &dyn ProjectorFamily, p: &dyn ProjectorFamily, mesh: &KMesh) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(WdError::InvalidInput("families live in different dimensions".into()));
    }
    let qs: Result<Vec<Option<CMat>>> = mesh.points.par_iter().map(|&k| Ok(Some(q.projector(k)?))).collect();
    let ps: Result<Vec<Option<CMat>>> = mesh.points.par_iter().map(|&k| Ok(Some(p.projector(k)?))).collect();
    Ok(field_h1_distance(mesh, &qs?, &ps?))
}

#[derive(Clone, Debug)]
pub struct FrameTruncation {
    /// Orthonormal frame with values in `C^n`.
    pub frame: Frame,
    /// Discrete `H^1` distance to the input, after zero-padding.
    pub h1_distance: f64,
}

/// Projects every frame vector onto the first `n` orbitals and
/// re-orthonormalizes with the determinant Gram-Schmidt formula.
pub fn frame_truncate(frame: &Frame, n: usize) -> Result<FrameTruncation> {
    let dim = frame.dim();
    if n == 0 || n > dim {
        return Err(WdError::InvalidInput(format!("truncation dimension {n} outside 1..={dim}")));
    }
    if n == dim {
        return Ok(FrameTruncation { frame: frame.clone(), h1_distance: 0.0 });
    }
    let mesh = &frame.mesh;
    let out: Result<Vec<Option<CMat>>> = frame
        .vectors
        .par_iter()
        .zip(mesh.points.par_iter())
        .map(|(v, &k)| {
            let Some(v) = v else { return Ok(None) };
            let top = v.rows(0, n).into_owned();
            let g = top.adjoint() * &top;
            for j in 1..=top.ncols() {
                let det = g.view((0, 0), (j, j)).into_owned().determinant().re;
                if det <= 0.5 {
                    return Err(WdError::GramTooSmall { k, det });
                }
            }
            Ok(Some(gram_schmidt(&top)?))
        })
        .collect();
    let vectors = out?;
    let padded: Vec<Option<CMat>> = vectors
        .iter()
        .map(|v| {
            v.as_ref().map(|v| {
                let mut big = CMat::zeros(dim, v.ncols());
                big.view_mut((0, 0), (n, v.ncols())).copy_from(v);
                big
            })
        })
        .collect();
    let h1_distance = field_h1_distance(mesh, &padded, &frame.vectors);
    Ok(FrameTruncation {
        frame: Frame { mesh: mesh.clone(), vectors, singular_points: frame.singular_points.clone() },
        h1_distance,
    })
}

//! Berry curvature, Chern numbers, the abelian Berry connection of a frame,
//! and Stokes checks.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Result, WdError};
use crate::frames::Frame;
use crate::kmesh::KMesh;
use crate::linalg::{c, CMat};
use crate::model::ProjectorFamily;

/// `Omega = tr(P [d1 P, d2 P]) / i` at every mesh point.
#[derive(Clone, Debug)]
pub struct CurvatureField {
    pub mesh: KMesh,
    pub omega: Vec<f64>,
    /// Largest imaginary part discarded from the integrand.
    pub max_imag: f64,
}

impl CurvatureField {
    /// `sum Omega * h^2` over the whole cell.
    pub fn integral(&self) -> f64 {
        let h2 = self.mesh.step * self.mesh.step;
        self.omega.iter().sum::<f64>() * h2
    }

    /// Flux through the plaquettes `lo <= (i, j) < hi` (indices wrap), each
    /// plaquette taking the mean of its four corners.
    pub fn flux(&self, lo: [i64; 2], hi: [i64; 2]) -> f64 {
        let m = &self.mesh;
        let h2 = m.step * m.step;
        let mut total = 0.0;
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                let s = self.omega[m.index(i, j)]
                    + self.omega[m.index(i + 1, j)]
                    + self.omega[m.index(i + 1, j + 1)]
                    + self.omega[m.index(i, j + 1)];
                total += 0.25 * s * h2;
            }
        }
        total
    }

    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "k1,k2,omega")?;
        for (k, o) in self.mesh.points.iter().zip(&self.omega) {
            writeln!(w, "{},{},{:e}", k[0], k[1], o)?;
        }
        Ok(())
    }
}

/// Curvature from central differences of `P` on the mesh, wrapping
/// periodically.
pub fn berry_curvature(p: &dyn ProjectorFamily, mesh: &KMesh) -> Result<CurvatureField> {
    let ps: Result<Vec<CMat>> = mesh.points.par_iter().map(|&k| p.projector(k)).collect();
    let ps = ps?;
    let inv = c(1.0 / (2.0 * mesh.step), 0.0);
    let vals: Vec<(f64, f64)> = (0..mesh.len())
        .into_par_iter()
        .map(|idx| {
            let [r, l, u, d] = mesh.neighbors[idx];
            let d1 = (&ps[r] - &ps[l]) * inv;
            let d2 = (&ps[u] - &ps[d]) * inv;
            let comm = &d1 * &d2 - &d2 * &d1;
            let t = (&ps[idx] * comm).trace();
            (t.im, t.re.abs())
        })
        .collect();
    let max_imag = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok(CurvatureField { mesh: mesh.clone(), omega: vals.into_iter().map(|v| v.0).collect(), max_imag })
}

/// Curvature from the family's own `projector_derivative` at each mesh
/// point; analytic for `ModelFamily`.
pub fn berry_curvature_analytic(p: &dyn ProjectorFamily, mesh: &KMesh) -> Result<CurvatureField> {
    let vals: Result<Vec<(f64, f64)>> = mesh
        .points
        .par_iter()
        .map(|&k| {
            let (pk, d1) = p.projector_derivative(k, [1.0, 0.0])?;
            let (_, d2) = p.projector_derivative(k, [0.0, 1.0])?;
            let t = (pk * (&d1 * &d2 - &d2 * &d1)).trace();
            Ok((t.im, t.re.abs()))
        })
        .collect();
    let vals = vals?;
    let max_imag = vals.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok(CurvatureField { mesh: mesh.clone(), omega: vals.into_iter().map(|v| v.0).collect(), max_imag })
}

/// `(1 / 2 pi) * integral of Omega`, with `dk1 ^ dk2` positive.
pub fn chern_continuum(p: &dyn ProjectorFamily, mesh: &KMesh) -> Result<f64> {
    Ok(berry_curvature(p, mesh)?.integral() / (2.0 * PI))
}

/// Link-variable Chern number from plaquette phases of determinant
/// overlaps of occupied frames.
pub fn chern_fhs(p: &dyn ProjectorFamily, mesh: &KMesh) -> Result<i64> {
    let basis: Result<Vec<CMat>> = mesh.points.par_iter().map(|&k| p.basis(k)).collect();
    let basis = basis?;
    let link = |a: usize, b: usize| (basis[a].adjoint() * &basis[b]).determinant();
    let phases: Vec<f64> = (0..mesh.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = mesh.coords(idx);
            let (i, j) = (i as i64, j as i64);
            let a = idx;
            let b = mesh.index(i + 1, j);
            let cc = mesh.index(i + 1, j + 1);
            let d = mesh.index(i, j + 1);
            (link(a, b) * link(b, cc) * link(cc, d) * link(d, a)).arg()
        })
        .collect();
    let worst = phases.iter().fold(0.0_f64, |m, f| m.max(f.abs()));
    if worst >= PI - 0.1 {
        return Err(WdError::PlaquetteTooCoarse(format!("plaquette phase {worst:.4}")));
    }
    let total = phases.iter().sum::<f64>() / (2.0 * PI);
    let rounded = total.round();
    if (total - rounded).abs() >= 0.05 {
        return Err(WdError::PlaquetteTooCoarse(format!("rounding residual {:.4}", (total - rounded).abs())));
    }
    Ok(rounded as i64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChernResult {
    pub value_float: f64,
    pub value_int: i64,
    pub discrepancy: f64,
}

/// Both Chern estimates on the same mesh.
pub fn chern(p: &dyn ProjectorFamily, mesh: &KMesh) -> Result<ChernResult> {
    let value_int = chern_fhs(p, mesh)?;
    let value_float = chern_continuum(p, mesh)?;
    Ok(ChernResult { value_float, value_int, discrepancy: (value_float - value_int as f64).abs() })
}

/// `A_j = -i sum_a <phi_a, d_j phi_a>` by central differences; `None` where
/// the stencil touches a singular point.
#[derive(Clone, Debug)]
pub struct AbelianConnection {
    pub a: Vec<Option<[f64; 2]>>,
    pub max_imag: f64,
}

pub fn abelian_connection(frame: &Frame) -> AbelianConnection {
    let mesh = &frame.mesh;
    let inv = 1.0 / (2.0 * mesh.step);
    let mut max_imag: f64 = 0.0;
    let a = (0..mesh.len())
        .map(|idx| {
            let v = frame.vectors[idx].as_ref()?;
            let [r, l, u, d] = mesh.neighbors[idx];
            let comp = |f: usize, b: usize| -> Option<(f64, f64)> {
                let df = (frame.vectors[f].as_ref()? - frame.vectors[b].as_ref()?) * c(inv, 0.0);
                let z = (v.adjoint() * df).trace();
                Some((z.im, z.re.abs()))
            };
            let (a1, i1) = comp(r, l)?;
            let (a2, i2) = comp(u, d)?;
            max_imag = max_imag.max(i1).max(i2);
            Some([a1, a2])
        })
        .collect();
    AbelianConnection { a, max_imag }
}

/// Discrete `oint A` along a closed path of mesh indices: the sum of
/// `arg det <Phi(k_i), Phi(k_{i+1})>`.
pub fn loop_integral(frame: &Frame, path: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for q in 0..path.len() {
        let a = frame.vectors[path[q]].as_ref();
        let b = frame.vectors[path[(q + 1) % path.len()]].as_ref();
        match (a, b) {
            (Some(a), Some(b)) => total += (a.adjoint() * b).determinant().arg(),
            _ => return Err(WdError::InvalidInput("loop passes through a singular point".into())),
        }
    }
    Ok(total)
}

/// Counter-clockwise boundary of the index rectangle `lo..hi`.
pub fn rect_path(mesh: &KMesh, lo: [i64; 2], hi: [i64; 2]) -> Vec<usize> {
    let mut path = Vec::new();
    for i in lo[0]..hi[0] {
        path.push(mesh.index(i, lo[1]));
    }
    for j in lo[1]..hi[1] {
        path.push(mesh.index(hi[0], j));
    }
    for i in (lo[0] + 1..=hi[0]).rev() {
        path.push(mesh.index(i, hi[1]));
    }
    for j in (lo[1] + 1..=hi[1]).rev() {
        path.push(mesh.index(lo[0], j));
    }
    path
}

/// Region for Stokes checks, in mesh indices.
#[derive(Clone, Debug, PartialEq)]
pub enum StokesRegion {
    Torus,
    Rect { lo: [i64; 2], hi: [i64; 2] },
    Annulus { outer: ([i64; 2], [i64; 2]), inner: ([i64; 2], [i64; 2]) },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesReport {
    pub flux: f64,
    pub circulation: f64,
    /// For an annulus: circulation of the outer and inner loops.
    pub outer_circulation: f64,
    pub inner_circulation: f64,
    pub residual: f64,
}

/// `|integral of Omega over the region - oint A over its boundary|`.
pub fn stokes_residual(frame: &Frame, p: &dyn ProjectorFamily, region: &StokesRegion) -> Result<StokesReport> {
    let mesh = &frame.mesh;
    let field = berry_curvature(p, mesh)?;
    let n = mesh.n_per_side as i64;
    let rect = |lo: [i64; 2], hi: [i64; 2]| -> Result<(f64, f64)> {
        Ok((field.flux(lo, hi), loop_integral(frame, &rect_path(mesh, lo, hi))?))
    };
    let (flux, outer, inner) = match region {
        StokesRegion::Torus => {
            let (f, c) = rect([0, 0], [n, n])?;
            (f, c, 0.0)
        }
        StokesRegion::Rect { lo, hi } => {
            let (f, c) = rect(*lo, *hi)?;
            (f, c, 0.0)
        }
        StokesRegion::Annulus { outer, inner } => {
            let (fo, co) = rect(outer.0, outer.1)?;
            let (fi, ci) = rect(inner.0, inner.1)?;
            (fo - fi, co, ci)
        }
    };
    let circulation = outer - inner;
    Ok(StokesReport {
        flux,
        circulation,
        outer_circulation: outer,
        inner_circulation: inner,
        residual: (flux - circulation).abs(),
    })
}

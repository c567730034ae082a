//! Global Bloch frames on the two-dimensional cell: boundary skeleton,
//! radial extension by parallel transport, Kato-Nagy smoothing, Gram-Schmidt
//! and mollify-and-reproject.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Result, WdError};
use crate::kmesh::{boundary_loop, build_ray_fan, KMesh};
use crate::linalg::{self, c, eigh, frob, op_norm, polar, CMat, C64};
use crate::model::ProjectorFamily;
use crate::transport::{line_frame, steps_for, transport, LineFrame};
use crate::KPoint;

pub const TOL_ORTHONORMAL: f64 = 1e-8;
pub const TOL_SUBORDINATE: f64 = 1e-6;
/// Default seam radius for optional smoothing of the radial frame.
pub const DEFAULT_SEAM_RADIUS: f64 = 0.25;
/// Default whole-cell smoothing width.
pub const DEFAULT_SMOOTHING_WIDTH: f64 = 1.0;

/// Orthonormal `n x m` frames on the mesh; `None` at singular points.
#[derive(Clone, Debug)]
pub struct Frame {
    pub mesh: KMesh,
    pub vectors: Vec<Option<CMat>>,
    pub singular_points: Vec<usize>,
}

impl Frame {
    pub fn from_fn(mesh: &KMesh, f: impl Fn(KPoint) -> CMat + Sync) -> Frame {
        let vectors = mesh.points.par_iter().map(|&k| Some(f(k))).collect();
        Frame { mesh: mesh.clone(), vectors, singular_points: Vec::new() }
    }

    fn first(&self) -> &CMat {
        self.vectors.iter().flatten().next().expect("frame has no defined points")
    }

    pub fn dim(&self) -> usize {
        self.first().nrows()
    }

    pub fn rank(&self) -> usize {
        self.first().ncols()
    }

    pub fn singular_kpoints(&self) -> Vec<KPoint> {
        self.singular_points.iter().map(|&i| self.mesh.points[i]).collect()
    }

    /// Frame matrix with singular points replaced by zeros.
    pub fn filled(&self, idx: usize) -> CMat {
        match &self.vectors[idx] {
            Some(v) => v.clone(),
            None => CMat::zeros(self.dim(), self.rank()),
        }
    }

    /// Largest orthonormality and subordination residuals over defined points.
    pub fn residuals(&self, p: &dyn ProjectorFamily) -> Result<(f64, f64)> {
        let res: Result<Vec<(f64, f64)>> = self
            .vectors
            .par_iter()
            .zip(self.mesh.points.par_iter())
            .filter_map(|(v, &k)| v.as_ref().map(|v| (v, k)))
            .map(|(v, k)| {
                let pk = p.projector(k)?;
                Ok((linalg::orthonormality_error(v), frob(&(&pk * v - v))))
            })
            .collect();
        Ok(res?.into_iter().fold((0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1))))
    }

    /// Largest `|Phi(k) - Phi(k')|_F` over nearest-neighbour pairs with both
    /// points defined and `k` in `select`.
    pub fn max_increment(&self, select: impl Fn(usize) -> bool) -> f64 {
        let mut best: f64 = 0.0;
        for idx in 0..self.mesh.len() {
            if !select(idx) {
                continue;
            }
            let Some(a) = &self.vectors[idx] else { continue };
            for &nb in &self.mesh.neighbors[idx][..4] {
                if let Some(b) = &self.vectors[nb] {
                    best = best.max(frob(&(a - b)));
                }
            }
        }
        best
    }

    /// Columnar export: one row per (k-index, band, orbital).
    pub fn write_csv(&self, w: &mut impl Write, params: &[(String, f64)]) -> io::Result<()> {
        let ps: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        writeln!(
            w,
            "# N={} m={} n={} {}",
            self.mesh.n_per_side,
            self.rank(),
            self.dim(),
            ps.join(" ")
        )?;
        writeln!(w, "k_index,k1,k2,band,orbital,re,im")?;
        for (idx, v) in self.vectors.iter().enumerate() {
            let Some(v) = v else { continue };
            let k = self.mesh.points[idx];
            for a in 0..v.ncols() {
                for o in 0..v.nrows() {
                    let z = v[(o, a)];
                    writeln!(w, "{idx},{},{},{a},{o},{:e},{:e}", k[0], k[1], z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Boundary frame built from two periodic line frames through `v1`, plus
/// the independently built opposite edges used to measure (V) and (E).
#[derive(Clone, Debug)]
pub struct Skeleton {
    /// Edge `k2 = -1/2`, base `v1`, direction `(1, 0)`.
    pub bottom: LineFrame,
    /// Edge `k1 = -1/2`, base `v1`, direction `(0, 1)`.
    pub left: LineFrame,
    /// Frames along `boundary_loop`, aligned point by point.
    pub loop_frames: Vec<CMat>,
    /// Largest `|Phi(v_i) - Phi(v1)|_F` for `i = 2, 3, 4`.
    pub vertex_residual: f64,
    /// Largest mismatch between opposite edges built independently.
    pub edge_residual: f64,
}

impl Skeleton {
    /// Frame at a boundary point, which need not be a mesh point.
    pub fn eval(&self, p: &dyn ProjectorFamily, b: KPoint) -> Result<CMat> {
        if (b[1].abs() - 0.5).abs() < 1e-12 {
            self.bottom.eval(p, b[0] + 0.5)
        } else if (b[0].abs() - 0.5).abs() < 1e-12 {
            self.left.eval(p, b[1] + 0.5)
        } else {
            Err(WdError::InvalidInput(format!("k = {b:?} not on the cell boundary")))
        }
    }
}

pub fn skeleton_frame(p: &dyn ProjectorFamily, mesh: &KMesh, steps_per_unit: usize) -> Result<Skeleton> {
    let n = mesh.n_per_side;
    let v1 = [-0.5, -0.5];
    let phi0 = p.basis(v1)?;
    let bottom = line_frame(p, [1.0, 0.0], v1, &phi0, n, steps_per_unit)?;
    let left = line_frame(p, [0.0, 1.0], v1, &phi0, n, steps_per_unit)?;
    let top = line_frame(p, [1.0, 0.0], [-0.5, 0.5], &left.samples[n], n, steps_per_unit)?;
    let right = line_frame(p, [0.0, 1.0], [0.5, -0.5], &bottom.samples[n], n, steps_per_unit)?;
    let vertex_residual = [&bottom.samples[n], &left.samples[n], &top.samples[n], &right.samples[n]]
        .iter()
        .map(|v| frob(&(*v - &phi0)))
        .fold(0.0, f64::max);
    let mut edge_residual: f64 = 0.0;
    for j in 0..=n {
        edge_residual = edge_residual
            .max(frob(&(&top.samples[j] - &bottom.samples[j])))
            .max(frob(&(&right.samples[j] - &left.samples[j])));
    }
    let mut loop_frames = Vec::with_capacity(4 * n);
    loop_frames.extend(bottom.samples[..n].iter().cloned());
    loop_frames.extend(left.samples[..n].iter().cloned());
    loop_frames.extend((1..=n).rev().map(|j| bottom.samples[j].clone()));
    loop_frames.extend((1..=n).rev().map(|j| left.samples[j].clone()));
    debug_assert_eq!(loop_frames.len(), boundary_loop(mesh).len());
    Ok(Skeleton { bottom, left, loop_frames, vertex_residual, edge_residual })
}

/// Extends the boundary frame to every mesh point except `k = 0` by
/// transporting inward along exact rays from the boundary intersection.
pub fn radial_extension(
    p: &dyn ProjectorFamily,
    skeleton: &Skeleton,
    mesh: &KMesh,
    steps_per_unit: usize,
) -> Result<Frame> {
    let fan = build_ray_fan(mesh, steps_per_unit);
    let per_ray: Result<Vec<Vec<(usize, CMat)>>> = fan
        .rays
        .par_iter()
        .map(|ray| {
            let mut cur_k = ray.boundary;
            let mut cur = skeleton.eval(p, cur_k)?;
            let mut out = Vec::with_capacity(ray.members.len());
            for &idx in &ray.members {
                let k = mesh.points[idx];
                if k != cur_k {
                    let t = transport(p, k, cur_k, steps_for(k, cur_k, steps_per_unit))?;
                    cur = t.matrix * cur;
                    cur_k = k;
                }
                out.push((idx, cur.clone()));
            }
            Ok(out)
        })
        .collect();
    let mut vectors = vec![None; mesh.len()];
    for (idx, v) in per_ray?.into_iter().flatten() {
        vectors[idx] = Some(v);
    }
    Ok(Frame { mesh: mesh.clone(), vectors, singular_points: vec![mesh.center()] })
}

/// Kato-Nagy unitary `W` with `W Pk W* = Pk0`.
pub fn kato_nagy(pk: &CMat, pk0: &CMat) -> Result<CMat> {
    let n = pk.nrows();
    let id = linalg::identity(n);
    let d = pk0 - pk;
    let (vals, _) = eigh(&d);
    let dist = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if dist >= 1.0 - 1e-6 {
        return Err(WdError::ProjectorsTooFar(dist));
    }
    let root = linalg::herm_fn(&(&id - &d * &d), |x| c(1.0 / x.sqrt(), 0.0));
    Ok(root * (pk0 * pk + (&id - pk0) * (&id - pk)))
}

/// Torus distance between two k-points in lattice coordinates.
pub fn torus_distance(a: KPoint, b: KPoint) -> f64 {
    let w = |x: f64| x - x.round();
    (w(a[0] - b[0]).powi(2) + w(a[1] - b[1]).powi(2)).sqrt()
}

/// Set of mesh points to smooth, with the chart centre `k0` used to map
/// fibres onto `Ran P(k0)`.
#[derive(Clone, Debug)]
pub struct Region {
    pub mask: Vec<bool>,
    pub center: usize,
}

impl Region {
    pub fn whole(mesh: &KMesh, center: usize) -> Region {
        Region { mask: vec![true; mesh.len()], center }
    }

    /// Points with `r_in <= |k - k_c| <= r_out` (torus distance).
    pub fn annulus(mesh: &KMesh, center: usize, r_in: f64, r_out: f64) -> Region {
        let kc = mesh.points[center];
        let mask = mesh
            .points
            .iter()
            .map(|&k| {
                let r = torus_distance(k, kc);
                r >= r_in && r <= r_out
            })
            .collect();
        Region { mask, center }
    }

    pub fn disk(mesh: &KMesh, center: usize, radius: f64) -> Region {
        Self::annulus(mesh, center, 0.0, radius)
    }
}

/// `C^inf` step: 0 for `t <= 0`, 1 for `t >= 1`.
fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / t).exp();
        let b = (-1.0 / (1.0 - t)).exp();
        a / (a + b)
    }
}

/// Normalized bump kernel `exp(-1/(1 - r^2/w^2))` on the mesh, with periodic
/// images folded in. Returns `(di, dj, weight)` offsets.
pub fn bump_kernel(n: usize, width: f64) -> Vec<(usize, usize, f64)> {
    let h = 1.0 / n as f64;
    let mut acc = vec![0.0; n * n];
    let reach = (width / h).ceil() as i64;
    for a in -reach..=reach {
        for b in -reach..=reach {
            let r2 = ((a as f64 * h).powi(2) + (b as f64 * h).powi(2)) / (width * width);
            if r2 < 1.0 {
                let i = a.rem_euclid(n as i64) as usize;
                let j = b.rem_euclid(n as i64) as usize;
                acc[i * n + j] += (-1.0 / (1.0 - r2)).exp();
            }
        }
    }
    let total: f64 = acc.iter().sum();
    acc.iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(idx, w)| (idx / n, idx % n, w / total))
        .collect()
}

/// Periodic convolution of a matrix field with a kernel from `bump_kernel`.
fn convolve(mesh: &KMesh, field: &[CMat], kernel: &[(usize, usize, f64)]) -> Vec<CMat> {
    let n = mesh.n_per_side;
    (0..mesh.len())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = mesh.coords(idx);
            let mut acc = CMat::zeros(field[0].nrows(), field[0].ncols());
            for &(di, dj, w) in kernel {
                let src = ((i + n - di) % n) * n + (j + n - dj) % n;
                acc += &field[src] * c(w, 0.0);
            }
            acc
        })
        .collect()
}

/// Kato-Nagy local smoothing: map the frame into `Ran P(k0)`, replace
/// `Psi` by `rho * (chi Psi) + (1 - rho * chi) Psi`, map back and correct by
/// `G^{-1/2}`. Points outside the region are left untouched.
pub fn local_smooth(frame: &Frame, p: &dyn ProjectorFamily, region: &Region, kernel_width: f64) -> Result<Frame> {
    let mesh = &frame.mesh;
    let k0 = mesh.points[region.center];
    let p0 = p.projector(k0)?;
    let b0 = p.basis(k0)?;
    let m = b0.ncols();
    let inside: Vec<usize> = (0..mesh.len()).filter(|&i| region.mask[i]).collect();
    let ws: Result<Vec<CMat>> = inside
        .par_iter()
        .map(|&i| kato_nagy(&p.projector(mesh.points[i])?, &p0))
        .collect();
    let ws = ws?;
    let mut w_at: Vec<Option<CMat>> = vec![None; mesh.len()];
    for (&i, w) in inside.iter().zip(ws) {
        w_at[i] = Some(w);
    }
    let outside: Vec<KPoint> = (0..mesh.len()).filter(|&i| !region.mask[i]).map(|i| mesh.points[i]).collect();
    let chi: Vec<f64> = (0..mesh.len())
        .into_par_iter()
        .map(|i| {
            if !region.mask[i] {
                return 0.0;
            }
            if outside.is_empty() {
                return 1.0;
            }
            let d = outside
                .iter()
                .map(|&q| torus_distance(mesh.points[i], q))
                .fold(f64::INFINITY, f64::min);
            smooth_step((d - kernel_width) / kernel_width)
        })
        .collect();
    let psi: Vec<CMat> = (0..mesh.len())
        .map(|i| match (&w_at[i], &frame.vectors[i]) {
            (Some(w), Some(v)) => b0.adjoint() * w * v * c(chi[i], 0.0),
            _ => CMat::zeros(m, m),
        })
        .collect();
    let kernel = bump_kernel(mesh.n_per_side, kernel_width);
    let smooth = convolve(mesh, &psi, &kernel);
    // rho * chi, so that rho * (chi Psi) + (1 - rho * chi) Psi keeps unit mass.
    let chi_field: Vec<CMat> = chi.iter().map(|&x| CMat::from_element(1, 1, c(x, 0.0))).collect();
    let chi_s: Vec<f64> = convolve(mesh, &chi_field, &kernel).iter().map(|x| x[(0, 0)].re).collect();
    let updated: Result<Vec<(usize, Option<CMat>)>> = inside
        .par_iter()
        .map(|&i| {
            let w = w_at[i].as_ref().unwrap();
            let own = frame.vectors[i].as_ref();
            if chi_s[i] == 0.0 {
                return Ok((i, own.cloned()));
            }
            if own.is_none() && chi_s[i] < 1.0 - 1e-12 {
                return Ok((i, None));
            }
            let mut cand = smooth[i].clone();
            if let Some(v) = own {
                cand += b0.adjoint() * w * v * c(1.0 - chi_s[i], 0.0);
            }
            let g = cand.adjoint() * &cand;
            let dev = op_norm(&(&g - linalg::identity(m)));
            if dev > 0.5 {
                return Err(WdError::SmoothingGramSingular { index: i, dev });
            }
            let (u, _) = polar(&cand);
            Ok((i, Some(w.adjoint() * &b0 * u)))
        })
        .collect();
    let mut out = frame.clone();
    for (i, v) in updated? {
        out.vectors[i] = v;
    }
    out.singular_points.retain(|&i| out.vectors[i].is_none());
    Ok(out)
}

/// Gram-Schmidt through the determinant formula
/// `e_j = D_j / sqrt(G_{j-1} G_j)`, where `G_j` is the `j`-th leading Gram
/// determinant and `D_j` the formal determinant whose last row holds the
/// vectors `v_1..v_j`.
pub fn gram_schmidt(vectors: &CMat) -> Result<CMat> {
    let (n, m) = vectors.shape();
    let gram = vectors.adjoint() * vectors;
    let mut dets = vec![1.0];
    for j in 1..=m {
        let g = gram.view((0, 0), (j, j)).into_owned().determinant().re;
        if g.abs() <= 1e-12 {
            return Err(WdError::NearDependent(g));
        }
        dets.push(g);
    }
    let mut out = CMat::zeros(n, m);
    for j in 1..=m {
        let mut d = nalgebra::DVector::<C64>::zeros(n);
        for col in 0..j {
            let cofactor = if j == 1 {
                c(1.0, 0.0)
            } else {
                let mut minor = CMat::zeros(j - 1, j - 1);
                for r in 0..j - 1 {
                    let mut cc = 0;
                    for q in 0..j {
                        if q != col {
                            minor[(r, cc)] = gram[(r, q)];
                            cc += 1;
                        }
                    }
                }
                minor.determinant()
            };
            let sign = if (j - 1 + col) % 2 == 0 { 1.0 } else { -1.0 };
            d += vectors.column(col) * (cofactor * sign);
        }
        let scale = 1.0 / (dets[j - 1] * dets[j]).sqrt();
        out.set_column(j - 1, &(d * c(scale, 0.0)));
    }
    Ok(out)
}

/// Classical sequential Gram-Schmidt.
pub fn gram_schmidt_sequential(vectors: &CMat) -> Result<CMat> {
    let (n, m) = vectors.shape();
    let mut out = CMat::zeros(n, m);
    for j in 0..m {
        let mut v = vectors.column(j).into_owned();
        for i in 0..j {
            let e = out.column(i).into_owned();
            let proj = e.dotc(&v);
            v -= e * proj;
        }
        let norm = v.norm();
        if norm <= 1e-12 {
            return Err(WdError::NearDependent(norm));
        }
        out.set_column(j, &(v / c(norm, 0.0)));
    }
    Ok(out)
}

/// Convolves the frame with a bump kernel of the given width, projects onto
/// `Ran P(k)` and takes the polar factor. Zero-filled singular points take
/// part in the convolution as zeros.
///
/// Fails if a mollified matrix is rank-deficient, or if the reprojected
/// frame winds around a plaquette, which marks a zero of the mollified
/// field between mesh points.
pub fn mollify_reproject(frame: &Frame, p: &dyn ProjectorFamily, width: f64) -> Result<Frame> {
    let mesh = &frame.mesh;
    let field: Vec<CMat> = (0..mesh.len()).map(|i| frame.filled(i)).collect();
    let kernel = bump_kernel(mesh.n_per_side, width);
    let smooth = convolve(mesh, &field, &kernel);
    let proj: Result<Vec<(CMat, f64)>> = smooth
        .par_iter()
        .zip(mesh.points.par_iter())
        .map(|(a, &k)| Ok(polar(&(p.projector(k)? * a))))
        .collect();
    let proj = proj?;
    for (i, (_, s)) in proj.iter().enumerate() {
        if *s < 1e-8 {
            return Err(WdError::ReprojectionSingular { index: i, sigma: *s });
        }
    }
    let n = mesh.n_per_side as i64;
    let link = |a: usize, b: usize| (proj[a].0.adjoint() * &proj[b].0).determinant().arg();
    for idx in 0..mesh.len() {
        let (i, j) = mesh.coords(idx);
        let (i, j) = (i as i64, j as i64);
        let corners = [
            mesh.index(i, j),
            mesh.index((i + 1) % n, j),
            mesh.index((i + 1) % n, (j + 1) % n),
            mesh.index(i, (j + 1) % n),
        ];
        let total: f64 = (0..4).map(|q| link(corners[q], corners[(q + 1) % 4])).sum();
        if total.abs() > std::f64::consts::PI {
            let sigma = corners.iter().map(|&q| proj[q].1).fold(f64::INFINITY, f64::min);
            return Err(WdError::ReprojectionSingular { index: idx, sigma });
        }
    }
    Ok(Frame {
        mesh: mesh.clone(),
        vectors: proj.into_iter().map(|(u, _)| Some(u)).collect(),
        singular_points: Vec::new(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientBoundReport {
    /// Largest `|k| |grad Phi(k)|` over included points.
    pub sup_weighted: f64,
    /// Largest unweighted `|grad Phi(k)|` over included points.
    pub sup_gradient: f64,
    /// `(bin centre radius, max |grad Phi|)` over radial bins of width `2/N`.
    pub per_radius_profile: Vec<(f64, f64)>,
}

/// Finite-difference gradient norms `|grad Phi|_F` in lattice coordinates,
/// central where possible and one-sided next to singular points.
pub fn gradient_norms(frame: &Frame) -> Vec<Option<f64>> {
    let mesh = &frame.mesh;
    let h = mesh.step;
    (0..mesh.len())
        .map(|idx| {
            let v = frame.vectors[idx].as_ref()?;
            let [r, l, u, d] = mesh.neighbors[idx];
            let partial = |fwd: usize, bwd: usize| -> Option<f64> {
                match (&frame.vectors[fwd], &frame.vectors[bwd]) {
                    (Some(a), Some(b)) => Some(frob(&(a - b)) / (2.0 * h)),
                    (Some(a), None) => Some(frob(&(a - v)) / h),
                    (None, Some(b)) => Some(frob(&(v - b)) / h),
                    (None, None) => None,
                }
            };
            let g1 = partial(r, l)?;
            let g2 = partial(u, d)?;
            Some((g1 * g1 + g2 * g2).sqrt())
        })
        .collect()
}

pub fn gradient_bound(frame: &Frame) -> GradientBoundReport {
    let mesh = &frame.mesh;
    let grads = gradient_norms(frame);
    let mut excluded = vec![false; mesh.len()];
    for &s in &frame.singular_points {
        excluded[s] = true;
        for &nb in &mesh.neighbors[s] {
            excluded[nb] = true;
        }
    }
    let bin = 2.0 * mesh.step;
    let mut sup_weighted: f64 = 0.0;
    let mut sup_gradient: f64 = 0.0;
    let mut profile: Vec<f64> = Vec::new();
    for idx in 0..mesh.len() {
        let Some(g) = grads[idx] else { continue };
        if excluded[idx] {
            continue;
        }
        let k = mesh.points[idx];
        let r = (k[0] * k[0] + k[1] * k[1]).sqrt();
        sup_weighted = sup_weighted.max(r * g);
        sup_gradient = sup_gradient.max(g);
        let b = (r / bin) as usize;
        if profile.len() <= b {
            profile.resize(b + 1, 0.0);
        }
        profile[b] = profile[b].max(g);
    }
    let per_radius_profile = profile
        .into_iter()
        .enumerate()
        .map(|(b, g)| ((b as f64 + 0.5) * bin, g))
        .collect();
    GradientBoundReport { sup_weighted, sup_gradient, per_radius_profile }
}

/// Options for the standard frame pipeline.
#[derive(Clone, Debug)]
pub struct FrameOptions {
    pub steps_per_unit: usize,
    /// Whole-cell Kato-Nagy smoothing width; `None` skips smoothing.
    pub smoothing_width: Option<f64>,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            steps_per_unit: crate::transport::DEFAULT_STEPS_PER_UNIT,
            smoothing_width: Some(DEFAULT_SMOOTHING_WIDTH),
        }
    }
}

/// Output of skeleton, radial extension and optional smoothing.
#[derive(Clone, Debug)]
pub struct FramePipeline {
    pub skeleton: Skeleton,
    pub radial: Frame,
    pub smoothed: Option<Frame>,
    /// Why whole-cell smoothing was refused, if it was.
    pub smoothing_error: Option<WdError>,
}

impl FramePipeline {
    /// Smoothed frame when available, otherwise the radial frame.
    pub fn best(&self) -> &Frame {
        self.smoothed.as_ref().unwrap_or(&self.radial)
    }
}

/// Skeleton, radial extension, then an attempt at whole-cell smoothing
/// centred at `k = 0`. Smoothing is refused when the family cannot be
/// charted onto a single fibre, which is the case for Chern-nontrivial
/// families.
pub fn build_frames(p: &dyn ProjectorFamily, mesh: &KMesh, opts: &FrameOptions) -> Result<FramePipeline> {
    let skeleton = skeleton_frame(p, mesh, opts.steps_per_unit)?;
    let radial = radial_extension(p, &skeleton, mesh, opts.steps_per_unit)?;
    let (smoothed, smoothing_error) = match opts.smoothing_width {
        None => (None, None),
        Some(w) => match local_smooth(&radial, p, &Region::whole(mesh, mesh.center()), w) {
            Ok(f) => (Some(f), None),
            Err(e @ (WdError::SmoothingGramSingular { .. } | WdError::ProjectorsTooFar(_))) => (None, Some(e)),
            Err(e) => return Err(e),
        },
    };
    Ok(FramePipeline { skeleton, radial, smoothed, smoothing_error })
}

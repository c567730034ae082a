//! Uniform meshes on the Brillouin cell `[-1/2, 1/2)^2`, its boundary loop,
//! and the fan of rays used by the radial frame extension.

use crate::error::{Result, WdError};
use crate::KPoint;

/// `N x N` mesh with points `(i/N - 1/2, j/N - 1/2)`, row-major in `(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KMesh {
    pub n_per_side: usize,
    pub points: Vec<KPoint>,
    pub step: f64,
    /// Periodic neighbours `[i+1, i-1, j+1, j-1]` of every point.
    pub neighbors: Vec<[usize; 4]>,
}

pub fn build_mesh(n: usize) -> Result<KMesh> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(WdError::OddMeshSize(n));
    }
    let step = 1.0 / n as f64;
    let mut points = Vec::with_capacity(n * n);
    let mut neighbors = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            points.push([i as f64 * step - 0.5, j as f64 * step - 0.5]);
            neighbors.push([
                ((i + 1) % n) * n + j,
                ((i + n - 1) % n) * n + j,
                i * n + (j + 1) % n,
                i * n + (j + n - 1) % n,
            ]);
        }
    }
    Ok(KMesh { n_per_side: n, points, step, neighbors })
}

impl KMesh {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of `(i, j)` with periodic wrap.
    pub fn index(&self, i: i64, j: i64) -> usize {
        let n = self.n_per_side as i64;
        (i.rem_euclid(n) * n + j.rem_euclid(n)) as usize
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.n_per_side, idx % self.n_per_side)
    }

    /// Index of `k = 0`.
    pub fn center(&self) -> usize {
        let h = (self.n_per_side / 2) as i64;
        self.index(h, h)
    }

    /// Mesh index of a k-point lying on the mesh modulo the dual lattice.
    pub fn locate(&self, k: KPoint) -> Option<usize> {
        let n = self.n_per_side as f64;
        let i = (k[0] + 0.5) * n;
        let j = (k[1] + 0.5) * n;
        if (i - i.round()).abs() > 1e-9 || (j - j.round()).abs() > 1e-9 {
            return None;
        }
        Some(self.index(i.round() as i64, j.round() as i64))
    }

    /// Offset of a point from the centre, in mesh steps, in `[-N/2, N/2)`.
    pub fn offset(&self, idx: usize) -> [i64; 2] {
        let (i, j) = self.coords(idx);
        let h = (self.n_per_side / 2) as i64;
        [i as i64 - h, j as i64 - h]
    }
}

/// Vertices `v1..v4` of the unit cell, counter-clockwise from `(-1/2, -1/2)`.
pub const VERTICES: [KPoint; 4] = [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]];

/// The `4N` points of the cell boundary traversed along `E1, E2, E3, E4`,
/// starting at `v1`. The loop closes back onto its first point.
pub fn boundary_loop(mesh: &KMesh) -> Vec<KPoint> {
    let n = mesh.n_per_side;
    let s = mesh.step;
    let mut pts = Vec::with_capacity(4 * n);
    for t in 0..n {
        pts.push([-0.5 + t as f64 * s, -0.5]);
    }
    for t in 0..n {
        pts.push([0.5, -0.5 + t as f64 * s]);
    }
    for t in 0..n {
        pts.push([0.5 - t as f64 * s, 0.5]);
    }
    for t in 0..n {
        pts.push([-0.5, 0.5 - t as f64 * s]);
    }
    pts
}

/// A ray from the origin through a primitive mesh direction.
#[derive(Clone, Debug, PartialEq)]
pub struct Ray {
    /// Primitive integer direction in mesh steps.
    pub direction: [i64; 2],
    /// Intersection with the cell boundary.
    pub boundary: KPoint,
    /// Mesh indices on the ray, ordered from the boundary inward.
    pub members: Vec<usize>,
}

/// Partition of the non-origin mesh points into rays from `k = 0`.
///
/// Each point lies exactly on the ray of its reduced offset, so every
/// sample is at distance zero from its assigned ray.
#[derive(Clone, Debug, PartialEq)]
pub struct RayFan {
    pub origin: KPoint,
    pub rays: Vec<Ray>,
    /// Ray index of every mesh point; `None` for the origin.
    pub assignment: Vec<Option<usize>>,
    pub steps_per_unit: usize,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

pub fn build_ray_fan(mesh: &KMesh, steps_per_unit: usize) -> RayFan {
    let n = mesh.n_per_side as i64;
    let mut dirs: Vec<[i64; 2]> = Vec::new();
    for idx in 0..mesh.len() {
        let o = mesh.offset(idx);
        if o == [0, 0] {
            continue;
        }
        let g = gcd(o[0], o[1]);
        let d = [o[0] / g, o[1] / g];
        if !dirs.contains(&d) {
            dirs.push(d);
        }
    }
    let angle = |d: &[i64; 2]| (d[1] as f64).atan2(d[0] as f64);
    dirs.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
    let mut assignment = vec![None; mesh.len()];
    let rays = dirs
        .iter()
        .enumerate()
        .map(|(r, &d)| {
            let extent = d[0].abs().max(d[1].abs());
            let scale = 0.5 / extent as f64;
            let boundary = [d[0] as f64 * scale, d[1] as f64 * scale];
            let mut members = Vec::new();
            let mut t = n / 2 / extent;
            while t >= 1 {
                let p = [t * d[0], t * d[1]];
                if p.iter().all(|&x| x >= -n / 2 && x < n / 2) {
                    let idx = mesh.index(p[0] + n / 2, p[1] + n / 2);
                    assignment[idx] = Some(r);
                    members.push(idx);
                }
                t -= 1;
            }
            Ray { direction: d, boundary, members }
        })
        .collect();
    RayFan { origin: [0.0, 0.0], rays, assignment, steps_per_unit }
}

impl RayFan {
    pub fn boundary_samples(&self) -> Vec<KPoint> {
        self.rays.iter().map(|r| r.boundary).collect()
    }
}

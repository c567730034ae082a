//! Tight-binding Bloch Hamiltonians and their occupied-band projector families.

use std::f64::consts::PI;
use std::ops::Range;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rayon::prelude::*;

use crate::error::{Result, WdError};
use crate::linalg::{self, c, columns, eigh, herm_fn, CMat, C64};
use crate::KPoint;

/// Hermiticity tolerance on hopping data, relative Frobenius norm.
const HERMITICITY_TOL: f64 = 1e-12;

/// Default absolute gap tolerance in hopping units.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

/// Periodic-gauge tight-binding model `H(k) = sum_R exp(2 pi i k.R) T_R`,
/// with `k` in lattice coordinates.
#[derive(Clone, Debug)]
pub struct BlochModel {
    pub name: String,
    pub dim: usize,
    pub lattice_basis: [[f64; 2]; 2],
    pub hoppings: Vec<([i64; 2], CMat)>,
    pub occupied: Range<usize>,
    pub params: Vec<(String, f64)>,
}

impl BlochModel {
    /// Builds a model from hopping matrices, merging repeated lattice vectors
    /// and validating `T_{-R} = T_R*`.
    pub fn from_hoppings(
        name: &str,
        dim: usize,
        lattice_basis: [[f64; 2]; 2],
        hoppings: Vec<([i64; 2], CMat)>,
        occupied: Range<usize>,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(WdError::InvalidInput(format!("dimension {dim} < 2")));
        }
        let mut merged: Vec<([i64; 2], CMat)> = Vec::new();
        for (r, t) in hoppings {
            if t.nrows() != dim || t.ncols() != dim {
                return Err(WdError::InvalidInput(format!(
                    "hopping at R = {r:?} has shape {}x{}, expected {dim}x{dim}",
                    t.nrows(),
                    t.ncols()
                )));
            }
            match merged.iter_mut().find(|(q, _)| *q == r) {
                Some((_, acc)) => *acc += t,
                None => merged.push((r, t)),
            }
        }
        merged.sort_by_key(|(r, _)| *r);
        let scale: f64 = merged.iter().map(|(_, t)| linalg::frob(t)).sum::<f64>().max(1.0);
        for (r, t) in &merged {
            let minus = [-r[0], -r[1]];
            let partner = merged.iter().find(|(q, _)| *q == minus).map(|(_, t)| t);
            let resid = match partner {
                Some(tm) => linalg::frob(&(tm - t.adjoint())),
                None => linalg::frob(t),
            };
            if resid > HERMITICITY_TOL * scale {
                return Err(WdError::InvalidInput(format!(
                    "hoppings not Hermitian: |T(-R) - T(R)*| = {resid:.3e} at R = {r:?}"
                )));
            }
        }
        let model = BlochModel {
            name: name.to_string(),
            dim,
            lattice_basis,
            hoppings: merged,
            occupied: 0..1,
            params: Vec::new(),
        };
        model.with_occupied(occupied)
    }

    /// Replaces the occupied window; requires `1 <= m < dim`.
    pub fn with_occupied(mut self, occupied: Range<usize>) -> Result<Self> {
        if occupied.is_empty() || occupied.end > self.dim || occupied.len() >= self.dim {
            return Err(WdError::InvalidInput(format!(
                "occupied window {occupied:?} invalid for dimension {}",
                self.dim
            )));
        }
        self.occupied = occupied;
        Ok(self)
    }

    pub fn with_params(mut self, params: &[(&str, f64)]) -> Self {
        self.params = params.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        self
    }

    /// k-independent Hamiltonian.
    pub fn constant(h0: CMat, occupied: Range<usize>) -> Result<Self> {
        let dim = h0.nrows();
        Self::from_hoppings("constant", dim, SQUARE, vec![([0, 0], h0)], occupied)
    }

    pub fn rank(&self) -> usize {
        self.occupied.len()
    }

    pub fn hamiltonian(&self, k: KPoint) -> CMat {
        let mut h = CMat::zeros(self.dim, self.dim);
        for (r, t) in &self.hoppings {
            let ph = C64::from_polar(1.0, 2.0 * PI * (k[0] * r[0] as f64 + k[1] * r[1] as f64));
            h += t * ph;
        }
        h
    }

    /// Directional derivative `dH/dk . d`.
    pub fn hamiltonian_derivative(&self, k: KPoint, d: KPoint) -> CMat {
        let mut h = CMat::zeros(self.dim, self.dim);
        for (r, t) in &self.hoppings {
            let rd = d[0] * r[0] as f64 + d[1] * r[1] as f64;
            if rd == 0.0 {
                continue;
            }
            let ph = C64::from_polar(1.0, 2.0 * PI * (k[0] * r[0] as f64 + k[1] * r[1] as f64));
            h += t * (ph * c(0.0, 2.0 * PI * rd));
        }
        h
    }

    /// Orbital-space direct sum; the occupied windows are not merged and the
    /// caller sets the combined window.
    pub fn direct_sum(&self, other: &BlochModel, occupied: Range<usize>) -> Result<Self> {
        let n = self.dim + other.dim;
        let mut hops = Vec::new();
        for (r, t) in &self.hoppings {
            let mut big = CMat::zeros(n, n);
            big.view_mut((0, 0), (self.dim, self.dim)).copy_from(t);
            hops.push((*r, big));
        }
        for (r, t) in &other.hoppings {
            let mut big = CMat::zeros(n, n);
            big.view_mut((self.dim, self.dim), (other.dim, other.dim)).copy_from(t);
            hops.push((*r, big));
        }
        let name = format!("{}+{}", self.name, other.name);
        Self::from_hoppings(&name, n, self.lattice_basis, hops, occupied)
    }

    /// Conjugates every hopping by a fixed unitary: `T_R -> U T_R U*`.
    pub fn rotated(&self, u: &CMat) -> Result<Self> {
        let hops = self
            .hoppings
            .iter()
            .map(|(r, t)| (*r, u * t * u.adjoint()))
            .collect();
        let mut m = Self::from_hoppings(&self.name, self.dim, self.lattice_basis, hops, self.occupied.clone())?;
        m.params = self.params.clone();
        Ok(m)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

pub const SQUARE: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

pub fn hexagonal() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]]
}

/// Haldane model on the honeycomb lattice; orbital 0 is the A site.
///
/// Nearest-neighbour bonds connect A in cell 0 to B in cells (1,1), (0,1),
/// (1,0). Second-neighbour hoppings on A carry `exp(-i phi)` along
/// (1,0), (-1,1), (0,-1); B carries the conjugate phase.
pub fn build_haldane(t1: f64, t2: f64, phi: f64, m: f64) -> Result<BlochModel> {
    if t1 == 0.0 {
        return Err(WdError::InvalidInput("Haldane model requires t1 != 0".into()));
    }
    let mut hops: Vec<([i64; 2], CMat)> = Vec::new();
    let mut add = |r: [i64; 2], i: usize, j: usize, v: C64| {
        let mut t = CMat::zeros(2, 2);
        t[(i, j)] = v;
        hops.push((r, t.clone()));
        hops.push(([-r[0], -r[1]], t.adjoint()));
    };
    for r in [[1, 1], [0, 1], [1, 0]] {
        add(r, 0, 1, c(t1, 0.0));
    }
    for r in [[1, 0], [-1, 1], [0, -1]] {
        add(r, 0, 0, C64::from_polar(t2, -phi));
        add(r, 1, 1, C64::from_polar(t2, phi));
    }
    let mut onsite = CMat::zeros(2, 2);
    onsite[(0, 0)] = c(m, 0.0);
    onsite[(1, 1)] = c(-m, 0.0);
    hops.push(([0, 0], onsite));
    Ok(
        BlochModel::from_hoppings("haldane", 2, hexagonal(), hops, 0..1)?
            .with_params(&[("t1", t1), ("t2", t2), ("phi", phi), ("M", m)]),
    )
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Harper model with flux `p/q` per plaquette in a `q x 1` magnetic cell.
pub fn build_hofstadter(p: i64, q: i64) -> Result<BlochModel> {
    if q < 2 || gcd(p, q) != 1 {
        return Err(WdError::NonCoprimeFlux { p, q });
    }
    let n = q as usize;
    let mut hops: Vec<([i64; 2], CMat)> = Vec::new();
    let mut intra = CMat::zeros(n, n);
    for j in 0..n - 1 {
        intra[(j, j + 1)] = c(-1.0, 0.0);
        intra[(j + 1, j)] = c(-1.0, 0.0);
    }
    hops.push(([0, 0], intra));
    let mut right = CMat::zeros(n, n);
    right[(n - 1, 0)] = c(-1.0, 0.0);
    hops.push(([-1, 0], right.adjoint()));
    hops.push(([1, 0], right));
    let mut up = CMat::zeros(n, n);
    for j in 0..n {
        up[(j, j)] = -C64::from_polar(1.0, -2.0 * PI * (j as f64) * (p as f64) / (q as f64));
    }
    hops.push(([0, -1], up.adjoint()));
    hops.push(([0, 1], up));
    Ok(
        BlochModel::from_hoppings("hofstadter", n, [[q as f64, 0.0], [0.0, 1.0]], hops, 0..1)?
            .with_params(&[("p", p as f64), ("q", q as f64)]),
    )
}

/// Parses a hopping table, one `l1 l2 i j re im` row per entry; `#` starts a
/// comment. Dimension is one plus the largest orbital index.
pub fn parse_matrixfile(text: &str, occupied: Range<usize>) -> Result<BlochModel> {
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || WdError::InvalidInput(format!("matrix file line {}: expected 'l1 l2 i j re im'", lineno + 1));
        if f.len() != 6 {
            return Err(bad());
        }
        let l1: i64 = f[0].parse().map_err(|_| bad())?;
        let l2: i64 = f[1].parse().map_err(|_| bad())?;
        let i: usize = f[2].parse().map_err(|_| bad())?;
        let j: usize = f[3].parse().map_err(|_| bad())?;
        let re: f64 = f[4].parse().map_err(|_| bad())?;
        let im: f64 = f[5].parse().map_err(|_| bad())?;
        rows.push(([l1, l2], i, j, c(re, im)));
    }
    let dim = rows.iter().map(|r| r.1.max(r.2) + 1).max().unwrap_or(0);
    let mut hops = Vec::new();
    for (r, i, j, v) in rows {
        let mut t = CMat::zeros(dim, dim);
        t[(i, j)] = v;
        hops.push((r, t));
    }
    BlochModel::from_hoppings("matrixfile", dim, SQUARE, hops, occupied)
}

/// Gap between the occupied window and the rest of the spectrum.
fn window_gap(vals: &[f64], occ: &Range<usize>) -> f64 {
    let mut gap = f64::INFINITY;
    if occ.start > 0 {
        gap = gap.min(vals[occ.start] - vals[occ.start - 1]);
    }
    if occ.end < vals.len() {
        gap = gap.min(vals[occ.end] - vals[occ.end - 1]);
    }
    gap
}

/// Occupied projector `P(k)`; fails if the local gap is below `gap_tol`.
pub fn spectral_projector(model: &BlochModel, k: KPoint, gap_tol: f64) -> Result<CMat> {
    let (vals, vecs) = eigh(&model.hamiltonian(k));
    let gap = window_gap(&vals, &model.occupied);
    if gap < gap_tol {
        return Err(WdError::GapClosure { k, gap });
    }
    let u = columns(&vecs, model.occupied.start, model.occupied.end);
    Ok(&u * u.adjoint())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub min_gap: f64,
    pub argmin_k: KPoint,
    pub mesh_size: usize,
}

/// Minimum occupied/unoccupied gap over the grid `(i/N - 1/2, j/N - 1/2)`,
/// scanned row-major; the first minimum wins.
pub fn check_gap(model: &BlochModel, mesh_size: usize) -> Result<GapReport> {
    if mesh_size < 2 {
        return Err(WdError::InvalidInput(format!("mesh size {mesh_size} < 2")));
    }
    let n = mesh_size;
    let gaps: Vec<(f64, KPoint)> = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let k = [(idx / n) as f64 / n as f64 - 0.5, (idx % n) as f64 / n as f64 - 0.5];
            let (vals, _) = eigh(&model.hamiltonian(k));
            (window_gap(&vals, &model.occupied), k)
        })
        .collect();
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for g in gaps {
        if g.0 < best.0 {
            best = g;
        }
    }
    Ok(GapReport { min_gap: best.0.max(0.0), argmin_k: best.1, mesh_size })
}

struct GapCost<'a>(&'a BlochModel);

impl CostFunction for GapCost<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, k: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        let (vals, _) = eigh(&self.0.hamiltonian([k[0], k[1]]));
        Ok(window_gap(&vals, &self.0.occupied))
    }
}

/// Number of mesh-local minima refined by `refined_gap`.
const REFINE_STARTS: usize = 4;

/// Minimum gap after Nelder-Mead refinement from the lowest local minima
/// of the `N x N` scan.
pub fn refined_gap(model: &BlochModel, mesh_size: usize) -> Result<(f64, KPoint)> {
    let n = mesh_size;
    let h = 1.0 / n as f64;
    let at = |i: usize, j: usize| {
        let (vals, _) = eigh(&model.hamiltonian([i as f64 * h - 0.5, j as f64 * h - 0.5]));
        window_gap(&vals, &model.occupied)
    };
    let grid: Vec<f64> = (0..n * n).into_par_iter().map(|q| at(q / n, q % n)).collect();
    let mut minima: Vec<(f64, usize)> = (0..n * n)
        .filter(|&q| {
            let (i, j) = (q / n, q % n);
            [((i + 1) % n, j), ((i + n - 1) % n, j), (i, (j + 1) % n), (i, (j + n - 1) % n)]
                .iter()
                .all(|&(a, b)| grid[q] <= grid[a * n + b])
        })
        .map(|q| (grid[q], q))
        .collect();
    minima.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for &(g, q) in minima.iter().take(REFINE_STARTS) {
        let k0 = [(q / n) as f64 * h - 0.5, (q % n) as f64 * h - 0.5];
        if g < best.0 {
            best = (g, k0);
        }
        let simplex = vec![k0.to_vec(), vec![k0[0] + h, k0[1]], vec![k0[0], k0[1] + h]];
        let solver = NelderMead::new(simplex)
            .with_sd_tolerance(1e-15)
            .map_err(|e| WdError::InvalidInput(e.to_string()))?;
        let res = Executor::new(GapCost(model), solver)
            .configure(|s| s.max_iters(500))
            .run()
            .map_err(|e| WdError::InvalidInput(e.to_string()))?;
        if let Some(k) = res.state().get_best_param() {
            let cost = res.state().get_best_cost();
            if cost < best.0 {
                best = (cost.max(0.0), [k[0], k[1]]);
            }
        }
    }
    Ok(best)
}

/// A smooth map `k -> P(k)` onto rank-`m` subspaces of `C^n`.
pub trait ProjectorFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn rank(&self) -> usize;
    fn projector(&self, k: KPoint) -> Result<CMat>;

    /// Certified minimum gap, when the family comes from a Hamiltonian.
    fn gap_floor(&self) -> Option<f64> {
        None
    }

    /// Orthonormal basis of `Ran P(k)` as an `n x m` matrix with
    /// deterministic phases.
    fn basis(&self, k: KPoint) -> Result<CMat> {
        let p = self.projector(k)?;
        let (_, vecs) = eigh(&p);
        let n = self.dim();
        let mut b = columns(&vecs, n - self.rank(), n);
        linalg::fix_phases(&mut b);
        Ok(b)
    }

    /// `P(k)` together with the directional derivative `dP/dk . d`.
    /// The default uses a fourth-order central difference.
    fn projector_derivative(&self, k: KPoint, d: KPoint) -> Result<(CMat, CMat)> {
        let h = 1e-3;
        let at = |s: f64| self.projector([k[0] + s * d[0], k[1] + s * d[1]]);
        let dp = (at(-2.0 * h)? - at(2.0 * h)? + (at(h)? - at(-h)?) * c(8.0, 0.0)) * c(1.0 / (12.0 * h), 0.0);
        Ok((self.projector(k)?, dp))
    }
}

/// Projector family of a model's occupied bands, with analytic derivatives.
#[derive(Clone, Debug)]
pub struct ModelFamily {
    pub model: BlochModel,
    pub gap_tol: f64,
    floor: Option<f64>,
}

impl ModelFamily {
    pub fn new(model: BlochModel) -> Self {
        ModelFamily { model, gap_tol: DEFAULT_GAP_TOL, floor: None }
    }

    pub fn with_gap_tol(mut self, tol: f64) -> Self {
        self.gap_tol = tol;
        self
    }

    /// Certifies the gap on an `N x N` reference mesh, refining the lowest
    /// mesh minima off-grid so that closings between mesh points are caught.
    pub fn certified(mut self, mesh_size: usize) -> Result<Self> {
        let rep = check_gap(&self.model, mesh_size)?;
        if rep.min_gap < self.gap_tol {
            return Err(WdError::GapClosure { k: rep.argmin_k, gap: rep.min_gap });
        }
        let (gap, k) = refined_gap(&self.model, mesh_size)?;
        if gap < self.gap_tol {
            return Err(WdError::GapClosure { k, gap });
        }
        self.floor = Some(gap);
        Ok(self)
    }

    fn eig_checked(&self, k: KPoint) -> Result<(Vec<f64>, CMat)> {
        let (vals, vecs) = eigh(&self.model.hamiltonian(k));
        let gap = window_gap(&vals, &self.model.occupied);
        if gap < self.gap_tol {
            return Err(WdError::GapClosure { k, gap });
        }
        Ok((vals, vecs))
    }
}

impl ProjectorFamily for ModelFamily {
    fn dim(&self) -> usize {
        self.model.dim
    }
    fn rank(&self) -> usize {
        self.model.rank()
    }
    fn gap_floor(&self) -> Option<f64> {
        self.floor
    }
    fn projector(&self, k: KPoint) -> Result<CMat> {
        spectral_projector(&self.model, k, self.gap_tol)
    }
    fn basis(&self, k: KPoint) -> Result<CMat> {
        let (_, vecs) = self.eig_checked(k)?;
        let occ = &self.model.occupied;
        let mut b = columns(&vecs, occ.start, occ.end);
        linalg::fix_phases(&mut b);
        Ok(b)
    }
    /// Sum over states: `dP = sum_{a occ, b unocc} (|a><a|dH|b><b| + h.c.) / (E_a - E_b)`.
    fn projector_derivative(&self, k: KPoint, d: KPoint) -> Result<(CMat, CMat)> {
        let (vals, vecs) = self.eig_checked(k)?;
        let dh = vecs.adjoint() * self.model.hamiltonian_derivative(k, d) * &vecs;
        let n = self.model.dim;
        let occ = &self.model.occupied;
        let mut x = CMat::zeros(n, n);
        for a in occ.clone() {
            for b in (0..n).filter(|b| !occ.contains(b)) {
                x[(a, b)] = dh[(a, b)] / (vals[a] - vals[b]);
            }
        }
        let dp = &vecs * (&x + x.adjoint()) * vecs.adjoint();
        let u = columns(&vecs, occ.start, occ.end);
        Ok((&u * u.adjoint(), dp))
    }
}

/// Family given by an arbitrary closure.
pub struct FnFamily<F> {
    pub dim: usize,
    pub rank: usize,
    pub f: F,
}

impl<F> ProjectorFamily for FnFamily<F>
where
    F: Fn(KPoint) -> CMat + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn rank(&self) -> usize {
        self.rank
    }
    fn projector(&self, k: KPoint) -> Result<CMat> {
        Ok((self.f)(k))
    }
}

/// Periodic reduction `P~(k) = V(k) P(k) V(k)*` of a family covariant under
/// `P(k + e_j) = tau_j P(k) tau_j*`, with `V(k) = exp(-i sum_j k_j M_j)`.
pub struct Periodized<'a> {
    inner: &'a dyn ProjectorFamily,
    generators: Vec<CMat>,
}

impl Periodized<'_> {
    fn v(&self, k: KPoint) -> CMat {
        let n = self.inner.dim();
        let mut a = CMat::zeros(n, n);
        for (j, m) in self.generators.iter().enumerate() {
            a += m * c(k[j], 0.0);
        }
        if a.iter().all(|z| *z == C64::new(0.0, 0.0)) {
            return linalg::identity(n);
        }
        herm_fn(&a, |x| C64::from_polar(1.0, -x))
    }
}

impl ProjectorFamily for Periodized<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn rank(&self) -> usize {
        self.inner.rank()
    }
    fn projector(&self, k: KPoint) -> Result<CMat> {
        let v = self.v(k);
        Ok(&v * self.inner.projector(k)? * v.adjoint())
    }
}

/// Checks the generators against the covariance unitaries and returns the
/// periodic reduction.
pub fn periodize<'a>(
    family: &'a dyn ProjectorFamily,
    taus: &[CMat],
    generators: &[CMat],
) -> Result<Periodized<'a>> {
    if taus.len() != 2 || generators.len() != 2 {
        return Err(WdError::InvalidInput("need two covariance unitaries and two generators".into()));
    }
    let tol = 1e-10;
    for m in generators {
        let herm = linalg::frob(&(m - m.adjoint()));
        let (vals, _) = eigh(m);
        if herm > tol || vals[0] <= -PI || *vals.last().unwrap() > PI + tol {
            return Err(WdError::InvalidInput(
                "generators must be Hermitian with spectrum in (-pi, pi]".into(),
            ));
        }
    }
    let comm = linalg::frob(&(&generators[0] * &generators[1] - &generators[1] * &generators[0]));
    if comm > tol {
        return Err(WdError::NonCommutingGenerators(comm));
    }
    for (m, tau) in generators.iter().zip(taus) {
        let e = herm_fn(m, |x| C64::from_polar(1.0, x));
        let resid = linalg::frob(&(e - tau));
        if resid > tol {
            return Err(WdError::CovarianceMismatch(resid));
        }
    }
    Ok(Periodized { inner: family, generators: generators.to_vec() })
}

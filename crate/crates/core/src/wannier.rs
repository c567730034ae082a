//! Composite Wannier functions by discrete inverse Bloch-Floquet synthesis,
//! and their localization diagnostics.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{Result, WdError};
use crate::frames::{build_frames, Frame, FrameOptions};
use crate::kmesh::build_mesh;
use crate::linalg::{CMat, C64};
use crate::model::{BlochModel, ModelFamily};
use crate::topology::{chern_continuum, chern_fhs};

pub const DEFAULT_S_GRID: [f64; 5] = [0.25, 0.5, 0.75, 0.9, 1.0];
/// Shells whose peak amplitude is below this fraction of the global peak are
/// treated as round-off and left out of exponential fits.
const ROUNDOFF_FLOOR: f64 = 1e-14;

/// Wannier amplitudes on one alias period of sites. Each residue class of
/// `Z^2 / N Z^2` is represented once, by its shortest Cartesian image.
#[derive(Clone, Debug)]
pub struct WannierSet {
    pub supercell_l: usize,
    pub mesh_n: usize,
    pub lattice_basis: [[f64; 2]; 2],
    pub sites: Vec<[i64; 2]>,
    /// `n x m` amplitudes (orbital x band) per site.
    pub values: Vec<CMat>,
    /// Number of zero-filled singular mesh points in the source frame.
    pub masked_points: usize,
}

pub fn cartesian(basis: &[[f64; 2]; 2], r: [i64; 2]) -> [f64; 2] {
    [
        r[0] as f64 * basis[0][0] + r[1] as f64 * basis[1][0],
        r[0] as f64 * basis[0][1] + r[1] as f64 * basis[1][1],
    ]
}

fn norm2(x: [f64; 2]) -> f64 {
    x[0] * x[0] + x[1] * x[1]
}

/// Shortest Cartesian image of the residue `(r1, r2)` mod `n`; ties go to
/// the first candidate in scan order.
fn minimal_image(basis: &[[f64; 2]; 2], r: [i64; 2], n: i64) -> [i64; 2] {
    let mut best = r;
    let mut best_d = f64::INFINITY;
    for a in -2..=1 {
        for b in -2..=1 {
            let cand = [r[0] + a * n, r[1] + b * n];
            let d = norm2(cartesian(basis, cand));
            if d < best_d - 1e-9 {
                best = cand;
                best_d = d;
            }
        }
    }
    best
}

/// Discrete transform `(1/N^2) sum_k exp(sign 2 pi i k.r) Phi(k)` for every
/// residue `r`, row-major in `(r1, r2)`. Singular points count as zero.
fn lattice_transform(frame: &Frame, sign: f64) -> Vec<CMat> {
    let mesh = &frame.mesh;
    let n = mesh.n_per_side;
    let (dim, m) = (frame.dim(), frame.rank());
    let phase = |k: f64, r: usize| C64::from_polar(1.0, sign * 2.0 * PI * k * r as f64);
    let kc: Vec<f64> = (0..n).map(|i| mesh.points[i * n][0]).collect();
    // Transform along the second index first.
    let half: Vec<CMat> = (0..n * n)
        .into_par_iter()
        .map(|q| {
            let (i, r2) = (q / n, q % n);
            let mut acc = CMat::zeros(dim, m);
            for j in 0..n {
                if let Some(v) = &frame.vectors[i * n + j] {
                    acc += v * phase(kc[j], r2);
                }
            }
            acc
        })
        .collect();
    let scale = C64::new(1.0 / (n * n) as f64, 0.0);
    (0..n * n)
        .into_par_iter()
        .map(|q| {
            let (r1, r2) = (q / n, q % n);
            let mut acc = CMat::zeros(dim, m);
            for i in 0..n {
                acc += &half[i * n + r2] * phase(kc[i], r1);
            }
            acc * scale
        })
        .collect()
}

/// `w_a(R) = (1/N^2) sum_k exp(2 pi i k.R) phi_a(k)`.
pub fn synthesize(frame: &Frame, l: usize, lattice_basis: [[f64; 2]; 2]) -> Result<WannierSet> {
    let n = frame.mesh.n_per_side;
    if 2 * l < n {
        return Err(WdError::SupercellTooSmall { l, half: n / 2 });
    }
    let values = lattice_transform(frame, 1.0);
    let sites = (0..n * n)
        .map(|q| minimal_image(&lattice_basis, [(q / n) as i64, (q % n) as i64], n as i64))
        .collect();
    Ok(WannierSet {
        supercell_l: l,
        mesh_n: n,
        lattice_basis,
        sites,
        values,
        masked_points: frame.singular_points.len(),
    })
}

impl WannierSet {
    pub fn rank(&self) -> usize {
        self.values[0].ncols()
    }

    /// `sum_{orb} |w_a(R, orb)|^2` at site index `q`.
    pub fn density(&self, q: usize, a: usize) -> f64 {
        self.values[q].column(a).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Per-band total mass.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.rank())
            .map(|a| (0..self.sites.len()).map(|q| self.density(q, a)).sum())
            .collect()
    }

    /// Largest `|<w_a, w_b>|` for `a != b`.
    pub fn max_overlap(&self) -> f64 {
        let m = self.rank();
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for b in a + 1..m {
                let mut z = C64::new(0.0, 0.0);
                for v in &self.values {
                    z += v.column(a).dotc(&v.column(b));
                }
                worst = worst.max(z.norm());
            }
        }
        worst
    }

    pub fn write_csv(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "band,R1,R2,orbital,re,im")?;
        for a in 0..self.rank() {
            for (site, v) in self.sites.iter().zip(&self.values) {
                for o in 0..v.nrows() {
                    let z = v[(o, a)];
                    writeln!(w, "{a},{},{},{o},{:e},{:e}", site[0], site[1], z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Least-squares line with coefficient of determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LinearFit { slope, intercept: my - slope * mx, r2 }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpFit {
    /// Decay rate: `log |w|` falls like `-beta |x|`.
    pub beta: f64,
    pub r2: f64,
    /// Quality of a power-law fit `log |w|` against `log |x|` on the same shells.
    pub power_law_r2: f64,
    /// Set when the power law fits better than the exponential.
    pub power_law_like: bool,
    pub shells: usize,
}

/// Fits `log(shell max |w_a|)` against radius over the middle 60% of the
/// shells carrying mass. Shells have Cartesian width `max(|a1|, |a2|)`.
pub fn exp_fit(w: &WannierSet) -> Vec<Result<ExpFit>> {
    let b = w.lattice_basis;
    let width = norm2(b[0]).sqrt().max(norm2(b[1]).sqrt());
    let radii: Vec<f64> = w.sites.iter().map(|&s| norm2(cartesian(&b, s)).sqrt()).collect();
    (0..w.rank())
        .map(|a| {
            let amp: Vec<f64> = (0..w.sites.len()).map(|q| w.density(q, a).sqrt()).collect();
            let peak = amp.iter().cloned().fold(0.0, f64::max);
            let nshell = radii.iter().map(|r| (r / width) as usize).max().unwrap_or(0) + 1;
            let mut best: Vec<Option<(f64, f64)>> = vec![None; nshell];
            for (q, &r) in radii.iter().enumerate() {
                let s = (r / width) as usize;
                if best[s].is_none_or(|(v, _)| amp[q] > v) {
                    best[s] = Some((amp[q], r));
                }
            }
            let shells: Vec<(f64, f64)> = best
                .into_iter()
                .flatten()
                .filter(|(v, _)| *v > ROUNDOFF_FLOOR * peak && *v > 0.0)
                .collect();
            if shells.len() < 8 {
                return Err(WdError::InsufficientSupport(shells.len()));
            }
            let lo = (0.2 * shells.len() as f64).floor() as usize;
            let hi = (0.8 * shells.len() as f64).ceil() as usize;
            let mid = &shells[lo..hi];
            let x: Vec<f64> = mid.iter().map(|s| s.1).collect();
            let y: Vec<f64> = mid.iter().map(|s| s.0.ln()).collect();
            let lin = linear_fit(&x, &y);
            let lx: Vec<f64> = x.iter().map(|r| r.ln()).collect();
            let pow = linear_fit(&lx, &y);
            Ok(ExpFit {
                beta: -lin.slope,
                r2: lin.r2,
                power_law_r2: pow.r2,
                power_law_like: pow.r2 > lin.r2,
                shells: shells.len(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentReport {
    pub s_grid: Vec<f64>,
    /// `<|x|^{2s}>_a` indexed `[band][s]`.
    pub moments: Vec<Vec<f64>>,
    /// Same sums restricted to sites with `|x| >= 1`.
    pub tail_moments: Vec<Vec<f64>>,
    pub second_moment: Vec<f64>,
    pub center: Vec<[f64; 2]>,
    pub mv_spread: f64,
    pub mass: Vec<f64>,
}

impl MomentReport {
    pub fn total_second_moment(&self) -> f64 {
        self.second_moment.iter().sum()
    }
}

pub fn moments(w: &WannierSet, s_grid: &[f64]) -> MomentReport {
    let m = w.rank();
    let xs: Vec<[f64; 2]> = w.sites.iter().map(|&s| cartesian(&w.lattice_basis, s)).collect();
    let mut rep = MomentReport {
        s_grid: s_grid.to_vec(),
        moments: vec![vec![0.0; s_grid.len()]; m],
        tail_moments: vec![vec![0.0; s_grid.len()]; m],
        second_moment: vec![0.0; m],
        center: vec![[0.0; 2]; m],
        mv_spread: 0.0,
        mass: vec![0.0; m],
    };
    for a in 0..m {
        for (q, x) in xs.iter().enumerate() {
            let d = w.density(q, a);
            let r2 = norm2(*x);
            rep.mass[a] += d;
            rep.second_moment[a] += r2 * d;
            rep.center[a][0] += x[0] * d;
            rep.center[a][1] += x[1] * d;
            for (t, &s) in s_grid.iter().enumerate() {
                let v = if r2 == 0.0 { 0.0 } else { r2.powf(s) * d };
                rep.moments[a][t] += v;
                if r2 >= 1.0 {
                    rep.tail_moments[a][t] += v;
                }
            }
        }
        rep.mv_spread += rep.second_moment[a] - norm2(rep.center[a]);
    }
    rep
}

#[derive(Clone, Debug, PartialEq)]
pub struct HsReport {
    pub s: f64,
    /// `sqrt(sum_a sum_gamma (1 + |gamma|^2)^s |phi_a^(gamma)|^2)`.
    pub norm: f64,
    pub per_band: Vec<f64>,
    /// Homogeneous part `sqrt(sum |gamma|^{2s} |phi^(gamma)|^2)`.
    pub seminorm: f64,
    pub mesh_n: usize,
}

/// Fourier `H^s` norm with `gamma` in the symmetric window `[-N/2, N/2)^2`.
pub fn hs_norm(frame: &Frame, s: f64) -> HsReport {
    let n = frame.mesh.n_per_side;
    let coeffs = lattice_transform(frame, -1.0);
    let m = frame.rank();
    let wrap = |r: usize| if r >= n / 2 { r as i64 - n as i64 } else { r as i64 };
    let mut per_band = vec![0.0; m];
    let mut semi = 0.0;
    for (q, v) in coeffs.iter().enumerate() {
        let g = [wrap(q / n), wrap(q % n)];
        let g2 = (g[0] * g[0] + g[1] * g[1]) as f64;
        let weight = (1.0 + g2).powf(s);
        let hom = if g2 == 0.0 { 0.0 } else { g2.powf(s) };
        for (a, pb) in per_band.iter_mut().enumerate() {
            let e: f64 = v.column(a).iter().map(|z| z.norm_sqr()).sum();
            *pb += weight * e;
            semi += hom * e;
        }
    }
    let norm = per_band.iter().sum::<f64>().sqrt();
    HsReport { s, norm, per_band: per_band.into_iter().map(f64::sqrt).collect(), seminorm: semi.sqrt(), mesh_n: n }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    Trivial,
    Nontrivial,
    Inconclusive,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Trivial => "TRIVIAL",
            Classification::Nontrivial => "NONTRIVIAL",
            Classification::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerLRow {
    pub l: usize,
    pub n: usize,
    pub x2: Vec<f64>,
    pub f_mv: f64,
    /// Whether the frame used here was smoothed across `k = 0`.
    pub smoothed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HsRow {
    pub s: f64,
    pub n: usize,
    pub norm: f64,
    pub seminorm: f64,
}

#[derive(Clone, Debug)]
pub struct DichotomyReport {
    pub model: String,
    pub params: Vec<(String, f64)>,
    pub n: usize,
    pub chern_int: i64,
    pub chern_float: f64,
    pub per_l: Vec<PerLRow>,
    pub hs_table: Vec<HsRow>,
    /// Exponential fit per band at the largest `L`; `Err` carries the reason.
    pub exp_fit: Vec<std::result::Result<ExpFit, WdError>>,
    /// Fit of total `<X^2>` against `log L`.
    pub x2_log_fit: Option<LinearFit>,
    /// Fit of `F_MV` against `log L`.
    pub fmv_log_fit: Option<LinearFit>,
    /// Why whole-cell smoothing was refused, if it was.
    pub smoothing_obstruction: Option<String>,
    pub classification: Classification,
}

/// Settings for `dichotomy_report`.
#[derive(Clone, Debug)]
pub struct DichotomyOptions {
    pub frame: FrameOptions,
    pub s_grid: Vec<f64>,
    pub hs_s: Vec<f64>,
    pub gap_tol: f64,
}

impl Default for DichotomyOptions {
    fn default() -> Self {
        DichotomyOptions {
            frame: FrameOptions::default(),
            s_grid: DEFAULT_S_GRID.to_vec(),
            hs_s: vec![0.5, 0.75, 1.0],
            gap_tol: crate::model::DEFAULT_GAP_TOL,
        }
    }
}

fn exp_ok(fits: &[std::result::Result<ExpFit, WdError>]) -> bool {
    fits.iter().all(|f| match f {
        Ok(f) => f.r2 > 0.97 && f.beta > 0.0,
        // Fewer than 8 shells above round-off: compactly supported.
        Err(WdError::InsufficientSupport(_)) => true,
        Err(_) => false,
    })
}

/// Full localization pipeline: Chern numbers at `N`, then for every `L` a
/// frame on a `2L` mesh, its Wannier functions and moments, plus `H^s`
/// norms and an exponential fit at the largest `L`.
pub fn dichotomy_report(model: &BlochModel, n: usize, l_list: &[usize], opts: &DichotomyOptions) -> Result<DichotomyReport> {
    let mesh = build_mesh(n)?;
    let family = ModelFamily::new(model.clone()).with_gap_tol(opts.gap_tol).certified(n)?;
    let chern_int = chern_fhs(&family, &mesh)?;
    let chern_float = chern_continuum(&family, &mesh)?;
    let mut ls = l_list.to_vec();
    ls.sort_unstable();
    ls.dedup();
    if ls.is_empty() {
        return Err(WdError::InvalidInput("empty L list".into()));
    }
    let mut per_l = Vec::new();
    let mut hs_table = Vec::new();
    let mut exp = Vec::new();
    let mut obstruction = None;
    for (pos, &l) in ls.iter().enumerate() {
        let nl = 2 * l;
        let mesh_l = build_mesh(nl)?;
        let fam_l = ModelFamily::new(model.clone()).with_gap_tol(opts.gap_tol).certified(nl)?;
        let pipe = build_frames(&fam_l, &mesh_l, &opts.frame)?;
        if let Some(e) = &pipe.smoothing_error {
            obstruction = Some(e.to_string());
        }
        let frame = pipe.best();
        let w = synthesize(frame, l, model.lattice_basis)?;
        let mom = moments(&w, &opts.s_grid);
        per_l.push(PerLRow {
            l,
            n: nl,
            x2: mom.second_moment.clone(),
            f_mv: mom.mv_spread,
            smoothed: pipe.smoothed.is_some(),
        });
        for &s in &opts.hs_s {
            let h = hs_norm(frame, s);
            hs_table.push(HsRow { s, n: nl, norm: h.norm, seminorm: h.seminorm });
        }
        if pos + 1 == ls.len() {
            exp = exp_fit(&w);
        }
    }
    let logl: Vec<f64> = per_l.iter().map(|r| (r.l as f64).ln()).collect();
    let x2: Vec<f64> = per_l.iter().map(|r| r.x2.iter().sum()).collect();
    let fmv: Vec<f64> = per_l.iter().map(|r| r.f_mv).collect();
    let (x2_log_fit, fmv_log_fit) = if per_l.len() >= 2 {
        (Some(linear_fit(&logl, &x2)), Some(linear_fit(&logl, &fmv)))
    } else {
        (None, None)
    };
    let stable = x2.len() >= 2 && {
        let (a, b) = (x2[x2.len() - 2], x2[x2.len() - 1]);
        (b - a).abs() <= 1e-2 * a.abs().max(b.abs()) || (a - b).abs() < 1e-12
    };
    let classification = if chern_int == 0 && stable && exp_ok(&exp) {
        Classification::Trivial
    } else if chern_int != 0
        && per_l.len() >= 3
        && x2_log_fit.is_some_and(|f| f.slope > 0.0 && f.r2 > 0.9)
    {
        Classification::Nontrivial
    } else {
        Classification::Inconclusive
    };
    Ok(DichotomyReport {
        model: model.name.clone(),
        params: model.params.clone(),
        n,
        chern_int,
        chern_float,
        per_l,
        hs_table,
        exp_fit: exp,
        x2_log_fit,
        fmv_log_fit,
        smoothing_obstruction: obstruction,
        classification,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hexagonal;

    fn point_mass(sites: &[([i64; 2], f64)]) -> WannierSet {
        WannierSet {
            supercell_l: 4,
            mesh_n: 8,
            lattice_basis: hexagonal(),
            sites: sites.iter().map(|s| s.0).collect(),
            values: sites.iter().map(|s| CMat::from_element(1, 1, C64::new(s.1.sqrt(), 0.0))).collect(),
            masked_points: 0,
        }
    }

    #[test]
    fn delta_moments() {
        let r = moments(&point_mass(&[([0, 0], 1.0)]), &DEFAULT_S_GRID);
        assert!(r.moments[0].iter().all(|&m| m == 0.0));
        assert_eq!(r.mv_spread, 0.0);
    }

    #[test]
    fn shifted_delta_moments() {
        let r = moments(&point_mass(&[([1, 0], 1.0)]), &[1.0]);
        assert!((r.second_moment[0] - 1.0).abs() < 1e-15);
        assert!(r.mv_spread.abs() < 1e-15);
    }

    #[test]
    fn two_point_moments() {
        let r = moments(&point_mass(&[([1, 0], 0.5), ([-1, 0], 0.5)]), &[1.0]);
        assert!((r.second_moment[0] - 1.0).abs() < 1e-15);
        assert!(r.center[0][0].abs() < 1e-15);
        assert!((r.mv_spread - 1.0).abs() < 1e-15);
    }

    #[test]
    fn delta_has_insufficient_support() {
        let fits = exp_fit(&point_mass(&[([0, 0], 1.0)]));
        assert!(matches!(fits[0], Err(WdError::InsufficientSupport(1))));
    }

    #[test]
    fn linear_fit_exact_line() {
        let f = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((f.slope - 2.0).abs() < 1e-15 && (f.r2 - 1.0).abs() < 1e-15);
    }
}

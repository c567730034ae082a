//! Parallel transport along straight segments for the Berry connection,
//! holonomy logarithms, and periodic frames along lattice lines.

use std::f64::consts::PI;

use crate::error::{Result, WdError};
use crate::linalg::{self, c, frob, from_phases, polar, unitary_eig, CMat, C64};
use crate::model::ProjectorFamily;
use crate::KPoint;

pub const DEFAULT_STEPS_PER_UNIT: usize = 256;
pub const TOL_UNITARY: f64 = 1e-9;
pub const TOL_PERIODIC: f64 = 1e-7;
const BRANCH_TOL: f64 = 1e-8;

/// Transport unitary `t(to_k, from_k)`.
#[derive(Clone, Debug)]
pub struct TransportOp {
    pub matrix: CMat,
    pub from_k: KPoint,
    pub to_k: KPoint,
    pub steps: usize,
}

impl TransportOp {
    pub fn unitarity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        frob(&(self.matrix.adjoint() * &self.matrix - linalg::identity(n)))
    }

    /// `|U P(from) U* - P(to)|_F`.
    pub fn intertwining_error(&self, p: &dyn ProjectorFamily) -> Result<f64> {
        let a = p.projector(self.from_k)?;
        let b = p.projector(self.to_k)?;
        Ok(frob(&(&self.matrix * a * self.matrix.adjoint() - b)))
    }
}

/// Number of steps for a segment of length `|x - y|`.
pub fn steps_for(x: KPoint, y: KPoint, steps_per_unit: usize) -> usize {
    let len = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
    ((len * steps_per_unit as f64).ceil() as usize).max(1)
}

/// Integrates `dt/ds = [P', P] t` from `y` (s = 0) to `x` (s = 1) with
/// classical RK4, re-unitarizing by the polar factor after every step.
pub fn transport(p: &dyn ProjectorFamily, x: KPoint, y: KPoint, steps: usize) -> Result<TransportOp> {
    if steps == 0 {
        return Err(WdError::InvalidInput("transport needs at least one step".into()));
    }
    let n = p.dim();
    let d = [x[0] - y[0], x[1] - y[1]];
    let mut u = linalg::identity(n);
    if d == [0.0, 0.0] {
        return Ok(TransportOp { matrix: u, from_k: y, to_k: x, steps });
    }
    let generator = |s: f64| -> Result<CMat> {
        let (pk, dp) = p.projector_derivative([y[0] + s * d[0], y[1] + s * d[1]], d)?;
        Ok(&dp * &pk - &pk * &dp)
    };
    let h = 1.0 / steps as f64;
    let hc = c(h, 0.0);
    let half = c(0.5 * h, 0.0);
    let mut a_start = generator(0.0)?;
    for i in 0..steps {
        let s = i as f64 * h;
        let a_mid = generator(s + 0.5 * h)?;
        let a_end = generator(s + h)?;
        let k1 = &a_start * &u;
        let k2 = &a_mid * (&u + &k1 * half);
        let k3 = &a_mid * (&u + &k2 * half);
        let k4 = &a_end * (&u + &k3 * hc);
        let next = &u + (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
        u = polar(&next).0;
        a_start = a_end;
    }
    Ok(TransportOp { matrix: u, from_k: y, to_k: x, steps })
}

/// Hermitian logarithm `M` with `exp(iM) = U` on the principal branch.
#[derive(Clone, Debug)]
pub struct HolonomyLog {
    pub m: CMat,
    pub eigenphases: Vec<f64>,
    eigenvectors: CMat,
}

impl HolonomyLog {
    /// `exp(i s M)`.
    pub fn exp_i(&self, s: f64) -> CMat {
        from_phases(&self.eigenvectors, &self.eigenphases, |t| C64::from_polar(1.0, s * t))
    }
}

pub fn holonomy_log(u: &CMat) -> Result<HolonomyLog> {
    let n = u.nrows();
    let err = frob(&(u.adjoint() * u - linalg::identity(n)));
    if err > TOL_UNITARY {
        return Err(WdError::InvalidInput(format!("holonomy not unitary (residual {err:.3e})")));
    }
    let (phases, q) = unitary_eig(u);
    for &t in &phases {
        if t.abs() > PI - BRANCH_TOL {
            return Err(WdError::BranchDegenerate(t));
        }
    }
    let m = from_phases(&q, &phases, |t| c(t, 0.0));
    let m = (&m + m.adjoint()) * c(0.5, 0.0);
    Ok(HolonomyLog { m, eigenphases: phases, eigenvectors: q })
}

/// Periodic frame `Phi(s) = t(base + s d, base) exp(-i s M) Phi(0)` along
/// the closed line `base + s d`, `s in [0, 1]`.
///
/// `M` is the logarithm of the loop holonomy restricted to `Ran P(base)`,
/// written in the coordinates of the base frame.
#[derive(Clone, Debug)]
pub struct LineFrame {
    pub base_k: KPoint,
    pub direction: KPoint,
    pub n: usize,
    pub steps_per_unit: usize,
    /// `t(base + j/N d, base)` for `j = 0..=N`.
    pub transports: Vec<CMat>,
    pub base_frame: CMat,
    pub holonomy: HolonomyLog,
    /// Frame samples at `j = 0..=N`.
    pub samples: Vec<CMat>,
}

pub fn line_frame(
    p: &dyn ProjectorFamily,
    direction: KPoint,
    base_k: KPoint,
    base_frame: &CMat,
    n: usize,
    steps_per_unit: usize,
) -> Result<LineFrame> {
    if n == 0 {
        return Err(WdError::InvalidInput("line frame needs N >= 1".into()));
    }
    let pb = p.projector(base_k)?;
    if linalg::orthonormality_error(base_frame) > 1e-9 || frob(&(&pb * base_frame - base_frame)) > 1e-6 {
        return Err(WdError::InvalidInput("base frame not orthonormal in Ran P(base)".into()));
    }
    let at = |s: f64| [base_k[0] + s * direction[0], base_k[1] + s * direction[1]];
    let mut transports = vec![linalg::identity(p.dim())];
    for j in 0..n {
        let (a, b) = (at(j as f64 / n as f64), at((j + 1) as f64 / n as f64));
        let t = transport(p, b, a, steps_for(b, a, steps_per_unit))?;
        let next = t.matrix * transports.last().unwrap();
        transports.push(next);
    }
    let loop_u = base_frame.adjoint() * transports.last().unwrap() * base_frame;
    let holonomy = holonomy_log(&polar(&loop_u).0)?;
    let mut lf = LineFrame {
        base_k,
        direction,
        n,
        steps_per_unit,
        transports,
        base_frame: base_frame.clone(),
        holonomy,
        samples: Vec::new(),
    };
    lf.samples = (0..=n).map(|j| lf.sample(j)).collect();
    Ok(lf)
}

impl LineFrame {
    fn sample(&self, j: usize) -> CMat {
        let s = j as f64 / self.n as f64;
        &self.transports[j] * &self.base_frame * self.holonomy.exp_i(-s)
    }

    /// Frame at an arbitrary `s in [0, 1]`, transporting from the nearest
    /// lower sample.
    pub fn eval(&self, p: &dyn ProjectorFamily, s: f64) -> Result<CMat> {
        let pos = s * self.n as f64;
        let j = pos.round();
        if (pos - j).abs() < 1e-12 && j >= 0.0 && j <= self.n as f64 {
            return Ok(self.samples[j as usize].clone());
        }
        let j0 = (pos.floor().max(0.0) as usize).min(self.n - 1);
        let a = [
            self.base_k[0] + j0 as f64 / self.n as f64 * self.direction[0],
            self.base_k[1] + j0 as f64 / self.n as f64 * self.direction[1],
        ];
        let b = [self.base_k[0] + s * self.direction[0], self.base_k[1] + s * self.direction[1]];
        let t = transport(p, b, a, steps_for(b, a, self.steps_per_unit))?;
        Ok(t.matrix * &self.transports[j0] * &self.base_frame * self.holonomy.exp_i(-s))
    }

    /// `|Phi(1) - Phi(0)|_F`.
    pub fn periodicity_residual(&self) -> f64 {
        frob(&(&self.samples[self.n] - &self.samples[0]))
    }
}

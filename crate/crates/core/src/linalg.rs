//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{Complex, DMatrix, Schur, SymmetricEigen};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn frob(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
pub fn eigh(h: &CMat) -> (Vec<f64>, CMat) {
    let n = h.nrows();
    let sym = (h + h.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Applies `f` to the spectrum of a Hermitian matrix.
pub fn herm_fn(h: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let (vals, vecs) = eigh(h);
    let n = h.nrows();
    let mut scaled = vecs.clone();
    for j in 0..n {
        let fj = f(vals[j]);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * vecs.adjoint()
}

/// Operator (spectral) norm of an arbitrary matrix.
pub fn op_norm(a: &CMat) -> f64 {
    let (vals, _) = eigh(&(a.adjoint() * a));
    vals.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Unitary polar factor of a tall or square matrix `a` (n x m, n >= m),
/// together with its smallest singular value.
pub fn polar(a: &CMat) -> (CMat, f64) {
    let g = a.adjoint() * a;
    let (vals, vecs) = eigh(&g);
    let smin = vals[0].max(0.0).sqrt();
    if smin == 0.0 {
        return (a.clone(), 0.0);
    }
    let m = g.nrows();
    let mut scaled = vecs.clone();
    for j in 0..m {
        let s = 1.0 / vals[j].sqrt();
        for i in 0..m {
            scaled[(i, j)] *= s;
        }
    }
    (a * (scaled * vecs.adjoint()), smin)
}

/// Eigenphases in (-pi, pi] and eigenvectors of a unitary matrix, via the
/// complex Schur form (diagonal for normal input).
pub fn unitary_eig(u: &CMat) -> (Vec<f64>, CMat) {
    let (q, t) = Schur::new(u.clone()).unpack();
    let phases = (0..u.nrows())
        .map(|i| {
            let a = t[(i, i)].arg();
            if a <= -std::f64::consts::PI {
                std::f64::consts::PI
            } else {
                a
            }
        })
        .collect();
    (phases, q)
}

/// Rebuilds `Q diag(f(theta)) Q*`.
pub fn from_phases(q: &CMat, phases: &[f64], f: impl Fn(f64) -> C64) -> CMat {
    let mut scaled = q.clone();
    for (j, &p) in phases.iter().enumerate() {
        let fj = f(p);
        for i in 0..q.nrows() {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * q.adjoint()
}

/// Makes the largest-magnitude entry of each column real and positive.
/// Ties within 1e-12 go to the lowest row index.
pub fn fix_phases(v: &mut CMat) {
    for j in 0..v.ncols() {
        let mx = (0..v.nrows()).map(|i| v[(i, j)].norm()).fold(0.0, f64::max);
        if mx == 0.0 {
            continue;
        }
        let i = (0..v.nrows())
            .find(|&i| v[(i, j)].norm() >= mx - 1e-12)
            .unwrap();
        let ph = v[(i, j)].conj() / v[(i, j)].norm();
        for r in 0..v.nrows() {
            v[(r, j)] *= ph;
        }
    }
}

/// Columns `lo..hi` of `v`.
pub fn columns(v: &CMat, lo: usize, hi: usize) -> CMat {
    v.columns(lo, hi - lo).into_owned()
}

/// Gram deviation `|A*A - I|` in the operator norm.
pub fn orthonormality_error(a: &CMat) -> f64 {
    op_norm(&(a.adjoint() * a - identity(a.ncols())))
}

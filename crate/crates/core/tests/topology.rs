mod common;

use std::f64::consts::PI;

use common::*;
use wd_core::frames::{build_frames, Frame, FrameOptions};
use wd_core::kmesh::build_mesh;
use wd_core::linalg::{CMat, C64};
use wd_core::model::{build_haldane, build_hofstadter, ModelFamily, ProjectorFamily, DEFAULT_GAP_TOL};
use wd_core::topology::*;
use wd_core::{KPoint, Result, WdError};

/// Same projectors as the inner family, with a k-dependent phase on the basis.
struct Regauged<'a>(&'a ModelFamily);

impl ProjectorFamily for Regauged<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn rank(&self) -> usize {
        self.0.rank()
    }
    fn projector(&self, k: KPoint) -> Result<CMat> {
        self.0.projector(k)
    }
    fn basis(&self, k: KPoint) -> Result<CMat> {
        Ok(self.0.basis(k)? * C64::from_polar(1.0, 3.0 * (2.0 * PI * k[0]).sin() + k[1]))
    }
}

#[test]
fn constant_family_is_flat() {
    let f = ModelFamily::new(constant_model());
    let mesh = build_mesh(12).unwrap();
    let field = berry_curvature(&f, &mesh).unwrap();
    assert!(field.omega.iter().all(|&o| o == 0.0));
    assert_eq!(chern_continuum(&f, &mesh).unwrap(), 0.0);
    assert_eq!(chern_fhs(&f, &mesh).unwrap(), 0);
}

#[test]
fn chern_numbers_of_test_models() {
    let m16 = build_mesh(16).unwrap();
    let m96 = build_mesh(96).unwrap();
    for (f, expect) in [(haldane(0.0), -1), (haldane(1.0), 0), (hofstadter13(), 1)] {
        assert_eq!(chern_fhs(&f, &m16).unwrap(), expect);
        let r = chern(&f, &m96).unwrap();
        assert_eq!(r.value_int, expect);
        assert!(r.discrepancy < 5e-3, "{r:?}");
        let field = berry_curvature(&f, &m96).unwrap();
        assert!(field.max_imag <= 1e-10);
        assert!((field.integral() - 2.0 * PI * expect as f64).abs() < 2.0 * PI * 5e-3);
    }
}

#[test]
fn hofstadter_matches_diophantine_labels() {
    // For flux p/q the r-th gap satisfies r = q s + p t with |t| <= q/2;
    // the Hall conductance below gap r is t, so band r carries t_r - t_{r-1}.
    let mesh = build_mesh(24).unwrap();
    for (p, q) in [(1i64, 3i64), (1, 5), (2, 5)] {
        let mut prev = 0;
        for r in 1..q {
            let t = (-q / 2..=q / 2).find(|t| (r - p * t).rem_euclid(q) == 0).unwrap();
            let band = build_hofstadter(p, q).unwrap().with_occupied((r - 1) as usize..r as usize).unwrap();
            let c = chern_fhs(&ModelFamily::new(band), &mesh).unwrap();
            assert_eq!(c, t - prev, "p/q = {p}/{q}, band {}", r - 1);
            prev = t;
        }
    }
}

#[test]
fn integer_is_stable_under_refinement() {
    for f in [haldane(0.0), haldane(1.0), hofstadter13()] {
        let values: Vec<i64> = [8, 10, 16, 24, 32].iter().map(|&n| chern_fhs(&f, &build_mesh(n).unwrap()).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[0] == w[1]), "{values:?}");
    }
}

#[test]
fn continuum_error_is_second_order() {
    let f = haldane(0.0);
    let err = |n: usize| (chern_continuum(&f, &build_mesh(n).unwrap()).unwrap() + 1.0).abs();
    let (a, b, c) = (err(24), err(48), err(96));
    for ratio in [a / b, b / c] {
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
    }
}

#[test]
fn gauge_independence() {
    let f = haldane(0.0);
    let g = Regauged(&f);
    let mesh = build_mesh(16).unwrap();
    assert_eq!(chern_fhs(&f, &mesh).unwrap(), chern_fhs(&g, &mesh).unwrap());
    let a = chern_continuum(&f, &mesh).unwrap();
    let b = chern_continuum(&g, &mesh).unwrap();
    assert!((a - b).abs() <= 1e-12);
}

#[test]
fn curvature_is_additive_over_bands() {
    let mesh = build_mesh(24).unwrap();
    let band = |r: std::ops::Range<usize>| ModelFamily::new(build_hofstadter(1, 3).unwrap().with_occupied(r).unwrap());
    let both = berry_curvature_analytic(&band(0..2), &mesh).unwrap();
    let lo = berry_curvature_analytic(&band(0..1), &mesh).unwrap();
    let hi = berry_curvature_analytic(&band(1..2), &mesh).unwrap();
    for i in 0..mesh.len() {
        assert!((both.omega[i] - lo.omega[i] - hi.omega[i]).abs() <= 1e-8);
    }
    // The mesh-difference curvature converges to the analytic one at second order.
    let dev = |n: usize| {
        let mesh = build_mesh(n).unwrap();
        let fd = berry_curvature(&band(0..1), &mesh).unwrap();
        let an = berry_curvature_analytic(&band(0..1), &mesh).unwrap();
        (0..mesh.len()).map(|i| (fd.omega[i] - an.omega[i]).abs()).fold(0.0, f64::max)
    };
    let ratio = dev(48) / dev(96);
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn gap_closure_is_reported() {
    let graphene = ModelFamily::new(build_haldane(1.0, 0.0, 0.0, 0.0).unwrap()).with_gap_tol(DEFAULT_GAP_TOL);
    let mesh = build_mesh(12).unwrap();
    assert!(matches!(chern_fhs(&graphene, &mesh), Err(WdError::GapClosure { .. })));
}

#[test]
fn abelian_connection_examples() {
    let mesh = build_mesh(64).unwrap();
    let flat = Frame::from_fn(&mesh, |_| e1(2));
    let a = abelian_connection(&flat);
    assert!(a.a.iter().flatten().all(|v| v == &[0.0, 0.0]));

    let wind = Frame::from_fn(&mesh, |k| e1(2) * C64::from_polar(1.0, 2.0 * PI * k[0]));
    let a = abelian_connection(&wind);
    assert!(a.max_imag <= 1e-8);
    for v in a.a.iter().flatten() {
        assert!((v[0] - 2.0 * PI).abs() < 2e-2 && v[1].abs() < 1e-12);
    }

    // Radial frame: |k| |A| stays bounded as the mesh refines.
    let f = haldane(0.0);
    let weighted = |n: usize| {
        let mesh = build_mesh(n).unwrap();
        let fr = build_frames(&f, &mesh, &FrameOptions { smoothing_width: None, ..Default::default() }).unwrap().radial;
        let a = abelian_connection(&fr);
        let mut sup: f64 = 0.0;
        let mut near: f64 = 0.0;
        for (i, v) in a.a.iter().enumerate() {
            let Some(v) = v else { continue };
            let k = mesh.points[i];
            let r = k[0].hypot(k[1]);
            sup = sup.max(r * v[0].hypot(v[1]));
            if r < 2.5 / n as f64 {
                near = near.max(v[0].hypot(v[1]));
            }
        }
        (sup, near)
    };
    let (s64, n64) = weighted(64);
    let (s128, n128) = weighted(128);
    assert!(s128 / s64 < 1.5);
    assert!(n128 > 1.5 * n64);
}

#[test]
fn stokes_examples() {
    let mesh = build_mesh(96).unwrap();
    let n = 96i64;
    let c0 = n / 2;

    let f = ModelFamily::new(constant_model());
    let flat = Frame::from_fn(&mesh, |_| e1(2));
    let rep = stokes_residual(&flat, &f, &StokesRegion::Rect { lo: [3, 5], hi: [40, 70] }).unwrap();
    assert!(rep.residual <= 1e-12);

    let triv = haldane(1.0);
    let sm = build_frames(&triv, &mesh, &FrameOptions::default()).unwrap().smoothed.unwrap();
    let rep = stokes_residual(&sm, &triv, &StokesRegion::Torus).unwrap();
    assert!(rep.circulation.abs() < 1e-2 && rep.flux.abs() < 1e-2 && rep.residual < 1e-2, "{rep:?}");
    for region in [
        StokesRegion::Rect { lo: [c0 - 20, c0 - 20], hi: [c0 + 20, c0 + 20] },
        StokesRegion::Rect { lo: [10, 30], hi: [50, 70] },
    ] {
        let rep = stokes_residual(&sm, &triv, &region).unwrap();
        assert!(rep.residual < 1e-2, "{rep:?}");
    }

    let nontriv = haldane(0.0);
    let radial = build_frames(&nontriv, &mesh, &FrameOptions { smoothing_width: None, ..Default::default() }).unwrap().radial;
    let region = StokesRegion::Annulus { outer: ([0, 0], [n, n]), inner: ([c0 - 2, c0 - 2], [c0 + 2, c0 + 2]) };
    let rep = stokes_residual(&radial, &nontriv, &region).unwrap();
    assert!(rep.residual < 5e-2, "{rep:?}");
    assert!((rep.outer_circulation - rep.inner_circulation - 2.0 * PI * -1.0).abs() < 5e-2, "{rep:?}");
}

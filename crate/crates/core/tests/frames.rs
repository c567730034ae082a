mod common;

use std::f64::consts::PI;

use common::*;
use proptest::prelude::*;
use wd_core::frames::*;
use wd_core::kmesh::{build_mesh, KMesh};
use wd_core::linalg::{c, frob, herm_fn, identity, orthonormality_error, CMat, C64};
use wd_core::model::ModelFamily;
use wd_core::WdError;

fn max_distance(a: &Frame, b: &Frame) -> f64 {
    a.vectors
        .iter()
        .zip(&b.vectors)
        .filter_map(|(x, y)| Some(frob(&(x.as_ref()? - y.as_ref()?))))
        .fold(0.0, f64::max)
}

fn near(mesh: &KMesh, idx: usize, r: f64) -> bool {
    let k = mesh.points[idx];
    k[0].hypot(k[1]) <= r
}

#[test]
fn constant_family_gives_constant_frames() {
    let f = ModelFamily::new(constant_model());
    let mesh = build_mesh(16).unwrap();
    let pipe = build_frames(&f, &mesh, &FrameOptions::default()).unwrap();
    assert_eq!(pipe.skeleton.vertex_residual, 0.0);
    assert_eq!(pipe.skeleton.edge_residual, 0.0);
    for v in pipe.radial.vectors.iter().flatten() {
        assert!(frob(&(v - e1(2))) < 1e-15);
    }
    assert_eq!(pipe.radial.singular_points, vec![mesh.center()]);
    let g = gradient_bound(&pipe.radial);
    assert_eq!(g.sup_weighted, 0.0);
    let smoothed = pipe.smoothed.unwrap();
    assert!(max_distance(&smoothed, &pipe.radial) < 1e-12);
    let m = mollify_reproject(&smoothed, &f, 3.0 / 16.0).unwrap();
    assert!(max_distance(&m, &smoothed) < 1e-12);
}

#[test]
fn skeleton_and_radial_frames_on_both_phases() {
    let mesh = build_mesh(64).unwrap();
    for f in [haldane(0.0), haldane(1.0)] {
        let pipe = build_frames(&f, &mesh, &FrameOptions::default()).unwrap();
        assert!(pipe.skeleton.vertex_residual < 1e-6);
        assert!(pipe.skeleton.edge_residual < 1e-6);
        for fr in [Some(&pipe.radial), pipe.smoothed.as_ref()].into_iter().flatten() {
            let (orth, sub) = fr.residuals(&f).unwrap();
            assert!(orth <= TOL_ORTHONORMAL && sub <= TOL_SUBORDINATE);
        }
    }
}

#[test]
fn nontrivial_gradient_bound_is_mesh_stable() {
    let f = haldane(0.0);
    let sup = |n: usize| {
        let mesh = build_mesh(n).unwrap();
        let pipe = build_frames(&f, &mesh, &FrameOptions { smoothing_width: None, ..Default::default() }).unwrap();
        gradient_bound(&pipe.radial)
    };
    let (a, b) = (sup(64), sup(128));
    let ratio = b.sup_weighted / a.sup_weighted;
    assert!((0.5..=1.5).contains(&ratio), "ratio {ratio}");
    // The unweighted gradient blows up like 1/|k| at the singular point.
    assert!(b.sup_gradient > 1.5 * a.sup_gradient);
}

#[test]
fn trivial_smooth_frame_has_bounded_gradient() {
    let f = haldane(1.0);
    let report = |n: usize| {
        let mesh = build_mesh(n).unwrap();
        let pipe = build_frames(&f, &mesh, &FrameOptions::default()).unwrap();
        let sm = pipe.smoothed.expect("trivial phase smooths");
        assert!(sm.singular_points.is_empty());
        (gradient_bound(&sm), sm, mesh)
    };
    let (a, sm, mesh) = report(64);
    let (b, _, _) = report(128);
    assert!(b.sup_gradient <= 1.5 * a.sup_gradient);
    let inner = a.per_radius_profile[0].1;
    let outer = a.per_radius_profile.iter().map(|x| x.1).fold(0.0, f64::max);
    assert!(inner <= outer);
    let h = 4.0 / 64.0;
    let near0 = sm.max_increment(|i| near(&mesh, i, h));
    let all = sm.max_increment(|_| true);
    assert!(near0 <= all);
}

#[test]
fn whole_cell_smoothing_refused_on_nontrivial_phase() {
    let f = haldane(0.0);
    let mesh = build_mesh(32).unwrap();
    let pipe = build_frames(&f, &mesh, &FrameOptions::default()).unwrap();
    assert!(pipe.smoothed.is_none());
    assert!(pipe.smoothing_error.is_some());
    let off = mesh.index(16 + 3, 16 + 1);
    let err = local_smooth(&pipe.radial, &f, &Region::whole(&mesh, off), 1.0).unwrap_err();
    assert!(matches!(err, WdError::SmoothingGramSingular { .. }), "{err:?}");
}

#[test]
fn local_smoothing_repairs_a_seam() {
    let f = haldane(0.0);
    let n = 64;
    let mesh = build_mesh(n).unwrap();
    let pipe = build_frames(&f, &mesh, &FrameOptions { smoothing_width: None, ..Default::default() }).unwrap();
    let r0 = DEFAULT_SEAM_RADIUS;
    let jump = C64::from_polar(1.0, 1.2);
    let mut seamed = pipe.radial.clone();
    for (i, v) in seamed.vectors.iter_mut().enumerate() {
        if let Some(v) = v {
            if near(&mesh, i, r0) {
                *v *= jump;
            }
        }
    }
    let h = mesh.step;
    let band = |i: usize| {
        let k = mesh.points[i];
        (k[0].hypot(k[1]) - r0).abs() <= 2.0 * h
    };
    let region = Region::annulus(&mesh, mesh.center(), r0 - 4.0 * h, r0 + 4.0 * h);
    let smoothed = local_smooth(&seamed, &f, &region, 2.0 * h).unwrap();
    let before = seamed.max_increment(band);
    let after = smoothed.max_increment(band);
    assert!(after < 0.5 * before, "before {before} after {after}");
    for i in 0..mesh.len() {
        if !region.mask[i] {
            assert_eq!(smoothed.vectors[i], seamed.vectors[i]);
        }
    }
    let (orth, sub) = smoothed.residuals(&f).unwrap();
    assert!(orth <= TOL_ORTHONORMAL && sub <= TOL_SUBORDINATE);
}

#[test]
fn mollify_reproject_behaviour() {
    let n = 64;
    let mesh = build_mesh(n).unwrap();
    let triv = haldane(1.0);
    let sm = build_frames(&triv, &mesh, &FrameOptions::default()).unwrap().smoothed.unwrap();
    let dists: Vec<f64> = [4.0, 2.0, 1.0]
        .iter()
        .map(|w| {
            let out = mollify_reproject(&sm, &triv, w / n as f64).unwrap();
            for v in out.vectors.iter().flatten() {
                assert!(orthonormality_error(v) < 1e-10);
            }
            max_distance(&out, &sm)
        })
        .collect();
    assert!(dists[0] > dists[1] && dists[1] > dists[2], "{dists:?}");

    let nontriv = haldane(0.0);
    let radial = build_frames(&nontriv, &mesh, &FrameOptions { smoothing_width: None, ..Default::default() }).unwrap().radial;
    let err = mollify_reproject(&radial, &nontriv, 4.0 / n as f64).unwrap_err();
    assert!(matches!(err, WdError::ReprojectionSingular { .. }), "{err:?}");
}

fn rank1(theta: f64) -> CMat {
    let v = CMat::from_column_slice(2, 1, &[c(theta.cos(), 0.0), c(theta.sin(), 0.0)]);
    &v * v.adjoint()
}

#[test]
fn kato_nagy_examples() {
    let p = rank1(0.0);
    assert!(frob(&(kato_nagy(&p, &p).unwrap() - identity(2))) < 1e-15);
    let q = rank1(0.3);
    let w = kato_nagy(&q, &p).unwrap();
    assert!(frob(&(&w * &q * w.adjoint() - &p)) < 1e-12);
    assert!(frob(&(w.adjoint() * &w - identity(2))) < 1e-12);
    assert!(matches!(kato_nagy(&rank1(PI / 2.0), &p), Err(WdError::ProjectorsTooFar(_))));
}

#[test]
fn gram_schmidt_examples() {
    let s = 1.0 / 2f64.sqrt();
    let v = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(s, 0.0), c(0.0, 0.0), c(s, 0.0)]);
    let a = gram_schmidt(&v).unwrap();
    let b = gram_schmidt_sequential(&v).unwrap();
    assert!(frob(&(&a - identity(2))) < 1e-12);
    assert!(frob(&(a - b)) < 1e-12);
    let q = identity(3).columns(0, 2).into_owned();
    assert!(frob(&(gram_schmidt(&q).unwrap() - &q)) < 1e-12);
    let par = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
    assert!(matches!(gram_schmidt(&par), Err(WdError::NearDependent(_))));
}

fn cmat(n: usize, m: usize, entries: &[(f64, f64)]) -> CMat {
    CMat::from_iterator(n, m, entries.iter().map(|&(a, b)| c(a, b)))
}

fn hermitian(n: usize, entries: &[(f64, f64)]) -> CMat {
    let a = cmat(n, n, entries);
    (&a + a.adjoint()) * c(0.5, 0.0)
}

fn random_projector(n: usize, m: usize, entries: &[(f64, f64)]) -> CMat {
    let (_, vecs) = wd_core::linalg::eigh(&hermitian(n, entries));
    let b = vecs.columns(0, m).into_owned();
    &b * b.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gram_schmidt_formula_matches_sequential(
        (n, m, entries) in (1usize..=5).prop_flat_map(|n| (Just(n), 1usize..=n.min(3)))
            .prop_flat_map(|(n, m)| (Just(n), Just(m), prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * m)))
    ) {
        let mut v = cmat(n, m, &entries);
        // Shift towards a well-conditioned frame.
        for j in 0..m {
            v[(j, j)] += c(2.0, 0.0);
        }
        let a = gram_schmidt(&v).unwrap();
        let b = gram_schmidt_sequential(&v).unwrap();
        prop_assert!(frob(&(&a - &b)) < 1e-9);
        prop_assert!(orthonormality_error(&a) < 1e-9);
    }

    #[test]
    fn kato_nagy_intertwines(
        (n, m, e1, e2, scale) in (2usize..=5).prop_flat_map(|n| (Just(n), 1usize..n))
            .prop_flat_map(|(n, m)| (
                Just(n), Just(m),
                prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n),
                prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n),
                0.0f64..1.0,
            ))
    ) {
        let p0 = random_projector(n, m, &e1);
        let h = hermitian(n, &e2);
        // Rotate p0 by exp(i t H) with t shrunk until |P - P0| <= 0.9.
        let mut t = scale;
        let p = loop {
            let u = herm_fn(&(&h * c(t, 0.0)), |x| C64::from_polar(1.0, x));
            let p = &u * &p0 * u.adjoint();
            if wd_core::linalg::op_norm(&(&p - &p0)) <= 0.9 {
                break p;
            }
            t *= 0.5;
        };
        let w = kato_nagy(&p, &p0).unwrap();
        prop_assert!(frob(&(&w * &p * w.adjoint() - &p0)) <= 1e-9);
        prop_assert!(frob(&(w.adjoint() * &w - identity(n))) <= 1e-9);
    }
}

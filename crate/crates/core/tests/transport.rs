mod common;

use common::*;
use wd_core::linalg::{c, frob, identity, CMat, C64};
use wd_core::model::{ModelFamily, ProjectorFamily};
use wd_core::transport::*;
use wd_core::WdError;

#[test]
fn constant_family_transport_is_identity() {
    let f = ModelFamily::new(constant_model());
    let t = transport(&f, [0.3, 0.1], [-0.4, 0.2], 64).unwrap();
    assert_eq!(t.matrix, identity(2));
}

#[test]
fn unitarity_and_group_property() {
    let f = haldane(0.0);
    let t = transport(&f, [0.5, 0.0], [0.0, 0.0], 256).unwrap();
    assert!(t.unitarity_error() < 1e-10);
    let xy = transport(&f, [0.5, 0.0], [0.25, 0.0], 128).unwrap();
    let yz = transport(&f, [0.25, 0.0], [0.0, 0.0], 128).unwrap();
    assert!(frob(&(&xy.matrix * &yz.matrix - &t.matrix)) < 1e-6);
}

#[test]
fn fourth_order_convergence() {
    for f in [haldane(0.0), haldane(1.0)] {
        let (x, y) = ([0.37, -0.21], [-0.12, 0.29]);
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&s| {
                let t = transport(&f, x, y, s).unwrap();
                assert!(t.unitarity_error() <= TOL_UNITARY);
                t.intertwining_error(&f).unwrap()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..=24.0).contains(&ratio), "ratio {ratio}");
            assert!(ratio.log2() >= 3.5);
        }
    }
}

#[test]
fn transport_is_lattice_periodic() {
    let f = haldane(0.0);
    let a = transport(&f, [0.3, 0.2], [-0.1, 0.05], 200).unwrap();
    let b = transport(&f, [-0.7, 1.2], [-1.1, 1.05], 200).unwrap();
    assert!(frob(&(a.matrix - b.matrix)) <= 1e-9);
}

#[test]
fn holonomy_log_examples() {
    let h = holonomy_log(&identity(2)).unwrap();
    assert!(frob(&h.m) < 1e-15);
    let mut u = identity(2);
    u[(0, 0)] = c(0.0, 1.0);
    let h = holonomy_log(&u).unwrap();
    assert!((h.m[(0, 0)].re - std::f64::consts::FRAC_PI_2).abs() < 1e-14);
    assert!(h.m[(1, 1)].norm() < 1e-14);
    assert!(frob(&(h.exp_i(1.0) - &u)) < 1e-14);
    u[(0, 0)] = c(-1.0, 0.0);
    assert!(matches!(holonomy_log(&u), Err(WdError::BranchDegenerate(_))));
}

#[test]
fn line_frame_periodic_and_linear() {
    let f = ModelFamily::new(constant_model());
    let lf = line_frame(&f, [1.0, 0.0], [-0.5, 0.2], &e1(2), 16, 256).unwrap();
    assert!(lf.samples.iter().all(|s| frob(&(s - e1(2))) < 1e-15));

    let f = haldane(0.0);
    let base = [-0.5, -0.5];
    let phi0 = f.basis(base).unwrap();
    let lf = line_frame(&f, [0.0, 1.0], base, &phi0, 64, 256).unwrap();
    assert!(lf.periodicity_residual() < 1e-6);
    for s in &lf.samples {
        let p = f.projector([0.0, 0.0]).unwrap();
        let _ = p;
        assert!((s.adjoint() * s)[(0, 0)].re - 1.0 < 1e-12);
    }
    let phase = C64::from_polar(1.0, 0.7);
    let rotated: CMat = &phi0 * phase;
    let lf2 = line_frame(&f, [0.0, 1.0], base, &rotated, 64, 256).unwrap();
    for (a, b) in lf.samples.iter().zip(&lf2.samples) {
        assert!(frob(&(a * phase - b)) < 1e-12);
    }
    let mid = lf.eval(&f, 0.5).unwrap();
    assert!(frob(&(mid - &lf.samples[32])) < 1e-15);
    let off = lf.eval(&f, 0.4321).unwrap();
    let p = f.projector([-0.5, -0.5 + 0.4321]).unwrap();
    assert!(frob(&(&p * &off - &off)) < 1e-8);
}

#![allow(dead_code)]

use std::f64::consts::PI;

use wd_core::linalg::{c, CMat};
use wd_core::model::{build_haldane, build_hofstadter, BlochModel, ModelFamily};

pub fn haldane(m: f64) -> ModelFamily {
    ModelFamily::new(build_haldane(1.0, 0.1, PI / 2.0, m).unwrap())
}

pub fn hofstadter13() -> ModelFamily {
    ModelFamily::new(build_hofstadter(1, 3).unwrap())
}

/// Constant two-band model `diag(-1, +1)` with the lower band occupied.
pub fn constant_model() -> BlochModel {
    let mut h = CMat::zeros(2, 2);
    h[(0, 0)] = c(-1.0, 0.0);
    h[(1, 1)] = c(1.0, 0.0);
    BlochModel::constant(h, 0..1).unwrap()
}

pub fn e1(n: usize) -> CMat {
    let mut v = CMat::zeros(n, 1);
    v[(0, 0)] = c(1.0, 0.0);
    v
}

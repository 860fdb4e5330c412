//! Gram-type integrals `integral Y^dagger Z dx` of sampled matrix solutions.
//!
//! The samples carry derivatives, so each sub-interval uses the
//! endpoint-corrected trapezoid rule
//! `s/2 (g_a + g_b) + s^2/12 (g'_a - g'_b)`, which is fourth-order accurate.

use crate::matcore::CMat;

/// Sampled matrix function `Y` with derivative `Y'` on a uniform grid.
#[derive(Clone, Copy)]
pub struct Sampled<'a> {
    pub val: &'a [CMat],
    pub der: &'a [CMat],
    pub step: f64,
}

impl<'a> Sampled<'a> {
    pub fn new(val: &'a [CMat], der: &'a [CMat], step: f64) -> Self {
        assert_eq!(val.len(), der.len());
        Sampled { val, der, step }
    }

    pub fn len(&self) -> usize {
        self.val.len()
    }

    pub fn is_empty(&self) -> bool {
        self.val.is_empty()
    }
}

fn gram_value(y: &Sampled, z: &Sampled, j: usize) -> (CMat, CMat) {
    let yt = y.val[j].adjoint();
    let g = &yt * &z.val[j];
    let dg = y.der[j].adjoint() * &z.val[j] + yt * &z.der[j];
    (g, dg)
}

/// `integral_{x_j}^{x_{j+1}} Y^dagger Z`.
pub fn interval(y: &Sampled, z: &Sampled, j: usize) -> CMat {
    let s = y.step;
    let (ga, dga) = gram_value(y, z, j);
    let (gb, dgb) = gram_value(y, z, j + 1);
    (ga + gb) * num_complex::Complex64::from(s / 2.0)
        + (dga - dgb) * num_complex::Complex64::from(s * s / 12.0)
}

/// `integral_0^{x_last} Y^dagger Z`.
pub fn total(y: &Sampled, z: &Sampled) -> CMat {
    let mut acc = CMat::zeros(y.val[0].ncols(), z.val[0].ncols());
    for j in 0..y.len().saturating_sub(1) {
        acc += interval(y, z, j);
    }
    acc
}

/// `out[j] = integral_0^{x_j} Y^dagger Z`.
pub fn cumulative_from_start(y: &Sampled, z: &Sampled) -> Vec<CMat> {
    let mut out = Vec::with_capacity(y.len());
    let mut acc = CMat::zeros(y.val[0].ncols(), z.val[0].ncols());
    out.push(acc.clone());
    for j in 0..y.len().saturating_sub(1) {
        acc += interval(y, z, j);
        out.push(acc.clone());
    }
    out
}

/// `out[j] = tail + integral_{x_j}^{x_last} Y^dagger Z`.
pub fn cumulative_to_end(y: &Sampled, z: &Sampled, tail: CMat) -> Vec<CMat> {
    let len = y.len();
    let mut out = vec![tail.clone(); len];
    let mut acc = tail;
    for j in (0..len.saturating_sub(1)).rev() {
        acc += interval(y, z, j);
        out[j] = acc.clone();
    }
    out
}

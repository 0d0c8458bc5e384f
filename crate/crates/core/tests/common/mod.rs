//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use airvel::dynamics::TrajectorySpec;
use airvel::geometry::{Mat3, Vec3};
use airvel::observer::Mat7;

pub fn cross_matrix(u: &Vec3) -> Mat3 {
    Mat3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Error-state matrix along the true trajectory, built from the inertial
/// specific force `v̇ − g e₃` rather than from body quantities.
pub fn oracle_state_matrix(spec: &TrajectorySpec, t: f64) -> Mat7 {
    let f = spec.inertial_specific_force(t);
    let mut a = Mat7::zeros();
    let block = -cross_matrix(&f);
    for i in 0..3 {
        for j in 0..3 {
            a[(3 + i, j)] = block[(i, j)];
        }
    }
    a[(6, 5)] = 1.0;
    a
}

/// `Φ(t, τ)` from RK4 on `dΦ/ds = A(s) Φ`, `Φ(τ, τ) = I`.
pub fn rk4_transition(spec: &TrajectorySpec, tau: f64, t: f64, step: f64) -> Mat7 {
    let n = ((t - tau) / step).round().max(1.0) as usize;
    let h = (t - tau) / n as f64;
    let mut phi = Mat7::identity();
    for k in 0..n {
        let s = tau + k as f64 * h;
        let a1 = oracle_state_matrix(spec, s);
        let a2 = oracle_state_matrix(spec, s + 0.5 * h);
        let a4 = oracle_state_matrix(spec, s + h);
        let k1 = a1 * phi;
        let k2 = a2 * (phi + k1 * (0.5 * h));
        let k3 = a2 * (phi + k2 * (0.5 * h));
        let k4 = a4 * (phi + k3 * h);
        phi += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    }
    phi
}

/// RK4 for a matrix ODE `Ṗ = f(t, P)`.
pub fn rk4_matrix<F>(p0: Mat7, t0: f64, t1: f64, step: f64, f: F) -> Mat7
where
    F: Fn(f64, &Mat7) -> Mat7,
{
    let n = ((t1 - t0) / step).round().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    let mut p = p0;
    for k in 0..n {
        let s = t0 + k as f64 * h;
        let k1 = f(s, &p);
        let k2 = f(s + 0.5 * h, &(p + k1 * (0.5 * h)));
        let k3 = f(s + 0.5 * h, &(p + k2 * (0.5 * h)));
        let k4 = f(s + h, &(p + k3 * h));
        p += (k1 + 2.0 * k2 + 2.0 * k3 + k4) * (h / 6.0);
    }
    p
}

pub fn rel_frobenius(a: &Mat7, reference: &Mat7) -> f64 {
    (a - reference).norm() / reference.norm()
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2) && n > 0);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use roesser2d::bias::StructuredOperators;
use roesser2d::hankel::{bold_block, build_bold, build_star};
use roesser2d::linalg::{singular_values, Mat};
use roesser2d::model::{RoesserModel, Simulation};

pub fn normal(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Random model whose full `A` has spectral norm `norm`, so the coupled
/// covariance equations contract. With `noise` a random positive definite
/// `[[Q,S],[Sᵀ,R]]` is attached.
pub fn random_model(seed: u64, h: usize, v: usize, y: usize, norm: f64, noise: bool) -> RoesserModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = h + v;
    let mut a = normal(&mut rng, nx, nx);
    a *= norm / singular_values(&a)[0];
    let c = normal(&mut rng, y, nx);
    let k = normal(&mut rng, nx, y) * 0.5;
    let l = normal(&mut rng, y, y);
    let re = &l * l.transpose() + Mat::identity(y, y) * 0.5;
    let blk = |m: &Mat, r0, c0, r, cc| m.view((r0, c0), (r, cc)).into_owned();
    let m = RoesserModel::new(
        blk(&a, 0, 0, h, h),
        blk(&a, 0, h, h, v),
        blk(&a, h, 0, v, h),
        blk(&a, h, h, v, v),
        blk(&c, 0, 0, y, h),
        blk(&c, 0, h, y, v),
        blk(&k, 0, 0, h, y),
        blk(&k, h, 0, v, y),
        re,
    )
    .unwrap();
    if !noise {
        return m;
    }
    let l = normal(&mut rng, nx + y, nx + y);
    let w = &l * l.transpose() + Mat::identity(nx + y, nx + y) * 0.1;
    m.with_noise(blk(&w, 0, 0, nx, nx), blk(&w, nx, nx, y, y), blk(&w, 0, nx, nx, y)).unwrap()
}

fn rel(lhs: &Mat, rhs: &Mat) -> f64 {
    (lhs - rhs).norm() / lhs.norm().max(f64::MIN_POSITIVE)
}

/// Relative residuals of the Hankel-block subspace equations on a simulated
/// grid with zero initial vertical states.
pub fn identity_residuals(ops: &StructuredOperators, sim: &Simulation, i: usize, j: usize) -> Vec<(&'static str, f64)> {
    let big_m = sim.y.cols();
    let bold = |g, r0, depth| build_bold(g, r0, depth, j, big_m).unwrap();
    let yp = bold(&sim.y, 0, i);
    let yf = bold(&sim.y, i, i);
    let xp_h = bold(&sim.xh, 0, 1);
    let xf_h = bold(&sim.xh, i, 1);
    let xp_vh = bold(&sim.xv, 0, i);
    let xf_vh = bold(&sim.xv, i, i);
    let ep = bold(&sim.e, 0, i);
    let ef = bold(&sim.e, i, i);

    let yp1 = rel(&yp, &(&ops.gamma_h * &xp_h + &ops.gamma_vh * &xp_vh + &ops.k_h * &ep));
    let yf1 = rel(&yf, &(&ops.gamma_h * &xf_h + &ops.gamma_vh * &xf_vh + &ops.k_h * &ef));
    let xf1 = rel(&xf_h, &(&ops.a1_i * &xp_h + &ops.phi_vh * &xp_vh + &ops.l_h * &ep));

    let (mut xs1, mut xs2) = (0.0f64, 0.0f64);
    for k in 0..big_m {
        let b = |m: &Mat, k| bold_block(m, k, j);
        let next_p = &ops.theta_vh * b(&xp_h, k) + &ops.a_vh * b(&xp_vh, k) + &ops.k_vh * b(&ep, k);
        let next_f = &ops.theta_vh * b(&xf_h, k) + &ops.a_vh * b(&xf_vh, k) + &ops.k_vh * b(&ef, k);
        xs1 = xs1.max(rel(&b(&xp_vh, k + 1), &next_p));
        xs2 = xs2.max(rel(&b(&xf_vh, k + 1), &next_f));
    }

    let star = |m: &Mat| build_star(&(0..=big_m).map(|k| bold_block(m, k, j)).collect::<Vec<_>>()).unwrap();
    let (sxp, sxf, sep, sef) = (star(&xp_h), star(&xf_h), star(&ep), star(&ef));
    let axpv = rel(&xp_vh, &(&ops.q1 * &sxp + &ops.q2 * &sep));
    let axfv = rel(&xf_vh, &(&ops.q1 * &sxf + &ops.q2 * &sef));
    let star = rel(&sxf, &(&ops.ba_m_h * &sxp + &ops.bk_m_h * &sep));
    vec![
        ("past_outputs", yp1),
        ("future_outputs", yf1),
        ("future_states", xf1),
        ("past_vertical_step", xs1),
        ("future_vertical_step", xs2),
        ("past_vertical_sum", axpv),
        ("future_vertical_sum", axfv),
        ("horizontal_star", star),
    ]
}

fn sym_sqrt(m: &Mat, power: f64) -> Mat {
    let e = m.clone().symmetric_eigen();
    let d = Mat::from_diagonal(&e.eigenvalues.map(|x| x.powf(power)));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Random model with noise whose stationary state covariance is exactly
/// block diagonal: `Π = blockdiag(Π_h, Π_v)` is drawn first, then
/// `A = Π^{1/2}·B·Π^{-1/2}` with `‖B‖ = norm` and `Q = Π − A·Π·Aᵀ`.
/// `S = Q^{1/2}·Z·R^{1/2}` with `‖Z‖ = 1/2` keeps `[[Q,S],[Sᵀ,R]]` positive.
pub fn random_block_stationary_model(seed: u64, h: usize, v: usize, y: usize, norm: f64) -> RoesserModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = h + v;
    let lh = normal(&mut rng, h, h);
    let lv = normal(&mut rng, v, v);
    let mut pi = Mat::zeros(nx, nx);
    pi.view_mut((0, 0), (h, h)).copy_from(&(&lh * lh.transpose() + Mat::identity(h, h)));
    pi.view_mut((h, h), (v, v)).copy_from(&(&lv * lv.transpose() + Mat::identity(v, v)));
    let mut b = normal(&mut rng, nx, nx);
    b *= norm / singular_values(&b)[0];
    let a = sym_sqrt(&pi, 0.5) * b * sym_sqrt(&pi, -0.5);
    let q = &pi - &a * &pi * a.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let lr = normal(&mut rng, y, y);
    let r = &lr * lr.transpose() + Mat::identity(y, y);
    let mut z = normal(&mut rng, nx, y);
    z *= 0.5 / singular_values(&z)[0];
    let s = sym_sqrt(&q, 0.5) * z * sym_sqrt(&r, 0.5);
    let c = normal(&mut rng, y, nx);
    let blk = |m: &Mat, r0, c0, rr, cc| m.view((r0, c0), (rr, cc)).into_owned();
    RoesserModel::new(
        blk(&a, 0, 0, h, h),
        blk(&a, 0, h, h, v),
        blk(&a, h, 0, v, h),
        blk(&a, h, h, v, v),
        blk(&c, 0, 0, y, h),
        blk(&c, 0, h, y, v),
        Mat::zeros(h, y),
        Mat::zeros(v, y),
        Mat::identity(y, y),
    )
    .unwrap()
    .with_noise(q, r, s)
    .unwrap()
}

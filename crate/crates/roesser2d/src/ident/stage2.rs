//! Oblique refinement of the state estimates for one direction.
//!
//! The data stack is `[X_f^vh; X_p^vh; Y_p; Y_f]`, so one RQ factorization
//! serves both the coarse split `[X_f^vh; W_p; Y_f]` and the finer split
//! that separates `X_p^vh` from `Y_p`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::hankel::{bold_block, build_bold, required_rows};
use crate::linalg::{
    hankel_generators, hss_right_identity, kron_eye, lttss, orth_complement, pseudo_inverse, rq_decompose,
    singular_values, vstack, Mat, COND_LIMIT,
};

/// Blocks of `L` and `Q` from the RQ factorization of the data stack.
#[derive(Debug, Clone)]
pub struct RqBlocks {
    pub n_v: usize,
    pub n_y: usize,
    pub i: usize,
    pub l: Mat,
    pub q: Mat,
}

impl RqBlocks {
    fn cuts(&self) -> [usize; 4] {
        let a1 = self.n_v * self.i;
        let a2 = 2 * a1;
        let a3 = a2 + self.n_y * self.i;
        [a1, a2, a3, a3 + self.n_y * self.i]
    }

    fn lb(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> Mat {
        self.l.view((r0, c0), (r1 - r0, c1 - c0)).into_owned()
    }

    pub fn r11(&self) -> Mat {
        let [a1, ..] = self.cuts();
        self.lb(0, a1, 0, a1)
    }
    pub fn r21(&self) -> Mat {
        let [a1, _, a3, _] = self.cuts();
        self.lb(a1, a3, 0, a1)
    }
    pub fn r22(&self) -> Mat {
        let [a1, _, a3, _] = self.cuts();
        self.lb(a1, a3, a1, a3)
    }
    pub fn r31(&self) -> Mat {
        let [a1, _, a3, a4] = self.cuts();
        self.lb(a3, a4, 0, a1)
    }
    pub fn r32(&self) -> Mat {
        let [a1, _, a3, a4] = self.cuts();
        self.lb(a3, a4, a1, a3)
    }
    pub fn r33(&self) -> Mat {
        let [_, _, a3, a4] = self.cuts();
        self.lb(a3, a4, a3, a4)
    }
    /// `R_21^1`, `R_22^1`: the `X_p^vh` rows.
    pub fn r21_1(&self) -> Mat {
        let [a1, a2, ..] = self.cuts();
        self.lb(a1, a2, 0, a1)
    }
    pub fn r22_1(&self) -> Mat {
        let [a1, a2, ..] = self.cuts();
        self.lb(a1, a2, a1, a2)
    }
    /// `R_21^2`, `R_22^2`, `R_22^3`: the `Y_p` rows.
    pub fn r21_2(&self) -> Mat {
        let [a1, a2, a3, _] = self.cuts();
        self.lb(a2, a3, 0, a1)
    }
    pub fn r22_2(&self) -> Mat {
        let [a1, a2, a3, _] = self.cuts();
        self.lb(a2, a3, a1, a2)
    }
    pub fn r22_3(&self) -> Mat {
        let [_, a2, a3, _] = self.cuts();
        self.lb(a2, a3, a2, a3)
    }
    /// `R_32^1`, `R_32^2`: the `Y_f` rows against `X_p^vh` and `Y_p`.
    pub fn r32_1(&self) -> Mat {
        let [a1, a2, a3, a4] = self.cuts();
        self.lb(a3, a4, a1, a2)
    }
    pub fn r32_2(&self) -> Mat {
        let [_, a2, a3, a4] = self.cuts();
        self.lb(a3, a4, a2, a3)
    }

    pub fn q_rows(&self, r0: usize, r1: usize) -> Mat {
        self.q.rows(r0, r1 - r0).into_owned()
    }

    /// `E_f = R33·Q3`.
    pub fn innovations(&self) -> Mat {
        let [_, _, a3, a4] = self.cuts();
        self.r33() * self.q_rows(a3, a4)
    }

    /// `‖stack − L·Q‖ / ‖stack‖`.
    pub fn reconstruction_error(&self, stack: &Mat) -> f64 {
        let s = stack.norm();
        if s == 0.0 {
            0.0
        } else {
            (stack - &self.l * &self.q).norm() / s
        }
    }
}

/// Factors `[X_f^vh; X_p^vh; Y_p; Y_f]`.
pub fn stage2_rq(xf_vh: &Mat, xp_vh: &Mat, yp: &Mat, yf: &Mat, n_y: usize, i: usize) -> Result<RqBlocks> {
    let n_v = xf_vh.nrows() / i;
    if xf_vh.nrows() != n_v * i || xp_vh.nrows() != n_v * i || yp.nrows() != n_y * i || yf.nrows() != n_y * i {
        return Err(Error::Dimension("stage-2 stack row counts do not match n_v*i and n_y*i".into()));
    }
    let stack = vstack(&[xf_vh, xp_vh, yp, yf]);
    let rq = rq_decompose(&stack)?;
    let blocks = RqBlocks { n_v, n_y, i, l: rq.l, q: rq.q };
    check_invertible(&blocks.r11(), "R11")?;
    check_invertible(&blocks.r22(), "R22")?;
    Ok(blocks)
}

fn check_invertible(l: &Mat, step: &str) -> Result<()> {
    let n = l.nrows();
    let dmax = (0..n).map(|k| l[(k, k)].abs()).fold(0.0, f64::max);
    let rank = (0..n).filter(|&k| l[(k, k)].abs() > 1e-10 * dmax && dmax > 0.0).count();
    if rank < n {
        return Err(Error::Singular { step: step.into(), rank, expected: n });
    }
    Ok(())
}

fn solve_lower(l: &Mat, b: &Mat, step: &str) -> Result<Mat> {
    l.solve_lower_triangular(b)
        .ok_or_else(|| Error::Singular { step: step.into(), rank: 0, expected: l.nrows() })
}

/// `R32·R22⁻¹·W_p`, its factorization `Γ_i^h·X̂_f^h` and the order used.
#[derive(Debug, Clone)]
pub struct Oblique {
    pub value: Mat,
    pub singular_values: Vec<f64>,
    pub gamma_h: Mat,
    pub xf_h: Mat,
}

pub fn oblique(blocks: &RqBlocks, wp: &Mat, n_h: usize) -> Result<Oblique> {
    let value = blocks.r32() * solve_lower(&blocks.r22(), wp, "R22")?;
    let svd = value.clone().svd(true, false);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = idx.iter().map(|&k| svd.singular_values[k]).collect();
    if n_h > sv.len() {
        return Err(Error::Input(format!("order {n_h} exceeds n_y*i = {}", value.nrows())));
    }
    let u = svd.u.expect("svd u");
    let mut gamma_h = Mat::zeros(value.nrows(), n_h);
    for (c, &k) in idx.iter().take(n_h).enumerate() {
        gamma_h.set_column(c, &(u.column(k) * sv[c].sqrt()));
    }
    let xf_h = pseudo_inverse(&gamma_h) * &value;
    Ok(Oblique { value, singular_values: sv, gamma_h, xf_h })
}

/// Lower block-Toeplitz `Γ_i^vh` with `Γ·R11 ≈ R31 − R32·R22⁻¹·R21`.
pub fn recover_gamma_vh(blocks: &RqBlocks) -> Result<Mat> {
    let (n_y, n_v, i) = (blocks.n_y, blocks.n_v, blocks.i);
    let rhs = blocks.r31() - blocks.r32() * solve_lower(&blocks.r22(), &blocks.r21(), "R22")?;
    lttss(&Mat::identity(n_y * i, n_y * i), &blocks.r11(), &rhs, n_y, n_v, i)
}

/// Recovers `K_i^h` and the block-Hankel innovations `E_f^h(k)` from `E_f`.
///
/// The first `n_y` rows of every `E_f(k)` are taken as the innovation
/// sequence; its Hankel matrix of width `j−i+1` gives the regressor `E_f2`.
pub fn recover_innovations_operator(ef: &Mat, n_y: usize, i: usize, j: usize, big_m: usize) -> Result<(Mat, Mat)> {
    if j <= i {
        return Err(Error::Input(format!("innovations recovery needs j > i, got i={i}, j={j}")));
    }
    let jj = j - i + 1;
    let nk = big_m + 1;
    let mut ef1 = Mat::zeros(n_y * i, jj * nk);
    let mut ef2 = Mat::zeros(n_y * i, jj * nk);
    let mut e0s = Vec::with_capacity(nk);
    for k in 0..nk {
        let efk = bold_block(ef, k, j);
        let e0 = efk.rows(0, n_y).into_owned();
        ef1.columns_mut(k * jj, jj).copy_from(&efk.columns(0, jj));
        for a in 0..i {
            ef2.view_mut((a * n_y, k * jj), (n_y, jj)).copy_from(&e0.columns(a, jj));
        }
        e0s.push(e0);
    }
    let scale = (jj * nk) as f64;
    let v1 = &ef1 * ef2.transpose() / scale;
    let v2 = &ef2 * ef2.transpose() / scale;
    let v = lttss(&Mat::identity(n_y * i, n_y * i), &v2, &v1, n_y, n_y, i)?;
    let k0 = v.view((0, 0), (n_y, n_y)).into_owned();
    let k0_inv = k0.clone().try_inverse().ok_or(Error::Singular { step: "K0".into(), rank: 0, expected: n_y })?;
    let sv = singular_values(&k0);
    if sv.last().copied().unwrap_or(0.0) <= 1e-12 * sv[0] {
        return Err(Error::Singular { step: "K0".into(), rank: 0, expected: n_y });
    }
    let mut k_h = v * kron_eye(i, &k0_inv);
    // the diagonal blocks are the identity by construction
    for a in 0..i {
        k_h.view_mut((a * n_y, a * n_y), (n_y, n_y)).fill_with_identity();
    }
    let pieces: Result<Vec<Mat>> = (0..nk)
        .into_par_iter()
        .map(|k| {
            let pins: Vec<(usize, Mat)> = (0..j).map(|g| (g, e0s[k].columns(g, 1).into_owned())).collect();
            hss_right_identity(&k_h, &bold_block(ef, k, j), n_y, 1, i, j, &pins)
        })
        .collect();
    Ok((k_h, hstack_owned(pieces?)))
}

fn hstack_owned(parts: Vec<Mat>) -> Mat {
    let refs: Vec<&Mat> = parts.iter().collect();
    crate::linalg::hstack(&refs)
}

/// Per-`k` block-Hankel solve `op·X(k) ≈ rhs(k)` with optional generator pins.
pub fn hankel_solve_all(
    op: &Mat,
    rhs: &Mat,
    br: usize,
    i: usize,
    j: usize,
    big_m: usize,
    pins: impl Fn(usize) -> Vec<(usize, Mat)> + Sync,
) -> Result<Mat> {
    let pieces: Result<Vec<Mat>> = (0..=big_m)
        .into_par_iter()
        .map(|k| hss_right_identity(op, &bold_block(rhs, k, j), br, 1, i, j, &pins(k)))
        .collect();
    Ok(hstack_owned(pieces?))
}

/// `X̂_f^vh(k)` from `Ẑ_f^vh = Y_f − Γ_i^h·X̂_f^h − K_i^h·E_f^h`.
pub fn recover_future_vertical(
    yf: &Mat,
    gamma_h: &Mat,
    xf_h: &Mat,
    k_h: &Mat,
    ef_h: &Mat,
    gamma_vh: &Mat,
    i: usize,
    j: usize,
    big_m: usize,
) -> Result<Mat> {
    let zf = yf - gamma_h * xf_h - k_h * ef_h;
    let n_v = gamma_vh.ncols() / i;
    hankel_solve_all(gamma_vh, &zf, n_v, i, j, big_m, |_| Vec::new())
}

/// `Ẑ_p^vh = Y_p − (R21² − R22²·(R22¹)⁻¹·R21¹)·Q1 − R22³·Q22`.
pub fn past_vertical_residual(blocks: &RqBlocks, yp: &Mat) -> Result<Mat> {
    let [a1, a2, a3, _] = blocks.cuts();
    let t = blocks.r21_2() - blocks.r22_2() * solve_lower(&blocks.r22_1(), &blocks.r21_1(), "R22^1")?;
    Ok(yp - t * blocks.q_rows(0, a1) - blocks.r22_3() * blocks.q_rows(a2, a3))
}

pub fn recover_past_vertical(blocks: &RqBlocks, yp: &Mat, gamma_vh: &Mat, j: usize, big_m: usize) -> Result<Mat> {
    check_invertible(&blocks.r22_1(), "R22^1")?;
    let zp = past_vertical_residual(blocks, yp)?;
    hankel_solve_all(gamma_vh, &zp, blocks.n_v, blocks.i, j, big_m, |_| Vec::new())
}

/// `E_p^h(k)` from `(Γ_i^h)^⊥·(Y_p − Γ_i^vh·X̂_p^vh) = (Γ_i^h)^⊥·K_i^h·E_p^h`.
///
/// Generators `i..i+j−2` of `E_p^h(k)` are the innovations `e_{i..2i+j−3}`,
/// shared with generators `0..j−2` of `E_f^h(k)`, and are pinned to them.
#[allow(clippy::too_many_arguments)]
pub fn recover_past_innovations(
    yp: &Mat,
    gamma_h: &Mat,
    gamma_vh: &Mat,
    xp_vh: &Mat,
    k_h: &Mat,
    ef_h: &Mat,
    n_y: usize,
    i: usize,
    j: usize,
    big_m: usize,
) -> Result<Mat> {
    let perp = orth_complement(gamma_h)?;
    let ypp = &perp * (yp - gamma_vh * xp_vh);
    let op = &perp * k_h;
    hankel_solve_all(&op, &ypp, n_y, i, j, big_m, |k| {
        let gens = hankel_generators(&bold_block(ef_h, k, j), n_y, 1, i, j);
        (0..j - 1).map(|g| (i + g, gens[g].clone())).collect()
    })
}

/// `X̂ = (Γ_i^h)†·(Y − Γ_i^vh·X^vh − K_i^h·E)`.
pub fn horizontal_states(y: &Mat, gamma_h: &Mat, gamma_vh: &Mat, x_vh: &Mat, k_h: &Mat, e: &Mat) -> Mat {
    pseudo_inverse(gamma_h) * (y - gamma_vh * x_vh - k_h * e)
}

/// `J = Z2·Z1⁻¹` with `Z1 = H·Hᵀ/j̄`, `Z2 = X̂_f^h·Hᵀ/j̄`.
#[derive(Debug, Clone)]
pub struct Regression {
    pub j: Mat,
    pub z1: Mat,
    pub z2: Mat,
    pub condition: f64,
}

impl Regression {
    pub fn a1_i(&self, n_h: usize) -> Mat {
        self.j.columns(0, n_h).into_owned()
    }
    pub fn phi_vh(&self, n_h: usize, n_v: usize, i: usize) -> Mat {
        self.j.columns(n_h, n_v * i).into_owned()
    }
    pub fn l_h(&self, n_h: usize, n_v: usize, i: usize) -> Mat {
        let c0 = n_h + n_v * i;
        self.j.columns(c0, self.j.ncols() - c0).into_owned()
    }
}

pub fn regress_dynamics(xf_h: &Mat, xp_h: &Mat, xp_vh: &Mat, ep_h: &Mat) -> Result<Regression> {
    let h = vstack(&[xp_h, xp_vh, ep_h]);
    let jbar = h.ncols() as f64;
    let z1 = &h * h.transpose() / jbar;
    let z2 = xf_h * h.transpose() / jbar;
    let sv = singular_values(&z1);
    let condition = match (sv.first(), sv.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        _ => f64::INFINITY,
    };
    if condition > COND_LIMIT {
        return Err(Error::IllConditioned(condition));
    }
    let ch = z1.clone().cholesky().ok_or(Error::IllConditioned(condition))?;
    let j = ch.solve(&z2.transpose()).transpose();
    Ok(Regression { j, z1, z2, condition })
}

/// `T_1^h = [Φ − A_1^i·Γ†·Γ^vh | 𝓛 − A_1^i·Γ†·K | A_1^i·Γ†]`.
pub fn t1_operator(a1_i: &Mat, phi: &Mat, l: &Mat, gamma_h: &Mat, gamma_vh: &Mat, k_h: &Mat) -> Mat {
    let ag = a1_i * pseudo_inverse(gamma_h);
    crate::linalg::hstack(&[&(phi - &ag * gamma_vh), &(l - &ag * k_h), &ag])
}

/// Full state grid from `X̂_p^h` (rows `0..j−1`) and `X̂_{f+}^h` (rows `j..N`),
/// and the overlap discrepancy on rows `2i..j−1`.
pub fn assemble_states(xp_h: &Mat, xf_plus: &Mat, i: usize, j: usize, big_m: usize) -> Result<(GridData, f64)> {
    if j < 2 * i {
        return Err(Error::Input(format!("state assembly needs j >= 2i, got i={i}, j={j}")));
    }
    let n = xp_h.nrows();
    let big_n = required_rows(i, j);
    let mut grid = GridData::zeros(n, big_n, big_m);
    let mut disc = 0.0;
    for k in 0..=big_m {
        for c in 0..j {
            grid.set(c, k, xp_h.column(k * j + c).as_slice());
        }
        for r in j..=big_n {
            grid.set(r, k, xf_plus.column(k * j + r - 2 * i).as_slice());
        }
        let w = j - 2 * i;
        let a = xp_h.columns(k * j + 2 * i, w);
        let b = xf_plus.columns(k * j, w);
        disc += (a - b).norm_squared();
    }
    Ok((grid, disc.sqrt()))
}

/// Everything the refinement produces for one direction.
#[derive(Debug, Clone)]
pub struct StageTwoState {
    pub i: usize,
    pub j: usize,
    pub n_h: usize,
    pub n_v: usize,
    pub n_y: usize,
    pub blocks: RqBlocks,
    pub oblique_singular_values: Vec<f64>,
    pub gamma_h: Mat,
    pub gamma_vh: Mat,
    pub k_h: Mat,
    pub ef_h: Mat,
    pub ep_h: Mat,
    pub xf_vh: Mat,
    pub xp_vh: Mat,
    pub xp_h: Mat,
    pub xf_h: Mat,
    pub xf_plus: Mat,
    pub regression: Regression,
    pub t1: Mat,
    pub grid: GridData,
    pub discrepancy: f64,
    pub residuals: Vec<(String, f64)>,
}

fn rel(a: &Mat, b: &Mat) -> f64 {
    let d = b.norm();
    if d == 0.0 {
        a.norm()
    } else {
        a.norm() / d
    }
}

/// Runs the refinement on the rows of `y`, with `x_other` the current
/// estimate of the state that propagates across scanlines.
pub fn stage2(y: &GridData, x_other: &GridData, i: usize, j: usize, n_h: usize) -> Result<StageTwoState> {
    let big_m = y.cols();
    if y.rows() != required_rows(i, j) || x_other.rows() != y.rows() || x_other.cols() != big_m {
        return Err(Error::Input(format!(
            "stage 2 needs grids with N=2i+j-2={} for i={i}, j={j}",
            required_rows(i, j)
        )));
    }
    if j < 2 * i {
        return Err(Error::Input(format!("stage 2 needs j >= 2i, got i={i}, j={j}")));
    }
    let n_y = y.dim();
    let n_v = x_other.dim();
    let yp = build_bold(y, 0, i, j, big_m)?;
    let yf = build_bold(y, i, i, j, big_m)?;
    let xf_vh0 = build_bold(x_other, i, i, j, big_m)?;
    let xp_vh0 = build_bold(x_other, 0, i, j, big_m)?;
    let blocks = stage2_rq(&xf_vh0, &xp_vh0, &yp, &yf, n_y, i)?;
    let wp = vstack(&[&xp_vh0, &yp]);
    let obl = oblique(&blocks, &wp, n_h)?;
    let gamma_h = obl.gamma_h.clone();
    let gamma_vh = recover_gamma_vh(&blocks)?;
    let ef = blocks.innovations();
    let (k_h, ef_h) = recover_innovations_operator(&ef, n_y, i, j, big_m)?;
    let xf_vh = recover_future_vertical(&yf, &gamma_h, &obl.xf_h, &k_h, &ef_h, &gamma_vh, i, j, big_m)?;
    let xp_vh = recover_past_vertical(&blocks, &yp, &gamma_vh, j, big_m)?;
    let ep_h = recover_past_innovations(&yp, &gamma_h, &gamma_vh, &xp_vh, &k_h, &ef_h, n_y, i, j, big_m)?;
    let xp_h = horizontal_states(&yp, &gamma_h, &gamma_vh, &xp_vh, &k_h, &ep_h);
    let xf_h = horizontal_states(&yf, &gamma_h, &gamma_vh, &xf_vh, &k_h, &ef_h);
    let regression = regress_dynamics(&xf_h, &xp_h, &xp_vh, &ep_h)?;
    let t1 = t1_operator(
        &regression.a1_i(n_h),
        &regression.phi_vh(n_h, n_v, i),
        &regression.l_h(n_h, n_v, i),
        &gamma_h,
        &gamma_vh,
        &k_h,
    );
    let xf_plus = &t1 * vstack(&[&xf_vh, &ef_h, &yf]);
    let (grid, discrepancy) = assemble_states(&xp_h, &xf_plus, i, j, big_m)?;
    let stack = vstack(&[&xf_vh0, &xp_vh0, &yp, &yf]);
    let residuals = vec![
        ("rq_reconstruction".to_string(), blocks.reconstruction_error(&stack)),
        ("oblique_factorization".to_string(), rel(&(&obl.value - &gamma_h * &obl.xf_h), &obl.value)),
        ("innovations_fit".to_string(), rel(&(&ef - &k_h * &ef_h), &ef)),
        (
            "past_outputs".to_string(),
            rel(&(&yp - &gamma_h * &xp_h - &gamma_vh * &xp_vh - &k_h * &ep_h), &yp),
        ),
        ("dynamics_regression".to_string(), rel(&(&xf_h - &regression.j * vstack(&[&xp_h, &xp_vh, &ep_h])), &xf_h)),
        ("overlap_discrepancy".to_string(), discrepancy / xp_h.norm().max(f64::MIN_POSITIVE)),
    ];
    Ok(StageTwoState {
        i,
        j,
        n_h,
        n_v,
        n_y,
        blocks,
        oblique_singular_values: obl.singular_values,
        gamma_h,
        gamma_vh,
        k_h,
        ef_h,
        ep_h,
        xf_vh,
        xp_vh,
        xp_h,
        xf_h,
        xf_plus,
        regression,
        t1,
        grid,
        discrepancy,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bias::build_operators;
    use crate::linalg::rel_diff;
    use crate::model::{construct_uncorrelated, simulate, InitialCondition, RoesserModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn coupled() -> RoesserModel {
        construct_uncorrelated(&RoesserModel::scalar(0.5, 0.2, 0.1, 0.4, 1.0, 1.0, 0.5, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn identity_stack_gives_identity_r() {
        let i = 2;
        let mut q = Mat::zeros(8, 20);
        for r in 0..8 {
            q[(r, 2 * r + 1)] = 1.0;
        }
        let rows = |a: usize| q.rows(a, 2).into_owned();
        let b = stage2_rq(&rows(0), &rows(2), &rows(4), &rows(6), 1, i).unwrap();
        assert!((&b.l - Mat::identity(8, 8)).amax() < 1e-14);
        assert!(b.r11().is_identity(1e-14));
        assert_eq!(b.r22().shape(), (4, 4));
        assert_eq!(b.r33().shape(), (2, 2));
    }

    #[test]
    fn split_blocks_tile_the_coarse_blocks() {
        let m = coupled();
        let (i, j, big_m) = (2, 30, 3);
        let sim = simulate(&m, required_rows(i, j), big_m, 5, InitialCondition::Zero).unwrap();
        let yp = build_bold(&sim.y, 0, i, j, big_m).unwrap();
        let yf = build_bold(&sim.y, i, i, j, big_m).unwrap();
        let xf = build_bold(&sim.xv, i, i, j, big_m).unwrap();
        let xp = build_bold(&sim.xv, 0, i, j, big_m).unwrap();
        let b = stage2_rq(&xf, &xp, &yp, &yf, 1, i).unwrap();
        let stack = vstack(&[&xf, &xp, &yp, &yf]);
        assert!(b.reconstruction_error(&stack) < 1e-10);
        let r21 = vstack(&[&b.r21_1(), &b.r21_2()]);
        assert_eq!(r21, b.r21());
        let r22 = b.r22();
        assert_eq!(r22.view((0, 0), (2, 2)).into_owned(), b.r22_1());
        assert_eq!(r22.view((2, 0), (2, 2)).into_owned(), b.r22_2());
        assert_eq!(r22.view((2, 2), (2, 2)).into_owned(), b.r22_3());
        assert_eq!(r22.view((0, 2), (2, 2)).amax(), 0.0);
        assert_eq!(crate::linalg::hstack(&[&b.r32_1(), &b.r32_2()]), b.r32());
    }

    #[test]
    fn singular_r11_is_reported() {
        let z = Mat::zeros(2, 20);
        let y = Mat::from_fn(2, 20, |r, c| ((r * 20 + c) as f64).sin());
        let err = stage2_rq(&z, &y, &y.clone().map(|v| v * 0.5 + 1.0), &y.map(|v| v * v), 1, 2).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }), "{err}");
    }

    #[test]
    fn gamma_vh_single_block_is_c2() {
        // with i = 1 the unknown is one unstructured block
        let m = coupled();
        let (i, j, big_m) = (1, 400, 10);
        let sim = simulate(&m, required_rows(i, j), big_m, 1, InitialCondition::Zero).unwrap();
        let ops = build_operators(&m, i, big_m).unwrap();
        let xf = build_bold(&sim.xv, i, i, j, big_m).unwrap();
        let xp = build_bold(&sim.xv, 0, i, j, big_m).unwrap();
        let yp = build_bold(&sim.y, 0, i, j, big_m).unwrap();
        let xfh = build_bold(&sim.xh, i, 1, j, big_m).unwrap();
        let wp = vstack(&[&xp, &yp]);
        // outputs whose remainder lies in the past row space
        let rest = crate::linalg::row_space_project(&(&ops.gamma_h * &xfh), &wp).unwrap();
        let yf = &ops.gamma_vh * &xf + rest;
        let b = stage2_rq(&xf, &xp, &yp, &yf, 1, i).unwrap();
        let g = recover_gamma_vh(&b).unwrap();
        assert!(rel_diff(&g, &m.c2) < 1e-10, "{g}");
    }

    #[test]
    fn white_innovations_give_identity_operator() {
        let (i, j, big_m) = (3, 800, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = GridData::from_fn(1, required_rows(i, j), big_m, |_, _, _| StandardNormal.sample(&mut rng));
        let ef = build_bold(&e, i, i, j, big_m).unwrap();
        let (k, efh) = recover_innovations_operator(&ef, 1, i, j, big_m).unwrap();
        assert!((&k - Mat::identity(i, i)).amax() < 0.1, "{k}");
        for a in 0..i {
            assert_eq!(k[(a, a)], 1.0);
        }
        // the first j − i + 1 columns of every E_f^h(k) are the Hankel matrix of e0(k)
        let e0 = ef.row(0);
        for kk in [0, big_m] {
            let blk = bold_block(&efh, kk, j);
            for c in 0..j - i + 1 {
                for a in 0..i {
                    assert_eq!(blk[(a, c)], e0[kk * j + a + c]);
                }
            }
        }
    }

    #[test]
    fn assembly_layout() {
        let (i, j, big_m) = (2, 6, 1);
        let xp = Mat::from_fn(1, j * 2, |_, c| c as f64);
        let xf = Mat::from_fn(1, j * 2, |_, c| 100.0 + c as f64);
        let (g, disc) = assemble_states(&xp, &xf, i, j, big_m).unwrap();
        assert_eq!(g.rows(), 2 * i + j - 2);
        assert_eq!(g.get(5, 0)[0], 5.0);
        assert_eq!(g.get(6, 0)[0], 102.0);
        assert_eq!(g.get(8, 1)[0], 100.0 + 6.0 + 4.0);
        // rows 4, 5 of column 0 overlap X_f+ columns 0, 1
        let expect = ((4.0f64 - 100.0).powi(2) + (5.0f64 - 101.0).powi(2) + (10.0f64 - 106.0).powi(2) + (11.0f64 - 107.0).powi(2)).sqrt();
        assert!((disc - expect).abs() < 1e-12);
        assert!(assemble_states(&xp, &xf, 4, j, big_m).is_err());
    }

    #[test]
    fn orthonormal_regressors_give_z2() {
        let jbar = 40usize;
        let mut h = Mat::zeros(3, jbar);
        for r in 0..3 {
            h[(r, 5 * r)] = (jbar as f64).sqrt();
        }
        let xf = Mat::from_fn(2, jbar, |r, c| ((r + 2 * c) as f64).cos());
        let reg = regress_dynamics(&xf, &h.rows(0, 1).into_owned(), &h.rows(1, 1).into_owned(), &h.rows(2, 1).into_owned())
            .unwrap();
        assert!((&reg.z1 - Mat::identity(3, 3)).amax() < 1e-14);
        assert!((&reg.j - &reg.z2).amax() < 1e-14);
    }

    #[test]
    fn regression_residual_is_orthogonal_to_regressors() {
        let m = coupled();
        let (i, j, big_m) = (2, 100, 4);
        let sim = simulate(&m, required_rows(i, j), big_m, 8, InitialCondition::Zero).unwrap();
        let xp = build_bold(&sim.xh, 0, 1, j, big_m).unwrap();
        let xpv = build_bold(&sim.xv, 0, i, j, big_m).unwrap();
        let ep = build_bold(&sim.e, 0, i, j, big_m).unwrap();
        let target = build_bold(&sim.y, i, i, j, big_m).unwrap();
        let reg = regress_dynamics(&target, &xp, &xpv, &ep).unwrap();
        let h = vstack(&[&xp, &xpv, &ep]);
        let r = &target - &reg.j * &h;
        assert!((r * h.transpose()).amax() < 1e-8 * target.norm() * h.norm());
        let zero = Mat::zeros(1, xp.ncols());
        assert!(matches!(regress_dynamics(&target, &zero, &xpv, &ep), Err(Error::IllConditioned(_))));
    }

    #[test]
    fn stage2_runs_and_is_deterministic() {
        let m = coupled();
        let (i, j, big_m) = (3, 300, 6);
        let sim = simulate(&m, required_rows(i, j), big_m, 2, InitialCondition::Zero).unwrap();
        let a = stage2(&sim.y, &sim.xv, i, j, 1).unwrap();
        let b = stage2(&sim.y, &sim.xv, i, j, 1).unwrap();
        assert_eq!(a.grid, b.grid);
        assert_eq!(a.grid.rows(), required_rows(i, j));
        assert!(a.grid.is_finite());
        assert_eq!(a.residuals[0].0, "rq_reconstruction");
        assert!(a.residuals[0].1 < 1e-10);
        for k in 0..=big_m {
            let x = bold_block(&a.xf_vh, k, j);
            assert_eq!(x, crate::linalg::hankel_from_generators(&hankel_generators(&x, 1, 1, i, j), i, j));
        }
    }
}

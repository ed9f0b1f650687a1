//! System matrices and covariances from assembled state grids by least
//! squares on the innovations recurrences.

use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::linalg::{numerical_rank, singular_values, symmetrize, vstack, Mat, COND_LIMIT};
use crate::model::RoesserModel;

#[derive(Debug, Clone)]
pub struct Parameters {
    pub model: RoesserModel,
    /// Sample second moment of the stacked state `[x^h; x^v]`.
    pub pi: Mat,
    pub q: Mat,
    pub r: Mat,
    pub s: Mat,
    /// `G = A·Π·Cᵀ + S`.
    pub g: Mat,
    /// `Λ̂₀₀ = C·Π·Cᵀ + R`.
    pub lambda00: Mat,
}

/// `T·Rᵀ·(R·Rᵀ)⁻¹`; near-collinear regressor rows are an error.
pub fn fit_rows(target: &Mat, reg: &Mat, step: &str) -> Result<Mat> {
    let gram = reg * reg.transpose();
    let sv = singular_values(&gram);
    let ok = match (sv.first(), sv.last()) {
        (Some(&a), Some(&b)) => b > 0.0 && a / b <= COND_LIMIT,
        _ => true,
    };
    if !ok {
        return Err(Error::Singular { step: step.into(), rank: numerical_rank(&gram), expected: gram.nrows() });
    }
    let ch = gram
        .cholesky()
        .ok_or_else(|| Error::Singular { step: step.into(), rank: 0, expected: reg.nrows() })?;
    Ok(ch.solve(&(reg * target.transpose())).transpose())
}

/// Flattens the grid points selected by `keep(r, s)` into columns.
fn gather(g: &GridData, keep: impl Fn(usize, usize) -> bool, shift: (usize, usize)) -> Mat {
    let mut cols = Vec::new();
    for s in 0..=g.cols() {
        for r in 0..=g.rows() {
            if keep(r, s) {
                cols.extend_from_slice(g.get(r + shift.0, s + shift.1));
            }
        }
    }
    let n = g.dim();
    let count = if n == 0 { 0 } else { cols.len() / n };
    Mat::from_column_slice(n, count, &cols)
}

/// Least squares on `y = C·x + e`, `x^h₊ = [A1 A2 K1]·[x; e]`,
/// `x^v₊ = [A3 A4 K2]·[x; e]`.
///
/// With `e` given, the innovations are taken from it instead of the output
/// regression residual.
pub fn regress_parameters(y: &GridData, xh: &GridData, xv: &GridData, e: Option<&GridData>) -> Result<Parameters> {
    let (big_n, big_m) = (y.rows(), y.cols());
    if xh.rows() != big_n || xv.rows() != big_n || xh.cols() != big_m || xv.cols() != big_m {
        return Err(Error::Dimension("state grids and output grid differ in extent".into()));
    }
    let (n_h, n_v, n_y) = (xh.dim(), xv.dim(), y.dim());
    let all = |_: usize, _: usize| true;
    let yy = gather(y, all, (0, 0));
    let states = vstack(&[&gather(xh, all, (0, 0)), &gather(xv, all, (0, 0))]);
    let count = yy.ncols() as f64;
    let (c, e_grid) = match e {
        Some(e) => {
            let ee = gather(e, all, (0, 0));
            (fit_rows(&(&yy - &ee), &states, "output regression")?, e.clone())
        }
        None => {
            let c = fit_rows(&yy, &states, "output regression")?;
            let res = &yy - &c * &states;
            let mut eg = GridData::zeros(n_y, big_n, big_m);
            let mut col = 0;
            for s in 0..=big_m {
                for r in 0..=big_n {
                    eg.set(r, s, res.column(col).as_slice());
                    col += 1;
                }
            }
            (c, eg)
        }
    };
    let ee = gather(&e_grid, all, (0, 0));
    let re = symmetrize(&(&ee * ee.transpose() / count));

    let h_rows = |r: usize, _: usize| r < big_n;
    let reg_h = vstack(&[&gather(xh, h_rows, (0, 0)), &gather(xv, h_rows, (0, 0)), &gather(&e_grid, h_rows, (0, 0))]);
    let bh = fit_rows(&gather(xh, h_rows, (1, 0)), &reg_h, "horizontal state regression")?;
    let v_rows = |_: usize, s: usize| s < big_m;
    let reg_v = vstack(&[&gather(xh, v_rows, (0, 0)), &gather(xv, v_rows, (0, 0)), &gather(&e_grid, v_rows, (0, 0))]);
    let bv = fit_rows(&gather(xv, v_rows, (0, 1)), &reg_v, "vertical state regression")?;

    let cols = |m: &Mat, c0: usize, n: usize| m.columns(c0, n).into_owned();
    let model = RoesserModel::new(
        cols(&bh, 0, n_h),
        cols(&bh, n_h, n_v),
        cols(&bv, 0, n_h),
        cols(&bv, n_h, n_v),
        cols(&c, 0, n_h),
        cols(&c, n_h, n_v),
        cols(&bh, n_h + n_v, n_y),
        cols(&bv, n_h + n_v, n_y),
        re.clone(),
    )?;
    let pi = symmetrize(&(&states * states.transpose() / count));
    let k = model.k();
    let q = symmetrize(&(&k * &re * k.transpose()));
    let s = &k * &re;
    let g = model.a() * &pi * c.transpose() + &s;
    let lambda00 = symmetrize(&(&c * &pi * c.transpose() + &re));
    Ok(Parameters { model, pi, q, r: re, s, g, lambda00 })
}

pub fn recover_parameters(y: &GridData, xh: &GridData, xv: &GridData) -> Result<Parameters> {
    regress_parameters(y, xh, xv, None)
}

/// Relative violation of the two state recurrences by `xh`, `xv` under `m`,
/// with innovations `y − C·x`.
pub fn state_recurrence_residual(m: &RoesserModel, y: &GridData, xh: &GridData, xv: &GridData) -> f64 {
    let (big_n, big_m) = (y.rows(), y.cols());
    let (mut num, mut den) = (0.0, 0.0);
    for s in 0..=big_m {
        for r in 0..=big_n {
            let (h, v) = (xh.vector(r, s), xv.vector(r, s));
            let e = y.vector(r, s) - &m.c1 * &h - &m.c2 * &v;
            if r < big_n {
                let next = xh.vector(r + 1, s);
                num += (&next - (&m.a1 * &h + &m.a2 * &v + &m.k1 * &e)).norm_squared();
                den += next.norm_squared();
            }
            if s < big_m {
                let next = xv.vector(r, s + 1);
                num += (&next - (&m.a3 * &h + &m.a4 * &v + &m.k2 * &e)).norm_squared();
                den += next.norm_squared();
            }
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Sample covariance of the one-step prediction errors of `m` run as an
/// innovations filter over `y` from zero boundary states. A filter that
/// diverges gives `None`.
pub fn prediction_error(m: &RoesserModel, y: &GridData) -> Option<Mat> {
    let (big_n, big_m) = (y.rows(), y.cols());
    let mut xh = GridData::zeros(m.n_h, big_n, big_m);
    let mut xv = GridData::zeros(m.n_v, big_n, big_m);
    let mut acc = Mat::zeros(m.n_y, m.n_y);
    for s in 0..=big_m {
        for r in 0..=big_n {
            let (h, v) = (xh.vector(r, s), xv.vector(r, s));
            let e = y.vector(r, s) - &m.c1 * &h - &m.c2 * &v;
            acc += &e * e.transpose();
            if r < big_n {
                xh.set(r + 1, s, (&m.a1 * &h + &m.a2 * &v + &m.k1 * &e).as_slice());
            }
            if s < big_m {
                xv.set(r, s + 1, (&m.a3 * &h + &m.a4 * &v + &m.k2 * &e).as_slice());
            }
        }
    }
    let cov = acc / ((big_n + 1) * (big_m + 1)) as f64;
    cov.iter().all(|x| x.is_finite()).then_some(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rel_diff;
    use crate::model::{construct_uncorrelated, simulate, InitialCondition};

    #[test]
    fn exact_states_and_innovations_give_exact_parameters() {
        let m = construct_uncorrelated(&RoesserModel::scalar(0.5, 0.2, 0.1, 0.4, 1.0, 1.0, 0.5, 0.0, 1.0)).unwrap();
        let sim = simulate(&m, 60, 40, 3, InitialCondition::Stationary).unwrap();
        let p = regress_parameters(&sim.y, &sim.xh, &sim.xv, Some(&sim.e)).unwrap();
        for (a, b) in [(&p.model.a(), &m.a()), (&p.model.c(), &m.c()), (&p.model.k(), &m.k())] {
            assert!(rel_diff(a, b) < 1e-10, "{a} vs {b}");
        }
        assert!(state_recurrence_residual(&p.model, &sim.y, &sim.xh, &sim.xv) < 1e-12);
    }

    #[test]
    fn output_regression_leaves_orthogonal_residual() {
        let m = construct_uncorrelated(&RoesserModel::scalar(0.5, 0.2, 0.1, 0.4, 1.0, 1.0, 0.5, 0.0, 1.0)).unwrap();
        let sim = simulate(&m, 80, 80, 5, InitialCondition::Stationary).unwrap();
        let p = recover_parameters(&sim.y, &sim.xh, &sim.xv).unwrap();
        // the regression splits the sample output power exactly
        let emp = crate::hankel::empirical_autocovariance(&sim.y, 0, 0).unwrap();
        assert!((p.lambda00[(0, 0)] - emp[(0, 0)]).abs() < 1e-10 * emp[(0, 0)]);
        assert!((p.model.a1[(0, 0)] - 0.5).abs() < 0.05);
        assert!((p.model.a4[(0, 0)] - 0.4).abs() < 0.05);
        assert!(p.r[(0, 0)] > 0.0);
    }

    #[test]
    fn true_model_filter_recovers_innovations() {
        let m = construct_uncorrelated(&RoesserModel::scalar(0.5, 0.2, 0.1, 0.4, 1.0, 1.0, 0.8, 0.0, 1.0)).unwrap();
        let sim = simulate(&m, 50, 30, 2, InitialCondition::Zero).unwrap();
        // with zero boundary states the filter reproduces the simulated innovations
        let pe = prediction_error(&m, &sim.y).unwrap();
        let emp = crate::hankel::empirical_autocovariance(&sim.e, 0, 0).unwrap();
        assert!((pe[(0, 0)] - emp[(0, 0)]).abs() < 1e-10, "{} vs {}", pe[(0, 0)], emp[(0, 0)]);
        let unstable = RoesserModel::scalar(0.5, 0.0, 0.0, 0.4, 1.0, 1.0, -5.0, 0.0, 1.0);
        let big = simulate(&m, 400, 400, 2, InitialCondition::Zero).unwrap();
        assert!(prediction_error(&unstable, &big.y).is_none_or(|p| p[(0, 0)] > 1e6));
    }

    #[test]
    fn zero_state_grids_are_collinear() {
        let y = GridData::from_fn(1, 10, 10, |r, s, _| ((r * 3 + s) as f64).sin());
        let z = GridData::zeros(1, 10, 10);
        let err = recover_parameters(&y, &z, &z).unwrap_err();
        assert!(matches!(err, Error::Singular { .. }), "{err}");
    }
}

//! Orthogonal projection of future outputs on past outputs, order selection
//! and the one-dimensional state estimator it implies.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::hankel::{build_bold, required_rows};
use crate::linalg::{pseudo_inverse, project_rows, Mat, Regularize};

/// Which scan direction a pass processes. The vertical pass runs on the
/// transposed grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
}

/// Minimum singular value ratio accepted as an order gap.
pub const GAP_RATIO: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct ProjectionResult {
    pub direction: Direction,
    /// `Y_f / Y_p`.
    pub o: Mat,
    /// `Z` with `O = Z·Y_p`.
    pub coef: Mat,
    pub singular_values: Vec<f64>,
    pub n: usize,
    pub gamma: Mat,
    pub xf: Mat,
    /// `‖O − Γ·X_f‖_F / ‖O‖_F`.
    pub residual: f64,
    /// Set when `Y_p` is identically zero.
    pub zero_data: bool,
    /// `Y_p·Y_pᵀ` was singular and the projection used its pseudo-inverse.
    pub rank_deficient_past: bool,
}

impl ProjectionResult {
    /// `Γ†·Z`: maps a stacked past window `[y_{r−i}; …; y_{r−1}]` to `x̂_r`.
    pub fn estimator(&self) -> Mat {
        pseudo_inverse(&self.gamma) * &self.coef
    }

    /// Eigenvalues of the shift-invariance estimate `Γ_top† Γ_bottom`.
    pub fn shift_eigenvalues(&self, n_y: usize) -> Vec<(f64, f64)> {
        let rows = self.gamma.nrows();
        if self.n == 0 || rows <= n_y {
            return Vec::new();
        }
        let top = self.gamma.rows(0, rows - n_y).into_owned();
        let bottom = self.gamma.rows(n_y, rows - n_y).into_owned();
        let a = pseudo_inverse(&top) * bottom;
        eigen_pairs(&a)
    }
}

/// Complex eigenvalues as `(re, im)` sorted by decreasing modulus.
pub fn eigen_pairs(a: &Mat) -> Vec<(f64, f64)> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<(f64, f64)> = a.complex_eigenvalues().iter().map(|z| (z.re, z.im)).collect();
    ev.sort_by(|x, y| {
        let (nx, ny) = (x.0.hypot(x.1), y.0.hypot(y.1));
        ny.total_cmp(&nx).then(y.0.total_cmp(&x.0)).then(y.1.total_cmp(&x.1))
    });
    ev
}

/// Picks `n` at the largest ratio `σ_n/σ_{n+1}` over the first
/// `min(10, max_order)` candidates. Needs a ratio of at least [`GAP_RATIO`].
pub fn select_order(sv: &[f64], max_order: usize) -> Result<usize> {
    let top = sv.first().copied().unwrap_or(0.0);
    if top == 0.0 {
        return Ok(0);
    }
    let limit = max_order.min(10).min(sv.len().saturating_sub(1));
    let mut best: Option<(usize, f64)> = None;
    for n in 1..=limit {
        let ratio = if sv[n] > 0.0 { sv[n - 1] / sv[n] } else { f64::INFINITY };
        if best.is_none_or(|(_, b)| ratio > b) {
            best = Some((n, ratio));
        }
    }
    match best {
        Some((n, ratio)) if ratio >= GAP_RATIO => Ok(n),
        _ => Err(Error::OrderSelection(sv.to_vec())),
    }
}

fn check_extent(y: &GridData, i: usize, j: usize) -> Result<()> {
    if i == 0 || j == 0 {
        return Err(Error::Input("i and j must be positive".into()));
    }
    let need = required_rows(i, j);
    if y.rows() != need {
        return Err(Error::Input(format!(
            "grid has N={} along the processed direction but N=2i+j-2={need} for i={i}, j={j}",
            y.rows()
        )));
    }
    Ok(())
}

/// Projects `Y_f` on `Y_p` for one direction and factors the result.
///
/// `y` is the grid as stored; for [`Direction::Vertical`] it is transposed
/// first, so `i`, `j` refer to the `s` axis.
pub fn stage1_project(
    y: &GridData,
    i: usize,
    j: usize,
    direction: Direction,
    order: Option<usize>,
) -> Result<ProjectionResult> {
    let owned;
    let g = match direction {
        Direction::Horizontal => y,
        Direction::Vertical => {
            owned = y.transposed();
            &owned
        }
    };
    check_extent(g, i, j)?;
    let big_m = g.cols();
    let n_y = g.dim();
    let max_order = n_y * i;
    if let Some(n) = order {
        if n > max_order {
            return Err(Error::Input(format!("order {n} exceeds n_y*i = {max_order}")));
        }
    }
    let y_p = build_bold(g, 0, i, j, big_m)?;
    let y_f = build_bold(g, i, i, j, big_m)?;
    let jbar = y_p.ncols();
    if y_p.iter().all(|&x| x == 0.0) {
        return Ok(ProjectionResult {
            direction,
            o: Mat::zeros(max_order, jbar),
            coef: Mat::zeros(max_order, max_order),
            singular_values: vec![0.0; max_order.min(jbar)],
            n: 0,
            gamma: Mat::zeros(max_order, 0),
            xf: Mat::zeros(0, jbar),
            residual: 0.0,
            zero_data: true,
            rank_deficient_past: true,
        });
    }
    let (o, coef, rank_deficient_past) = match project_rows(&y_f, &y_p, Regularize::Strict) {
        Ok(p) => (p.value, p.coef, false),
        Err(Error::IllConditioned(_)) => {
            // exactly rank-deficient past data, e.g. noise-free grids
            let coef = (&y_f * y_p.transpose()) * pseudo_inverse(&(&y_p * y_p.transpose()));
            (&coef * &y_p, coef, true)
        }
        Err(e) => return Err(e),
    };
    let svd = o.clone().svd(true, true);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = idx.iter().map(|&k| svd.singular_values[k]).collect();
    let n = match order {
        Some(n) => n,
        None => select_order(&sv, max_order.saturating_sub(1))?,
    };
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let mut gamma = Mat::zeros(o.nrows(), n);
    let mut xf = Mat::zeros(n, jbar);
    for (c, &k) in idx.iter().take(n).enumerate() {
        let root = sv[c].sqrt();
        gamma.set_column(c, &(u.column(k) * root));
        xf.set_row(c, &(vt.row(k) * root));
    }
    let on = o.norm();
    let residual = if on > 0.0 { (&o - &gamma * &xf).norm() / on } else { 0.0 };
    Ok(ProjectionResult {
        direction,
        o,
        coef,
        singular_values: sv,
        n,
        gamma,
        xf,
        residual,
        zero_data: false,
        rank_deficient_past,
    })
}

/// Applies a past-window estimator along `r`: `x̂[r,s] = W·[y_{r−i,s}; …; y_{r−1,s}]`
/// with rows before `0` taken as zero.
pub fn state_grid(y: &GridData, estimator: &Mat, i: usize) -> GridData {
    let n = estimator.nrows();
    let n_y = y.dim();
    let mut out = GridData::zeros(n, y.rows(), y.cols());
    let mut win = nalgebra::DVector::zeros(n_y * i);
    for s in 0..=y.cols() {
        for r in 0..=y.rows() {
            win.fill(0.0);
            for b in 0..i {
                if r + b >= i {
                    let rr = r + b - i;
                    win.rows_mut(b * n_y, n_y).copy_from_slice(y.get(rr, s));
                }
            }
            out.set(r, s, (estimator * &win).as_slice());
        }
    }
    out
}

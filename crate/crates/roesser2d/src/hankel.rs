//! Block-Hankel data matrices, their concatenations over columns `k`, and
//! block Toeplitz matrices with Hankel blocks.
//!
//! A Hankel block of depth `i` and width `j` taken from scanline `k` starting
//! at row `r0` holds `g[r0 + b + c, k]` in block row `b`, column `c`.

use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::linalg::Mat;

/// How grid extents are checked against `N = 2i + j − 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Extent {
    /// `N` must equal `2i + j − 2`.
    #[default]
    Exact,
    /// `N ≥ 2i + j − 2`; trailing rows are ignored.
    Truncate,
}

/// Number of rows `N` implied by `i` and `j`.
pub fn required_rows(i: usize, j: usize) -> usize {
    (2 * i + j).saturating_sub(2)
}

/// Checks a grid against the block parameters and returns the grid to process.
pub fn fit_grid(g: &GridData, i: usize, j: usize, mode: Extent) -> Result<GridData> {
    if i == 0 || j == 0 {
        return Err(Error::Input("i and j must be positive".into()));
    }
    let need = required_rows(i, j);
    match mode {
        Extent::Exact if g.rows() != need => Err(Error::Input(format!(
            "grid has N={} but N=2i+j-2={} for i={i}, j={j}",
            g.rows(),
            need
        ))),
        Extent::Truncate if g.rows() < need => Err(Error::Input(format!(
            "grid has N={} but needs N>=2i+j-2={} for i={i}, j={j}",
            g.rows(),
            need
        ))),
        Extent::Truncate if g.rows() > need => Ok(g.truncate_rows(need)),
        _ => Ok(g.clone()),
    }
}

/// Hankel block of depth `i` and width `j` from scanline `k`, first row `r0`.
pub fn build_hankel(g: &GridData, k: usize, r0: usize, i: usize, j: usize) -> Result<Mat> {
    if k > g.cols() {
        return Err(Error::Input(format!("column k={k} exceeds M={}", g.cols())));
    }
    if i == 0 || j == 0 {
        return Err(Error::Input("Hankel depth and width must be positive".into()));
    }
    if r0 + i + j - 2 > g.rows() {
        return Err(Error::Input(format!(
            "Hankel block needs rows up to r_start+i+j-2={} but N={} (N=2i+j-2 violated)",
            r0 + i + j - 2,
            g.rows()
        )));
    }
    let n = g.dim();
    let col = g.column(k);
    let mut h = Mat::zeros(n * i, j);
    for c in 0..j {
        let start = (r0 + c) * n;
        // rows r0+c .. r0+c+i-1 are contiguous in the scanline
        h.column_mut(c).copy_from_slice(&col[start..start + n * i]);
    }
    Ok(h)
}

/// Horizontal concatenation of the Hankel blocks for `k = 0..=big_m`.
pub fn build_bold(g: &GridData, r0: usize, i: usize, j: usize, big_m: usize) -> Result<Mat> {
    let n = g.dim();
    let mut out = Mat::zeros(n * i, j * (big_m + 1));
    for k in 0..=big_m {
        let h = build_hankel(g, k, r0, i, j)?;
        out.columns_mut(k * j, j).copy_from(&h);
    }
    Ok(out)
}

/// Column block `k` of a bold matrix of block width `j`.
pub fn bold_block(b: &Mat, k: usize, j: usize) -> Mat {
    b.columns(k * j, j).into_owned()
}

/// Upper block triangular Toeplitz matrix with generator blocks `gens[0..=M]`:
/// block `(a, b)` is `gens[b − a]` for `b ≥ a`.
pub fn build_star(gens: &[Mat]) -> Result<Mat> {
    let Some(first) = gens.first() else {
        return Err(Error::Dimension("star matrix needs at least one block".into()));
    };
    let (br, bc) = first.shape();
    if gens.iter().any(|g| g.shape() != (br, bc)) {
        return Err(Error::Dimension("star matrix blocks differ in shape".into()));
    }
    let m = gens.len();
    let mut out = Mat::zeros(br * m, bc * m);
    for a in 0..m {
        for b in a..m {
            out.view_mut((a * br, b * bc), (br, bc)).copy_from(&gens[b - a]);
        }
    }
    Ok(out)
}

/// Sample average of `y[r+k, s+l] y[r,s]ᵀ` over every valid `(r, s)`.
pub fn empirical_autocovariance(y: &GridData, k: usize, l: usize) -> Result<Mat> {
    if k > y.rows() || l > y.cols() {
        return Err(Error::Input(format!("lag ({k},{l}) exceeds grid extents ({},{})", y.rows(), y.cols())));
    }
    let n = y.dim();
    let mut acc = Mat::zeros(n, n);
    let mut count = 0usize;
    for s in 0..=y.cols() - l {
        for r in 0..=y.rows() - k {
            let a = y.get(r + k, s + l);
            let b = y.get(r, s);
            for p in 0..n {
                for q in 0..n {
                    acc[(p, q)] += a[p] * b[q];
                }
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Input("empty averaging set".into()));
    }
    Ok(acc / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{autocovariance, innovation_covariances, simulate, InitialCondition, RoesserModel, SecondOrder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ramp() -> GridData {
        GridData::from_fn(1, 6, 2, |r, s, _| r as f64 + 100.0 * s as f64)
    }

    #[test]
    fn hankel_examples() {
        let g = ramp();
        let h = build_hankel(&g, 0, 0, 2, 3).unwrap();
        assert_eq!(h, Mat::from_row_slice(2, 3, &[0., 1., 2., 1., 2., 3.]));
        let f = build_hankel(&g, 0, 2, 2, 3).unwrap();
        assert_eq!(f, Mat::from_row_slice(2, 3, &[2., 3., 4., 3., 4., 5.]));
        let x = build_hankel(&g, 1, 0, 1, 4).unwrap();
        assert_eq!(x, Mat::from_row_slice(1, 4, &[100., 101., 102., 103.]));
    }

    #[test]
    fn hankel_law_vector_valued() {
        let g = GridData::from_fn(2, 9, 1, |r, s, c| (r * 10 + s) as f64 + 0.5 * c as f64);
        let h = build_hankel(&g, 1, 2, 3, 4).unwrap();
        assert_eq!(h.shape(), (6, 4));
        for b in 0..3 {
            for c in 0..4 {
                for d in 0..2 {
                    assert_eq!(h[(2 * b + d, c)], g.get(2 + b + c, 1)[d]);
                }
            }
        }
    }

    #[test]
    fn out_of_range_names_the_bound() {
        let g = ramp();
        let err = build_hankel(&g, 0, 2, 3, 4).unwrap_err().to_string();
        assert!(err.contains("N=2i+j-2"), "{err}");
        assert!(build_hankel(&g, 3, 0, 1, 1).is_err());
        assert!(fit_grid(&g, 2, 3, Extent::Exact).is_err());
        assert_eq!(fit_grid(&g, 2, 4, Extent::Exact).unwrap(), g);
        assert_eq!(fit_grid(&g, 2, 3, Extent::Truncate).unwrap().rows(), 5);
        assert!(fit_grid(&g, 3, 4, Extent::Truncate).is_err());
    }

    #[test]
    fn bold_slices_reproduce_blocks() {
        let g = GridData::from_fn(2, 10, 3, |r, s, c| ((r * 7 + s * 3 + c) as f64).sin());
        let b = build_bold(&g, 2, 3, 5, 3).unwrap();
        assert_eq!(b.shape(), (6, 5 * 4));
        for k in 0..=3 {
            assert_eq!(bold_block(&b, k, 5), build_hankel(&g, k, 2, 3, 5).unwrap());
        }
        assert_eq!(build_bold(&g, 2, 3, 5, 0).unwrap(), build_hankel(&g, 0, 2, 3, 5).unwrap());
        assert_eq!(build_bold(&g, 2, 3, 5, 3).unwrap(), b);
    }

    #[test]
    fn star_layout() {
        let b0 = Mat::from_element(1, 2, 1.0);
        let b1 = Mat::from_element(1, 2, 2.0);
        assert_eq!(build_star(std::slice::from_ref(&b0)).unwrap(), b0);
        let s = build_star(&[b0.clone(), b1.clone()]).unwrap();
        assert_eq!(s, Mat::from_row_slice(2, 4, &[1., 1., 2., 2., 0., 0., 1., 1.]));
        assert!(build_star(&[b0, Mat::zeros(2, 2)]).is_err());
        assert!(build_star(&[]).is_err());
    }

    #[test]
    fn autocovariance_of_constant_grid() {
        let g = GridData::from_fn(2, 4, 3, |_, _, c| [1.5, -2.0][c]);
        let c = nalgebra::DVector::from_vec(vec![1.5, -2.0]);
        for (k, l) in [(0, 0), (1, 2), (4, 3)] {
            let a = empirical_autocovariance(&g, k, l).unwrap();
            assert!((a - &c * c.transpose()).amax() < 1e-15);
        }
        assert!(empirical_autocovariance(&g, 5, 0).is_err());
    }

    #[test]
    fn white_noise_lag_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = GridData::from_fn(1, 199, 199, |_, _, _| StandardNormal.sample(&mut rng));
        let a = empirical_autocovariance(&g, 1, 0).unwrap()[(0, 0)];
        // standard error of the lag-one product mean is about 1/sqrt(count)
        assert!(a.abs() < 3.0 / (199.0f64 * 200.0).sqrt(), "{a}");
    }

    #[test]
    fn simulated_variance_matches_theory() {
        let m = RoesserModel::scalar(0.5, 0.2, 0.1, 0.4, 1.0, 1.0, 0.5, -0.034_220_471_800_493_646, 1.0);
        let ic = innovation_covariances(&m).unwrap();
        let so = SecondOrder::innovations(&m, &ic);
        let theo = autocovariance(&m, &so, 0, 0)[(0, 0)];
        let sim = simulate(&m, 300, 300, 11, InitialCondition::Stationary).unwrap();
        let emp = empirical_autocovariance(&sim.y, 0, 0).unwrap()[(0, 0)];
        assert!((emp - theo).abs() / theo < 0.05, "{emp} vs {theo}");
    }

    #[test]
    fn rebuild_is_bit_identical() {
        let g = GridData::from_fn(1, 12, 2, |r, s, _| (r as f64 * 0.37 + s as f64).cos());
        assert_eq!(build_bold(&g, 0, 4, 6, 2).unwrap(), build_bold(&g, 0, 4, 6, 2).unwrap());
    }
}

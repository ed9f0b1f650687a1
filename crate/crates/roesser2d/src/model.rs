//! Roesser models in innovations form, their covariance equations and simulation.
//!
//! ```text
//! x^h[r+1,s] = A1 x^h[r,s] + A2 x^v[r,s] + K1 e[r,s]
//! x^v[r,s+1] = A3 x^h[r,s] + A4 x^v[r,s] + K2 e[r,s]
//! y[r,s]     = C1 x^h[r,s] + C2 x^v[r,s] + e[r,s],     e ~ N(0, Re)
//! ```

use std::collections::HashMap;
use std::ops::SubAssign;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::linalg::{self, block_diag, hstack, min_sym_eigenvalue, pseudo_inverse, spectral_radius, symmetrize, vstack, Mat};

/// Iteration cap shared by every fixed-point solver.
pub const MAX_ITER: usize = 100_000;
/// Relative Frobenius change at which fixed-point iterations stop.
pub const FIXED_POINT_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct RoesserModel {
    pub n_h: usize,
    pub n_v: usize,
    pub n_y: usize,
    pub a1: Mat,
    pub a2: Mat,
    pub a3: Mat,
    pub a4: Mat,
    pub c1: Mat,
    pub c2: Mat,
    pub k1: Mat,
    pub k2: Mat,
    pub re: Mat,
    pub q: Option<Mat>,
    pub r: Option<Mat>,
    pub s: Option<Mat>,
}

fn check_shape(name: &str, m: &Mat, r: usize, c: usize) -> Result<()> {
    if m.shape() != (r, c) {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {r}x{c}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

impl RoesserModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(a1: Mat, a2: Mat, a3: Mat, a4: Mat, c1: Mat, c2: Mat, k1: Mat, k2: Mat, re: Mat) -> Result<Self> {
        let n_h = a1.nrows();
        let n_v = a4.nrows();
        let n_y = re.nrows();
        let m = RoesserModel { n_h, n_v, n_y, a1, a2, a3, a4, c1, c2, k1, k2, re, q: None, r: None, s: None };
        m.check()?;
        Ok(m)
    }

    /// Scalar model with `n_h = n_v = n_y = 1`.
    #[allow(clippy::too_many_arguments)]
    pub fn scalar(a1: f64, a2: f64, a3: f64, a4: f64, c1: f64, c2: f64, k1: f64, k2: f64, re: f64) -> Self {
        let s = |x: f64| Mat::from_element(1, 1, x);
        Self::new(s(a1), s(a2), s(a3), s(a4), s(c1), s(c2), s(k1), s(k2), s(re)).unwrap()
    }

    pub fn with_noise(mut self, q: Mat, r: Mat, s: Mat) -> Result<Self> {
        self.q = Some(q);
        self.r = Some(r);
        self.s = Some(s);
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        let (h, v, y) = (self.n_h, self.n_v, self.n_y);
        check_shape("A1", &self.a1, h, h)?;
        check_shape("A2", &self.a2, h, v)?;
        check_shape("A3", &self.a3, v, h)?;
        check_shape("A4", &self.a4, v, v)?;
        check_shape("C1", &self.c1, y, h)?;
        check_shape("C2", &self.c2, y, v)?;
        check_shape("K1", &self.k1, h, y)?;
        check_shape("K2", &self.k2, v, y)?;
        check_shape("Re", &self.re, y, y)?;
        if let Some(q) = &self.q {
            check_shape("Q", q, h + v, h + v)?;
        }
        if let Some(r) = &self.r {
            check_shape("R", r, y, y)?;
        }
        if let Some(s) = &self.s {
            check_shape("S", s, h + v, y)?;
        }
        let all = [&self.a1, &self.a2, &self.a3, &self.a4, &self.c1, &self.c2, &self.k1, &self.k2, &self.re];
        if all.iter().any(|m| m.iter().any(|x| !x.is_finite())) {
            return Err(Error::Input("model has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.n_h + self.n_v
    }

    pub fn a(&self) -> Mat {
        vstack(&[&hstack(&[&self.a1, &self.a2]), &hstack(&[&self.a3, &self.a4])])
    }

    pub fn c(&self) -> Mat {
        hstack(&[&self.c1, &self.c2])
    }

    pub fn k(&self) -> Mat {
        vstack(&[&self.k1, &self.k2])
    }

    /// `A^{1,0}`: the horizontal update rows of `A`.
    pub fn a10(&self) -> Mat {
        let mut a = self.a();
        a.rows_mut(self.n_h, self.n_v).fill(0.0);
        a
    }

    /// `A^{0,1}`: the vertical update rows of `A`.
    pub fn a01(&self) -> Mat {
        let mut a = self.a();
        a.rows_mut(0, self.n_h).fill(0.0);
        a
    }

    /// Process and measurement noise `(Q, R, S)`. When not supplied these are
    /// the innovations-form values `K·Re·Kᵀ`, `Re`, `K·Re`.
    pub fn noise(&self) -> (Mat, Mat, Mat) {
        match (&self.q, &self.r, &self.s) {
            (Some(q), Some(r), Some(s)) => (q.clone(), r.clone(), s.clone()),
            _ => {
                let k = self.k();
                (&k * &self.re * k.transpose(), self.re.clone(), &k * &self.re)
            }
        }
    }

    pub fn has_noise(&self) -> bool {
        self.q.is_some() && self.r.is_some() && self.s.is_some()
    }

    /// The same model with the roles of `r` and `s` exchanged.
    pub fn transposed(&self) -> RoesserModel {
        let perm = |m: &Mat| -> Mat {
            // reorder state [h; v] -> [v; h]
            let (h, v) = (self.n_h, self.n_v);
            let top = m.rows(h, v).into_owned();
            let bot = m.rows(0, h).into_owned();
            vstack(&[&top, &bot])
        };
        let q = self.q.as_ref().map(|q| perm(&perm(q).transpose()).transpose());
        let s = self.s.as_ref().map(perm);
        RoesserModel {
            n_h: self.n_v,
            n_v: self.n_h,
            n_y: self.n_y,
            a1: self.a4.clone(),
            a2: self.a3.clone(),
            a3: self.a2.clone(),
            a4: self.a1.clone(),
            c1: self.c2.clone(),
            c2: self.c1.clone(),
            k1: self.k2.clone(),
            k2: self.k1.clone(),
            re: self.re.clone(),
            q,
            r: self.r.clone(),
            s,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        f.into_model()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_model(self)).expect("model serializes")
    }
}

/// On-disk model: dimensions plus row-major nested arrays.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub n_h: usize,
    pub n_v: usize,
    pub n_y: usize,
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    #[serde(rename = "A2")]
    pub a2: Vec<Vec<f64>>,
    #[serde(rename = "A3")]
    pub a3: Vec<Vec<f64>>,
    #[serde(rename = "A4")]
    pub a4: Vec<Vec<f64>>,
    #[serde(rename = "C1")]
    pub c1: Vec<Vec<f64>>,
    #[serde(rename = "C2")]
    pub c2: Vec<Vec<f64>>,
    #[serde(rename = "K1")]
    pub k1: Vec<Vec<f64>>,
    #[serde(rename = "K2")]
    pub k2: Vec<Vec<f64>>,
    #[serde(rename = "Re")]
    pub re: Vec<Vec<f64>>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Vec<Vec<f64>>>,
}

pub fn mat_from_rows(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<Mat> {
    if r == 0 {
        if rows.iter().any(|row| !row.is_empty()) {
            return Err(Error::Dimension(format!("{name} should have no rows")));
        }
        return Ok(Mat::zeros(0, c));
    }
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension(format!("{name} should be {r}x{c}")));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

impl ModelFile {
    fn into_model(self) -> Result<RoesserModel> {
        let (h, v, y) = (self.n_h, self.n_v, self.n_y);
        let m = RoesserModel::new(
            mat_from_rows("A1", &self.a1, h, h)?,
            mat_from_rows("A2", &self.a2, h, v)?,
            mat_from_rows("A3", &self.a3, v, h)?,
            mat_from_rows("A4", &self.a4, v, v)?,
            mat_from_rows("C1", &self.c1, y, h)?,
            mat_from_rows("C2", &self.c2, y, v)?,
            mat_from_rows("K1", &self.k1, h, y)?,
            mat_from_rows("K2", &self.k2, v, y)?,
            mat_from_rows("Re", &self.re, y, y)?,
        )?;
        match (self.q, self.r, self.s) {
            (None, None, None) => Ok(m),
            (Some(q), Some(r), Some(s)) => m.with_noise(
                mat_from_rows("Q", &q, h + v, h + v)?,
                mat_from_rows("R", &r, y, y)?,
                mat_from_rows("S", &s, h + v, y)?,
            ),
            _ => Err(Error::Input("Q, R and S must be given together".into())),
        }
    }

    fn from_model(m: &RoesserModel) -> Self {
        ModelFile {
            n_h: m.n_h,
            n_v: m.n_v,
            n_y: m.n_y,
            a1: mat_to_rows(&m.a1),
            a2: mat_to_rows(&m.a2),
            a3: mat_to_rows(&m.a3),
            a4: mat_to_rows(&m.a4),
            c1: mat_to_rows(&m.c1),
            c2: mat_to_rows(&m.c2),
            k1: mat_to_rows(&m.k1),
            k2: mat_to_rows(&m.k2),
            re: mat_to_rows(&m.re),
            q: m.q.as_ref().map(mat_to_rows),
            r: m.r.as_ref().map(mat_to_rows),
            s: m.s.as_ref().map(mat_to_rows),
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub spectral_radius: f64,
    pub eigenvalue_magnitudes: Vec<f64>,
    pub stable: bool,
    pub noise_supplied: bool,
    pub joint_noise_psd: Option<bool>,
    pub q_psd: Option<bool>,
    pub r_pd: Option<bool>,
    pub re_pd: bool,
    pub pi_pd: Option<bool>,
    /// Norm of the off-diagonal block of the state update covariance.
    pub pi_hv_norm: Option<f64>,
    pub failures: Vec<String>,
    pub pass: bool,
}

const PSD_TOL: f64 = 1e-12;

pub fn validate_model(m: &RoesserModel) -> ValidationReport {
    let a = m.a();
    let mut mags: Vec<f64> = if a.is_empty() {
        Vec::new()
    } else {
        a.complex_eigenvalues().iter().map(|z| z.norm()).collect()
    };
    mags.sort_by(|x, y| y.total_cmp(x));
    let rho = mags.first().copied().unwrap_or(0.0);
    let stable = rho < 1.0;
    let mut failures = Vec::new();
    if !stable {
        failures.push(format!("unstable: spectral radius {rho:.6} >= 1"));
    }
    let scale = |x: &Mat| x.norm().max(1.0);
    let re_pd = min_sym_eigenvalue(&m.re) > PSD_TOL * scale(&m.re);
    if !re_pd {
        failures.push("Re not positive definite".into());
    }
    let (mut joint, mut q_psd, mut r_pd) = (None, None, None);
    if let (Some(q), Some(r), Some(s)) = (&m.q, &m.r, &m.s) {
        let j = vstack(&[&hstack(&[q, s]), &hstack(&[&s.transpose(), r])]);
        let jp = min_sym_eigenvalue(&j) >= -PSD_TOL * scale(&j);
        let qp = min_sym_eigenvalue(q) >= -PSD_TOL * scale(q);
        let rp = min_sym_eigenvalue(r) > PSD_TOL * scale(r);
        if !jp {
            failures.push("joint noise covariance [[Q,S],[S',R]] not positive semidefinite".into());
        }
        if !qp {
            failures.push("Q not positive semidefinite".into());
        }
        if !rp {
            failures.push("R not positive definite".into());
        }
        joint = Some(jp);
        q_psd = Some(qp);
        r_pd = Some(rp);
    }
    let (mut pi_pd, mut pi_hv_norm) = (None, None);
    if stable {
        match solve_lyapunov(m) {
            Ok((ph, pv)) => {
                let pd = min_sym_eigenvalue(&ph) > 0.0 && min_sym_eigenvalue(&pv) > 0.0;
                if !pd {
                    failures.push("Pi not positive definite".into());
                }
                pi_pd = Some(pd);
                pi_hv_norm = Some(state_update_covariance(m, &ph, &pv).view((0, m.n_h), (m.n_h, m.n_v)).norm());
            }
            Err(e) => failures.push(format!("Lyapunov solve failed: {e}")),
        }
    }
    ValidationReport {
        spectral_radius: rho,
        eigenvalue_magnitudes: mags,
        stable,
        noise_supplied: m.has_noise(),
        joint_noise_psd: joint,
        q_psd,
        r_pd,
        re_pd,
        pi_pd,
        pi_hv_norm,
        pass: failures.is_empty(),
        failures,
    }
}

// ---------------------------------------------------------------------------
// Lyapunov equations
// ---------------------------------------------------------------------------

fn vec_of(m: &Mat) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn unvec(v: &[f64], r: usize, c: usize) -> Mat {
    Mat::from_column_slice(r, c, v)
}

/// Solves the pair of coupled diagonal-block equations
/// `X_h = A1 X_h A1ᵀ + A2 X_v A2ᵀ + W_h`, `X_v = A3 X_h A3ᵀ + A4 X_v A4ᵀ + W_v`
/// directly through their vectorized form.
pub fn coupled_lyapunov(m: &RoesserModel, w_h: &Mat, w_v: &Mat) -> Result<(Mat, Mat)> {
    let (h, v) = (m.n_h, m.n_v);
    let (hh, vv) = (h * h, v * v);
    let mut sys = Mat::identity(hh + vv, hh + vv);
    sys.view_mut((0, 0), (hh, hh)).sub_assign(&m.a1.kronecker(&m.a1));
    sys.view_mut((0, hh), (hh, vv)).sub_assign(&m.a2.kronecker(&m.a2));
    sys.view_mut((hh, 0), (vv, hh)).sub_assign(&m.a3.kronecker(&m.a3));
    sys.view_mut((hh, hh), (vv, vv)).sub_assign(&m.a4.kronecker(&m.a4));
    let mut rhs = DVector::zeros(hh + vv);
    rhs.rows_mut(0, hh).copy_from(&vec_of(w_h));
    rhs.rows_mut(hh, vv).copy_from(&vec_of(w_v));
    let x = sys.lu().solve(&rhs).ok_or_else(|| Error::Singular {
        step: "coupled Lyapunov".into(),
        rank: 0,
        expected: hh + vv,
    })?;
    let xh = symmetrize(&unvec(&x.as_slice()[..hh], h, h));
    let xv = symmetrize(&unvec(&x.as_slice()[hh..], v, v));
    Ok((xh, xv))
}

/// Residual of the coupled diagonal-block equations, relative to the solution norm.
pub fn coupled_lyapunov_residual(m: &RoesserModel, xh: &Mat, xv: &Mat, w_h: &Mat, w_v: &Mat) -> f64 {
    let rh = &m.a1 * xh * m.a1.transpose() + &m.a2 * xv * m.a2.transpose() + w_h - xh;
    let rv = &m.a3 * xh * m.a3.transpose() + &m.a4 * xv * m.a4.transpose() + w_v - xv;
    let num = (rh.norm_squared() + rv.norm_squared()).sqrt();
    let den = (xh.norm_squared() + xv.norm_squared()).sqrt().max(f64::MIN_POSITIVE);
    num / den
}

/// `Π_h`, `Π_v` under the block-diagonal constraint `Π_hv = 0`.
pub fn solve_lyapunov(m: &RoesserModel) -> Result<(Mat, Mat)> {
    let (q, _, _) = m.noise();
    let (h, v) = (m.n_h, m.n_v);
    let qhh = q.view((0, 0), (h, h)).into_owned();
    let qvv = q.view((h, h), (v, v)).into_owned();
    coupled_lyapunov(m, &qhh, &qvv)
}

/// `Π′ = A·Π·Aᵀ + Q` with `Π = diag(Π_h, Π_v)`.
pub fn state_update_covariance(m: &RoesserModel, pi_h: &Mat, pi_v: &Mat) -> Mat {
    let (q, _, _) = m.noise();
    let a = m.a();
    symmetrize(&(&a * block_diag(pi_h, pi_v) * a.transpose() + q))
}

/// Unconstrained `X = A·X·Aᵀ + W` through `(I − A⊗A)·vec X = vec W`.
pub fn full_lyapunov(a: &Mat, w: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let sys = Mat::identity(n * n, n * n) - a.kronecker(a);
    let x = sys.lu().solve(&vec_of(w)).ok_or_else(|| Error::Singular {
        step: "Lyapunov".into(),
        rank: 0,
        expected: n * n,
    })?;
    Ok(symmetrize(&unvec(x.as_slice(), n, n)))
}

// ---------------------------------------------------------------------------
// Riccati equations
// ---------------------------------------------------------------------------

fn relative_change(new: &Mat, old: &Mat) -> f64 {
    let d = (new - old).norm();
    let n = new.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

fn iterate<F: FnMut(&Mat) -> Result<Mat>>(what: &str, x0: Mat, mut step: F) -> Result<(Mat, usize)> {
    let mut x = x0;
    for it in 1..=MAX_ITER {
        let next = step(&x)?;
        let change = relative_change(&next, &x);
        x = next;
        if change < FIXED_POINT_TOL {
            return Ok((x, it));
        }
    }
    let last = step(&x)?;
    Err(Error::NoConvergence { what: what.into(), iterations: MAX_ITER, residual: relative_change(&last, &x) })
}

fn inv(m: &Mat, what: &str) -> Result<Mat> {
    m.clone().try_inverse().ok_or_else(|| Error::Singular { step: what.into(), rank: 0, expected: m.nrows() })
}

/// Forward Riccati map `A P Aᵀ + (G − A P Cᵀ)(Λ₀₀ − C P Cᵀ)⁻¹(G − A P Cᵀ)ᵀ`.
pub fn ric1_map(a: &Mat, c: &Mat, g: &Mat, lambda00: &Mat, p: &Mat) -> Result<Mat> {
    let gp = g - a * p * c.transpose();
    let d = inv(&(lambda00 - c * p * c.transpose()), "Riccati (forward form)")?;
    Ok(symmetrize(&(a * p * a.transpose() + &gp * d * gp.transpose())))
}

/// Error-covariance Riccati map, with the quadratic term subtracted:
/// `A Σ Aᵀ + Q − (A Σ Cᵀ + S)(C Σ Cᵀ + R)⁻¹(A Σ Cᵀ + S)ᵀ`.
pub fn ric2_map(a: &Mat, c: &Mat, q: &Mat, r: &Mat, s: &Mat, sigma: &Mat) -> Result<Mat> {
    let g = a * sigma * c.transpose() + s;
    let d = inv(&(c * sigma * c.transpose() + r), "Riccati (error form)")?;
    Ok(symmetrize(&(a * sigma * a.transpose() + q - &g * d * g.transpose())))
}

/// Forward-form Riccati solution by fixed-point iteration from `P = 0`.
pub fn solve_ric1(a: &Mat, c: &Mat, g: &Mat, lambda00: &Mat) -> Result<Mat> {
    let n = a.nrows();
    Ok(iterate("Riccati (forward form)", Mat::zeros(n, n), |p| ric1_map(a, c, g, lambda00, p))?.0)
}

/// Error-form Riccati solution by fixed-point iteration from `Σ = Π`.
pub fn solve_ric2(a: &Mat, c: &Mat, q: &Mat, r: &Mat, s: &Mat, pi: &Mat) -> Result<Mat> {
    Ok(iterate("Riccati (error form)", pi.clone(), |x| ric2_map(a, c, q, r, s, x))?.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct CovResiduals {
    pub lyapunov: f64,
    pub ric1: f64,
    pub ric2: Option<f64>,
    /// `‖Σ − (Π − P)‖ / ‖Σ‖`.
    pub sigma_identity: Option<f64>,
    /// `‖K_forward − K_error‖ / ‖K_forward‖`.
    pub gain_agreement: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CovarianceSet {
    pub pi_h: Mat,
    pub pi_v: Mat,
    /// Off-diagonal block of the state update covariance `Π′`.
    pub pi_hv: Mat,
    /// Full `n_x × n_x` forward Riccati solution.
    pub p: Mat,
    pub p_h: Mat,
    pub p_v: Mat,
    pub p_hv: Mat,
    pub sigma: Option<Mat>,
    pub sigma_h: Option<Mat>,
    pub sigma_v: Option<Mat>,
    pub g: Mat,
    pub g1: Mat,
    pub g2: Mat,
    pub lambda00: Mat,
    pub r: Mat,
    pub k_forward: Mat,
    pub k_error: Option<Mat>,
    pub re: Mat,
    pub residuals: CovResiduals,
}

/// Lyapunov, both Riccati forms and both gain expressions.
///
/// With `Q`, `R`, `S` supplied, `G` and `Λ₀₀` come from the constrained `Π`.
/// Without them only the forward form is solved, with `G` and `Λ₀₀` taken from
/// the model's own innovations form.
pub fn solve_riccati(m: &RoesserModel) -> Result<CovarianceSet> {
    let (h, v) = (m.n_h, m.n_v);
    let (a, c) = (m.a(), m.c());
    let (q, r, s) = m.noise();
    let (pi_h, pi_v) = solve_lyapunov(m)?;
    let qhh = q.view((0, 0), (h, h)).into_owned();
    let qvv = q.view((h, h), (v, v)).into_owned();
    let lyapunov = coupled_lyapunov_residual(m, &pi_h, &pi_v, &qhh, &qvv);
    let pi = block_diag(&pi_h, &pi_v);
    let pi_hv = state_update_covariance(m, &pi_h, &pi_v).view((0, h), (h, v)).into_owned();

    let (g, lambda00) = if m.has_noise() {
        (&a * &pi * c.transpose() + &s, &c * &pi * c.transpose() + &r)
    } else {
        let k = m.k();
        let p0 = full_lyapunov(&a, &(&k * &m.re * k.transpose()))?;
        (&a * &p0 * c.transpose() + &k * &m.re, &c * &p0 * c.transpose() + &m.re)
    };
    let p = solve_ric1(&a, &c, &g, &lambda00)?;
    let ric1 = relative_change(&ric1_map(&a, &c, &g, &lambda00, &p)?, &p);
    let re = symmetrize(&(&lambda00 - &c * &p * c.transpose()));
    let k_forward = (&g - &a * &p * c.transpose()) * inv(&re, "innovations covariance")?;

    let (mut sigma, mut k_error, mut ric2, mut sigma_identity, mut gain_agreement) = (None, None, None, None, None);
    if m.has_noise() {
        let sg = solve_ric2(&a, &c, &q, &r, &s, &pi)?;
        ric2 = Some(relative_change(&ric2_map(&a, &c, &q, &r, &s, &sg)?, &sg));
        sigma_identity = Some(linalg::rel_diff(&(&pi - &p), &sg));
        let ke = (&a * &sg * c.transpose() + &s) * inv(&(&c * &sg * c.transpose() + &r), "error-form gain")?;
        gain_agreement = Some(linalg::rel_diff(&ke, &k_forward));
        k_error = Some(ke);
        sigma = Some(sg);
    }
    let g1 = g.rows(0, h).into_owned();
    let g2 = g.rows(h, v).into_owned();
    Ok(CovarianceSet {
        p_h: p.view((0, 0), (h, h)).into_owned(),
        p_v: p.view((h, h), (v, v)).into_owned(),
        p_hv: p.view((0, h), (h, v)).into_owned(),
        sigma_h: sigma.as_ref().map(|s| s.view((0, 0), (h, h)).into_owned()),
        sigma_v: sigma.as_ref().map(|s| s.view((h, h), (v, v)).into_owned()),
        sigma,
        pi_h,
        pi_v,
        pi_hv,
        p,
        g,
        g1,
        g2,
        lambda00,
        r,
        k_forward,
        k_error,
        re,
        residuals: CovResiduals { lyapunov, ric1, ric2, sigma_identity, gain_agreement },
    })
}

/// State-estimate covariances of the innovations form.
#[derive(Debug, Clone)]
pub struct InnovationCovariances {
    pub p_h: Mat,
    pub p_v: Mat,
    pub p_hv: Mat,
    pub p_vh: Mat,
    pub g1: Mat,
    pub g2: Mat,
    pub lambda00: Mat,
}

/// `P_h`, `P_v` from the coupled diagonal-block equations driven by `K·Re·Kᵀ`,
/// then the cross term `P_hv = A1 P_h A3ᵀ + A2 P_v A4ᵀ + K1 Re K2ᵀ` and
/// `P_vh = P_hvᵀ`.
pub fn innovation_covariances(m: &RoesserModel) -> Result<InnovationCovariances> {
    let wh = &m.k1 * &m.re * m.k1.transpose();
    let wv = &m.k2 * &m.re * m.k2.transpose();
    let (p_h, p_v) = coupled_lyapunov(m, &wh, &wv)?;
    let p_hv = &m.a1 * &p_h * m.a3.transpose() + &m.a2 * &p_v * m.a4.transpose() + &m.k1 * &m.re * m.k2.transpose();
    let p_vh = p_hv.transpose();
    let g1 = &m.a1 * &p_h * m.c1.transpose() + &m.a2 * &p_v * m.c2.transpose() + &m.k1 * &m.re;
    let g2 = &m.a3 * &p_h * m.c1.transpose() + &m.a4 * &p_v * m.c2.transpose() + &m.k2 * &m.re;
    let lambda00 = &m.c1 * &p_h * m.c1.transpose() + &m.c2 * &p_v * m.c2.transpose() + &m.re;
    Ok(InnovationCovariances { p_h, p_v, p_hv, p_vh, g1, g2, lambda00 })
}

/// The covariance inputs of the autocovariance formula.
#[derive(Debug, Clone)]
pub struct SecondOrder {
    pub state_h: Mat,
    pub state_v: Mat,
    pub g1: Mat,
    pub g2: Mat,
    pub r: Mat,
}

impl From<&CovarianceSet> for SecondOrder {
    fn from(c: &CovarianceSet) -> Self {
        SecondOrder { state_h: c.pi_h.clone(), state_v: c.pi_v.clone(), g1: c.g1.clone(), g2: c.g2.clone(), r: c.r.clone() }
    }
}

impl SecondOrder {
    pub fn innovations(m: &RoesserModel, ic: &InnovationCovariances) -> Self {
        SecondOrder { state_h: ic.p_h.clone(), state_v: ic.p_v.clone(), g1: ic.g1.clone(), g2: ic.g2.clone(), r: m.re.clone() }
    }
}

// ---------------------------------------------------------------------------
// Markov parameters and autocovariances
// ---------------------------------------------------------------------------

/// Memoized `A^{k,m}` with `A^{0,0} = I` and
/// `A^{k,m} = A^{1,0} A^{k−1,m} + A^{0,1} A^{k,m−1}`.
pub struct MarkovPowers {
    a10: Mat,
    a01: Mat,
    memo: HashMap<(usize, usize), Mat>,
}

impl MarkovPowers {
    pub fn new(m: &RoesserModel) -> Self {
        MarkovPowers { a10: m.a10(), a01: m.a01(), memo: HashMap::new() }
    }

    pub fn get(&mut self, k: usize, l: usize) -> Mat {
        if let Some(x) = self.memo.get(&(k, l)) {
            return x.clone();
        }
        let n = self.a10.nrows();
        // fill the table in an order where both predecessors exist
        for kk in 0..=k {
            for ll in 0..=l {
                if self.memo.contains_key(&(kk, ll)) {
                    continue;
                }
                let val = if kk == 0 && ll == 0 {
                    Mat::identity(n, n)
                } else {
                    let mut v = Mat::zeros(n, n);
                    if kk > 0 {
                        v += &self.a10 * &self.memo[&(kk - 1, ll)];
                    }
                    if ll > 0 {
                        v += &self.a01 * &self.memo[&(kk, ll - 1)];
                    }
                    v
                };
                self.memo.insert((kk, ll), val);
            }
        }
        self.memo[&(k, l)].clone()
    }
}

pub fn markov_power(m: &RoesserModel, k: usize, l: usize) -> Mat {
    MarkovPowers::new(m).get(k, l)
}

/// `Λ_{k,l} = E{ y[r+k, s+l] y[r,s]ᵀ }` from the four-branch formula.
pub fn autocovariance(m: &RoesserModel, so: &SecondOrder, k: usize, l: usize) -> Mat {
    match (k, l) {
        (0, 0) => &m.c1 * &so.state_h * m.c1.transpose() + &m.c2 * &so.state_v * m.c2.transpose() + &so.r,
        (k, 0) => &m.c1 * m.a1.pow((k - 1) as u32) * &so.g1,
        (0, l) => &m.c2 * m.a4.pow((l - 1) as u32) * &so.g2,
        (k, l) => {
            let mut mp = MarkovPowers::new(m);
            let g10 = vstack(&[&so.g1, &Mat::zeros(m.n_v, m.n_y)]);
            let g01 = vstack(&[&Mat::zeros(m.n_h, m.n_y), &so.g2]);
            let c = m.c();
            &c * mp.get(k - 1, l) * g10 + &c * mp.get(k, l - 1) * g01
        }
    }
}

// ---------------------------------------------------------------------------
// Uncorrelated construction
// ---------------------------------------------------------------------------

/// Replaces `K2` so that the state-estimate cross covariance `P_hv` vanishes.
///
/// Iterates `K2ᵀ ← K2ᵀ − (K1 Re)⁺ (A1 P_h A3ᵀ + A2 P_v A4ᵀ + K1 Re K2ᵀ)` with
/// `P_h`, `P_v` re-solved for the current `K2`. Starts from the supplied `K2`.
pub fn construct_uncorrelated(m: &RoesserModel) -> Result<RoesserModel> {
    let mut out = m.clone();
    let k1re = &m.k1 * &m.re;
    let k1re_pinv = pseudo_inverse(&k1re);
    for _ in 0..MAX_ITER {
        let ic = innovation_covariances(&out)?;
        let next_t = out.k2.transpose() - &k1re_pinv * &ic.p_hv;
        let next = next_t.transpose();
        let change = relative_change(&next, &out.k2);
        out.k2 = next;
        if change < FIXED_POINT_TOL {
            break;
        }
    }
    let ic = innovation_covariances(&out)?;
    let residual = ic.p_hv.norm();
    if residual >= 1e-10 || !residual.is_finite() {
        return Err(Error::NoConvergence { what: "uncorrelated K2 construction".into(), iterations: MAX_ITER, residual });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialCondition {
    /// `x^h[0,s] = 0` and `x^v[r,0] = 0`.
    #[default]
    Zero,
    /// Boundary states drawn independently from `N(0, P_h)` and `N(0, P_v)`.
    Stationary,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub y: GridData,
    pub xh: GridData,
    pub xv: GridData,
    pub e: GridData,
}

/// Simulates the innovations form on `[0,N]×[0,M]`.
///
/// Randomness comes from `ChaCha20Rng::seed_from_u64(seed)` through standard
/// normal draws. For the stationary boundary the draws are `x^h[0,s]` for
/// `s = 0..=M`, then `x^v[r,0]` for `r = 0..=N`; the innovations follow,
/// scanline by scanline (`s` outer, `r` inner), each `e = L·z` with `L·Lᵀ = Re`.
pub fn simulate(m: &RoesserModel, big_n: usize, big_m: usize, seed: u64, init: InitialCondition) -> Result<Simulation> {
    let (h, v, ny) = (m.n_h, m.n_v, m.n_y);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> DVector<f64> { DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng)) };
    let mut xh = GridData::zeros(h, big_n, big_m);
    let mut xv = GridData::zeros(v, big_n, big_m);
    let mut y = GridData::zeros(ny, big_n, big_m);
    let mut e = GridData::zeros(ny, big_n, big_m);
    if init == InitialCondition::Stationary {
        let ic = innovation_covariances(m)?;
        let lh = linalg::psd_factor(&ic.p_h);
        let lv = linalg::psd_factor(&ic.p_v);
        for s in 0..=big_m {
            xh.set(0, s, (&lh * draw(h)).as_slice());
        }
        for r in 0..=big_n {
            xv.set(r, 0, (&lv * draw(v)).as_slice());
        }
    }
    let le = linalg::psd_factor(&m.re);
    for s in 0..=big_m {
        for r in 0..=big_n {
            e.set(r, s, (&le * draw(ny)).as_slice());
        }
    }
    for s in 0..=big_m {
        for r in 0..=big_n {
            let xh_rs = xh.vector(r, s);
            let xv_rs = xv.vector(r, s);
            let e_rs = e.vector(r, s);
            let y_rs = &m.c1 * &xh_rs + &m.c2 * &xv_rs + &e_rs;
            y.set(r, s, y_rs.as_slice());
            if r < big_n {
                let nx = &m.a1 * &xh_rs + &m.a2 * &xv_rs + &m.k1 * &e_rs;
                xh.set(r + 1, s, nx.as_slice());
            }
            if s < big_m {
                let nx = &m.a3 * &xh_rs + &m.a4 * &xv_rs + &m.k2 * &e_rs;
                xv.set(r, s + 1, nx.as_slice());
            }
        }
    }
    Ok(Simulation { y, xh, xv, e })
}

/// Largest violation of the three recurrences over the grid.
pub fn recurrence_residual(m: &RoesserModel, sim: &Simulation) -> f64 {
    let (big_n, big_m) = (sim.y.rows(), sim.y.cols());
    let mut worst: f64 = 0.0;
    for s in 0..=big_m {
        for r in 0..=big_n {
            let (xh, xv, e) = (sim.xh.vector(r, s), sim.xv.vector(r, s), sim.e.vector(r, s));
            let y = &m.c1 * &xh + &m.c2 * &xv + &e;
            worst = worst.max((y - sim.y.vector(r, s)).amax());
            if r < big_n {
                let nx = &m.a1 * &xh + &m.a2 * &xv + &m.k1 * &e;
                worst = worst.max((nx - sim.xh.vector(r + 1, s)).amax());
            }
            if s < big_m {
                let nx = &m.a3 * &xh + &m.a4 * &xv + &m.k2 * &e;
                worst = worst.max((nx - sim.xv.vector(r, s + 1)).amax());
            }
        }
    }
    worst
}

/// The stability check used throughout: spectral radius of the full `A`.
pub fn is_stable(m: &RoesserModel) -> bool {
    spectral_radius(&m.a()) < 1.0
}

//! Model-derived operators of the horizontal subspace equations and the
//! closed-form bias of the stage-1 orthogonal projection.
//!
//! Naming follows the subspace equations:
//!
//! ```text
//! Y_p(k)   = Γ X_p(k) + Γ^{vh} X_p^{vh}(k) + K^h E_p(k)
//! Y_f(k)   = Γ X_f(k) + Γ^{vh} X_f^{vh}(k) + K^h E_f(k)
//! X_f(k)   = A1^i X_p(k) + Φ^{vh} X_p^{vh}(k) + L E_p(k)
//! X^{vh}(k+1) = Θ^{vh} X(k) + A^{vh} X^{vh}(k) + K^{vh} E(k)
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::hankel::{build_bold, build_hankel};
use crate::linalg::{hstack, kron_eye, rel_diff, row_space_project, vstack, Mat};
use crate::model::{InnovationCovariances, RoesserModel};

/// Threshold below which `‖P_hv‖` is treated as the block-diagonal model class.
pub const UNCORRELATED_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct StructuredOperators {
    pub i: usize,
    pub big_m: usize,
    pub n_h: usize,
    pub n_v: usize,
    pub n_y: usize,
    /// `A1^i`.
    pub a1_i: Mat,
    pub gamma_h: Mat,
    pub gamma_vh: Mat,
    pub k_h: Mat,
    pub theta_h: Mat,
    pub theta_vh: Mat,
    pub a_vh: Mat,
    pub k_vh: Mat,
    pub phi_h: Mat,
    pub phi_vh: Mat,
    pub l_h: Mat,
    /// Strictly lower block Toeplitz with blocks `A1^{a−b−1}`.
    pub g_a1: Mat,
    pub ba_m_vh: Mat,
    pub bk_m_vh: Mat,
    pub ba_m_h: Mat,
    pub bk_m_h: Mat,
    pub q1: Mat,
    pub q2: Mat,
    pub p1: Mat,
    pub p2: Mat,
}

fn powers(a: &Mat, upto: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(upto + 1);
    out.push(Mat::identity(a.nrows(), a.ncols()));
    for p in 1..=upto {
        let next = a * &out[p - 1];
        out.push(next);
    }
    out
}

/// Lower block triangular Toeplitz matrix with diagonal `diag` and block
/// `(a, b)`, `a > b`, equal to `below(a − b)`.
fn lower_toeplitz(i: usize, br: usize, bc: usize, diag: &Mat, below: impl Fn(usize) -> Mat) -> Mat {
    let mut out = Mat::zeros(br * i, bc * i);
    for a in 0..i {
        out.view_mut((a * br, a * bc), (br, bc)).copy_from(diag);
        for b in 0..a {
            out.view_mut((a * br, b * bc), (br, bc)).copy_from(&below(a - b));
        }
    }
    out
}

/// Upper block triangular Toeplitz matrix from generators `gens[0..=M]`.
fn upper_toeplitz(gens: &[Mat]) -> Mat {
    let (br, bc) = gens[0].shape();
    let m = gens.len();
    let mut out = Mat::zeros(br * m, bc * m);
    for a in 0..m {
        for b in a..m {
            out.view_mut((a * br, b * bc), (br, bc)).copy_from(&gens[b - a]);
        }
    }
    out
}

/// Builds every operator directly from its block definition.
pub fn build_operators(m: &RoesserModel, i: usize, big_m: usize) -> Result<StructuredOperators> {
    if i == 0 {
        return Err(Error::Input("block depth i must be at least 1".into()));
    }
    let (h, v, y) = (m.n_h, m.n_v, m.n_y);
    let pw = powers(&m.a1, i);
    let gamma_h = vstack(&pw[..i].iter().map(|p| &m.c1 * p).collect::<Vec<_>>().iter().collect::<Vec<_>>());
    let theta_h = vstack(&pw[..i].iter().collect::<Vec<_>>());
    let theta_vh = vstack(&pw[..i].iter().map(|p| &m.a3 * p).collect::<Vec<_>>().iter().collect::<Vec<_>>());
    let phi_h = hstack(&(0..i).map(|a| &pw[i - 1 - a]).collect::<Vec<_>>());
    let phi_vh_parts: Vec<Mat> = (0..i).map(|a| &pw[i - 1 - a] * &m.a2).collect();
    let phi_vh = hstack(&phi_vh_parts.iter().collect::<Vec<_>>());
    let l_parts: Vec<Mat> = (0..i).map(|a| &pw[i - 1 - a] * &m.k1).collect();
    let l_h = hstack(&l_parts.iter().collect::<Vec<_>>());
    let g_a1 = lower_toeplitz(i, h, h, &Mat::zeros(h, h), |d| pw[d - 1].clone());
    let gamma_vh = lower_toeplitz(i, y, v, &m.c2, |d| &m.c1 * &pw[d - 1] * &m.a2);
    let k_h = lower_toeplitz(i, y, y, &Mat::identity(y, y), |d| &m.c1 * &pw[d - 1] * &m.k1);
    let a_vh = lower_toeplitz(i, v, v, &m.a4, |d| &m.a3 * &pw[d - 1] * &m.a2);
    let k_vh = lower_toeplitz(i, v, y, &m.k2, |d| &m.a3 * &pw[d - 1] * &m.k1);

    let avh_pw = powers(&a_vh, big_m);
    let ba_parts: Vec<Mat> = (0..big_m).map(|p| &avh_pw[p] * &theta_vh).collect();
    let bk_parts: Vec<Mat> = (0..big_m).map(|p| &avh_pw[p] * &k_vh).collect();
    let ba_m_vh = if big_m == 0 { Mat::zeros(v * i, 0) } else { hstack(&ba_parts.iter().collect::<Vec<_>>()) };
    let bk_m_vh = if big_m == 0 { Mat::zeros(v * i, 0) } else { hstack(&bk_parts.iter().collect::<Vec<_>>()) };

    let mut a_gens = vec![pw[i].clone()];
    let mut k_gens = vec![l_h.clone()];
    for p in 0..big_m {
        a_gens.push(&phi_vh * &ba_parts[p]);
        k_gens.push(&phi_vh * &bk_parts[p]);
    }
    let ba_m_h = upper_toeplitz(&a_gens);
    let bk_m_h = upper_toeplitz(&k_gens);
    let q1 = hstack(&[&Mat::zeros(v * i, h), &ba_m_vh]);
    let q2 = hstack(&[&Mat::zeros(v * i, y * i), &bk_m_vh]);
    let p1 = &q1 * &ba_m_h;
    let p2 = &q1 * &bk_m_h;
    Ok(StructuredOperators {
        i,
        big_m,
        n_h: h,
        n_v: v,
        n_y: y,
        a1_i: pw[i].clone(),
        gamma_h,
        gamma_vh,
        k_h,
        theta_h,
        theta_vh,
        a_vh,
        k_vh,
        phi_h,
        phi_vh,
        l_h,
        g_a1,
        ba_m_vh,
        bk_m_vh,
        ba_m_h,
        bk_m_h,
        q1,
        q2,
        p1,
        p2,
    })
}

impl StructuredOperators {
    /// Relative residual of each Kronecker-product identity, evaluated
    /// independently of the block definitions used to build the operators.
    pub fn kronecker_residuals(&self, m: &RoesserModel) -> Vec<(&'static str, f64)> {
        let i = self.i;
        let g = &self.g_a1;
        let e = |x: &Mat| kron_eye(i, x);
        vec![
            ("theta_vh", rel_diff(&self.theta_vh, &(e(&m.a3) * &self.theta_h))),
            ("a_vh", rel_diff(&self.a_vh, &(e(&m.a3) * g * e(&m.a2) + e(&m.a4)))),
            ("k_vh", rel_diff(&self.k_vh, &(e(&m.a3) * g * e(&m.k1) + e(&m.k2)))),
            ("gamma_vh", rel_diff(&self.gamma_vh, &(e(&m.c1) * g * e(&m.a2) + e(&m.c2)))),
            ("k_h", rel_diff(&self.k_h, &(e(&m.c1) * g * e(&m.k1) + Mat::identity(self.n_y * i, self.n_y * i)))),
            ("phi_vh", rel_diff(&self.phi_vh, &(&self.phi_h * e(&m.a2)))),
            ("p1", rel_diff(&self.p1, &(&self.q1 * &self.ba_m_h))),
            ("p2", rel_diff(&self.p2, &(&self.q1 * &self.bk_m_h))),
        ]
    }

    pub fn max_kronecker_residual(&self, m: &RoesserModel) -> f64 {
        self.kronecker_residuals(m).iter().map(|(_, r)| *r).fold(0.0, f64::max)
    }
}

/// Both evaluations of the projection coefficient `Δ`.
#[derive(Debug, Clone)]
pub struct DeltaForms {
    /// `A1^i P_h Γᵀ + Φ^{vh}(I⊗P_v)Γ^{vh}ᵀ + L(I⊗Re)K^hᵀ`.
    pub covariance: Mat,
    /// `[A1^{i−1}G1 | A1^{i−2}G1 | … | G1]`.
    pub markov: Mat,
    pub difference: f64,
}

pub fn delta_markov(m: &RoesserModel, ic: &InnovationCovariances, ops: &StructuredOperators) -> DeltaForms {
    let i = ops.i;
    let covariance = &ops.a1_i * &ic.p_h * ops.gamma_h.transpose()
        + &ops.phi_vh * kron_eye(i, &ic.p_v) * ops.gamma_vh.transpose()
        + &ops.l_h * kron_eye(i, &m.re) * ops.k_h.transpose();
    let pw = powers(&m.a1, i);
    let parts: Vec<Mat> = (0..i).map(|a| &pw[i - 1 - a] * &ic.g1).collect();
    let markov = hstack(&parts.iter().collect::<Vec<_>>());
    let difference = rel_diff(&covariance, &markov);
    DeltaForms { covariance, markov, difference }
}

#[derive(Debug, Clone)]
pub struct BiasTerms {
    pub p_hv: Mat,
    /// `P_hv` was below [`UNCORRELATED_TOL`] and replaced by exact zero.
    pub assumed_uncorrelated: bool,
    /// `𝒫₀ = Θ^{vh} Φ^h (I⊗P_hv)`.
    pub p0: Mat,
    /// `𝒬₀ = (I⊗A3) G (I⊗P_hv) + (I⊗P_vh) Gᵀ (I⊗A3ᵀ)`.
    pub q0: Mat,
    /// Expected per-column cross products `E{X_f^{vh}(k) X_p^{vh}(k)ᵀ}/j` for `k = 0..=M`.
    pub per_k: Vec<Mat>,
    /// Weighted double sum equal to `Σ_k per_k[k]`.
    pub double_sum: Mat,
    /// `Γ^{vh} (double_sum) Γ^{vh}ᵀ / (M+1)`, the expected
    /// `Γ^{vh} X_f^{vh} X_p^{vh}ᵀ Γ^{vh}ᵀ / j̄`.
    pub crosscov: Mat,
}

impl BiasTerms {
    /// `crosscov · R_pp⁻¹ · Y_p` for a given past output matrix.
    pub fn bias_matrix(&self, y_p: &Mat) -> Result<Mat> {
        apply_rpp_inverse(&self.crosscov, y_p)
    }
}

/// `c · (Y_p Y_pᵀ/j̄)⁻¹ · Y_p`.
pub fn apply_rpp_inverse(c: &Mat, y_p: &Mat) -> Result<Mat> {
    let jbar = y_p.ncols() as f64;
    let rpp = y_p * y_p.transpose() / jbar;
    let ch = rpp.cholesky().ok_or_else(|| Error::Singular {
        step: "R_pp".into(),
        rank: 0,
        expected: y_p.nrows(),
    })?;
    Ok(ch.solve(&c.transpose()).transpose() * y_p)
}

/// Closed-form cross covariance of the unknown vertical states.
///
/// The per-`k` term is
/// `Σ_{q<k} (A^{vh})^q 𝒫₀ (A^{vh})^{qᵀ} + Σ_{ℓ=1}^{k−1} Σ_{q=0}^{k−ℓ−1} (A^{vh})^{ℓ−1}Θ^{vh}Φ^{vh}(A^{vh})^q 𝒬₀ (A^{vh})^{(ℓ+q)ᵀ}`,
/// which reproduces the `k = 0, 1, 2` expansions. Summing over `k` gives the
/// weighted double sum with weights `M − q` and `M − ℓ − q`.
pub fn bias_closed_form(m: &RoesserModel, p_hv: &Mat, ops: &StructuredOperators) -> BiasTerms {
    let (i, big_m) = (ops.i, ops.big_m);
    let assumed = p_hv.norm() < UNCORRELATED_TOL;
    let p_hv = if assumed { Mat::zeros(m.n_h, m.n_v) } else { p_hv.clone() };
    let p0 = &ops.theta_vh * &ops.phi_h * kron_eye(i, &p_hv);
    let q0 = kron_eye(i, &m.a3) * &ops.g_a1 * kron_eye(i, &p_hv)
        + kron_eye(i, &p_hv.transpose()) * ops.g_a1.transpose() * kron_eye(i, &m.a3.transpose());
    let nvi = m.n_v * i;
    let apw = powers(&ops.a_vh, 2 * big_m.max(1));
    let tp = &ops.theta_vh * &ops.phi_vh;
    let first = |q: usize| &apw[q] * &p0 * apw[q].transpose();
    let second = |l: usize, q: usize| &apw[l - 1] * &tp * &apw[q] * &q0 * apw[l + q].transpose();

    let mut per_k = Vec::with_capacity(big_m + 1);
    for k in 0..=big_m {
        let mut c = Mat::zeros(nvi, nvi);
        for q in 0..k {
            c += first(q);
        }
        for l in 1..k {
            for q in 0..k - l {
                c += second(l, q);
            }
        }
        per_k.push(c);
    }

    let mut double_sum = Mat::zeros(nvi, nvi);
    for q in 0..big_m {
        double_sum += first(q) * (big_m - q) as f64;
    }
    for l in 1..big_m {
        for q in 0..big_m - l {
            double_sum += second(l, q) * (big_m - l - q) as f64;
        }
    }
    let crosscov = &ops.gamma_vh * &double_sum * ops.gamma_vh.transpose() / (big_m + 1) as f64;
    BiasTerms { p_hv, assumed_uncorrelated: assumed, p0, q0, per_k, double_sum, crosscov }
}

/// Sample counterpart of the bias computed from true state grids.
#[derive(Debug, Clone)]
pub struct EmpiricalBias {
    /// `Γ^{vh} X_f^{vh} X_p^{vh}ᵀ Γ^{vh}ᵀ / j̄`.
    pub crosscov: Mat,
    /// Per-`k` `X_f^{vh}(k) X_p^{vh}(k)ᵀ / j`.
    pub per_k: Vec<Mat>,
    pub bias: Mat,
}

/// `Γ^{vh} X_f^{vh} X_p^{vh}ᵀ Γ^{vh}ᵀ / j̄` and the per-`k` products.
pub fn empirical_crosscov(xv: &GridData, ops: &StructuredOperators, j: usize) -> Result<(Mat, Vec<Mat>)> {
    let (i, big_m) = (ops.i, ops.big_m);
    let mut per_k = Vec::with_capacity(big_m + 1);
    let mut total = Mat::zeros(ops.n_v * i, ops.n_v * i);
    for k in 0..=big_m {
        let xp = build_hankel(xv, k, 0, i, j)?;
        let xf = build_hankel(xv, k, i, i, j)?;
        let prod = xf * xp.transpose();
        total += &prod;
        per_k.push(prod / j as f64);
    }
    let jbar = (j * (big_m + 1)) as f64;
    Ok((&ops.gamma_vh * total * ops.gamma_vh.transpose() / jbar, per_k))
}

pub fn bias_empirical(y: &GridData, xv: &GridData, ops: &StructuredOperators, j: usize) -> Result<EmpiricalBias> {
    let (crosscov, per_k) = empirical_crosscov(xv, ops, j)?;
    let y_p = build_bold(y, 0, ops.i, j, ops.big_m)?;
    let bias = apply_rpp_inverse(&crosscov, &y_p)?;
    Ok(EmpiricalBias { crosscov, per_k, bias })
}

/// `‖Y_f/Y_p − Γ Δ R_pp⁻¹ Y_p‖ / ‖Y_f/Y_p‖`.
pub fn projection_theorem_ratio(y: &GridData, ops: &StructuredOperators, delta: &Mat, j: usize) -> Result<f64> {
    let (i, big_m) = (ops.i, ops.big_m);
    let y_p = build_bold(y, 0, i, j, big_m)?;
    let y_f = build_bold(y, i, i, j, big_m)?;
    let proj = row_space_project(&y_f, &y_p)?;
    let pred = apply_rpp_inverse(&(&ops.gamma_h * delta), &y_p)?;
    Ok((&proj - pred).norm() / proj.norm())
}

/// Monte Carlo comparison of the closed-form cross covariance with its
/// sample counterpart at one `(i, M, j)`.
#[derive(Debug, Clone, Serialize)]
pub struct BiasRow {
    pub i: usize,
    pub big_m: usize,
    pub j: usize,
    pub jbar: usize,
    pub seeds: usize,
    pub assumed_uncorrelated: bool,
    pub closed_form_norm: f64,
    /// Norm of the seed-averaged sample cross covariance.
    pub empirical_mean_norm: f64,
    /// Seed average of `‖sample − closed form‖`.
    pub deviation_norm: f64,
    /// Largest entrywise `|mean − closed form|` in units of the standard
    /// error of the mean over seeds.
    pub max_z: f64,
    /// `max_z ≤ 3`.
    pub within_band: bool,
}

/// Simulates `seeds.len()` grids with stationary boundaries and compares the
/// sample cross covariance of the vertical states with [`bias_closed_form`].
pub fn bias_monte_carlo(m: &RoesserModel, i: usize, big_m: usize, j: usize, seeds: &[u64]) -> Result<BiasRow> {
    if seeds.len() < 2 {
        return Err(Error::Input("the Monte Carlo band needs at least two seeds".into()));
    }
    let ic = crate::model::innovation_covariances(m)?;
    let ops = build_operators(m, i, big_m)?;
    let closed = bias_closed_form(m, &ic.p_hv, &ops);
    let big_n = (2 * i + j).saturating_sub(2);
    let samples: Result<Vec<Mat>> = seeds
        .iter()
        .map(|&seed| {
            let sim = crate::model::simulate(m, big_n, big_m, seed, crate::model::InitialCondition::Stationary)?;
            Ok(empirical_crosscov(&sim.xv, &ops, j)?.0)
        })
        .collect();
    let samples = samples?;
    let n = samples.len() as f64;
    let mean = samples.iter().fold(Mat::zeros(closed.crosscov.nrows(), closed.crosscov.ncols()), |a, b| a + b) / n;
    let mut max_z: f64 = 0.0;
    for idx in 0..mean.len() {
        let var = samples.iter().map(|s| (s[idx] - mean[idx]).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let d = (mean[idx] - closed.crosscov[idx]).abs();
        let z = if se > 0.0 {
            d / se
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_z = max_z.max(z);
    }
    let deviation_norm = samples.iter().map(|s| (s - &closed.crosscov).norm()).sum::<f64>() / n;
    Ok(BiasRow {
        i,
        big_m,
        j,
        jbar: j * (big_m + 1),
        seeds: seeds.len(),
        assumed_uncorrelated: closed.assumed_uncorrelated,
        closed_form_norm: closed.crosscov.norm(),
        empirical_mean_norm: mean.norm(),
        deviation_norm,
        max_z,
        within_band: max_z <= 3.0,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn decay_exponent(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len()) as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

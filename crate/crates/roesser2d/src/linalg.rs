//! Dense decompositions and structure-constrained least squares.
//!
//! Everything works on `DMatrix<f64>`. The structured solvers (`lttss`, `hss`)
//! parameterize the unknown by its compact generator vector through a
//! [`StructureMap`] and never form the Kronecker product `Bᵀ ⊗ A`; the dense
//! Kronecker route lives in [`kron`] and is kept as an independent check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Relative singular value threshold for every rank decision.
pub const RANK_TOL: f64 = 1e-10;

/// Condition number above which a projection is considered ill-posed.
pub const COND_LIMIT: f64 = 1e12;

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, tiny)`.
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    let d = (a - b).norm();
    let n = b.norm();
    if n > 0.0 {
        d / n
    } else {
        d
    }
}

pub fn kron_eye(i: usize, x: &Mat) -> Mat {
    let (r, c) = x.shape();
    let mut out = Mat::zeros(r * i, c * i);
    for a in 0..i {
        out.view_mut((a * r, a * c), (r, c)).copy_from(x);
    }
    out
}

pub fn vstack(parts: &[&Mat]) -> Mat {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut r0 = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((r0, 0), p.shape()).copy_from(*p);
        r0 += p.nrows();
    }
    out
}

pub fn hstack(parts: &[&Mat]) -> Mat {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let mut c0 = 0;
    for p in parts {
        assert_eq!(p.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c0), p.shape()).copy_from(*p);
        c0 += p.ncols();
    }
    out
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn singular_values(m: &Mat) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Spectral radius via the (possibly complex) eigenvalues.
pub fn spectral_radius(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn min_sym_eigenvalue(m: &Mat) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Symmetric square root factor `L` with `L·Lᵀ == m` for positive semidefinite `m`.
/// Cholesky when possible, otherwise an eigenvalue factor with clipped negatives.
pub fn psd_factor(m: &Mat) -> Mat {
    if let Some(ch) = m.clone().cholesky() {
        return ch.l();
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut v = eig.eigenvectors.clone();
    for (k, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        v.column_mut(k).scale_mut(s);
    }
    v
}

// ---------------------------------------------------------------------------
// RQ, projections, pseudo-inverse, orthogonal complement
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Rq {
    pub l: Mat,
    pub q: Mat,
    /// Indices of diagonal entries of `l` below the rank threshold.
    pub deficient: Vec<usize>,
}

/// `m = L·Q` with `L` lower triangular (nonnegative diagonal) and `Q` with orthonormal rows.
pub fn rq_decompose(m: &Mat) -> Result<Rq> {
    let (rows, cols) = m.shape();
    if cols < rows {
        return Err(Error::Dimension(format!(
            "rq_decompose needs cols >= rows, got {rows}x{cols}"
        )));
    }
    let qr = m.transpose().qr();
    let mut q = qr.q().transpose();
    let mut l = qr.r().transpose();
    for k in 0..rows {
        if l[(k, k)] < 0.0 {
            l.column_mut(k).neg_mut();
            q.row_mut(k).neg_mut();
        }
    }
    let dmax = (0..rows).map(|k| l[(k, k)]).fold(0.0, f64::max);
    let deficient = (0..rows)
        .filter(|&k| l[(k, k)] <= RANK_TOL * dmax || dmax == 0.0)
        .collect();
    Ok(Rq { l, q, deficient })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regularize {
    /// Ill-conditioned `P·Pᵀ` is an error.
    Strict,
    /// Ill-conditioned `P·Pᵀ` is ridge-regularized with `λ = 1e-10·trace/rows`.
    Ridge,
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// `F·Pᵀ·(P·Pᵀ)⁻¹`, so that `F/P == coef·P`.
    pub coef: Mat,
    pub value: Mat,
    pub condition: f64,
    pub ridge: bool,
}

/// Orthogonal projection of the rows of `f` onto the row space of `p`.
pub fn row_space_project(f: &Mat, p: &Mat) -> Result<Mat> {
    Ok(project_rows(f, p, Regularize::Strict)?.value)
}

pub fn project_rows(f: &Mat, p: &Mat, reg: Regularize) -> Result<Projection> {
    if f.ncols() != p.ncols() {
        return Err(Error::Dimension(format!(
            "projection column mismatch {} vs {}",
            f.ncols(),
            p.ncols()
        )));
    }
    let rq = rq_decompose(p)?;
    let sv = singular_values(&rq.l);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    let condition = if smin > 0.0 { (smax / smin).powi(2) } else { f64::INFINITY };
    if condition <= COND_LIMIT {
        let fq = f * rq.q.transpose();
        let value = &fq * &rq.q;
        // coef = F Qᵀ L⁻¹
        let coef = rq
            .l
            .transpose()
            .solve_upper_triangular(&fq.transpose())
            .map(|x| x.transpose())
            .ok_or(Error::IllConditioned(condition))?;
        return Ok(Projection { coef, value, condition, ridge: false });
    }
    if reg == Regularize::Strict {
        return Err(Error::IllConditioned(condition));
    }
    let ppt = p * p.transpose();
    let lambda = 1e-10 * ppt.trace() / ppt.nrows().max(1) as f64;
    let reg_ppt = &ppt + Mat::identity(ppt.nrows(), ppt.nrows()) * lambda;
    let ch = reg_ppt.cholesky().ok_or(Error::IllConditioned(condition))?;
    let coef = ch.solve(&(p * f.transpose())).transpose();
    let value = &coef * p;
    Ok(Projection { coef, value, condition, ridge: true })
}

/// Moore-Penrose inverse with the relative rank threshold.
pub fn pseudo_inverse(m: &Mat) -> Mat {
    let (r, c) = m.shape();
    if m.is_empty() {
        return Mat::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut out = Mat::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_TOL * smax && s > 0.0 {
            out += vt.row(k).transpose() * u.column(k).transpose() / s;
        }
    }
    out
}

pub fn numerical_rank(m: &Mat) -> usize {
    let s = singular_values(m);
    let smax = s.first().copied().unwrap_or(0.0);
    s.iter().filter(|&&x| x > RANK_TOL * smax && x > 0.0).count()
}

/// Orthonormal rows spanning the left null space of `m`: `result·m == 0`.
pub fn orth_complement(m: &Mat) -> Result<Mat> {
    let (rows, cols) = m.shape();
    if rows <= cols {
        return Err(Error::Dimension(format!(
            "orth_complement needs rows > cols, got {rows}x{cols}"
        )));
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut proj = Mat::identity(rows, rows);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_TOL * smax && s > 0.0 {
            proj -= u.column(k) * u.column(k).transpose();
        }
    }
    let eig = SymmetricEigen::new(symmetrize(&proj));
    let mut idx: Vec<usize> = (0..rows).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = Mat::zeros(idx.len(), rows);
    for (r, &k) in idx.iter().enumerate() {
        out.row_mut(r).copy_from(&eig.eigenvectors.column(k).transpose());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Structure maps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructureKind {
    LowerToeplitz,
    Hankel,
}

/// 0/1 map from a compact generator vector to `vec(X)` (column-major).
///
/// Parameters are ordered generator block first, then column-major inside the
/// block. Structurally zero entries of a lower-triangular Toeplitz matrix map
/// to no parameter (an all-zero row of the dense map).
#[derive(Debug, Clone)]
pub struct StructureMap {
    pub kind: StructureKind,
    pub block_rows: usize,
    pub block_cols: usize,
    pub i: usize,
    pub j: usize,
    index: Vec<Option<usize>>,
    n_params: usize,
}

impl StructureMap {
    pub fn toeplitz(block_rows: usize, block_cols: usize, i: usize) -> Self {
        Self::build(StructureKind::LowerToeplitz, block_rows, block_cols, i, i)
    }

    pub fn hankel(block_rows: usize, block_cols: usize, i: usize, j: usize) -> Self {
        Self::build(StructureKind::Hankel, block_rows, block_cols, i, j)
    }

    fn build(kind: StructureKind, br: usize, bc: usize, i: usize, j: usize) -> Self {
        let rows = br * i;
        let cols = bc * j;
        let mut index = vec![None; rows * cols];
        for col in 0..cols {
            for row in 0..rows {
                let (a, u) = (row / br, row % br);
                let (b, v) = (col / bc, col % bc);
                let g = match kind {
                    StructureKind::LowerToeplitz if a >= b => Some(a - b),
                    StructureKind::LowerToeplitz => None,
                    StructureKind::Hankel => Some(a + b),
                };
                index[col * rows + row] = g.map(|g| g * br * bc + v * br + u);
            }
        }
        let n_gen = match kind {
            StructureKind::LowerToeplitz => i,
            StructureKind::Hankel => i + j - 1,
        };
        StructureMap { kind, block_rows: br, block_cols: bc, i, j, index, n_params: n_gen * br * bc }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.block_rows * self.i, self.block_cols * self.j)
    }

    /// Parameter index of each `vec(X)` position.
    pub fn index(&self) -> &[Option<usize>] {
        &self.index
    }

    pub fn to_matrix(&self) -> Mat {
        let mut f = Mat::zeros(self.index.len(), self.n_params);
        for (pos, p) in self.index.iter().enumerate() {
            if let Some(p) = p {
                f[(pos, *p)] = 1.0;
            }
        }
        f
    }

    pub fn expand(&self, params: &[f64]) -> Mat {
        assert_eq!(params.len(), self.n_params);
        let (rows, cols) = self.shape();
        let mut x = Mat::zeros(rows, cols);
        for (pos, p) in self.index.iter().enumerate() {
            if let Some(p) = p {
                x[(pos % rows, pos / rows)] = params[*p];
            }
        }
        x
    }

    /// Reads each parameter from its first occurrence in `x`.
    pub fn compress(&self, x: &Mat) -> Vec<f64> {
        let rows = self.shape().0;
        let mut out = vec![f64::NAN; self.n_params];
        for (pos, p) in self.index.iter().enumerate() {
            if let Some(p) = p {
                if out[*p].is_nan() {
                    out[*p] = x[(pos % rows, pos / rows)];
                }
            }
        }
        out
    }

    /// Least-squares projection of an arbitrary matrix onto the structure class.
    pub fn project(&self, x: &Mat) -> Mat {
        let rows = self.shape().0;
        let mut sum = vec![0.0; self.n_params];
        let mut cnt = vec![0usize; self.n_params];
        for (pos, p) in self.index.iter().enumerate() {
            if let Some(p) = p {
                sum[*p] += x[(pos % rows, pos / rows)];
                cnt[*p] += 1;
            }
        }
        let params: Vec<f64> = sum.iter().zip(&cnt).map(|(s, &c)| s / c.max(1) as f64).collect();
        self.expand(&params)
    }
}

/// Minimizes `‖A·X·B − C‖_F` over matrices `X` in the class described by `map`.
fn structured_lsq(a: &Mat, b: &Mat, c: &Mat, map: &StructureMap, step: &str) -> Result<Mat> {
    let (xr, xc) = map.shape();
    if a.ncols() != xr || b.nrows() != xc || c.nrows() != a.nrows() || c.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "{step}: A {}x{}, B {}x{}, C {}x{} incompatible with structured X {xr}x{xc}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let (m, p) = c.shape();
    let np = map.n_params();
    // column k of the design holds vec(A·E_k·B) = Σ vec(A[:,row]·B[col,:])
    let mut design = Mat::zeros(m * p, np);
    for (pos, k) in map.index().iter().enumerate() {
        let Some(k) = k else { continue };
        let (row, col) = (pos % xr, pos / xr);
        let acol = a.column(row);
        for q in 0..p {
            let bq = b[(col, q)];
            if bq == 0.0 {
                continue;
            }
            for row_a in 0..m {
                design[(q * m + row_a, *k)] += bq * acol[row_a];
            }
        }
    }
    let rhs = DVector::from_column_slice(c.as_slice());
    let params = lsq_full_rank(design, &rhs, step)?;
    Ok(map.expand(params.as_slice()))
}

/// Least squares via SVD; rank deficiency below [`RANK_TOL`] is an error.
pub fn lsq_full_rank(design: Mat, rhs: &DVector<f64>, step: &str) -> Result<DVector<f64>> {
    let np = design.ncols();
    if np == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count();
    if rank < np {
        return Err(Error::Singular { step: step.to_string(), rank, expected: np });
    }
    svd.solve(rhs, 0.0).map_err(|e| Error::Input(e.to_string()))
}

/// Lower-triangular block-Toeplitz system solver: `A·X·B ≈ C`.
pub fn lttss(a: &Mat, b: &Mat, c: &Mat, block_rows: usize, block_cols: usize, i: usize) -> Result<Mat> {
    structured_lsq(a, b, c, &StructureMap::toeplitz(block_rows, block_cols, i), "lttss")
}

/// Block-Hankel system solver: `A·X·B ≈ C` with `X` built from `i+j−1` generators.
pub fn hss(
    a: &Mat,
    b: &Mat,
    c: &Mat,
    block_rows: usize,
    block_cols: usize,
    i: usize,
    j: usize,
) -> Result<Mat> {
    structured_lsq(a, b, c, &StructureMap::hankel(block_rows, block_cols, i, j), "hss")
}

/// Generator blocks `H_0 … H_{i+j−2}` of a block-Hankel matrix.
pub fn hankel_generators(x: &Mat, br: usize, bc: usize, i: usize, j: usize) -> Vec<Mat> {
    (0..i + j - 1)
        .map(|g| {
            let (a, b) = if g < j { (0, g) } else { (g - j + 1, j - 1) };
            x.view((a * br, b * bc), (br, bc)).into_owned()
        })
        .collect()
}

pub fn hankel_from_generators(gens: &[Mat], i: usize, j: usize) -> Mat {
    let (br, bc) = gens[0].shape();
    let mut x = Mat::zeros(br * i, bc * j);
    for a in 0..i {
        for b in 0..j {
            x.view_mut((a * br, b * bc), (br, bc)).copy_from(&gens[a + b]);
        }
    }
    x
}

/// `hss` specialised to `B = I`, with optional pinned generators.
///
/// The normal equations are block-banded (bandwidth `i` blocks), so the cost is
/// linear in `j`. Each pinned generator is fixed to its given `br × bc` value.
pub fn hss_right_identity(
    a: &Mat,
    c: &Mat,
    br: usize,
    bc: usize,
    i: usize,
    j: usize,
    pins: &[(usize, Mat)],
) -> Result<Mat> {
    if a.ncols() != br * i || c.nrows() != a.nrows() || c.ncols() != bc * j {
        return Err(Error::Dimension(format!(
            "hss: A {}x{}, C {}x{} incompatible with {i}x{j} blocks of {br}x{bc}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let ng = i + j - 1;
    let n = br * ng;
    let w = br * i - 1;
    let a_blk: Vec<Mat> = (0..i).map(|t| a.columns(t * br, br).into_owned()).collect();
    let mut gram = vec![Mat::zeros(br, br); i * i];
    for s in 0..i {
        for t in 0..=s {
            gram[s * i + t] = a_blk[s].transpose() * &a_blk[t];
        }
    }
    let mut band_base = Band::new(n, w);
    for cc in 0..j {
        for s in 0..i {
            for t in 0..=s {
                let g = &gram[s * i + t];
                let (r0, c0) = ((cc + s) * br, (cc + t) * br);
                for u in 0..br {
                    for v in 0..br {
                        let (r, col) = (r0 + u, c0 + v);
                        if r >= col {
                            band_base.add(r, col, g[(u, v)]);
                        }
                    }
                }
            }
        }
    }
    let mut pinned = vec![false; ng];
    for (g, val) in pins {
        if *g >= ng || val.shape() != (br, bc) {
            return Err(Error::Dimension(format!("hss: bad pin for generator {g}")));
        }
        pinned[*g] = true;
    }
    let mut gens = vec![Mat::zeros(br, bc); ng];
    for v in 0..bc {
        let mut rhs = vec![0.0; n];
        for cc in 0..j {
            let col = c.column(cc * bc + v);
            for s in 0..i {
                let atc = a_blk[s].transpose() * col;
                for u in 0..br {
                    rhs[(cc + s) * br + u] += atc[u];
                }
            }
        }
        let mut band = band_base.clone();
        let mut fixed = vec![None; n];
        for (g, val) in pins {
            for u in 0..br {
                fixed[g * br + u] = Some(val[(u, v)]);
            }
        }
        band.pin(&fixed, &mut rhs);
        let x = band.solve(rhs).map_err(|rank| Error::Singular {
            step: "hss".into(),
            rank,
            expected: n,
        })?;
        for g in 0..ng {
            for u in 0..br {
                gens[g][(u, v)] = x[g * br + u];
            }
        }
    }
    Ok(hankel_from_generators(&gens, i, j))
}

/// Symmetric band matrix stored by lower diagonals: `d[k*(w+1)+t] = N[k][k−t]`.
#[derive(Clone)]
struct Band {
    n: usize,
    w: usize,
    d: Vec<f64>,
}

impl Band {
    fn new(n: usize, w: usize) -> Self {
        Band { n, w, d: vec![0.0; n * (w + 1)] }
    }

    fn at(&self, r: usize, c: usize) -> f64 {
        if r - c > self.w {
            0.0
        } else {
            self.d[r * (self.w + 1) + (r - c)]
        }
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.d[r * (self.w + 1) + (r - c)] += v;
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.d[r * (self.w + 1) + (r - c)] = v;
    }

    fn pin(&mut self, fixed: &[Option<f64>], rhs: &mut [f64]) {
        let n = self.n;
        for p in 0..n {
            let Some(val) = fixed[p] else { continue };
            let lo = p.saturating_sub(self.w);
            let hi = (p + self.w + 1).min(n);
            for k in lo..hi {
                if k == p || fixed[k].is_some() {
                    continue;
                }
                let (r, c) = if k > p { (k, p) } else { (p, k) };
                rhs[k] -= self.at(r, c) * val;
            }
        }
        for p in 0..n {
            let Some(val) = fixed[p] else { continue };
            let lo = p.saturating_sub(self.w);
            let hi = (p + self.w + 1).min(n);
            for k in lo..hi {
                let (r, c) = if k > p { (k, p) } else { (p, k) };
                self.set(r, c, 0.0);
            }
            self.set(p, p, 1.0);
            rhs[p] = val;
        }
    }

    /// In-place band Cholesky followed by the two triangular solves.
    /// On failure returns the number of accepted pivots.
    fn solve(mut self, mut b: Vec<f64>) -> std::result::Result<Vec<f64>, usize> {
        let (n, w) = (self.n, self.w);
        let dmax = (0..n).map(|k| self.at(k, k)).fold(0.0, f64::max);
        let tol = 1e-14 * dmax;
        for k in 0..n {
            let lo = k.saturating_sub(w);
            let mut s = self.at(k, k);
            for t in lo..k {
                let l = self.at(k, t);
                s -= l * l;
            }
            if !(s > tol) {
                return Err(k);
            }
            let lkk = s.sqrt();
            self.set(k, k, lkk);
            for r in k + 1..(k + w + 1).min(n) {
                let lo_r = r.saturating_sub(w).max(lo);
                let mut v = self.at(r, k);
                for t in lo_r..k {
                    v -= self.at(r, t) * self.at(k, t);
                }
                self.set(r, k, v / lkk);
            }
        }
        for k in 0..n {
            let lo = k.saturating_sub(w);
            let mut v = b[k];
            for t in lo..k {
                v -= self.at(k, t) * b[t];
            }
            b[k] = v / self.at(k, k);
        }
        for k in (0..n).rev() {
            let hi = (k + w + 1).min(n);
            let mut v = b[k];
            for r in k + 1..hi {
                v -= self.at(r, k) * b[r];
            }
            b[k] = v / self.at(k, k);
        }
        Ok(b)
    }
}

/// Dense Kronecker route for the structured solvers. Materializes
/// `(Bᵀ ⊗ A)·F`; only meant for small problems and cross-checks.
pub mod kron {
    use super::*;

    pub fn kron(a: &Mat, b: &Mat) -> Mat {
        a.kronecker(b)
    }

    fn dense(a: &Mat, b: &Mat, c: &Mat, map: &StructureMap, step: &str) -> Result<Mat> {
        let design = kron(&b.transpose(), a) * map.to_matrix();
        let rhs = DVector::from_column_slice(c.as_slice());
        let x = lsq_full_rank(design, &rhs, step)?;
        Ok(map.expand(x.as_slice()))
    }

    pub fn lttss(a: &Mat, b: &Mat, c: &Mat, br: usize, bc: usize, i: usize) -> Result<Mat> {
        dense(a, b, c, &StructureMap::toeplitz(br, bc, i), "lttss (dense)")
    }

    pub fn hss(a: &Mat, b: &Mat, c: &Mat, br: usize, bc: usize, i: usize, j: usize) -> Result<Mat> {
        dense(a, b, c, &StructureMap::hankel(br, bc, i, j), "hss (dense)")
    }
}

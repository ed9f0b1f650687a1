//! Two-stage subspace identification of a Roesser innovations model from a
//! single output grid.
//!
//! Stage 1 projects future on past outputs along each direction and reads
//! one-dimensional state estimates off the projection. Stage 2 refines the
//! states of one direction given the current states of the other. System
//! matrices come from least squares on the assembled grids.

pub mod oracle;
pub mod params;
pub mod stage1;
pub mod stage2;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::hankel::{fit_grid, Extent};
use crate::linalg::{spectral_radius, Mat};
use crate::model::RoesserModel;

pub use params::{prediction_error, recover_parameters, regress_parameters, state_recurrence_residual, Parameters};
pub use stage1::{eigen_pairs, select_order, stage1_project, state_grid, Direction, ProjectionResult};
pub use stage2::{stage2, StageTwoState};

#[derive(Debug, Clone)]
pub struct IdentifyConfig {
    pub i: usize,
    pub j: usize,
    pub order_h: Option<usize>,
    pub order_v: Option<usize>,
    /// Number of stage-2 passes; `0` keeps the stage-1 grids only.
    pub iterations: usize,
    pub extent: Extent,
}

impl IdentifyConfig {
    pub fn new(i: usize, j: usize) -> Self {
        IdentifyConfig { i, j, order_h: None, order_v: None, iterations: 1, extent: Extent::Exact }
    }
}

/// Block parameters of the vertical pass: `i_v = min(i, ⌊(M+2)/4⌋)` and
/// `j_v = M + 2 − 2·i_v`, so that `M = 2·i_v + j_v − 2` and `j_v ≥ 2·i_v`.
pub fn vertical_blocks(i: usize, big_m: usize) -> Result<(usize, usize)> {
    let iv = i.min((big_m + 2) / 4);
    if iv == 0 {
        return Err(Error::Input(format!("the vertical pass needs M >= 2, got M={big_m}")));
    }
    Ok((iv, big_m + 2 - 2 * iv))
}

#[derive(Debug, Clone, Serialize)]
pub struct StageOneSummary {
    pub direction: Direction,
    pub i: usize,
    pub j: usize,
    pub order: usize,
    pub order_given: bool,
    pub singular_values: Vec<f64>,
    pub factorization_residual: f64,
    pub shift_eigenvalues: Vec<(f64, f64)>,
    pub rank_deficient_past: bool,
}

impl StageOneSummary {
    fn new(p: &ProjectionResult, i: usize, j: usize, n_y: usize, given: bool) -> Self {
        StageOneSummary {
            direction: p.direction,
            i,
            j,
            order: p.n,
            order_given: given,
            singular_values: p.singular_values.clone(),
            factorization_residual: p.residual,
            shift_eigenvalues: p.shift_eigenvalues(n_y),
            rank_deficient_past: p.rank_deficient_past,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageTwoSummary {
    pub iteration: usize,
    pub direction: Direction,
    pub residuals: Vec<(String, f64)>,
    pub overlap_discrepancy: f64,
    pub oblique_singular_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Candidate {
    /// `"stage1"` or `"stage2:<iteration>"`.
    pub source: String,
    pub re_trace: f64,
    /// Trace of the one-step prediction error covariance of the recovered
    /// model filtering the data; infinite when the filter diverges.
    pub prediction_error_trace: f64,
    pub a1_eigenvalues: Vec<(f64, f64)>,
    pub a4_eigenvalues: Vec<(f64, f64)>,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub stage1_h: StageOneSummary,
    pub stage1_v: StageOneSummary,
    pub stage2: Vec<StageTwoSummary>,
    /// Why stage 2 stopped early, if it did.
    pub stage2_error: Option<String>,
    /// Relative change of the stacked state grids per stage-2 iteration.
    pub iteration_change: Vec<f64>,
    pub candidates: Vec<Candidate>,
    pub selected: String,
    pub recurrence_residual: f64,
    pub spectral_radius: f64,
    pub stable: bool,
    pub re_psd: bool,
}

#[derive(Debug, Clone)]
pub struct IdentificationResult {
    pub n_h: usize,
    pub n_v: usize,
    pub params: Parameters,
    pub xh_grid: GridData,
    pub xv_grid: GridData,
    /// `x̂^h[0,s]` for `s = 0..=M`, one column each.
    pub initial_h: Mat,
    /// `x̂^v[r,0]` for `r = 0..=N`, one column each.
    pub initial_v: Mat,
    pub diagnostics: Diagnostics,
}

impl IdentificationResult {
    pub fn model(&self) -> &RoesserModel {
        &self.params.model
    }
}

fn candidate(source: String, p: &Parameters, y: &GridData) -> Candidate {
    Candidate {
        source,
        re_trace: p.r.trace(),
        prediction_error_trace: prediction_error(&p.model, y).map_or(f64::INFINITY, |c| c.trace()),
        a1_eigenvalues: eigen_pairs(&p.model.a1),
        a4_eigenvalues: eigen_pairs(&p.model.a4),
        spectral_radius: spectral_radius(&p.model.a()),
    }
}

fn grid_change(new: &GridData, old: &GridData) -> (f64, f64) {
    let d: f64 = new.as_slice().iter().zip(old.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
    let o: f64 = old.as_slice().iter().map(|a| a * a).sum();
    (d, o)
}

/// Runs both stages and the parameter regression.
///
/// Every grid pair produced along the way (stage 1, then each stage-2
/// iteration) yields a parameter candidate. The candidate whose model, run
/// as an innovations filter over the data, has the smallest prediction error
/// is returned; all are listed.
pub fn identify(y: &GridData, cfg: &IdentifyConfig) -> Result<IdentificationResult> {
    if !y.is_finite() {
        return Err(Error::Input("output grid contains non-finite values".into()));
    }
    let y = fit_grid(y, cfg.i, cfg.j, cfg.extent)?;
    let (i, j) = (cfg.i, cfg.j);
    let n_y = y.dim();
    let (iv, jv) = vertical_blocks(i, y.cols())?;
    let yt = y.transposed();

    let p_h = stage1_project(&y, i, j, Direction::Horizontal, cfg.order_h)?;
    let p_v = stage1_project(&yt, iv, jv, Direction::Horizontal, cfg.order_v)
        .map(|p| ProjectionResult { direction: Direction::Vertical, ..p })?;
    if p_h.n == 0 || p_v.n == 0 {
        return Err(Error::Input(format!(
            "selected orders (n_h={}, n_v={}) leave nothing to identify",
            p_h.n, p_v.n
        )));
    }
    let (n_h, n_v) = (p_h.n, p_v.n);
    let mut xh = state_grid(&y, &p_h.estimator(), i);
    let mut xv = state_grid(&yt, &p_v.estimator(), iv).transposed();

    let mut results = vec![("stage1".to_string(), recover_parameters(&y, &xh, &xv)?, xh.clone(), xv.clone())];
    let mut stage2_runs = Vec::new();
    let mut stage2_error = None;
    let mut iteration_change = Vec::new();
    for it in 0..cfg.iterations {
        let step = stage2(&y, &xv, i, j, n_h).and_then(|sh| {
            let sv = stage2(&yt, &xh.transposed(), iv, jv, n_v)?;
            Ok((sh, sv))
        });
        let (sh, sv) = match step {
            Ok(s) => s,
            Err(e) => {
                stage2_error = Some(format!("iteration {it}: {e}"));
                break;
            }
        };
        for (dir, s) in [(Direction::Horizontal, &sh), (Direction::Vertical, &sv)] {
            stage2_runs.push(StageTwoSummary {
                iteration: it,
                direction: dir,
                residuals: s.residuals.clone(),
                overlap_discrepancy: s.discrepancy,
                oblique_singular_values: s.oblique_singular_values.clone(),
            });
        }
        let new_h = sh.grid;
        let new_v = sv.grid.transposed();
        let (dh, oh) = grid_change(&new_h, &xh);
        let (dv, ov) = grid_change(&new_v, &xv);
        iteration_change.push(((dh + dv) / (oh + ov).max(f64::MIN_POSITIVE)).sqrt());
        xh = new_h;
        xv = new_v;
        match recover_parameters(&y, &xh, &xv) {
            Ok(p) => results.push((format!("stage2:{it}"), p, xh.clone(), xv.clone())),
            Err(e) => {
                stage2_error = Some(format!("iteration {it}: {e}"));
                break;
            }
        }
    }

    let candidates: Vec<Candidate> = results.iter().map(|(s, p, _, _)| candidate(s.clone(), p, &y)).collect();
    let best = (0..results.len())
        .min_by(|&a, &b| candidates[a].prediction_error_trace.total_cmp(&candidates[b].prediction_error_trace).then(a.cmp(&b)))
        .expect("at least the stage-1 candidate");
    let (selected, params, xh_grid, xv_grid) = results.swap_remove(best);
    let recurrence_residual = state_recurrence_residual(&params.model, &y, &xh_grid, &xv_grid);
    let rho = spectral_radius(&params.model.a());
    let re_psd = crate::linalg::min_sym_eigenvalue(&params.r) >= -1e-12;
    let initial_h = Mat::from_fn(n_h, xh_grid.cols() + 1, |c, s| xh_grid.get(0, s)[c]);
    let initial_v = Mat::from_fn(n_v, xv_grid.rows() + 1, |c, r| xv_grid.get(r, 0)[c]);
    let diagnostics = Diagnostics {
        stage1_h: StageOneSummary::new(&p_h, i, j, n_y, cfg.order_h.is_some()),
        stage1_v: StageOneSummary::new(&p_v, iv, jv, n_y, cfg.order_v.is_some()),
        stage2: stage2_runs,
        stage2_error,
        iteration_change,
        candidates,
        selected,
        recurrence_residual,
        spectral_radius: rho,
        stable: rho < 1.0,
        re_psd,
    };
    Ok(IdentificationResult { n_h, n_v, params, xh_grid, xv_grid, initial_h, initial_v, diagnostics })
}

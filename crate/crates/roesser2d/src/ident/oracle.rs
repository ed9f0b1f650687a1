//! Stage-by-stage checks with exact inputs taken from a simulation.
//!
//! Each step of the refinement is run on the true quantities it would
//! receive if every earlier step were exact, and its output is compared with
//! the true value. Where a step's identity only holds in the large-sample
//! limit, the input is replaced by a planted version for which it holds
//! exactly (the remainder term is moved into the row space it is assumed to
//! lie in).

use serde::Serialize;

use crate::bias::build_operators;
use crate::error::{Error, Result};
use crate::grid::GridData;
use crate::hankel::{build_bold, required_rows};
use crate::linalg::{hstack, row_space_project, vstack, Mat};
use crate::model::{RoesserModel, Simulation};

use super::params::regress_parameters;
use super::stage2::{
    assemble_states, horizontal_states, recover_future_vertical, recover_gamma_vh, recover_innovations_operator,
    recover_past_innovations, recover_past_vertical, regress_dynamics, stage2_rq, t1_operator,
};
use super::vertical_blocks;

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub direction: super::Direction,
    pub i: usize,
    pub j: usize,
    /// `(stage, relative error against the true value)`.
    pub residuals: Vec<(String, f64)>,
}

impl OracleReport {
    pub fn max(&self) -> f64 {
        self.residuals.iter().map(|r| r.1).fold(0.0, f64::max)
    }
}

fn rel(a: &Mat, truth: &Mat) -> f64 {
    let d = truth.norm();
    let diff = (a - truth).norm();
    if d == 0.0 {
        diff
    } else {
        diff / d
    }
}

fn grid_rel(a: &GridData, truth: &GridData) -> f64 {
    let d: f64 = a.as_slice().iter().zip(truth.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    let n: f64 = truth.as_slice().iter().map(|x| x * x).sum();
    if n == 0.0 {
        d.sqrt()
    } else {
        (d / n).sqrt()
    }
}

/// The simulation seen from the vertical direction.
pub fn transposed_simulation(sim: &Simulation) -> Simulation {
    Simulation { y: sim.y.transposed(), xh: sim.xv.transposed(), xv: sim.xh.transposed(), e: sim.e.transposed() }
}

/// Runs every refinement step for the direction along `r` with exact inputs.
pub fn oracle_pass(m: &RoesserModel, sim: &Simulation, i: usize, j: usize) -> Result<OracleReport> {
    let big_m = sim.y.cols();
    if sim.y.rows() != required_rows(i, j) {
        return Err(Error::Input(format!("oracle grid needs N=2i+j-2={}", required_rows(i, j))));
    }
    let ops = build_operators(m, i, big_m)?;
    let n_y = m.n_y;
    let bold = |g: &GridData, r0: usize, depth: usize| build_bold(g, r0, depth, j, big_m);
    let yp = bold(&sim.y, 0, i)?;
    let yf = bold(&sim.y, i, i)?;
    let xp_h = bold(&sim.xh, 0, 1)?;
    let xf_h = bold(&sim.xh, i, 1)?;
    let xp_vh = bold(&sim.xv, 0, i)?;
    let xf_vh = bold(&sim.xv, i, i)?;
    let ep = bold(&sim.e, 0, i)?;
    let ef_h = bold(&sim.e, i, i)?;
    let mut out = Vec::new();

    let blocks = stage2_rq(&xf_vh, &xp_vh, &yp, &yf, n_y, i)?;
    out.push(("rq_reconstruction".into(), blocks.reconstruction_error(&vstack(&[&xf_vh, &xp_vh, &yp, &yf]))));

    // future outputs whose part outside Γ^vh·X_f^vh lies in the past row space
    let wp = vstack(&[&xp_vh, &yp]);
    let yf_planted = &ops.gamma_vh * &xf_vh + row_space_project(&(&ops.gamma_h * &xf_h), &wp)?;
    let planted = stage2_rq(&xf_vh, &xp_vh, &yp, &yf_planted, n_y, i)?;
    out.push(("gamma_vh".into(), rel(&recover_gamma_vh(&planted)?, &ops.gamma_vh)));

    let ef = &ops.k_h * &ef_h;
    let (k_h, ef_h_rec) = recover_innovations_operator(&ef, n_y, i, j, big_m)?;
    out.push(("innovations_operator".into(), rel(&k_h, &ops.k_h)));
    out.push(("future_innovations".into(), rel(&ef_h_rec, &ef_h)));

    let xf_vh_rec =
        recover_future_vertical(&yf, &ops.gamma_h, &xf_h, &ops.k_h, &ef_h, &ops.gamma_vh, i, j, big_m)?;
    out.push(("future_vertical".into(), rel(&xf_vh_rec, &xf_vh)));

    // past outputs whose part outside Γ^vh·X_p^vh is orthogonal to the state rows
    let rest = &ops.gamma_h * &xp_h + &ops.k_h * &ep;
    let xv_rows = vstack(&[&xf_vh, &xp_vh]);
    let yp_planted = &ops.gamma_vh * &xp_vh + &rest - row_space_project(&rest, &xv_rows)?;
    let planted = stage2_rq(&xf_vh, &xp_vh, &yp_planted, &yf, n_y, i)?;
    out.push(("past_vertical".into(), rel(&recover_past_vertical(&planted, &yp_planted, &ops.gamma_vh, j, big_m)?, &xp_vh)));

    let ep_rec = recover_past_innovations(&yp, &ops.gamma_h, &ops.gamma_vh, &xp_vh, &ops.k_h, &ef_h, n_y, i, j, big_m)?;
    out.push(("past_innovations".into(), rel(&ep_rec, &ep)));
    let xp_h_rec = horizontal_states(&yp, &ops.gamma_h, &ops.gamma_vh, &xp_vh, &ops.k_h, &ep);
    out.push(("past_horizontal".into(), rel(&xp_h_rec, &xp_h)));
    let xf_h_rec = horizontal_states(&yf, &ops.gamma_h, &ops.gamma_vh, &xf_vh, &ops.k_h, &ef_h);
    out.push(("future_horizontal".into(), rel(&xf_h_rec, &xf_h)));

    let reg = regress_dynamics(&xf_h, &xp_h, &xp_vh, &ep)?;
    out.push(("dynamics_regression".into(), rel(&reg.j, &hstack(&[&ops.a1_i, &ops.phi_vh, &ops.l_h]))));

    let t1 = t1_operator(&ops.a1_i, &ops.phi_vh, &ops.l_h, &ops.gamma_h, &ops.gamma_vh, &ops.k_h);
    let xf_plus = &t1 * vstack(&[&xf_vh, &ef_h, &yf]);
    let (grid, disc) = assemble_states(&xp_h, &xf_plus, i, j, big_m)?;
    out.push(("state_assembly".into(), grid_rel(&grid, &sim.xh)));
    out.push(("overlap_discrepancy".into(), disc / xp_h.norm().max(f64::MIN_POSITIVE)));

    let p = regress_parameters(&sim.y, &sim.xh, &sim.xv, Some(&sim.e))?;
    let par = [rel(&p.model.a(), &m.a()), rel(&p.model.c(), &m.c()), rel(&p.model.k(), &m.k())];
    out.push(("parameters".into(), par.into_iter().fold(0.0, f64::max)));

    Ok(OracleReport { direction: super::Direction::Horizontal, i, j, residuals: out })
}

/// Oracle checks in both directions, the vertical one with the block sizes
/// [`identify`](super::identify) uses.
pub fn oracle_residuals(m: &RoesserModel, sim: &Simulation, i: usize, j: usize) -> Result<Vec<OracleReport>> {
    let h = oracle_pass(m, sim, i, j)?;
    let (iv, jv) = vertical_blocks(i, sim.y.cols())?;
    let mut v = oracle_pass(&m.transposed(), &transposed_simulation(sim), iv, jv)?;
    v.direction = super::Direction::Vertical;
    Ok(vec![h, v])
}

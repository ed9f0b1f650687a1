//! Validation, Lyapunov and Riccati solutions and autocovariances of a model.

use roesser2d::model::{
    autocovariance, construct_uncorrelated, innovation_covariances, solve_riccati, validate_model, RoesserModel,
    SecondOrder,
};

fn main() -> roesser2d::Result<()> {
    let base = RoesserModel::scalar(0.5, 0.3, 0.8, 0.4, 1.0, -1.2, 1.0, 0.0, 1.0);
    let m = construct_uncorrelated(&base)?;
    println!("K2 chosen for a block-diagonal state covariance: {:.6}", m.k2[(0, 0)]);

    let v = validate_model(&m);
    println!("spectral radius {:.4}, pass {}", v.spectral_radius, v.pass);

    let cov = solve_riccati(&m)?;
    println!("Lambda00 {:.6}", cov.lambda00[(0, 0)]);
    println!("residuals {:?}", cov.residuals);

    let ic = innovation_covariances(&m)?;
    println!("innovations-form P_hv {:.2e}", ic.p_hv.norm());
    let so = SecondOrder::innovations(&m, &ic);
    for (k, l) in [(0, 0), (1, 0), (0, 1), (2, 1)] {
        println!("Lambda[{k},{l}] = {:.6}", autocovariance(&m, &so, k, l)[(0, 0)]);
    }
    Ok(())
}

//! Closed-form state cross covariance against Monte Carlo estimates.

use roesser2d::bias::{bias_monte_carlo, decay_exponent};
use roesser2d::model::{construct_uncorrelated, RoesserModel};

fn main() -> roesser2d::Result<()> {
    let seeds: Vec<u64> = (1..=20).collect();
    let planted = RoesserModel::scalar(0.5, 0.0, 0.3, 0.4, 1.0, 1.0, 0.5, 0.4, 1.0);
    let zero = construct_uncorrelated(&RoesserModel::scalar(0.5, 0.2, 0.1, 0.4, 1.0, 1.0, 0.5, 0.4, 1.0))?;

    for (name, m) in [("uncorrelated", &zero), ("planted", &planted)] {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for jbar in [500usize, 2000, 8000] {
            let row = bias_monte_carlo(m, 2, 1, jbar / 2, &seeds)?;
            println!(
                "{name:<12} jbar={:<5} closed {:.6}  sample {:.6}  max z {:.2}",
                row.jbar, row.closed_form_norm, row.empirical_mean_norm, row.max_z
            );
            x.push(row.jbar as f64);
            y.push(row.deviation_norm);
        }
        println!("{name:<12} decay exponent {:.3}", decay_exponent(&x, &y));
    }
    Ok(())
}

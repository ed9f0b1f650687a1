//! Simulates a scalar coupled model and writes the output grid as text.
//!
//! cargo run --example simulate -- [seed] [out-file]

use roesser2d::hankel::required_rows;
use roesser2d::model::{recurrence_residual, simulate, InitialCondition, RoesserModel};

fn main() -> roesser2d::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let out = args.next().unwrap_or_else(|| "y.r2d".into());

    let m = RoesserModel::from_json(include_str!("models/scalar_coupled.json"))?;
    let (i, j, big_m) = (4, 100, 20);
    let sim = simulate(&m, required_rows(i, j), big_m, seed, InitialCondition::Zero)?;
    println!("grid N={} M={} n_y={}", sim.y.rows(), sim.y.cols(), sim.y.dim());
    println!("recurrence residual {:.2e}", recurrence_residual(&m, &sim));

    let stat = simulate(&m, 300, 300, seed, InitialCondition::Stationary)?;
    let power: f64 = stat.y.as_slice().iter().map(|v| v * v).sum::<f64>() / (301.0 * 301.0);
    println!("sample output power (stationary boundary) {power:.4}");

    sim.y.write_text(std::fs::File::create(&out)?)?;
    println!("wrote {out}");
    Ok(())
}

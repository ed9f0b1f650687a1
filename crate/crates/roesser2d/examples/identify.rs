//! End-to-end identification over a few seeds.
//!
//! cargo run --release --example identify -- [seeds]

use roesser2d::hankel::required_rows;
use roesser2d::ident::{identify, IdentifyConfig};
use roesser2d::model::{simulate, solve_riccati, InitialCondition, RoesserModel};

fn main() -> roesser2d::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let m = RoesserModel::from_json(include_str!("models/scalar_coupled.json"))?;
    let lambda = solve_riccati(&m)?.lambda00[(0, 0)];
    let (i, j, big_m) = (6, 2000, 20);
    // the orders are known here; automatic selection can also stop at a later gap
    let cfg = IdentifyConfig { order_h: Some(1), order_v: Some(1), ..IdentifyConfig::new(i, j) };
    println!("seed  n_h n_v  A1      A4      Lambda00/true  selected");
    for seed in 1..=seeds {
        let sim = simulate(&m, required_rows(i, j), big_m, seed, InitialCondition::Zero)?;
        let r = identify(&sim.y, &cfg)?;
        let est = r.model();
        println!(
            "{seed:<5} {:<3} {:<3}  {:.4}  {:.4}  {:.4}         {}",
            r.n_h,
            r.n_v,
            est.a1[(0, 0)],
            est.a4[(0, 0)],
            r.params.lambda00[(0, 0)] / lambda,
            r.diagnostics.selected
        );
    }
    Ok(())
}

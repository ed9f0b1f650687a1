//! Every identification stage run on exact inputs from a simulation.

use roesser2d::hankel::required_rows;
use roesser2d::ident::oracle::oracle_residuals;
use roesser2d::model::{simulate, InitialCondition, RoesserModel};

fn main() -> roesser2d::Result<()> {
    let m = RoesserModel::from_json(include_str!("models/scalar_coupled.json"))?;
    let (i, j, big_m) = (6, 400, 20);
    let sim = simulate(&m, required_rows(i, j), big_m, 1, InitialCondition::Zero)?;
    for rep in oracle_residuals(&m, &sim, i, j)? {
        println!("{:?} pass (i={}, j={})", rep.direction, rep.i, rep.j);
        for (stage, r) in &rep.residuals {
            println!("  {stage:<22} {r:.2e}");
        }
    }
    Ok(())
}

//! Horizontal orthogonal projection, singular values and the selected order.

use roesser2d::hankel::required_rows;
use roesser2d::ident::{stage1_project, Direction};
use roesser2d::model::{simulate, InitialCondition, RoesserModel};

fn main() -> roesser2d::Result<()> {
    let m = RoesserModel::from_json(include_str!("models/scalar_coupled.json"))?;
    let (i, j, big_m) = (6, 2000, 20);
    let sim = simulate(&m, required_rows(i, j), big_m, 3, InitialCondition::Zero)?;
    let p = stage1_project(&sim.y, i, j, Direction::Horizontal, None)?;
    let sv: Vec<String> = p.singular_values.iter().take(6).map(|s| format!("{s:.4}")).collect();
    println!("singular values {}", sv.join(" "));
    println!("selected order {}", p.n);
    println!("shift eigenvalues {:?}", p.shift_eigenvalues(sim.y.dim()));
    Ok(())
}

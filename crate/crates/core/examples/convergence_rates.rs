//! Convergence orders: the manufactured optimal-control solution in the
//! natural combined norm, and the second-order orthogonal projector in
//! three norms.

use cdropt::minres::SolverConfig;
use cdropt::studies::{
    proj_rows_to_csv, rate_rows_to_csv, run_projection_rates, run_rate_study,
};

fn main() -> cdropt::Result<()> {
    let cfg = SolverConfig::default();
    let rows = run_rate_study(3, &[3, 4, 5], 1.0, 1.0, &cfg)?;
    println!("manufactured solution, combined norm:");
    print!("{}", rate_rows_to_csv(&rows));
    let rows = run_projection_rates(3, &[3, 4, 5])?;
    println!("projector rates:");
    print!("{}", proj_rows_to_csv(&rows));
    Ok(())
}

//! Reproduces an iteration-count table for the exactly realized block
//! preconditioner: MINRES iterations over the (eps, alpha) grid.

use cdropt::minres::SolverConfig;
use cdropt::problems::ModelProblem;
use cdropt::studies::{run_table, PrecondKind, SweepFamily};

fn main() -> cdropt::Result<()> {
    let mp = ModelProblem::mp1();
    // level 5 keeps the runtime short; the benchmark grid uses level 6
    let family = SweepFamily::default_eps_alpha(2, 5);
    let cfg = SolverConfig::default();
    let table = run_table(&mp, &family, &PrecondKind::Exact, &cfg)?;
    print!("{}", table.to_csv());
    Ok(())
}

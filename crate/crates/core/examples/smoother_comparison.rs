//! Contrasts the two multigrid smoothers inside the inexact
//! preconditioner: pointwise Gauss-Seidel degrades with the spline degree,
//! the overlapping macro-patch variant stays robust.

use cdropt::minres::SolverConfig;
use cdropt::problems::ModelProblem;
use cdropt::studies::{run_table, PrecondKind, SmootherSpec, SweepFamily};

fn main() -> cdropt::Result<()> {
    let mp = ModelProblem::mp3();
    let cfg = SolverConfig {
        max_iters: 1000,
        ..SolverConfig::default()
    };
    let family = SweepFamily::LevelDegree {
        eps: 1e-3,
        alpha: 1e-3,
        levels: vec![4, 5],
        degrees: vec![2, 3, 5],
    };
    for (label, smoother) in [
        ("gauss-seidel nu=2", SmootherSpec::gauss_seidel()),
        ("macro patches", SmootherSpec::macro_default()),
    ] {
        let kind = PrecondKind::Multigrid { smoother };
        let table = run_table(&mp, &family, &kind, &cfg)?;
        println!("{label}:\n{}", table.to_csv());
    }
    Ok(())
}

//! Estimates the condition number of the preconditioned saddle-point
//! operator and compares it with the parameter-robust theoretical bound
//! cos(pi/7) / sin(pi/14).

use cdropt::problems::{discretize, ModelProblem};
use cdropt::system::{estimate_condition, SchurPreconditioner};

fn main() -> cdropt::Result<()> {
    let mp = ModelProblem::mp1();
    let bound = (std::f64::consts::PI / 7.0).cos() / (std::f64::consts::PI / 14.0).sin();
    println!("theoretical bound {bound:.4}");
    for eps in [1.0, 1e-3, 1e-6] {
        for alpha in [1.0, 1e-3, 1e-6] {
            let d = discretize(&mp, 2, 4, eps, alpha)?;
            let pre = SchurPreconditioner::exact(&d.sys, alpha)?;
            let op = d.sys.operator(alpha);
            let est = estimate_condition(&op, &pre, 60, 42)?;
            println!(
                "eps {eps:>5e}  alpha {alpha:>5e}  kappa {:.4}",
                est.condition()
            );
        }
    }
    Ok(())
}

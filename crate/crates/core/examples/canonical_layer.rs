//! 1D convection-dominated comparison: the plain Galerkin forward solve
//! oscillates at the boundary layer, while the optimally controlled state
//! tracking the exact solution stays essentially monotone.

use cdropt::assembly::ObservationRegion;
use cdropt::minres::SolverConfig;
use cdropt::studies::run_canonical_1d;

fn main() -> cdropt::Result<()> {
    let cfg = SolverConfig::default();
    let r = run_canonical_1d(2, 4, 0.01, 0.001, ObservationRegion::Full, 512, &cfg)?;
    println!("MINRES iterations   {}", r.iterations);
    println!("forward overshoot   {:.4}", r.forward_overshoot);
    println!("state overshoot     {:.6}", r.state_overshoot);
    println!("control L2 norm     {:.4e}", r.q_l2);
    println!("adjoint L2 norm     {:.4e}", r.w_l2);
    // last few samples show the layer at x = 1
    for i in (r.xs.len() - 6)..r.xs.len() {
        println!(
            "x {:.4}  exact {:+.4}  forward {:+.4}  state {:+.4}",
            r.xs[i], r.exact[i], r.forward[i], r.state[i]
        );
    }
    Ok(())
}

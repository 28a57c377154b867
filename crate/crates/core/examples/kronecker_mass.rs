//! Spectral quality of the Kronecker (tensor-rank-1 geometry) mass solver
//! used in the inexact preconditioner. On geometries with a separable
//! Jacobian determinant (identity, quarter annulus) the surrogate is
//! exact; on a genuinely warped patch it is only spectrally equivalent.

use cdropt::assembly::assemble_mass;
use cdropt::geometry::GeometryMap;
use cdropt::multigrid::KroneckerMassSolver;
use cdropt::problems::space_pair;
use cdropt::sparse::dot;
use cdropt::system::BlockSolve;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn warped() -> GeometryMap {
    // non-separable Jacobian determinant
    let a = 0.3;
    GeometryMap::Analytic {
        d: 2,
        map: Arc::new(move |x| [x[0] + a * x[0] * x[1] * x[1], x[1] + a * x[1] * x[0] * x[0]]),
        grad: Arc::new(move |x| {
            [
                [1.0 + a * x[1] * x[1], 2.0 * a * x[0] * x[1]],
                [2.0 * a * x[0] * x[1], 1.0 + a * x[0] * x[0]],
            ]
        }),
        hess: Arc::new(move |x| {
            [
                [[0.0, 2.0 * a * x[1]], [2.0 * a * x[1], 2.0 * a * x[0]]],
                [[2.0 * a * x[1], 2.0 * a * x[0]], [2.0 * a * x[0], 0.0]],
            ]
        }),
    }
}

fn quotient_range(map: &GeometryMap) -> cdropt::Result<(f64, f64)> {
    let (_, q_space) = space_pair(2, 5, 2)?;
    let m = assemble_mass(&q_space, map, 4)?;
    let solver = KroneckerMassSolver::new(&q_space, map, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for _ in 0..50 {
        let x: Vec<f64> = (0..m.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mx = m.matvec_vec(&x);
        // quotient (x, M x) / (x, M~ x) probed through the inverse action
        let y = solver.solve(&mx);
        let q = dot(&y, &mx) / dot(&x, &mx);
        lo = lo.min(q);
        hi = hi.max(q);
    }
    Ok((lo, hi))
}

fn main() -> cdropt::Result<()> {
    let (lo, hi) = quotient_range(&GeometryMap::quarter_annulus())?;
    println!("quarter annulus (separable J): quotients in [{lo:.4}, {hi:.4}]");
    let (lo, hi) = quotient_range(&warped())?;
    println!("warped patch (non-separable J): quotients in [{lo:.4}, {hi:.4}]");
    Ok(())
}

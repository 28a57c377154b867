//! Geometry mappings from the parameter box onto the physical domain, with
//! closed-form first and second derivatives and the chain rule that turns
//! parametric basis derivatives into physical gradients and Hessians.

use crate::error::{Error, Result};
use std::sync::Arc;

pub type Point = [f64; 2];
pub type Matrix2 = [[f64; 2]; 2];

type MapFn = dyn Fn(Point) -> Point + Send + Sync;
type GradFn = dyn Fn(Point) -> Matrix2 + Send + Sync;
type HessFn = dyn Fn(Point) -> [Matrix2; 2] + Send + Sync;

/// Parameter-to-physical map `G` on `(0,1)^d` (`d` = 1 or 2). Unused
/// coordinates are zero for `d = 1`.
#[derive(Clone)]
pub enum GeometryMap {
    Identity {
        d: usize,
    },
    QuarterAnnulus,
    /// User-supplied analytic map; `grad[i][j] = dG_i/dx_j`, `hess[m]` is the
    /// Hessian of component `m`.
    Analytic {
        d: usize,
        map: Arc<MapFn>,
        grad: Arc<GradFn>,
        hess: Arc<HessFn>,
    },
}

impl std::fmt::Debug for GeometryMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GeometryMap::Identity { d } => write!(f, "Identity(d={d})"),
            GeometryMap::QuarterAnnulus => write!(f, "QuarterAnnulus"),
            GeometryMap::Analytic { d, .. } => write!(f, "Analytic(d={d})"),
        }
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

impl GeometryMap {
    pub fn identity(d: usize) -> Self {
        assert!(d == 1 || d == 2);
        GeometryMap::Identity { d }
    }

    /// The polynomial quarter-annulus parameterization with inner radius 1
    /// and outer radius 2.
    pub fn quarter_annulus() -> Self {
        GeometryMap::QuarterAnnulus
    }

    /// Uniform scaling `G(x) = c x` (handy in tests).
    pub fn scaling(d: usize, c: f64) -> Self {
        GeometryMap::Analytic {
            d,
            map: Arc::new(move |x| [c * x[0], c * x[1]]),
            grad: Arc::new(move |_| [[c, 0.0], [0.0, if d == 2 { c } else { 1.0 }]]),
            hess: Arc::new(|_| [[[0.0; 2]; 2]; 2]),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            GeometryMap::Identity { d } => *d,
            GeometryMap::QuarterAnnulus => 2,
            GeometryMap::Analytic { d, .. } => *d,
        }
    }

    pub fn eval(&self, xhat: Point) -> Point {
        match self {
            GeometryMap::Identity { .. } => xhat,
            GeometryMap::QuarterAnnulus => {
                let s = SQRT2 - 1.0;
                let (x1, x2) = (xhat[0], xhat[1]);
                let a = (1.0 - x2) * (1.0 + 2.0 * s * x2);
                let b = x2 * (2.0 * SQRT2 - 1.0 - 2.0 * s * x2);
                [(1.0 + x1) * a, (1.0 + x1) * b]
            }
            GeometryMap::Analytic { map, .. } => map(xhat),
        }
    }

    /// `grad[i][j] = dG_i / dx_j`.
    pub fn grad(&self, xhat: Point) -> Matrix2 {
        match self {
            GeometryMap::Identity { .. } => [[1.0, 0.0], [0.0, 1.0]],
            GeometryMap::QuarterAnnulus => {
                let s = SQRT2 - 1.0;
                let (x1, x2) = (xhat[0], xhat[1]);
                let a = (1.0 - x2) * (1.0 + 2.0 * s * x2);
                let da = (2.0 * s - 1.0) - 4.0 * s * x2;
                let b = x2 * (2.0 * SQRT2 - 1.0 - 2.0 * s * x2);
                let db = (2.0 * SQRT2 - 1.0) - 4.0 * s * x2;
                [[a, (1.0 + x1) * da], [b, (1.0 + x1) * db]]
            }
            GeometryMap::Analytic { grad, .. } => grad(xhat),
        }
    }

    /// `hess[m][i][j] = d^2 G_m / (dx_i dx_j)`.
    pub fn hess(&self, xhat: Point) -> [Matrix2; 2] {
        match self {
            GeometryMap::Identity { .. } => [[[0.0; 2]; 2]; 2],
            GeometryMap::QuarterAnnulus => {
                let s = SQRT2 - 1.0;
                let (x1, x2) = (xhat[0], xhat[1]);
                let da = (2.0 * s - 1.0) - 4.0 * s * x2;
                let db = (2.0 * SQRT2 - 1.0) - 4.0 * s * x2;
                let dda = -4.0 * s;
                [
                    [[0.0, da], [da, (1.0 + x1) * dda]],
                    [[0.0, db], [db, (1.0 + x1) * dda]],
                ]
            }
            GeometryMap::Analytic { hess, .. } => hess(xhat),
        }
    }

    /// `J = |det grad G|`.
    pub fn jacobian_det(&self, xhat: Point) -> f64 {
        let g = self.grad(xhat);
        match self.d() {
            1 => g[0][0].abs(),
            _ => (g[0][0] * g[1][1] - g[0][1] * g[1][0]).abs(),
        }
    }

    /// Inverse of the geometry gradient; errors on singular maps.
    pub fn grad_inverse(&self, xhat: Point) -> Result<Matrix2> {
        let g = self.grad(xhat);
        match self.d() {
            1 => {
                if g[0][0].abs() < 1e-300 {
                    return Err(Error::SingularGeometry {
                        point: vec![xhat[0]],
                        det: g[0][0],
                    });
                }
                Ok([[1.0 / g[0][0], 0.0], [0.0, 1.0]])
            }
            _ => {
                let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
                if det.abs() < 1e-300 {
                    return Err(Error::SingularGeometry {
                        point: xhat.to_vec(),
                        det,
                    });
                }
                Ok([
                    [g[1][1] / det, -g[0][1] / det],
                    [-g[1][0] / det, g[0][0] / det],
                ])
            }
        }
    }

    /// Chain rule: maps value, parametric gradient and parametric Hessian of
    /// a function at `xhat` to physical value, gradient and Hessian.
    ///
    /// `grad u = (grad G)^-T ghat`,
    /// `hess u = (grad G)^-T (Hhat - sum_m hess(G_m) (grad u)_m) (grad G)^-1`.
    pub fn physical_derivatives(
        &self,
        xhat: Point,
        value: f64,
        ghat: Point,
        hhat: Matrix2,
    ) -> Result<PhysicalDerivatives> {
        let d = self.d();
        let jinv = self.grad_inverse(xhat)?;
        // grad = jinv^T ghat
        let mut grad = [0.0; 2];
        for i in 0..d {
            for j in 0..d {
                grad[i] += jinv[j][i] * ghat[j];
            }
        }
        let gh = self.hess(xhat);
        // corrected parametric Hessian
        let mut c = [[0.0; 2]; 2];
        for i in 0..d {
            for j in 0..d {
                let mut v = hhat[i][j];
                for m in 0..d {
                    v -= gh[m][i][j] * grad[m];
                }
                c[i][j] = v;
            }
        }
        // hess = jinv^T c jinv
        let mut hess = [[0.0; 2]; 2];
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        v += jinv[a][i] * c[a][b] * jinv[b][j];
                    }
                }
                hess[i][j] = v;
            }
        }
        let laplacian = (0..d).map(|i| hess[i][i]).sum();
        Ok(PhysicalDerivatives {
            value,
            grad,
            hess,
            laplacian,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PhysicalDerivatives {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
    pub laplacian: f64,
}

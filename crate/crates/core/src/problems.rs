//! The benchmark problems: four 2D model problems (box / quarter annulus,
//! full / limited observation) and the canonical 1D convection-diffusion
//! problem with a boundary layer.

use crate::assembly::{self, Convection, ObservationRegion, PdeCoefficients};
use crate::error::{Error, Result};
use crate::geometry::{GeometryMap, Point};
use crate::minres::{self, SolveReport, SolverConfig};
use crate::sparse::{CsrMatrix, SparseLu};
use crate::spline::SplineSpace1D;
use crate::system::{self, SchurPreconditioner, SystemMatrices};
use crate::tensor::TensorSpace;
use std::sync::Arc;

pub type ScalarField = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// A continuous optimal control benchmark: geometry, operator coefficients
/// (except the diffusion, which varies per experiment), observation region
/// and data.
#[derive(Clone)]
pub struct ModelProblem {
    pub name: &'static str,
    pub map: GeometryMap,
    pub beta: Convection,
    pub sigma: f64,
    pub region: ObservationRegion,
    /// Desired state, as a function of the physical point.
    pub ud: ScalarField,
    /// Source term of the state equation.
    pub f: ScalarField,
}

fn circle_indicator(center: Point, radius: f64) -> ScalarField {
    Arc::new(move |x: Point| {
        let dx = x[0] - center[0];
        let dy = x[1] - center[1];
        if dx * dx + dy * dy <= radius * radius {
            1.0
        } else {
            0.0
        }
    })
}

impl ModelProblem {
    /// Unit square, full observation.
    pub fn mp1() -> Self {
        Self {
            name: "mp1",
            map: GeometryMap::identity(2),
            beta: Convection::Constant([-2.0, 1.0]),
            sigma: 0.0,
            region: ObservationRegion::Full,
            ud: circle_indicator([0.375, 0.625], 0.25),
            f: Arc::new(|_| 0.0),
        }
    }

    /// Unit square, observation on the centered box (1/4, 3/4)^2.
    pub fn mp2() -> Self {
        Self {
            name: "mp2",
            region: ObservationRegion::param_box([0.25, 0.25], [0.75, 0.75]),
            ..Self::mp1()
        }
    }

    /// Quarter annulus, full observation; the convection field varies in
    /// space and the desired state is a circle around the image of the
    /// parameter point (3/8, 5/8).
    pub fn mp3() -> Self {
        let map = GeometryMap::quarter_annulus();
        let center = map.eval([0.375, 0.625]);
        Self {
            name: "mp3",
            map,
            beta: Convection::Field(Arc::new(|x: Point| [x[1], 1.0 + x[0] * x[0]])),
            sigma: 0.0,
            region: ObservationRegion::Full,
            ud: circle_indicator(center, 0.25),
            f: Arc::new(|_| 0.0),
        }
    }

    /// Quarter annulus, observation on the image of (1/4, 3/4)^2.
    pub fn mp4() -> Self {
        Self {
            name: "mp4",
            region: ObservationRegion::param_box([0.25, 0.25], [0.75, 0.75]),
            ..Self::mp3()
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "mp1" => Some(Self::mp1()),
            "mp2" => Some(Self::mp2()),
            "mp3" => Some(Self::mp3()),
            "mp4" => Some(Self::mp4()),
            _ => None,
        }
    }

    pub fn coefficients(&self, eps: f64) -> PdeCoefficients {
        PdeCoefficients::new(eps, self.beta.clone(), self.sigma)
    }
}

/// The Galerkin space pair at one level: state/control space
/// `S_{p, p-1, l} cap H^1_0` and test space `S_{p, p-3, l}`.
pub fn space_pair(p: usize, level: usize, d: usize) -> Result<(TensorSpace, TensorSpace)> {
    if p < 2 {
        return Err(Error::InvalidConfig(format!(
            "degree {p} too small: the test space needs continuity p - 3 >= -1"
        )));
    }
    let u = |_: usize| SplineSpace1D::new(p, p as i64 - 1, level);
    let q = |_: usize| SplineSpace1D::new(p, p as i64 - 3, level);
    let u_space = TensorSpace::h10((0..d).map(u).collect::<Result<_>>()?);
    let q_space = TensorSpace::unmasked((0..d).map(q).collect::<Result<_>>()?);
    Ok((u_space, q_space))
}

/// Fully assembled discrete optimality system for one model problem and
/// one parameter choice.
pub struct Discretization {
    pub u_space: TensorSpace,
    pub q_space: TensorSpace,
    pub sys: SystemMatrices,
    pub rhs: Vec<f64>,
    pub alpha: f64,
}

/// Subdivision depth used to integrate the discontinuous desired state.
pub const UD_SUBDIV: usize = 4;

pub fn discretize(
    mp: &ModelProblem,
    p: usize,
    level: usize,
    eps: f64,
    alpha: f64,
) -> Result<Discretization> {
    let (u_space, q_space) = space_pair(p, level, 2)?;
    let coeffs = mp.coefficients(eps);
    let nq = p + 2;
    let sys = system::assemble_system(&u_space, &q_space, &coeffs, &mp.region, &mp.map, nq)?;
    let f_load = assembly::assemble_load(&q_space, &*mp.f, &mp.map, None, nq, 1)?;
    let ud_load = assembly::assemble_load(
        &u_space,
        &*mp.ud,
        &mp.map,
        Some(&mp.region),
        nq,
        UD_SUBDIV,
    )?;
    let rhs = system::assemble_rhs(f_load, ud_load, sys.n_q());
    Ok(Discretization {
        u_space,
        q_space,
        sys,
        rhs,
        alpha,
    })
}

impl Discretization {
    /// Splits a solution vector into `(q, w, u)` components.
    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let nq = self.sys.n_q();
        let (q, rest) = x.split_at(nq);
        let (w, u) = rest.split_at(nq);
        (q, w, u)
    }

    /// Solves with MINRES and the exact Schur preconditioner.
    pub fn solve_exact(&self, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveReport)> {
        let pre = SchurPreconditioner::exact(&self.sys, self.alpha)?;
        let op = self.sys.operator(self.alpha);
        minres::minres(&op, &pre, &self.rhs, cfg)
    }

    /// Solves with MINRES and a given (possibly inexact) preconditioner.
    pub fn solve_with(
        &self,
        pre: &SchurPreconditioner,
        cfg: &SolverConfig,
    ) -> Result<(Vec<f64>, SolveReport)> {
        let op = self.sys.operator(self.alpha);
        minres::minres(&op, pre, &self.rhs, cfg)
    }
}

/// The canonical 1D problem `-eps u'' - u' = 0`, `u(0) = 0`, `u(1) = 1`,
/// with exact solution `(1 - exp(-x/eps)) / (1 - exp(-1/eps))`.
///
/// The inhomogeneous boundary value is lifted by the last basis function
/// `g`; the optimality system is solved for the homogeneous part.
pub struct Canonical1D {
    pub eps: f64,
    pub alpha: f64,
    pub p: usize,
    pub level: usize,
    u_space: TensorSpace, // masked
    sys: SystemMatrices,
    rhs: Vec<f64>,
    weak_full: CsrMatrix,
}

impl Canonical1D {
    pub fn new(p: usize, level: usize, eps: f64, alpha: f64) -> Result<Self> {
        Self::with_region(p, level, eps, alpha, ObservationRegion::Full)
    }

    /// Observation on a parameter interval, e.g. `(0, 1/4)` or `(3/4, 1)`.
    pub fn with_region(
        p: usize,
        level: usize,
        eps: f64,
        alpha: f64,
        region: ObservationRegion,
    ) -> Result<Self> {
        let (u_space, q_space) = space_pair(p, level, 1)?;
        let u_full = u_space.without_mask();
        let map = GeometryMap::identity(1);
        let coeffs = PdeCoefficients::constant(eps, [-1.0, 0.0], 0.0);
        let nq = p + 2;
        let sys = system::assemble_system(&u_space, &q_space, &coeffs, &region, &map, nq)?;
        // lifting corrections: K g and M_O g with g the last basis function
        let k_full = assembly::assemble_state(&u_full, &q_space, &coeffs, &map, nq)?;
        let m_full = assembly::assemble_obs_mass(&u_full, &region, &map, nq)?;
        let n_full = u_full.dim();
        let mut g = vec![0.0; n_full];
        g[n_full - 1] = 1.0;
        let kg = k_full.matvec_vec(&g);
        let mg = m_full.matvec_vec(&g);
        let mg_masked: Vec<f64> = (1..n_full - 1).map(|i| mg[i]).collect();

        // desired state: the exact solution, integrated with a subdivided
        // rule to resolve the boundary layer
        let exact = Self::exact_fn(eps);
        let layer_subdiv = 8;
        let mut ud_load = assembly::assemble_load(
            &u_space,
            &move |x: Point| exact(x[0]),
            &map,
            Some(&region),
            nq,
            layer_subdiv,
        )?;
        for (l, m) in ud_load.iter_mut().zip(&mg_masked) {
            *l -= m;
        }
        let f_load: Vec<f64> = kg.iter().map(|v| -v).collect();
        let rhs = system::assemble_rhs(f_load, ud_load, sys.n_q());

        let weak_full = assembly::assemble_weak_cdr(&u_full, &coeffs, &map, nq)?;
        Ok(Self {
            eps,
            alpha,
            p,
            level,
            u_space,
            sys,
            rhs,
            weak_full,
        })
    }

    fn exact_fn(eps: f64) -> impl Fn(f64) -> f64 + Send + Sync + Copy {
        move |x: f64| (1.0 - (-x / eps).exp()) / (1.0 - (-1.0 / eps).exp())
    }

    pub fn exact(&self, x: f64) -> f64 {
        Self::exact_fn(self.eps)(x)
    }

    fn full_dim(&self) -> usize {
        self.u_space.full_dim()
    }

    /// Evaluates homogeneous coefficients plus the boundary lifting.
    pub fn eval_lifted(&self, masked_coefs: &[f64], x: f64) -> f64 {
        let n = self.full_dim();
        let mut full = vec![0.0; n];
        full[1..n - 1].copy_from_slice(masked_coefs);
        full[n - 1] = 1.0;
        self.u_space.factor(0).eval_coefs(&full, x, 0).expect("x in [0,1]")[0]
    }

    /// Standard Galerkin solution of the forward problem (oscillatory in
    /// the convection-dominated regime).
    pub fn solve_forward(&self) -> Result<Vec<f64>> {
        let n = self.full_dim();
        let idx: Vec<usize> = (1..n - 1).collect();
        let a = self.weak_full.restrict(&idx, &idx);
        let mut g = vec![0.0; n];
        g[n - 1] = 1.0;
        let ag = self.weak_full.matvec_vec(&g);
        let rhs: Vec<f64> = idx.iter().map(|&i| -ag[i]).collect();
        let lu = SparseLu::new(&a)?;
        Ok(lu.solve(&rhs))
    }

    /// Solves the optimality system; returns `(q, w, u_masked)` stacked
    /// plus the solver report.
    pub fn solve_optimal(&self, cfg: &SolverConfig) -> Result<(Vec<f64>, SolveReport)> {
        let pre = SchurPreconditioner::exact(&self.sys, self.alpha)?;
        let op = self.sys.operator(self.alpha);
        minres::minres(&op, &pre, &self.rhs, cfg)
    }

    pub fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let nq = self.sys.n_q();
        let (q, rest) = x.split_at(nq);
        let (w, u) = rest.split_at(nq);
        (q, w, u)
    }

    pub fn n_q(&self) -> usize {
        self.sys.n_q()
    }

    /// L2 norm of a function given by its coefficients in the test space.
    pub fn l2_norm_q(&self, v: &[f64]) -> f64 {
        crate::sparse::dot(v, &self.sys.m_q.matvec_vec(v)).sqrt()
    }

    /// Largest excursion of sampled values outside the exact range [0, 1].
    pub fn overshoot(values: &[f64]) -> f64 {
        values
            .iter()
            .map(|&v| (v - 1.0).max(-v).max(0.0))
            .fold(0.0, f64::max)
    }
}

//! Element-loop Galerkin assembly over mapped tensor-product spline spaces.
//!
//! All bilinear forms are pulled back to the parameter domain and integrated
//! with Gauss rules per knot span. Matrices are accumulated as coordinate
//! triplets in a fixed element order and then compressed, so repeated runs
//! are bit-identical.

use crate::error::{Error, Result};
use crate::geometry::{GeometryMap, PhysicalDerivatives, Point};
use crate::sparse::CsrMatrix;
use crate::tensor::TensorSpace;
use std::sync::Arc;

/// Convection field, constant or given in physical coordinates.
#[derive(Clone)]
pub enum Convection {
    Constant([f64; 2]),
    Field(Arc<dyn Fn(Point) -> Point + Send + Sync>),
}

impl Convection {
    pub fn at(&self, phys: Point) -> Point {
        match self {
            Convection::Constant(b) => *b,
            Convection::Field(f) => f(phys),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Convection::Constant(_))
    }
}

impl std::fmt::Debug for Convection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Convection::Constant(b) => write!(f, "Constant({b:?})"),
            Convection::Field(_) => write!(f, "Field"),
        }
    }
}

/// Coefficients of the operator `L u = -eps lap(u) + beta . grad(u) + sigma u`.
#[derive(Debug, Clone)]
pub struct PdeCoefficients {
    pub eps: f64,
    pub beta: Convection,
    pub sigma: f64,
}

impl PdeCoefficients {
    pub fn new(eps: f64, beta: Convection, sigma: f64) -> Self {
        assert!(eps > 0.0, "diffusion must be positive");
        assert!(sigma >= 0.0, "reaction must be nonnegative");
        Self { eps, beta, sigma }
    }

    pub fn constant(eps: f64, beta: [f64; 2], sigma: f64) -> Self {
        Self::new(eps, Convection::Constant(beta), sigma)
    }

    /// Applies `L` to physical derivatives of a function at a point.
    pub fn apply(&self, phys: Point, u: &PhysicalDerivatives) -> f64 {
        let b = self.beta.at(phys);
        -self.eps * u.laplacian + b[0] * u.grad[0] + b[1] * u.grad[1] + self.sigma * u.value
    }
}

/// Axis-aligned observation box in parameter coordinates, or the whole
/// domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservationRegion {
    Full,
    Box { lo: [f64; 2], hi: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ElementClass {
    Inside,
    Outside,
    Cut,
}

const ALIGN_TOL: f64 = 1e-12;

impl ObservationRegion {
    pub fn param_box(lo: [f64; 2], hi: [f64; 2]) -> Self {
        ObservationRegion::Box { lo, hi }
    }

    pub fn contains(&self, d: usize, xhat: Point) -> bool {
        match self {
            ObservationRegion::Full => true,
            ObservationRegion::Box { lo, hi } => {
                (0..d).all(|m| xhat[m] >= lo[m] && xhat[m] <= hi[m])
            }
        }
    }

    fn classify(&self, d: usize, bounds: &[(f64, f64)]) -> ElementClass {
        match self {
            ObservationRegion::Full => ElementClass::Inside,
            ObservationRegion::Box { lo, hi } => {
                let mut inside = true;
                for m in 0..d {
                    let (a, b) = bounds[m];
                    if b <= lo[m] + ALIGN_TOL || a >= hi[m] - ALIGN_TOL {
                        return ElementClass::Outside;
                    }
                    if a < lo[m] - ALIGN_TOL || b > hi[m] + ALIGN_TOL {
                        inside = false;
                    }
                }
                if inside {
                    ElementClass::Inside
                } else {
                    ElementClass::Cut
                }
            }
        }
    }

    /// True when every box edge lies on a knot line of the space (then every
    /// element is entirely inside or outside).
    pub fn is_knot_aligned(&self, space: &TensorSpace) -> bool {
        match self {
            ObservationRegion::Full => true,
            ObservationRegion::Box { lo, hi } => (0..space.d()).all(|m| {
                let nel = space.factor(m).num_elements() as f64;
                let on_knot = |x: f64| (x * nel - (x * nel).round()).abs() < ALIGN_TOL;
                on_knot(lo[m]) && on_knot(hi[m])
            }),
        }
    }
}

/// Default Gauss points per element and direction: `p + 1`, exact for
/// mass-type integrands of degree `2p` on affine geometry.
pub fn default_quad_points(space: &TensorSpace) -> usize {
    space.factors().iter().map(|f| f.degree()).max().unwrap() + 1
}

// Per-direction basis tables at the element Gauss nodes.
struct DirTables {
    p: usize,
    nq: usize,
    // per element: first active basis index
    first: Vec<usize>,
    // nodes/weights per element (nel * nq)
    nodes: Vec<f64>,
    weights: Vec<f64>,
    // values[(e * nq + q) * (max_deriv+1) + d][j]
    ders: Vec<Vec<f64>>,
    max_deriv: usize,
}

impl DirTables {
    fn build(space: &crate::spline::SplineSpace1D, nq: usize, max_deriv: usize) -> Self {
        let nel = space.num_elements();
        let rule = space.quadrature_rule(nq);
        let mut first = Vec::with_capacity(nel);
        let mut nodes = Vec::with_capacity(nel * nq);
        let mut weights = Vec::with_capacity(nel * nq);
        let mut ders = Vec::with_capacity(nel * nq * (max_deriv + 1));
        for e in 0..nel {
            first.push(space.element_first_basis(e));
            for &(x, w) in &rule[e] {
                nodes.push(x);
                weights.push(w);
                let (f, table) = space.eval_basis(x, max_deriv).expect("node in [0,1]");
                debug_assert_eq!(f, space.element_first_basis(e));
                for row in table {
                    ders.push(row);
                }
            }
        }
        Self {
            p: space.degree(),
            nq,
            first,
            nodes,
            weights,
            ders,
            max_deriv,
        }
    }

    fn der(&self, e: usize, q: usize, d: usize) -> &[f64] {
        &self.ders[(e * self.nq + q) * (self.max_deriv + 1) + d]
    }
}

struct QuadPoint {
    xhat: Point,
    weight: f64, // includes the Jacobian determinant
    phys: Point,
}

/// Physical derivatives of all active basis functions of a space at one
/// quadrature point.
fn active_physical(
    space: &TensorSpace,
    tables: &[DirTables],
    e: &[usize],
    q: &[usize],
    xhat: Point,
    map: &GeometryMap,
    max_deriv: usize,
    out: &mut Vec<(Option<usize>, PhysicalDerivatives)>,
) -> Result<()> {
    out.clear();
    let d = space.d();
    match d {
        1 => {
            let t = &tables[0];
            let v = t.der(e[0], q[0], 0);
            let g = if max_deriv >= 1 { t.der(e[0], q[0], 1) } else { v };
            let h = if max_deriv >= 2 { t.der(e[0], q[0], 2) } else { v };
            for j in 0..=t.p {
                let full = t.first[e[0]] + j;
                let idx = space.retained_from_full(&[full]).ok();
                let ghat = if max_deriv >= 1 { [g[j], 0.0] } else { [0.0; 2] };
                let hhat = if max_deriv >= 2 {
                    [[h[j], 0.0], [0.0, 0.0]]
                } else {
                    [[0.0; 2]; 2]
                };
                let pd = map.physical_derivatives(xhat, v[j], ghat, hhat)?;
                out.push((idx, pd));
            }
        }
        2 => {
            let (t0, t1) = (&tables[0], &tables[1]);
            let v0 = t0.der(e[0], q[0], 0);
            let v1 = t1.der(e[1], q[1], 0);
            let g0 = if max_deriv >= 1 { t0.der(e[0], q[0], 1) } else { v0 };
            let g1 = if max_deriv >= 1 { t1.der(e[1], q[1], 1) } else { v1 };
            let h0 = if max_deriv >= 2 { t0.der(e[0], q[0], 2) } else { v0 };
            let h1 = if max_deriv >= 2 { t1.der(e[1], q[1], 2) } else { v1 };
            for j0 in 0..=t0.p {
                for j1 in 0..=t1.p {
                    let full = [t0.first[e[0]] + j0, t1.first[e[1]] + j1];
                    let idx = space.retained_from_full(&full).ok();
                    let value = v0[j0] * v1[j1];
                    let ghat = if max_deriv >= 1 {
                        [g0[j0] * v1[j1], v0[j0] * g1[j1]]
                    } else {
                        [0.0; 2]
                    };
                    let hhat = if max_deriv >= 2 {
                        [
                            [h0[j0] * v1[j1], g0[j0] * g1[j1]],
                            [g0[j0] * g1[j1], v0[j0] * h1[j1]],
                        ]
                    } else {
                        [[0.0; 2]; 2]
                    };
                    let pd = map.physical_derivatives(xhat, value, ghat, hhat)?;
                    out.push((idx, pd));
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Quadrature points of one element, optionally subdivided, optionally
/// clipped against an observation box via the indicator.
fn element_quad_points(
    d: usize,
    bounds: &[(f64, f64)],
    nq: usize,
    subdiv: usize,
    region: Option<&ObservationRegion>,
    map: &GeometryMap,
) -> Vec<QuadPoint> {
    let (nodes, weights) = crate::spline::gauss_legendre(nq);
    let mut cells: Vec<Vec<(f64, f64)>> = Vec::new(); // per dir: subcell bounds
    for m in 0..d {
        let (a, b) = bounds[m];
        let step = (b - a) / subdiv as f64;
        cells.push(
            (0..subdiv)
                .map(|s| (a + s as f64 * step, a + (s + 1) as f64 * step))
                .collect(),
        );
    }
    let mut points = Vec::new();
    let mut emit = |xhat: Point, w: f64| {
        if let Some(r) = region {
            if !r.contains(d, xhat) {
                return;
            }
        }
        let j = map.jacobian_det(xhat);
        points.push(QuadPoint {
            xhat,
            weight: w * j,
            phys: map.eval(xhat),
        });
    };
    match d {
        1 => {
            for &(a, b) in &cells[0] {
                let half = 0.5 * (b - a);
                for (t, w) in nodes.iter().zip(&weights) {
                    emit([0.5 * (a + b) + half * t, 0.0], half * w);
                }
            }
        }
        2 => {
            for &(a0, b0) in &cells[0] {
                let h0 = 0.5 * (b0 - a0);
                for &(a1, b1) in &cells[1] {
                    let h1 = 0.5 * (b1 - a1);
                    for (t0, w0) in nodes.iter().zip(&weights) {
                        for (t1, w1) in nodes.iter().zip(&weights) {
                            emit(
                                [0.5 * (a0 + b0) + h0 * t0, 0.5 * (a1 + b1) + h1 * t1],
                                h0 * h1 * w0 * w1,
                            );
                        }
                    }
                }
            }
        }
        _ => unreachable!(),
    }
    points
}

fn element_grid(space: &TensorSpace) -> Vec<usize> {
    (0..space.d())
        .map(|m| space.factor(m).num_elements())
        .collect()
}

fn element_bounds(space: &TensorSpace, e: &[usize]) -> Vec<(f64, f64)> {
    (0..space.d())
        .map(|m| space.factor(m).element_bounds(e[m]))
        .collect()
}

/// Generic element-loop assembly of `sum_q w_q J_q kernel(test_i, trial_j)`.
#[allow(clippy::too_many_arguments)]
fn assemble_bilinear<K>(
    test: &TensorSpace,
    trial: &TensorSpace,
    map: &GeometryMap,
    nq: usize,
    test_deriv: usize,
    trial_deriv: usize,
    region: Option<&ObservationRegion>,
    cut_subdiv: usize,
    kernel: K,
) -> Result<CsrMatrix>
where
    K: Fn(Point, &PhysicalDerivatives, &PhysicalDerivatives) -> f64,
{
    let d = test.d();
    assert_eq!(trial.d(), d);
    for m in 0..d {
        assert_eq!(
            test.factor(m).num_elements(),
            trial.factor(m).num_elements(),
            "test and trial spaces must share the element grid"
        );
    }
    let test_tables: Vec<DirTables> = (0..d)
        .map(|m| DirTables::build(test.factor(m), nq, test_deriv))
        .collect();
    let trial_tables: Vec<DirTables> = (0..d)
        .map(|m| DirTables::build(trial.factor(m), nq, trial_deriv))
        .collect();
    let grid = element_grid(test);
    let nel_total: usize = grid.iter().product();
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut test_act: Vec<(Option<usize>, PhysicalDerivatives)> = Vec::new();
    let mut trial_act: Vec<(Option<usize>, PhysicalDerivatives)> = Vec::new();

    for eflat in 0..nel_total {
        let e: Vec<usize> = match d {
            1 => vec![eflat],
            _ => vec![eflat / grid[1], eflat % grid[1]],
        };
        let bounds = element_bounds(test, &e);
        let class = region
            .map(|r| r.classify(d, &bounds))
            .unwrap_or(ElementClass::Inside);
        if class == ElementClass::Outside {
            continue;
        }
        if class == ElementClass::Inside {
            // fast path: precomputed tables
            let qtotal = nq.pow(d as u32);
            for qflat in 0..qtotal {
                let q: Vec<usize> = match d {
                    1 => vec![qflat],
                    _ => vec![qflat / nq, qflat % nq],
                };
                let xhat = match d {
                    1 => [test_tables[0].nodes[e[0] * nq + q[0]], 0.0],
                    _ => [
                        test_tables[0].nodes[e[0] * nq + q[0]],
                        test_tables[1].nodes[e[1] * nq + q[1]],
                    ],
                };
                let w: f64 = (0..d).map(|m| test_tables[m].weights[e[m] * nq + q[m]]).product();
                let jw = w * map.jacobian_det(xhat);
                let phys = map.eval(xhat);
                active_physical(test, &test_tables, &e, &q, xhat, map, test_deriv, &mut test_act)?;
                active_physical(
                    trial,
                    &trial_tables,
                    &e,
                    &q,
                    xhat,
                    map,
                    trial_deriv,
                    &mut trial_act,
                )?;
                for (ri, ti) in &test_act {
                    let Some(ri) = ri else { continue };
                    for (cj, sj) in &trial_act {
                        let Some(cj) = cj else { continue };
                        triplets.push((*ri, *cj, jw * kernel(phys, ti, sj)));
                    }
                }
            }
        } else {
            // cut element: subdivided rule with the region indicator
            let pts = element_quad_points(d, &bounds, nq, cut_subdiv, region, map);
            for pt in pts {
                let phys = pt.phys;
                eval_active_at(test, &e, pt.xhat, test_deriv, map, &mut test_act)?;
                eval_active_at(trial, &e, pt.xhat, trial_deriv, map, &mut trial_act)?;
                for (ri, ti) in &test_act {
                    let Some(ri) = ri else { continue };
                    for (cj, sj) in &trial_act {
                        let Some(cj) = cj else { continue };
                        triplets.push((*ri, *cj, pt.weight * kernel(phys, ti, sj)));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(test.dim(), trial.dim(), &triplets))
}

/// Direct evaluation of all active functions of one element at an arbitrary
/// point (used off the precomputed tables, e.g. on subdivided cut elements).
fn eval_active_at(
    space: &TensorSpace,
    e: &[usize],
    xhat: Point,
    max_deriv: usize,
    map: &GeometryMap,
    out: &mut Vec<(Option<usize>, PhysicalDerivatives)>,
) -> Result<()> {
    out.clear();
    let d = space.d();
    let mut per_dir = Vec::with_capacity(d);
    for m in 0..d {
        per_dir.push(space.factor(m).eval_basis(xhat[m], max_deriv)?);
    }
    match d {
        1 => {
            let (first, ders) = &per_dir[0];
            let p = space.factor(0).degree();
            let _ = e;
            for j in 0..=p {
                let idx = space.retained_from_full(&[first + j]).ok();
                let ghat = if max_deriv >= 1 { [ders[1][j], 0.0] } else { [0.0; 2] };
                let hhat = if max_deriv >= 2 {
                    [[ders[2][j], 0.0], [0.0, 0.0]]
                } else {
                    [[0.0; 2]; 2]
                };
                out.push((idx, map.physical_derivatives(xhat, ders[0][j], ghat, hhat)?));
            }
        }
        2 => {
            let (f0, d0) = &per_dir[0];
            let (f1, d1) = &per_dir[1];
            let p0 = space.factor(0).degree();
            let p1 = space.factor(1).degree();
            for j0 in 0..=p0 {
                for j1 in 0..=p1 {
                    let idx = space.retained_from_full(&[f0 + j0, f1 + j1]).ok();
                    let value = d0[0][j0] * d1[0][j1];
                    let ghat = if max_deriv >= 1 {
                        [d0[1][j0] * d1[0][j1], d0[0][j0] * d1[1][j1]]
                    } else {
                        [0.0; 2]
                    };
                    let hhat = if max_deriv >= 2 {
                        [
                            [d0[2][j0] * d1[0][j1], d0[1][j0] * d1[1][j1]],
                            [d0[1][j0] * d1[1][j1], d0[0][j0] * d1[2][j1]],
                        ]
                    } else {
                        [[0.0; 2]; 2]
                    };
                    out.push((idx, map.physical_derivatives(xhat, value, ghat, hhat)?));
                }
            }
        }
        _ => unreachable!(),
    }
    Ok(())
}

/// Mass matrix `M`: entries `(phi_j, phi_i)_{L2(Omega)}`.
pub fn assemble_mass(space: &TensorSpace, map: &GeometryMap, nq: usize) -> Result<CsrMatrix> {
    assemble_bilinear(space, space, map, nq, 0, 0, None, 1, |_, t, s| {
        t.value * s.value
    })
}

/// Observation mass `M_O`: entries `(phi_j, phi_i)_{L2(O)}`. The region must
/// be knot-aligned at the space's level.
pub fn assemble_obs_mass(
    space: &TensorSpace,
    region: &ObservationRegion,
    map: &GeometryMap,
    nq: usize,
) -> Result<CsrMatrix> {
    if !region.is_knot_aligned(space) {
        return Err(Error::RegionNotKnotAligned);
    }
    assemble_bilinear(space, space, map, nq, 0, 0, Some(region), 1, |_, t, s| {
        t.value * s.value
    })
}

/// Observation mass on levels where the box is not knot-aligned: cut
/// elements are integrated with a subdivided rule and the box indicator.
pub fn assemble_obs_mass_unaligned(
    space: &TensorSpace,
    region: &ObservationRegion,
    map: &GeometryMap,
    nq: usize,
    cut_subdiv: usize,
) -> Result<CsrMatrix> {
    assemble_bilinear(
        space,
        space,
        map,
        nq,
        0,
        0,
        Some(region),
        cut_subdiv,
        |_, t, s| t.value * s.value,
    )
}

/// State matrix `K`: rows test (`Q_h`), columns trial (`U_h`), entries
/// `(L phi_j, phi_i)_{L2(Omega)}` with the strong operator `L`.
pub fn assemble_state(
    trial: &TensorSpace,
    test: &TensorSpace,
    coeffs: &PdeCoefficients,
    map: &GeometryMap,
    nq: usize,
) -> Result<CsrMatrix> {
    assemble_bilinear(test, trial, map, nq, 0, 2, None, 1, |phys, t, s| {
        coeffs.apply(phys, s) * t.value
    })
}

/// Fourth-order matrix `B`: entries `(L phi_j, L phi_i)_{L2(Omega)}`.
pub fn assemble_fourth_order(
    space: &TensorSpace,
    coeffs: &PdeCoefficients,
    map: &GeometryMap,
    nq: usize,
) -> Result<CsrMatrix> {
    assemble_bilinear(space, space, map, nq, 2, 2, None, 1, |phys, t, s| {
        coeffs.apply(phys, t) * coeffs.apply(phys, s)
    })
}

/// Weak-form CDR matrix on a single space (standard Galerkin for the
/// forward problem): `eps (grad u, grad v) + (beta . grad u, v) + sigma (u, v)`.
pub fn assemble_weak_cdr(
    space: &TensorSpace,
    coeffs: &PdeCoefficients,
    map: &GeometryMap,
    nq: usize,
) -> Result<CsrMatrix> {
    assemble_bilinear(space, space, map, nq, 1, 1, None, 1, |phys, t, s| {
        let b = coeffs.beta.at(phys);
        coeffs.eps * (s.grad[0] * t.grad[0] + s.grad[1] * t.grad[1])
            + (b[0] * s.grad[0] + b[1] * s.grad[1]) * t.value
            + coeffs.sigma * s.value * t.value
    })
}

/// Pure convection matrix `(beta . grad phi_j, phi_i)` (skew-symmetric on
/// the H^1_0 space when `div beta = 0`).
pub fn assemble_convection(
    space: &TensorSpace,
    beta: &Convection,
    map: &GeometryMap,
    nq: usize,
) -> Result<CsrMatrix> {
    assemble_bilinear(space, space, map, nq, 0, 1, None, 1, |phys, t, s| {
        let b = beta.at(phys);
        (b[0] * s.grad[0] + b[1] * s.grad[1]) * t.value
    })
}

/// Biharmonic form `(lap u, lap v)_{L2(Omega)}`.
pub fn assemble_biharmonic(
    space: &TensorSpace,
    map: &GeometryMap,
    nq: usize,
) -> Result<CsrMatrix> {
    assemble_bilinear(space, space, map, nq, 2, 2, None, 1, |_, t, s| {
        t.laplacian * s.laplacian
    })
}

/// H^2-Gram matrix `(u, v) + (grad u, grad v) + (hess u : hess v)`.
pub fn assemble_h2_gram(space: &TensorSpace, map: &GeometryMap, nq: usize) -> Result<CsrMatrix> {
    assemble_bilinear(space, space, map, nq, 2, 2, None, 1, |_, t, s| {
        let mut acc = t.value * s.value + t.grad[0] * s.grad[0] + t.grad[1] * s.grad[1];
        for i in 0..2 {
            for j in 0..2 {
                acc += t.hess[i][j] * s.hess[i][j];
            }
        }
        acc
    })
}

/// Load vector: entries `(f, phi_i)` integrated over the region (or the
/// whole domain). `subdiv > 1` subdivides every element, which controls the
/// consistency error for discontinuous `f` such as circle indicators.
pub fn assemble_load(
    test: &TensorSpace,
    f: &dyn Fn(Point) -> f64,
    map: &GeometryMap,
    region: Option<&ObservationRegion>,
    nq: usize,
    subdiv: usize,
) -> Result<Vec<f64>> {
    assemble_load_kernel(test, map, region, nq, subdiv, 0, |phys, t| f(phys) * t.value)
}

/// Load tested against the strong operator: entries `(f, L phi_i)`.
pub fn assemble_load_operator(
    test: &TensorSpace,
    coeffs: &PdeCoefficients,
    f: &dyn Fn(Point) -> f64,
    map: &GeometryMap,
    nq: usize,
) -> Result<Vec<f64>> {
    assemble_load_kernel(test, map, None, nq, 1, 2, |phys, t| {
        f(phys) * coeffs.apply(phys, t)
    })
}

fn assemble_load_kernel<K>(
    test: &TensorSpace,
    map: &GeometryMap,
    region: Option<&ObservationRegion>,
    nq: usize,
    subdiv: usize,
    test_deriv: usize,
    kernel: K,
) -> Result<Vec<f64>>
where
    K: Fn(Point, &PhysicalDerivatives) -> f64,
{
    let d = test.d();
    let grid = element_grid(test);
    let nel_total: usize = grid.iter().product();
    let mut out = vec![0.0; test.dim()];
    let mut act: Vec<(Option<usize>, PhysicalDerivatives)> = Vec::new();
    for eflat in 0..nel_total {
        let e: Vec<usize> = match d {
            1 => vec![eflat],
            _ => vec![eflat / grid[1], eflat % grid[1]],
        };
        let bounds = element_bounds(test, &e);
        if let Some(r) = region {
            if r.classify(d, &bounds) == ElementClass::Outside {
                continue;
            }
        }
        let pts = element_quad_points(d, &bounds, nq, subdiv, region, map);
        for pt in pts {
            eval_active_at(test, &e, pt.xhat, test_deriv, map, &mut act)?;
            for (ri, ti) in &act {
                let Some(ri) = ri else { continue };
                out[*ri] += pt.weight * kernel(pt.phys, ti);
            }
        }
    }
    Ok(out)
}

/// Quadrature of a scalar function of the physical point over the mapped
/// domain (or a parameter-box region), used by tests and error norms.
pub fn integrate(
    space: &TensorSpace,
    map: &GeometryMap,
    region: Option<&ObservationRegion>,
    nq: usize,
    subdiv: usize,
    f: &dyn Fn(Point, Point) -> f64, // (xhat, phys) -> value
) -> f64 {
    let d = space.d();
    let grid = element_grid(space);
    let nel_total: usize = grid.iter().product();
    let mut acc = 0.0;
    for eflat in 0..nel_total {
        let e: Vec<usize> = match d {
            1 => vec![eflat],
            _ => vec![eflat / grid[1], eflat % grid[1]],
        };
        let bounds = element_bounds(space, &e);
        if let Some(r) = region {
            if r.classify(d, &bounds) == ElementClass::Outside {
                continue;
            }
        }
        for pt in element_quad_points(d, &bounds, nq, subdiv, region, map) {
            acc += pt.weight * f(pt.xhat, pt.phys);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spline::SplineSpace1D;
    use approx::assert_abs_diff_eq;

    fn box_space(p: usize, k: i64, level: usize, masked: bool) -> TensorSpace {
        let f = || SplineSpace1D::new(p, k, level).unwrap();
        TensorSpace::new(vec![f(), f()], vec![masked, masked])
    }

    #[test]
    fn total_mass_unit_square() {
        let s = box_space(2, 1, 2, false);
        let m = assemble_mass(&s, &GeometryMap::identity(2), 3).unwrap();
        let ones = vec![1.0; s.dim()];
        let total = crate::sparse::dot(&ones, &m.matvec_vec(&ones));
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn total_mass_quarter_annulus_matches_jacobian_integral() {
        let s = box_space(2, 1, 3, false);
        let map = GeometryMap::quarter_annulus();
        let m = assemble_mass(&s, &map, 3).unwrap();
        let ones = vec![1.0; s.dim()];
        let total = crate::sparse::dot(&ones, &m.matvec_vec(&ones));
        // independent high-order quadrature of the Jacobian
        let area = integrate(&s, &map, None, 10, 1, &|_, _| 1.0);
        assert_abs_diff_eq!(total, area, epsilon = 1e-10);
        // the exact area of the quarter annulus is not 3 pi / 4 here: the
        // parameterization is a polynomial approximation, so compare only
        // against the quadrature oracle and sanity-check the magnitude.
        assert!((area - 3.0 * std::f64::consts::PI / 4.0).abs() < 0.1);
    }

    #[test]
    fn hat_function_mass_matrix_1d() {
        // p=1, l=1 on (0,1): classical hat mass matrix with h = 1/2.
        let s = TensorSpace::unmasked(vec![SplineSpace1D::new(1, 0, 1).unwrap()]);
        let m = assemble_mass(&s, &GeometryMap::identity(1), 2).unwrap();
        let h = 0.5;
        assert_abs_diff_eq!(m.get(0, 0), h / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.get(0, 1), h / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.get(1, 1), 2.0 * h / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.get(1, 2), h / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.get(0, 2), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn kronecker_identity_on_box() {
        // On the unit square M equals the Kronecker product of univariate
        // mass matrices.
        let f = SplineSpace1D::new(2, 1, 2).unwrap();
        let s2 = TensorSpace::unmasked(vec![f.clone(), f.clone()]);
        let m2 = assemble_mass(&s2, &GeometryMap::identity(2), 3).unwrap();
        let s1 = TensorSpace::unmasked(vec![f.clone()]);
        let m1 = assemble_mass(&s1, &GeometryMap::identity(1), 3).unwrap();
        let n = f.dim();
        for i0 in 0..n {
            for i1 in 0..n {
                for j0 in 0..n {
                    for j1 in 0..n {
                        let lhs = m2.get(i0 * n + i1, j0 * n + j1);
                        let rhs = m1.get(i0, j0) * m1.get(i1, j1);
                        assert!((lhs - rhs).abs() < 1e-14, "({i0},{i1}),({j0},{j1})");
                    }
                }
            }
        }
    }

    #[test]
    fn obs_mass_full_equals_mass_and_box_area() {
        let s = box_space(2, 1, 2, false);
        let map = GeometryMap::identity(2);
        let m = assemble_mass(&s, &map, 3).unwrap();
        let mo = assemble_obs_mass(&s, &ObservationRegion::Full, &map, 3).unwrap();
        let x: Vec<f64> = (0..s.dim()).map(|i| (i as f64).sin()).collect();
        let diff: Vec<f64> = m
            .matvec_vec(&x)
            .iter()
            .zip(mo.matvec_vec(&x))
            .map(|(a, b)| a - b)
            .collect();
        assert!(crate::sparse::norm2(&diff) < 1e-14);

        // O = (1/4, 3/4)^2 aligned at level 2: total observed mass is 1/4.
        let region = ObservationRegion::param_box([0.25, 0.25], [0.75, 0.75]);
        let mo = assemble_obs_mass(&s, &region, &map, 3).unwrap();
        let ones = vec![1.0; s.dim()];
        let total = crate::sparse::dot(&ones, &mo.matvec_vec(&ones));
        assert_abs_diff_eq!(total, 0.25, epsilon = 1e-12);

        // degenerate box: zero matrix
        let empty = ObservationRegion::param_box([0.25, 0.25], [0.25, 0.25]);
        let mz = assemble_obs_mass(&s, &empty, &map, 3).unwrap();
        assert_abs_diff_eq!(mz.max_abs(), 0.0, epsilon = 1e-300);
    }

    #[test]
    fn obs_mass_rejects_unaligned_region() {
        let s = box_space(2, 1, 1, false); // level 1: knots at 0, 1/2, 1
        let region = ObservationRegion::param_box([0.25, 0.25], [0.75, 0.75]);
        assert!(matches!(
            assemble_obs_mass(&s, &region, &GeometryMap::identity(2), 3),
            Err(Error::RegionNotKnotAligned)
        ));
        // but the subdivided variant integrates it
        let mo =
            assemble_obs_mass_unaligned(&s, &region, &GeometryMap::identity(2), 3, 8).unwrap();
        let ones = vec![1.0; s.dim()];
        let total = crate::sparse::dot(&ones, &mo.matvec_vec(&ones));
        assert!((total - 0.25).abs() < 1e-3);
    }

    #[test]
    fn state_matrix_constant_laplacian() {
        // u(x) = x(1-x) in 1D has L u = 2 eps for beta = 0, sigma = 0.
        let p = 2;
        let u = TensorSpace::h10(vec![SplineSpace1D::new(p, 1, 2).unwrap()]);
        let q = TensorSpace::unmasked(vec![SplineSpace1D::new(p, -1, 2).unwrap()]);
        let coeffs = PdeCoefficients::constant(0.7, [0.0, 0.0], 0.0);
        let map = GeometryMap::identity(1);
        let k = assemble_state(&u, &q, &coeffs, &map, p + 1).unwrap();
        // coefficients of x(1-x) in the masked quadratic basis at level 2:
        // use Greville interpolation via L2 projection instead: solve
        // M_u c = (x(1-x), phi_i)
        let mu = assemble_mass(&u, &map, p + 1).unwrap();
        let load = assemble_load(&u, &|x| x[0] * (1.0 - x[0]), &map, None, p + 1, 1).unwrap();
        let chol = crate::sparse::SparseCholesky::new(&mu).unwrap();
        let c = chol.solve(&load);
        let ku = k.matvec_vec(&c);
        // oracle: (L u, phi_i) = 2 eps * (1, phi_i)
        let rhs = assemble_load(&q, &|_| 2.0 * 0.7, &map, None, p + 1, 1).unwrap();
        for (a, b) in ku.iter().zip(&rhs) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn assembly_linearity_in_coefficients() {
        let u = box_space(2, 1, 2, true);
        let q = box_space(2, -1, 2, false);
        let map = GeometryMap::identity(2);
        let full = assemble_state(
            &u,
            &q,
            &PdeCoefficients::constant(0.3, [1.5, -0.5], 2.0),
            &map,
            3,
        )
        .unwrap();
        let k_eps = assemble_state(
            &u,
            &q,
            &PdeCoefficients::constant(0.3, [0.0, 0.0], 0.0),
            &map,
            3,
        )
        .unwrap();
        // beta-only part: assemble with tiny eps and subtract the eps part.
        let k_beta_eps = assemble_state(
            &u,
            &q,
            &PdeCoefficients::constant(0.3, [1.5, -0.5], 0.0),
            &map,
            3,
        )
        .unwrap();
        let k_sigma_eps = assemble_state(
            &u,
            &q,
            &PdeCoefficients::constant(0.3, [0.0, 0.0], 2.0),
            &map,
            3,
        )
        .unwrap();
        // full = k_beta_eps + k_sigma_eps - k_eps
        let sum = k_beta_eps
            .add_scaled(&k_sigma_eps, 1.0)
            .unwrap()
            .add_scaled(&k_eps, -1.0)
            .unwrap();
        let diff = full.add_scaled(&sum, -1.0).unwrap();
        assert!(diff.max_abs() < 1e-13 * full.max_abs().max(1.0));
    }

    #[test]
    fn convection_skew_symmetry() {
        let u = box_space(2, 1, 3, true);
        let c = assemble_convection(
            &u,
            &Convection::Constant([-2.0, 1.0]),
            &GeometryMap::identity(2),
            3,
        )
        .unwrap();
        assert!(c.symmetry_defect() < 1e-10);
    }

    #[test]
    fn fourth_order_scaling_and_biharmonic() {
        let u = box_space(2, 1, 2, true);
        let map = GeometryMap::identity(2);
        let c1 = PdeCoefficients::constant(0.4, [1.0, 2.0], 0.5);
        let c2 = PdeCoefficients::constant(1.2, [3.0, 6.0], 1.5); // 3x
        let b1 = assemble_fourth_order(&u, &c1, &map, 3).unwrap();
        let b2 = assemble_fourth_order(&u, &c2, &map, 3).unwrap();
        let diff = b2.add_scaled(&b1.scaled(9.0), -1.0).unwrap();
        assert!(diff.max_abs() < 1e-10 * b2.max_abs());
    }

    #[test]
    fn fourth_order_quadratic_form_is_squared_residual() {
        let u = box_space(3, 2, 2, true);
        let map = GeometryMap::identity(2);
        let coeffs = PdeCoefficients::constant(0.8, [1.0, -1.0], 0.3);
        let b = assemble_fourth_order(&u, &coeffs, &map, 4).unwrap();
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let c: Vec<f64> = (0..u.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
        let quad_form = crate::sparse::dot(&c, &b.matvec_vec(&c));
        // independent quadrature of || L u_h ||^2
        let oracle = integrate(&u, &map, None, 8, 1, &|xhat, phys| {
            let fv = u.eval_field(&c, &[xhat[0], xhat[1]], 2).unwrap();
            let pd = map
                .physical_derivatives(xhat, fv.value, fv.grad, fv.hess)
                .unwrap();
            let lu = coeffs.apply(phys, &pd);
            lu * lu
        });
        assert!(
            (quad_form - oracle).abs() < 1e-12 * oracle.abs().max(1.0),
            "{quad_form} vs {oracle}"
        );
    }

    #[test]
    fn load_vectors() {
        let s = box_space(2, 1, 2, false);
        let map = GeometryMap::identity(2);
        let zero = assemble_load(&s, &|_| 0.0, &map, None, 3, 1).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        let one = assemble_load(&s, &|_| 1.0, &map, None, 3, 1).unwrap();
        let total: f64 = one.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn indicator_load_matches_circle_area() {
        // u_d = indicator of the circle of radius 1/4 around (3/8, 5/8).
        let s = box_space(2, 1, 5, false);
        let map = GeometryMap::identity(2);
        let ud = |x: Point| {
            let dx = x[0] - 0.375;
            let dy = x[1] - 0.625;
            if dx * dx + dy * dy <= 1.0 / 16.0 {
                1.0
            } else {
                0.0
            }
        };
        let load = assemble_load(&s, &ud, &map, None, 3, 4).unwrap();
        let total: f64 = load.iter().sum();
        let area = std::f64::consts::PI / 16.0; // fully inside the square
        assert!((total - area).abs() / area < 0.01, "{total} vs {area}");
    }

    #[test]
    fn indicator_load_quadrature_consistency() {
        let s = box_space(2, 1, 6, false);
        let map = GeometryMap::identity(2);
        let ud = |x: Point| {
            let dx = x[0] - 0.375;
            let dy = x[1] - 0.625;
            if dx * dx + dy * dy <= 1.0 / 16.0 {
                1.0
            } else {
                0.0
            }
        };
        let l4 = assemble_load(&s, &ud, &map, None, 3, 4).unwrap();
        let l8 = assemble_load(&s, &ud, &map, None, 3, 8).unwrap();
        let max_change = l4
            .iter()
            .zip(&l8)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_change < 1e-3, "{max_change}");
    }
}

//! Inexact realizations of the preconditioner blocks: geometric multigrid
//! for `M_O + alpha B` (rediscretized on each level, tensor knot-insertion
//! prolongation) and a Kronecker-product approximation of the mass inverse.

use crate::assembly::{self, ObservationRegion, PdeCoefficients};
use crate::error::{Error, Result};
use crate::geometry::GeometryMap;
use crate::sparse::{CsrMatrix, SparseCholesky};
use crate::spline::SplineSpace1D;
use crate::system::BlockSolve;
use crate::tensor::TensorSpace;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Smoother selection for the multigrid preconditioner block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmootherKind {
    /// Pointwise Gauss-Seidel, `nu` pre- (forward) and post- (backward)
    /// smoothing steps.
    GaussSeidel { nu: usize },
    /// Overlapping macroelement blocks of `a` basis functions per
    /// direction extended by `b`, multiplicative Schwarz in lexicographic
    /// order, `nu` steps.
    MacroGaussSeidel { nu: usize, a: usize, b: usize },
}

impl SmootherKind {
    /// Defaults tied to the degree: patches of `p` functions with overlap
    /// `p - 1`.
    pub fn macro_for_degree(p: usize) -> Self {
        SmootherKind::MacroGaussSeidel {
            nu: 1,
            a: p,
            b: p - 1,
        }
    }
}

/// One forward or backward Gauss-Seidel sweep on `A x = b`, in residual
/// form: `x_i += (b_i - row_i . x) / a_ii`.
pub fn gauss_seidel_sweep(a: &CsrMatrix, x: &mut [f64], b: &[f64], forward: bool) -> Result<()> {
    let n = a.nrows();
    let run = |x: &mut [f64], i: usize| -> Result<()> {
        let (cols, vals) = a.row(i);
        let mut acc = b[i];
        let mut diag = 0.0;
        for (c, v) in cols.iter().zip(vals) {
            acc -= v * x[*c];
            if *c == i {
                diag = *v;
            }
        }
        if diag == 0.0 {
            return Err(Error::SingularSmootherBlock);
        }
        x[i] += acc / diag;
        Ok(())
    };
    if forward {
        for i in 0..n {
            run(x, i)?;
        }
    } else {
        for i in (0..n).rev() {
            run(x, i)?;
        }
    }
    Ok(())
}

/// Precomputed overlapping blocks with their dense Cholesky factors.
pub struct MacroBlocks {
    blocks: Vec<(Vec<usize>, Cholesky<f64, Dyn>)>,
}

impl MacroBlocks {
    pub fn build(space: &TensorSpace, a: &CsrMatrix, patch: usize, overlap: usize) -> Result<Self> {
        assert!(patch >= 1);
        let d = space.d();
        let dims = space.dims();
        let per_dir: Vec<Vec<(usize, usize)>> = (0..d)
            .map(|m| {
                let n = dims[m];
                let nmac = n.div_ceil(patch);
                (0..nmac)
                    .map(|i| {
                        let lo = (i * patch).saturating_sub(overlap);
                        let hi = ((i + 1) * patch + overlap).min(n);
                        (lo, hi)
                    })
                    .collect()
            })
            .collect();
        let mut blocks = Vec::new();
        let mut push_block = |idx: Vec<usize>| -> Result<()> {
            let nb = idx.len();
            let mut dense = DMatrix::<f64>::zeros(nb, nb);
            for (bi, &gi) in idx.iter().enumerate() {
                for (bj, &gj) in idx.iter().enumerate() {
                    dense[(bi, bj)] = a.get(gi, gj);
                }
            }
            let chol = Cholesky::new(dense).ok_or(Error::SingularSmootherBlock)?;
            blocks.push((idx, chol));
            Ok(())
        };
        match d {
            1 => {
                for &(lo, hi) in &per_dir[0] {
                    push_block((lo..hi).collect())?;
                }
            }
            2 => {
                let n1 = dims[1];
                for &(lo0, hi0) in &per_dir[0] {
                    for &(lo1, hi1) in &per_dir[1] {
                        let mut idx = Vec::with_capacity((hi0 - lo0) * (hi1 - lo1));
                        for i0 in lo0..hi0 {
                            for i1 in lo1..hi1 {
                                idx.push(i0 * n1 + i1);
                            }
                        }
                        push_block(idx)?;
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(Self { blocks })
    }

    /// One multiplicative Schwarz sweep over the blocks (reverse order for
    /// `forward = false`).
    pub fn sweep(&self, a: &CsrMatrix, x: &mut [f64], b: &[f64], forward: bool) {
        let mut order: Vec<usize> = (0..self.blocks.len()).collect();
        if !forward {
            order.reverse();
        }
        for bi in order {
            let (idx, chol) = &self.blocks[bi];
            let mut r = DVector::<f64>::zeros(idx.len());
            for (k, &gi) in idx.iter().enumerate() {
                let (cols, vals) = a.row(gi);
                let mut acc = b[gi];
                for (c, v) in cols.iter().zip(vals) {
                    acc -= v * x[*c];
                }
                r[k] = acc;
            }
            let e = chol.solve(&r);
            for (k, &gi) in idx.iter().enumerate() {
                x[gi] += e[k];
            }
        }
    }
}

enum LevelSmoother {
    GaussSeidel,
    Macro(MacroBlocks),
}

struct MgLevel {
    a: CsrMatrix,
    // prolongation from the next coarser level to this one (absent on the
    // coarsest)
    prolong: Option<CsrMatrix>,
    smoother: LevelSmoother,
}

/// Geometric multigrid hierarchy for the third preconditioner block
/// `M_O + alpha B`, rediscretized on every level of dyadic refinement.
pub struct MgHierarchy {
    levels: Vec<MgLevel>, // index 0 = coarsest
    coarse: SparseCholesky,
    nu: usize,
    kind: SmootherKind,
}

/// Kronecker product of two sparse matrices (row-major pairing, first
/// factor slowest).
pub fn kron(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
    let mut triplets = Vec::new();
    for ia in 0..a.nrows() {
        let (ca, va) = a.row(ia);
        for ib in 0..b.nrows() {
            let (cb, vb) = b.row(ib);
            for (ja, xa) in ca.iter().zip(va) {
                for (jb, xb) in cb.iter().zip(vb) {
                    triplets.push((
                        ia * b.nrows() + ib,
                        ja * b.ncols() + jb,
                        xa * xb,
                    ));
                }
            }
        }
    }
    CsrMatrix::from_triplets(a.nrows() * b.nrows(), a.ncols() * b.ncols(), &triplets)
}

/// Prolongation between masked tensor spaces: tensor product of the
/// univariate knot-insertion operators, restricted to retained indices.
pub fn tensor_prolongation(coarse: &TensorSpace, fine: &TensorSpace) -> Result<CsrMatrix> {
    let d = coarse.d();
    assert_eq!(fine.d(), d);
    let per_dir: Vec<CsrMatrix> = (0..d)
        .map(|m| coarse.factor(m).prolongation_to(fine.factor(m)))
        .collect::<Result<_>>()?;
    let full = match d {
        1 => per_dir.into_iter().next().unwrap(),
        2 => kron(&per_dir[0], &per_dir[1]),
        _ => unreachable!(),
    };
    Ok(full.restrict(
        &fine.retained_full_indices(),
        &coarse.retained_full_indices(),
    ))
}

impl MgHierarchy {
    /// Builds the hierarchy down to level 0 for the space family of the
    /// fine space (same degree and continuity, coarser dyadic levels).
    /// Observation boxes that are not knot-aligned on coarse levels are
    /// integrated with a subdivided rule.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fine_space: &TensorSpace,
        coeffs: &PdeCoefficients,
        region: &ObservationRegion,
        map: &GeometryMap,
        alpha: f64,
        nq: usize,
        smoother: SmootherKind,
    ) -> Result<Self> {
        let d = fine_space.d();
        let fine_level = fine_space.factor(0).level();
        for m in 0..d {
            assert_eq!(fine_space.factor(m).level(), fine_level);
        }
        let nu = match smoother {
            SmootherKind::GaussSeidel { nu } => nu,
            SmootherKind::MacroGaussSeidel { nu, .. } => nu,
        };
        let mut levels = Vec::with_capacity(fine_level + 1);
        let mut prev_space: Option<TensorSpace> = None;
        for level in 0..=fine_level {
            let factors: Vec<SplineSpace1D> = (0..d)
                .map(|m| {
                    let f = fine_space.factor(m);
                    SplineSpace1D::new(f.degree(), f.continuity(), level)
                })
                .collect::<Result<_>>()?;
            let masked: Vec<bool> = (0..d).map(|m| fine_space.is_masked(m)).collect();
            let space = TensorSpace::new(factors, masked);
            let m_obs = assembly::assemble_obs_mass_unaligned(&space, region, map, nq, 4)?;
            let b = assembly::assemble_fourth_order(&space, coeffs, map, nq)?;
            let a = m_obs.add_scaled(&b, alpha)?;
            let prolong = match &prev_space {
                Some(c) => Some(tensor_prolongation(c, &space)?),
                None => None,
            };
            let lsm = match smoother {
                SmootherKind::GaussSeidel { .. } => LevelSmoother::GaussSeidel,
                SmootherKind::MacroGaussSeidel { a: pa, b: pb, .. } => {
                    LevelSmoother::Macro(MacroBlocks::build(&space, &a, pa, pb)?)
                }
            };
            levels.push(MgLevel {
                a,
                prolong,
                smoother: lsm,
            });
            prev_space = Some(space);
        }
        let coarse = SparseCholesky::new(&levels[0].a)?;
        Ok(Self {
            levels,
            coarse,
            nu,
            kind: smoother,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn smoother_kind(&self) -> SmootherKind {
        self.kind
    }

    pub fn level_dim(&self, l: usize) -> usize {
        self.levels[l].a.nrows()
    }

    pub fn fine_matrix(&self) -> &CsrMatrix {
        &self.levels[self.levels.len() - 1].a
    }

    fn smooth(&self, l: usize, x: &mut [f64], b: &[f64], forward: bool) -> Result<()> {
        let lvl = &self.levels[l];
        for _ in 0..self.nu {
            match &lvl.smoother {
                LevelSmoother::GaussSeidel => gauss_seidel_sweep(&lvl.a, x, b, forward)?,
                LevelSmoother::Macro(blocks) => blocks.sweep(&lvl.a, x, b, forward),
            }
        }
        Ok(())
    }

    fn cycle(&self, l: usize, x: &mut [f64], b: &[f64]) -> Result<()> {
        if l == 0 {
            let y = self.coarse.solve(b);
            x.copy_from_slice(&y);
            return Ok(());
        }
        let lvl = &self.levels[l];
        self.smooth(l, x, b, true)?;
        // coarse-grid correction
        let ax = lvl.a.matvec_vec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let p = lvl.prolong.as_ref().expect("non-coarsest level");
        let rc = p.matvec_transpose_vec(&r);
        let mut ec = vec![0.0; rc.len()];
        self.cycle(l - 1, &mut ec, &rc)?;
        let pec = p.matvec_vec(&ec);
        for (xi, ei) in x.iter_mut().zip(&pec) {
            *xi += ei;
        }
        self.smooth(l, x, b, false)
    }

    /// One V-cycle from a zero initial guess (the preconditioner action).
    pub fn vcycle(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = vec![0.0; b.len()];
        self.cycle(self.levels.len() - 1, &mut x, b)?;
        Ok(x)
    }

    /// One V-cycle iteration on an existing iterate (for standalone use).
    pub fn vcycle_iterate(&self, x: &mut [f64], b: &[f64]) -> Result<()> {
        self.cycle(self.levels.len() - 1, x, b)
    }
}

impl BlockSolve for MgHierarchy {
    fn solve(&self, r: &[f64]) -> Vec<f64> {
        self.vcycle(r).expect("smoother blocks validated at setup")
    }
}

/// Approximate mass inverse from the Kronecker structure of the geometry:
/// `M ~ (1 / J(c)) M1 x M2` with univariate mass matrices weighted by the
/// Jacobian along the midlines, `c = (1/2, 1/2)`.
pub struct KroneckerMassSolver {
    d: usize,
    n2: usize,
    chol: Vec<SparseCholesky>,
    scale: f64,
}

fn weighted_univariate_mass(
    space: &SplineSpace1D,
    nq: usize,
    weight: &dyn Fn(f64) -> f64,
) -> CsrMatrix {
    let rule = space.quadrature_rule(nq);
    let mut triplets = Vec::new();
    for (e, pts) in rule.iter().enumerate() {
        let first = space.element_first_basis(e);
        for &(x, w) in pts {
            let (f, ders) = space.eval_basis(x, 0).expect("node in [0,1]");
            debug_assert_eq!(f, first);
            let jw = w * weight(x);
            for i in 0..=space.degree() {
                for j in 0..=space.degree() {
                    triplets.push((first + i, first + j, jw * ders[0][i] * ders[0][j]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(space.dim(), space.dim(), &triplets)
}

impl KroneckerMassSolver {
    pub fn new(space: &TensorSpace, map: &GeometryMap, nq: usize) -> Result<Self> {
        let d = space.d();
        let mut chol = Vec::with_capacity(d);
        let scale = match d {
            1 => {
                let m = weighted_univariate_mass(space.factor(0), nq, &|x| {
                    map.jacobian_det([x, 0.0])
                });
                chol.push(SparseCholesky::new(&m)?);
                1.0
            }
            2 => {
                let m1 = weighted_univariate_mass(space.factor(0), nq, &|x| {
                    map.jacobian_det([x, 0.5])
                });
                let m2 = weighted_univariate_mass(space.factor(1), nq, &|x| {
                    map.jacobian_det([0.5, x])
                });
                chol.push(SparseCholesky::new(&m1)?);
                chol.push(SparseCholesky::new(&m2)?);
                map.jacobian_det([0.5, 0.5])
            }
            _ => unreachable!(),
        };
        assert!(!space.is_masked(0), "mass block lives on the unmasked test space");
        Ok(Self {
            d,
            n2: if d == 2 { space.dim_in(1) } else { 1 },
            chol,
            scale,
        })
    }
}

impl BlockSolve for KroneckerMassSolver {
    fn solve(&self, r: &[f64]) -> Vec<f64> {
        match self.d {
            1 => self.chol[0].solve(r),
            2 => {
                let n2 = self.n2;
                let n1 = r.len() / n2;
                // row-major reshape: solve M2 along rows, then M1 along
                // columns, times the midpoint Jacobian.
                let mut tmp = vec![0.0; r.len()];
                for i in 0..n1 {
                    let y = self.chol[1].solve(&r[i * n2..(i + 1) * n2]);
                    tmp[i * n2..(i + 1) * n2].copy_from_slice(&y);
                }
                let mut out = vec![0.0; r.len()];
                let mut col = vec![0.0; n1];
                for j in 0..n2 {
                    for i in 0..n1 {
                        col[i] = tmp[i * n2 + j];
                    }
                    let y = self.chol[0].solve(&col);
                    for i in 0..n1 {
                        out[i * n2 + j] = self.scale * y[i];
                    }
                }
                out
            }
            _ => unreachable!(),
        }
    }
}

//! The discrete optimality system and its Schur-complement block
//! preconditioner.
//!
//! Unknowns are ordered `(q, w, u)` with `q, w` in the test space and `u`
//! in the control/state space. The system matrix is
//!
//! ```text
//!       [ alpha M    M     0   ]
//!   A = [   M        0     K   ]
//!       [   0       K^T   M_O  ]
//! ```
//!
//! and the preconditioner is `S = diag(alpha M, M / alpha, M_O + alpha B)`
//! with `B` the fourth-order matrix `(L phi_j, L phi_i)`.

use crate::assembly::{self, ObservationRegion, PdeCoefficients};
use crate::error::{Error, Result};
use crate::geometry::GeometryMap;
use crate::minres::{Precond, SymOp};
use crate::sparse::{dot, norm2, CsrMatrix, SparseCholesky};
use crate::tensor::TensorSpace;

/// The four matrices of the optimality system at one level.
pub struct SystemMatrices {
    /// Mass matrix on the test space `Q_h`.
    pub m_q: CsrMatrix,
    /// State matrix, rows `Q_h`, columns `U_h`.
    pub k: CsrMatrix,
    /// Observation mass matrix on `U_h`.
    pub m_obs: CsrMatrix,
    /// Fourth-order matrix on `U_h`.
    pub b: CsrMatrix,
}

/// Assembles all system matrices for given spaces, coefficients and
/// observation region.
pub fn assemble_system(
    u_space: &TensorSpace,
    q_space: &TensorSpace,
    coeffs: &PdeCoefficients,
    region: &ObservationRegion,
    map: &GeometryMap,
    nq: usize,
) -> Result<SystemMatrices> {
    Ok(SystemMatrices {
        m_q: assembly::assemble_mass(q_space, map, nq)?,
        k: assembly::assemble_state(u_space, q_space, coeffs, map, nq)?,
        m_obs: assembly::assemble_obs_mass(u_space, region, map, nq)?,
        b: assembly::assemble_fourth_order(u_space, coeffs, map, nq)?,
    })
}

impl SystemMatrices {
    pub fn n_q(&self) -> usize {
        self.m_q.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.m_obs.nrows()
    }

    pub fn total_dim(&self) -> usize {
        2 * self.n_q() + self.n_u()
    }

    pub fn operator(&self, alpha: f64) -> BlockOperator<'_> {
        BlockOperator { sys: self, alpha }
    }

    /// Third preconditioner block `M_O + alpha B`.
    pub fn third_block(&self, alpha: f64) -> CsrMatrix {
        self.m_obs.add_scaled(&self.b, alpha).expect("same dims")
    }
}

/// Matrix-free action of the 3x3 block system.
pub struct BlockOperator<'a> {
    sys: &'a SystemMatrices,
    pub alpha: f64,
}

impl SymOp for BlockOperator<'_> {
    fn dim(&self) -> usize {
        self.sys.total_dim()
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let nq = self.sys.n_q();
        let nu = self.sys.n_u();
        assert_eq!(x.len(), 2 * nq + nu);
        let (xq, rest) = x.split_at(nq);
        let (xw, xu) = rest.split_at(nq);
        let mut out = vec![0.0; 2 * nq + nu];
        // row 1: alpha M xq + M xw
        {
            let (r1, _) = out.split_at_mut(nq);
            self.sys.m_q.matvec_add(xq, r1, self.alpha);
            self.sys.m_q.matvec_add(xw, r1, 1.0);
        }
        // row 2: M xq + K xu
        {
            let r2 = &mut out[nq..2 * nq];
            self.sys.m_q.matvec_add(xq, r2, 1.0);
            self.sys.k.matvec_add(xu, r2, 1.0);
        }
        // row 3: K^T xw + M_O xu
        {
            let r3 = &mut out[2 * nq..];
            self.sys.k.matvec_transpose_add(xw, r3);
            self.sys.m_obs.matvec_add(xu, r3, 1.0);
        }
        out
    }
}

/// Assembles the right-hand side `(0, f_h, u_{d,h})` from already computed
/// load vectors.
pub fn assemble_rhs(f_load: Vec<f64>, ud_load: Vec<f64>, n_q: usize) -> Vec<f64> {
    assert_eq!(f_load.len(), n_q);
    let mut rhs = vec![0.0; n_q];
    rhs.extend(f_load);
    rhs.extend(ud_load);
    rhs
}

/// Action of the inverse of one diagonal preconditioner block.
pub trait BlockSolve {
    fn solve(&self, r: &[f64]) -> Vec<f64>;
}

impl BlockSolve for SparseCholesky {
    fn solve(&self, r: &[f64]) -> Vec<f64> {
        SparseCholesky::solve(self, r)
    }
}

/// Block-diagonal Schur preconditioner. The mass block is factored (or
/// approximated) once; `alpha` enters only through scaling.
pub struct SchurPreconditioner {
    n_q: usize,
    n_u: usize,
    alpha: f64,
    mass_solve: std::sync::Arc<dyn BlockSolve>,
    third_solve: std::sync::Arc<dyn BlockSolve>,
    // kept for the S inner product (matvec side)
    m_q: CsrMatrix,
    third: CsrMatrix,
}

impl SchurPreconditioner {
    pub fn new(
        sys: &SystemMatrices,
        alpha: f64,
        mass_solve: std::sync::Arc<dyn BlockSolve>,
        third_solve: std::sync::Arc<dyn BlockSolve>,
    ) -> Self {
        Self {
            n_q: sys.n_q(),
            n_u: sys.n_u(),
            alpha,
            mass_solve,
            third_solve,
            m_q: sys.m_q.clone(),
            third: sys.third_block(alpha),
        }
    }

    /// Exact realization: sparse Cholesky of `M` and of `M_O + alpha B`.
    pub fn exact(sys: &SystemMatrices, alpha: f64) -> Result<Self> {
        let mass = SparseCholesky::new(&sys.m_q)?;
        let third = SparseCholesky::new(&sys.third_block(alpha))?;
        Ok(Self::new(sys, alpha, std::sync::Arc::new(mass), std::sync::Arc::new(third)))
    }

    pub fn dim(&self) -> usize {
        2 * self.n_q + self.n_u
    }

    /// Matvec with `S` itself (used for inner products in spectral
    /// estimation; exact independently of how the inverse is realized).
    pub fn apply_s(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim());
        let (xq, rest) = x.split_at(self.n_q);
        let (xw, xu) = rest.split_at(self.n_q);
        let mut out = vec![0.0; self.dim()];
        self.m_q.matvec_add(xq, &mut out[..self.n_q], self.alpha);
        {
            let r2 = &mut out[self.n_q..2 * self.n_q];
            self.m_q.matvec_add(xw, r2, 1.0 / self.alpha);
        }
        self.third.matvec_add(xu, &mut out[2 * self.n_q..], 1.0);
        out
    }
}

impl Precond for SchurPreconditioner {
    fn apply(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.dim());
        let (rq, rest) = r.split_at(self.n_q);
        let (rw, ru) = rest.split_at(self.n_q);
        let mut out = Vec::with_capacity(self.dim());
        let zq = self.mass_solve.solve(rq);
        out.extend(zq.iter().map(|v| v / self.alpha));
        let zw = self.mass_solve.solve(rw);
        out.extend(zw.iter().map(|v| v * self.alpha));
        out.extend(self.third_solve.solve(ru));
        out
    }
}

/// Relative defect `max |K^T M^{-1} K - B| / max |B|`. Zero (up to
/// round-off) exactly when the strong operator maps the trial space into
/// the test space.
pub fn verify_schur_identity(sys: &SystemMatrices) -> Result<f64> {
    let chol = SparseCholesky::new(&sys.m_q)?;
    let nu = sys.n_u();
    let nq = sys.n_q();
    let mut defect = 0.0f64;
    let bmax = sys.b.max_abs();
    // column by column: y_j = M^{-1} K e_j, then row i of K^T y_j
    let kt = sys.k.transpose();
    for j in 0..nu {
        let mut kj = vec![0.0; nq];
        // K e_j: column j of K = row j of K^T
        let (cols, vals) = kt.row(j);
        for (c, v) in cols.iter().zip(vals) {
            kj[*c] = *v;
        }
        let yj = chol.solve(&kj);
        for i in 0..nu {
            let (cols, vals) = kt.row(i);
            let mut acc = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                acc += v * yj[*c];
            }
            defect = defect.max((acc - sys.b.get(i, j)).abs());
        }
    }
    Ok(defect / bmax.max(f64::MIN_POSITIVE))
}

/// Spectral estimate of a pencil that is self-adjoint in the `S` inner
/// product, via Lanczos with full reorthogonalization.
pub struct SpectralEstimate {
    /// Converged Ritz values (filtered by Ritz residual), sorted ascending.
    pub ritz: Vec<f64>,
    pub lambda_min_abs: f64,
    pub lambda_max_abs: f64,
}

impl SpectralEstimate {
    pub fn condition(&self) -> f64 {
        self.lambda_max_abs / self.lambda_min_abs
    }
}

/// Lanczos on `S^{-1} A` in the `S` inner product. `apply_a` is the matvec
/// with `A`, `apply_sinv` the preconditioner action, `apply_s` the matvec
/// with `S`.
pub fn lanczos_spectrum(
    n: usize,
    apply_a: &dyn Fn(&[f64]) -> Vec<f64>,
    apply_s: &dyn Fn(&[f64]) -> Vec<f64>,
    apply_sinv: &dyn Fn(&[f64]) -> Vec<f64>,
    iters: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    let m = iters.min(n);
    let mut alphas = Vec::with_capacity(m);
    let mut betas = Vec::with_capacity(m);
    // basis vectors and their S-images for reorthogonalization
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut svs: Vec<Vec<f64>> = Vec::with_capacity(m);

    let mut v = crate::minres::random_initial_guess(n, seed);
    let mut sv = apply_s(&v);
    let mut nrm2 = dot(&v, &sv);
    if nrm2 <= 0.0 {
        return Err(Error::NotSpd("S inner product".into()));
    }
    let mut nrm = nrm2.sqrt();
    for x in &mut v {
        *x /= nrm;
    }
    for x in &mut sv {
        *x /= nrm;
    }

    for j in 0..m {
        vs.push(v.clone());
        svs.push(sv.clone());
        let av = apply_a(&v);
        let mut w = apply_sinv(&av);
        // alpha_j = <S^{-1} A v, v>_S = v^T A v
        let alpha = dot(&v, &av);
        alphas.push(alpha);
        // full reorthogonalization in the S inner product (twice)
        for _ in 0..2 {
            for (vi, svi) in vs.iter().zip(&svs) {
                let c = dot(svi, &w);
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= c * vk;
                }
            }
        }
        let sw = apply_s(&w);
        nrm2 = dot(&w, &sw);
        if nrm2 < 0.0 {
            return Err(Error::NotSpd("S inner product".into()));
        }
        nrm = nrm2.sqrt();
        betas.push(nrm);
        if nrm < 1e-14 || j + 1 == m {
            break;
        }
        v = w;
        sv = sw;
        for x in &mut v {
            *x /= nrm;
        }
        for x in &mut sv {
            *x /= nrm;
        }
    }

    // eigen-decomposition of the tridiagonal
    let k = alphas.len();
    let mut t = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = nalgebra::SymmetricEigen::new(t);
    let beta_last = betas[k - 1];
    let mut converged: Vec<f64> = Vec::new();
    let mut all: Vec<f64> = Vec::new();
    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()));
    for (i, &theta) in eig.eigenvalues.iter().enumerate() {
        all.push(theta);
        // Ritz residual in the S norm: |beta_m s_{m,i}|
        let resid = (beta_last * eig.eigenvectors[(k - 1, i)]).abs();
        if resid < 1e-6 * scale.max(1e-300) {
            converged.push(theta);
        }
    }
    let pick = if converged.is_empty() { &all } else { &converged };
    let lambda_max_abs = pick.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let lambda_min_abs = pick
        .iter()
        .fold(f64::INFINITY, |a, &l| a.min(l.abs()));
    let mut ritz = pick.clone();
    ritz.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(SpectralEstimate {
        ritz,
        lambda_min_abs,
        lambda_max_abs,
    })
}

/// Estimates the extreme eigenvalues (in modulus) of `S^{-1} A` and the
/// resulting condition number, in the `S` inner product.
pub fn estimate_condition(
    op: &BlockOperator<'_>,
    precond: &SchurPreconditioner,
    iters: usize,
    seed: u64,
) -> Result<SpectralEstimate> {
    lanczos_spectrum(
        op.dim(),
        &|x| op.apply(x),
        &|x| precond.apply_s(x),
        &|x| precond.apply(x),
        iters,
        seed,
    )
}

/// Largest eigenvalue of `B^{-1} G` with `G` the H^2 Gram matrix and `B`
/// the biharmonic form, i.e. the best constant in
/// `|u|_{H2}^2 <= C |lap u|^2` over the discrete space.
pub fn estimate_second_fundamental_constant(
    space: &TensorSpace,
    map: &GeometryMap,
    nq: usize,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    let g = assembly::assemble_h2_gram(space, map, nq)?;
    let b = assembly::assemble_biharmonic(space, map, nq)?;
    let chol = SparseCholesky::new(&b)?;
    let est = lanczos_spectrum(
        space.dim(),
        &|x| g.matvec_vec(x),
        &|x| b.matvec_vec(x),
        &|x| chol.solve(x),
        iters,
        seed,
    )?;
    Ok(est.lambda_max_abs)
}

/// Residual of the first-order optimality conditions at a solution vector,
/// for diagnostics: `|A x - rhs| / |rhs|`.
pub fn relative_residual(op: &BlockOperator<'_>, x: &[f64], rhs: &[f64]) -> f64 {
    let ax = op.apply(x);
    let diff: Vec<f64> = ax.iter().zip(rhs).map(|(a, b)| a - b).collect();
    norm2(&diff) / norm2(rhs).max(f64::MIN_POSITIVE)
}

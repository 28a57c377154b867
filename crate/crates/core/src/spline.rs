//! Univariate B-spline spaces on [0,1] with uniform dyadic breakpoints.
//!
//! A space is determined by the degree `p`, the interelement continuity `k`
//! (so interior knots have multiplicity `p - k`) and the refinement level
//! `level` (grid size `2^-level`). Knot vectors are open (clamped), so the
//! first and last basis functions interpolate the boundary values.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Univariate spline space of degree `p` and continuity `k` on a uniform
/// grid with `2^level` elements.
#[derive(Debug, Clone)]
pub struct SplineSpace1D {
    degree: usize,
    continuity: i64,
    level: usize,
    knots: Vec<f64>,
    dim: usize,
}

impl SplineSpace1D {
    /// Builds the space with an open uniform knot vector. Interior
    /// breakpoints `i * 2^-level` carry multiplicity `p - k`.
    pub fn new(degree: usize, continuity: i64, level: usize) -> Result<Self> {
        if degree < 1 {
            return Err(Error::InvalidSplineParameters {
                p: degree,
                k: continuity,
                level,
                reason: "degree must be at least 1".into(),
            });
        }
        if continuity < -1 || continuity > degree as i64 - 1 {
            return Err(Error::InvalidSplineParameters {
                p: degree,
                k: continuity,
                level,
                reason: "continuity must satisfy -1 <= k <= p-1".into(),
            });
        }
        let p = degree;
        let mult = (p as i64 - continuity) as usize;
        let nel = 1usize << level;
        let mut knots = Vec::with_capacity(2 * (p + 1) + mult * (nel - 1));
        knots.extend(std::iter::repeat(0.0).take(p + 1));
        for i in 1..nel {
            let x = i as f64 / nel as f64;
            knots.extend(std::iter::repeat(x).take(mult));
        }
        knots.extend(std::iter::repeat(1.0).take(p + 1));
        let dim = knots.len() - p - 1;
        debug_assert_eq!(dim, (p + 1) + mult * (nel - 1));
        Ok(Self {
            degree,
            continuity,
            level,
            knots,
            dim,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn continuity(&self) -> i64 {
        self.continuity
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn num_elements(&self) -> usize {
        1usize << self.level
    }

    /// Parameter bounds of element `e`.
    pub fn element_bounds(&self, e: usize) -> (f64, f64) {
        let nel = self.num_elements() as f64;
        (e as f64 / nel, (e + 1) as f64 / nel)
    }

    /// Knot span index `i` with `knots[i] <= x < knots[i+1]` (right limit;
    /// the last nonempty span is used at `x = 1`).
    pub fn find_span(&self, x: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::PointOutsideDomain { x });
        }
        let p = self.degree;
        let n = self.dim;
        if x >= 1.0 {
            return Ok(n - 1);
        }
        let mut lo = p;
        let mut hi = n; // span index range [p, n-1]
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if x < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(lo)
    }

    /// Global index of the first basis function active on element `e`.
    pub fn element_first_basis(&self, e: usize) -> usize {
        let mult = (self.degree as i64 - self.continuity) as usize;
        e * mult
    }

    /// Evaluates the `p + 1` basis functions that are nonzero at `x`,
    /// together with their derivatives up to `max_deriv`. Returns the index
    /// of the first active function and a table `ders[d][j]` for the j-th
    /// active function. Derivatives at breakpoints are right limits (left
    /// limit at `x = 1`).
    pub fn eval_basis(&self, x: f64, max_deriv: usize) -> Result<(usize, Vec<Vec<f64>>)> {
        let span = self.find_span(x)?;
        let ders = self.ders_at_span(span, x, max_deriv);
        Ok((span - self.degree, ders))
    }

    /// Cox-de Boor basis derivatives at a known span (NURBS book A2.3).
    fn ders_at_span(&self, span: usize, x: f64, max_deriv: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let n = max_deriv.min(p);
        let u = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = x - u[span + 1 - j];
            right[j] = u[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; max_deriv + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0usize;
            let mut s2 = 1usize;
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as i64 - k as i64;
                let pk = (p - k) as i64;
                if r as i64 >= k as i64 {
                    a[s2][0] = a[s1][0] / ndu[(pk + 1) as usize][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk as usize];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as i64 - 1 <= pk {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    a[s2][j] = (a[s1][j] - a[s1][j - 1])
                        / ndu[(pk + 1) as usize][(rk + j as i64) as usize];
                    d += a[s2][j] * ndu[(rk + j as i64) as usize][pk as usize];
                }
                if r as i64 <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[(pk + 1) as usize][r];
                    d += a[s2][k] * ndu[r][pk as usize];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut r = p as f64;
        for k in 1..=n {
            for j in 0..=p {
                ders[k][j] *= r;
            }
            r *= (p - k) as f64;
        }
        ders
    }

    /// Gauss-Legendre rule with `points_per_element` nodes mapped to each
    /// element, grouped by element.
    pub fn quadrature_rule(&self, points_per_element: usize) -> Vec<Vec<(f64, f64)>> {
        let (nodes, weights) = gauss_legendre(points_per_element);
        (0..self.num_elements())
            .map(|e| {
                let (a, b) = self.element_bounds(e);
                let half = 0.5 * (b - a);
                let mid = 0.5 * (a + b);
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&t, &w)| (mid + half * t, half * w))
                    .collect()
            })
            .collect()
    }

    /// Two-scale prolongation: the sparse matrix `P` such that a spline with
    /// coefficients `c` on `self` equals the spline with coefficients `P c`
    /// on `fine`. Requires the same degree/continuity and `fine.level =
    /// self.level + 1`.
    pub fn prolongation_to(&self, fine: &SplineSpace1D) -> Result<CsrMatrix> {
        if fine.degree != self.degree
            || fine.continuity != self.continuity
            || fine.level != self.level + 1
        {
            return Err(Error::NotNested(format!(
                "expected same (p, k) and level {} on the fine space, got (p={}, k={}, level={})",
                self.level + 1,
                fine.degree,
                fine.continuity,
                fine.level
            )));
        }
        let p = self.degree;
        let mult = (p as i64 - self.continuity) as usize;
        let mut knots = self.knots.clone();
        // P starts as the identity and accumulates one Boehm insertion per
        // new knot (row-major dense; the spaces involved are small).
        let mut rows: Vec<Vec<f64>> = (0..self.dim)
            .map(|i| {
                let mut r = vec![0.0; self.dim];
                r[i] = 1.0;
                r
            })
            .collect();
        let nel_fine = fine.num_elements();
        for i in (1..nel_fine).step_by(2) {
            let t = i as f64 / nel_fine as f64;
            for _ in 0..mult {
                insert_knot(&mut knots, p, t, &mut rows);
            }
        }
        debug_assert_eq!(rows.len(), fine.dim);
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if v.abs() > 1e-300 {
                    triplets.push((i, j, v));
                }
            }
        }
        Ok(CsrMatrix::from_triplets(fine.dim, self.dim, &triplets))
    }

    /// Evaluates the spline with coefficient vector `coefs` at `x`, returning
    /// derivatives up to `max_deriv`.
    pub fn eval_coefs(&self, coefs: &[f64], x: f64, max_deriv: usize) -> Result<Vec<f64>> {
        assert_eq!(coefs.len(), self.dim);
        let (first, ders) = self.eval_basis(x, max_deriv)?;
        Ok(ders
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| v * coefs[first + j])
                    .sum()
            })
            .collect())
    }
}

/// Boehm single-knot insertion, updating both the knot vector and the rows
/// of the accumulated refinement matrix.
fn insert_knot(knots: &mut Vec<f64>, p: usize, t: f64, rows: &mut Vec<Vec<f64>>) {
    let n = knots.len() - p - 1;
    // span with knots[k] <= t < knots[k+1]
    let mut k = p;
    while k + 1 < n && knots[k + 1] <= t {
        k += 1;
    }
    let mut new_rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for i in 0..=n {
        if i + p <= k {
            new_rows.push(rows[i].clone());
        } else if i > k {
            new_rows.push(rows[i - 1].clone());
        } else {
            let a = (t - knots[i]) / (knots[i + p] - knots[i]);
            let mut r = vec![0.0; rows[0].len()];
            for j in 0..r.len() {
                r[j] = a * rows[i][j] + (1.0 - a) * rows[i - 1][j];
            }
            new_rows.push(r);
        }
    }
    *rows = new_rows;
    knots.insert(k + 1, t);
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre polynomial.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (pn, dpn) = legendre(n, x);
            let dx = pn / dpn;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dpn) = legendre(n, x);
        let w = 2.0 / ((1.0 - x * x) * dpn * dpn);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dimension_formula() {
        // (p=2, k=1, l=2) -> 3 + 1*3 = 6
        assert_eq!(SplineSpace1D::new(2, 1, 2).unwrap().dim(), 6);
        // (p=2, k=-1, l=1) -> 3 + 3*1 = 6
        assert_eq!(SplineSpace1D::new(2, -1, 1).unwrap().dim(), 6);
        // (p=4, k=1, l=3) -> 5 + 3*7 = 26
        assert_eq!(SplineSpace1D::new(4, 1, 3).unwrap().dim(), 26);
        for p in 1..=7usize {
            for k in -1..=(p as i64 - 1) {
                for level in 0..=4 {
                    let s = SplineSpace1D::new(p, k, level).unwrap();
                    let nel = 1usize << level;
                    assert_eq!(
                        s.dim(),
                        (p + 1) + ((p as i64 - k) as usize) * (nel - 1),
                        "p={p} k={k} level={level}"
                    );
                }
            }
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SplineSpace1D::new(0, -1, 0).is_err());
        assert!(SplineSpace1D::new(2, 2, 0).is_err());
        assert!(SplineSpace1D::new(2, -2, 0).is_err());
    }

    #[test]
    fn hat_function_peak() {
        let s = SplineSpace1D::new(1, 0, 1).unwrap();
        let (first, ders) = s.eval_basis(0.5, 0).unwrap();
        // At the breakpoint the middle hat function equals 1.
        let vals = &ders[0];
        let peak = vals.iter().cloned().fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-14);
        assert_eq!(first + vals.iter().position(|&v| v == peak).unwrap(), 1);
    }

    #[test]
    fn bernstein_oracle_single_element() {
        // p=2, k=1, l=0: one element, basis = Bernstein polynomials.
        let s = SplineSpace1D::new(2, 1, 0).unwrap();
        let x = 0.25;
        let (_, ders) = s.eval_basis(x, 0).unwrap();
        let bernstein = [
            (1.0 - x) * (1.0 - x),
            2.0 * x * (1.0 - x),
            x * x,
        ];
        for (v, b) in ders[0].iter().zip(bernstein) {
            assert_abs_diff_eq!(*v, b, epsilon = 1e-14);
        }
        // Spec example at x = 0.5: (0.25, 0.5, 0.25).
        let (_, ders) = s.eval_basis(0.5, 0).unwrap();
        assert_abs_diff_eq!(ders[0][0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(ders[0][1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(ders[0][2], 0.25, epsilon = 1e-14);
    }

    #[test]
    fn partition_of_unity_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(p, k, level) in &[(2i64, 1i64, 3usize), (3, 2, 2), (4, 1, 3), (2, -1, 2), (5, 4, 4)] {
            let s = SplineSpace1D::new(p as usize, k, level).unwrap();
            for _ in 0..1000 {
                let x: f64 = rng.random();
                let (_, ders) = s.eval_basis(x, 0).unwrap();
                let sum: f64 = ders[0].iter().sum();
                assert!((sum - 1.0).abs() < 1e-13, "p={p} k={k} sum={sum}");
                assert!(ders[0].iter().all(|&v| v >= -1e-14));
            }
        }
    }

    #[test]
    fn derivative_consistency_finite_differences() {
        let s = SplineSpace1D::new(3, 2, 2).unwrap();
        let h = 1e-6;
        for &x in &[0.1, 0.3, 0.61, 0.9] {
            let (f0, d0) = s.eval_basis(x, 1).unwrap();
            let (fm, dm) = s.eval_basis(x - h, 0).unwrap();
            let (fp, dp) = s.eval_basis(x + h, 0).unwrap();
            assert_eq!(f0, fm);
            assert_eq!(f0, fp);
            for j in 0..=3 {
                let fd = (dp[0][j] - dm[0][j]) / (2.0 * h);
                assert!((fd - d0[1][j]).abs() < 1e-4, "x={x} j={j}");
            }
        }
    }

    #[test]
    fn point_outside_domain_is_error() {
        let s = SplineSpace1D::new(2, 1, 1).unwrap();
        assert!(s.eval_basis(-0.1, 0).is_err());
        assert!(s.eval_basis(1.1, 0).is_err());
    }

    #[test]
    fn quadrature_midpoint_and_weights() {
        let s0 = SplineSpace1D::new(2, 1, 0).unwrap();
        let rule = s0.quadrature_rule(1);
        assert_eq!(rule.len(), 1);
        assert_abs_diff_eq!(rule[0][0].0, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rule[0][0].1, 1.0, epsilon = 1e-15);

        let s1 = SplineSpace1D::new(2, 1, 1).unwrap();
        let rule = s1.quadrature_rule(2);
        let total: f64 = rule.iter().flatten().map(|&(_, w)| w).sum();
        assert_eq!(rule.iter().map(|e| e.len()).sum::<usize>(), 4);
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_polynomial_exactness() {
        // q points integrate x^(2q-1) exactly.
        let s = SplineSpace1D::new(2, 1, 2).unwrap();
        for q in 1..=8usize {
            let rule = s.quadrature_rule(q);
            let m = 2 * q - 1;
            let quad: f64 = rule
                .iter()
                .flatten()
                .map(|&(x, w)| w * x.powi(m as i32))
                .sum();
            let exact = 1.0 / (m as f64 + 1.0);
            assert!((quad - exact).abs() < 1e-14, "q={q}: {quad} vs {exact}");
        }
    }

    #[test]
    fn prolongation_constant_and_hats() {
        let coarse = SplineSpace1D::new(1, 0, 0).unwrap();
        let fine = SplineSpace1D::new(1, 0, 1).unwrap();
        let p = coarse.prolongation_to(&fine).unwrap();
        let ones = vec![1.0; coarse.dim()];
        let lifted = p.matvec_vec(&ones);
        for v in lifted {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-14);
        }
        // Linear hat two-scale relation: weights 1 and 1/2.
        let e0 = p.matvec_vec(&[1.0, 0.0]);
        assert_abs_diff_eq!(e0[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e0[1], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(e0[2], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn prolongation_nestedness_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 2..=7usize {
            for level in 0..=4usize {
                let coarse = SplineSpace1D::new(p, p as i64 - 1, level).unwrap();
                let fine = SplineSpace1D::new(p, p as i64 - 1, level + 1).unwrap();
                let pm = coarse.prolongation_to(&fine).unwrap();
                let c: Vec<f64> = (0..coarse.dim()).map(|_| rng.random::<f64>() - 0.5).collect();
                let cf = pm.matvec_vec(&c);
                for _ in 0..100 {
                    let x: f64 = rng.random();
                    let vc = coarse.eval_coefs(&c, x, 0).unwrap()[0];
                    let vf = fine.eval_coefs(&cf, x, 0).unwrap()[0];
                    assert!((vc - vf).abs() < 1e-12, "p={p} level={level} x={x}");
                }
            }
        }
    }

    #[test]
    fn prolongation_rejects_non_nested() {
        let a = SplineSpace1D::new(2, 1, 1).unwrap();
        let b = SplineSpace1D::new(3, 2, 2).unwrap();
        assert!(a.prolongation_to(&b).is_err());
        let c = SplineSpace1D::new(2, 1, 3).unwrap();
        assert!(a.prolongation_to(&c).is_err());
    }
}

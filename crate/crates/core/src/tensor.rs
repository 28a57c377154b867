//! Tensor-product spline spaces with optional removal of boundary basis
//! functions per direction (the H^1_0 subspace on the parameter box).

use crate::error::{Error, Result};
use crate::spline::SplineSpace1D;

#[derive(Debug, Clone)]
pub struct TensorSpace {
    factors: Vec<SplineSpace1D>,
    masked: Vec<bool>,
}

impl TensorSpace {
    /// `masked[m]` removes the first and last basis function in direction
    /// `m`; with clamped knots these are exactly the functions with nonzero
    /// boundary trace.
    pub fn new(factors: Vec<SplineSpace1D>, masked: Vec<bool>) -> Self {
        assert!(!factors.is_empty() && factors.len() <= 2);
        assert_eq!(factors.len(), masked.len());
        Self { factors, masked }
    }

    pub fn unmasked(factors: Vec<SplineSpace1D>) -> Self {
        let masked = vec![false; factors.len()];
        Self::new(factors, masked)
    }

    pub fn h10(factors: Vec<SplineSpace1D>) -> Self {
        let masked = vec![true; factors.len()];
        Self::new(factors, masked)
    }

    pub fn d(&self) -> usize {
        self.factors.len()
    }

    pub fn factor(&self, m: usize) -> &SplineSpace1D {
        &self.factors[m]
    }

    pub fn factors(&self) -> &[SplineSpace1D] {
        &self.factors
    }

    pub fn is_masked(&self, m: usize) -> bool {
        self.masked[m]
    }

    /// Retained dimension in direction `m`.
    pub fn dim_in(&self, m: usize) -> usize {
        let full = self.factors[m].dim();
        if self.masked[m] {
            full - 2
        } else {
            full
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        (0..self.d()).map(|m| self.dim_in(m)).collect()
    }

    pub fn dim(&self) -> usize {
        (0..self.d()).map(|m| self.dim_in(m)).product()
    }

    pub fn full_dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim()).product()
    }

    /// Offset of retained indices inside the full per-direction numbering.
    pub fn offset_in(&self, m: usize) -> usize {
        usize::from(self.masked[m])
    }

    /// Lexicographic (row-major, first direction slowest) flattening of a
    /// retained multi-index.
    pub fn flat_index(&self, multi: &[usize]) -> Result<usize> {
        if multi.len() != self.d() {
            return Err(Error::InvalidIndex {
                index: multi.to_vec(),
            });
        }
        let mut flat = 0usize;
        for m in 0..self.d() {
            if multi[m] >= self.dim_in(m) {
                return Err(Error::InvalidIndex {
                    index: multi.to_vec(),
                });
            }
            flat = flat * self.dim_in(m) + multi[m];
        }
        Ok(flat)
    }

    pub fn multi_index(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.dim() {
            return Err(Error::InvalidIndex { index: vec![flat] });
        }
        let mut multi = vec![0usize; self.d()];
        for m in (0..self.d()).rev() {
            multi[m] = flat % self.dim_in(m);
            flat /= self.dim_in(m);
        }
        Ok(multi)
    }

    /// Converts a full (unmasked) per-direction multi-index to a retained
    /// flat index; errors on removed (boundary) functions.
    pub fn retained_from_full(&self, full_multi: &[usize]) -> Result<usize> {
        let mut multi = vec![0usize; self.d()];
        for m in 0..self.d() {
            let off = self.offset_in(m);
            let idx = full_multi[m];
            if idx < off || idx >= off + self.dim_in(m) {
                return Err(Error::InvalidIndex {
                    index: full_multi.to_vec(),
                });
            }
            multi[m] = idx - off;
        }
        self.flat_index(&multi)
    }

    /// The same space without boundary masking.
    pub fn without_mask(&self) -> TensorSpace {
        TensorSpace::unmasked(self.factors.clone())
    }

    /// Indices of the retained basis functions inside the full tensor
    /// numbering (used to restrict matrices assembled on the full space).
    pub fn retained_full_indices(&self) -> Vec<usize> {
        let full_dims: Vec<usize> = self.factors.iter().map(|f| f.dim()).collect();
        let mut out = Vec::with_capacity(self.dim());
        match self.d() {
            1 => {
                let off = self.offset_in(0);
                for i in 0..self.dim_in(0) {
                    out.push(i + off);
                }
            }
            2 => {
                let (o0, o1) = (self.offset_in(0), self.offset_in(1));
                for i0 in 0..self.dim_in(0) {
                    for i1 in 0..self.dim_in(1) {
                        out.push((i0 + o0) * full_dims[1] + (i1 + o1));
                    }
                }
            }
            _ => unreachable!(),
        }
        out
    }

    /// Evaluates the spline field with retained coefficient vector `coefs`
    /// at the parameter point, returning value, parametric gradient and
    /// parametric Hessian (orders up to `max_deriv`).
    pub fn eval_field(
        &self,
        coefs: &[f64],
        xhat: &[f64],
        max_deriv: usize,
    ) -> Result<FieldValue> {
        assert_eq!(coefs.len(), self.dim());
        let d = self.d();
        let mut per_dir = Vec::with_capacity(d);
        for m in 0..d {
            per_dir.push(self.factors[m].eval_basis(xhat[m], max_deriv)?);
        }
        let mut out = FieldValue::default();
        match d {
            1 => {
                let (first, ders) = &per_dir[0];
                let off = self.offset_in(0);
                for j in 0..=self.factors[0].degree() {
                    let g = first + j;
                    if g < off || g >= off + self.dim_in(0) {
                        continue;
                    }
                    let c = coefs[g - off];
                    out.value += c * ders[0][j];
                    if max_deriv >= 1 {
                        out.grad[0] += c * ders[1][j];
                    }
                    if max_deriv >= 2 {
                        out.hess[0][0] += c * ders[2][j];
                    }
                }
            }
            2 => {
                let (f0, d0) = &per_dir[0];
                let (f1, d1) = &per_dir[1];
                let (o0, o1) = (self.offset_in(0), self.offset_in(1));
                let n1 = self.dim_in(1);
                for j0 in 0..=self.factors[0].degree() {
                    let g0 = f0 + j0;
                    if g0 < o0 || g0 >= o0 + self.dim_in(0) {
                        continue;
                    }
                    for j1 in 0..=self.factors[1].degree() {
                        let g1 = f1 + j1;
                        if g1 < o1 || g1 >= o1 + n1 {
                            continue;
                        }
                        let c = coefs[(g0 - o0) * n1 + (g1 - o1)];
                        out.value += c * d0[0][j0] * d1[0][j1];
                        if max_deriv >= 1 {
                            out.grad[0] += c * d0[1][j0] * d1[0][j1];
                            out.grad[1] += c * d0[0][j0] * d1[1][j1];
                        }
                        if max_deriv >= 2 {
                            out.hess[0][0] += c * d0[2][j0] * d1[0][j1];
                            out.hess[0][1] += c * d0[1][j0] * d1[1][j1];
                            out.hess[1][1] += c * d0[0][j0] * d1[2][j1];
                        }
                    }
                }
                out.hess[1][0] = out.hess[0][1];
            }
            _ => unreachable!(),
        }
        Ok(out)
    }
}

/// Value and parametric derivatives of a spline field at one point.
#[derive(Debug, Clone, Copy, Default)]
pub struct FieldValue {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn space(p: usize, k: i64, level: usize, masked: bool) -> TensorSpace {
        let f = || SplineSpace1D::new(p, k, level).unwrap();
        TensorSpace::new(vec![f(), f()], vec![masked, masked])
    }

    #[test]
    fn flat_index_lexicographic() {
        let s = space(2, 1, 0, false); // dims (3,3)
        assert_eq!(s.dims(), vec![3, 3]);
        assert_eq!(s.flat_index(&[0, 0]).unwrap(), 0);
        assert_eq!(s.flat_index(&[1, 2]).unwrap(), 5);
    }

    #[test]
    fn round_trip_bijection() {
        let s = space(2, 1, 2, true);
        for flat in 0..s.dim() {
            let multi = s.multi_index(flat).unwrap();
            assert_eq!(s.flat_index(&multi).unwrap(), flat);
        }
    }

    #[test]
    fn masked_index_errors() {
        let s = space(2, 1, 1, true); // full per-dir dim 4, retained 2
        assert!(s.retained_from_full(&[0, 1]).is_err());
        assert!(s.retained_from_full(&[3, 1]).is_err());
        assert_eq!(s.retained_from_full(&[1, 1]).unwrap(), 0);
        assert!(s.flat_index(&[2, 0]).is_err());
    }

    #[test]
    fn masked_field_vanishes_on_boundary() {
        let s = space(3, 2, 2, true);
        let coefs: Vec<f64> = (0..s.dim()).map(|i| 1.0 + (i % 5) as f64).collect();
        for &t in &[0.0, 0.33, 1.0] {
            for pt in [[0.0, t], [1.0, t], [t, 0.0], [t, 1.0]] {
                let v = s.eval_field(&coefs, &pt, 0).unwrap().value;
                assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn unmasked_dimension_is_product() {
        let s = space(3, 2, 2, false);
        assert_eq!(s.dim(), s.factor(0).dim() * s.factor(1).dim());
        let m = space(3, 2, 2, true);
        assert_eq!(m.dim(), (m.factor(0).dim() - 2) * (m.factor(1).dim() - 2));
        assert_eq!(m.full_dim(), s.dim());
    }
}

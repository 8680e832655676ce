//! Dense symmetric positive definite helpers.
//!
//! Coefficient dimensions in this crate are small (single digits to low
//! hundreds), so a plain Cholesky factorization covers every need: prior
//! densities, proposal sampling, consensus weight inversion, and the weighted
//! combination solve.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Array2<f64>,
}

impl Cholesky {
    /// Factor `matrix = L Lᵀ`. Fails if the matrix is not symmetric or a
    /// pivot is non-positive.
    pub fn new(matrix: &ArrayView2<f64>) -> Result<Self> {
        let n = matrix.nrows();
        if n == 0 || matrix.ncols() != n {
            return Err(Error::NotPositiveDefinite(format!(
                "expected square matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if !is_symmetric(matrix) {
            return Err(Error::NotPositiveDefinite("matrix is not symmetric".into()));
        }
        let mut lower = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let mut sum = matrix[(i, j)];
                for k in 0..j {
                    sum -= lower[(i, k)] * lower[(j, k)];
                }
                if i == j {
                    if !(sum > 0.0) || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite(format!(
                            "pivot {sum:e} at index {i}"
                        )));
                    }
                    lower[(i, j)] = sum.sqrt();
                } else {
                    lower[(i, j)] = sum / lower[(j, j)];
                }
            }
        }
        Ok(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// log det(A) = 2 Σ log L_ii.
    pub fn log_det(&self) -> f64 {
        (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<f64>() * 2.0
    }

    /// Solve `L z = b` (forward substitution).
    pub fn solve_lower(&self, b: &ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut z = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut sum = b[i];
            for k in 0..i {
                sum -= self.lower[(i, k)] * z[k];
            }
            z[i] = sum / self.lower[(i, i)];
        }
        z
    }

    /// Solve `A x = b` via forward then back substitution.
    pub fn solve(&self, b: &ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut x = self.solve_lower(b);
        for i in (0..n).rev() {
            let mut sum = x[i];
            for k in (i + 1)..n {
                sum -= self.lower[(k, i)] * x[k];
            }
            x[i] = sum / self.lower[(i, i)];
        }
        x
    }

    /// `vᵀ A⁻¹ v`, evaluated as `‖L⁻¹ v‖²`.
    pub fn quad_form_inv(&self, v: &ArrayView1<f64>) -> f64 {
        let z = self.solve_lower(v);
        z.iter().map(|zi| zi * zi).sum()
    }

    /// `L z` (used to turn standard normals into correlated steps).
    pub fn mul_lower(&self, z: &ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut out = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut sum = 0.0;
            for k in 0..=i {
                sum += self.lower[(i, k)] * z[k];
            }
            out[i] = sum;
        }
        out
    }

    /// `A⁻¹`, symmetrized to remove solve roundoff.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.dim();
        let mut inv = Array2::<f64>::zeros((n, n));
        let mut unit = Array1::<f64>::zeros(n);
        for j in 0..n {
            unit[j] = 1.0;
            let col = self.solve(&unit.view());
            inv.column_mut(j).assign(&col);
            unit[j] = 0.0;
        }
        symmetrize(&mut inv);
        inv
    }
}

/// Relative symmetry test with a fixed 1e-8 tolerance.
pub fn is_symmetric(a: &ArrayView2<f64>) -> bool {
    let n = a.nrows();
    if a.ncols() != n {
        return false;
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-8 * scale {
                return false;
            }
        }
    }
    true
}

/// Average out floating asymmetry in place.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Induced 1-norm (max absolute column sum).
pub fn one_norm(a: &ArrayView2<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        best = best.max(s);
    }
    best
}

/// 1-norm condition estimate `‖A‖₁ ‖A⁻¹‖₁` from an existing factorization.
pub fn condition_estimate(a: &ArrayView2<f64>, chol: &Cholesky) -> f64 {
    let inv = chol.inverse();
    one_norm(a) * one_norm(&inv.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn factors_and_solves_a_known_spd_matrix() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.5], [0.6, 1.5, 3.0]];
        let chol = Cholesky::new(&a.view()).unwrap();
        let b = array![1.0, -2.0, 0.5];
        let x = chol.solve(&b.view());
        let resid = a.dot(&x) - &b;
        assert!(resid.iter().all(|r| r.abs() < 1e-12));
        // det(A) computed by cofactor expansion.
        let det: f64 = 4.0 * (5.0 * 3.0 - 1.5 * 1.5) - 2.0 * (2.0 * 3.0 - 1.5 * 0.6)
            + 0.6 * (2.0 * 1.5 - 5.0 * 0.6);
        assert!((chol.log_det() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn inverse_matches_solve() {
        let a = array![[2.0, 0.3], [0.3, 1.0]];
        let chol = Cholesky::new(&a.view()).unwrap();
        let inv = chol.inverse();
        let prod = a.dot(&inv);
        assert!((prod[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((prod[(1, 1)] - 1.0).abs() < 1e-12);
        assert!(prod[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let asym = array![[1.0, 0.5], [0.2, 1.0]];
        assert!(matches!(
            Cholesky::new(&asym.view()),
            Err(Error::NotPositiveDefinite(_))
        ));
        let indef = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(matches!(
            Cholesky::new(&indef.view()),
            Err(Error::NotPositiveDefinite(_))
        ));
    }

    #[test]
    fn quad_form_matches_explicit_inverse() {
        let a = array![[3.0, 1.0], [1.0, 2.0]];
        let chol = Cholesky::new(&a.view()).unwrap();
        let v = array![0.7, -1.3];
        let explicit = v.dot(&chol.inverse().dot(&v));
        assert!((chol.quad_form_inv(&v.view()) - explicit).abs() < 1e-12);
    }
}

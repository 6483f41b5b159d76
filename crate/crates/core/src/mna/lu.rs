//! Dense LU factorisation with partial pivoting.

use super::{MnaError, MnaSystem, Scalar};

/// Pivots smaller than this are treated as structural singularity.
pub const PIVOT_THRESHOLD: f64 = 1e-300;

/// Packed `L\U` factors (unit lower diagonal implied) and the row permutation.
#[derive(Debug, Clone)]
pub struct LuFactors<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> LuFactors<T> {
    /// Factors a row-major `n×n` matrix.
    pub fn factor(mut a: Vec<T>, n: usize) -> Result<Self, MnaError> {
        assert_eq!(a.len(), n * n, "matrix is not {n}x{n}");
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut pivot_row = k;
            let mut pivot_mag = a[k * n + k].magnitude();
            for r in k + 1..n {
                let m = a[r * n + k].magnitude();
                if m > pivot_mag {
                    pivot_mag = m;
                    pivot_row = r;
                }
            }
            if !(pivot_mag >= PIVOT_THRESHOLD) {
                return Err(MnaError::SingularMatrix { row: perm[k] });
            }
            if pivot_row != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let factor = a[r * n + k] / pivot;
                if factor == T::zero() {
                    continue;
                }
                a[r * n + k] = factor;
                for c in k + 1..n {
                    let upper = a[k * n + c];
                    a[r * n + c] -= factor * upper;
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = y[i];
            for j in 0..i {
                acc -= self.lu[i * n + j] * y[j];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for j in i + 1..n {
                acc -= self.lu[i * n + j] * y[j];
            }
            y[i] = acc / self.lu[i * n + i];
        }
        y
    }
}

/// Solves `A·x = b` for an assembled system.
pub fn lu_solve<T: Scalar>(system: &MnaSystem<T>) -> Result<Vec<T>, MnaError> {
    for v in system.matrix.iter().chain(system.rhs.iter()) {
        if !v.is_finite() {
            return Err(MnaError::NonFinite);
        }
    }
    let factors = LuFactors::factor(system.matrix.clone(), system.dim)?;
    Ok(factors.solve(&system.rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn residual(a: &[f64], x: &[f64], b: &[f64]) -> f64 {
        let n = b.len();
        (0..n)
            .map(|i| ((0..n).map(|j| a[i * n + j] * x[j]).sum::<f64>() - b[i]).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn identity() {
        let n = 4;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = 1.0;
        }
        let b = vec![1.0, -2.0, 3.5, 0.25];
        let x = LuFactors::factor(a, n).unwrap().solve(&b);
        assert_eq!(x, b);
    }

    #[test]
    fn needs_pivoting() {
        let a = vec![0.0, 2.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let b = vec![4.0, 5.0, 6.0];
        let x = LuFactors::factor(a.clone(), 3).unwrap().solve(&b);
        assert!(residual(&a, &x, &b) < 1e-12);
    }

    #[test]
    fn hilbert_like_residual() {
        let n = 6;
        let a: Vec<f64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                1.0 / (1.0 + (i as f64 - j as f64).abs()) + if i == j { 2.0 } else { 0.0 }
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin() * 10.0).collect();
        let x = LuFactors::factor(a.clone(), n).unwrap().solve(&b);
        let bmax = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        assert!(residual(&a, &x, &b) <= 1e-10 * bmax);
    }

    #[test]
    fn singular_detected() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(matches!(
            LuFactors::factor(a, 2),
            Err(MnaError::SingularMatrix { .. })
        ));
        let zero_row = vec![1.0, 0.0, 0.0, 0.0];
        assert!(LuFactors::factor(zero_row, 2).is_err());
    }

    #[test]
    fn complex_system() {
        let j = Complex64::new(0.0, 1.0);
        let a = vec![Complex64::new(1.0, 0.0), j, -j, Complex64::new(2.0, 0.0)];
        let b = vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, 2.0)];
        let x = LuFactors::factor(a.clone(), 2).unwrap().solve(&b);
        for i in 0..2 {
            let r = a[i * 2] * x[0] + a[i * 2 + 1] * x[1] - b[i];
            assert!(r.norm() < 1e-14);
        }
    }
}

//! Dense linear algebra for the small matrices that show up here (n <= 5).

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::MAX_LIFT;

pub type Vector = [f64; MAX_LIFT];

/// Square matrix of runtime size `n <= MAX_LIFT` stored in a fixed buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallMat {
    n: usize,
    a: [[f64; MAX_LIFT]; MAX_LIFT],
}

impl SmallMat {
    pub fn zeros(n: usize) -> Self {
        assert!(n <= MAX_LIFT, "matrix dimension {n} exceeds {MAX_LIFT}");
        SmallMat { n, a: [[0.0; MAX_LIFT]; MAX_LIFT] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
    }

    /// `u^T A w`.
    pub fn bilinear(&self, u: &[f64], w: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for j in 0..self.n {
                row += self.a[i][j] * w[j];
            }
            s += u[i] * row;
        }
        s
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vector {
        let mut out = [0.0; MAX_LIFT];
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|j| self.a[i][j] * v[j]).sum();
        }
        out
    }

    fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                m = m.max(self.a[i][j].abs());
            }
        }
        m
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu> {
        let n = self.n;
        let mut a = self.a;
        let mut perm = [0usize; MAX_LIFT];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i;
        }
        let mut sign = 1.0;
        let scale = self.max_abs();
        let mut min_pivot = f64::INFINITY;
        let mut max_pivot = 0.0f64;
        for k in 0..n {
            let mut p = k;
            for i in k + 1..n {
                if a[i][k].abs() > a[p][k].abs() {
                    p = i;
                }
            }
            if p != k {
                a.swap(p, k);
                perm.swap(p, k);
                sign = -sign;
            }
            let piv = a[k][k];
            min_pivot = min_pivot.min(piv.abs());
            max_pivot = max_pivot.max(piv.abs());
            if scale == 0.0 || piv.abs() <= 1e-14 * scale {
                let det = sign * (0..=k).map(|i| a[i][i]).product::<f64>();
                return Err(Error::Singular {
                    det,
                    condition: if min_pivot > 0.0 { max_pivot / min_pivot } else { f64::INFINITY },
                });
            }
            for i in k + 1..n {
                let f = a[i][k] / piv;
                a[i][k] = f;
                for j in k + 1..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        Ok(Lu { n, a, perm, sign, pivot_ratio: max_pivot / min_pivot })
    }

    pub fn determinant(&self) -> f64 {
        match self.lu() {
            Ok(lu) => lu.determinant(),
            Err(Error::Singular { det, .. }) => det,
            Err(_) => 0.0,
        }
    }

    pub fn inverse(&self) -> Result<SmallMat> {
        let lu = self.lu()?;
        let mut inv = SmallMat::zeros(self.n);
        for j in 0..self.n {
            let mut e = [0.0; MAX_LIFT];
            e[j] = 1.0;
            let col = lu.solve(&e);
            for i in 0..self.n {
                inv.a[i][j] = col[i];
            }
        }
        Ok(inv)
    }

    /// Lower Cholesky factor, `None` if the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<SmallMat> {
        let n = self.n;
        let mut l = SmallMat::zeros(n);
        for j in 0..n {
            let mut d = self.a[j][j];
            for k in 0..j {
                d -= l.a[j][k] * l.a[j][k];
            }
            if !(d > 0.0) {
                return None;
            }
            let djj = d.sqrt();
            l.a[j][j] = djj;
            for i in j + 1..n {
                let mut s = self.a[i][j];
                for k in 0..j {
                    s -= l.a[i][k] * l.a[j][k];
                }
                l.a[i][j] = s / djj;
            }
        }
        Some(l)
    }

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
    pub fn symmetric_eigenvalues(&self) -> Vector {
        let n = self.n;
        let mut a = self.a;
        for _sweep in 0..64 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += a[i][j] * a[i][j];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev = [f64::INFINITY; MAX_LIFT];
        for i in 0..n {
            ev[i] = a[i][i];
        }
        ev[..n].sort_by(|x, y| x.partial_cmp(y).unwrap_or(core::cmp::Ordering::Equal));
        ev
    }
}

/// Packed LU factors of a [`SmallMat`].
#[derive(Debug, Clone, Copy)]
pub struct Lu {
    n: usize,
    a: [[f64; MAX_LIFT]; MAX_LIFT],
    perm: [usize; MAX_LIFT],
    sign: f64,
    pivot_ratio: f64,
}

impl Lu {
    pub fn determinant(&self) -> f64 {
        self.sign * (0..self.n).map(|i| self.a[i][i]).product::<f64>()
    }

    /// Ratio of largest to smallest pivot; a cheap conditioning indicator.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve(&self, b: &[f64]) -> Vector {
        let n = self.n;
        let mut y = [0.0; MAX_LIFT];
        for i in 0..n {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.a[i][j] * y[j];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s -= self.a[i][j] * y[j];
            }
            y[i] = s / self.a[i][i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_inverse() {
        let m = SmallMat::from_fn(3, |i, j| [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]][i][j]);
        let lu = m.lu().unwrap();
        let x = lu.solve(&[1.0, 2.0, 3.0]);
        let back = m.mul_vec(&x);
        for (i, b) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((back[i] - b).abs() < 1e-14);
        }
        let inv = m.inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m.get(i, k) * inv.get(k, j)).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let m = SmallMat::from_fn(2, |_, _| 1.0);
        assert!(matches!(m.lu(), Err(Error::Singular { .. })));
    }

    #[test]
    fn lorentzian_determinant() {
        // diag(1, 1) spatial block with omega = (-1, 0), lambda = 0
        let m = SmallMat::from_fn(3, |i, j| [[1.0, 0.0, -1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]][i][j]);
        assert!((m.determinant() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn jacobi_eigenvalues() {
        let m = SmallMat::from_fn(2, |i, j| [[2.0, 1.0], [1.0, 2.0]][i][j]);
        let ev = m.symmetric_eigenvalues();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
        let m = SmallMat::from_fn(3, |i, j| [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]][i][j]);
        let ev = m.symmetric_eigenvalues();
        let s2 = 2.0f64.sqrt();
        for (e, want) in ev.iter().zip([2.0 - s2, 2.0, 2.0 + s2]) {
            assert!((e - want).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = SmallMat::from_fn(2, |i, j| [[1.0, 2.0], [2.0, 1.0]][i][j]);
        assert!(m.cholesky().is_none());
        let m = SmallMat::from_fn(2, |i, j| [[4.0, 2.0], [2.0, 3.0]][i][j]);
        let l = m.cholesky().unwrap();
        assert!((l.get(0, 0) - 2.0).abs() < 1e-15 && (l.get(1, 1) - 2.0f64.sqrt()).abs() < 1e-15);
    }
}

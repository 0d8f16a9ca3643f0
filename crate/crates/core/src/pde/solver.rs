//! Banded SPD storage with a direct band Cholesky and a Jacobi-preconditioned CG.

use crate::error::{Error, Result};

/// Symmetric matrix stored by its lower band: `lower[i][k] = A[i][i − k]`.
#[derive(Debug, Clone)]
pub struct BandedSpd {
    n: usize,
    bandwidth: usize,
    lower: Vec<f64>,
}

impl BandedSpd {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self {
            n,
            bandwidth,
            lower: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    #[inline]
    fn idx(&self, i: usize, k: usize) -> usize {
        i * (self.bandwidth + 1) + k
    }

    /// Adds `v` to `A[i][j]` (and implicitly `A[j][i]`). Call once per unordered pair.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        assert!(k <= self.bandwidth, "entry ({i}, {j}) outside the band");
        let idx = self.idx(hi, k);
        self.lower[idx] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        if k > self.bandwidth {
            0.0
        } else {
            self.lower[self.idx(hi, k)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.lower[self.idx(i, 0)]).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.n {
            let kmax = self.bandwidth.min(i);
            let mut acc = self.lower[self.idx(i, 0)] * x[i];
            for k in 1..=kmax {
                let a = self.lower[self.idx(i, k)];
                if a != 0.0 {
                    acc += a * x[i - k];
                    y[i - k] += a * x[i];
                }
            }
            y[i] += acc;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// `‖A x − b‖₂ / ‖b‖₂` (absolute residual when `b = 0`).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.matvec(x, &mut ax);
        let r = ax.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nb > 0.0 {
            r / nb
        } else {
            r
        }
    }

    /// Band Cholesky `A = L Lᵀ`; the factor has the same band.
    pub fn factor(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bandwidth;
        let mut l = self.lower.clone();
        let at = |i: usize, k: usize| i * (bw + 1) + k;
        for j in 0..n {
            // diagonal
            let mut d = l[at(j, 0)];
            for k in 1..=bw.min(j) {
                let v = l[at(j, k)];
                d -= v * v;
            }
            if !(d > 0.0) {
                return Err(Error::SolverFailure {
                    residual: f64::INFINITY,
                });
            }
            let ljj = d.sqrt();
            l[at(j, 0)] = ljj;
            // column j below the diagonal: rows i = j+1 ..= j+bw
            for i in (j + 1)..n.min(j + bw + 1) {
                let mut s = l[at(i, i - j)];
                // Σ_k L[i][k] L[j][k] over k < j within both bands
                let kmin = i.saturating_sub(bw);
                for k in kmin..j {
                    s -= l[at(i, i - k)] * l[at(j, j - k)];
                }
                l[at(i, i - j)] = s / ljj;
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let at = |i: usize, k: usize| i * (bw + 1) + k;
        // L y = b
        for i in 0..n {
            let mut s = b[i];
            for k in 1..=bw.min(i) {
                s -= self.l[at(i, k)] * b[i - k];
            }
            b[i] = s / self.l[at(i, 0)];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in 1..=bw.min(n - 1 - i) {
                s -= self.l[at(i + k, k)] * b[i + k];
            }
            b[i] = s / self.l[at(i, 0)];
        }
    }
}

/// Jacobi-preconditioned conjugate gradients to a relative residual of `tol`.
pub fn conjugate_gradient(a: &BandedSpd, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.dim();
    let mut x = vec![0.0; n];
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if nb == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for _ in 0..max_iter {
        a.matvec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * nb {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure {
        residual: a.relative_residual(&x, b),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> BandedSpd {
        let mut a = BandedSpd::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 2.5);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i > 1 {
                a.add(i, i - 2, 0.2);
            }
        }
        a
    }

    #[test]
    fn band_cholesky_matches_dense() {
        let a = laplacian_1d(9);
        let b: Vec<f64> = (0..9).map(|i| (i as f64).sin() + 1.0).collect();
        let mut x = b.clone();
        a.factor().unwrap().solve_in_place(&mut x);
        assert!(a.relative_residual(&x, &b) < 1e-14);
        let dense = a
            .to_dense()
            .cholesky()
            .unwrap()
            .solve(&nalgebra::DVector::from_vec(b.clone()));
        for i in 0..9 {
            assert!((dense[i] - x[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn cg_converges() {
        let a = laplacian_1d(30);
        let b: Vec<f64> = (0..30).map(|i| (i as f64 * 0.3).cos()).collect();
        let x = conjugate_gradient(&a, &b, 1e-12, 500).unwrap();
        assert!(a.relative_residual(&x, &b) <= 1e-12);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let mut a = BandedSpd::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.factor(), Err(Error::SolverFailure { .. })));
    }
}

//! Dense symmetric linear algebra.
//!
//! Everything the estimators need reduces to three kernels: a Cholesky
//! factorization, a cyclic Jacobi eigensolver for symmetric matrices, and the
//! Cholesky reduction of the generalized problem `H v = λ Σ⁻¹ v` to a standard
//! symmetric one. `Σ⁻¹` is never formed; it is applied through triangular
//! solves with the cached factor of `Σ`.

use std::io::{BufRead, Write};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::projector::RankRProjector;

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Jacobi stops once the off-diagonal Frobenius norm is below this fraction of `‖A‖_F`.
pub const JACOBI_TOL: f64 = 1e-12;

/// Symmetric positive (semi)definite matrix with a write-once Cholesky cache.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
    chol: OnceLock<DMatrix<f64>>,
}

impl SpdMatrix {
    /// Wraps a square matrix, replacing it by `(A + Aᵀ)/2`.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dims("SpdMatrix::new", a.nrows(), a.ncols()));
        }
        if a.nrows() == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be >= 1".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let entries = (&a + a.transpose()) * 0.5;
        Ok(Self {
            entries,
            chol: OnceLock::new(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: DMatrix::identity(dim, dim),
            chol: OnceLock::new(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|j| (0..n).all(|i| i == j || self.entries[(i, j)] == 0.0))
    }

    /// Lower Cholesky factor, computed on first use and cached.
    pub fn cholesky(&self) -> Result<&DMatrix<f64>> {
        if let Some(l) = self.chol.get() {
            return Ok(l);
        }
        let l = cholesky(&self.entries)?;
        let _ = self.chol.set(l);
        Ok(self.chol.get().expect("cholesky cache was just set"))
    }

    /// `Σ⁻¹ b` through two triangular solves with the cached factor.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.dim() {
            return Err(Error::dims("SpdMatrix::solve", self.dim(), b.nrows()));
        }
        let l = self.cholesky()?;
        let y = l
            .solve_lower_triangular(b)
            .ok_or(Error::NotPositiveDefinite { pivot: 0 })?;
        l.transpose()
            .solve_upper_triangular(&y)
            .ok_or(Error::NotPositiveDefinite { pivot: 0 })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.solve(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
        Ok(m.column(0).into_owned())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

/// Plain Cholesky `A = L Lᵀ` on the lower triangle of `a`.
///
/// A pivot at or below `dim · 1e-14 · max_i A_ii` is reported as
/// [`Error::NotPositiveDefinite`] with its zero-based index.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("cholesky", n, a.ncols()));
    }
    let max_diag = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
    let threshold = n as f64 * 1e-14 * max_diag;
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > threshold) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns.
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi eigensolver.
///
/// Sweeps over all `(p, q)` pairs until the off-diagonal Frobenius norm drops
/// below `1e-12 · ‖A‖_F`. Equal eigenvalues keep the order in which Jacobi
/// leaves them on the diagonal.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dims("sym_eig", n, a.ncols()));
    }
    // row-major working copy, symmetrized
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() {
        return Err(Error::InvalidArgument("sym_eig input has non-finite entries".into()));
    }
    let target = JACOBI_TOL * norm;

    let off_norm = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                s += m[p * n + q] * m[p * n + q];
            }
        }
        (2.0 * s).sqrt()
    };

    let mut sweep = 0;
    while norm != 0.0 && off_norm(&m) > target {
        if sweep == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { sweeps: sweep });
        }
        sweep += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                // after a few sweeps, drop rotations that cannot change the diagonal
                if sweep > 4
                    && (app.abs() + 100.0 * apq.abs() == app.abs())
                    && (aqq.abs() + 100.0 * apq.abs() == aqq.abs())
                {
                    m[p * n + q] = 0.0;
                    m[q * n + p] = 0.0;
                    continue;
                }
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    let new_kp = c * akp - s * akq;
                    let new_kq = s * akp + c * akq;
                    m[k * n + p] = new_kp;
                    m[p * n + k] = new_kp;
                    m[k * n + q] = new_kq;
                    m[q * n + k] = new_kq;
                }
                m[p * n + p] = app - t * apq;
                m[q * n + q] = aqq + t * apq;
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let vectors = DMatrix::from_fn(n, n, |row, col| v[row * n + order[col]]);
    Ok(SymEig { values, vectors })
}

/// Generalized eigenpairs of `(H, Σ⁻¹)`: `H v_i = λ_i Σ⁻¹ v_i`, `v_iᵀ Σ⁻¹ v_j = δ_ij`.
#[derive(Debug, Clone)]
pub struct GeneralizedEigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl GeneralizedEigenPairs {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `tail_sums[r] = Σ_{i>r} λ_i` for `r = 0..=d`.
    pub fn tail_sums(&self) -> Vec<f64> {
        tail_sums(&self.values)
    }
}

/// Suffix sums `t[r] = Σ_{i≥r} values[i]`, with `t[len] = 0`.
pub fn tail_sums(values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len() + 1];
    for i in (0..values.len()).rev() {
        out[i] = out[i + 1] + values[i];
    }
    out
}

/// Solves `H v = λ Σ⁻¹ v` by reduction to `Lᵀ H L w = λ w` with `Σ = L Lᵀ`.
///
/// Eigenvalues in `[−1e-10 λ_max, 0)` are set to zero; anything more negative
/// means `H` was not PSD and is an error.
pub fn generalized_eig(h: &SpdMatrix, sigma: &SpdMatrix) -> Result<GeneralizedEigenPairs> {
    if h.dim() != sigma.dim() {
        return Err(Error::dims("generalized_eig", sigma.dim(), h.dim()));
    }
    let l = sigma.cholesky()?;
    let reduced = l.transpose() * h.matrix() * l;
    let SymEig { mut values, vectors } = sym_eig(&reduced)?;
    let lambda_max = values.first().copied().unwrap_or(0.0).max(0.0);
    let tol = 1e-10 * lambda_max;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v >= -tol {
                *v = 0.0;
            } else {
                return Err(Error::NegativeEigenvalue { value: *v, tol });
            }
        }
    }
    Ok(GeneralizedEigenPairs {
        values,
        vectors: l * vectors,
    })
}

/// `trace(Σ (I − Pᵀ) H (I − P))`, the Poincaré-type error bound for projector `P`.
pub fn trace_quadratic(sigma: &SpdMatrix, h: &SpdMatrix, p: &RankRProjector) -> Result<f64> {
    let d = sigma.dim();
    if h.dim() != d {
        return Err(Error::dims("trace_quadratic (H)", d, h.dim()));
    }
    if p.dim() != d {
        return Err(Error::dims("trace_quadratic (P)", d, p.dim()));
    }
    let q = DMatrix::<f64>::identity(d, d) - p.matrix();
    let hq = h.matrix() * &q;
    let sqt = sigma.matrix() * q.transpose();
    // trace(A B) = Σ_ij A_ij B_ji
    let value = sqt.component_mul(&hq.transpose()).sum();
    let clamp = 1e-10 * sigma.frobenius_norm() * h.frobenius_norm();
    if value >= 0.0 {
        Ok(value)
    } else if value > -clamp {
        Ok(0.0)
    } else {
        Err(Error::NegativeTrace(value))
    }
}

/// Writes a matrix in the plain text format: a `dim` line (or `rows cols` for a
/// rectangular matrix) followed by one whitespace-separated row per line.
pub fn write_matrix_text<W: Write>(mut w: W, a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == a.ncols() {
        writeln!(w, "{}", a.nrows())?;
    } else {
        writeln!(w, "{} {}", a.nrows(), a.ncols())?;
    }
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{}", a[(i, j)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Reads the format written by [`write_matrix_text`], skipping blank and `#` lines before the header.
pub fn read_matrix_text<R: BufRead>(r: R) -> Result<DMatrix<f64>> {
    let mut lines = r.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                let t = line.trim();
                if !t.is_empty() && !t.starts_with('#') {
                    break line;
                }
            }
            None => return Err(Error::Parse("empty matrix file".into())),
        }
    };
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Parse(format!("bad header {header:?}"))))
        .collect::<Result<_>>()?;
    let (rows, cols) = match dims.as_slice() {
        [n] => (*n, *n),
        [r, c] => (*r, *c),
        _ => return Err(Error::Parse(format!("bad header {header:?}"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("missing row {i}")))??;
        let before = data.len();
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {tok:?} in row {i}")))?,
            );
        }
        if data.len() - before != cols {
            return Err(Error::Parse(format!(
                "row {i} has {} entries, expected {cols}",
                data.len() - before
            )));
        }
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// Relative Frobenius distance `‖a − b‖_F / max(‖b‖_F, tiny)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn cholesky_identity() {
        let l = cholesky(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = dmatrix![4.0, 2.0; 2.0, 3.0];
        let l = cholesky(&a).unwrap();
        assert_abs_diff_eq!(l, dmatrix![2.0, 0.0; 1.0, 2f64.sqrt()], epsilon = 1e-15);
        assert_abs_diff_eq!(&l * l.transpose(), a, epsilon = 1e-14);
    }

    #[test]
    fn cholesky_rank_deficient() {
        let err = cholesky(&dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn spd_caches_factor() {
        let a = SpdMatrix::new(dmatrix![4.0, 2.0; 2.0, 3.0]).unwrap();
        let p1 = a.cholesky().unwrap() as *const _;
        let p2 = a.cholesky().unwrap() as *const _;
        assert_eq!(p1, p2);
    }

    #[test]
    fn spd_symmetrizes() {
        let a = SpdMatrix::new(dmatrix![2.0, 1.0; 0.0, 2.0]).unwrap();
        assert_eq!(a.matrix()[(0, 1)], 0.5);
        assert_eq!(a.matrix()[(1, 0)], 0.5);
    }

    #[test]
    fn sym_eig_diagonal() {
        let e = sym_eig(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, 3.0]))).unwrap();
        assert_eq!(e.values, vec![5.0, 3.0, 1.0]);
        let expected = dmatrix![0.0, 0.0, 1.0; 1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
        assert_eq!(e.vectors, expected);
    }

    #[test]
    fn sym_eig_two_by_two() {
        let e = sym_eig(&dmatrix![2.0, 1.0; 1.0, 2.0]).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
        let s = 1.0 / 2f64.sqrt();
        let v0 = e.vectors.column(0);
        let v1 = e.vectors.column(1);
        // sign of eigenvectors is arbitrary
        assert_abs_diff_eq!(v0[0] * v0[1], s * s, epsilon = 1e-14);
        assert_abs_diff_eq!(v1[0] * v1[1], -s * s, epsilon = 1e-14);
    }

    #[test]
    fn sym_eig_identity() {
        let e = sym_eig(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
    }

    #[test]
    fn sym_eig_zero_matrix() {
        let e = sym_eig(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
    }

    #[test]
    fn generalized_diagonal() {
        let h = SpdMatrix::from_diagonal(&[3.0, 2.0, 1.0]).unwrap();
        let g = generalized_eig(&h, &SpdMatrix::identity(3)).unwrap();
        assert_eq!(g.values, vec![3.0, 2.0, 1.0]);
        assert_abs_diff_eq!(g.vectors.abs(), DMatrix::identity(3, 3), epsilon = 1e-15);
    }

    #[test]
    fn generalized_scaled_sigma() {
        // H v = λ Σ⁻¹ v with H = I, Σ = diag(4, 1)
        let g = generalized_eig(&SpdMatrix::identity(2), &SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(g.values[0], 4.0, epsilon = 1e-14);
        assert_abs_diff_eq!(g.values[1], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(
            g.vectors.column(0).abs(),
            DVector::from_vec(vec![2.0, 0.0]),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            g.vectors.column(1).abs(),
            DVector::from_vec(vec![0.0, 1.0]),
            epsilon = 1e-14
        );
    }

    #[test]
    fn generalized_dimension_mismatch() {
        let err = generalized_eig(&SpdMatrix::identity(2), &SpdMatrix::identity(3)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn generalized_rejects_indefinite_h() {
        let h = SpdMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
        let err = generalized_eig(&h, &SpdMatrix::identity(2)).unwrap_err();
        assert!(matches!(err, Error::NegativeEigenvalue { .. }));
    }

    #[test]
    fn trace_quadratic_limits() {
        let h = SpdMatrix::new(dmatrix![2.0, 0.5; 0.5, 1.0]).unwrap();
        let sigma = SpdMatrix::identity(2);
        let full = RankRProjector::identity(2);
        let none = RankRProjector::zero(2);
        assert_eq!(trace_quadratic(&sigma, &h, &full).unwrap(), 0.0);
        assert_abs_diff_eq!(trace_quadratic(&sigma, &h, &none).unwrap(), 3.0, epsilon = 1e-15);
    }

    #[test]
    fn tail_sums_match_hand_values() {
        let t = tail_sums(&[4.0, 1.0, 0.01]);
        assert_abs_diff_eq!(t[0], 5.01, epsilon = 1e-14);
        assert_abs_diff_eq!(t[1], 1.01, epsilon = 1e-14);
        assert_abs_diff_eq!(t[2], 0.01, epsilon = 1e-14);
        assert_eq!(t[3], 0.0);
    }

    #[test]
    fn matrix_text_round_trip() {
        let a = dmatrix![1.0, 0.1 + 0.2; -3.5e-17, 1e300];
        let mut buf = Vec::new();
        write_matrix_text(&mut buf, &a).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("2\n"));
        let b = read_matrix_text(buf.as_slice()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn matrix_text_rejects_short_row() {
        let err = read_matrix_text("2\n1 2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
    }
}

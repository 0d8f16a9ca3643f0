//! Rank-r projectors `P` with `P² = P`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, sym_eig, SpdMatrix};

/// A rank-r projector together with a basis of its range.
///
/// Two orthogonality properties are tracked: Euclidean (`P = Pᵀ`) and
/// Σ⁻¹-orthogonal (`Pᵀ Σ⁻¹ = Σ⁻¹ P`). The conditional-expectation machinery
/// requires the latter.
#[derive(Debug, Clone)]
pub struct RankRProjector {
    matrix: DMatrix<f64>,
    rank: usize,
    basis: DMatrix<f64>,
    sigma_orthogonal: bool,
    euclidean: bool,
}

impl RankRProjector {
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            rank: d,
            basis: DMatrix::identity(d, d),
            sigma_orthogonal: true,
            euclidean: true,
        }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(d, d),
            rank: 0,
            basis: DMatrix::zeros(d, 0),
            sigma_orthogonal: true,
            euclidean: true,
        }
    }

    /// `P = V Vᵀ Σ⁻¹` for columns `V` satisfying `Vᵀ Σ⁻¹ V = I`.
    pub fn from_sigma_orthonormal_basis(basis: DMatrix<f64>, sigma: &SpdMatrix) -> Result<Self> {
        let d = sigma.dim();
        if basis.nrows() != d {
            return Err(Error::dims("projector basis", d, basis.nrows()));
        }
        if basis.ncols() > d {
            return Err(Error::RankOutOfRange {
                rank: basis.ncols(),
                dim: d,
            });
        }
        let rank = basis.ncols();
        let matrix = if rank == 0 {
            DMatrix::zeros(d, d)
        } else {
            let w = sigma.solve(&basis)?;
            &basis * w.transpose()
        };
        let euclidean = is_symmetric(&matrix, 1e-9);
        Ok(Self {
            matrix,
            rank,
            basis,
            sigma_orthogonal: true,
            euclidean,
        })
    }

    /// Σ⁻¹-orthogonal projector onto the span of the columns of `b` (full column rank).
    pub fn sigma_orthogonal_onto(b: &DMatrix<f64>, sigma: &SpdMatrix) -> Result<Self> {
        if b.ncols() == 0 {
            return Ok(Self::zero(sigma.dim()));
        }
        let gram = b.transpose() * sigma.solve(b)?;
        let r = cholesky(&((&gram + gram.transpose()) * 0.5))?;
        // V = B R⁻ᵀ has Vᵀ Σ⁻¹ V = R⁻¹ G R⁻ᵀ = I
        let v = r
            .solve_lower_triangular(&b.transpose())
            .ok_or(Error::NotPositiveDefinite { pivot: 0 })?
            .transpose();
        Self::from_sigma_orthonormal_basis(v, sigma)
    }

    /// Euclidean-orthogonal projector `U Uᵀ` for orthonormal columns `U`.
    pub fn euclidean_from_orthonormal(u: DMatrix<f64>) -> Self {
        let d = u.nrows();
        let rank = u.ncols();
        let matrix = if rank == 0 {
            DMatrix::zeros(d, d)
        } else {
            &u * u.transpose()
        };
        Self {
            matrix,
            rank,
            basis: u,
            sigma_orthogonal: false,
            euclidean: true,
        }
    }

    /// Oblique projector `U (Wᵀ U)⁻¹ Wᵀ` with range `span(U)` and kernel `span(W)^⊥`.
    pub fn oblique(range: &DMatrix<f64>, co_range: &DMatrix<f64>) -> Result<Self> {
        let d = range.nrows();
        if co_range.shape() != range.shape() {
            return Err(Error::dims("oblique projector", range.ncols(), co_range.ncols()));
        }
        let rank = range.ncols();
        if rank > d {
            return Err(Error::RankOutOfRange { rank, dim: d });
        }
        if rank == 0 {
            return Ok(Self::zero(d));
        }
        let inner = (co_range.transpose() * range)
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("range and kernel are not complementary".into()))?;
        let matrix = range * inner * co_range.transpose();
        let euclidean = is_symmetric(&matrix, 1e-9);
        Ok(Self {
            matrix,
            rank,
            basis: range.clone(),
            sigma_orthogonal: false,
            euclidean,
        })
    }

    /// Sets the Σ⁻¹-orthogonal flag when `Σ Pᵀ = P Σ` holds numerically.
    pub fn with_sigma_check(mut self, sigma: &SpdMatrix) -> Self {
        if !self.sigma_orthogonal && self.dim() == sigma.dim() {
            let lhs = sigma.matrix() * self.matrix.transpose();
            let rhs = &self.matrix * sigma.matrix();
            let scale = sigma.frobenius_norm() * (1.0 + self.matrix.norm());
            self.sigma_orthogonal = (lhs - rhs).norm() <= 1e-10 * scale;
        }
        self
    }

    /// The Σ⁻¹-orthogonal projector sharing this projector's kernel.
    ///
    /// The range is the Σ⁻¹-orthogonal complement of `ker P`, i.e. `Σ · range(Pᵀ)`.
    pub fn with_same_kernel(&self, sigma: &SpdMatrix) -> Result<Self> {
        if self.rank == 0 {
            return Ok(Self::zero(self.dim()));
        }
        let pt_p = self.matrix.transpose() * &self.matrix;
        let eig = sym_eig(&pt_p)?;
        let row_space = eig.vectors.columns(0, self.rank).into_owned();
        Self::sigma_orthogonal_onto(&(sigma.matrix() * row_space), sigma)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn is_sigma_orthogonal(&self) -> bool {
        self.sigma_orthogonal
    }

    pub fn is_euclidean(&self) -> bool {
        self.euclidean
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// `(I − P) y`
    pub fn apply_complement(&self, y: &DVector<f64>) -> DVector<f64> {
        y - &self.matrix * y
    }

    /// Checks `P² = P`, `trace(P) = r`, and the Σ⁻¹ identity when flagged.
    pub fn check(&self, sigma: Option<&SpdMatrix>) -> std::result::Result<(), String> {
        let p2 = &self.matrix * &self.matrix;
        let idem = (&p2 - &self.matrix).norm();
        if idem > 1e-9 * (1.0 + self.matrix.norm()) {
            return Err(format!("P² ≠ P (‖P² − P‖_F = {idem:e})"));
        }
        let tr = self.matrix.trace();
        if (tr - self.rank as f64).abs() > 1e-8 * (1.0 + self.rank as f64) {
            return Err(format!("trace(P) = {tr} but rank is {}", self.rank));
        }
        if let (true, Some(sigma)) = (self.sigma_orthogonal, sigma) {
            let sp = match sigma.solve(&self.matrix) {
                Ok(m) => m,
                Err(e) => return Err(e.to_string()),
            };
            let spt = sp.transpose();
            // Pᵀ Σ⁻¹ = (Σ⁻¹ P)ᵀ
            let gap = (&spt - &sp).norm();
            if gap > 1e-8 * (1.0 + sp.norm()) {
                return Err(format!("Pᵀ Σ⁻¹ ≠ Σ⁻¹ P (gap {gap:e})"));
            }
        }
        Ok(())
    }
}

fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    (m - m.transpose()).norm() <= tol * (1.0 + m.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn sigma() -> SpdMatrix {
        SpdMatrix::new(dmatrix![2.0, 0.5, 0.1; 0.5, 1.0, 0.2; 0.1, 0.2, 0.5]).unwrap()
    }

    #[test]
    fn sigma_orthogonal_projector_invariants() {
        let s = sigma();
        let b = dmatrix![1.0; 2.0; -1.0];
        let p = RankRProjector::sigma_orthogonal_onto(&b, &s).unwrap();
        assert_eq!(p.rank(), 1);
        p.check(Some(&s)).unwrap();
        // range contains b
        assert_abs_diff_eq!(p.matrix() * &b, b, epsilon = 1e-12);
        assert!(!p.is_euclidean());
    }

    #[test]
    fn same_kernel_keeps_kernel() {
        let s = sigma();
        // oblique projector onto e1 along e2 + e3 ... kernel = span(e2, e3 - e1)
        let q = dmatrix![1.0, 0.0, 1.0; 0.0, 0.0, 0.0; 0.0, 0.0, 0.0];
        let raw = RankRProjector {
            matrix: q.clone(),
            rank: 1,
            basis: dmatrix![1.0; 0.0; 0.0],
            sigma_orthogonal: false,
            euclidean: false,
        };
        let p = raw.with_same_kernel(&s).unwrap();
        p.check(Some(&s)).unwrap();
        for k in [dmatrix![0.0; 1.0; 0.0], dmatrix![-1.0; 0.0; 1.0]] {
            assert_abs_diff_eq!(p.matrix() * &k, DMatrix::zeros(3, 1), epsilon = 1e-12);
        }
    }

    #[test]
    fn euclidean_commuting_projector_gets_sigma_flag() {
        let s = SpdMatrix::from_diagonal(&[3.0, 2.0, 1.0]).unwrap();
        let p = RankRProjector::euclidean_from_orthonormal(dmatrix![1.0; 0.0; 0.0]).with_sigma_check(&s);
        assert!(p.is_sigma_orthogonal());
        let p = RankRProjector::euclidean_from_orthonormal(dmatrix![1.0; 0.0; 0.0]).with_sigma_check(&sigma());
        assert!(!p.is_sigma_orthogonal());
    }

    #[test]
    fn complement_application() {
        let p = RankRProjector::euclidean_from_orthonormal(dmatrix![0.0; 1.0]);
        let y = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(p.apply(&y), DVector::from_vec(vec![0.0, 4.0]));
        assert_eq!(p.apply_complement(&y), DVector::from_vec(vec![3.0, 0.0]));
    }
}

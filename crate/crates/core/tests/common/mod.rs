#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ridgeapprox::{RankRProjector, SampleStream, SpdMatrix};

/// Deterministic random-instance generator for tests.
pub struct Gen {
    stream: SampleStream,
    next: u64,
}

impl Gen {
    pub fn new(seed: u64) -> Self {
        Self {
            stream: SampleStream::new(seed, 0xfeed),
            next: 0,
        }
    }

    pub fn normals(&mut self, n: usize) -> DVector<f64> {
        self.next += 1;
        self.stream.standard_normal_vec(self.next, n)
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        let v = self.normals(rows * cols);
        DMatrix::from_column_slice(rows, cols, v.as_slice())
    }

    pub fn spd(&mut self, d: usize) -> SpdMatrix {
        let a = self.matrix(d, d);
        SpdMatrix::new(&a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.2).unwrap()
    }

    pub fn psd(&mut self, d: usize) -> SpdMatrix {
        let a = self.matrix(d, d);
        SpdMatrix::new(&a * a.transpose()).unwrap()
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let z = self.normals(1)[0];
        // logistic approximation of the normal CDF
        let u = 1.0 / (1.0 + (-1.702 * z).exp());
        lo + (hi - lo) * u
    }

    /// Random Σ⁻¹-orthogonal rank-`r` projector.
    pub fn sigma_projector(&mut self, sigma: &SpdMatrix, r: usize) -> RankRProjector {
        let b = self.matrix(sigma.dim(), r);
        RankRProjector::sigma_orthogonal_onto(&b, sigma).unwrap()
    }

    /// Random Euclidean-orthogonal rank-`r` projector.
    pub fn euclidean_projector(&mut self, d: usize, r: usize) -> RankRProjector {
        let q = self.matrix(d, d).qr().q();
        RankRProjector::euclidean_from_orthonormal(q.columns(0, r).into_owned())
    }
}

/// Subsets of `0..d` of size `k`, in lexicographic order.
pub fn subsets(d: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..(1 << d))
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..d).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

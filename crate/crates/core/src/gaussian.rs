//! Gaussian input measures `µ = N(m, Σ)` with reproducible sampling.
//!
//! Draws come from ChaCha8 used as a counter-based generator: the key is the
//! 64-bit seed, the ChaCha stream is the `stream_id`, and draw `i` of a
//! d-dimensional measure starts at a fixed word offset. Any draw can be
//! produced independently of the others, so parallel loops reproduce the
//! sequential sequence exactly.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, SpdMatrix, SymEig};
use crate::projector::RankRProjector;

/// Identifies an independent, reproducible sequence of draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleStream {
    pub seed: u64,
    pub stream_id: u64,
    /// Index of the first draw taken from this stream.
    pub counter: u64,
}

impl SampleStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self {
            seed,
            stream_id,
            counter: 0,
        }
    }

    /// A stream whose id is derived from this one and `tag`; distinct tags
    /// give statistically independent streams.
    pub fn substream(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream_id: splitmix64(splitmix64(self.stream_id) ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            counter: 0,
        }
    }

    /// The same stream advanced by `n` draws.
    pub fn skip(&self, n: u64) -> Self {
        Self {
            counter: self.counter + n,
            ..*self
        }
    }

    /// Fills `out` with independent standard normals for draw `index`
    /// (relative to `counter`) using the Box–Muller transform.
    pub fn standard_normals(&self, index: u64, out: &mut [f64]) {
        let pairs = out.len().div_ceil(2) as u128;
        // each pair consumes two u64 = four u32 words
        let word = (self.counter + index) as u128 * pairs * 4;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng.set_word_pos(word);
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            // u1 in (0, 1], u2 in [0, 1)
            let u1 = ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
            let u2 = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let radius = (-2.0 * u1.ln()).sqrt();
            let angle = 2.0 * PI * u2;
            chunk[0] = radius * angle.cos();
            if chunk.len() > 1 {
                chunk[1] = radius * angle.sin();
            }
        }
    }

    pub fn standard_normal_vec(&self, index: u64, dim: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        self.standard_normals(index, v.as_mut_slice());
        v
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `µ = N(m, Σ)` with a positive definite covariance.
#[derive(Debug, Clone)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: SpdMatrix,
    kl: OnceLock<SymEig>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::dims("GaussianMeasure::new", cov.dim(), mean.len()));
        }
        cov.cholesky()?;
        Ok(Self {
            mean,
            cov,
            kl: OnceLock::new(),
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), SpdMatrix::identity(d)).expect("identity covariance")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    /// Lower-triangular `L` with `L Lᵀ = Σ`, used to colour standard normals.
    pub fn sampler_factor(&self) -> &DMatrix<f64> {
        self.cov.cholesky().expect("checked at construction")
    }

    pub fn is_standard(&self) -> bool {
        self.mean.iter().all(|&v| v == 0.0) && self.cov.matrix() == &DMatrix::identity(self.dim(), self.dim())
    }

    pub fn is_diagonal(&self) -> bool {
        self.cov.is_diagonal()
    }

    /// Draw number `index` of `stream`: `m + L z`.
    pub fn draw(&self, stream: &SampleStream, index: u64) -> DVector<f64> {
        let z = stream.standard_normal_vec(index, self.dim());
        &self.mean + self.sampler_factor() * z
    }

    /// The first `count` draws of `stream`.
    pub fn sample(&self, stream: &SampleStream, count: usize) -> Vec<DVector<f64>> {
        (0..count as u64).map(|i| self.draw(stream, i)).collect()
    }

    /// `L⁻¹ (x − m)`
    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        self.sampler_factor()
            .solve_lower_triangular(&(x - &self.mean))
            .expect("factor has a positive diagonal")
    }

    /// Eigendecomposition of Σ (the Karhunen-Loève structure), cached.
    pub fn kl_eigen(&self) -> Result<&SymEig> {
        if let Some(e) = self.kl.get() {
            return Ok(e);
        }
        let e = sym_eig(self.cov.matrix())?;
        let _ = self.kl.set(e);
        Ok(self.kl.get().expect("just set"))
    }

    /// Orthogonal projector onto the `r` leading eigenvectors of Σ.
    ///
    /// Since it commutes with Σ it is also Σ⁻¹-orthogonal.
    pub fn kl_projector(&self, r: usize) -> Result<RankRProjector> {
        let d = self.dim();
        if r > d {
            return Err(Error::RankOutOfRange { rank: r, dim: d });
        }
        let eig = self.kl_eigen()?;
        let u = eig.vectors.columns(0, r).into_owned();
        Ok(RankRProjector::euclidean_from_orthonormal(u).with_sigma_check(&self.cov))
    }

    /// `P x + (I − P) Y_i` for the first `count` draws `Y_i` of `stream`.
    pub fn conditioned_resample(
        &self,
        p: &RankRProjector,
        x: &DVector<f64>,
        stream: &SampleStream,
        count: usize,
    ) -> Result<Vec<DVector<f64>>> {
        if !p.is_sigma_orthogonal() {
            return Err(Error::NotSigmaOrthogonal);
        }
        if p.dim() != self.dim() || x.len() != self.dim() {
            return Err(Error::dims("conditioned_resample", self.dim(), x.len()));
        }
        let px = p.apply(x);
        Ok((0..count as u64)
            .map(|i| &px + p.apply_complement(&self.draw(stream, i)))
            .collect())
    }
}

/// `Σ_ij = exp(−‖s_i − s_j‖² / ℓ²) + nugget · δ_ij` over a list of points.
pub fn squared_exponential_covariance(points: &[[f64; 2]], lengthscale: f64, nugget: f64) -> Result<SpdMatrix> {
    if !(lengthscale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lengthscale must be positive, got {lengthscale}"
        )));
    }
    let n = points.len();
    let l2 = lengthscale * lengthscale;
    let m = DMatrix::from_fn(n, n, |i, j| {
        let dx = points[i][0] - points[j][0];
        let dy = points[i][1] - points[j][1];
        let v = (-(dx * dx + dy * dy) / l2).exp();
        if i == j {
            v + nugget
        } else {
            v
        }
    });
    SpdMatrix::new(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_quadratic;
    use nalgebra::dmatrix;

    fn empirical_cov(xs: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let n = xs.len() as f64;
        let d = xs[0].len();
        let mean = xs.iter().fold(DVector::zeros(d), |a, x| a + x) / n;
        let cov = xs
            .iter()
            .fold(DMatrix::zeros(d, d), |a, x| a + (x - &mean) * (x - &mean).transpose())
            / (n - 1.0);
        (mean, cov)
    }

    #[test]
    fn standard_normal_moments() {
        let mu = GaussianMeasure::standard(3);
        let xs = mu.sample(&SampleStream::new(11, 0), 10_000);
        let (mean, cov) = empirical_cov(&xs);
        for i in 0..3 {
            assert!(mean[i].abs() < 4.0 / 100.0, "mean {}", mean[i]);
            assert!((cov[(i, i)] - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn scaled_measure_moments() {
        let mu = GaussianMeasure::new(
            DVector::from_vec(vec![1.0, -1.0]),
            SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap(),
        )
        .unwrap();
        let (_, cov) = empirical_cov(&mu.sample(&SampleStream::new(5, 2), 10_000));
        assert!((cov[(0, 0)] - 4.0).abs() < 0.25);
    }

    #[test]
    fn draws_are_reproducible_and_random_access() {
        let mu = GaussianMeasure::standard(5);
        let s = SampleStream::new(42, 7);
        let a = mu.sample(&s, 20);
        let b = mu.sample(&s, 20);
        assert_eq!(a, b);
        assert_eq!(mu.draw(&s, 13), a[13]);
        assert_eq!(mu.draw(&s.skip(3), 10), a[13]);
        let other = mu.sample(&SampleStream::new(42, 8), 20);
        assert_ne!(a, other);
        assert_ne!(s.substream(1), s.substream(2));
    }

    #[test]
    fn whitening_gives_identity_covariance() {
        let cov = SpdMatrix::new(dmatrix![2.0, 0.8, 0.0; 0.8, 1.0, 0.3; 0.0, 0.3, 0.5]).unwrap();
        let mu = GaussianMeasure::new(DVector::from_vec(vec![0.5, 0.0, -2.0]), cov).unwrap();
        let zs: Vec<_> = mu
            .sample(&SampleStream::new(3, 1), 10_000)
            .iter()
            .map(|x| mu.whiten(x))
            .collect();
        let (_, c) = empirical_cov(&zs);
        assert!((c - DMatrix::identity(3, 3)).abs().max() < 0.1);
    }

    #[test]
    fn rejects_singular_covariance() {
        let cov = SpdMatrix::new(dmatrix![1.0, 1.0; 1.0, 1.0]).unwrap();
        assert!(GaussianMeasure::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn kl_projector_diagonal() {
        let mu = GaussianMeasure::new(DVector::zeros(3), SpdMatrix::from_diagonal(&[9.0, 4.0, 1.0]).unwrap()).unwrap();
        let p = mu.kl_projector(2).unwrap();
        assert!((p.matrix().abs() - DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0]))).norm() < 1e-14);
        assert!(p.is_sigma_orthogonal() && p.is_euclidean());
        assert!(matches!(mu.kl_projector(4), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn kl_projector_degenerate_spectrum() {
        let mu = GaussianMeasure::standard(4);
        let p = mu.kl_projector(1).unwrap();
        p.check(Some(mu.cov())).unwrap();
        assert!((p.matrix() - p.matrix().transpose()).norm() < 1e-14);
        assert!((p.matrix().trace() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kl_residual_is_eigenvalue_tail() {
        let cov =
            SpdMatrix::new(dmatrix![3.0, 1.0, 0.2, 0.0; 1.0, 2.0, 0.4, 0.1; 0.2, 0.4, 1.5, 0.3; 0.0, 0.1, 0.3, 1.0])
                .unwrap();
        let mu = GaussianMeasure::new(DVector::zeros(4), cov).unwrap();
        let eig = mu.kl_eigen().unwrap().clone();
        for r in 0..=4 {
            let p = mu.kl_projector(r).unwrap();
            // trace((I−P)Σ(I−Pᵀ)) = trace(Σ(I−Pᵀ)I(I−P)) for symmetric P
            let resid = trace_quadratic(mu.cov(), &SpdMatrix::identity(4), &p).unwrap();
            let tail: f64 = eig.values[r..].iter().sum();
            assert!((resid - tail).abs() <= 1e-9 * tail.max(1e-300) || (resid - tail).abs() < 1e-14);
        }
    }

    #[test]
    fn conditioned_resample_limits() {
        let mu = GaussianMeasure::standard(3);
        let x = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let s = SampleStream::new(1, 1);
        let ident = mu
            .conditioned_resample(&RankRProjector::identity(3), &x, &s, 4)
            .unwrap();
        assert!(ident.iter().all(|y| y == &x));
        let zero = mu.conditioned_resample(&RankRProjector::zero(3), &x, &s, 4).unwrap();
        assert_eq!(zero, mu.sample(&s, 4));
        let oblique = RankRProjector::euclidean_from_orthonormal(dmatrix![1.0; 0.0; 0.0]);
        let cov = SpdMatrix::new(dmatrix![2.0, 0.5, 0.0; 0.5, 1.0, 0.0; 0.0, 0.0, 1.0]).unwrap();
        let mu2 = GaussianMeasure::new(DVector::zeros(3), cov.clone()).unwrap();
        assert!(matches!(
            mu2.conditioned_resample(&oblique.with_sigma_check(&cov), &x, &s, 1),
            Err(Error::NotSigmaOrthogonal)
        ));
    }

    #[test]
    fn conditioned_resample_preserves_measure() {
        // X ~ µ, Y ~ µ independent; P X + (I − P) Y ~ µ for Σ⁻¹-orthogonal P
        let mu = GaussianMeasure::standard(2);
        let p = RankRProjector::euclidean_from_orthonormal(dmatrix![1.0; 0.0]).with_sigma_check(mu.cov());
        let xs = mu.sample(&SampleStream::new(9, 0), 10_000);
        let ys: Vec<_> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                mu.conditioned_resample(&p, x, &SampleStream::new(9, 1).skip(i as u64), 1)
                    .unwrap()
                    .remove(0)
            })
            .collect();
        let (_, c) = empirical_cov(&ys);
        assert!((c - DMatrix::identity(2, 2)).abs().max() < 0.1);
    }

    #[test]
    fn squared_exponential_diagonal() {
        let pts = [[0.0, 0.0], [0.1, 0.0], [0.5, 0.5]];
        let c = squared_exponential_covariance(&pts, 0.15, 1e-10).unwrap();
        for i in 0..3 {
            assert_eq!(c.matrix()[(i, i)], 1.0 + 1e-10);
        }
        assert!((c.matrix()[(0, 1)] - (-(0.01f64) / 0.0225).exp()).abs() < 1e-15);
        assert!(squared_exponential_covariance(&pts, 0.0, 0.0).is_err());
    }
}

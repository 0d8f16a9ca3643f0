//! Monte Carlo estimation of `H`, bound-optimal projectors, and the
//! conditional-expectation ridge approximation `F̂_r`.

use std::io::Write;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_chunks, Execution, MatrixMean, ScalarStats};
use crate::gaussian::{GaussianMeasure, SampleStream};
use crate::linalg::{generalized_eig, tail_sums, trace_quadratic, GeneralizedEigenPairs, SpdMatrix};
use crate::model::{LinearModel, VectorValuedModel};
use crate::projector::RankRProjector;

const H_CHUNK: usize = 8;
const VALIDATION_CHUNK: usize = 16;

/// Anything that can be evaluated as a surrogate of a model.
pub trait Approximant: Sync {
    fn approximate(&self, x: &DVector<f64>) -> Result<DVector<f64>>;
}

/// Monte Carlo estimate `Ĥ = (1/K) Σ J(X_i)ᵀ R_V J(X_i)`.
#[derive(Debug, Clone)]
pub struct HMatrixEstimate {
    pub h: SpdMatrix,
    pub samples_used: usize,
    /// `min(d, K n)`: `rank(Ĥ)` cannot exceed this.
    pub rank_upper_bound: usize,
}

impl HMatrixEstimate {
    /// Wraps a known `H` (e.g. an analytical one) as an estimate with no rank ceiling.
    pub fn exact(h: SpdMatrix) -> Self {
        let d = h.dim();
        Self {
            h,
            samples_used: 0,
            rank_upper_bound: d,
        }
    }
}

pub fn estimate_h<M: VectorValuedModel + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    stream: &SampleStream,
    k: usize,
) -> Result<HMatrixEstimate> {
    estimate_h_with(model, mu, stream, k, Execution::default())
}

/// [`estimate_h`] with an explicit execution policy. Sample `i` is draw `i`
/// of `stream`; the result is bitwise independent of `exec`.
pub fn estimate_h_with<M: VectorValuedModel + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    stream: &SampleStream,
    k: usize,
    exec: Execution,
) -> Result<HMatrixEstimate> {
    if k == 0 {
        return Err(Error::InvalidArgument("estimate_h needs K >= 1".into()));
    }
    let d = model.input_dim();
    if mu.dim() != d {
        return Err(Error::dims("estimate_h", d, mu.dim()));
    }
    let chunks = map_chunks(exec, k, H_CHUNK, |range| -> Result<MatrixMean> {
        let mut acc = MatrixMean::new(d, d);
        for i in range {
            let x = mu.draw(stream, i as u64);
            let g = model.weighted_gram(&x).map_err(|e| Error::ModelEvaluationFailure {
                sample: i,
                source: Box::new(e),
            })?;
            acc.push(&g);
        }
        Ok(acc)
    });
    let mut total = MatrixMean::new(d, d);
    for c in chunks {
        total.merge(&c?);
    }
    Ok(HMatrixEstimate {
        h: SpdMatrix::new(total.mean)?,
        samples_used: k,
        rank_upper_bound: d.min(k.saturating_mul(model.output_dim())),
    })
}

/// Emitted when the requested rank exceeds the rank ceiling of `Ĥ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NonUniqueProjector {
    pub rank: usize,
    pub rank_upper_bound: usize,
}

/// All bound-optimal projectors of a pair `(H, Σ)` from one generalized eigendecomposition.
#[derive(Debug, Clone)]
pub struct ProjectorFamily {
    pub eigen: GeneralizedEigenPairs,
    sigma: SpdMatrix,
    rank_upper_bound: usize,
}

impl ProjectorFamily {
    pub fn new(h: &HMatrixEstimate, mu: &GaussianMeasure) -> Result<Self> {
        let eigen = generalized_eig(&h.h, mu.cov())?;
        Ok(Self {
            eigen,
            sigma: mu.cov().clone(),
            rank_upper_bound: h.rank_upper_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigen.dim()
    }

    /// `P_r = (Σ_{i≤r} v_i v_iᵀ) Σ⁻¹`
    pub fn projector(&self, r: usize) -> Result<RankRProjector> {
        let d = self.dim();
        if r > d {
            return Err(Error::RankOutOfRange { rank: r, dim: d });
        }
        RankRProjector::from_sigma_orthonormal_basis(self.eigen.vectors.columns(0, r).into_owned(), &self.sigma)
    }

    pub fn warning(&self, r: usize) -> Option<NonUniqueProjector> {
        (r > self.rank_upper_bound).then_some(NonUniqueProjector {
            rank: r,
            rank_upper_bound: self.rank_upper_bound,
        })
    }

    /// Minimum of the bound at rank `r`: `Σ_{i>r} λ_i`.
    pub fn optimal_bound(&self, r: usize) -> f64 {
        self.eigen.values[r.min(self.dim())..].iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct OptimalProjector {
    pub projector: RankRProjector,
    pub eigen: GeneralizedEigenPairs,
    pub warning: Option<NonUniqueProjector>,
}

/// Rank-r minimiser of `trace(Σ(I−Pᵀ)Ĥ(I−P))`, from the generalized eigenpairs of `(Ĥ, Σ⁻¹)`.
pub fn optimal_projector(h: &HMatrixEstimate, mu: &GaussianMeasure, r: usize) -> Result<OptimalProjector> {
    let d = h.h.dim();
    if r > d {
        return Err(Error::RankOutOfRange { rank: r, dim: d });
    }
    let family = ProjectorFamily::new(h, mu)?;
    let projector = family.projector(r)?;
    let warning = family.warning(r);
    if let Some(w) = warning {
        warn!(
            "rank {} exceeds the rank ceiling {} of the H estimate; the optimal projector is not unique",
            w.rank, w.rank_upper_bound
        );
    }
    Ok(OptimalProjector {
        projector,
        eigen: family.eigen,
        warning,
    })
}

/// `trace(Σ(I−Pᵀ)H(I−P))`, an upper bound on `‖f − E_µ(f|σ(P))‖²_H`.
pub fn error_bound(p: &RankRProjector, h: &SpdMatrix, mu: &GaussianMeasure) -> Result<f64> {
    trace_quadratic(mu.cov(), h, p)
}

/// Eigenvalues of `(H, Σ⁻¹)` and of Σ with their tail sums.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<f64>,
    pub tail_sums: Vec<f64>,
    pub kl_eigenvalues: Vec<f64>,
    pub kl_tail_sums: Vec<f64>,
}

impl SpectrumReport {
    pub fn new(h: &SpdMatrix, mu: &GaussianMeasure) -> Result<Self> {
        let eigen = generalized_eig(h, mu.cov())?;
        Self::from_parts(&eigen, mu)
    }

    pub fn from_parts(eigen: &GeneralizedEigenPairs, mu: &GaussianMeasure) -> Result<Self> {
        let kl = mu.kl_eigen()?;
        Ok(Self {
            tail_sums: eigen.tail_sums(),
            eigenvalues: eigen.values.clone(),
            kl_tail_sums: tail_sums(&kl.values),
            kl_eigenvalues: kl.values.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// CSV with columns `index,lambda,tail_sum,kl_sigma2,kl_tail_sum`.
    ///
    /// Row `r` holds the (r+1)-th eigenvalues and the tail sums at rank `r`;
    /// the last row (`r = d`) has empty eigenvalue cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,lambda,tail_sum,kl_sigma2,kl_tail_sum")?;
        let d = self.dim();
        for r in 0..=d {
            let cell = |v: &[f64]| v.get(r).map(|x| x.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                r,
                cell(&self.eigenvalues),
                self.tail_sums[r],
                cell(&self.kl_eigenvalues),
                self.kl_tail_sums[r]
            )?;
        }
        Ok(())
    }
}

/// Smallest rank whose minimised bound is at most `eps²`; `d` if none is.
pub fn select_rank(report: &SpectrumReport, eps: f64) -> usize {
    let target = eps * eps;
    report
        .tail_sums
        .iter()
        .position(|&t| t <= target)
        .unwrap_or(report.dim())
}

/// `F̂_r(x) = (1/M) Σ f(P x + (I − P) Y_i)` with frozen `Y_1..Y_M`.
#[derive(Debug, Clone)]
pub struct RidgeApproximation<'a, M: ?Sized> {
    projector: RankRProjector,
    cond_samples: Vec<DVector<f64>>,
    offsets: Vec<DVector<f64>>,
    model: &'a M,
}

/// Draws and freezes `M` conditioning samples from `stream`.
pub fn build_ridge<'a, M: VectorValuedModel + ?Sized>(
    model: &'a M,
    mu: &GaussianMeasure,
    p: &RankRProjector,
    stream: &SampleStream,
    m: usize,
) -> Result<RidgeApproximation<'a, M>> {
    if m == 0 {
        return Err(Error::InvalidArgument("build_ridge needs M >= 1".into()));
    }
    RidgeApproximation::from_samples(model, p, mu.sample(stream, m))
}

impl<'a, M: VectorValuedModel + ?Sized> RidgeApproximation<'a, M> {
    pub fn from_samples(model: &'a M, p: &RankRProjector, cond_samples: Vec<DVector<f64>>) -> Result<Self> {
        if !p.is_sigma_orthogonal() {
            return Err(Error::NotSigmaOrthogonal);
        }
        let d = model.input_dim();
        if p.dim() != d {
            return Err(Error::dims("RidgeApproximation projector", d, p.dim()));
        }
        if cond_samples.is_empty() {
            return Err(Error::InvalidArgument("ridge approximation needs M >= 1".into()));
        }
        if let Some(y) = cond_samples.iter().find(|y| y.len() != d) {
            return Err(Error::dims("RidgeApproximation sample", d, y.len()));
        }
        let offsets = cond_samples.iter().map(|y| p.apply_complement(y)).collect();
        Ok(Self {
            projector: p.clone(),
            cond_samples,
            offsets,
            model,
        })
    }

    pub fn projector(&self) -> &RankRProjector {
        &self.projector
    }

    pub fn cond_samples(&self) -> &[DVector<f64>] {
        &self.cond_samples
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let px = self.projector.apply(x);
        let mut acc = DVector::zeros(self.model.output_dim());
        for off in &self.offsets {
            acc += self.model.eval(&(&px + off))?;
        }
        Ok(acc / self.offsets.len() as f64)
    }
}

impl<M: VectorValuedModel + ?Sized> Approximant for RidgeApproximation<'_, M> {
    fn approximate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.eval(x)
    }
}

/// Monte Carlo estimate of `E‖f(X) − F̂(X)‖²_V` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationResult {
    pub mse: f64,
    pub std_error: f64,
    pub samples: usize,
}

pub fn validate_error<A: Approximant + ?Sized, M: VectorValuedModel + ?Sized>(
    approx: &A,
    model: &M,
    mu: &GaussianMeasure,
    stream: &SampleStream,
    n_val: usize,
) -> Result<ValidationResult> {
    validate_error_with(approx, model, mu, stream, n_val, Execution::default())
}

pub fn validate_error_with<A: Approximant + ?Sized, M: VectorValuedModel + ?Sized>(
    approx: &A,
    model: &M,
    mu: &GaussianMeasure,
    stream: &SampleStream,
    n_val: usize,
    exec: Execution,
) -> Result<ValidationResult> {
    if n_val < 2 {
        return Err(Error::InvalidArgument("validation needs at least 2 samples".into()));
    }
    let chunks = map_chunks(exec, n_val, VALIDATION_CHUNK, |range| -> Result<ScalarStats> {
        let mut s = ScalarStats::default();
        for i in range {
            let x = mu.draw(stream, i as u64);
            let wrap = |e| Error::ModelEvaluationFailure {
                sample: i,
                source: Box::new(e),
            };
            let diff = model.eval(&x).map_err(wrap)? - approx.approximate(&x).map_err(wrap)?;
            s.push(model.norm_sq(&diff));
        }
        Ok(s)
    });
    let mut stats = ScalarStats::default();
    for c in chunks {
        stats.merge(&c?);
    }
    Ok(ValidationResult {
        mse: stats.mean,
        std_error: stats.std_error(),
        samples: n_val,
    })
}

/// Models whose conditional-expectation and ridge errors are available in closed form.
pub trait ExactRidgeError: VectorValuedModel {
    /// `‖f − E_µ(f|σ(P))‖²_H`
    fn cond_exp_error(&self, mu: &GaussianMeasure, p: &RankRProjector) -> Result<f64>;

    /// `‖f − F̂‖²_H` for the ridge built from `cond_samples`.
    fn ridge_error(&self, mu: &GaussianMeasure, p: &RankRProjector, cond_samples: &[DVector<f64>]) -> Result<f64>;
}

impl ExactRidgeError for LinearModel {
    fn cond_exp_error(&self, mu: &GaussianMeasure, p: &RankRProjector) -> Result<f64> {
        crate::model::linear_cond_exp_error(self, mu, p)
    }

    fn ridge_error(&self, mu: &GaussianMeasure, p: &RankRProjector, cond_samples: &[DVector<f64>]) -> Result<f64> {
        LinearModel::ridge_error(self, mu, p, cond_samples)
    }
}

/// Ratio of the replicate-averaged ridge error to the exact conditional-expectation
/// error. Its expectation is `1 + 1/M`.
///
/// Replicate `j` draws its `M` samples from `stream.substream(j)`.
pub fn m_inflation_check<M: ExactRidgeError + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    p: &RankRProjector,
    m: usize,
    replicates: usize,
    stream: &SampleStream,
) -> Result<f64> {
    if m == 0 || replicates == 0 {
        return Err(Error::InvalidArgument("M and the replicate count must be >= 1".into()));
    }
    if !p.is_sigma_orthogonal() {
        return Err(Error::NotSigmaOrthogonal);
    }
    let exact = model.cond_exp_error(mu, p)?;
    if !(exact > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let mut mean = 0.0;
    for j in 0..replicates {
        let samples = mu.sample(&stream.substream(j as u64), m);
        let err = model.ridge_error(mu, p, &samples)?;
        mean += (err - mean) / (j + 1) as f64;
    }
    Ok(mean / exact)
}

/// Writes a matrix of column vectors (e.g. a projector basis) as CSV with a
/// leading `index` column.
pub fn write_basis_csv<W: Write>(mut w: W, basis: &DMatrix<f64>) -> Result<()> {
    let header: Vec<String> = (1..=basis.ncols()).map(|j| format!("v{j}")).collect();
    writeln!(w, "index,{}", header.join(","))?;
    for i in 0..basis.nrows() {
        let row: Vec<String> = basis.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{},{}", i, row.join(","))?;
    }
    Ok(())
}

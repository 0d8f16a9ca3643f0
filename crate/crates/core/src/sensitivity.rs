//! Vector-valued Sobol' indices and their DGSM (Poincaré) bounds.
//!
//! With `P_τ` the coordinate projector onto the group `τ`:
//!
//! ```text
//! S_τ = 1 − ‖f − E(f|σ(P_τ))‖²_H / ‖f − E f‖²_H      (closed index)
//! T_τ =     ‖f − E(f|σ(I − P_τ))‖²_H / ‖f − E f‖²_H  (total index)
//! ```
//!
//! Both conditional expectations are estimated by nested Monte Carlo: for each
//! outer draw `X_i` the inner mean over `M` conditioned resamples
//! `P X_i + (I − P) Y_ij` replaces `E(f|σ(P))(X_i)`. The inner-mean error
//! inflates the squared residual by exactly `1 + 1/M`, which is divided out.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{map_chunks, Execution, ScalarStats};
use crate::gaussian::{GaussianMeasure, SampleStream};
use crate::model::VectorValuedModel;
use crate::projector::RankRProjector;
use crate::ridge::estimate_h_with;

pub const DEFAULT_OUTER_SAMPLES: usize = 2000;
pub const DEFAULT_INNER_SAMPLES: usize = 64;

const SOBOL_CHUNK: usize = 16;

/// A sorted set of zero-based coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct IndexGroup {
    indices: Vec<usize>,
}

impl IndexGroup {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        let len = indices.len();
        indices.dedup();
        if indices.len() != len {
            return Err(Error::InvalidArgument("index group has repeated indices".into()));
        }
        Ok(Self { indices })
    }

    pub fn empty() -> Self {
        Self { indices: Vec::new() }
    }

    pub fn all(d: usize) -> Self {
        Self {
            indices: (0..d).collect(),
        }
    }

    pub fn singletons(d: usize) -> Vec<Self> {
        (0..d).map(|i| Self { indices: vec![i] }).collect()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn check(&self, d: usize) -> Result<()> {
        match self.indices.last() {
            Some(&i) if i >= d => Err(Error::IndexOutOfRange { index: i, dim: d }),
            _ => Ok(()),
        }
    }

    pub fn complement(&self, d: usize) -> Self {
        Self {
            indices: (0..d).filter(|&i| !self.contains(i)).collect(),
        }
    }
}

impl fmt::Display for IndexGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{{{}}}", parts.join(";"))
    }
}

/// `P = Σ_{i∈τ} e_i e_iᵀ`, flagged Euclidean-orthogonal.
pub fn coordinate_projector(tau: &IndexGroup, d: usize) -> Result<RankRProjector> {
    tau.check(d)?;
    let mut basis = DMatrix::zeros(d, tau.len());
    for (col, &i) in tau.indices().iter().enumerate() {
        basis[(i, col)] = 1.0;
    }
    Ok(RankRProjector::euclidean_from_orthonormal(basis))
}

/// [`coordinate_projector`] additionally flagged Σ⁻¹-orthogonal when Σ is diagonal.
pub fn coordinate_projector_for(tau: &IndexGroup, mu: &GaussianMeasure) -> Result<RankRProjector> {
    Ok(coordinate_projector(tau, mu.dim())?.with_sigma_check(mu.cov()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolEstimate {
    pub s_hat: f64,
    pub s_se: f64,
    pub t_hat: f64,
    pub t_se: f64,
    /// `‖f − E f‖²_H` estimated from the outer samples.
    pub total_variance: f64,
    /// Bias-corrected `‖f − E(f|σ(P_τ))‖²_H`.
    pub closed_residual: f64,
    pub closed_residual_se: f64,
    /// Bias-corrected `‖f − E(f|σ(I − P_τ))‖²_H`.
    pub total_residual: f64,
    pub total_residual_se: f64,
}

struct OuterSample {
    fx: DVector<f64>,
    closed: f64,
    total: f64,
}

pub fn sobol_estimates<M: VectorValuedModel + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    tau: &IndexGroup,
    stream: &SampleStream,
    n: usize,
    m_inner: usize,
) -> Result<SobolEstimate> {
    sobol_estimates_with(model, mu, tau, stream, n, m_inner, Execution::default())
}

/// Nested Monte Carlo estimates of `S_τ` and `T_τ`.
///
/// Outer draws come from `stream.substream(0)`, inner draws for `τ` and its
/// complement from `substream(1)` and `substream(2)`.
pub fn sobol_estimates_with<M: VectorValuedModel + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    tau: &IndexGroup,
    stream: &SampleStream,
    n: usize,
    m_inner: usize,
    exec: Execution,
) -> Result<SobolEstimate> {
    if !mu.is_diagonal() {
        return Err(Error::NonDiagonalCovariance);
    }
    let d = mu.dim();
    if model.input_dim() != d {
        return Err(Error::dims("sobol_estimates", d, model.input_dim()));
    }
    if n < 2 || m_inner == 0 {
        return Err(Error::InvalidArgument(
            "Sobol' estimation needs N >= 2 and M_inner >= 1".into(),
        ));
    }
    let p_closed = coordinate_projector_for(tau, mu)?;
    let p_total = coordinate_projector_for(&tau.complement(d), mu)?;
    let outer = stream.substream(0);
    let inner_closed = stream.substream(1);
    let inner_total = stream.substream(2);
    let inflation = 1.0 + 1.0 / m_inner as f64;

    let inner_residual = |p: &RankRProjector, s: &SampleStream, i: usize, x: &DVector<f64>, fx: &DVector<f64>| {
        let px = p.apply(x);
        let mut mean = DVector::zeros(model.output_dim());
        for j in 0..m_inner {
            let y = mu.draw(s, (i * m_inner + j) as u64);
            mean += model.eval(&(&px + p.apply_complement(&y)))?;
        }
        mean /= m_inner as f64;
        Ok::<f64, Error>(model.norm_sq(&(fx - mean)) / inflation)
    };

    let chunks = map_chunks(exec, n, SOBOL_CHUNK, |range| -> Result<Vec<OuterSample>> {
        let mut out = Vec::with_capacity(range.len());
        for i in range {
            let x = mu.draw(&outer, i as u64);
            let fx = model.eval(&x).map_err(|e| Error::ModelEvaluationFailure {
                sample: i,
                source: Box::new(e),
            })?;
            let closed = inner_residual(&p_closed, &inner_closed, i, &x, &fx)?;
            let total = inner_residual(&p_total, &inner_total, i, &x, &fx)?;
            out.push(OuterSample { fx, closed, total });
        }
        Ok(out)
    });
    let mut samples = Vec::with_capacity(n);
    for c in chunks {
        samples.extend(c?);
    }

    let nf = n as f64;
    let fbar = samples
        .iter()
        .fold(DVector::zeros(model.output_dim()), |a, s| a + &s.fx)
        / nf;
    // b_i has mean equal to the unbiased variance estimate
    let b: Vec<f64> = samples
        .iter()
        .map(|s| model.norm_sq(&(&s.fx - &fbar)) * nf / (nf - 1.0))
        .collect();
    let variance = mean(&b);
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let closed: Vec<f64> = samples.iter().map(|s| s.closed).collect();
    let total: Vec<f64> = samples.iter().map(|s| s.total).collect();
    let closed_ratio = mean(&closed) / variance;
    let total_ratio = mean(&total) / variance;

    Ok(SobolEstimate {
        s_hat: 1.0 - closed_ratio,
        s_se: ratio_se(&closed, &b, closed_ratio),
        t_hat: total_ratio,
        t_se: ratio_se(&total, &b, total_ratio),
        total_variance: variance,
        closed_residual: mean(&closed),
        closed_residual_se: (sample_var(&closed) / nf).sqrt(),
        total_residual: mean(&total),
        total_residual_se: (sample_var(&total) / nf).sqrt(),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_var(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// Delta-method standard error of `mean(a) / mean(b)`.
fn ratio_se(a: &[f64], b: &[f64], ratio: f64) -> f64 {
    let lin: Vec<f64> = a.iter().zip(b).map(|(ai, bi)| ai - ratio * bi).collect();
    (sample_var(&lin) / a.len() as f64).sqrt() / mean(b)
}

/// Per-coordinate DGSM `H_ii = ∫ ‖∂_i f‖²_V dµ` from `K` Monte Carlo samples.
pub fn dgsm<M: VectorValuedModel + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    stream: &SampleStream,
    k: usize,
) -> Result<DVector<f64>> {
    let est = estimate_h_with(model, mu, stream, k, Execution::default())?;
    Ok(est.h.matrix().diagonal())
}

/// Per-sample coordinate gradient energies `‖∂_i f(X_k)‖²_V`, one row per draw.
pub fn dgsm_samples<M: VectorValuedModel + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    stream: &SampleStream,
    k: usize,
) -> Result<DMatrix<f64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("DGSM estimation needs K >= 1".into()));
    }
    let d = model.input_dim();
    if mu.dim() != d {
        return Err(Error::dims("dgsm_samples", d, mu.dim()));
    }
    let chunks = map_chunks(
        Execution::default(),
        k,
        SOBOL_CHUNK,
        |range| -> Result<Vec<DVector<f64>>> {
            range
                .map(|i| {
                    let x = mu.draw(stream, i as u64);
                    model.weighted_gram(&x).map(|g| g.diagonal())
                })
                .collect()
        },
    );
    let mut out = DMatrix::zeros(k, d);
    let mut row = 0;
    for c in chunks {
        for g in c? {
            out.row_mut(row).copy_from(&g.transpose());
            row += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolBounds {
    /// `1 − Σ_{i∉τ} Var(X_i) H_ii / V`; may be negative.
    pub s_lower: f64,
    /// `Σ_{i∈τ} Var(X_i) H_ii / V`
    pub t_upper: f64,
    pub vacuous: bool,
}

pub fn sobol_bounds(
    dgsm: &DVector<f64>,
    mu: &GaussianMeasure,
    tau: &IndexGroup,
    total_variance: f64,
) -> Result<SobolBounds> {
    if !mu.is_diagonal() {
        return Err(Error::NonDiagonalCovariance);
    }
    let d = mu.dim();
    if dgsm.len() != d {
        return Err(Error::dims("sobol_bounds", d, dgsm.len()));
    }
    tau.check(d)?;
    if !(total_variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let cov = mu.cov().matrix();
    let (mut inside, mut outside) = (0.0, 0.0);
    for i in 0..d {
        let w = cov[(i, i)] * dgsm[i];
        if tau.contains(i) {
            inside += w;
        } else {
            outside += w;
        }
    }
    let s_lower = 1.0 - outside / total_variance;
    Ok(SobolBounds {
        s_lower,
        t_upper: inside / total_variance,
        vacuous: s_lower < 0.0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSensitivity {
    pub group: IndexGroup,
    pub s_hat: f64,
    pub s_se: f64,
    pub s_lower: f64,
    pub t_hat: f64,
    pub t_se: f64,
    pub t_upper: f64,
    pub vacuous: bool,
    /// Standard error of `Ŝ − S_lower`. Both share the variance estimate, so
    /// only the residual mean and the DGSM sum contribute.
    pub s_margin_se: f64,
    /// Standard error of `T_upper − T̂`.
    pub t_margin_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SensitivityReport {
    pub groups: Vec<GroupSensitivity>,
    pub dgsm: Vec<f64>,
    pub total_variance: f64,
}

/// Settings for [`sensitivity_report`].
#[derive(Debug, Clone, Copy)]
pub struct SobolSettings {
    pub outer: usize,
    pub inner: usize,
    pub dgsm_samples: usize,
}

impl Default for SobolSettings {
    fn default() -> Self {
        Self {
            outer: DEFAULT_OUTER_SAMPLES,
            inner: DEFAULT_INNER_SAMPLES,
            dgsm_samples: DEFAULT_OUTER_SAMPLES,
        }
    }
}

/// Estimates and bounds for each group. All groups share the outer sample
/// stream, hence the same total-variance estimate.
pub fn sensitivity_report<M: VectorValuedModel + ?Sized>(
    model: &M,
    mu: &GaussianMeasure,
    groups: &[IndexGroup],
    stream: &SampleStream,
    settings: SobolSettings,
) -> Result<SensitivityReport> {
    if !mu.is_diagonal() {
        return Err(Error::NonDiagonalCovariance);
    }
    let energies = dgsm_samples(model, mu, &stream.substream(100), settings.dgsm_samples)?;
    let h_diag = energies.row_mean().transpose();
    let variances = mu.cov().matrix().diagonal();
    let mut rows = Vec::with_capacity(groups.len());
    let mut total_variance = f64::NAN;
    for g in groups {
        let est = sobol_estimates(model, mu, g, stream, settings.outer, settings.inner)?;
        let bounds = sobol_bounds(&h_diag, mu, g, est.total_variance)?;
        total_variance = est.total_variance;
        let (mut inside, mut outside) = (ScalarStats::default(), ScalarStats::default());
        for e in energies.row_iter() {
            let (mut a, mut b) = (0.0, 0.0);
            for (i, (ei, vi)) in e.iter().zip(variances.iter()).enumerate() {
                if g.contains(i) {
                    a += ei * vi;
                } else {
                    b += ei * vi;
                }
            }
            inside.push(a);
            outside.push(b);
        }
        let v = est.total_variance;
        rows.push(GroupSensitivity {
            group: g.clone(),
            s_hat: est.s_hat,
            s_se: est.s_se,
            s_lower: bounds.s_lower,
            t_hat: est.t_hat,
            t_se: est.t_se,
            t_upper: bounds.t_upper,
            vacuous: bounds.vacuous,
            s_margin_se: est.closed_residual_se.hypot(outside.std_error()) / v,
            t_margin_se: est.total_residual_se.hypot(inside.std_error()) / v,
        });
    }
    Ok(SensitivityReport {
        groups: rows,
        dgsm: h_diag.iter().copied().collect(),
        total_variance,
    })
}

impl SensitivityReport {
    /// CSV with columns `group,S_hat,S_se,S_lower,T_hat,T_se,T_upper,vacuous,S_margin_se,T_margin_se`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "group,S_hat,S_se,S_lower,T_hat,T_se,T_upper,vacuous,S_margin_se,T_margin_se"
        )?;
        for g in &self.groups {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                g.group,
                g.s_hat,
                g.s_se,
                g.s_lower,
                g.t_hat,
                g.t_se,
                g.t_upper,
                g.vacuous,
                g.s_margin_se,
                g.t_margin_se
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

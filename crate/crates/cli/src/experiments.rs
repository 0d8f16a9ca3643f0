//! The four experiment drivers. Each writes plot-ready CSV files into the
//! output directory and returns their paths.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use ridgeapprox::linalg::{generalized_eig, write_matrix_text};
use ridgeapprox::pde::mode_field_export;
use ridgeapprox::ridge::{
    build_ridge, error_bound, estimate_h, validate_error, write_basis_csv, HMatrixEstimate, ProjectorFamily,
    SpectrumReport, ValidationResult,
};
use ridgeapprox::sensitivity::{sensitivity_report, SobolSettings};
use ridgeapprox::{Error, GaussianMeasure, RankRProjector, SampleStream};

use crate::config::{BuiltModel, ExperimentConfig};
use crate::output::{cell, ArtifactWriter};
use crate::CliError;

const MODE_COUNT: usize = 6;

// Stream tags under the root (seed, 0) stream.
const H_STREAM: u64 = 1;
const CONDITIONING_STREAM: u64 = 2;
const VALIDATION_STREAM: u64 = 3;
const REFERENCE_STREAM: u64 = 4;
const SOBOL_STREAM: u64 = 5;

struct Setup {
    model: BuiltModel,
    mu: GaussianMeasure,
    root: SampleStream,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let model = cfg.build_model()?;
    let mu = cfg.build_measure(&model)?;
    Ok(Setup {
        model,
        mu,
        root: SampleStream::new(cfg.seed(), 0),
    })
}

/// K-L projector with the Σ⁻¹-orthogonality flag; `r = 0` gives the zero projector.
fn kl_projector(mu: &GaussianMeasure, r: usize) -> Result<RankRProjector, CliError> {
    if r == 0 {
        return Ok(RankRProjector::zero(mu.dim()));
    }
    let p = mu.kl_projector(r)?;
    if p.is_sigma_orthogonal() {
        Ok(p)
    } else {
        Ok(p.with_same_kernel(mu.cov())?)
    }
}

/// Validated error of the exact conditional expectation, where a closed form exists.
fn exact_profile_error(
    model: &BuiltModel,
    mu: &GaussianMeasure,
    p: &RankRProjector,
    stream: &SampleStream,
    n_val: usize,
) -> Result<Option<ValidationResult>, CliError> {
    let v = match model {
        BuiltModel::Linear(m) => {
            let exact = m.conditional_expectation(mu, p)?;
            Some(validate_error(&exact, m, mu, stream, n_val)?)
        }
        BuiltModel::Quadratic(m) if mu.is_standard() && p.is_euclidean() => {
            let exact = m.conditional_expectation(mu, p)?;
            Some(validate_error(&exact, m, mu, stream, n_val)?)
        }
        _ => None,
    };
    Ok(v)
}

fn sqrt_bound(p: &RankRProjector, h: &HMatrixEstimate, mu: &GaussianMeasure) -> Result<f64, CliError> {
    Ok(error_bound(p, &h.h, mu)?.sqrt())
}

/// Error-vs-rank curve: square-root bounds for the optimal and K-L projectors,
/// and validated squared errors of the ridge profile for each `M`.
pub fn run_error_curve(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let Setup { model, mu, root } = setup(cfg)?;
    let f = model.as_dyn();
    let d = f.input_dim();
    let ranks = cfg.ranks(d)?;
    let s = &cfg.sampling;

    info!("estimating H with K = {}", s.k);
    let h = estimate_h(f, &mu, &root.substream(H_STREAM), s.k)?;
    let family = ProjectorFamily::new(&h, &mu)?;
    let cond = root.substream(CONDITIONING_STREAM);
    let val = root.substream(VALIDATION_STREAM);

    let mut writer = ArtifactWriter::new(out, cfg, "curve")?;
    let mut w = writer.create("error_curve.csv")?;
    writeln!(
        w,
        "r,M,opt_bound,kl_bound,mse,mse_se,kl_mse,kl_mse_se,exact_mse,exact_mse_se,beyond_rank_ceiling"
    )?;
    for &r in &ranks {
        info!("rank {r}");
        let p = family.projector(r)?;
        let opt_bound = family.optimal_bound(r).max(0.0).sqrt();
        let kl = if cfg.comparisons.kl {
            let pk = kl_projector(&mu, r)?;
            let b = sqrt_bound(&pk, &h, &mu)?;
            Some((pk, b))
        } else {
            None
        };
        let exact = if cfg.comparisons.exact_profile {
            exact_profile_error(&model, &mu, &p, &val, s.n_val)?
        } else {
            None
        };
        let beyond = family.warning(r).is_some();
        for &m in &s.m {
            let ridge = build_ridge(f, &mu, &p, &cond.substream(m as u64), m)?;
            let v = validate_error(&ridge, f, &mu, &val, s.n_val)?;
            let kl_v = match &kl {
                Some((pk, _)) => {
                    let ridge = build_ridge(f, &mu, pk, &cond.substream(m as u64), m)?;
                    Some(validate_error(&ridge, f, &mu, &val, s.n_val)?)
                }
                None => None,
            };
            writeln!(
                w,
                "{r},{m},{opt_bound},{},{},{},{},{},{},{},{beyond}",
                cell(kl.as_ref().map(|k| k.1)),
                v.mse,
                v.std_error,
                cell(kl_v.map(|v| v.mse)),
                cell(kl_v.map(|v| v.std_error)),
                cell(exact.map(|v| v.mse)),
                cell(exact.map(|v| v.std_error)),
            )?;
        }
        w.flush()?;
    }
    drop(w);
    Ok(writer.into_written())
}

/// Projector-quality audit: projectors from small-sample estimates `Ĥ_K`
/// scored against a reference `H_ref` and against `Ĥ_K` itself.
///
/// Replicate 0 draws its `Ĥ_K` samples from the reference stream, so at
/// `K = K_ref` both columns coincide.
pub fn run_projector_audit(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let Setup { model, mu, root } = setup(cfg)?;
    let f = model.as_dyn();
    let d = f.input_dim();
    let ranks = cfg.ranks(d)?;
    let s = &cfg.sampling;

    let reference = root.substream(REFERENCE_STREAM);
    info!("estimating reference H with K = {}", s.k_ref);
    let h_ref = estimate_h(f, &mu, &reference, s.k_ref)?;

    let mut writer = ArtifactWriter::new(out, cfg, "audit")?;
    let mut w = writer.create("projector_audit.csv")?;
    writeln!(
        w,
        "replicate,K,r,true_bound,approx_bound,rank_upper_bound,beyond_rank_ceiling"
    )?;
    for rep in 0..s.audit_replicates {
        let stream = if rep == 0 {
            reference
        } else {
            reference.substream(rep as u64)
        };
        for &k in &s.k_ladder {
            info!("replicate {rep}, K = {k}");
            let hk = estimate_h(f, &mu, &stream, k)?;
            let family = ProjectorFamily::new(&hk, &mu)?;
            for &r in &ranks {
                let p = family.projector(r)?;
                let true_bound = sqrt_bound(&p, &h_ref, &mu)?;
                let approx_bound = sqrt_bound(&p, &hk, &mu)?;
                let beyond = r > hk.rank_upper_bound;
                writeln!(
                    w,
                    "{rep},{k},{r},{true_bound},{approx_bound},{},{beyond}",
                    hk.rank_upper_bound
                )?;
            }
            w.flush()?;
        }
    }
    drop(w);
    Ok(writer.into_written())
}

/// Spectra of `(Ĥ, Σ⁻¹)` and Σ, the estimate itself, both bases, and for PDE
/// models the leading generalized and K-L modes as cell fields.
pub fn run_spectrum(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let Setup { model, mu, root } = setup(cfg)?;
    let f = model.as_dyn();
    let s = &cfg.sampling;

    let h = estimate_h(f, &mu, &root.substream(H_STREAM), s.k)?;
    let eigen = generalized_eig(&h.h, mu.cov())?;
    let report = SpectrumReport::from_parts(&eigen, &mu)?;
    let kl = mu.kl_eigen()?;

    let mut writer = ArtifactWriter::new(out, cfg, "spectrum")?;
    let mut w = writer.create("spectrum.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = writer.create("h_matrix.txt")?;
    write_matrix_text(&mut w, h.h.matrix())?;
    w.flush()?;
    let mut w = writer.create("generalized_basis.csv")?;
    write_basis_csv(&mut w, &eigen.vectors)?;
    w.flush()?;
    let mut w = writer.create("kl_basis.csv")?;
    write_basis_csv(&mut w, &kl.vectors)?;
    w.flush()?;

    if let BuiltModel::Pde(pde) = &model {
        let count = MODE_COUNT.min(f.input_dim());
        for i in 0..count {
            let mut w = writer.create(&format!("mode_generalized_{}.csv", i + 1))?;
            mode_field_export(pde.mesh(), eigen.vectors.column(i).as_slice(), &mut w)?;
            w.flush()?;
            let mut w = writer.create(&format!("mode_kl_{}.csv", i + 1))?;
            mode_field_export(pde.mesh(), kl.vectors.column(i).as_slice(), &mut w)?;
            w.flush()?;
        }
    }
    Ok(writer.into_written())
}

/// Sobol' estimates with DGSM bounds for the configured groups.
pub fn run_sobol(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let Setup { model, mu, root } = setup(cfg)?;
    let f = model.as_dyn();
    let groups = cfg.sobol_groups(f.input_dim())?;
    let s = &cfg.sampling;
    let settings = SobolSettings {
        outer: s.sobol_outer,
        inner: s.sobol_inner,
        dgsm_samples: s.k,
    };
    let report = match sensitivity_report(f, &mu, &groups, &root.substream(SOBOL_STREAM), settings) {
        Err(Error::NonDiagonalCovariance) => {
            return Err(CliError::Config(
                "Sobol' indices need independent inputs (diagonal covariance); \
                 use the `curve` subcommand for correlated measures"
                    .into(),
            ))
        }
        other => other?,
    };

    let mut writer = ArtifactWriter::new(out, cfg, "sobol")?;
    let mut w = writer.create("sobol.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    drop(w);
    let body = serde_json::to_value(&report).map_err(|e| CliError::Io(e.into()))?;
    writer.create_json("sobol.json", body)?;
    Ok(writer.into_written())
}

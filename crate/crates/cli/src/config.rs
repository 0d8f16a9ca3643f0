//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use ridgeapprox::model::{LinearModel, QuadraticFormModel, SumOfSinesModel};
use ridgeapprox::pde::{DiffusionModel, Scenario, DEFAULT_LENGTHSCALE};
use ridgeapprox::sensitivity::IndexGroup;
use ridgeapprox::{GaussianMeasure, SampleStream, SpdMatrix, VectorValuedModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default)]
    pub measure: MeasureSpec,
    #[serde(default)]
    pub sampling: Sampling,
    /// Ranks to report; all of `0..=d` when absent.
    #[serde(default)]
    pub ranks: Option<Vec<usize>>,
    #[serde(default)]
    pub comparisons: Comparisons,
    /// Index groups for the Sobol' report (0-based); singletons when absent.
    #[serde(default)]
    pub sobol_groups: Option<Vec<Vec<usize>>>,
    /// Not part of the config hash.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Linear {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        output_metric: Option<Vec<Vec<f64>>>,
    },
    /// `F` with i.i.d. standard normal entries drawn from `seed`.
    RandomLinear {
        outputs: usize,
        inputs: usize,
        seed: u64,
    },
    Quadratic {
        matrix: Vec<Vec<f64>>,
    },
    Sines {
        amplitudes: Vec<f64>,
        frequencies: Vec<f64>,
    },
    Pde {
        cells_per_side: usize,
        scenario: Scenario,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// `N(0, I)`
    #[default]
    Standard,
    Diagonal {
        mean: Vec<f64>,
        variances: Vec<f64>,
    },
    Explicit {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    /// Squared-exponential field over the PDE mesh cells.
    Field {
        #[serde(default = "default_lengthscale")]
        lengthscale: f64,
    },
    /// Random mean and SPD covariance drawn from `seed`.
    Random {
        seed: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    /// Samples for the H estimate.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Conditioning-sample counts for the ridge profile.
    #[serde(default = "default_m")]
    pub m: Vec<usize>,
    #[serde(default = "default_n_val")]
    pub n_val: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_k_ref")]
    pub k_ref: usize,
    #[serde(default = "default_k_ladder")]
    pub k_ladder: Vec<usize>,
    #[serde(default = "default_one")]
    pub audit_replicates: usize,
    #[serde(default = "default_sobol_outer")]
    pub sobol_outer: usize,
    #[serde(default = "default_sobol_inner")]
    pub sobol_inner: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparisons {
    /// Add K-L projector columns to the error curve.
    #[serde(default = "default_true")]
    pub kl: bool,
    /// Add the exact conditional-expectation error when the model has one.
    #[serde(default = "default_true")]
    pub exact_profile: bool,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_lengthscale() -> f64 {
    DEFAULT_LENGTHSCALE
}
fn default_k() -> usize {
    200
}
fn default_m() -> Vec<usize> {
    vec![1, 5, 20]
}
fn default_n_val() -> usize {
    300
}
fn default_k_ref() -> usize {
    4000
}
fn default_k_ladder() -> Vec<usize> {
    vec![10, 30, 100, 400]
}
fn default_one() -> usize {
    1
}
fn default_sobol_outer() -> usize {
    ridgeapprox::sensitivity::DEFAULT_OUTER_SAMPLES
}
fn default_sobol_inner() -> usize {
    ridgeapprox::sensitivity::DEFAULT_INNER_SAMPLES
}
fn default_true() -> bool {
    true
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            k: default_k(),
            m: default_m(),
            n_val: default_n_val(),
            seed: 0,
            k_ref: default_k_ref(),
            k_ladder: default_k_ladder(),
            audit_replicates: 1,
            sobol_outer: default_sobol_outer(),
            sobol_inner: default_sobol_inner(),
        }
    }
}

impl Default for Comparisons {
    fn default() -> Self {
        Self {
            kl: true,
            exact_profile: true,
        }
    }
}

/// A constructed model, kept concrete so closed-form oracles stay reachable.
pub enum BuiltModel {
    Linear(LinearModel),
    Quadratic(QuadraticFormModel),
    Sines(SumOfSinesModel),
    Pde(DiffusionModel),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> &dyn VectorValuedModel {
        match self {
            BuiltModel::Linear(m) => m,
            BuiltModel::Quadratic(m) => m,
            BuiltModel::Sines(m) => m,
            BuiltModel::Pde(m) => m,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn as_config_error(e: CliError) -> CliError {
    match e {
        CliError::Numerical(inner) => CliError::Config(inner.to_string()),
        other => other,
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(config_err(format!(
            "{what} must be a non-empty rectangular array of rows"
        )));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))?;
        cfg.validate_counts()?;
        Ok(cfg)
    }

    fn validate_counts(&self) -> Result<(), CliError> {
        let s = &self.sampling;
        let counts = [
            ("sampling.k", s.k),
            ("sampling.n_val", s.n_val),
            ("sampling.k_ref", s.k_ref),
            ("sampling.audit_replicates", s.audit_replicates),
            ("sampling.sobol_outer", s.sobol_outer),
            ("sampling.sobol_inner", s.sobol_inner),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(config_err(format!("{name} must be at least 1")));
            }
        }
        if s.n_val < 2 {
            return Err(config_err("sampling.n_val must be at least 2"));
        }
        if s.m.is_empty() || s.m.contains(&0) {
            return Err(config_err("sampling.m must be a non-empty list of counts >= 1"));
        }
        if s.k_ladder.contains(&0) {
            return Err(config_err("sampling.k_ladder entries must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (output directory excluded).
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.sampling.seed
    }

    /// Builds the model; invalid parameters are reported as configuration errors.
    pub fn build_model(&self) -> Result<BuiltModel, CliError> {
        self.build_model_raw().map_err(as_config_error)
    }

    fn build_model_raw(&self) -> Result<BuiltModel, CliError> {
        let built = match &self.model {
            ModelSpec::Linear { matrix, output_metric } => {
                let f = matrix_from_rows(matrix, "model.matrix")?;
                let rv = match output_metric {
                    Some(rows) => SpdMatrix::new(matrix_from_rows(rows, "model.output_metric")?)?,
                    None => SpdMatrix::identity(f.nrows()),
                };
                BuiltModel::Linear(LinearModel::new(f, rv)?)
            }
            ModelSpec::RandomLinear { outputs, inputs, seed } => {
                if *outputs == 0 || *inputs == 0 {
                    return Err(config_err("random_linear needs positive dimensions"));
                }
                let z = SampleStream::new(*seed, 0).standard_normal_vec(0, outputs * inputs);
                BuiltModel::Linear(LinearModel::euclidean(DMatrix::from_column_slice(
                    *outputs,
                    *inputs,
                    z.as_slice(),
                ))?)
            }
            ModelSpec::Quadratic { matrix } => {
                BuiltModel::Quadratic(QuadraticFormModel::new(matrix_from_rows(matrix, "model.matrix")?)?)
            }
            ModelSpec::Sines {
                amplitudes,
                frequencies,
            } => BuiltModel::Sines(SumOfSinesModel::new(
                DVector::from_column_slice(amplitudes),
                DVector::from_column_slice(frequencies),
            )?),
            ModelSpec::Pde {
                cells_per_side,
                scenario,
            } => BuiltModel::Pde(DiffusionModel::new(*cells_per_side, *scenario)?),
        };
        Ok(built)
    }

    pub fn build_measure(&self, model: &BuiltModel) -> Result<GaussianMeasure, CliError> {
        self.build_measure_raw(model).map_err(as_config_error)
    }

    fn build_measure_raw(&self, model: &BuiltModel) -> Result<GaussianMeasure, CliError> {
        let d = model.as_dyn().input_dim();
        let mu = match &self.measure {
            MeasureSpec::Standard => GaussianMeasure::standard(d),
            MeasureSpec::Diagonal { mean, variances } => {
                GaussianMeasure::new(DVector::from_column_slice(mean), SpdMatrix::from_diagonal(variances)?)?
            }
            MeasureSpec::Explicit { mean, covariance } => GaussianMeasure::new(
                DVector::from_column_slice(mean),
                SpdMatrix::new(matrix_from_rows(covariance, "measure.covariance")?)?,
            )?,
            MeasureSpec::Field { lengthscale } => match model {
                BuiltModel::Pde(pde) => pde.field_measure(*lengthscale)?,
                _ => return Err(config_err("measure kind \"field\" requires a pde model")),
            },
            MeasureSpec::Random { seed } => {
                let stream = SampleStream::new(*seed, 1);
                let a = DMatrix::from_column_slice(d, d, stream.standard_normal_vec(0, d * d).as_slice());
                let cov = SpdMatrix::new(&a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.1)?;
                GaussianMeasure::new(stream.standard_normal_vec(1, d), cov)?
            }
        };
        if mu.dim() != d {
            return Err(config_err(format!(
                "measure has dimension {} but the model has {d} inputs",
                mu.dim()
            )));
        }
        Ok(mu)
    }

    pub fn ranks(&self, d: usize) -> Result<Vec<usize>, CliError> {
        match &self.ranks {
            None => Ok((0..=d).collect()),
            Some(r) => {
                if let Some(bad) = r.iter().find(|&&r| r > d) {
                    return Err(config_err(format!("rank {bad} exceeds the input dimension {d}")));
                }
                Ok(r.clone())
            }
        }
    }

    pub fn sobol_groups(&self, d: usize) -> Result<Vec<IndexGroup>, CliError> {
        match &self.sobol_groups {
            None => Ok(IndexGroup::singletons(d)),
            Some(groups) => groups
                .iter()
                .map(|g| {
                    let group =
                        IndexGroup::new(g.clone()).map_err(|e| config_err(format!("sobol group {g:?}: {e}")))?;
                    group
                        .check(d)
                        .map_err(|e| config_err(format!("sobol group {g:?}: {e}")))?;
                    Ok(group)
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINES: &str = r#"{ "model": { "kind": "sines", "amplitudes": [1.0, 0.5], "frequencies": [1.0, 2.0] } }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_json(SINES).unwrap();
        assert_eq!(cfg.sampling.k, 200);
        assert_eq!(cfg.sampling.m, vec![1, 5, 20]);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert!(cfg.comparisons.kl && cfg.comparisons.exact_profile);
        assert_eq!(cfg.ranks(2).unwrap(), vec![0, 1, 2]);
        assert_eq!(cfg.sobol_groups(2).unwrap().len(), 2);
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::from_json(SINES).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.sampling.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            r#"{ "model": { "kind": "cubic" } }"#,
            r#"{ "model": { "kind": "sines", "amplitudes": [1.0], "frequencies": [1.0] }, "extra": 1 }"#,
            r#"{ "model": { "kind": "sines", "amplitudes": [1.0], "frequencies": [1.0] }, "sampling": { "k": 0 } }"#,
            r#"{ "model": { "kind": "sines", "amplitudes": [1.0], "frequencies": [1.0] }, "sampling": { "m": [] } }"#,
        ];
        for text in bad {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(CliError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn model_and_measure_mismatches_are_config_errors() {
        let cfg = ExperimentConfig::from_json(
            r#"{ "model": { "kind": "quadratic", "matrix": [[1.0, 0.0], [0.0, 2.0]] },
                 "measure": { "kind": "diagonal", "mean": [0.0, 0.0, 0.0], "variances": [1.0, 1.0, 1.0] } }"#,
        )
        .unwrap();
        let model = cfg.build_model().unwrap();
        assert!(matches!(cfg.build_measure(&model), Err(CliError::Config(_))));

        let cfg =
            ExperimentConfig::from_json(r#"{ "model": { "kind": "linear", "matrix": [[1.0, 2.0], [3.0]] } }"#).unwrap();
        assert!(matches!(cfg.build_model(), Err(CliError::Config(_))));

        let cfg =
            ExperimentConfig::from_json(&SINES.replace("} }", "}, \"measure\": { \"kind\": \"field\" } }")).unwrap();
        let model = cfg.build_model().unwrap();
        assert!(matches!(cfg.build_measure(&model), Err(CliError::Config(_))));
        assert!(cfg.ranks(1).is_ok());
        let cfg = ExperimentConfig::from_json(&SINES.replace("} }", "}, \"ranks\": [3] }")).unwrap();
        assert!(cfg.ranks(2).is_err());
    }

    #[test]
    fn random_linear_is_reproducible() {
        let text = r#"{ "model": { "kind": "random_linear", "outputs": 2, "inputs": 3, "seed": 5 } }"#;
        let a = ExperimentConfig::from_json(text).unwrap().build_model().unwrap();
        let b = ExperimentConfig::from_json(text).unwrap().build_model().unwrap();
        match (a, b) {
            (BuiltModel::Linear(a), BuiltModel::Linear(b)) => assert_eq!(a.matrix(), b.matrix()),
            _ => panic!("expected linear models"),
        }
    }
}

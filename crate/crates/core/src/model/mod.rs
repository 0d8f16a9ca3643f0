//! Vector-valued models `f: ℝᵈ → ℝⁿ` with Jacobians and an output metric.

mod analytic;

pub use analytic::{
    linear_cond_exp_error, quadratic_cond_exp_error, sines_bound, sines_cond_exp_error, LinearConditionalExpectation,
    LinearModel, QuadraticConditionalExpectation, QuadraticFormModel, SinesConditionalExpectation, SumOfSinesModel,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;

/// A differentiable map `f: ℝᵈ → ℝⁿ` whose output space carries the inner
/// product `(v, w)_V = vᵀ R_V w`.
///
/// Implementations must be pure: `eval` and `jacobian` may be called
/// concurrently from several threads.
pub trait VectorValuedModel: Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    /// `R_V`, an n×n SPD matrix.
    fn output_metric(&self) -> &SpdMatrix;

    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// The n×d Jacobian at `x`.
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Global Lipschitz constant w.r.t. `‖·‖_V` and the Euclidean input norm, when known.
    fn lipschitz_constant(&self) -> Option<f64> {
        None
    }

    /// `J(x)ᵀ R_V J(x)`, the per-sample contribution to `H`.
    fn weighted_gram(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let j = self.jacobian(x)?;
        Ok(j.tr_mul(&(self.output_metric().matrix() * &j)))
    }

    /// `‖v‖²_V = vᵀ R_V v`
    fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        v.dot(&(self.output_metric().matrix() * v))
    }
}

impl<M: VectorValuedModel + ?Sized> VectorValuedModel for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }
    fn output_dim(&self) -> usize {
        (**self).output_dim()
    }
    fn output_metric(&self) -> &SpdMatrix {
        (**self).output_metric()
    }
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        (**self).eval(x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).jacobian(x)
    }
    fn lipschitz_constant(&self) -> Option<f64> {
        (**self).lipschitz_constant()
    }
    fn weighted_gram(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        (**self).weighted_gram(x)
    }
    fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        (**self).norm_sq(v)
    }
}

/// Central-difference Jacobian, one column per input coordinate.
pub fn finite_diff_jacobian<M: VectorValuedModel + ?Sized>(
    model: &M,
    x: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let d = model.input_dim();
    if x.len() != d {
        return Err(Error::dims("finite_diff_jacobian", d, x.len()));
    }
    let mut jac = DMatrix::zeros(model.output_dim(), d);
    let mut xp = x.clone();
    for i in 0..d {
        xp[i] = x[i] + step;
        let fp = model.eval(&xp)?;
        xp[i] = x[i] - step;
        let fm = model.eval(&xp)?;
        xp[i] = x[i];
        jac.set_column(i, &((fp - fm) / (2.0 * step)));
    }
    Ok(jac)
}

/// The default finite-difference step `1e-5 · (1 + ‖x‖∞)`.
pub fn default_fd_step(x: &DVector<f64>) -> f64 {
    1e-5 * (1.0 + x.amax())
}

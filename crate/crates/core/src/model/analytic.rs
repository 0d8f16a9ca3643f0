//! Analytical models with closed-form conditional expectations.

use nalgebra::{DMatrix, DVector};

use super::VectorValuedModel;
use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::linalg::{sym_eig, SpdMatrix};
use crate::projector::RankRProjector;
use crate::ridge::Approximant;
use crate::sensitivity::IndexGroup;

/// `f(x) = F x`
#[derive(Debug, Clone)]
pub struct LinearModel {
    f: DMatrix<f64>,
    rv: SpdMatrix,
    lipschitz: f64,
}

impl LinearModel {
    pub fn new(f: DMatrix<f64>, rv: SpdMatrix) -> Result<Self> {
        if rv.dim() != f.nrows() {
            return Err(Error::dims("LinearModel output metric", f.nrows(), rv.dim()));
        }
        if f.ncols() == 0 {
            return Err(Error::InvalidArgument("linear model needs at least one input".into()));
        }
        // largest singular value of R_V^{1/2} F
        let gram = f.tr_mul(&(rv.matrix() * &f));
        let lipschitz = sym_eig(&gram)?.values[0].max(0.0).sqrt();
        Ok(Self { f, rv, lipschitz })
    }

    /// Linear model with the Euclidean output metric.
    pub fn euclidean(f: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        Self::new(f, SpdMatrix::identity(n))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    /// `H = Fᵀ R_V F`
    pub fn h_matrix(&self) -> SpdMatrix {
        SpdMatrix::new(self.f.tr_mul(&(self.rv.matrix() * &self.f))).expect("square by construction")
    }

    /// Exact `E_µ(f | σ(P))(x) = F P x + F (I − P) m` for Σ⁻¹-orthogonal `P`.
    pub fn conditional_expectation<'a>(
        &'a self,
        mu: &GaussianMeasure,
        p: &'a RankRProjector,
    ) -> Result<LinearConditionalExpectation<'a>> {
        if !p.is_sigma_orthogonal() {
            return Err(Error::NotSigmaOrthogonal);
        }
        let offset = &self.f * p.apply_complement(mu.mean());
        Ok(LinearConditionalExpectation {
            model: self,
            projector: p,
            offset,
        })
    }

    /// `‖f − F̂‖²_H` for the ridge `F̂(x) = (1/M) Σ f(P x + (I − P) Y_i)`, in closed form:
    /// `trace(R_V F Q Σ Qᵀ Fᵀ) + ‖F Q (m − Ȳ)‖²_V` with `Q = I − P`.
    pub fn ridge_error(&self, mu: &GaussianMeasure, p: &RankRProjector, cond_samples: &[DVector<f64>]) -> Result<f64> {
        let base = linear_cond_exp_error(self, mu, p)?;
        if cond_samples.is_empty() {
            return Err(Error::InvalidArgument("no conditioning samples".into()));
        }
        let d = self.input_dim();
        let ybar = cond_samples.iter().fold(DVector::zeros(d), |a, y| a + y) / cond_samples.len() as f64;
        let shift = &self.f * p.apply_complement(&(mu.mean() - ybar));
        Ok(base + self.norm_sq(&shift))
    }
}

impl VectorValuedModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.f.ncols()
    }
    fn output_dim(&self) -> usize {
        self.f.nrows()
    }
    fn output_metric(&self) -> &SpdMatrix {
        &self.rv
    }
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("LinearModel::eval", self.input_dim(), x.len()));
        }
        Ok(&self.f * x)
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("LinearModel::jacobian", self.input_dim(), x.len()));
        }
        Ok(self.f.clone())
    }
    fn lipschitz_constant(&self) -> Option<f64> {
        Some(self.lipschitz)
    }
}

pub struct LinearConditionalExpectation<'a> {
    model: &'a LinearModel,
    projector: &'a RankRProjector,
    offset: DVector<f64>,
}

impl Approximant for LinearConditionalExpectation<'_> {
    fn approximate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(&self.model.f * self.projector.apply(x) + &self.offset)
    }
}

/// Squared error `‖f − E_µ(f|σ(P))‖²_H` of a linear model, computed in output
/// space as `trace(R_V F Q Σ Qᵀ Fᵀ)` with `Q = I − P`.
pub fn linear_cond_exp_error(model: &LinearModel, mu: &GaussianMeasure, p: &RankRProjector) -> Result<f64> {
    let d = model.input_dim();
    if mu.dim() != d || p.dim() != d {
        return Err(Error::dims("linear_cond_exp_error", d, p.dim()));
    }
    if !p.is_sigma_orthogonal() {
        return Err(Error::NotSigmaOrthogonal);
    }
    let q = DMatrix::<f64>::identity(d, d) - p.matrix();
    let fq = &model.f * q;
    let cov_out = &fq * mu.cov().matrix() * fq.transpose();
    Ok((model.rv.matrix() * cov_out).trace().max(0.0))
}

/// `f(x) = ½ xᵀ A x`
#[derive(Debug, Clone)]
pub struct QuadraticFormModel {
    a: DMatrix<f64>,
    rv: SpdMatrix,
}

impl QuadraticFormModel {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::dims("QuadraticFormModel", a.nrows(), a.ncols()));
        }
        let a = (&a + a.transpose()) * 0.5;
        Ok(Self {
            a,
            rv: SpdMatrix::identity(1),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Exact `E(f|σ(P))(x) = f(P x) + ½ trace((I − P) A (I − P))` under `N(0, I)`.
    pub fn conditional_expectation<'a>(
        &'a self,
        mu: &GaussianMeasure,
        p: &'a RankRProjector,
    ) -> Result<QuadraticConditionalExpectation<'a>> {
        if !mu.is_standard() {
            return Err(Error::NonStandardMeasure);
        }
        if !p.is_euclidean() {
            return Err(Error::NotSigmaOrthogonal);
        }
        let d = self.a.nrows();
        let q = DMatrix::<f64>::identity(d, d) - p.matrix();
        let constant = 0.5 * (&q * &self.a * &q).trace();
        Ok(QuadraticConditionalExpectation {
            model: self,
            projector: p,
            constant,
        })
    }
}

impl VectorValuedModel for QuadraticFormModel {
    fn input_dim(&self) -> usize {
        self.a.nrows()
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn output_metric(&self) -> &SpdMatrix {
        &self.rv
    }
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("QuadraticFormModel::eval", self.input_dim(), x.len()));
        }
        Ok(DVector::from_element(1, 0.5 * x.dot(&(&self.a * x))))
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("QuadraticFormModel::jacobian", self.input_dim(), x.len()));
        }
        let g = &self.a * x;
        Ok(DMatrix::from_row_slice(1, g.len(), g.as_slice()))
    }
}

pub struct QuadraticConditionalExpectation<'a> {
    model: &'a QuadraticFormModel,
    projector: &'a RankRProjector,
    constant: f64,
}

impl Approximant for QuadraticConditionalExpectation<'_> {
    fn approximate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let px = self.projector.apply(x);
        Ok(DVector::from_element(
            1,
            0.5 * px.dot(&(&self.model.a * &px)) + self.constant,
        ))
    }
}

/// `½ ‖A − P A P‖²_F`, the squared conditional-expectation error of a quadratic
/// form under `N(0, I)` for an orthogonal projector `P`.
pub fn quadratic_cond_exp_error(model: &QuadraticFormModel, mu: &GaussianMeasure, p: &RankRProjector) -> Result<f64> {
    if !mu.is_standard() {
        return Err(Error::NonStandardMeasure);
    }
    let d = model.input_dim();
    if p.dim() != d || mu.dim() != d {
        return Err(Error::dims("quadratic_cond_exp_error", d, p.dim()));
    }
    if !p.is_euclidean() {
        return Err(Error::InvalidArgument(
            "quadratic closed form needs a symmetric projector".into(),
        ));
    }
    let pap = p.matrix() * &model.a * p.matrix();
    Ok(0.5 * (&model.a - pap).norm_squared())
}

/// `f(x) = Σ a_i sin(ω_i x_i)`
#[derive(Debug, Clone)]
pub struct SumOfSinesModel {
    amplitudes: DVector<f64>,
    frequencies: DVector<f64>,
    rv: SpdMatrix,
}

impl SumOfSinesModel {
    pub fn new(amplitudes: DVector<f64>, frequencies: DVector<f64>) -> Result<Self> {
        if amplitudes.len() != frequencies.len() {
            return Err(Error::dims("SumOfSinesModel", amplitudes.len(), frequencies.len()));
        }
        if amplitudes.is_empty() {
            return Err(Error::InvalidArgument("sum of sines needs at least one term".into()));
        }
        Ok(Self {
            amplitudes,
            frequencies,
            rv: SpdMatrix::identity(1),
        })
    }

    pub fn amplitudes(&self) -> &DVector<f64> {
        &self.amplitudes
    }

    pub fn frequencies(&self) -> &DVector<f64> {
        &self.frequencies
    }

    /// `E(f|σ(P_τ))(x) = Σ_{i∈τ} a_i sin(ω_i x_i)` under `N(0, I)`.
    pub fn conditional_expectation(&self, tau: &IndexGroup) -> Result<SinesConditionalExpectation<'_>> {
        tau.check(self.input_dim())?;
        Ok(SinesConditionalExpectation {
            model: self,
            tau: tau.indices().to_vec(),
        })
    }

    /// Per-coordinate squared error `½ a_i² (1 − e^{−2ω_i²})`.
    pub fn error_weights(&self) -> Vec<f64> {
        self.amplitudes
            .iter()
            .zip(self.frequencies.iter())
            .map(|(a, w)| 0.5 * a * a * (1.0 - (-2.0 * w * w).exp()))
            .collect()
    }

    /// Per-coordinate DGSM `H_ii = ½ a_i² ω_i² (1 + e^{−2ω_i²})`.
    pub fn bound_weights(&self) -> Vec<f64> {
        self.amplitudes
            .iter()
            .zip(self.frequencies.iter())
            .map(|(a, w)| 0.5 * a * a * w * w * (1.0 + (-2.0 * w * w).exp()))
            .collect()
    }
}

impl VectorValuedModel for SumOfSinesModel {
    fn input_dim(&self) -> usize {
        self.amplitudes.len()
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn output_metric(&self) -> &SpdMatrix {
        &self.rv
    }
    fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("SumOfSinesModel::eval", self.input_dim(), x.len()));
        }
        let v = (0..x.len())
            .map(|i| self.amplitudes[i] * (self.frequencies[i] * x[i]).sin())
            .sum();
        Ok(DVector::from_element(1, v))
    }
    fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("SumOfSinesModel::jacobian", self.input_dim(), x.len()));
        }
        Ok(DMatrix::from_fn(1, x.len(), |_, i| {
            self.amplitudes[i] * self.frequencies[i] * (self.frequencies[i] * x[i]).cos()
        }))
    }
    fn lipschitz_constant(&self) -> Option<f64> {
        Some(self.amplitudes.component_mul(&self.frequencies).norm())
    }
}

pub struct SinesConditionalExpectation<'a> {
    model: &'a SumOfSinesModel,
    tau: Vec<usize>,
}

impl Approximant for SinesConditionalExpectation<'_> {
    fn approximate(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.model;
        let v = self
            .tau
            .iter()
            .map(|&i| m.amplitudes[i] * (m.frequencies[i] * x[i]).sin())
            .sum();
        Ok(DVector::from_element(1, v))
    }
}

fn complement_sum(weights: &[f64], mu: &GaussianMeasure, tau: &IndexGroup) -> Result<f64> {
    if !mu.is_standard() {
        return Err(Error::NonStandardMeasure);
    }
    let d = weights.len();
    if mu.dim() != d {
        return Err(Error::dims("sum of sines measure", d, mu.dim()));
    }
    tau.check(d)?;
    Ok((0..d).filter(|i| !tau.contains(*i)).map(|i| weights[i]).sum())
}

/// `½ Σ_{i∉τ} a_i² (1 − e^{−2ω_i²})`
pub fn sines_cond_exp_error(model: &SumOfSinesModel, mu: &GaussianMeasure, tau: &IndexGroup) -> Result<f64> {
    complement_sum(&model.error_weights(), mu, tau)
}

/// `½ Σ_{i∉τ} a_i² ω_i² (1 + e^{−2ω_i²})`
pub fn sines_bound(model: &SumOfSinesModel, mu: &GaussianMeasure, tau: &IndexGroup) -> Result<f64> {
    complement_sum(&model.bound_weights(), mu, tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::finite_diff_jacobian;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    #[test]
    fn linear_error_limits() {
        let model = LinearModel::euclidean(DMatrix::identity(2, 2)).unwrap();
        let mu = GaussianMeasure::standard(2);
        let full = RankRProjector::identity(2);
        assert_eq!(linear_cond_exp_error(&model, &mu, &full).unwrap(), 0.0);
        let p = RankRProjector::euclidean_from_orthonormal(dmatrix![1.0; 0.0]).with_sigma_check(mu.cov());
        assert_abs_diff_eq!(linear_cond_exp_error(&model, &mu, &p).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_lipschitz_is_top_singular_value() {
        let model = LinearModel::new(
            dmatrix![3.0, 0.0; 0.0, 1.0],
            SpdMatrix::from_diagonal(&[4.0, 1.0]).unwrap(),
        )
        .unwrap();
        // R_V^{1/2} F = diag(6, 1)
        assert_abs_diff_eq!(model.lipschitz_constant().unwrap(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_error_hand_value() {
        let model = QuadraticFormModel::new(dmatrix![2.0, 0.0; 0.0, 1.0]).unwrap();
        let mu = GaussianMeasure::standard(2);
        let p = RankRProjector::euclidean_from_orthonormal(dmatrix![1.0; 0.0]);
        assert_abs_diff_eq!(quadratic_cond_exp_error(&model, &mu, &p).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(
            quadratic_cond_exp_error(&model, &mu, &RankRProjector::identity(2)).unwrap(),
            0.0
        );
    }

    #[test]
    fn quadratic_rejects_non_standard_measure() {
        let model = QuadraticFormModel::new(DMatrix::identity(2, 2)).unwrap();
        let mu = GaussianMeasure::new(DVector::from_vec(vec![1.0, 0.0]), SpdMatrix::identity(2)).unwrap();
        let err = quadratic_cond_exp_error(&model, &mu, &RankRProjector::identity(2)).unwrap_err();
        assert!(matches!(err, Error::NonStandardMeasure));
    }

    #[test]
    fn sines_closed_forms() {
        let mu = GaussianMeasure::standard(2);
        let model = SumOfSinesModel::new(DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let all = IndexGroup::new(vec![0, 1]).unwrap();
        assert_eq!(sines_cond_exp_error(&model, &mu, &all).unwrap(), 0.0);
        assert_eq!(sines_bound(&model, &mu, &all).unwrap(), 0.0);
        let tau = IndexGroup::new(vec![1]).unwrap();
        assert_abs_diff_eq!(
            sines_cond_exp_error(&model, &mu, &tau).unwrap(),
            0.432_332_358_4,
            epsilon = 1e-9
        );

        let mu1 = GaussianMeasure::standard(1);
        let one = SumOfSinesModel::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![1.0])).unwrap();
        assert_abs_diff_eq!(
            sines_bound(&one, &mu1, &IndexGroup::empty()).unwrap(),
            0.567_667_641_6,
            epsilon = 1e-9
        );

        let bad = IndexGroup::new(vec![5]).unwrap();
        assert!(matches!(
            sines_cond_exp_error(&model, &mu, &bad),
            Err(Error::IndexOutOfRange { index: 5, dim: 2 })
        ));
    }

    #[test]
    fn fd_jacobian_matches_models() {
        let f = dmatrix![1.0, -2.0, 0.5; 0.3, 0.0, 4.0];
        let lin = LinearModel::euclidean(f.clone()).unwrap();
        let x = DVector::from_vec(vec![0.2, -1.3, 0.7]);
        assert!((finite_diff_jacobian(&lin, &x, 1e-5).unwrap() - &f).abs().max() < 1e-9);

        let a = dmatrix![2.0, 0.5, 0.0; 0.5, -1.0, 0.3; 0.0, 0.3, 1.5];
        let quad = QuadraticFormModel::new(a.clone()).unwrap();
        let expected = (&a * &x).transpose();
        assert!((finite_diff_jacobian(&quad, &x, 1e-5).unwrap() - expected).abs().max() < 1e-6);

        let sines = SumOfSinesModel::new(
            DVector::from_vec(vec![1.0, 2.0, 0.5]),
            DVector::from_vec(vec![3.0, 1.0, 2.0]),
        )
        .unwrap();
        let jd = finite_diff_jacobian(&sines, &DVector::zeros(3), 1e-5).unwrap();
        assert!((jd - dmatrix![3.0, 2.0, 1.0]).abs().max() < 1e-8);
        assert!(finite_diff_jacobian(&sines, &DVector::zeros(3), 0.0).is_err());
    }
}

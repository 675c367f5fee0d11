//! Differential forms given by coefficient callables in Cartesian
//! coordinates: the interpolation targets.

use std::sync::Arc;

use crate::error::{FeecError, Result};

/// Coefficients of a k-form at a point, ordered by the increasing k-subsets
/// of the ambient axes.
pub type CoeffFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Partial derivatives of the coefficients: (point, multi-index β) ↦ ∂^β of
/// every component.
pub type DerivFn = Arc<dyn Fn(&[f64], &[u32]) -> Vec<f64> + Send + Sync>;

/// A differential k-form with sampled (callable) coefficients, optionally
/// carrying its exterior derivative and higher coefficient derivatives.
#[derive(Clone)]
pub struct SampledForm {
    pub ambient: usize,
    pub degree: usize,
    pub coeffs: CoeffFn,
    /// Coefficients of dω (a (k+1)-form), when available.
    pub d_coeffs: Option<CoeffFn>,
    /// Analytic coefficient derivatives, needed by the averaged Taylor
    /// smoother beyond order zero.
    pub derivs: Option<DerivFn>,
    /// Whether traces onto simplices are meaningful (continuous coefficients).
    pub has_trace: bool,
}

impl std::fmt::Debug for SampledForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampledForm")
            .field("ambient", &self.ambient)
            .field("degree", &self.degree)
            .field("has_d", &self.d_coeffs.is_some())
            .field("has_derivs", &self.derivs.is_some())
            .field("has_trace", &self.has_trace)
            .finish()
    }
}

impl SampledForm {
    pub fn new(ambient: usize, degree: usize, coeffs: CoeffFn) -> SampledForm {
        SampledForm {
            ambient,
            degree,
            coeffs,
            d_coeffs: None,
            derivs: None,
            has_trace: true,
        }
    }

    pub fn with_d(mut self, d_coeffs: CoeffFn) -> SampledForm {
        self.d_coeffs = Some(d_coeffs);
        self
    }

    pub fn with_derivs(mut self, derivs: DerivFn) -> SampledForm {
        self.derivs = Some(derivs);
        self
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.coeffs)(x)
    }

    pub fn eval_d(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.d_coeffs {
            Some(f) => Ok(f(x)),
            None => Err(FeecError::MissingExteriorDerivative),
        }
    }

    /// ∂^β of the coefficients; β = 0 falls back to plain evaluation.
    pub fn eval_deriv(&self, x: &[f64], beta: &[u32]) -> Result<Vec<f64>> {
        if beta.iter().all(|&b| b == 0) {
            return Ok(self.eval(x));
        }
        match &self.derivs {
            Some(f) => Ok(f(x, beta)),
            None => Err(FeecError::MissingExteriorDerivative),
        }
    }

    /// The zero k-form.
    pub fn zero(ambient: usize, degree: usize) -> SampledForm {
        let len = super::polyform::subsets_k(0, ambient as u8, degree).len();
        let z: CoeffFn = Arc::new(move |_: &[f64]| vec![0.0; len]);
        let dlen = super::polyform::subsets_k(0, ambient as u8, degree + 1).len();
        let dz: CoeffFn = Arc::new(move |_: &[f64]| vec![0.0; dlen]);
        let dvs: DerivFn = Arc::new(move |_: &[f64], _: &[u32]| vec![0.0; len]);
        SampledForm::new(ambient, degree, z)
            .with_d(dz)
            .with_derivs(dvs)
    }
}

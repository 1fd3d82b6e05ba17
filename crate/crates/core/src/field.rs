//! Evaluable functions `x -> y` over a continuous domain.
//!
//! Everything that is "a function" in this crate implements [`Field`]: the
//! analytic training targets, noise functions, generated samples and the
//! baselines used in reports. Metrics only ever see this trait.

use crate::domain::Points;
use crate::error::{Error, Result};

pub trait Field: Sync {
    fn dim_in(&self) -> usize;

    fn dim_out(&self) -> usize;

    /// Values for every point, row-major with `dim_out` entries per point.
    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>>;

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let pts = Points::new(x.len(), x.to_vec())?;
        self.eval_batch(&pts)
    }
}

/// Wraps a closure as a [`Field`].
pub struct FnField<F> {
    dim_in: usize,
    dim_out: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    pub fn new(dim_in: usize, dim_out: usize, f: F) -> Self {
        Self { dim_in, dim_out, f }
    }
}

impl<F> Field for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.dim_in, points)?;
        let mut out = vec![0.0; points.len() * self.dim_out];
        for (p, o) in points.iter().zip(out.chunks_exact_mut(self.dim_out)) {
            (self.f)(p, o);
        }
        Ok(out)
    }
}

/// A field that is the same constant vector everywhere.
#[derive(Clone, Debug)]
pub struct ConstantField {
    pub dim_in: usize,
    pub value: Vec<f64>,
}

impl Field for ConstantField {
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.value.len()
    }

    fn eval_batch(&self, points: &Points) -> Result<Vec<f64>> {
        check_dim(self.dim_in, points)?;
        Ok(self.value.repeat(points.len()))
    }
}

pub(crate) fn check_dim(dim_in: usize, points: &Points) -> Result<()> {
    if points.dim() != dim_in {
        return Err(Error::dim(format!(
            "field expects {dim_in}-d points, got {}-d",
            points.dim()
        )));
    }
    Ok(())
}
